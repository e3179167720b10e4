// koopspec: batch front-end. Every subcommand accepts --config <file> and
// `--key value` (or `--key=value`) overrides for any config key.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "koopspec/pipeline.hpp"

namespace {

// Turns leftover `--key value` / `--key=value` tokens into config entries.
koopspec::KeyValues overrides(const std::vector<std::string>& rest) {
  koopspec::KeyValues kv;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const std::string& tok = rest[i];
    if (tok.rfind("--", 0) != 0) koopspec::config_error("unexpected argument '" + tok + "'");
    std::string key = tok.substr(2), value;
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= rest.size()) koopspec::config_error("option --" + key + " needs a value");
      value = rest[++i];
    }
    kv.set(key, value);
  }
  return kv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman spectra with residual control"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* analysis;
    const char* help;
  };
  const std::vector<Sub> subs = {
      {"simulate", "simulate", "sample snapshots and write snapshots.csv"},
      {"assemble", "assemble", "assemble and cache the Galerkin triple"},
      {"spectrum", "spectrum-sigma1", "certified spectrum (analysis=spectrum-sigma2 for the limit tower)"},
      {"pseudospectrum", "pseudospectrum", "grid pseudospectrum at level eps"},
      {"edmd", "edmd", "raw EDMD eigenvalues with residuals"},
      {"rage", "rage", "projected-norm RAGE table along exact orbits"},
      {"weakmix", "weak-mixing", "sector-restricted weak-mixing decision"},
      {"demo", "demo", "oracle demos: doubling, iem, skew, tower, shift"},
      {"ingest", "ingest", "RAGE and atoms for a time series"},
  };

  std::string config_path, output_dir, positional;
  unsigned threads = 0;
  std::vector<CLI::App*> apps;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "flat key = value config file");
    sub->add_option("--output-dir", output_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads (results do not depend on it)");
    if (std::string(s.name) == "demo") sub->add_option("name", positional, "demo name");
    if (std::string(s.name) == "ingest") sub->add_option("series", positional, "series CSV");
    sub->allow_extras();
    apps.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    std::size_t which = 0;
    while (!apps[which]->parsed()) ++which;
    koopspec::KeyValues kv;
    if (!config_path.empty()) kv = koopspec::KeyValues::load(config_path);
    kv.merge(overrides(apps[which]->remaining()));
    if (!kv.has("analysis") || std::string(subs[which].name) != "spectrum") kv.set("analysis", subs[which].analysis);
    if (!output_dir.empty()) kv.set("output_dir", output_dir);
    if (threads > 0) kv.set("threads", std::to_string(threads));
    if (!positional.empty()) kv.set(std::string(subs[which].name) == "demo" ? "demo" : "ingest.series", positional);

    const koopspec::RunReport rep = koopspec::run(koopspec::RunConfig::from(kv));
    std::cout << rep.to_text();
    return 0;
  } catch (const koopspec::Error& e) {
    std::cerr << "koopspec: " << e.what() << "\n";
    return e.kind() == koopspec::ErrorKind::Numerical ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "koopspec: " << e.what() << "\n";
    return 3;
  }
}
