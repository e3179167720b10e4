#ifndef KOOPSPEC_PIPELINE_HPP
#define KOOPSPEC_PIPELINE_HPP

#include <string>
#include <utility>
#include <vector>

#include "koopspec/galerkin.hpp"
#include "koopspec/io.hpp"

namespace koopspec {

enum class Analysis {
  Simulate,
  Assemble,
  Sigma1,
  Sigma2,
  Pseudospectrum,
  Edmd,
  Rage,
  WeakMixing,
  Demo,
  Ingest
};
const char* analysis_name(Analysis a);
Analysis parse_analysis(const std::string& name);

// Every key the pipeline reads; unknown keys are rejected so typos surface.
const std::vector<std::string>& known_config_keys();

struct RunConfig {
  KeyValues values;
  Analysis analysis = Analysis::Edmd;
  std::string output_dir = "out";
  std::string cache_dir;  // empty: output_dir/cache

  // Checks the analysis, unknown keys and referenced files.
  static RunConfig from(const KeyValues& kv);
  // The echo used for provenance and hashing; runtime knobs such as
  // `threads` are left out so outputs do not depend on them.
  KeyValues echo() const;
};

struct RunReport {
  KeyValues config;
  std::vector<std::pair<std::string, double>> stage_seconds;
  std::vector<std::string> manifest;  // paths relative to the output dir
  std::string mode;                   // result mode or analysis name
  std::string certificate;            // "error_bound=..." or "uncertified"
  std::vector<std::pair<std::string, std::string>> summary;

  // Timings are kept out of this text so reruns compare byte for byte.
  std::string to_text() const;
  std::string timings_text() const;
};

// Stages: system, simulate, assemble, analyze, write. A stage failure is
// rethrown with the stage name prefixed and the original error kind kept.
RunReport run(const RunConfig& config);

VectorXcd ingest_series(const std::string& path, bool mean_subtract);

}  // namespace koopspec

#endif  // KOOPSPEC_PIPELINE_HPP
