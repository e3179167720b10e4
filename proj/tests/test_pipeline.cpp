#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "koopspec/io.hpp"
#include "koopspec/pipeline.hpp"

using namespace koopspec;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("koopspec_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig config(const std::string& text, const fs::path& out) {
  KeyValues kv = KeyValues::parse(text);
  kv.set("output_dir", out.string());
  return RunConfig::from(kv);
}

}  // namespace

TEST_CASE("key value parsing") {
  const KeyValues kv = KeyValues::parse("# comment\na = 1\n  b.c =  x y \n\nlist = 1, 2,3\nflag = true\n");
  CHECK(kv.get("a") == "1");
  CHECK(kv.get("b.c") == "x y");
  CHECK(kv.get_ints("list") == std::vector<int>{1, 2, 3});
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_double("missing", 2.5) == 2.5);
  CHECK_THROWS_AS(kv.get("missing"), Error);
  CHECK_THROWS_AS(kv.get_double("b.c"), Error);
  try {
    KeyValues::parse("a = 1\nnot a pair\n", "cfg");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("cfg:2") != std::string::npos);
  }
  KeyValues over;
  over.set("a", "7");
  KeyValues merged = kv;
  merged.merge(over);
  CHECK(merged.get_int("a") == 7);
}

TEST_CASE("number formatting round trips") {
  for (double v : {0.1, -1e-300, 1.0 / 3, 6.02214076e23}) CHECK(parse_double(format_double(v), "t") == v);
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(std::isnan(parse_double("nan", "t")));
  CHECK_THROWS_AS(parse_double("1.5x", "t"), Error);
}

TEST_CASE("snapshot and result files round trip") {
  const fs::path dir = scratch("files");
  const auto sys = make_system(Arnold{0.3, 0.5});
  const auto s = sample_snapshots(sys, Sampler::uniform(4), 50, 30);
  write_snapshots((dir / "s.csv").string(), s, 4);
  const SnapshotFile f = read_snapshots((dir / "s.csv").string());
  CHECK(f.X == s.X);
  CHECK(f.Y == s.Y);
  CHECK(f.seed == 4);
  CHECK(f.precision_exponent == 30);

  SpectralResult r;
  r.points = {{1, 0}, {0.5, -0.25}};
  r.residuals = {1e-17, 0.3};
  r.mode = ResultMode::Sigma2Limit;
  write_results((dir / "r.csv").string(), r);
  const SpectralResult back = read_results((dir / "r.csv").string());
  CHECK(back.points == r.points);
  CHECK(back.residuals == r.residuals);
  CHECK(back.mode == r.mode);
  fs::remove_all(dir);
}

TEST_CASE("series parsing") {
  const VectorXcd s = parse_series("dt_steps=1\n1.0\n2.0\n3.0\n");
  CHECK(s.size() == 3);
  CHECK(s[1] == Complex(2.0, 0.0));
  CHECK(parse_series("dt_steps=1\n1,2\n3,4\n")[1] == Complex(3.0, 4.0));
  try {
    parse_series("dt_steps=1\n1.0\nabc\n", "x.csv");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("x.csv:3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_series("1.0\n2.0\n"), Error);
  CHECK_THROWS_AS(parse_series("dt_steps=1\n1,2,3\n"), Error);
}

TEST_CASE("config validation") {
  const fs::path out = scratch("cfg");
  CHECK_THROWS_AS(config("analysis = edmd\nsystme = rotation\n", out), Error);
  CHECK_THROWS_AS(config("analysis = nonsense\n", out), Error);
  CHECK_THROWS_AS(config("analysis = ingest\ningest.series = /nonexistent/series.csv\n", out), Error);
  const RunConfig c = config("analysis = spectrum\nsystem = rotation\nthreads = 4\n", out);
  CHECK(c.analysis == Analysis::Sigma1);
  CHECK_FALSE(c.echo().has("threads"));
  CHECK_FALSE(c.echo().has("output_dir"));
}

TEST_CASE("edmd run writes results, report and manifest") {
  const fs::path out = scratch("edmd");
  const RunReport r = run(config(
      "analysis = edmd\nsystem = rotation\nsystem.gamma = 0.25\ndictionary = fourier\ndictionary.maxfreq = 3\n"
      "quadrature = trapezoid\nquadrature.M = 32\n",
      out));
  CHECK(r.mode == "edmd-raw");
  const SpectralResult res = read_results((out / "results.csv").string());
  CHECK(res.size() == 7);
  for (double h : res.residuals) CHECK(h <= 1e-12);
  CHECK(fs::exists(out / "report.txt"));
  CHECK(fs::exists(out / "timings.txt"));
  const std::string report = read_file((out / "report.txt").string());
  CHECK(report.find("[manifest]\nresults.csv\nreport.txt") != std::string::npos);
  CHECK(report.find("system.gamma = 0.25") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("sigma1 run certifies the rotation spectrum") {
  const fs::path out = scratch("sigma1");
  const RunReport r = run(config(
      "analysis = spectrum-sigma1\nsystem = rotation\nsystem.gamma = 0.25\ndictionary = fourier\n"
      "dictionary.maxfreq = 4\nquadrature.M = 32\ngrid.spacing = 0.05\ngrid.radius = 1.2\n",
      out));
  CHECK(r.mode == "sigma1-certified");
  CHECK(r.certificate.rfind("error_bound=", 0) == 0);
  const SpectralResult res = read_results((out / "results.csv").string());
  CHECK(hausdorff_distance(res.points, {{1, 0}, {0, 1}, {-1, 0}, {0, -1}}) <= 1e-12);
  CHECK(fs::exists(out / "residual.svg"));
  CHECK(read_file((out / "residual.svg").string()).find("<svg") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("sigma1 is refused for a dissipative system") {
  const fs::path out = scratch("dissipative");
  try {
    run(config("analysis = spectrum-sigma1\nsystem = duffing\nsystem.alpha = 0.3\ndictionary = rbf\n"
               "dictionary.size = 10\nquadrature = montecarlo\nquadrature.M = 200\nquadrature.seed = 1\n"
               "dictionary.kmeans_starts = 50\nquadrature.region = -2,2,-2,2\ngrid.spacing = 0.5\n",
               out));
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("stage analyze") != std::string::npos);
  }
  fs::remove_all(out);
}

TEST_CASE("cached triples are reused") {
  const fs::path out = scratch("cache");
  const std::string text =
      "analysis = assemble\nsystem = arnold\nsystem.gamma = 0.2\nsystem.epsilon = 0.4\ndictionary = fourier\n"
      "dictionary.maxfreq = 3\nquadrature = montecarlo\nquadrature.M = 300\nquadrature.seed = 3\n";
  run(config(text, out));
  std::vector<fs::path> cached;
  for (const auto& e : fs::directory_iterator(out / "cache"))
    if (e.path().extension() == ".bin") cached.push_back(e.path());
  REQUIRE(cached.size() == 1);
  const Triple a = read_triple((out / "triple.bin").string());
  const Triple b = read_triple(cached[0].string());
  CHECK(a.A == b.A);
  fs::remove_all(out);
}

TEST_CASE("outputs do not depend on the thread count") {
  std::vector<std::string> reports, results;
  for (int n : {1, 2, 8}) {
    const fs::path out = scratch("threads" + std::to_string(n));
    run(config("analysis = pseudospectrum\nsystem = arnold\nsystem.gamma = 0.3\nsystem.epsilon = 0.8\n"
               "dictionary = fourier\ndictionary.maxfreq = 6\nquadrature = montecarlo\nquadrature.M = 2000\n"
               "quadrature.seed = 9\ngrid.spacing = 0.1\ngrid.radius = 1.5\neps = 0.3\nthreads = " +
                   std::to_string(n) + "\n",
               out));
    reports.push_back(read_file((out / "report.txt").string()));
    results.push_back(read_file((out / "results.csv").string()) + read_file((out / "residual_field.csv").string()));
    fs::remove_all(out);
  }
  set_threads(1);
  CHECK(reports[1] == reports[0]);
  CHECK(reports[2] == reports[0]);
  CHECK(results[1] == results[0]);
  CHECK(results[2] == results[0]);
}

TEST_CASE("demo and ingest runs") {
  const fs::path out = scratch("demo");
  run(config("analysis = demo\ndemo = tower\nsystem.gamma = 0.3333333333333333\ndemo.n1 = 100\ndemo.n2 = 4\n", out));
  CHECK(read_file((out / "demo.txt").string()).find("decision = 0") != std::string::npos);

  VectorXcd s(3000);
  for (Eigen::Index t = 0; t < 3000; ++t) s[t] = std::polar(1.0, 0.5 * static_cast<double>(t));
  write_file_atomic((out / "series.csv").string(), series_to_csv(s));
  run(config("analysis = ingest\ningest.series = " + (out / "series.csv").string() +
                 "\ningest.depths = 1,2\ningest.horizons = 100,200\ningest.mean_subtract = false\n",
             out));
  const auto rows = read_rage((out / "rage.csv").string());
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) CHECK(std::abs(row.pp_mass - 1.0) <= 1e-9);
  CHECK(read_file((out / "atoms.csv").string()).find("theta,mass") == 0);
  fs::remove_all(out);
}
