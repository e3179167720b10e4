#include "koopspec/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include "koopspec/dictionary.hpp"
#include "koopspec/dynamics.hpp"
#include "koopspec/rage.hpp"
#include "koopspec/scidemo.hpp"
#include "koopspec/spectral.hpp"

namespace koopspec {

namespace fs = std::filesystem;

const char* analysis_name(Analysis a) {
  switch (a) {
    case Analysis::Simulate: return "simulate";
    case Analysis::Assemble: return "assemble";
    case Analysis::Sigma1: return "spectrum-sigma1";
    case Analysis::Sigma2: return "spectrum-sigma2";
    case Analysis::Pseudospectrum: return "pseudospectrum";
    case Analysis::Edmd: return "edmd";
    case Analysis::Rage: return "rage";
    case Analysis::WeakMixing: return "weak-mixing";
    case Analysis::Demo: return "demo";
    case Analysis::Ingest: return "ingest";
  }
  return "?";
}

Analysis parse_analysis(const std::string& name) {
  for (Analysis a : {Analysis::Simulate, Analysis::Assemble, Analysis::Sigma1, Analysis::Sigma2,
                     Analysis::Pseudospectrum, Analysis::Edmd, Analysis::Rage, Analysis::WeakMixing, Analysis::Demo,
                     Analysis::Ingest})
    if (name == analysis_name(a)) return a;
  if (name == "spectrum") return Analysis::Sigma1;
  if (name == "weakmix") return Analysis::WeakMixing;
  config_error("unknown analysis '" + name + "'");
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "analysis", "output_dir", "cache_dir", "threads", "plot",
      "system", "system.gamma", "system.epsilon", "system.alpha", "system.dt", "system.ratio", "system.depth",
      "system.f", "system.plateau", "system.join_width",
      "dictionary", "dictionary.maxfreq", "dictionary.rings", "dictionary.size", "dictionary.shape",
      "dictionary.seed", "dictionary.kmeans_iters", "dictionary.kmeans_starts", "dictionary.kmeans_length",
      "dictionary.centers", "dictionary.sector", "dictionary.cells",
      "quadrature", "quadrature.M", "quadrature.seed", "quadrature.precision", "quadrature.region",
      "grid.spacing", "grid.radius", "grid.region",
      "eps", "sigma1.multiplier", "sigma1.cap", "sigma2.M_schedule", "sigma2.slack",
      "rage.ranks", "rage.horizons", "rage.observable", "rage.nodes", "rage.atoms_threshold",
      "weakmix.ranks", "weakmix.horizons", "weakmix.observables", "weakmix.nodes",
      "demo", "demo.maxfreq", "demo.z", "demo.n1", "demo.n2", "demo.sizes",
      "ingest.series", "ingest.mean_subtract", "ingest.depths", "ingest.horizons", "ingest.threshold"};
  return keys;
}

RunConfig RunConfig::from(const KeyValues& kv) {
  const auto& known = known_config_keys();
  for (const auto& [k, v] : kv.values())
    if (std::find(known.begin(), known.end(), k) == known.end()) config_error("unknown config key '" + k + "'");
  RunConfig c;
  c.values = kv;
  c.analysis = parse_analysis(kv.get("analysis"));
  c.output_dir = kv.get("output_dir", "out");
  c.cache_dir = kv.get("cache_dir", "");
  for (const char* key : {"dictionary.centers", "ingest.series"})
    if (kv.has(key) && !fs::exists(kv.get(key))) config_error(std::string(key) + ": no such file " + kv.get(key));
  if (c.analysis == Analysis::Ingest && !kv.has("ingest.series")) config_error("ingest needs ingest.series");
  if (c.analysis == Analysis::Demo && !kv.has("demo")) config_error("demo needs a demo name");
  return c;
}

KeyValues RunConfig::echo() const {
  KeyValues e;
  for (const auto& [k, v] : values.values())
    if (k != "threads" && k != "output_dir" && k != "cache_dir") e.set(k, v);
  return e;
}

std::string RunReport::to_text() const {
  std::string out = "mode = " + mode + "\ncertificate = " + certificate + "\n\n[config]\n" + config.to_text();
  out += "\n[summary]\n";
  for (const auto& [k, v] : summary) out += k + " = " + v + "\n";
  out += "\n[manifest]\n";
  for (const auto& f : manifest) out += f + "\n";
  return out;
}

std::string RunReport::timings_text() const {
  std::string out;
  for (const auto& [stage, s] : stage_seconds) out += stage + " = " + format_double(s) + "\n";
  return out;
}

VectorXcd ingest_series(const std::string& path, bool mean_subtract) { return read_series(path, mean_subtract); }

namespace {

std::optional<std::array<double, 4>> region4(const KeyValues& kv, const std::string& key) {
  if (!kv.has(key)) return std::nullopt;
  const auto v = kv.get_doubles(key);
  if (v.size() != 4) config_error(key + ": expected lo,hi,lo,hi");
  return std::array<double, 4>{v[0], v[1], v[2], v[3]};
}

// ---------------------------------------------------------------------------
// system and dictionary from config
// ---------------------------------------------------------------------------

struct SystemBundle {
  DynamicalSystem system;
  std::optional<IemOracle> iem;
  std::optional<SkewOracle> skew;
};

SystemBundle build_system(const KeyValues& kv) {
  const std::string name = kv.get("system");
  SystemBundle b;
  if (name == "rotation") {
    b.system = make_system(Rotation{kv.get_double("system.gamma")});
  } else if (name == "arnold") {
    b.system = make_system(Arnold{kv.get_double("system.gamma"), kv.get_double("system.epsilon", 0.0)});
  } else if (name == "doubling") {
    b.system = make_system(Doubling{});
  } else if (name == "duffing") {
    b.system = make_system(Duffing{kv.get_double("system.alpha", 0.0), kv.get_double("system.dt", 0.3)});
  } else if (name == "disk-rotation") {
    b.system = make_system(DiskRotation{});
  } else if (name == "iem") {
    IemSpec s;
    s.ratio_schedule = {{kv.get_double("system.ratio", 0.5), 0}};
    s.truncation_depth = static_cast<int>(kv.get_int("system.depth", 20));
    b.iem = build_iem(s);
    b.system = b.iem->system;
  } else if (name == "skew") {
    SkewSpec s;
    const std::string f = kv.get("system.f", "plateau");
    if (f == "plateau") {
      Plateau p;
      if (kv.has("system.plateau")) {
        const auto v = kv.get_doubles("system.plateau");
        if (v.size() != 3) config_error("system.plateau: expected a,b,value");
        p = {v[0], v[1], v[2]};
      }
      s.plateau = p;
    } else if (f == "linear") {
      s.kind = SkewSpec::Kind::Linear;
    } else if (f != "smooth") {
      config_error("system.f: expected plateau, linear or smooth");
    }
    s.join_width = kv.get_double("system.join_width", 0.1);
    b.skew = build_skew(s);
    b.system = b.skew->system;
  } else if (name == "anzai") {
    // (x, y) -> (x, y + x); Jacobian [[1,0],[1,1]] has norm (1 + sqrt 5)/2.
    b.system = make_system(Skew{[](double x) { return x; }, "anzai", (1.0 + std::sqrt(5.0)) / 2.0});
  } else {
    config_error("unknown system '" + name + "'");
  }
  return b;
}

MatrixXd read_centers(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> r;
    std::istringstream cells(line);
    std::string c;
    while (std::getline(cells, c, ',')) r.push_back(parse_double(c, path + ":" + std::to_string(lineno)));
    if (!rows.empty() && r.size() != rows[0].size()) config_error(path + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) config_error(path + ": no centers");
  MatrixXd C(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return C;
}

std::optional<std::pair<VectorXd, VectorXd>> box_region(const KeyValues& kv, const StateSpace& space) {
  if (!kv.has("quadrature.region")) return std::nullopt;
  const auto v = kv.get_doubles("quadrature.region");
  const int d = space.dim();
  if (static_cast<int>(v.size()) != 2 * d) config_error("quadrature.region: expected lo,hi per coordinate");
  VectorXd lo(d), hi(d);
  for (int k = 0; k < d; ++k) {
    lo[k] = v[static_cast<std::size_t>(2 * k)];
    hi[k] = v[static_cast<std::size_t>(2 * k + 1)];
  }
  return std::make_pair(lo, hi);
}

// k-means data: short trajectories from uniform starts in the sampling region.
MatrixXd kmeans_data(const DynamicalSystem& sys, const KeyValues& kv, int precision) {
  const auto starts = kv.get_int("dictionary.kmeans_starts", 2000);
  const auto length = kv.get_int("dictionary.kmeans_length", 5);
  if (starts < 1 || length < 1) config_error("dictionary.kmeans_starts and kmeans_length must be >= 1");
  Sampler s = Sampler::uniform(static_cast<std::uint64_t>(kv.get_int("dictionary.seed", 1)));
  s.region = box_region(kv, sys.space());
  const SnapshotSet st = sample_snapshots(sys, s, starts, precision);
  MatrixXd data(starts * length, st.dim());
  parallel_for(static_cast<std::size_t>(starts), [&](std::size_t k) {
    const auto m = static_cast<Eigen::Index>(k);
    State x = st.X.row(m).transpose();
    for (Eigen::Index t = 0; t < length; ++t) {
      data.row(m * length + t) = x.transpose();
      if (t + 1 < length) x = sys.evaluate(x, precision);
    }
  });
  return data;
}

Dictionary build_dictionary(const KeyValues& kv, const SystemBundle& b, int precision) {
  if (b.iem) return b.iem->dictionary;
  const StateSpace& space = b.system.space();
  const std::string kind = kv.get("dictionary");
  if (kind == "fourier") return fourier_dictionary(space, static_cast<int>(kv.get_int("dictionary.maxfreq")));
  if (kind == "disk-fourier")
    return disk_fourier_dictionary(static_cast<int>(kv.get_int("dictionary.maxfreq")),
                                   static_cast<int>(kv.get_int("dictionary.rings")));
  if (kind == "sector") {
    const int maxfreq = static_cast<int>(kv.get_int("dictionary.maxfreq"));
    const int j = static_cast<int>(kv.get_int("dictionary.sector", 1));
    if (b.skew) return b.skew->sector_dictionary(maxfreq, j);
    return sector_dictionary(fourier_dictionary(StateSpace::circle(), maxfreq), j);
  }
  if (kind == "indicator") {
    const auto cuts = kv.get_doubles("dictionary.cells");
    std::vector<Interval> cells;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) cells.push_back({cuts[k], cuts[k + 1]});
    return indicator_dictionary(cells);
  }
  if (kind == "rbf") {
    const double shape = kv.get_double("dictionary.shape", 1.0);
    MatrixXd centers;
    if (kv.has("dictionary.centers")) {
      centers = read_centers(kv.get("dictionary.centers"));
    } else {
      centers = kmeans_centers(kmeans_data(b.system, kv, precision), static_cast<int>(kv.get_int("dictionary.size")),
                               static_cast<std::uint64_t>(kv.get_int("dictionary.seed", 1)),
                               static_cast<int>(kv.get_int("dictionary.kmeans_iters", 100)));
    }
    return rbf_dictionary(centers, shape, space);
  }
  config_error("unknown dictionary '" + kind + "'");
}

// ---------------------------------------------------------------------------
// snapshots and triples
// ---------------------------------------------------------------------------

struct Assembled {
  SnapshotSet snaps;
  Triple raw;
  std::uint64_t seed = 0;
};

SnapshotSet simulate(const KeyValues& kv, const SystemBundle& b, Eigen::Index M, std::uint64_t seed, int precision) {
  if (b.iem) {
    SnapshotSet s;
    s.precision_exponent = precision;
    s.X = b.iem->nodes;
    s.Y.resize(s.X.rows(), 1);
    for (Eigen::Index m = 0; m < s.X.rows(); ++m) s.Y(m, 0) = b.system.evaluate(s.X.row(m).transpose(), precision)[0];
    s.region_measure = 1.0;
    return s;
  }
  const QuadratureRule rule = parse_rule(kv.get("quadrature", "trapezoid"));
  Sampler sampler = rule == QuadratureRule::MonteCarlo ? Sampler::uniform(seed) : Sampler::grid();
  if (rule == QuadratureRule::MonteCarlo) sampler.region = box_region(kv, b.system.space());
  if (rule == QuadratureRule::ExactPartition)
    config_error("quadrature: exact-partition is only available for the interval exchange");
  return sample_snapshots(b.system, sampler, M, precision);
}

Assembled assemble_stage(const KeyValues& kv, const SystemBundle& b, const Dictionary& dict, Eigen::Index M) {
  Assembled a;
  const int precision = static_cast<int>(kv.get_int("quadrature.precision", 30));
  a.seed = static_cast<std::uint64_t>(kv.get_int("quadrature.seed", 0));
  a.snaps = simulate(kv, b, M, a.seed, precision);
  if (b.iem) {
    a.raw = b.iem->assembled();
    return a;
  }
  const QuadratureRule rule = parse_rule(kv.get("quadrature", "trapezoid"));
  const QuadratureWeights w = quadrature_weights(b.system.space(), a.snaps.X, rule, a.snaps.region_measure);
  a.raw = assemble(evaluate_dictionary(dict, a.snaps.X), evaluate_dictionary(dict, a.snaps.Y, EvaluationMatrix::Side::Y), w);
  a.raw.measure_preserving = b.system.measure_preserving();
  a.raw.provenance = "system=" + b.system.describe() + "\ndictionary=" + dict.describe() + "\nquadrature=" +
                     rule_name(rule) + "(" + std::to_string(M) + ")\nseed=" + std::to_string(a.seed) + "\n";
  return a;
}

std::string triple_key(const KeyValues& echo, Eigen::Index M) {
  std::string text;
  for (const auto& [k, v] : echo.values())
    if (k == "system" || k == "dictionary" || k == "quadrature" || k.rfind("system.", 0) == 0 ||
        k.rfind("dictionary.", 0) == 0 || k.rfind("quadrature.", 0) == 0)
      text += k + "=" + v + "\n";
  text += "M=" + std::to_string(M) + "\n";
  return hex64(fnv1a(text));
}

// Loads the triple for this config and M from the cache, or assembles it
// and stores it.
Triple cached_triple(const KeyValues& echo, const std::string& cache_dir, const SystemBundle& b, const Dictionary& dict,
                     Eigen::Index M, SnapshotSet* snaps) {
  const std::string path = (fs::path(cache_dir) / ("triple-" + triple_key(echo, M) + ".bin")).string();
  if (fs::exists(path) && !snaps) return read_triple(path);
  Assembled a = assemble_stage(echo, b, dict, M);
  if (snaps) *snaps = a.snaps;
  if (fs::exists(path)) return read_triple(path);
  write_triple(path, a.raw);
  return a.raw;
}

GridSpec grid_from(const KeyValues& kv) {
  GridSpec g;
  g.spacing = kv.get_double("grid.spacing", 0.05);
  g.radius = kv.get_double("grid.radius", 2.0);
  g.region = region4(kv, "grid.region");
  g.validate();
  return g;
}

// Torus product grid Qx x Qy with equal weights.
std::pair<MatrixXd, QuadratureWeights> torus_nodes(int qx, int qy) {
  if (qx < 2 || qy < 2) config_error("torus nodes: need at least 2 per axis");
  MatrixXd P(static_cast<Eigen::Index>(qx) * qy, 2);
  for (int a = 0; a < qx; ++a)
    for (int c = 0; c < qy; ++c) {
      const Eigen::Index m = static_cast<Eigen::Index>(a) * qy + c;
      P(m, 0) = -kPi + kTwoPi * a / qx;
      P(m, 1) = -kPi + kTwoPi * c / qy;
    }
  QuadratureWeights w;
  w.rule = QuadratureRule::Trapezoid;
  w.w = VectorXd::Constant(P.rows(), kTwoPi * kTwoPi / (static_cast<double>(qx) * qy));
  return {P, w};
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
  return s;
}

// Sector observables and their projected norms along exact orbits.
std::vector<ProjectedNorms> orbit_norms(const KeyValues& kv, const SystemBundle& b, const Dictionary& dict,
                                        const std::vector<Eigen::Index>& which, int horizon, const std::string& nodes_key) {
  const auto q = kv.has(nodes_key) ? kv.get_ints(nodes_key) : std::vector<int>{4 * horizon + 64, 4};
  if (q.size() != 2) config_error(nodes_key + ": expected Qx,Qy");
  const auto [P, w] = torus_nodes(q[0], q[1]);
  std::vector<ProjectedNorms> out;
  for (Eigen::Index k : which) {
    if (k < 0 || k >= dict.size()) config_error("observable index out of range");
    out.push_back(projected_norms_orbit(b.system, dict, P, w, dict[k], horizon,
                                        static_cast<int>(kv.get_int("quadrature.precision", 30))));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

RunReport run(const RunConfig& config) {
  using clock = std::chrono::steady_clock;
  const KeyValues kv = config.echo();
  if (config.values.has("threads")) set_threads(static_cast<unsigned>(config.values.get_int("threads")));
  RunReport rep;
  rep.config = kv;
  rep.mode = analysis_name(config.analysis);
  rep.certificate = "uncertified";
  const fs::path out = config.output_dir;
  const std::string cache = config.cache_dir.empty() ? (out / "cache").string() : config.cache_dir;

  auto stage = [&](const std::string& name, const std::function<void()>& body) {
    const auto t0 = clock::now();
    try {
      body();
    } catch (const Error& e) {
      throw Error(e.kind(), "stage " + name + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::Numerical, "stage " + name + ": " + e.what());
    }
    rep.stage_seconds.emplace_back(name, std::chrono::duration<double>(clock::now() - t0).count());
  };
  auto emit = [&](const std::string& file, const std::string& content) {
    write_file_atomic((out / file).string(), content);
    rep.manifest.push_back(file);
  };
  auto put = [&](const std::string& k, const std::string& v) { rep.summary.emplace_back(k, v); };
  const bool plot = kv.get_bool("plot", true);

  auto plot_field = [&](const ResidualField& field, const SpectralResult& r, std::vector<double> levels,
                        const std::string& title) {
    if (!plot) return;
    SvgPlot p;
    p.levels = std::move(levels);
    p.marks = r.points;
    p.title = title;
    for (const auto& [k, v] : kv.values()) p.provenance.emplace_back(k, v);
    emit("residual.svg", residual_svg(field, p));
  };
  auto certify = [&](const SpectralResult& r) {
    rep.mode = mode_name(r.mode);
    if (r.error_bound && std::isfinite(*r.error_bound)) rep.certificate = "error_bound=" + format_double(*r.error_bound);
    if (!r.flag.empty()) put("flag", r.flag);
    put("points", std::to_string(r.size()));
  };

  switch (config.analysis) {
    case Analysis::Demo: {
      const std::string name = kv.get("demo");
      std::string text;
      stage("analyze", [&] {
        if (name == "doubling") {
          text = doubling_edmd_report(static_cast<int>(kv.get_int("demo.maxfreq", 16))).to_text();
        } else if (name == "iem") {
          IemSpec s;
          s.ratio_schedule = {{kv.get_double("system.ratio", 0.5), 0}};
          s.truncation_depth = static_cast<int>(kv.get_int("system.depth", 40));
          const IemOracle o = build_iem(s);
          const Triple t = orthonormalize(o.assembled());
          std::ostringstream os;
          os << "demo = iem\ndepth = " << o.depth << "\ninner_radius = " << format_double(o.inner_radius)
             << "\nouter_radius = " << format_double(o.outer_radius) << "\ndelta = " << format_double(o.delta) << "\n";
          const auto zs = kv.has("demo.z") ? kv.get_doubles("demo.z") : std::vector<double>{0.3, 0.9, 1.3};
          for (double z : zs) os << "residual(" << z << ") = " << format_double(residual(Complex(z, 0), t)) << "\n";
          text = os.str();
        } else if (name == "skew") {
          const SystemBundle b = build_system(kv);
          if (!b.skew) config_error("demo skew needs system = skew");
          std::ostringstream os;
          os << "demo = skew\nmax_slope = " << format_double(b.skew->max_slope)
             << "\nlipschitz = " << format_double(b.skew->lipschitz_forward)
             << "\nin_omega_p = " << (b.skew->in_omega_p ? "true" : "false") << "\n";
          for (const Complex& z : b.skew->predicted_atoms(1))
            os << "predicted_atom = " << format_double(z.real()) << "," << format_double(z.imag()) << "\n";
          text = os.str();
        } else if (name == "tower") {
          const auto sys = make_system(Rotation{kv.get_double("system.gamma")});
          const TowerResult r = ergodicity_tower(sys, kv.get_int("demo.n1", 1000000),
                                                 static_cast<std::size_t>(kv.get_int("demo.n2", 1000)));
          text = "demo = tower\ndecision = " + std::to_string(r.decision) + "\ngamma_hat = " + format_double(r.gamma_hat) +
                 "\nmin_distance = " + format_double(r.min_distance) + "\nnearest = " +
                 std::to_string(r.nearest.first) + "/" + std::to_string(r.nearest.second) + "\n";
        } else if (name == "shift") {
          ZeroOnePattern p;
          p.generator = [](std::int64_t, std::int64_t) { return 1; };
          text = "demo = shift\nq = " + std::to_string(q_oracle(p)) + "\n";
          const auto sizes = kv.has("demo.sizes") ? kv.get_ints("demo.sizes") : std::vector<int>{50, 100, 200};
          for (int T : sizes) {
            Eigen::JacobiSVD<MatrixXd> svd(shift_section(p, 1, T, T, 0.5));
            text += "sigma_inf(T=" + std::to_string(T) + ") = " +
                    format_double(svd.singularValues()[svd.singularValues().size() - 1]) + "\n";
          }
        } else {
          config_error("unknown demo '" + name + "'");
        }
      });
      stage("write", [&] { emit("demo.txt", text); });
      rep.mode = "demo-" + name;
      break;
    }

    case Analysis::Ingest: {
      VectorXcd series;
      std::vector<RageEstimate> rows;
      std::vector<Atom> atoms;
      stage("ingest", [&] { series = ingest_series(kv.get("ingest.series"), kv.get_bool("ingest.mean_subtract", true)); });
      stage("analyze", [&] {
        const auto depths = kv.has("ingest.depths") ? kv.get_ints("ingest.depths") : std::vector<int>{1, 2, 4, 8, 16, 32};
        const auto horizons = kv.has("ingest.horizons") ? kv.get_ints("ingest.horizons") : std::vector<int>{2000};
        const int H = *std::max_element(horizons.begin(), horizons.end());
        const ProjectedNorms p = projected_norms_delay(series, depths, H);
        for (int d : depths)
          for (int L : horizons) rows.push_back(p.estimate(d, L));
        const AutocorrelationSeries ac = autocorrelation(series, H);
        atoms = detect_atoms(ac, H, kv.get_double("ingest.threshold", 0.1));
        put("samples", std::to_string(series.size()));
        put("atoms", std::to_string(atoms.size()));
      });
      stage("write", [&] {
        emit("rage.csv", rage_to_csv(rows));
        emit("atoms.csv", atoms_to_csv(atoms));
      });
      break;
    }

    case Analysis::Rage:
    case Analysis::WeakMixing: {
      SystemBundle b;
      std::optional<Dictionary> dict;
      std::vector<ProjectedNorms> norms;
      std::vector<int> ranks, horizons;
      const bool wm = config.analysis == Analysis::WeakMixing;
      const std::string pre = wm ? "weakmix." : "rage.";
      stage("system", [&] {
        b = build_system(kv);
        if (b.system.space().kind() != SpaceKind::Torus2) config_error("rage: orbit source needs a torus system");
        dict = build_dictionary(kv, b, 30);
      });
      stage("analyze", [&] {
        ranks = kv.has(pre + "ranks") ? kv.get_ints(pre + "ranks") : std::vector<int>{1, 2, 4, 8};
        horizons = kv.has(pre + "horizons") ? kv.get_ints(pre + "horizons") : std::vector<int>{16, 64, 256};
        const int H = *std::max_element(horizons.begin(), horizons.end());
        std::vector<Eigen::Index> which;
        if (wm) {
          const auto count = kv.get_int("weakmix.observables", 3);
          for (Eigen::Index k = 0; k < std::min<Eigen::Index>(count, dict->size()); ++k) which.push_back(k);
        } else {
          which.push_back(static_cast<Eigen::Index>(kv.get_int("rage.observable", 0)));
        }
        norms = orbit_norms(kv, b, *dict, which, H, pre + "nodes");
      });
      stage("write", [&] {
        if (wm) {
          const WeakMixingReport r = weak_mixing_decide(norms, ranks, horizons);
          std::string csv = "n,L,a\n";
          for (std::size_t i = 0; i < ranks.size(); ++i)
            for (std::size_t j = 0; j < horizons.size(); ++j)
              csv += std::to_string(ranks[i]) + "," + std::to_string(horizons[j]) + "," +
                     format_double(r.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) + "\n";
          emit("weakmix.csv", csv);
          std::vector<int> outer(r.outer.begin(), r.outer.end());
          put("outer", join(outer));
          put("decision", std::to_string(r.decision));
        } else {
          std::vector<RageEstimate> rows;
          for (int n : ranks)
            for (int L : horizons) rows.push_back(norms[0].estimate(n, L));
          emit("rage.csv", rage_to_csv(rows));
          put("observable", norms[0].observable_id);
        }
      });
      break;
    }

    default: {
      SystemBundle b;
      std::optional<Dictionary> dict;
      SnapshotSet snaps;
      Triple raw;
      const int precision = static_cast<int>(kv.get_int("quadrature.precision", 30));
      const Eigen::Index M = kv.get_int("quadrature.M", 64);
      stage("system", [&] {
        b = build_system(kv);
        if (config.analysis != Analysis::Simulate) dict = build_dictionary(kv, b, precision);
      });
      if (config.analysis == Analysis::Simulate) {
        stage("simulate", [&] {
          snaps = simulate(kv, b, M, static_cast<std::uint64_t>(kv.get_int("quadrature.seed", 0)), precision);
        });
        stage("write", [&] {
          emit("snapshots.csv", snapshots_to_csv(snaps, static_cast<std::uint64_t>(kv.get_int("quadrature.seed", 0))));
        });
        put("snapshots", std::to_string(snaps.size()));
        break;
      }
      if (config.analysis == Analysis::Sigma2) {
        std::vector<Triple> triples;
        SpectralResult r;
        stage("assemble", [&] {
          const auto Ms = kv.has("sigma2.M_schedule") ? kv.get_ints("sigma2.M_schedule") : std::vector<int>{100, 1000, 10000};
          for (int m : Ms) triples.push_back(orthonormalize(cached_triple(kv, cache, b, *dict, m, nullptr)));
        });
        stage("analyze", [&] {
          std::optional<double> slack;
          if (kv.has("sigma2.slack")) slack = kv.get_double("sigma2.slack");
          r = spectrum_sigma2(triples, grid_from(kv), kv.get_double("eps"), slack);
        });
        stage("write", [&] { emit("results.csv", results_to_csv(r)); });
        certify(r);
        break;
      }
      stage("assemble", [&] { raw = cached_triple(kv, cache, b, *dict, M, &snaps); });
      if (config.analysis == Analysis::Assemble) {
        stage("write", [&] {
          emit("snapshots.csv", snapshots_to_csv(snaps, static_cast<std::uint64_t>(kv.get_int("quadrature.seed", 0))));
          write_triple((out / "triple.bin").string(), raw);
          rep.manifest.push_back("triple.bin");
          rep.manifest.push_back("triple.bin.txt");
        });
        const TripleChecks c = check_triple(raw);
        put("size", std::to_string(raw.size()));
        put("hermitian_error_g", format_double(c.hermitian_error_g));
        put("min_eig_g", format_double(c.min_eig_g));
        break;
      }
      Triple t;
      SpectralResult r;
      std::optional<ResidualField> field;
      stage("orthonormalize", [&] { t = orthonormalize(raw); });
      stage("analyze", [&] {
        switch (config.analysis) {
          case Analysis::Sigma1: {
            field = residual_field(t, grid_from(kv));
            Sigma1Options opt;
            opt.median_multiplier = kv.get_double("sigma1.multiplier", 0.5);
            if (kv.has("sigma1.cap")) opt.threshold_cap = kv.get_double("sigma1.cap");
            r = spectrum_sigma1(*field, t.measure_preserving, opt);
            break;
          }
          case Analysis::Pseudospectrum:
            field = residual_field(t, grid_from(kv));
            r = pseudospectrum_grid(*field, kv.get_double("eps"));
            break;
          default:
            r = edmd_eigenvalues(t);
            break;
        }
      });
      stage("write", [&] {
        emit("results.csv", results_to_csv(r));
        if (field) {
          emit("residual_field.csv", field_to_csv(*field));
          std::vector<double> levels;
          if (kv.has("eps")) levels.push_back(kv.get_double("eps"));
          for (double l : {0.05, 0.1, 0.25, 0.5})
            if (levels.empty() || l != levels[0]) levels.push_back(l);
          plot_field(*field, r, levels, std::string(analysis_name(config.analysis)) + " " + kv.get("system"));
        }
      });
      certify(r);
      put("dictionary_size", std::to_string(t.size()));
      break;
    }
  }

  stage("report", [&] {
    rep.manifest.push_back("report.txt");
    write_file_atomic((out / "report.txt").string(), rep.to_text());
  });
  write_file_atomic((out / "timings.txt").string(), rep.timings_text());
  return rep;
}

}  // namespace koopspec
