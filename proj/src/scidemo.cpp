#include "koopspec/scidemo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace koopspec {

// ---------------------------------------------------------------------------
// interval exchange
// ---------------------------------------------------------------------------

IemOracle build_iem(const IemSpec& spec) {
  const int k = spec.truncation_depth;
  if (k < 4) config_error("iem: truncation_depth must be >= 4");
  const auto& sched = spec.ratio_schedule;
  if (sched.empty()) config_error("iem: empty ratio schedule");
  for (std::size_t e = 0; e < sched.size(); ++e) {
    if (!(sched[e].first > 0 && sched[e].first < 1)) config_error("iem: ratios must lie in (0, 1)");
    if (e + 1 < sched.size() && (sched[e].second < 1 || (e > 0 && sched[e].second <= sched[e - 1].second)))
      config_error("iem: switch indices must be positive and increasing");
  }
  auto ratio = [&](int n) {
    for (std::size_t e = 0; e + 1 < sched.size(); ++e)
      if (n < sched[e].second) return sched[e].first;
    return sched.back().first;
  };

  // Unnormalized lengths u_n for n = 0..k+2, and tail sums from the closed
  // geometric tail after the last switch.
  const int last_switch = sched.size() > 1 ? sched[sched.size() - 2].second : 0;
  const int top = std::max(k + 2, last_switch);
  std::vector<double> u(static_cast<std::size_t>(top) + 1);
  u[0] = 1.0;
  for (int n = 0; n < top; ++n) u[static_cast<std::size_t>(n) + 1] = u[static_cast<std::size_t>(n)] * ratio(n);
  std::vector<double> tail(u.size());
  const double rl = sched.back().first;
  tail.back() = u.back() / (1.0 - rl);
  for (int n = top - 1; n >= 0; --n)
    tail[static_cast<std::size_t>(n)] = u[static_cast<std::size_t>(n)] + tail[static_cast<std::size_t>(n) + 1];
  const double beta = 0.5 / tail[0];
  for (int n = 0; n <= k + 1; ++n)
    if (beta * u[static_cast<std::size_t>(n)] < 1e-14)
      config_error("iem: cell S_" + std::to_string(n) + " is below 1e-14 before depth " + std::to_string(k) +
                   "; deepen float budget");

  // Breakpoints c_n for n = -k-1..k+2: c_{-n} = tail(n), c_n = 1 - tail(n).
  auto breakpoint = [&](int n) {
    return n <= 0 ? beta * tail[static_cast<std::size_t>(-n)] : 1.0 - beta * tail[static_cast<std::size_t>(n)];
  };
  std::vector<double> from{0.0}, to{0.0};
  for (int n = -k - 1; n <= k + 1; ++n) from.push_back(breakpoint(n));
  for (int n = -k; n <= k + 2; ++n) to.push_back(breakpoint(n));
  from.push_back(1.0);
  to.push_back(1.0);

  std::vector<Interval> cells;
  for (int n = -k; n <= k; ++n) cells.push_back({breakpoint(n), breakpoint(n + 1)});
  IemOracle o{.system = make_system(PiecewiseAffine{from, to}), .dictionary = indicator_dictionary(cells)};
  o.depth = k;
  o.inner_radius = std::sqrt(rl);
  o.outer_radius = 1.0 / std::sqrt(rl);
  for (int n = -k - 1; n <= k + 1; ++n) o.lengths.push_back(breakpoint(n + 1) - breakpoint(n));

  o.quadrature_cells.push_back({0.0, breakpoint(-k - 1)});
  for (int n = -k - 1; n <= k; ++n) o.quadrature_cells.push_back({breakpoint(n), breakpoint(n + 1)});
  o.quadrature_cells.push_back({breakpoint(k + 1), 1.0});
  o.nodes.resize(static_cast<Eigen::Index>(o.quadrature_cells.size()), 1);
  for (std::size_t c = 0; c < o.quadrature_cells.size(); ++c)
    o.nodes(static_cast<Eigen::Index>(c), 0) = 0.5 * (o.quadrature_cells[c].lo + o.quadrature_cells[c].hi);

  double worst = 1.0;
  for (std::size_t p = 0; p + 1 < from.size(); ++p) {
    const double a = (to[p + 1] - to[p]) / (from[p + 1] - from[p]);
    worst = std::max({worst, a, 1.0 / a});
  }
  o.delta = worst - 1.0;
  return o;
}

Triple IemOracle::closed_form() const {
  const Eigen::Index N = 2 * depth + 1;
  Triple t;
  t.G = MatrixXcd::Identity(N, N);
  t.A = MatrixXcd::Zero(N, N);
  t.L = MatrixXcd::Zero(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const int n = static_cast<int>(i) - depth;
    if (i + 1 < N) t.A(i, i + 1) = std::sqrt(length(n) / length(n + 1));
    t.L(i, i) = length(n - 1) / length(n);
  }
  t.basis_is_orthonormal = true;
  t.measure_preserving = false;
  t.delta_bound = delta_bound();
  t.transform = MatrixXcd::Identity(N, N);
  t.provenance = "iem closed form, depth " + std::to_string(depth);
  return t;
}

Triple IemOracle::assembled() const {
  const MatrixXd Y = [&] {
    MatrixXd y(nodes.rows(), 1);
    for (Eigen::Index m = 0; m < nodes.rows(); ++m) y(m, 0) = system.evaluate(nodes.row(m).transpose(), 30)[0];
    return y;
  }();
  const QuadratureWeights w = partition_weights(quadrature_cells, nodes);
  Triple t = assemble(evaluate_dictionary(dictionary, nodes), evaluate_dictionary(dictionary, Y, EvaluationMatrix::Side::Y),
                      w);
  t.measure_preserving = false;
  t.delta_bound = delta_bound();
  t.provenance = "iem exact-partition, depth " + std::to_string(depth);
  return t;
}

VectorXcd IemOracle::eigenfunction(Complex z) const {
  const Eigen::Index N = 2 * depth + 1;
  VectorXcd c(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const int n = static_cast<int>(i) - depth;
    c[i] = std::pow(z, n) * std::sqrt(length(n));
  }
  return c;
}

// ---------------------------------------------------------------------------
// skew products
// ---------------------------------------------------------------------------

namespace {

// Integral of the quintic smoothstep 6t^5 - 15t^4 + 10t^3 from 0 to t.
double smoothstep_integral(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * t * (2.5 + t * (-3.0 + t));
}

// A ramp on [p, q] whose slope rises smoothly to v over width w at each end;
// total rise v * (q - p - w).
struct Ramp {
  double p, q, v, w;

  double rise(double x) const {
    if (x <= p) return 0.0;
    const double len = q - p;
    if (x >= q) return v * (len - w);
    double s;
    if (x < p + w) {
      s = w * smoothstep_integral((x - p) / w);
    } else if (x <= q - w) {
      s = w / 2 + (x - p - w);
    } else {
      s = (len - w) - w * smoothstep_integral((q - x) / w);
    }
    return v * s;
  }
};

}  // namespace

SkewOracle build_skew(const SkewSpec& spec) {
  SkewOracle o;
  std::function<double(double)> half;  // f on [-pi, 0]
  switch (spec.kind) {
    case SkewSpec::Kind::Linear:
      half = [](double x) { return kPi + x; };
      break;
    case SkewSpec::Kind::Custom:
      if (!spec.custom) config_error("skew: custom kind needs f");
      half = spec.custom;
      break;
    case SkewSpec::Kind::Smooth: {
      const double w = spec.join_width;
      if (!(w > 0)) config_error("skew: join_width must be > 0");
      std::vector<Ramp> ramps;
      if (spec.plateau) {
        const Plateau& pl = *spec.plateau;
        if (!(pl.b - pl.a > 0)) config_error("skew: plateau needs b - a > 0");
        if (!(pl.a > -kPi && pl.b < 0)) config_error("skew: plateau must lie inside (-pi, 0)");
        if (!(pl.value > 0 && pl.value < kPi)) config_error("skew: plateau value must lie in (0, pi)");
        const double l1 = pl.a + kPi, l2 = -pl.b;
        if (l1 < 2 * w || l2 < 2 * w) config_error("skew: ramps around the plateau are shorter than two join widths");
        ramps.push_back({-kPi, pl.a, pl.value / (l1 - w), w});
        ramps.push_back({pl.b, 0.0, (kPi - pl.value) / (l2 - w), w});
        o.plateau = pl;
      } else {
        ramps.push_back({-kPi, 0.0, kPi / (kPi - w), w});
      }
      const auto pl = spec.plateau;
      half = [ramps, pl](double x) {
        if (pl && x >= pl->a && x <= pl->b) return pl->value;
        double s = 0;
        for (const Ramp& r : ramps) s += r.rise(x);
        return s;
      };
      break;
    }
  }
  o.f = [half](double x) { return half(-std::abs(wrap_angle(x) == -kPi ? -kPi : x)); };

  // Check grid.
  const int n = 1000;
  const double tol = 1e-9;
  if (std::abs(o.f(-kPi)) > tol) config_error("skew: f(-pi) must be 0");
  if (std::abs(o.f(0.0) - kPi) > tol) config_error("skew: f(0) must be pi");
  double prev = o.f(-kPi);
  for (int i = 1; i <= n; ++i) {
    const double x = -kPi + kPi * i / n;
    const double fx = o.f(x);
    if (fx < prev - tol) config_error("skew: f must be non-decreasing on [-pi, 0]");
    if (std::abs(fx - o.f(-x)) > tol) config_error("skew: f must be symmetric");
    o.max_slope = std::max(o.max_slope, (fx - prev) / (kPi / n));
    prev = fx;
  }
  // Jacobian [[1, 0], [f', 1]] has norm (s + sqrt(s^2 + 4)) / 2, and so does its inverse.
  const double s = o.max_slope;
  o.lipschitz_forward = o.lipschitz_inverse = (s + std::sqrt(s * s + 4.0)) / 2.0;
  o.in_omega_p = o.lipschitz_forward <= 2.0 && o.lipschitz_inverse <= 2.0;

  const std::string label = spec.kind == SkewSpec::Kind::Linear ? "linear" : (o.plateau ? "plateau" : "smooth");
  o.system = make_system(Skew{o.f, label, o.lipschitz_forward});
  return o;
}

std::vector<Complex> SkewOracle::predicted_atoms(int j) const {
  if (!plateau) return {};
  return {std::polar(1.0, j * plateau->value)};
}

Observable SkewOracle::plateau_observable(int j) const {
  if (!plateau) config_error("skew: no plateau");
  const double a = plateau->a, b = plateau->b;
  const double h = 1.0 / std::sqrt(kTwoPi * (b - a));
  return {[a, b, h, j](const State& x) { return x[0] >= a && x[0] < b ? std::polar(h, j * x[1]) : Complex(0.0, 0.0); },
          std::nullopt, "plateau|e" + std::to_string(j)};
}

Dictionary SkewOracle::sector_dictionary(int maxfreq, int j) const {
  const Dictionary modes = fourier_dictionary(StateSpace::circle(), maxfreq);
  std::vector<Observable> obs;
  if (plateau) obs.push_back(circle_indicator(plateau->a, plateau->b));
  for (const Observable& g : modes.observables()) obs.push_back(g);
  const Dictionary circle(StateSpace::circle(), DictionaryKind::Custom, std::move(obs),
                          std::string(plateau ? "plateau+" : "") + modes.describe());
  return koopspec::sector_dictionary(circle, j);
}

// ---------------------------------------------------------------------------
// shift operators
// ---------------------------------------------------------------------------

int ZeroOnePattern::at(std::int64_t i, std::int64_t j) const {
  if (i < 1 || j < 1) config_error("pattern: indices start at 1");
  if (!generator) config_error("pattern: no generator");
  const int v = generator(i, j);
  if (v != 0 && v != 1) config_error("pattern: generator must return 0 or 1");
  return v;
}

const ColumnTail& ZeroOnePattern::tail(std::int64_t j) const {
  auto it = exceptions.find(j);
  return it == exceptions.end() ? default_tail : it->second;
}

void audit_pattern(const ZeroOnePattern& p, std::int64_t window) {
  for (std::int64_t j = 1; j <= window; ++j) {
    const ColumnTail& t = p.tail(j);
    if (t.infinite) {
      if (t.max_gap < 1) config_error("inconsistent declaration: column " + std::to_string(j) + " has max_gap < 1");
      std::int64_t run = 0;
      for (std::int64_t i = 1; i <= window; ++i) {
        run = p.at(i, j) ? 0 : run + 1;
        if (run >= t.max_gap)
          config_error("inconsistent declaration: column " + std::to_string(j) + " has " + std::to_string(run) +
                       " consecutive zeros");
      }
    } else {
      for (std::int64_t i = t.last_one + 1; i <= window; ++i)
        if (p.at(i, j))
          config_error("inconsistent declaration: column " + std::to_string(j) + " has a 1 at row " +
                       std::to_string(i) + " after its last declared one");
    }
  }
}

int q_oracle(const ZeroOnePattern& p, std::int64_t window) {
  audit_pattern(p, window);
  // Exceptions are finitely many, so the default tail settles the question.
  return p.default_tail.infinite ? 1 : 0;
}

int shift_sequence(const ZeroOnePattern& p, std::int64_t j, std::int64_t i) {
  const std::int64_t a = std::abs(i);
  return a <= j ? 1 : p.at(a - j, j);
}

MatrixXd shift_matrix(const std::vector<int>& c) {
  const auto T = static_cast<Eigen::Index>(c.size());
  MatrixXd C = MatrixXd::Zero(T, T);
  Eigen::Index prev = -1;
  for (Eigen::Index l = 0; l < T; ++l) {
    if (!c[static_cast<std::size_t>(l)]) continue;
    if (prev >= 0) C(prev, l) = 1.0;
    prev = l;
  }
  return C;
}

MatrixXd shift_operator(const ZeroOnePattern& p, std::int64_t j, std::int64_t T) {
  if (j < 1) config_error("shift_operator: column index starts at 1");
  if (T < 2 * j + 3) config_error("shift_operator: need T >= 2j + 3");
  std::vector<int> c(static_cast<std::size_t>(T));
  const std::int64_t i0 = -(T / 2);
  for (std::int64_t k = 0; k < T; ++k) c[static_cast<std::size_t>(k)] = shift_sequence(p, j, i0 + k);
  return shift_matrix(c);
}

MatrixXd shift_section(const ZeroOnePattern& p, std::int64_t j, std::int64_t T, std::int64_t margin, double z) {
  if (margin < 0) config_error("shift_section: margin must be >= 0");
  const std::int64_t wide = T + 2 * margin;
  if (T < 2 * j + 3) config_error("shift_operator: need T >= 2j + 3");
  std::vector<int> c(static_cast<std::size_t>(wide));
  const std::int64_t i0 = -(T / 2) - margin;
  for (std::int64_t k = 0; k < wide; ++k) c[static_cast<std::size_t>(k)] = shift_sequence(p, j, i0 + k);
  MatrixXd C = shift_matrix(c);
  C.diagonal().array() -= z;
  return C.middleCols(margin, T);
}

// ---------------------------------------------------------------------------
// ergodicity tower
// ---------------------------------------------------------------------------

std::vector<std::pair<std::int64_t, std::int64_t>> stern_brocot(std::size_t count) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out{{0, 1}, {1, 1}};
  std::vector<std::pair<std::int64_t, std::int64_t>> sorted = out;
  while (out.size() < count) {
    std::vector<std::pair<std::int64_t, std::int64_t>> next;
    next.reserve(2 * sorted.size());
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
      next.push_back(sorted[k]);
      const std::pair<std::int64_t, std::int64_t> m{sorted[k].first + sorted[k + 1].first,
                                                    sorted[k].second + sorted[k + 1].second};
      next.push_back(m);
      out.push_back(m);
    }
    next.push_back(sorted.back());
    sorted = std::move(next);
  }
  out.resize(count);
  return out;
}

std::size_t stern_brocot_index(std::int64_t p, std::int64_t q) {
  if (q < 1 || p < 0 || p > q) config_error("stern_brocot_index: need 0 <= p/q <= 1");
  const std::int64_t g = std::gcd(p, q);
  p /= g;
  q /= g;
  for (std::size_t count = 64;; count *= 2) {
    const auto seq = stern_brocot(count);
    for (std::size_t k = 0; k < seq.size(); ++k)
      if (seq[k].first == p && seq[k].second == q) return k + 1;
    if (count > (std::size_t{1} << 26)) config_error("stern_brocot_index: denominator too large");
  }
}

TowerResult ergodicity_tower(const DynamicalSystem& rotation, std::int64_t n1, std::size_t n2) {
  if (!std::holds_alternative<Rotation>(rotation.spec())) config_error("ergodicity_tower: needs a circle rotation");
  if (n1 < 1 || n2 < 1) config_error("ergodicity_tower: n1 and n2 must be >= 1");
  // Precision tied to n1 so the estimate is well inside the 1/n1 test.
  const int precision = static_cast<int>(std::ceil(std::log2(static_cast<double>(n1)))) + 3;
  const double theta = rotation.evaluate(State::Zero(1), precision)[0];
  TowerResult r;
  r.gamma_hat = theta / kTwoPi;
  if (r.gamma_hat < 0) r.gamma_hat += 1.0;
  r.min_distance = std::numeric_limits<double>::infinity();
  for (const auto& [p, q] : stern_brocot(n2)) {
    const double d = std::abs(r.gamma_hat - static_cast<double>(p) / static_cast<double>(q));
    if (d < r.min_distance) {
      r.min_distance = d;
      r.nearest = {p, q};
    }
  }
  r.decision = r.min_distance > 1.0 / static_cast<double>(n1) ? 1 : 0;
  return r;
}

// ---------------------------------------------------------------------------
// doubling map
// ---------------------------------------------------------------------------

DoublingReport doubling_edmd_report(int maxfreq) {
  if (maxfreq < 2) config_error("doubling report: maxfreq must be >= 2");
  DoublingReport rep;
  rep.maxfreq = maxfreq;
  // Doubling moves mode j to 2j, so 4*maxfreq + 2 nodes avoid aliasing; use 8*maxfreq.
  rep.nodes = 8 * maxfreq;
  const DynamicalSystem sys = make_system(Doubling{});
  const SnapshotSet s = sample_snapshots(sys, Sampler::grid(), rep.nodes, 30);
  const Dictionary dict = fourier_dictionary(sys.space(), maxfreq);
  const QuadratureWeights w = quadrature_weights(sys.space(), s.X, QuadratureRule::Trapezoid);
  Triple raw = assemble(evaluate_dictionary(dict, s.X), evaluate_dictionary(dict, s.Y, EvaluationMatrix::Side::Y), w);
  raw.measure_preserving = true;
  raw.provenance = "doubling, " + dict.describe() + ", trapezoid(" + std::to_string(rep.nodes) + ")";
  const Triple t = orthonormalize(raw);
  rep.full = edmd_eigenvalues(t);

  std::vector<Eigen::Index> rest;
  for (Eigen::Index i = 1; i < raw.size(); ++i) rest.push_back(i);
  rep.nontrivial = edmd_eigenvalues(orthonormalize(restrict_triple(raw, rest)));

  rep.probes = {Complex(1, 0), Complex(0, 1), Complex(0.5, 0), Complex(0, 0)};
  for (const Complex& z : rep.probes) rep.probe_residuals.push_back(residual(z, t));
  rep.log2_maxfreq = std::log2(static_cast<double>(maxfreq));
  rep.longest_chain = static_cast<int>(std::floor(rep.log2_maxfreq + 1e-12)) + 1;
  return rep;
}

std::string DoublingReport::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "demo = doubling\n";
  out << "maxfreq = " << maxfreq << "\n";
  out << "nodes = " << nodes << "\n";
  out << "longest_chain = " << longest_chain << "\n";
  out << "log2_maxfreq = " << log2_maxfreq << "\n";
  double max_mod = 0, min_res = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < nontrivial.size(); ++k) {
    max_mod = std::max(max_mod, std::abs(nontrivial.points[k]));
    min_res = std::min(min_res, nontrivial.residuals[k]);
  }
  out << "nontrivial_eigenvalues = " << nontrivial.size() << "\n";
  out << "nontrivial_max_modulus = " << max_mod << "\n";
  out << "nontrivial_min_residual = " << min_res << "\n";
  for (std::size_t k = 0; k < probes.size(); ++k)
    out << "residual(" << probes[k].real() << (probes[k].imag() < 0 ? "-" : "+") << std::abs(probes[k].imag())
        << "i) = " << probe_residuals[k] << "\n";
  return out.str();
}

}  // namespace koopspec
