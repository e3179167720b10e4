#include "koopspec/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "koopspec/random.hpp"

namespace koopspec {

// ---------------------------------------------------------------------------
// StateSpace
// ---------------------------------------------------------------------------

StateSpace StateSpace::circle() {
  StateSpace s;
  s.kind_ = SpaceKind::Circle;
  s.lower_ = VectorXd::Constant(1, -kPi);
  s.upper_ = VectorXd::Constant(1, kPi);
  return s;
}

StateSpace StateSpace::torus2() {
  StateSpace s;
  s.kind_ = SpaceKind::Torus2;
  s.lower_ = VectorXd::Constant(2, -kPi);
  s.upper_ = VectorXd::Constant(2, kPi);
  return s;
}

StateSpace StateSpace::interval01() {
  StateSpace s;
  s.kind_ = SpaceKind::Interval01;
  s.lower_ = VectorXd::Zero(1);
  s.upper_ = VectorXd::Ones(1);
  return s;
}

StateSpace StateSpace::disk() {
  StateSpace s;
  s.kind_ = SpaceKind::Disk;
  s.lower_ = VectorXd::Constant(2, -1.0);
  s.upper_ = VectorXd::Constant(2, 1.0);
  return s;
}

StateSpace StateSpace::box(VectorXd lower, VectorXd upper) {
  if (lower.size() == 0 || lower.size() != upper.size()) config_error("box: bounds must have equal nonzero length");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i]))
      config_error("box: bounds must be finite with lower < upper");
  }
  StateSpace s;
  s.kind_ = SpaceKind::Box;
  s.lower_ = std::move(lower);
  s.upper_ = std::move(upper);
  return s;
}

StateSpace StateSpace::discrete(std::int64_t n) {
  if (n < 1) config_error("discrete: cardinality must be positive");
  StateSpace s;
  s.kind_ = SpaceKind::DiscreteN;
  s.lower_ = VectorXd::Zero(1);
  s.upper_ = VectorXd::Constant(1, static_cast<double>(n - 1));
  s.cardinality_ = n;
  return s;
}

int StateSpace::dim() const { return static_cast<int>(lower_.size()); }

bool StateSpace::contains(const State& x) const {
  if (x.size() != dim() || !x.allFinite()) return false;
  switch (kind_) {
    case SpaceKind::Circle:
    case SpaceKind::Torus2:
      return true;
    case SpaceKind::Interval01:
      return x[0] >= 0.0 && x[0] <= 1.0;
    case SpaceKind::Disk:
      return x.squaredNorm() <= 1.0 + 1e-12;
    case SpaceKind::Box:
      return ((x - lower_).array() >= 0).all() && ((upper_ - x).array() >= 0).all();
    case SpaceKind::DiscreteN:
      return x[0] == std::round(x[0]) && x[0] >= 0 && x[0] < static_cast<double>(cardinality_);
  }
  return false;
}

State StateSpace::canonical(const State& x) const {
  if (kind_ != SpaceKind::Circle && kind_ != SpaceKind::Torus2) return x;
  State out = x;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = wrap_angle(out[i]);
  return out;
}

double StateSpace::distance(const State& x, const State& y) const {
  switch (kind_) {
    case SpaceKind::Circle:
    case SpaceKind::Torus2: {
      double s = 0;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double d = std::abs(wrap_angle(x[i] - y[i]));
        s += d * d;
      }
      return std::sqrt(s);
    }
    case SpaceKind::DiscreteN:
      return x[0] == y[0] ? 0.0 : 1.0;
    default:
      return (x - y).norm();
  }
}

double StateSpace::measure() const {
  switch (kind_) {
    case SpaceKind::Circle:
      return kTwoPi;
    case SpaceKind::Torus2:
      return kTwoPi * kTwoPi;
    case SpaceKind::Interval01:
      return 1.0;
    case SpaceKind::Disk:
      return kPi;
    case SpaceKind::Box:
      return (upper_ - lower_).prod();
    case SpaceKind::DiscreteN:
      return static_cast<double>(cardinality_);
  }
  return 0;
}

std::string StateSpace::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case SpaceKind::Circle: os << "circle"; break;
    case SpaceKind::Torus2: os << "torus2"; break;
    case SpaceKind::Interval01: os << "interval01"; break;
    case SpaceKind::Disk: os << "disk"; break;
    case SpaceKind::Box:
      os << "box(";
      for (Eigen::Index i = 0; i < lower_.size(); ++i) os << (i ? ";" : "") << lower_[i] << ":" << upper_[i];
      os << ")";
      break;
    case SpaceKind::DiscreteN: os << "discrete(" << cardinality_ << ")"; break;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Duffing
// ---------------------------------------------------------------------------

namespace {
Eigen::Vector2d duffing_field(const Eigen::Vector2d& s, double alpha) {
  return {s[1], -alpha * s[1] + s[0] * (1.0 - s[0] * s[0])};
}
}  // namespace

Eigen::Vector2d duffing_rk4_step(const Eigen::Vector2d& s, double alpha, double dt) {
  const Eigen::Vector2d k1 = duffing_field(s, alpha);
  const Eigen::Vector2d k2 = duffing_field(s + 0.5 * dt * k1, alpha);
  const Eigen::Vector2d k3 = duffing_field(s + 0.5 * dt * k2, alpha);
  const Eigen::Vector2d k4 = duffing_field(s + dt * k3, alpha);
  return s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

double duffing_energy(const Eigen::Vector2d& s) {
  const double x2 = s[0] * s[0];
  return 0.5 * s[1] * s[1] - 0.5 * x2 + 0.25 * x2 * x2;
}

// ---------------------------------------------------------------------------
// DynamicalSystem
// ---------------------------------------------------------------------------

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_breaks(const std::vector<double>& b, const char* name) {
  if (b.size() < 2) config_error(std::string("piecewise_affine: ") + name + " needs at least two breakpoints");
  if (b.front() != 0.0 || b.back() != 1.0) config_error(std::string("piecewise_affine: ") + name + " must span [0,1]");
  for (std::size_t i = 1; i < b.size(); ++i)
    if (!(b[i] > b[i - 1])) config_error(std::string("piecewise_affine: ") + name + " must be strictly increasing");
}

double affine_lookup(const std::vector<double>& from, const std::vector<double>& to, double x) {
  auto it = std::upper_bound(from.begin(), from.end(), x);
  std::size_t k = it == from.begin() ? 0 : static_cast<std::size_t>(it - from.begin()) - 1;
  k = std::min(k, from.size() - 2);
  const double t = (x - from[k]) / (from[k + 1] - from[k]);
  return to[k] + t * (to[k + 1] - to[k]);
}

State scalar(double v) { return State::Constant(1, v); }

}  // namespace

DynamicalSystem DynamicalSystem::make(MapSpec spec) {
  DynamicalSystem sys;
  std::visit(Overloaded{
                 [&](const Rotation& r) {
                   if (!std::isfinite(r.gamma)) config_error("rotation: gamma must be finite");
                   sys.space_ = StateSpace::circle();
                   sys.lipschitz_ = 1.0;
                   sys.measure_preserving_ = true;
                 },
                 [&](const Arnold& a) {
                   if (!std::isfinite(a.gamma)) config_error("arnold: gamma must be finite");
                   if (!(a.epsilon >= 0.0 && a.epsilon < kTwoPi)) config_error("arnold: epsilon must lie in [0, 2*pi)");
                   sys.space_ = StateSpace::circle();
                   sys.lipschitz_ = 1.0 + a.epsilon;
                   sys.measure_preserving_ = a.epsilon == 0.0;
                 },
                 [&](const Doubling&) {
                   sys.space_ = StateSpace::circle();
                   sys.lipschitz_ = 2.0;
                   sys.measure_preserving_ = true;
                 },
                 [&](const Duffing& d) {
                   if (!(d.alpha >= 0.0) || !std::isfinite(d.alpha)) config_error("duffing: alpha must be >= 0");
                   if (!(d.dt > 0.0) || !std::isfinite(d.dt)) config_error("duffing: dt must be > 0");
                   if (d.substeps < 1) config_error("duffing: substeps must be >= 1");
                   // Sublevel set H <= 4 of [-2,2]^2 initial data stays inside [-3,3]^2.
                   sys.space_ = StateSpace::box(VectorXd::Constant(2, -3.0), VectorXd::Constant(2, 3.0));
                   sys.measure_preserving_ = d.alpha == 0.0;
                 },
                 [&](const DiskRotation&) {
                   sys.space_ = StateSpace::disk();
                   sys.lipschitz_ = 1.0;
                   sys.measure_preserving_ = true;
                 },
                 [&](const PiecewiseAffine& p) {
                   check_breaks(p.from, "from");
                   check_breaks(p.to, "to");
                   if (p.from.size() != p.to.size()) config_error("piecewise_affine: from/to sizes differ");
                   double slope = 0, inv_slope = 0;
                   bool mp = true;
                   for (std::size_t k = 0; k + 1 < p.from.size(); ++k) {
                     const double s = (p.to[k + 1] - p.to[k]) / (p.from[k + 1] - p.from[k]);
                     slope = std::max(slope, s);
                     inv_slope = std::max(inv_slope, 1.0 / s);
                     mp = mp && std::abs(s - 1.0) < 1e-15;
                   }
                   sys.space_ = StateSpace::interval01();
                   sys.lipschitz_ = slope;
                   sys.measure_preserving_ = mp;
                 },
                 [&](const Skew& s) {
                   if (!s.f) config_error("skew: f is required");
                   sys.space_ = StateSpace::torus2();
                   sys.lipschitz_ = s.lipschitz;
                   sys.measure_preserving_ = true;
                 },
                 [&](const DiscreteMap& d) {
                   if (d.table.empty()) config_error("discrete_map: table is empty");
                   std::int64_t top = 0;
                   for (auto [k, v] : d.table) {
                     if (k < 0 || v < 0) config_error("discrete_map: states must be nonnegative");
                     top = std::max({top, k, v});
                   }
                   sys.space_ = StateSpace::discrete(top + 1);
                   sys.measure_preserving_ = false;
                 },
                 [&](const ExternalTable& t) {
                   if (t.rows.empty()) config_error("external: table is empty");
                   sys.space_ = t.space;
                   sys.measure_preserving_ = false;
                 },
             },
             spec);
  sys.spec_ = std::move(spec);
  return sys;
}

State DynamicalSystem::apply(const State& x) const {
  return std::visit(
      Overloaded{
          [&](const Rotation& r) -> State { return scalar(wrap_angle(x[0] + kTwoPi * r.gamma)); },
          [&](const Arnold& a) -> State {
            return scalar(wrap_angle(x[0] + kTwoPi * a.gamma + a.epsilon * std::sin(x[0])));
          },
          [&](const Doubling&) -> State { return scalar(wrap_angle(2.0 * x[0])); },
          [&](const Duffing& d) -> State {
            Eigen::Vector2d y(x[0], x[1]);
            const double h = d.dt / d.substeps;
            for (int k = 0; k < d.substeps; ++k) y = duffing_rk4_step(y, d.alpha, h);
            return State(y);
          },
          [&](const DiskRotation&) -> State { return -x; },
          [&](const PiecewiseAffine& p) -> State { return scalar(affine_lookup(p.from, p.to, x[0])); },
          [&](const Skew& s) -> State {
            State y(2);
            y << x[0], wrap_angle(x[1] + s.f(x[0]));
            return y;
          },
          [&](const DiscreteMap& d) -> State {
            auto it = d.table.find(static_cast<std::int64_t>(x[0]));
            if (it == d.table.end()) domain_error("no data at requested point");
            return scalar(static_cast<double>(it->second));
          },
          [&](const ExternalTable& t) -> State {
            for (const auto& [from, to] : t.rows)
              if (from.size() == x.size() && from == x) return to;
            domain_error("no data at requested point");
          },
      },
      spec_);
}

Sample DynamicalSystem::query(const State& x, int n) const {
  if (n < 1) config_error("evaluate: precision exponent must be >= 1");
  if (!space_.contains(x)) domain_error("evaluate: state outside " + space_.describe());
  return {apply(space_.canonical(x)), n > kPrecisionCeiling};
}

bool DynamicalSystem::invertible() const {
  if (auto* a = std::get_if<Arnold>(&spec_)) return std::abs(a->epsilon) < 1.0;
  return std::holds_alternative<Rotation>(spec_) || std::holds_alternative<DiskRotation>(spec_) ||
         std::holds_alternative<PiecewiseAffine>(spec_) || std::holds_alternative<Skew>(spec_);
}

State DynamicalSystem::evaluate_inverse(const State& x, int n) const {
  if (n < 1) config_error("evaluate_inverse: precision exponent must be >= 1");
  if (!space_.contains(x)) domain_error("evaluate_inverse: state outside " + space_.describe());
  const State c = space_.canonical(x);
  if (auto* r = std::get_if<Rotation>(&spec_)) return scalar(wrap_angle(c[0] - kTwoPi * r->gamma));
  if (std::holds_alternative<DiskRotation>(spec_)) return -c;
  if (auto* a = std::get_if<Arnold>(&spec_); a && std::abs(a->epsilon) < 1.0) {
    // x + eps sin x = t is strictly increasing; safeguarded Newton on [t - |eps|, t + |eps|].
    const double t = wrap_angle(c[0] - kTwoPi * a->gamma), e = a->epsilon;
    double lo = t - std::abs(e), hi = t + std::abs(e), x = t;
    for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
      const double g = x + e * std::sin(x) - t;
      if (g == 0) break;
      (g < 0 ? lo : hi) = x;
      const double step = x - g / (1 + e * std::cos(x));
      x = (step > lo && step < hi) ? step : 0.5 * (lo + hi);
    }
    return scalar(wrap_angle(x));
  }
  if (auto* p = std::get_if<PiecewiseAffine>(&spec_)) return scalar(affine_lookup(p->to, p->from, c[0]));
  if (auto* s = std::get_if<Skew>(&spec_)) {
    State y(2);
    y << c[0], wrap_angle(c[1] - s->f(c[0]));
    return y;
  }
  config_error("evaluate_inverse: " + describe() + " has no inverse");
}

std::vector<State> DynamicalSystem::trajectory(const State& x0, int length, int n) const {
  if (length < 1) config_error("trajectory: length must be >= 1");
  std::vector<State> out;
  out.reserve(static_cast<std::size_t>(length) + 1);
  out.push_back(x0);
  for (int k = 0; k < length; ++k) out.push_back(evaluate(out.back(), n));
  return out;
}

std::string DynamicalSystem::describe() const {
  std::ostringstream os;
  os.precision(17);
  std::visit(Overloaded{
                 [&](const Rotation& r) { os << "rotation(gamma=" << r.gamma << ")"; },
                 [&](const Arnold& a) { os << "arnold(gamma=" << a.gamma << ",epsilon=" << a.epsilon << ")"; },
                 [&](const Doubling&) { os << "doubling"; },
                 [&](const Duffing& d) { os << "duffing(alpha=" << d.alpha << ",dt=" << d.dt << ",substeps=" << d.substeps << ")"; },
                 [&](const DiskRotation&) { os << "disk_rotation"; },
                 [&](const PiecewiseAffine& p) { os << "piecewise_affine(" << p.from.size() - 1 << " pieces)"; },
                 [&](const Skew& s) { os << "skew(" << s.label << ")"; },
                 [&](const DiscreteMap& d) { os << "discrete_map(" << d.table.size() << " entries)"; },
                 [&](const ExternalTable& t) { os << "external(" << t.rows.size() << " rows)"; },
             },
             spec_);
  return os.str();
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

std::string Sampler::describe() const {
  switch (mode) {
    case Mode::UniformRandom: return "uniform(seed=" + std::to_string(seed) + ")";
    case Mode::Grid: return "grid";
    case Mode::Trajectory: return "trajectory";
  }
  return "";
}

namespace {
int exact_root(Eigen::Index M, int d) {
  const int r = static_cast<int>(std::llround(std::pow(static_cast<double>(M), 1.0 / d)));
  Eigen::Index p = 1;
  for (int i = 0; i < d; ++i) p *= r;
  return p == M ? r : 0;
}
}  // namespace

std::vector<int> lattice_shape(const StateSpace& space, Eigen::Index M) {
  if (M < 1) return {};
  switch (space.kind()) {
    case SpaceKind::Circle:
    case SpaceKind::Interval01:
      return {static_cast<int>(M)};
    case SpaceKind::Torus2:
    case SpaceKind::Box: {
      const int r = exact_root(M, space.dim());
      if (r == 0) return {};
      return std::vector<int>(static_cast<std::size_t>(space.dim()), r);
    }
    case SpaceKind::Disk: {
      // rings x (4 * rings) angles
      if (M % 4 != 0) return {};
      const int r = exact_root(M / 4, 2);
      if (r == 0) return {};
      return {r, 4 * r};
    }
    case SpaceKind::DiscreteN:
      if (M != space.cardinality()) return {};
      return {static_cast<int>(M)};
  }
  return {};
}

namespace {

State lattice_point(const StateSpace& space, const std::vector<int>& shape, Eigen::Index m) {
  switch (space.kind()) {
    case SpaceKind::Circle:
      return scalar(-kPi + kTwoPi * static_cast<double>(m) / shape[0]);
    case SpaceKind::Interval01:
      return scalar((static_cast<double>(m) + 0.5) / shape[0]);
    case SpaceKind::DiscreteN:
      return scalar(static_cast<double>(m));
    case SpaceKind::Disk: {
      const int rings = shape[0], angles = shape[1];
      const Eigen::Index i = m / angles, j = m % angles;
      const double r = std::sqrt((static_cast<double>(i) + 0.5) / rings);
      const double t = -kPi + kTwoPi * static_cast<double>(j) / angles;
      State x(2);
      x << r * std::cos(t), r * std::sin(t);
      return x;
    }
    case SpaceKind::Torus2:
    case SpaceKind::Box: {
      const int d = space.dim();
      State x(d);
      Eigen::Index rest = m;
      for (int k = d - 1; k >= 0; --k) {
        const Eigen::Index idx = rest % shape[static_cast<std::size_t>(k)];
        rest /= shape[static_cast<std::size_t>(k)];
        const double count = shape[static_cast<std::size_t>(k)];
        if (space.kind() == SpaceKind::Torus2)
          x[k] = -kPi + kTwoPi * static_cast<double>(idx) / count;
        else
          x[k] = space.lower()[k] + (space.upper()[k] - space.lower()[k]) * (static_cast<double>(idx) + 0.5) / count;
      }
      return x;
    }
  }
  return {};
}

State random_point(const StateSpace& space, const Sampler& sampler, const Philox4x32& rng, Eigen::Index m) {
  const int d = space.dim();
  State x(d);
  auto uniform = [&](int k) { return rng.uniform(static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(k)); };
  switch (space.kind()) {
    case SpaceKind::Circle:
    case SpaceKind::Torus2:
      for (int k = 0; k < d; ++k) x[k] = wrap_angle(-kPi + kTwoPi * uniform(k));
      return x;
    case SpaceKind::Interval01:
      x[0] = uniform(0);
      return x;
    case SpaceKind::Disk: {
      const double r = std::sqrt(uniform(0));
      const double t = -kPi + kTwoPi * uniform(1);
      x << r * std::cos(t), r * std::sin(t);
      return x;
    }
    case SpaceKind::DiscreteN:
      x[0] = std::min(std::floor(uniform(0) * static_cast<double>(space.cardinality())),
                      static_cast<double>(space.cardinality() - 1));
      return x;
    case SpaceKind::Box: {
      const VectorXd& lo = sampler.region ? sampler.region->first : space.lower();
      const VectorXd& hi = sampler.region ? sampler.region->second : space.upper();
      for (int k = 0; k < d; ++k) x[k] = lo[k] + (hi[k] - lo[k]) * uniform(k);
      return x;
    }
  }
  return x;
}

}  // namespace

MatrixXd lattice_points(const StateSpace& space, const std::vector<int>& shape) {
  if (shape.empty()) config_error("lattice_points: empty lattice shape");
  Eigen::Index M = 1;
  for (int s : shape) M *= s;
  MatrixXd P(M, space.dim());
  for (Eigen::Index m = 0; m < M; ++m) P.row(m) = lattice_point(space, shape, m).transpose();
  return P;
}

SnapshotSet sample_snapshots(const DynamicalSystem& system, const Sampler& sampler, Eigen::Index M, int n) {
  if (M < 1) config_error("sample_snapshots: M must be >= 1");
  if (n < 1) config_error("sample_snapshots: precision exponent must be >= 1");
  const StateSpace& space = system.space();
  const int d = space.dim();
  SnapshotSet s;
  s.precision_exponent = n;
  s.sampler = sampler;
  s.region_measure = space.measure();
  s.X.resize(M, d);
  s.Y.resize(M, d);

  if (sampler.region) {
    if (space.kind() != SpaceKind::Box) config_error("sample_snapshots: sampling region only applies to box spaces");
    const auto& [lo, hi] = *sampler.region;
    if (lo.size() != d || hi.size() != d) config_error("sample_snapshots: region dimension mismatch");
    for (int k = 0; k < d; ++k)
      if (!(lo[k] >= space.lower()[k] && hi[k] <= space.upper()[k] && lo[k] < hi[k]))
        config_error("sample_snapshots: region must lie inside the state space");
    s.region_measure = (hi - lo).prod();
  }

  switch (sampler.mode) {
    case Sampler::Mode::Grid: {
      s.lattice = lattice_shape(space, M);
      if (s.lattice.empty())
        config_error("sample_snapshots: M=" + std::to_string(M) + " is not a lattice size for " + space.describe());
      parallel_for(static_cast<std::size_t>(M), [&](std::size_t m) {
        const State x = lattice_point(space, s.lattice, static_cast<Eigen::Index>(m));
        s.X.row(static_cast<Eigen::Index>(m)) = x.transpose();
        s.Y.row(static_cast<Eigen::Index>(m)) = system.evaluate(x, n).transpose();
      });
      break;
    }
    case Sampler::Mode::UniformRandom: {
      const Philox4x32 rng(sampler.seed);
      parallel_for(static_cast<std::size_t>(M), [&](std::size_t m) {
        const State x = random_point(space, sampler, rng, static_cast<Eigen::Index>(m));
        s.X.row(static_cast<Eigen::Index>(m)) = x.transpose();
        s.Y.row(static_cast<Eigen::Index>(m)) = system.evaluate(x, n).transpose();
      });
      break;
    }
    case Sampler::Mode::Trajectory: {
      if (sampler.start.size() != d) config_error("sample_snapshots: trajectory start has wrong dimension");
      const auto traj = system.trajectory(sampler.start, static_cast<int>(M), n);
      for (Eigen::Index m = 0; m < M; ++m) {
        s.X.row(m) = traj[static_cast<std::size_t>(m)].transpose();
        s.Y.row(m) = traj[static_cast<std::size_t>(m) + 1].transpose();
      }
      break;
    }
  }
  return s;
}

}  // namespace koopspec
