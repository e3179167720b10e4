#ifndef KOOPSPEC_DYNAMICS_HPP
#define KOOPSPEC_DYNAMICS_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "koopspec/common.hpp"

namespace koopspec {

enum class SpaceKind { Circle, Torus2, Interval01, Disk, Box, DiscreteN };

// Compact state space with its metric and reference measure.
//
// Periodic coordinates use the chart [-pi, pi). The reference measure is
// unnormalized Lebesgue measure (counting measure on DiscreteN), so the
// circle has total mass 2*pi and the disk pi.
class StateSpace {
 public:
  static StateSpace circle();
  static StateSpace torus2();
  static StateSpace interval01();
  static StateSpace disk();
  static StateSpace box(VectorXd lower, VectorXd upper);
  static StateSpace discrete(std::int64_t n);

  SpaceKind kind() const { return kind_; }
  int dim() const;
  bool contains(const State& x) const;
  // Wraps periodic coordinates once; identity elsewhere.
  State canonical(const State& x) const;
  double distance(const State& x, const State& y) const;
  double measure() const;
  const VectorXd& lower() const { return lower_; }
  const VectorXd& upper() const { return upper_; }
  std::int64_t cardinality() const { return cardinality_; }
  std::string describe() const;

 private:
  SpaceKind kind_ = SpaceKind::Circle;
  VectorXd lower_, upper_;
  std::int64_t cardinality_ = 0;
};

// Builtin map descriptors.
struct Rotation {
  double gamma;  // theta -> theta + 2*pi*gamma
};
struct Arnold {
  double gamma;
  double epsilon;  // theta -> theta + 2*pi*gamma + epsilon*sin(theta), epsilon in [0, 2*pi)
};
struct Doubling {};
struct Duffing {
  double alpha;  // damping
  double dt;     // time-dt flow of x' = y, y' = -alpha*y + x(1 - x^2)
  int substeps = 16;  // RK4 steps of dt/substeps; one step drifts ~1e-3 in energy over 100 maps
};
struct DiskRotation {};  // (r, theta) -> (r, theta + pi)
// Increasing piecewise-affine bijection of [0,1] sending [from[k], from[k+1])
// onto [to[k], to[k+1]).
struct PiecewiseAffine {
  std::vector<double> from;
  std::vector<double> to;
};
// Torus skew product (x, y) -> (x, y + f(x)).
struct Skew {
  std::function<double(double)> f;
  std::string label;
  std::optional<double> lipschitz;
};
struct DiscreteMap {
  std::map<std::int64_t, std::int64_t> table;
};
// Pointwise data only; queries off the table are refused.
struct ExternalTable {
  StateSpace space;
  std::vector<std::pair<State, State>> rows;
};

using MapSpec = std::variant<Rotation, Arnold, Doubling, Duffing, DiskRotation, PiecewiseAffine, Skew,
                             DiscreteMap, ExternalTable>;

inline constexpr int kPrecisionCeiling = 48;

struct Sample {
  State y;
  bool saturated = false;  // requested precision beyond kPrecisionCeiling
};

class DynamicalSystem {
 public:
  DynamicalSystem() = default;

  // Validates parameters; throws Error(Config) naming the bad parameter.
  static DynamicalSystem make(MapSpec spec);

  // y with d(F(x), y) <= 2^-n. Closed-form maps are exact up to rounding.
  Sample query(const State& x, int n) const;
  State evaluate(const State& x, int n) const { return query(x, n).y; }

  bool invertible() const;
  State evaluate_inverse(const State& x, int n) const;

  // length+1 states starting at x0.
  std::vector<State> trajectory(const State& x0, int length, int n) const;

  const StateSpace& space() const { return space_; }
  const MapSpec& spec() const { return spec_; }
  std::optional<double> lipschitz_bound() const { return lipschitz_; }
  bool measure_preserving() const { return measure_preserving_; }
  std::string describe() const;

 private:
  State apply(const State& x) const;

  MapSpec spec_ = Doubling{};
  StateSpace space_ = StateSpace::circle();
  std::optional<double> lipschitz_;
  bool measure_preserving_ = false;
};

inline DynamicalSystem make_system(MapSpec spec) { return DynamicalSystem::make(std::move(spec)); }

// One classical RK4 step of the Duffing vector field.
Eigen::Vector2d duffing_rk4_step(const Eigen::Vector2d& s, double alpha, double dt);
double duffing_energy(const Eigen::Vector2d& s);

struct Sampler {
  enum class Mode { UniformRandom, Grid, Trajectory };
  Mode mode = Mode::UniformRandom;
  std::uint64_t seed = 0;
  // Sampling box for random mode on box spaces; defaults to the space bounds.
  std::optional<std::pair<VectorXd, VectorXd>> region;
  State start;  // trajectory mode

  static Sampler uniform(std::uint64_t seed) { return {Mode::UniformRandom, seed, std::nullopt, {}}; }
  static Sampler grid() { return {Mode::Grid, 0, std::nullopt, {}}; }
  static Sampler along(State x0) { return {Mode::Trajectory, 0, std::nullopt, std::move(x0)}; }
  std::string describe() const;
};

struct SnapshotSet {
  MatrixXd X;  // M x d
  MatrixXd Y;  // M x d, Y.row(m) = F(X.row(m)) to 2^-precision_exponent
  int precision_exponent = 1;
  Sampler sampler;
  double region_measure = 0;  // measure of the set X was drawn from
  std::vector<int> lattice;   // per-dimension node counts in grid mode

  Eigen::Index size() const { return X.rows(); }
  int dim() const { return static_cast<int>(X.cols()); }
};

SnapshotSet sample_snapshots(const DynamicalSystem& system, const Sampler& sampler, Eigen::Index M, int n);

// Lattice used by grid mode for M points, or empty if M is not a lattice size.
std::vector<int> lattice_shape(const StateSpace& space, Eigen::Index M);
// The grid-mode points for a lattice shape, in sampling order.
MatrixXd lattice_points(const StateSpace& space, const std::vector<int>& shape);

}  // namespace koopspec

#endif  // KOOPSPEC_DYNAMICS_HPP
