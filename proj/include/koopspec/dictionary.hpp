#ifndef KOOPSPEC_DICTIONARY_HPP
#define KOOPSPEC_DICTIONARY_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "koopspec/common.hpp"
#include "koopspec/dynamics.hpp"

namespace koopspec {

struct Observable {
  std::function<Complex(const State&)> eval;
  std::optional<double> lipschitz;  // slope of a linear modulus of continuity
  std::string label;
};

enum class DictionaryKind { Fourier, Rbf, Indicator, DiskFourier, Sector, Custom };

// Half-open interval [lo, hi).
struct Interval {
  double lo;
  double hi;
  double length() const { return hi - lo; }
};

class Dictionary {
 public:
  Dictionary(StateSpace space, DictionaryKind kind, std::vector<Observable> observables, std::string description);

  const StateSpace& space() const { return space_; }
  DictionaryKind kind() const { return kind_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(observables_.size()); }
  const Observable& operator[](Eigen::Index j) const { return observables_[static_cast<std::size_t>(j)]; }
  const std::vector<Observable>& observables() const { return observables_; }
  const std::string& describe() const { return description_; }
  // Indicator dictionaries keep their cells for exact-partition quadrature.
  const std::vector<Interval>& cells() const { return cells_; }

  Dictionary prefix(Eigen::Index n) const;

 private:
  friend Dictionary indicator_dictionary(const std::vector<Interval>& partition);

  StateSpace space_;
  DictionaryKind kind_;
  std::vector<Observable> observables_;
  std::string description_;
  std::vector<Interval> cells_;
};

// Fourier ordering j = 0, 1, -1, 2, -2, ...
int fourier_index_to_mode(int k);
int fourier_mode_to_index(int j);

// circle: 2*maxfreq+1 modes exp(i j theta)/sqrt(2 pi).
// torus2: (2*maxfreq+1)^2 modes exp(i(j1 x + j2 y))/(2 pi), shell by shell.
// interval01: 1, sqrt(2) cos(pi k x) for k = 1..maxfreq.
Dictionary fourier_dictionary(const StateSpace& space, int maxfreq);
// Torus modes (j1, j2) in the order used by fourier_dictionary.
std::vector<std::pair<int, int>> torus_mode_order(int maxfreq);

// Disk: equal-area ring indicators times angular Fourier modes, angular
// frequency outermost. Orthonormal under Lebesgue measure.
Dictionary disk_fourier_dictionary(int maxfreq, int rings);

// exp(-shape^2 |x - c_j|^2); continuity slope shape*sqrt(2/e).
Dictionary rbf_dictionary(const MatrixXd& centers, double shape, const StateSpace& space);
VectorXd rbf_gradient(const VectorXd& center, double shape, const VectorXd& x);

// chi_S / sqrt(|S|) for pairwise disjoint [lo, hi) inside [0, 1].
Dictionary indicator_dictionary(const std::vector<Interval>& partition);

// h_k(x) exp(i j y)/sqrt(2 pi) on the torus, for a circle dictionary h.
Dictionary sector_dictionary(const Dictionary& circle_dict, int j);

// chi_[lo,hi)(theta) / sqrt(hi - lo) on the circle.
Observable circle_indicator(double lo, double hi);

struct EvaluationMatrix {
  enum class Side { X, Y };
  MatrixXcd values;  // M x N, values(m, j) = g_j(point_m)
  Side side = Side::X;
};

EvaluationMatrix evaluate_dictionary(const Dictionary& dict, const MatrixXd& points,
                                     EvaluationMatrix::Side side = EvaluationMatrix::Side::X);

struct KMeansResult {
  MatrixXd centers;             // k x d
  std::vector<int> assignment;  // size M
  std::vector<double> objective;  // after each Lloyd update
  int iterations = 0;
};

// Lloyd iterations from seeded k-means++. An empty cluster is re-seeded at
// the point farthest from its current center.
KMeansResult kmeans(const MatrixXd& points, int k, std::uint64_t seed, int max_iters);
inline MatrixXd kmeans_centers(const MatrixXd& points, int k, std::uint64_t seed, int max_iters) {
  return kmeans(points, k, seed, max_iters).centers;
}

}  // namespace koopspec

#endif  // KOOPSPEC_DICTIONARY_HPP
