#ifndef KOOPSPEC_RAGE_HPP
#define KOOPSPEC_RAGE_HPP

#include <limits>
#include <string>
#include <vector>

#include "koopspec/common.hpp"
#include "koopspec/dictionary.hpp"
#include "koopspec/dynamics.hpp"
#include "koopspec/galerkin.hpp"
#include "koopspec/spectral.hpp"

namespace koopspec {

struct RageEstimate {
  double pp_mass = 0;
  double cont_mass = 0;
  int n = 0;  // projection rank
  int L = 0;  // horizon
  std::string observable_id;
};

// m(l + horizon, r) = ||P_{ranks[r]} K^l g||^2 for |l| <= horizon and unit g.
// The Galerkin and orbit sources divide by ||g||^2 and keep ||K^l g||^2 in
// `norms`; the delay source divides each lag by its own window norm, since
// those drift with the window, and reports norms of 1.
struct ProjectedNorms {
  int horizon = 0;
  std::vector<int> ranks;
  MatrixXd m;
  VectorXd norms;  // ||K^l g||^2 / ||g||^2 before normalization
  double mean = std::numeric_limits<double>::quiet_NaN();  // integral of g / measure, when known
  std::string observable_id;

  RageEstimate estimate(int n, int L) const;
  // (1/(2L+1)) sum ||(I - P_n) K^l g||^2, summed directly from the norms.
  double complement(int n, int L) const;
};

// Powers of the compression on the triple's span. Coordinates are made
// orthonormal by Cholesky of G so that rank-n projections stay on the first n
// dictionary elements; negative powers use the adjoint. g holds coefficients
// in the triple's basis.
ProjectedNorms projected_norms_galerkin(const Triple& t, const VectorXcd& g, int horizon,
                                        const std::string& id = "g");

// Exact orbit: g is evaluated along F^l (F^-l for negative lags) of the
// quadrature nodes and projected onto the dictionary in the discrete inner
// product of the nodes.
ProjectedNorms projected_norms_orbit(const DynamicalSystem& system, const Dictionary& dict, const MatrixXd& nodes,
                                     const QuadratureWeights& w, const Observable& g, int horizon, int precision = 30);

// Delay embedding of a scalar series: for each depth d in `depths`, the
// projection onto the span of the first d shifts of the series, through a
// thin SVD keeping singular values above rel_tol * largest.
ProjectedNorms projected_norms_delay(const VectorXcd& series, const std::vector<int>& depths, int horizon,
                                     double rel_tol = 1e-8, const std::string& id = "series");

enum class AutocorrelationSource { GalerkinPowers, TrajectoryErgodicAverage, Ingested };
const char* source_name(AutocorrelationSource s);

struct AutocorrelationSeries {
  int horizon = 0;
  std::vector<Complex> values;  // values[l + horizon] = <K^l g, g>, g normalized
  AutocorrelationSource source = AutocorrelationSource::GalerkinPowers;

  Complex at(int l) const { return values[static_cast<std::size_t>(l + horizon)]; }
};

AutocorrelationSeries autocorrelation(const Triple& t, const VectorXcd& g, int horizon);
// Ergodic averages g(x_{t+l}) conj(g(x_t)) over the series, normalized by the lag-0 value.
AutocorrelationSeries autocorrelation(const VectorXcd& series, int horizon,
                                      AutocorrelationSource source = AutocorrelationSource::TrajectoryErgodicAverage);

// Re[(1/(2L+1)) sum_l e^{-i l theta} values[l]], clamped at 0.
std::vector<double> atom_masses(const AutocorrelationSeries& ac, const std::vector<double>& thetas, int L);

struct Atom {
  double theta = 0;
  double mass = 0;
};

// Masses at the midpoints of a dyadic partition of [-pi, pi) fine enough to
// resolve the 1/(2L+1) kernel width; runs above threshold are merged
// (cyclically) and reported by their peak.
std::vector<Atom> detect_atoms(const AutocorrelationSeries& ac, int L, double threshold);

struct WeakMixingReport {
  std::vector<int> ranks;     // outer index n2
  std::vector<int> horizons;  // inner schedule n1
  MatrixXd a;                 // a(i, j) = max over observables of pp(ranks[i], horizons[j])
  std::vector<Decision> stabilized;
  std::vector<int> outer;  // decision per rank
  int decision = 0;        // at the largest rank
};

// Separated intervals [0, lower] and [upper, inf); a rank whose history never
// settles in either counts as 1.
WeakMixingReport weak_mixing_decide(const std::vector<ProjectedNorms>& observables, const std::vector<int>& ranks,
                                    const std::vector<int>& horizons, double lower = 0.25, double upper = 0.5);

}  // namespace koopspec

#endif  // KOOPSPEC_RAGE_HPP
