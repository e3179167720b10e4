#ifndef KOOPSPEC_SPECTRAL_HPP
#define KOOPSPEC_SPECTRAL_HPP

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "koopspec/common.hpp"
#include "koopspec/galerkin.hpp"

namespace koopspec {

// Below this value the eigenvalue route loses digits to the square root, so
// the residual is recomputed as a singular value of the stored factor.
inline constexpr double kResidualRefine = 1e-3;

template <typename Real>
CMatrix<Real> residual_matrix(std::complex<Real> z, const GalerkinTriple<Real>& t) {
  CMatrix<Real> H = t.L - std::conj(z) * t.A - z * t.A.adjoint();
  H.diagonal().array() += std::norm(z);
  return hermitian_part(H);
}

// min ||(K - z) g|| over unit g in the dictionary span.
template <typename Real>
Real residual(std::complex<Real> z, const GalerkinTriple<Real>& t) {
  if (!t.basis_is_orthonormal) config_error("residual: triple must be orthonormalized first");
  Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(residual_matrix(z, t), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) numerical_error("residual: eigensolver failed");
  Real h = std::sqrt(std::max(Real(0), es.eigenvalues()[0]));
  if (h < Real(kResidualRefine) && t.has_factor() && t.factor_x.rows() >= t.factor_x.cols()) {
    const CMatrix<Real> S = t.factor_y - z * t.factor_x;
    Eigen::JacobiSVD<CMatrix<Real>> svd(S);
    h = svd.singularValues()[svd.singularValues().size() - 1];
  }
  return h;
}

// Unit coefficient vector attaining the residual (orthonormal coordinates).
template <typename Real>
CVector<Real> pseudoeigenvector(std::complex<Real> z, const GalerkinTriple<Real>& t) {
  if (!t.basis_is_orthonormal) config_error("pseudoeigenvector: triple must be orthonormalized first");
  if (t.has_factor() && t.factor_x.rows() >= t.factor_x.cols()) {
    const CMatrix<Real> S = t.factor_y - z * t.factor_x;
    Eigen::JacobiSVD<CMatrix<Real>> svd(S, Eigen::ComputeThinV);
    return svd.matrixV().col(svd.matrixV().cols() - 1);
  }
  Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(residual_matrix(z, t));
  return es.eigenvectors().col(0);
}

// ||(K - z) g|| / ||g|| for g with coefficients c in the triple's basis;
// valid for any triple since it uses G.
template <typename Real>
Real vector_residual(const CVector<Real>& c, std::complex<Real> z, const GalerkinTriple<Real>& t) {
  const std::complex<Real> num = c.dot(t.L * c) - std::conj(z) * c.dot(t.A * c) - z * c.dot(t.A.adjoint() * c) +
                                 std::norm(z) * c.dot(t.G * c);
  const Real den = c.dot(t.G * c).real();
  if (!(den > 0)) config_error("vector_residual: zero vector");
  return std::sqrt(std::max(Real(0), num.real()) / den);
}

enum class ResultMode { Sigma1Certified, Sigma2Limit, EdmdRaw };
const char* mode_name(ResultMode mode);
ResultMode parse_mode(const std::string& name);

struct SpectralResult {
  std::vector<Complex> points;
  std::vector<double> residuals;
  ResultMode mode = ResultMode::EdmdRaw;
  std::optional<double> error_bound;
  std::string flag;  // e.g. "insufficient dictionary"

  std::size_t size() const { return points.size(); }
};

// Grid (spacing)(Z + iZ) intersected with the closed ball of `radius`, and
// with `region` = {re_lo, re_hi, im_lo, im_hi} when given.
struct GridSpec {
  double spacing = 0.05;
  double radius = 2.0;
  std::optional<std::array<double, 4>> region;

  void validate() const;
};

// Residuals on the grid, stored row-major over (im index, re index). Points
// outside the ball or region hold NaN.
struct ResidualField {
  double spacing = 0;
  int re0 = 0, im0 = 0;  // integer coordinates of entry (0, 0)
  int nre = 0, nim = 0;
  VectorXd values;

  Complex point(int a, int b) const { return {spacing * (re0 + a), spacing * (im0 + b)}; }
  double at(int a, int b) const { return values[static_cast<Eigen::Index>(b) * nre + a]; }
  bool valid(int a, int b) const { return a >= 0 && b >= 0 && a < nre && b < nim && !std::isnan(at(a, b)); }
};

ResidualField residual_field(const Triple& t, const GridSpec& grid);

// Grid points with residual + spacing < eps.
SpectralResult pseudospectrum_grid(const Triple& t, const GridSpec& grid, double eps);
SpectralResult pseudospectrum_grid(const ResidualField& field, double eps);

struct Sigma1Options {
  double median_multiplier = 0.5;
  std::optional<double> threshold_cap;
};

// Local minimizers of the residual (<= every valid 8-neighbour) below
// multiplier * median grid residual. Needs a measure-preserving triple.
SpectralResult spectrum_sigma1(const Triple& t, const GridSpec& grid, const Sigma1Options& opt = {});
SpectralResult spectrum_sigma1(const ResidualField& field, bool measure_preserving, const Sigma1Options& opt = {});

enum class Decision { Below, Above, Undecided };
const char* decision_name(Decision d);

// The last entry inside [0, eps - slack] or [eps + slack/2, inf) decides.
Decision limit_stabilize(const std::vector<double>& history, double eps, double slack);

// Per grid point, limit_stabilize over the residual history of a nested
// sequence of triples; keeps the points decided Below. slack defaults to the
// grid spacing.
SpectralResult spectrum_sigma2(const std::vector<Triple>& triples, const GridSpec& grid, double eps,
                               std::optional<double> slack = std::nullopt);

// Eigenvalues of a general complex matrix. Entries below rel_zero * ||K||
// are treated as structural zeros; the matrix is permuted to block
// triangular form along strongly connected components and each diagonal
// block is solved separately.
VectorXcd balanced_eigenvalues(const MatrixXcd& K, double rel_zero = 1e-13);

// Eigenvalues of the EDMD matrix with their residuals, by descending
// modulus then ascending argument.
SpectralResult edmd_eigenvalues(const Triple& t);

void sort_spectrum(SpectralResult& r);

double hausdorff_distance(const std::vector<Complex>& a, const std::vector<Complex>& b);

}  // namespace koopspec

#endif  // KOOPSPEC_SPECTRAL_HPP
