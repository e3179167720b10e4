#ifndef KOOPSPEC_GALERKIN_HPP
#define KOOPSPEC_GALERKIN_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "koopspec/common.hpp"
#include "koopspec/dictionary.hpp"
#include "koopspec/dynamics.hpp"

namespace koopspec {

enum class QuadratureRule { MonteCarlo, Trapezoid, ExactPartition };

const char* rule_name(QuadratureRule rule);
QuadratureRule parse_rule(const std::string& name);

struct QuadratureWeights {
  VectorXd w;
  QuadratureRule rule = QuadratureRule::MonteCarlo;
  std::optional<double> certified_error;
  bool heuristic = false;  // certificate used quadrature estimates of its own inputs
  double total() const { return w.sum(); }
};

// montecarlo: region_measure / M each (region_measure defaults to the space
// measure). trapezoid: points must be the grid-mode lattice for their count.
QuadratureWeights quadrature_weights(const StateSpace& space, const MatrixXd& points, QuadratureRule rule,
                                     std::optional<double> region_measure = std::nullopt);

// Exact integration of integrands constant on each cell: every point must lie
// in a cell, and the cell length is split evenly among its points. Cells that
// receive no point make the rule inexact and are rejected.
QuadratureWeights partition_weights(const std::vector<Interval>& cells, const MatrixXd& points);

// Fills w.certified_error with [a_j(a_F(eta)) + a_j(eta)] * int |g_i|
// maximized over the dictionary, for linear moduli a_j(t) = L_j t and
// a_F(t) = L_F t. The integrals of |g_i| come from the same quadrature, so the
// certificate is marked heuristic for RBF dictionaries. Left empty when some
// slope is unknown.
void certify_quadrature(QuadratureWeights& w, const Dictionary& dict, std::optional<double> map_lipschitz,
                        const EvaluationMatrix& psi_x, double eta);

template <typename Real>
struct GalerkinTriple {
  CMatrix<Real> G;  // <g_j, g_i>
  CMatrix<Real> A;  // <K g_j, g_i>
  CMatrix<Real> L;  // <K g_j, K g_i>
  bool basis_is_orthonormal = false;
  bool measure_preserving = false;  // declared by the system, carried for the certificate
  std::optional<Real> delta_bound;  // bound on ||K||
  // Coordinates: new basis vectors are the columns of `transform` in the
  // original dictionary. Identity until orthonormalize runs.
  CMatrix<Real> transform;
  // Optional square-root data: R_X^* R_X = G, R_X^* R_Y = A, R_Y^* R_Y = L.
  CMatrix<Real> factor_x, factor_y;
  std::string provenance;

  Eigen::Index size() const { return G.rows(); }
  bool has_factor() const { return factor_x.size() > 0; }
};

using Triple = GalerkinTriple<double>;

template <typename Real>
CMatrix<Real> hermitian_part(const CMatrix<Real>& H) {
  return (H + H.adjoint()) / Real(2);
}

// G = PsiX^* W PsiX, A = PsiX^* W PsiY, L = PsiY^* W PsiY. Rows are summed in
// fixed blocks of 256 combined by a fixed pairwise tree, so the result does not
// depend on the worker count. keep_factor stores the R factor of W^(1/2)[PsiX PsiY].
Triple assemble(const EvaluationMatrix& psi_x, const EvaluationMatrix& psi_y, const QuadratureWeights& w,
                bool keep_factor = true);

template <typename Real>
GalerkinTriple<Real> orthonormalize(const GalerkinTriple<Real>& t, Real tol = Real(1e-12)) {
  using CM = CMatrix<Real>;
  if (!(tol > 0)) config_error("orthonormalize: tol must be > 0");
  const Eigen::Index N = t.size();
  Eigen::SelfAdjointEigenSolver<CM> es(hermitian_part(t.G));
  if (es.info() != Eigen::Success) numerical_error("orthonormalize: Gram eigensolver failed");
  const auto& lam = es.eigenvalues();
  const Real top = lam.maxCoeff();
  if (!(top > 0)) numerical_error("orthonormalize: Gram matrix is numerically zero");
  Eigen::Index first = 0;
  while (first < N && lam[first] < tol * top) ++first;
  const Eigen::Index r = N - first;

  CM T;
  const CM V = es.eigenvectors().rightCols(r);
  const Eigen::Matrix<Real, Eigen::Dynamic, 1> s = lam.tail(r).cwiseSqrt().cwiseInverse();
  if (r == N) {
    // Symmetric form keeps an already orthonormal basis (and its ordering) in place.
    T = V * s.asDiagonal() * V.adjoint();
  } else {
    T = V * s.asDiagonal();
  }

  GalerkinTriple<Real> out;
  out.G = hermitian_part<Real>(T.adjoint() * t.G * T);
  out.A = T.adjoint() * t.A * T;
  out.L = hermitian_part<Real>(T.adjoint() * t.L * T);
  out.basis_is_orthonormal = true;
  out.measure_preserving = t.measure_preserving;
  out.delta_bound = t.delta_bound;
  out.transform = (t.transform.size() > 0 ? t.transform : CM::Identity(N, N)) * T;
  if (t.has_factor()) {
    out.factor_x = t.factor_x * T;
    out.factor_y = t.factor_y * T;
  }
  out.provenance = t.provenance;
  return out;
}

// K = G^+ A; on an orthonormal triple this is A itself.
template <typename Real>
CMatrix<Real> edmd_matrix(const GalerkinTriple<Real>& t, Real tol = Real(1e-12)) {
  if (t.basis_is_orthonormal) return t.A;
  using CM = CMatrix<Real>;
  Eigen::SelfAdjointEigenSolver<CM> es(hermitian_part(t.G));
  if (es.info() != Eigen::Success) numerical_error("edmd_matrix: Gram eigensolver failed");
  const auto& lam = es.eigenvalues();
  const Real top = lam.maxCoeff();
  Eigen::Matrix<Real, Eigen::Dynamic, 1> inv = Eigen::Matrix<Real, Eigen::Dynamic, 1>::Zero(lam.size());
  for (Eigen::Index k = 0; k < lam.size(); ++k)
    if (lam[k] >= tol * top) inv[k] = Real(1) / lam[k];
  const CM& V = es.eigenvectors();
  return V * inv.asDiagonal() * V.adjoint() * t.A;
}

// The triple of the sub-dictionary formed by `indices`.
template <typename Real>
GalerkinTriple<Real> restrict_triple(const GalerkinTriple<Real>& t, const std::vector<Eigen::Index>& indices) {
  const Eigen::Index n = static_cast<Eigen::Index>(indices.size());
  if (n == 0) config_error("restrict_triple: empty index set");
  for (Eigen::Index i : indices)
    if (i < 0 || i >= t.size()) config_error("restrict_triple: index out of range");
  GalerkinTriple<Real> out;
  out.G = t.G(indices, indices);
  out.A = t.A(indices, indices);
  out.L = t.L(indices, indices);
  out.basis_is_orthonormal = t.basis_is_orthonormal;
  out.measure_preserving = t.measure_preserving;
  out.delta_bound = t.delta_bound;
  if (t.transform.size() > 0) out.transform = t.transform(Eigen::all, indices);
  if (t.has_factor()) {
    out.factor_x = t.factor_x(Eigen::all, indices);
    out.factor_y = t.factor_y(Eigen::all, indices);
  }
  out.provenance = t.provenance;
  return out;
}

// Leading n x n section of the triple.
template <typename Real>
GalerkinTriple<Real> leading_section(const GalerkinTriple<Real>& t, Eigen::Index n) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return restrict_triple(t, idx);
}

struct TripleChecks {
  double hermitian_error_g = 0, hermitian_error_l = 0;
  double min_eig_g = 0, min_eig_l = 0;  // relative to the largest eigenvalue
  double orthonormal_error = 0;         // ||G - I||_max
};
TripleChecks check_triple(const Triple& t);

// Cache file: u64 N, u64 flags, then G, A, L row-major complex doubles, all
// little-endian. Then, by flag: delta_bound as one double; the factor as u64
// rows plus R_X, R_Y. Last comes the transform (u64 rows, then data). The
// provenance string goes to `path + ".txt"`. Writes are atomic.
void write_triple(const std::string& path, const Triple& t);
Triple read_triple(const std::string& path);

}  // namespace koopspec

#endif  // KOOPSPEC_GALERKIN_HPP
