#ifndef KOOPSPEC_SCIDEMO_HPP
#define KOOPSPEC_SCIDEMO_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "koopspec/common.hpp"
#include "koopspec/dictionary.hpp"
#include "koopspec/dynamics.hpp"
#include "koopspec/galerkin.hpp"
#include "koopspec/spectral.hpp"

namespace koopspec {

// ---------------------------------------------------------------------------
// interval exchange with geometric partition
// ---------------------------------------------------------------------------

// Cells S_n, n in Z, with |S_{n+1}| = r(n) |S_n| for n >= 0 and the mirror
// |S_{-n}| = |S_{n-1}|, scaled so each half of [0,1] has length 1/2. Schedule
// entry (r_k, N_k) sets r(n) = r_k for N_{k-1} <= n < N_k; the last ratio is
// used forever (its N is ignored) and is the limit ratio.
struct IemSpec {
  std::vector<std::pair<double, int>> ratio_schedule{{0.5, 0}};
  int truncation_depth = 20;

  double limit_ratio() const { return ratio_schedule.back().first; }
};

struct IemOracle {
  DynamicalSystem system;
  Dictionary dictionary;                  // normalized indicators of S_{-k}..S_k
  double inner_radius = 0, outer_radius = 0;  // sqrt(alpha), 1/sqrt(alpha)
  int depth = 0;
  std::vector<double> lengths{};        // |S_n| for n = -k-1..k+1 as realized by the breakpoints
  std::vector<Interval> quadrature_cells{};  // tails and S_{-k-1}..S_k
  MatrixXd nodes{};                     // one midpoint per quadrature cell
  double delta = 0;                     // max(sup a, sup 1/a) - 1 over the pieces

  double length(int n) const { return lengths[static_cast<std::size_t>(n + depth + 1)]; }
  double delta_bound() const { return std::sqrt(1.0 + delta); }
  // Weighted shift on the dictionary from the realized cell lengths.
  Triple closed_form() const;
  // Exact-partition assembly.
  Triple assembled() const;
  // Coefficients of sum z^n chi_{S_n} over the dictionary.
  VectorXcd eigenfunction(Complex z) const;
};

IemOracle build_iem(const IemSpec& spec);

// ---------------------------------------------------------------------------
// skew products (x, y) -> (x, y + f(x)) on the torus
// ---------------------------------------------------------------------------

struct Plateau {
  double a = -2.0, b = -1.0;  // inside (-pi, 0)
  double value = 1.0;         // f on [a, b]
};

struct SkewSpec {
  enum class Kind { Smooth, Linear, Custom };
  Kind kind = Kind::Smooth;
  std::optional<Plateau> plateau;  // Smooth only
  double join_width = 0.1;         // bump spline width at each ramp end
  std::function<double(double)> custom;  // Custom only, f on [-pi, pi]
};

struct SkewOracle {
  DynamicalSystem system;
  std::function<double(double)> f;
  std::optional<Plateau> plateau;
  double max_slope = 0;
  double lipschitz_forward = 0, lipschitz_inverse = 0;
  bool in_omega_p = false;  // both constants <= 2 on the check grid

  // {e^{ijc}} for a plateau, nothing otherwise.
  std::vector<Complex> predicted_atoms(int j) const;
  // chi_[a,b)(x) e^{ijy}, normalized on the torus.
  Observable plateau_observable(int j) const;
  // [plateau indicator if any, then x-Fourier modes up to maxfreq] times e^{ijy}.
  Dictionary sector_dictionary(int maxfreq, int j) const;
};

// Rejects an f that breaks f(-pi) = 0, f(0) = pi, symmetry or monotonicity
// on [-pi, 0] by more than 1e-9 on a 1000-point grid.
SkewOracle build_skew(const SkewSpec& spec);

// ---------------------------------------------------------------------------
// shift operators from 0/1 matrices
// ---------------------------------------------------------------------------

struct ColumnTail {
  bool infinite = true;
  std::int64_t max_gap = 1;   // infinite: every max_gap consecutive rows hold a 1
  std::int64_t last_one = 0;  // finite: no 1 below this row
};

struct ZeroOnePattern {
  std::function<int(std::int64_t, std::int64_t)> generator;  // a_{i,j}, i, j >= 1
  ColumnTail default_tail;
  std::map<std::int64_t, ColumnTail> exceptions;

  int at(std::int64_t i, std::int64_t j) const;
  const ColumnTail& tail(std::int64_t j) const;
};

// Checks the declarations against the generator on rows and columns 1..window.
void audit_pattern(const ZeroOnePattern& p, std::int64_t window = 100);

// 1 iff all but finitely many columns hold infinitely many ones.
int q_oracle(const ZeroOnePattern& p, std::int64_t window = 100);

// c_i = 1 for |i| <= j, a_{|i|-j, j} otherwise.
int shift_sequence(const ZeroOnePattern& p, std::int64_t j, std::int64_t i);

// [C]_{k,l} = 1 iff k < l, c_k = c_l = 1 and no index between them has c = 1.
MatrixXd shift_matrix(const std::vector<int>& c);

// T x T section over indices i = -floor(T/2) .. T - 1 - floor(T/2).
MatrixXd shift_operator(const ZeroOnePattern& p, std::int64_t j, std::int64_t T);

// Rows for the T central indices widened by `margin` on each side, columns
// for the T central indices; its smallest singular value after subtracting
// z on the embedded diagonal bounds the operator from below in the limit.
MatrixXd shift_section(const ZeroOnePattern& p, std::int64_t j, std::int64_t T, std::int64_t margin, double z);

// ---------------------------------------------------------------------------
// ergodicity of circle rotations
// ---------------------------------------------------------------------------

// Stern-Brocot order: 0/1, 1/1, then each level of mediants left to right.
std::vector<std::pair<std::int64_t, std::int64_t>> stern_brocot(std::size_t count);
std::size_t stern_brocot_index(std::int64_t p, std::int64_t q);  // 1-based

struct TowerResult {
  int decision = 1;
  double gamma_hat = 0;
  double min_distance = 0;
  std::pair<std::int64_t, std::int64_t> nearest{0, 1};
};

TowerResult ergodicity_tower(const DynamicalSystem& rotation, std::int64_t n1, std::size_t n2);

// ---------------------------------------------------------------------------
// doubling map
// ---------------------------------------------------------------------------

struct DoublingReport {
  int maxfreq = 0;
  int nodes = 0;
  SpectralResult full;        // EDMD on the whole dictionary
  SpectralResult nontrivial;  // EDMD on span{1}^perp
  std::vector<Complex> probes;
  std::vector<double> probe_residuals;
  int longest_chain = 0;  // floor(log2(maxfreq)) + 1
  double log2_maxfreq = 0;

  std::string to_text() const;
};

DoublingReport doubling_edmd_report(int maxfreq);

}  // namespace koopspec

#endif  // KOOPSPEC_SCIDEMO_HPP
