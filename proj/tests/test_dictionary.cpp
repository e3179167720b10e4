#include "doctest.h"

#include <cmath>

#include "koopspec/dictionary.hpp"
#include "koopspec/galerkin.hpp"
#include "koopspec/random.hpp"

using namespace koopspec;

namespace {

MatrixXd column(std::initializer_list<double> v) {
  MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index k = 0;
  for (double x : v) m(k++, 0) = x;
  return m;
}

// Gram matrix by plain weighted sums, independent of the assembly code.
MatrixXcd gram(const MatrixXcd& psi, double w) { return w * psi.adjoint() * psi; }

}  // namespace

TEST_CASE("fourier dictionary sizes and values") {
  const auto c1 = fourier_dictionary(StateSpace::circle(), 1);
  CHECK(c1.size() == 3);
  const auto row = evaluate_dictionary(c1, column({0.0})).values;
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(row(0, j) - 1.0 / std::sqrt(kTwoPi)) <= 1e-15);
  CHECK(fourier_dictionary(StateSpace::torus2(), 1).size() == 9);
  CHECK(fourier_index_to_mode(0) == 0);
  CHECK(fourier_index_to_mode(1) == 1);
  CHECK(fourier_index_to_mode(2) == -1);
  CHECK(fourier_index_to_mode(3) == 2);
  for (int k = 0; k < 20; ++k) CHECK(fourier_mode_to_index(fourier_index_to_mode(k)) == k);
}

TEST_CASE("fourier dictionaries are nested") {
  for (const StateSpace& s : {StateSpace::circle(), StateSpace::torus2(), StateSpace::interval01()}) {
    const auto a = fourier_dictionary(s, 3), b = fourier_dictionary(s, 4);
    MatrixXd pts = s.dim() == 1 ? column({0.1, -2.0, 0.7}) : MatrixXd::Constant(3, 2, 0.3);
    if (s.kind() == SpaceKind::Interval01) pts = column({0.1, 0.5, 0.9});
    const auto ea = evaluate_dictionary(a, pts).values, eb = evaluate_dictionary(b, pts).values;
    CHECK((eb.leftCols(a.size()) - ea).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("trapezoid gram of circle modes is the identity") {
  for (int maxfreq : {2, 5}) {
    const auto d = fourier_dictionary(StateSpace::circle(), maxfreq);
    for (Eigen::Index M : {Eigen::Index(4 * maxfreq + 2), Eigen::Index(1024)}) {
      const MatrixXd pts = lattice_points(StateSpace::circle(), {static_cast<int>(M)});
      const MatrixXcd G = gram(evaluate_dictionary(d, pts).values, kTwoPi / static_cast<double>(M));
      CHECK((G - MatrixXcd::Identity(d.size(), d.size())).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("disk dictionary is orthonormal under a fine polar rule") {
  const auto d = disk_fourier_dictionary(2, 3);
  CHECK(d.size() == 15);
  // Midpoint rule in (r^2, theta): exact for ring indicators times modes.
  const int nr = 60, nt = 40;
  MatrixXd pts(nr * nt, 2);
  for (int a = 0; a < nr; ++a)
    for (int b = 0; b < nt; ++b) {
      const double r = std::sqrt((a + 0.5) / nr), t = -kPi + kTwoPi * (b + 0.5) / nt;
      pts.row(a * nt + b) << r * std::cos(t), r * std::sin(t);
    }
  const MatrixXcd G = gram(evaluate_dictionary(d, pts).values, kPi / (nr * nt));
  CHECK((G - MatrixXcd::Identity(15, 15)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("rbf values and gradient") {
  MatrixXd centers(2, 2);
  centers << 0.0, 0.0, 1.0, -0.5;
  const auto d = rbf_dictionary(centers, 1.0, StateSpace::box(VectorXd::Constant(2, -3), VectorXd::Constant(2, 3)));
  const auto at_centers = evaluate_dictionary(d, centers).values;
  CHECK(std::abs(at_centers(0, 0) - 1.0) <= 1e-15);
  CHECK(std::abs(at_centers(1, 1) - 1.0) <= 1e-15);
  MatrixXd p(1, 2);
  p << 1.0, 0.0;
  CHECK(std::abs(evaluate_dictionary(d, p).values(0, 0) - std::exp(-1.0)) <= 1e-15);

  const Philox4x32 rng(3);
  double worst = 0;
  for (int k = 0; k < 10; ++k) {
    VectorXd x(2), c(2);
    x << -2 + 4 * rng.uniform(k, 0), -2 + 4 * rng.uniform(k, 1);
    c << rng.uniform(k, 2), rng.uniform(k, 3);
    const double shape = 0.5 + rng.uniform(k, 4);
    const VectorXd g = rbf_gradient(c, shape, x);
    auto f = [&](const VectorXd& y) { return std::exp(-shape * shape * (y - c).squaredNorm()); };
    for (int i = 0; i < 2; ++i) {
      VectorXd e = VectorXd::Zero(2);
      e[i] = 1e-5;
      const double fd = (f(x + e) - f(x - e)) / 2e-5;
      worst = std::max(worst, std::abs(fd - g[i]));
    }
  }
  CHECK(worst <= 1e-6);
  CHECK_THROWS_AS(rbf_dictionary(centers, 0.0, StateSpace::box(VectorXd::Constant(2, -3), VectorXd::Constant(2, 3))),
                  Error);
}

TEST_CASE("indicator dictionary") {
  const auto d = indicator_dictionary({{0.0, 0.5}, {0.5, 1.0}});
  CHECK(d.size() == 2);
  const auto v = evaluate_dictionary(d, column({0.25, 0.5, 0.75})).values;
  CHECK(std::abs(v(0, 0) - std::sqrt(2.0)) <= 1e-15);
  CHECK(v(0, 1) == 0.0);
  // Half-open: 0.5 belongs to the second cell.
  CHECK(v(1, 0) == 0.0);
  CHECK(std::abs(v(1, 1) - std::sqrt(2.0)) <= 1e-15);
  for (Eigen::Index m = 0; m < v.rows(); ++m) CHECK((v.row(m).array() != 0.0).count() <= 1);

  const MatrixXd mids = column({0.25, 0.75});
  const QuadratureWeights w = partition_weights(d.cells(), mids);
  const MatrixXcd G = evaluate_dictionary(d, mids).values.adjoint() * w.w.asDiagonal() *
                      evaluate_dictionary(d, mids).values;
  CHECK((G - MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-15);

  CHECK_THROWS_AS(indicator_dictionary({{0.0, 0.6}, {0.5, 1.0}}), Error);
  CHECK_THROWS_AS(indicator_dictionary({{-0.1, 0.5}}), Error);
}

TEST_CASE("evaluation rejects points outside the space") {
  const auto d = fourier_dictionary(StateSpace::interval01(), 2);
  try {
    evaluate_dictionary(d, column({0.2, 1.5}));
    FAIL("expected a domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
  }
}

TEST_CASE("sector dictionary multiplies by the y mode") {
  const auto circle = fourier_dictionary(StateSpace::circle(), 1);
  const auto s = sector_dictionary(circle, 2);
  CHECK(s.size() == 3);
  MatrixXd p(1, 2);
  p << 0.3, 0.7;
  const auto v = evaluate_dictionary(s, p).values;
  const Complex want = std::polar(1.0 / kTwoPi, 0.3 + 2 * 0.7);  // mode +1 in x
  CHECK(std::abs(v(0, 1) - want) <= 1e-15);
}

TEST_CASE("kmeans") {
  SUBCASE("two separated clusters") {
    const MatrixXd pts = column({0, 0, 0, 0, 0, 10, 10, 10, 10, 10});
    const auto r = kmeans(pts, 2, 1, 50);
    std::vector<double> c = {r.centers(0, 0), r.centers(1, 0)};
    std::sort(c.begin(), c.end());
    CHECK(c[0] == 0.0);
    CHECK(c[1] == 10.0);
  }
  SUBCASE("k equal to M returns the points") {
    const MatrixXd pts = column({0.3, -1.0, 2.5, 7.0});
    const auto r = kmeans(pts, 4, 9, 10);
    CHECK(r.objective.back() == 0.0);
    std::vector<double> c(r.centers.data(), r.centers.data() + 4), want = {-1.0, 0.3, 2.5, 7.0};
    std::sort(c.begin(), c.end());
    CHECK(c == want);
  }
  SUBCASE("gaussian blobs") {
    const Philox4x32 rng(42);
    MatrixXd pts(100, 2);
    for (int m = 0; m < 100; ++m) {
      const auto n = rng.normal2(static_cast<std::uint64_t>(m), 0);
      pts.row(m) << (m % 2 ? 1.0 : -1.0) + 0.2 * n[0], 0.2 * n[1];
    }
    const auto r = kmeans(pts, 2, 5, 100);
    for (int k = 0; k < 2; ++k) {
      const double dist = std::min((r.centers.row(k) - Eigen::RowVector2d(1, 0)).norm(),
                                   (r.centers.row(k) - Eigen::RowVector2d(-1, 0)).norm());
      CHECK(dist <= 0.2);
    }
    for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1] + 1e-12);
  }
  SUBCASE("deterministic given the seed") {
    const Philox4x32 rng(8);
    MatrixXd pts(300, 2);
    for (int m = 0; m < 300; ++m) pts.row(m) << rng.uniform(m, 0), rng.uniform(m, 1);
    CHECK(kmeans_centers(pts, 7, 3, 40) == kmeans_centers(pts, 7, 3, 40));
  }
}
