#include "doctest.h"

#include <cmath>

#include "koopspec/dynamics.hpp"

using namespace koopspec;

namespace {
State s1(double v) { return State::Constant(1, v); }
State s2(double a, double b) {
  State x(2);
  x << a, b;
  return x;
}
}  // namespace

TEST_CASE("rotation and doubling evaluate in closed form") {
  const auto rot = make_system(Rotation{0.25});
  CHECK(rot.evaluate(s1(0.0), 30)[0] == doctest::Approx(kPi / 2).epsilon(1e-15));
  const auto half = make_system(Rotation{0.5});
  CHECK(std::abs(std::abs(half.evaluate(s1(0.0), 30)[0]) - kPi) <= std::ldexp(1.0, -30));
  const auto dbl = make_system(Doubling{});
  CHECK(dbl.evaluate(s1(1.0), 30)[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("duffing equilibria are fixed by one integrator step") {
  for (double alpha : {0.0, 0.3}) {
    const auto duf = make_system(Duffing{alpha, 0.3});
    for (double x0 : {-1.0, 1.0}) {
      const State y = duf.evaluate(s2(x0, 0.0), 20);
      CHECK(std::abs(y[0] - x0) <= 1e-10);
      CHECK(std::abs(y[1]) <= 1e-10);
    }
  }
}

TEST_CASE("discrete map answers exactly and refuses other points") {
  const auto d = make_system(DiscreteMap{{{1, 3}, {3, 1}}});
  CHECK(d.evaluate(s1(1.0), 5)[0] == 3.0);
  CHECK(d.evaluate(s1(1.0), 40)[0] == 3.0);
  CHECK_THROWS_AS(d.evaluate(s1(2.0), 5), Error);
}

TEST_CASE("external tables only answer queried points") {
  ExternalTable t{StateSpace::interval01(), {{s1(0.25), s1(0.5)}}};
  const auto sys = make_system(t);
  CHECK(sys.evaluate(s1(0.25), 10)[0] == 0.5);
  try {
    sys.evaluate(s1(0.2500001), 10);
    FAIL("expected a domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
  }
}

TEST_CASE("precision beyond the ceiling saturates") {
  const auto rot = make_system(Rotation{0.1});
  CHECK_FALSE(rot.query(s1(0.0), 48).saturated);
  CHECK(rot.query(s1(0.0), 49).saturated);
  CHECK_THROWS_AS(rot.query(s1(0.0), 0), Error);
}

TEST_CASE("parameter validation names the parameter") {
  try {
    make_system(Arnold{0.1, 7.0});
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("epsilon") != std::string::npos);
  }
  CHECK_THROWS_AS(make_system(Duffing{0.0, -1.0}), Error);
  CHECK_THROWS_AS(make_system(PiecewiseAffine{{0.0, 0.6, 0.5, 1.0}, {0.0, 0.5, 0.6, 1.0}}), Error);
  CHECK_THROWS_AS(StateSpace::box(VectorXd::Constant(1, 1.0), VectorXd::Constant(1, 0.0)), Error);
}

TEST_CASE("states outside the space are rejected") {
  const auto duf = make_system(Duffing{0.0, 0.3});
  CHECK_THROWS_AS(duf.evaluate(s2(4.0, 0.0), 10), Error);
  const auto dbl = make_system(Doubling{});
  CHECK_THROWS_AS(dbl.evaluate(s2(0.0, 0.0), 10), Error);
}

TEST_CASE("trajectories") {
  const auto rot = make_system(Rotation{0.25});
  const auto tr = rot.trajectory(s1(0.0), 4, 30);
  REQUIRE(tr.size() == 5);
  const double want[] = {0.0, kPi / 2, -kPi, -kPi / 2, 0.0};
  for (int k = 0; k < 5; ++k) CHECK(std::abs(wrap_angle(tr[static_cast<std::size_t>(k)][0] - want[k])) <= 1e-14);

  const auto dbl = make_system(Doubling{});
  const auto td = dbl.trajectory(s1(kTwoPi / 3), 2, 30);
  CHECK(std::abs(wrap_angle(td[1][0] - 4 * kPi / 3)) <= 1e-14);
  CHECK(std::abs(wrap_angle(td[2][0] - kTwoPi / 3)) <= 1e-13);

  SUBCASE("composition matches bit for bit") {
    const auto arn = make_system(Arnold{0.37, 0.5});
    const auto ta = arn.trajectory(s1(0.3), 25, 30);
    State x = s1(0.3);
    for (int k = 0; k < 25; ++k) x = arn.evaluate(x, 30);
    CHECK(x[0] == ta.back()[0]);
  }
}

TEST_CASE("undamped duffing conserves energy along an orbit") {
  const auto duf = make_system(Duffing{0.0, 0.3});
  const auto tr = duf.trajectory(s2(0.5, 0.0), 100, 30);
  const double h0 = duffing_energy(Eigen::Vector2d(tr[0][0], tr[0][1]));
  double drift = 0;
  for (const State& s : tr) drift = std::max(drift, std::abs(duffing_energy(Eigen::Vector2d(s[0], s[1])) - h0));
  CHECK(drift <= 1e-6);
}

TEST_CASE("duffing energy drift per step stays below C dt^4") {
  // C fitted once on [-2,2]^2 at dt = 0.3 (9.88) and frozen.
  const double C = 10.0;
  for (double dt : {0.3, 0.15, 0.075}) {
    double worst = 0;
    for (int a = 0; a <= 40; ++a)
      for (int b = 0; b <= 40; ++b) {
        const Eigen::Vector2d s(-2 + 0.1 * a, -2 + 0.1 * b);
        worst = std::max(worst, std::abs(duffing_energy(duffing_rk4_step(s, 0.0, dt)) - duffing_energy(s)));
      }
    CHECK(worst <= C * std::pow(dt, 4));
  }
}

TEST_CASE("grid sampling") {
  const auto rot = make_system(Rotation{0.1});
  const auto s = sample_snapshots(rot, Sampler::grid(), 8, 30);
  for (int k = 0; k < 8; ++k) CHECK(s.X(k, 0) == doctest::Approx(kTwoPi * k / 8 - kPi).epsilon(1e-15));

  const auto dbl = make_system(Doubling{});
  const auto d = sample_snapshots(dbl, Sampler::grid(), 4, 30);
  for (int k = 0; k < 4; ++k) CHECK(std::abs(wrap_angle(d.Y(k, 0) - 2 * d.X(k, 0))) <= 1e-15);

  CHECK(lattice_shape(StateSpace::torus2(), 64) == std::vector<int>{8, 8});
  CHECK(lattice_shape(StateSpace::torus2(), 63).empty());
  CHECK_THROWS_AS(sample_snapshots(make_system(Skew{[](double) { return 0.0; }, "zero", 1.0}), Sampler::grid(), 63, 30),
                  Error);
}

TEST_CASE("random sampling is reproducible") {
  const auto duf = make_system(Duffing{0.3, 0.3});
  const auto a = sample_snapshots(duf, Sampler::uniform(7), 100, 30);
  const auto b = sample_snapshots(duf, Sampler::uniform(7), 100, 30);
  CHECK(a.X == b.X);
  CHECK(a.Y == b.Y);
  const auto c = sample_snapshots(duf, Sampler::uniform(8), 100, 30);
  CHECK(a.X != c.X);
}

TEST_CASE("sampling is independent of the thread count") {
  const auto arn = make_system(Arnold{0.2, 0.3});
  set_threads(1);
  const auto a = sample_snapshots(arn, Sampler::uniform(3), 5000, 30);
  set_threads(8);
  const auto b = sample_snapshots(arn, Sampler::uniform(3), 5000, 30);
  set_threads(1);
  CHECK(a.X == b.X);
  CHECK(a.Y == b.Y);
}

TEST_CASE("declared lipschitz bounds hold on random pairs") {
  std::vector<DynamicalSystem> systems = {make_system(Rotation{0.3}), make_system(Arnold{0.2, 0.7}),
                                          make_system(Doubling{}), make_system(DiskRotation{}),
                                          make_system(PiecewiseAffine{{0.0, 0.5, 1.0}, {0.0, 0.25, 1.0}})};
  const int n = 30;
  for (const auto& sys : systems) {
    REQUIRE(sys.lipschitz_bound());
    const double L = *sys.lipschitz_bound();
    Sampler sm = Sampler::uniform(5);
    const auto s = sample_snapshots(sys, sm, 2000, n);
    double worst = -1;
    for (Eigen::Index m = 0; m + 1 < s.size(); m += 2) {
      const double dx = sys.space().distance(s.X.row(m).transpose(), s.X.row(m + 1).transpose());
      const double dy = sys.space().distance(s.Y.row(m).transpose(), s.Y.row(m + 1).transpose());
      worst = std::max(worst, dy - L * dx - 2 * std::ldexp(1.0, -n));
    }
    CHECK(worst <= 0);
  }
}

TEST_CASE("measure preserving builtins push a uniform grid to a flat histogram") {
  const int bins = 32;
  auto histogram_ok = [&](const DynamicalSystem& sys, int coord, Eigen::Index M, Sampler sm = Sampler::grid()) {
    const auto s = sample_snapshots(sys, sm, M, 30);
    std::vector<double> h(bins, 0.0);
    for (Eigen::Index m = 0; m < s.size(); ++m) {
      int b = static_cast<int>(std::floor((s.Y(m, coord) + kPi) / kTwoPi * bins));
      h[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1;
    }
    const double expect = static_cast<double>(s.size()) / bins;
    double worst = 0;
    for (double v : h) worst = std::max(worst, std::abs(v - expect) / expect);
    return worst;
  };
  CHECK(histogram_ok(make_system(Rotation{0.123}), 0, 10000) <= 0.05);
  CHECK(histogram_ok(make_system(Doubling{}), 0, 10000) <= 0.05);
  // y + x of two lattices lands on bin edges, so sample this one at random.
  CHECK(histogram_ok(make_system(Skew{[](double x) { return x; }, "anzai", 1.7}), 1, 200000, Sampler::uniform(3)) <= 0.05);
  CHECK_FALSE(make_system(Arnold{0.1, 0.5}).measure_preserving());
  CHECK(make_system(Arnold{0.1, 0.0}).measure_preserving());
}

TEST_CASE("inverse maps undo the forward map") {
  const auto pa = make_system(PiecewiseAffine{{0.0, 0.3, 1.0}, {0.0, 0.6, 1.0}});
  for (double x : {0.0, 0.1, 0.3, 0.65, 0.999}) {
    const State y = pa.evaluate(s1(x), 30);
    CHECK(pa.evaluate_inverse(y, 30)[0] == doctest::Approx(x).epsilon(1e-14));
  }
  const auto sk = make_system(Skew{[](double x) { return std::abs(x); }, "abs", 2.0});
  const State z = sk.evaluate(s2(0.4, 3.0), 30);
  const State back = sk.evaluate_inverse(z, 30);
  CHECK(std::abs(back[0] - 0.4) <= 1e-15);
  CHECK(std::abs(wrap_angle(back[1] - 3.0)) <= 1e-14);
  CHECK_FALSE(make_system(Doubling{}).invertible());

  const auto arn = make_system(Arnold{0.17, 0.9});
  CHECK(arn.invertible());
  for (double x : {-3.1, -1.0, 0.0, 0.5, 3.1}) {
    const State back = arn.evaluate_inverse(arn.evaluate(s1(x), 30), 30);
    CHECK(std::abs(wrap_angle(back[0] - x)) <= 1e-13);
  }
  CHECK_FALSE(make_system(Arnold{0.17, 1.0}).invertible());
}

TEST_CASE("periodic coordinates are wrapped into [-pi, pi)") {
  CHECK(wrap_angle(kPi) == doctest::Approx(-kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(-kPi));
  CHECK(wrap_angle(3 * kPi + 0.5) == doctest::Approx(-kPi + 0.5));
  const auto c = StateSpace::circle();
  CHECK(c.distance(s1(-3.0), s1(3.0)) == doctest::Approx(kTwoPi - 6.0));
}
