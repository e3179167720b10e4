#include "koopspec/rage.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

namespace koopspec {

namespace {

int rank_column(const std::vector<int>& ranks, int n) {
  for (std::size_t r = 0; r < ranks.size(); ++r)
    if (ranks[r] == n) return static_cast<int>(r);
  config_error("rage: projection rank " + std::to_string(n) + " not available");
}

// Upper-triangular R with G = R^* R.
MatrixXcd gram_root(const MatrixXcd& G) {
  Eigen::LLT<MatrixXcd> llt(hermitian_part<double>(G));
  if (llt.info() != Eigen::Success)
    numerical_error("rage: Gram matrix is not positive definite; drop dependent observables first");
  return llt.matrixU();
}

// Writes cumulative |c_k|^2 into row `row` of m (column k = rank k).
void cumulative(const VectorXcd& c, double scale, MatrixXd& m, Eigen::Index row) {
  double acc = 0;
  m(row, 0) = 0;
  for (Eigen::Index k = 0; k < c.size(); ++k) {
    acc += std::norm(c[k]);
    m(row, k + 1) = acc * scale;
  }
}

std::vector<int> all_ranks(Eigen::Index N) {
  std::vector<int> r(static_cast<std::size_t>(N) + 1);
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = static_cast<int>(k);
  return r;
}

}  // namespace

RageEstimate ProjectedNorms::estimate(int n, int L) const {
  if (L < 0 || L > horizon) config_error("rage: horizon " + std::to_string(L) + " exceeds the computed range");
  const int col = rank_column(ranks, n);
  double s = 0;
  for (int l = -L; l <= L; ++l) s += m(l + horizon, col);
  RageEstimate e;
  e.pp_mass = std::clamp(s / (2 * L + 1), 0.0, 1.0);
  e.cont_mass = 1.0 - e.pp_mass;
  e.n = n;
  e.L = L;
  e.observable_id = observable_id;
  return e;
}

double ProjectedNorms::complement(int n, int L) const {
  if (L < 0 || L > horizon) config_error("rage: horizon " + std::to_string(L) + " exceeds the computed range");
  const int col = rank_column(ranks, n);
  double s = 0;
  for (int l = -L; l <= L; ++l) s += norms[l + horizon] - m(l + horizon, col);
  return s / (2 * L + 1);
}

ProjectedNorms projected_norms_galerkin(const Triple& t, const VectorXcd& g, int horizon, const std::string& id) {
  if (horizon < 0) config_error("rage: horizon must be >= 0");
  const Eigen::Index N = t.size();
  if (g.size() != N) config_error("rage: coefficient vector has wrong length");
  const MatrixXcd R = gram_root(t.G);
  const MatrixXcd Rinv = R.triangularView<Eigen::Upper>().solve(MatrixXcd::Identity(N, N));
  const MatrixXcd K = Rinv.adjoint() * t.A * Rinv;
  VectorXcd c = R * g;
  const double norm = c.norm();
  if (!(norm > 0)) config_error("rage: observable is zero");
  c /= norm;

  ProjectedNorms p;
  p.horizon = horizon;
  p.ranks = all_ranks(N);
  p.m.resize(2 * horizon + 1, N + 1);
  p.norms.resize(2 * horizon + 1);
  p.observable_id = id;
  VectorXcd fwd = c, bwd = c;
  for (int l = 0; l <= horizon; ++l) {
    cumulative(fwd, 1.0, p.m, horizon + l);
    cumulative(bwd, 1.0, p.m, horizon - l);
    p.norms[horizon + l] = fwd.squaredNorm();
    p.norms[horizon - l] = bwd.squaredNorm();
    fwd = K * fwd;
    bwd = K.adjoint() * bwd;
  }
  return p;
}

ProjectedNorms projected_norms_orbit(const DynamicalSystem& system, const Dictionary& dict, const MatrixXd& nodes,
                                     const QuadratureWeights& w, const Observable& g, int horizon, int precision) {
  if (horizon < 0) config_error("rage: horizon must be >= 0");
  if (horizon > 0 && !system.invertible()) config_error("rage: orbit source needs an invertible map");
  const Eigen::Index M = nodes.rows(), N = dict.size();
  if (w.w.size() != M) config_error("rage: weight count does not match node count");
  const MatrixXcd psi = evaluate_dictionary(dict, nodes).values;
  const MatrixXcd wpsi = w.w.asDiagonal() * psi;
  const MatrixXcd R = gram_root(psi.adjoint() * wpsi);

  auto values = [&](const MatrixXd& P) {
    VectorXcd f(M);
    for (Eigen::Index m = 0; m < M; ++m) f[m] = g.eval(P.row(m).transpose());
    return f;
  };
  auto step = [&](MatrixXd& P, bool forward) {
    parallel_for(static_cast<std::size_t>(M), [&](std::size_t k) {
      const auto m = static_cast<Eigen::Index>(k);
      const State x = P.row(m).transpose();
      P.row(m) = (forward ? system.evaluate(x, precision) : system.evaluate_inverse(x, precision)).transpose();
    });
  };

  const VectorXcd f0 = values(nodes);
  const double g2 = (w.w.array() * f0.array().abs2()).sum();
  if (!(g2 > 0)) config_error("rage: observable " + g.label + " vanishes on the nodes");
  const double scale = 1.0 / g2;

  ProjectedNorms p;
  p.horizon = horizon;
  p.ranks = all_ranks(N);
  p.m.resize(2 * horizon + 1, N + 1);
  p.norms.resize(2 * horizon + 1);
  p.observable_id = g.label;
  p.mean = std::abs((w.w.cast<Complex>().array() * f0.array()).sum()) / w.w.sum();

  auto record = [&](const VectorXcd& f, Eigen::Index row) {
    const VectorXcd b = wpsi.adjoint() * f;
    const VectorXcd c = R.adjoint().triangularView<Eigen::Lower>().solve(b);
    cumulative(c, scale, p.m, row);
    p.norms[row] = (w.w.array() * f.array().abs2()).sum() * scale;
  };
  record(f0, horizon);
  MatrixXd fwd = nodes, bwd = nodes;
  for (int l = 1; l <= horizon; ++l) {
    step(fwd, true);
    step(bwd, false);
    record(values(fwd), horizon + l);
    record(values(bwd), horizon - l);
  }
  return p;
}

ProjectedNorms projected_norms_delay(const VectorXcd& series, const std::vector<int>& depths, int horizon,
                                     double rel_tol, const std::string& id) {
  if (depths.empty()) config_error("rage: no delay depths");
  if (horizon < 0) config_error("rage: horizon must be >= 0");
  const Eigen::Index T = series.size();
  ProjectedNorms p;
  p.horizon = horizon;
  p.ranks = depths;
  p.m.resize(2 * horizon + 1, static_cast<Eigen::Index>(depths.size()));
  p.norms = VectorXd::Ones(2 * horizon + 1);
  p.observable_id = id;
  p.mean = std::abs(series.mean());

  for (std::size_t r = 0; r < depths.size(); ++r) {
    const int d = depths[r];
    if (d < 1) config_error("rage: delay depth must be >= 1");
    if (T < 2 * static_cast<Eigen::Index>(horizon) + d)
      config_error("rage: series of length " + std::to_string(T) + " is too short for L=" + std::to_string(horizon) +
                   " and d=" + std::to_string(d));
    // Window of base times t for which every lagged and delayed sample exists.
    const Eigen::Index t0 = horizon;
    const Eigen::Index t1 = T - 1 - std::max<Eigen::Index>(horizon, d - 1);
    const Eigen::Index W = t1 - t0 + 1;
    if (W < 1) config_error("rage: series too short for the delay window");
    MatrixXcd B(W, d);
    for (int i = 0; i < d; ++i) B.col(i) = series.segment(t0 + i, W);
    Eigen::BDCSVD<MatrixXcd> svd(B, Eigen::ComputeThinU);
    const VectorXd& sv = svd.singularValues();
    if (sv.size() == 0 || !(sv[0] > 0) || !std::isfinite(sv[0])) numerical_error("degenerate series");
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv[rank] > rel_tol * sv[0]) ++rank;
    const MatrixXcd U = svd.matrixU().leftCols(rank);
    parallel_for(static_cast<std::size_t>(2 * horizon + 1), [&](std::size_t k) {
      const int l = static_cast<int>(k) - horizon;
      const auto u = series.segment(t0 + l, W);
      const double total = u.squaredNorm();
      p.m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r)) =
          total > 0 ? (U.adjoint() * u).squaredNorm() / total : 0.0;
    });
  }
  return p;
}

const char* source_name(AutocorrelationSource s) {
  switch (s) {
    case AutocorrelationSource::GalerkinPowers:
      return "galerkin-powers";
    case AutocorrelationSource::TrajectoryErgodicAverage:
      return "trajectory-ergodic-average";
    case AutocorrelationSource::Ingested:
      return "ingested";
  }
  return "?";
}

AutocorrelationSeries autocorrelation(const Triple& t, const VectorXcd& g, int horizon) {
  if (horizon < 1) config_error("autocorrelation: horizon must be >= 1");
  const Eigen::Index N = t.size();
  if (g.size() != N) config_error("autocorrelation: coefficient vector has wrong length");
  const MatrixXcd R = gram_root(t.G);
  const MatrixXcd Rinv = R.triangularView<Eigen::Upper>().solve(MatrixXcd::Identity(N, N));
  const MatrixXcd K = Rinv.adjoint() * t.A * Rinv;
  Eigen::JacobiSVD<MatrixXcd> svd(K);
  if (svd.singularValues()[0] > 1 + 1e-8)
    config_error("autocorrelation: compression has norm above 1; galerkin powers need a contraction");
  VectorXcd c = R * g;
  if (!(c.norm() > 0)) config_error("autocorrelation: observable is zero");
  c.normalize();
  AutocorrelationSeries ac;
  ac.horizon = horizon;
  ac.source = AutocorrelationSource::GalerkinPowers;
  ac.values.resize(static_cast<std::size_t>(2 * horizon + 1));
  VectorXcd v = c;
  for (int l = 0; l <= horizon; ++l) {
    const Complex val = c.dot(v);  // c^* K^l c
    ac.values[static_cast<std::size_t>(horizon + l)] = val;
    ac.values[static_cast<std::size_t>(horizon - l)] = std::conj(val);
    v = K * v;
  }
  ac.values[static_cast<std::size_t>(horizon)] = Complex(ac.values[static_cast<std::size_t>(horizon)].real(), 0.0);
  return ac;
}

AutocorrelationSeries autocorrelation(const VectorXcd& series, int horizon, AutocorrelationSource source) {
  if (horizon < 1) config_error("autocorrelation: horizon must be >= 1");
  const Eigen::Index T = series.size();
  if (horizon >= T)
    config_error("autocorrelation: horizon " + std::to_string(horizon) + " exceeds series length " +
                 std::to_string(T));
  const double c0 = series.squaredNorm() / static_cast<double>(T);
  if (!(c0 > 0)) numerical_error("degenerate series");
  AutocorrelationSeries ac;
  ac.horizon = horizon;
  ac.source = source;
  ac.values.resize(static_cast<std::size_t>(2 * horizon + 1));
  parallel_for(static_cast<std::size_t>(horizon + 1), [&](std::size_t k) {
    const auto l = static_cast<Eigen::Index>(k);
    // sum_t s_{t+l} conj(s_t)
    const Complex s = series.head(T - l).dot(series.segment(l, T - l));
    const Complex val = s / (static_cast<double>(T - l) * c0);
    ac.values[static_cast<std::size_t>(horizon) + k] = val;
    ac.values[static_cast<std::size_t>(horizon) - k] = std::conj(val);
  });
  ac.values[static_cast<std::size_t>(horizon)] = 1.0;
  return ac;
}

std::vector<double> atom_masses(const AutocorrelationSeries& ac, const std::vector<double>& thetas, int L) {
  if (L < 0 || L > ac.horizon) config_error("atom_masses: L exceeds the autocorrelation horizon");
  std::vector<double> out(thetas.size());
  parallel_for(thetas.size(), [&](std::size_t k) {
    double s = ac.at(0).real();
    for (int l = 1; l <= L; ++l) {
      const Complex e = std::polar(1.0, -l * thetas[k]);
      s += (e * ac.at(l) + std::conj(e) * ac.at(-l)).real();
    }
    out[k] = std::max(0.0, s / (2 * L + 1));
  });
  return out;
}

std::vector<Atom> detect_atoms(const AutocorrelationSeries& ac, int L, double threshold) {
  int depth = 1;
  while ((std::int64_t{1} << depth) < 4 * (2 * static_cast<std::int64_t>(L) + 1)) ++depth;
  const std::size_t K = std::size_t{1} << depth;
  std::vector<double> thetas(K);
  for (std::size_t k = 0; k < K; ++k) thetas[k] = -kPi + kTwoPi * (static_cast<double>(k) + 0.5) / K;
  const std::vector<double> mass = atom_masses(ac, thetas, L);

  std::vector<Atom> atoms;
  std::size_t start = 0;
  while (start < K && mass[start] > threshold) ++start;  // begin outside a run so wrap-around runs stay whole
  if (start == K) {
    const auto top = std::max_element(mass.begin(), mass.end()) - mass.begin();
    return {{thetas[static_cast<std::size_t>(top)], mass[static_cast<std::size_t>(top)]}};
  }
  for (std::size_t s = 0; s < K; ++s) {
    const std::size_t k = (start + s) % K;
    if (mass[k] <= threshold) continue;
    Atom a{thetas[k], mass[k]};
    std::size_t j = s;
    while (j < K && mass[(start + j) % K] > threshold) {
      const std::size_t i = (start + j) % K;
      if (mass[i] > a.mass) a = {thetas[i], mass[i]};
      ++j;
    }
    atoms.push_back(a);
    s = j;
  }
  std::sort(atoms.begin(), atoms.end(), [](const Atom& x, const Atom& y) { return x.theta < y.theta; });
  return atoms;
}

WeakMixingReport weak_mixing_decide(const std::vector<ProjectedNorms>& observables, const std::vector<int>& ranks,
                                    const std::vector<int>& horizons, double lower, double upper) {
  if (observables.empty()) config_error("weak_mixing: empty observable list");
  if (ranks.empty() || horizons.empty()) config_error("weak_mixing: empty schedule");
  if (!(lower >= 0 && upper > lower)) config_error("weak_mixing: need 0 <= lower < upper");
  for (std::size_t j = 1; j < horizons.size(); ++j)
    if (horizons[j] <= horizons[j - 1]) config_error("weak_mixing: inner schedule must be increasing");
  for (const ProjectedNorms& p : observables)
    if (!std::isnan(p.mean) && p.mean > 1e-8)
      config_error("weak_mixing: observable " + p.observable_id + " is not mean-free");

  WeakMixingReport rep;
  rep.ranks = ranks;
  rep.horizons = horizons;
  rep.a.resize(static_cast<Eigen::Index>(ranks.size()), static_cast<Eigen::Index>(horizons.size()));
  // [0, lower] and [upper, inf) as limit_stabilize intervals.
  const double slack = 2.0 * (upper - lower) / 3.0;
  const double eps = lower + slack;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    std::vector<double> history;
    for (std::size_t j = 0; j < horizons.size(); ++j) {
      double best = 0;
      for (const ProjectedNorms& p : observables) best = std::max(best, p.estimate(ranks[i], horizons[j]).pp_mass);
      rep.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = best;
      history.push_back(best);
    }
    const Decision d = limit_stabilize(history, eps, slack);
    rep.stabilized.push_back(d);
    rep.outer.push_back(d == Decision::Below ? 0 : 1);
  }
  rep.decision = rep.outer.back();
  return rep;
}

}  // namespace koopspec
