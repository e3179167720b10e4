#include "koopspec/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace koopspec {

const char* mode_name(ResultMode mode) {
  switch (mode) {
    case ResultMode::Sigma1Certified:
      return "sigma1-certified";
    case ResultMode::Sigma2Limit:
      return "sigma2-limit";
    case ResultMode::EdmdRaw:
      return "edmd-raw";
  }
  return "?";
}

ResultMode parse_mode(const std::string& name) {
  if (name == "sigma1-certified") return ResultMode::Sigma1Certified;
  if (name == "sigma2-limit") return ResultMode::Sigma2Limit;
  if (name == "edmd-raw") return ResultMode::EdmdRaw;
  config_error("unknown result mode '" + name + "'");
}

const char* decision_name(Decision d) {
  switch (d) {
    case Decision::Below:
      return "below";
    case Decision::Above:
      return "above";
    case Decision::Undecided:
      return "undecided";
  }
  return "?";
}

void GridSpec::validate() const {
  if (!(spacing > 0) || !std::isfinite(spacing)) config_error("grid: spacing must be > 0");
  if (!(radius >= spacing) || !std::isfinite(radius)) config_error("grid: radius must be >= spacing");
  if (region) {
    const auto& r = *region;
    if (!(r[0] <= r[1] && r[2] <= r[3])) config_error("grid: region bounds are inverted");
  }
  if (radius / spacing > 5000) config_error("grid: more than 5000 points per axis");
}

ResidualField residual_field(const Triple& t, const GridSpec& grid) {
  grid.validate();
  if (!t.basis_is_orthonormal) config_error("residual_field: triple must be orthonormalized first");
  double lo_re = -grid.radius, hi_re = grid.radius, lo_im = -grid.radius, hi_im = grid.radius;
  if (grid.region) {
    lo_re = std::max(lo_re, (*grid.region)[0]);
    hi_re = std::min(hi_re, (*grid.region)[1]);
    lo_im = std::max(lo_im, (*grid.region)[2]);
    hi_im = std::min(hi_im, (*grid.region)[3]);
  }
  ResidualField f;
  f.spacing = grid.spacing;
  // Small tolerance so region edges that sit on grid lines are included.
  const double tol = 1e-9;
  f.re0 = static_cast<int>(std::ceil(lo_re / grid.spacing - tol));
  f.im0 = static_cast<int>(std::ceil(lo_im / grid.spacing - tol));
  f.nre = std::max(0, static_cast<int>(std::floor(hi_re / grid.spacing + tol)) - f.re0 + 1);
  f.nim = std::max(0, static_cast<int>(std::floor(hi_im / grid.spacing + tol)) - f.im0 + 1);
  f.values = VectorXd::Constant(static_cast<Eigen::Index>(f.nre) * f.nim, std::numeric_limits<double>::quiet_NaN());
  const double r2 = grid.radius * grid.radius * (1 + tol);
  parallel_for(static_cast<std::size_t>(f.values.size()), [&](std::size_t k) {
    const int a = static_cast<int>(k % static_cast<std::size_t>(f.nre));
    const int b = static_cast<int>(k / static_cast<std::size_t>(f.nre));
    const Complex z = f.point(a, b);
    if (std::norm(z) <= r2) f.values[static_cast<Eigen::Index>(k)] = residual(z, t);
  });
  return f;
}

SpectralResult pseudospectrum_grid(const ResidualField& field, double eps) {
  if (!(eps > field.spacing)) config_error("pseudospectrum: eps must exceed the grid spacing");
  SpectralResult r;
  r.mode = ResultMode::Sigma1Certified;
  r.error_bound = eps;
  for (int b = 0; b < field.nim; ++b)
    for (int a = 0; a < field.nre; ++a)
      if (field.valid(a, b) && field.at(a, b) + field.spacing < eps) {
        r.points.push_back(field.point(a, b));
        r.residuals.push_back(field.at(a, b));
      }
  return r;
}

SpectralResult pseudospectrum_grid(const Triple& t, const GridSpec& grid, double eps) {
  if (!(eps > grid.spacing)) config_error("pseudospectrum: eps must exceed the grid spacing");
  return pseudospectrum_grid(residual_field(t, grid), eps);
}

SpectralResult spectrum_sigma1(const ResidualField& field, bool measure_preserving, const Sigma1Options& opt) {
  if (!measure_preserving)
    config_error("spectrum_sigma1: system is not declared measure-preserving, certificate refused (use sigma2)");
  if (!(opt.median_multiplier > 0)) config_error("spectrum_sigma1: median multiplier must be > 0");
  std::vector<double> all;
  for (Eigen::Index k = 0; k < field.values.size(); ++k)
    if (!std::isnan(field.values[k])) all.push_back(field.values[k]);
  SpectralResult r;
  r.mode = ResultMode::Sigma1Certified;
  if (all.empty()) {
    r.error_bound = std::numeric_limits<double>::infinity();
    r.flag = "insufficient dictionary";
    return r;
  }
  const auto mid = all.begin() + static_cast<std::ptrdiff_t>(all.size() / 2);
  std::nth_element(all.begin(), mid, all.end());
  double median = *mid;
  if (all.size() % 2 == 0) median = 0.5 * (median + *std::max_element(all.begin(), mid));
  double threshold = opt.median_multiplier * median;
  if (opt.threshold_cap) threshold = std::min(threshold, *opt.threshold_cap);

  double worst = 0;
  for (int b = 0; b < field.nim; ++b)
    for (int a = 0; a < field.nre; ++a) {
      if (!field.valid(a, b)) continue;
      const double h = field.at(a, b);
      if (!(h <= threshold)) continue;
      bool minimum = true;
      for (int db = -1; db <= 1 && minimum; ++db)
        for (int da = -1; da <= 1; ++da) {
          if ((da == 0 && db == 0) || !field.valid(a + da, b + db)) continue;
          if (field.at(a + da, b + db) < h) {
            minimum = false;
            break;
          }
        }
      if (!minimum) continue;
      r.points.push_back(field.point(a, b));
      r.residuals.push_back(h);
      worst = std::max(worst, h);
    }
  if (r.points.empty()) {
    r.error_bound = std::numeric_limits<double>::infinity();
    r.flag = "insufficient dictionary";
  } else {
    r.error_bound = worst;
  }
  return r;
}

SpectralResult spectrum_sigma1(const Triple& t, const GridSpec& grid, const Sigma1Options& opt) {
  if (!t.measure_preserving)
    config_error("spectrum_sigma1: system is not declared measure-preserving, certificate refused (use sigma2)");
  return spectrum_sigma1(residual_field(t, grid), true, opt);
}

Decision limit_stabilize(const std::vector<double>& history, double eps, double slack) {
  if (!(slack > 0)) config_error("limit_stabilize: slack must be > 0");
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (*it >= 0 && *it <= eps - slack) return Decision::Below;
    if (*it >= eps + slack / 2) return Decision::Above;
  }
  return Decision::Undecided;
}

SpectralResult spectrum_sigma2(const std::vector<Triple>& triples, const GridSpec& grid, double eps,
                               std::optional<double> slack) {
  SpectralResult r;
  r.mode = ResultMode::Sigma2Limit;
  if (triples.size() < 2) {
    r.flag = "fewer than 2 history entries";
    return r;
  }
  const double s = slack.value_or(grid.spacing);
  std::vector<ResidualField> fields;
  fields.reserve(triples.size());
  for (const Triple& t : triples) fields.push_back(residual_field(t, grid));
  const ResidualField& f0 = fields.front();
  std::vector<double> history(triples.size());
  for (int b = 0; b < f0.nim; ++b)
    for (int a = 0; a < f0.nre; ++a) {
      if (!f0.valid(a, b)) continue;
      for (std::size_t k = 0; k < fields.size(); ++k) history[k] = fields[k].at(a, b);
      if (limit_stabilize(history, eps, s) == Decision::Below) {
        r.points.push_back(f0.point(a, b));
        r.residuals.push_back(history.back());
      }
    }
  return r;
}

namespace {

// Tarjan's algorithm; components come out in reverse topological order.
std::vector<std::vector<Eigen::Index>> strong_components(const std::vector<std::vector<Eigen::Index>>& adj) {
  const auto n = static_cast<Eigen::Index>(adj.size());
  std::vector<Eigen::Index> index(adj.size(), -1), low(adj.size(), 0);
  std::vector<char> on_stack(adj.size(), 0);
  std::vector<Eigen::Index> stack;
  std::vector<std::vector<Eigen::Index>> out;
  Eigen::Index counter = 0;
  std::function<void(Eigen::Index)> visit = [&](Eigen::Index v) {
    const auto vi = static_cast<std::size_t>(v);
    index[vi] = low[vi] = counter++;
    stack.push_back(v);
    on_stack[vi] = 1;
    for (Eigen::Index w : adj[vi]) {
      const auto wi = static_cast<std::size_t>(w);
      if (index[wi] < 0) {
        visit(w);
        low[vi] = std::min(low[vi], low[wi]);
      } else if (on_stack[wi]) {
        low[vi] = std::min(low[vi], index[wi]);
      }
    }
    if (low[vi] == index[vi]) {
      std::vector<Eigen::Index> comp;
      Eigen::Index w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[static_cast<std::size_t>(w)] = 0;
        comp.push_back(w);
      } while (w != v);
      std::sort(comp.begin(), comp.end());
      out.push_back(std::move(comp));
    }
  };
  for (Eigen::Index v = 0; v < n; ++v)
    if (index[static_cast<std::size_t>(v)] < 0) visit(v);
  return out;
}

}  // namespace

VectorXcd balanced_eigenvalues(const MatrixXcd& K, double rel_zero) {
  const Eigen::Index N = K.rows();
  if (K.cols() != N) config_error("balanced_eigenvalues: matrix must be square");
  if (!K.allFinite()) numerical_error("balanced_eigenvalues: non-finite matrix entry");
  const double cut = rel_zero * K.norm();
  std::vector<std::vector<Eigen::Index>> adj(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < N; ++j)
      if (i != j && std::abs(K(i, j)) > cut) adj[static_cast<std::size_t>(i)].push_back(j);
  VectorXcd out(N);
  Eigen::Index pos = 0;
  for (const auto& comp : strong_components(adj)) {
    if (comp.size() == 1) {
      out[pos++] = K(comp[0], comp[0]);
      continue;
    }
    const MatrixXcd B = K(comp, comp);
    Eigen::ComplexEigenSolver<MatrixXcd> es(B, false);
    if (es.info() != Eigen::Success) numerical_error("edmd: eigensolver failed to converge");
    out.segment(pos, B.rows()) = es.eigenvalues();
    pos += B.rows();
  }
  return out;
}

void sort_spectrum(SpectralResult& r) {
  std::vector<std::size_t> order(r.points.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  auto key = [&](std::size_t k) {
    // Moduli that agree to 1e-10 count as ties.
    return std::make_pair(-std::llround(std::abs(r.points[k]) * 1e10), std::arg(r.points[k]));
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  std::vector<Complex> p;
  std::vector<double> h;
  for (std::size_t k : order) {
    p.push_back(r.points[k]);
    h.push_back(r.residuals[k]);
  }
  r.points = std::move(p);
  r.residuals = std::move(h);
}

SpectralResult edmd_eigenvalues(const Triple& t) {
  if (!t.basis_is_orthonormal) config_error("edmd_eigenvalues: triple must be orthonormalized first");
  const VectorXcd lam = balanced_eigenvalues(edmd_matrix(t));
  SpectralResult r;
  r.mode = ResultMode::EdmdRaw;
  r.points.assign(lam.data(), lam.data() + lam.size());
  r.residuals.resize(r.points.size());
  parallel_for(r.points.size(), [&](std::size_t k) { r.residuals[k] = residual(r.points[k], t); });
  sort_spectrum(r);
  return r;
}

double hausdorff_distance(const std::vector<Complex>& a, const std::vector<Complex>& b) {
  if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
  auto directed = [](const std::vector<Complex>& p, const std::vector<Complex>& q) {
    double worst = 0;
    for (const Complex& x : p) {
      double best = std::numeric_limits<double>::infinity();
      for (const Complex& y : q) best = std::min(best, std::abs(x - y));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

}  // namespace koopspec
