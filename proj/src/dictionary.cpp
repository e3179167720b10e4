#include "koopspec/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "koopspec/random.hpp"

namespace koopspec {

Dictionary::Dictionary(StateSpace space, DictionaryKind kind, std::vector<Observable> observables,
                       std::string description)
    : space_(std::move(space)),
      kind_(kind),
      observables_(std::move(observables)),
      description_(std::move(description)) {
  if (observables_.empty()) config_error("dictionary: needs at least one observable");
}

Dictionary Dictionary::prefix(Eigen::Index n) const {
  if (n < 1 || n > size()) config_error("dictionary prefix: n out of range");
  Dictionary d(space_, kind_,
               std::vector<Observable>(observables_.begin(), observables_.begin() + n),
               description_ + "[:" + std::to_string(n) + "]");
  if (!cells_.empty()) d.cells_.assign(cells_.begin(), cells_.begin() + n);
  return d;
}

int fourier_index_to_mode(int k) { return k % 2 == 1 ? (k + 1) / 2 : -(k / 2); }
int fourier_mode_to_index(int j) { return j > 0 ? 2 * j - 1 : -2 * j; }

std::vector<std::pair<int, int>> torus_mode_order(int maxfreq) {
  std::vector<std::pair<int, int>> modes;
  for (int shell = 0; shell <= maxfreq; ++shell) {
    const int width = 2 * shell + 1;
    for (int a = 0; a < width; ++a) {
      for (int b = 0; b < width; ++b) {
        const int j1 = fourier_index_to_mode(a), j2 = fourier_index_to_mode(b);
        if (std::max(std::abs(j1), std::abs(j2)) == shell) modes.emplace_back(j1, j2);
      }
    }
  }
  return modes;
}

Dictionary fourier_dictionary(const StateSpace& space, int maxfreq) {
  if (maxfreq < 0) config_error("fourier_dictionary: maxfreq must be >= 0");
  std::vector<Observable> obs;
  std::ostringstream desc;
  desc << "fourier(" << space.describe() << "," << maxfreq << ")";
  switch (space.kind()) {
    case SpaceKind::Circle: {
      const double c = 1.0 / std::sqrt(kTwoPi);
      for (int k = 0; k < 2 * maxfreq + 1; ++k) {
        const int j = fourier_index_to_mode(k);
        obs.push_back({[j, c](const State& x) { return std::polar(c, j * x[0]); }, std::abs(j) * c,
                       "e" + std::to_string(j)});
      }
      break;
    }
    case SpaceKind::Torus2: {
      const double c = 1.0 / kTwoPi;
      for (auto [j1, j2] : torus_mode_order(maxfreq)) {
        obs.push_back({[j1, j2, c](const State& x) { return std::polar(c, j1 * x[0] + j2 * x[1]); },
                       std::hypot(j1, j2) * c, "e" + std::to_string(j1) + "," + std::to_string(j2)});
      }
      break;
    }
    case SpaceKind::Interval01: {
      obs.push_back({[](const State&) { return Complex(1.0, 0.0); }, 0.0, "c0"});
      for (int k = 1; k <= maxfreq; ++k) {
        obs.push_back({[k](const State& x) { return Complex(std::sqrt(2.0) * std::cos(kPi * k * x[0]), 0.0); },
                       std::sqrt(2.0) * kPi * k, "c" + std::to_string(k)});
      }
      break;
    }
    default:
      config_error("fourier_dictionary: unsupported space " + space.describe());
  }
  return Dictionary(space, DictionaryKind::Fourier, std::move(obs), desc.str());
}

Dictionary disk_fourier_dictionary(int maxfreq, int rings) {
  if (maxfreq < 0 || rings < 1) config_error("disk_fourier_dictionary: need maxfreq >= 0 and rings >= 1");
  const double c = std::sqrt(rings / kPi);
  std::vector<Observable> obs;
  for (int k = 0; k < 2 * maxfreq + 1; ++k) {
    const int j = fourier_index_to_mode(k);
    for (int ring = 0; ring < rings; ++ring) {
      const double r2lo = static_cast<double>(ring) / rings, r2hi = static_cast<double>(ring + 1) / rings;
      const bool last = ring + 1 == rings;
      obs.push_back({[=](const State& x) {
                       const double r2 = x.squaredNorm();
                       if (r2 < r2lo || (r2 >= r2hi && !last)) return Complex(0.0, 0.0);
                       return std::polar(c, j * std::atan2(x[1], x[0]));
                     },
                     std::nullopt, "ring" + std::to_string(ring) + "e" + std::to_string(j)});
    }
  }
  return Dictionary(StateSpace::disk(), DictionaryKind::DiskFourier, std::move(obs),
                    "disk_fourier(" + std::to_string(maxfreq) + "," + std::to_string(rings) + ")");
}

Dictionary rbf_dictionary(const MatrixXd& centers, double shape, const StateSpace& space) {
  if (!(shape > 0.0)) config_error("rbf_dictionary: shape must be > 0");
  if (centers.rows() < 1 || centers.cols() != space.dim()) config_error("rbf_dictionary: centers have wrong shape");
  const double s2 = shape * shape;
  const double slope = shape * std::sqrt(2.0 / std::exp(1.0));
  std::vector<Observable> obs;
  obs.reserve(static_cast<std::size_t>(centers.rows()));
  for (Eigen::Index j = 0; j < centers.rows(); ++j) {
    VectorXd c = centers.row(j).transpose();
    obs.push_back({[c, s2](const State& x) { return Complex(std::exp(-s2 * (x - c).squaredNorm()), 0.0); }, slope,
                   "rbf" + std::to_string(j)});
  }
  std::ostringstream desc;
  desc << "rbf(" << centers.rows() << ",shape=" << shape << ")";
  return Dictionary(space, DictionaryKind::Rbf, std::move(obs), desc.str());
}

VectorXd rbf_gradient(const VectorXd& center, double shape, const VectorXd& x) {
  const double s2 = shape * shape;
  return -2.0 * s2 * std::exp(-s2 * (x - center).squaredNorm()) * (x - center);
}

Dictionary indicator_dictionary(const std::vector<Interval>& partition) {
  if (partition.empty()) config_error("indicator_dictionary: empty partition");
  for (std::size_t a = 0; a < partition.size(); ++a) {
    const Interval& s = partition[a];
    if (!(s.lo >= 0.0 && s.hi <= 1.0 && s.lo < s.hi))
      config_error("indicator_dictionary: interval " + std::to_string(a) + " is not a nonempty subset of [0,1]");
    for (std::size_t b = 0; b < a; ++b) {
      const Interval& t = partition[b];
      if (s.lo < t.hi && t.lo < s.hi)
        config_error("indicator_dictionary: intervals " + std::to_string(b) + " and " + std::to_string(a) +
                     " overlap");
    }
  }
  std::vector<Observable> obs;
  for (const Interval& s : partition) {
    const double h = 1.0 / std::sqrt(s.length());
    obs.push_back({[s, h](const State& x) { return Complex(x[0] >= s.lo && x[0] < s.hi ? h : 0.0, 0.0); },
                   std::nullopt, "chi"});
  }
  Dictionary d(StateSpace::interval01(), DictionaryKind::Indicator, std::move(obs),
               "indicator(" + std::to_string(partition.size()) + ")");
  d.cells_ = partition;
  return d;
}

Observable circle_indicator(double lo, double hi) {
  if (!(lo >= -kPi && hi <= kPi && lo < hi)) config_error("circle_indicator: need -pi <= lo < hi <= pi");
  const double h = 1.0 / std::sqrt(hi - lo);
  return {[lo, hi, h](const State& x) { return Complex(x[0] >= lo && x[0] < hi ? h : 0.0, 0.0); }, std::nullopt,
          "chi[" + std::to_string(lo) + "," + std::to_string(hi) + ")"};
}

Dictionary sector_dictionary(const Dictionary& circle_dict, int j) {
  if (circle_dict.space().kind() != SpaceKind::Circle) config_error("sector_dictionary: needs a circle dictionary");
  const double c = 1.0 / std::sqrt(kTwoPi);
  std::vector<Observable> obs;
  for (const Observable& h : circle_dict.observables()) {
    auto hx = h.eval;
    obs.push_back({[hx, j, c](const State& x) { return hx(State::Constant(1, x[0])) * std::polar(c, j * x[1]); },
                   std::nullopt, h.label + "|e" + std::to_string(j)});
  }
  return Dictionary(StateSpace::torus2(), DictionaryKind::Sector, std::move(obs),
                    "sector(" + circle_dict.describe() + "," + std::to_string(j) + ")");
}

EvaluationMatrix evaluate_dictionary(const Dictionary& dict, const MatrixXd& points, EvaluationMatrix::Side side) {
  const StateSpace& space = dict.space();
  if (points.cols() != space.dim()) config_error("evaluate_dictionary: points have wrong dimension");
  const Eigen::Index M = points.rows(), N = dict.size();
  for (Eigen::Index m = 0; m < M; ++m)
    if (!space.contains(points.row(m).transpose()))
      domain_error("evaluate_dictionary: point " + std::to_string(m) + " outside " + space.describe());
  EvaluationMatrix out;
  out.side = side;
  out.values.resize(M, N);
  parallel_for(static_cast<std::size_t>(M), [&](std::size_t mi) {
    const auto m = static_cast<Eigen::Index>(mi);
    const State x = space.canonical(points.row(m).transpose());
    for (Eigen::Index j = 0; j < N; ++j) out.values(m, j) = dict[j].eval(x);
  });
  if (!out.values.allFinite()) numerical_error("evaluate_dictionary: non-finite dictionary value");
  return out;
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

namespace {

double assign(const MatrixXd& points, const MatrixXd& centers, std::vector<int>& labels, VectorXd& dist2) {
  const Eigen::Index M = points.rows();
  parallel_for(static_cast<std::size_t>(M), [&](std::size_t mi) {
    const auto m = static_cast<Eigen::Index>(mi);
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (points.row(m) - centers.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    labels[mi] = arg;
    dist2[m] = best;
  });
  return dist2.sum();
}

}  // namespace

KMeansResult kmeans(const MatrixXd& points, int k, std::uint64_t seed, int max_iters) {
  const Eigen::Index M = points.rows(), d = points.cols();
  if (k < 1 || k > M) config_error("kmeans: need 1 <= k <= number of points");
  if (max_iters < 1) config_error("kmeans: max_iters must be >= 1");
  const Philox4x32 rng(seed);
  std::uint64_t counter = 0;

  // k-means++ seeding
  KMeansResult res;
  res.centers.resize(k, d);
  auto first = static_cast<Eigen::Index>(rng.uniform(counter++) * static_cast<double>(M));
  res.centers.row(0) = points.row(std::min(first, M - 1));
  VectorXd dist2 = (points.rowwise() - res.centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      const double target = rng.uniform(counter++) * total;
      double acc = 0;
      pick = M - 1;
      for (Eigen::Index m = 0; m < M; ++m) {
        acc += dist2[m];
        if (acc > target && dist2[m] > 0) {
          pick = m;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(c);  // all points coincide with chosen centers
    }
    res.centers.row(c) = points.row(pick);
    dist2 = dist2.cwiseMin((points.rowwise() - res.centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(M), -1);
  VectorXd d2(M);
  assign(points, res.centers, labels, d2);
  for (int it = 0; it < max_iters; ++it) {
    res.iterations = it + 1;
    MatrixXd sums = MatrixXd::Zero(k, d);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index m = 0; m < M; ++m) {
      sums.row(labels[static_cast<std::size_t>(m)]) += points.row(m);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(m)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        res.centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: move it onto the worst-served point.
      for (Eigen::Index m = 0; m < M; ++m)
        d2[m] = (points.row(m) - res.centers.row(labels[static_cast<std::size_t>(m)])).squaredNorm();
      Eigen::Index far = 0;
      d2.maxCoeff(&far);
      res.centers.row(c) = points.row(far);
      labels[static_cast<std::size_t>(far)] = c;
    }
    std::vector<int> next(labels.size());
    res.objective.push_back(assign(points, res.centers, next, d2));
    const bool stable = next == labels;
    labels = std::move(next);
    if (stable) break;
  }
  res.assignment = std::move(labels);
  return res;
}

}  // namespace koopspec
