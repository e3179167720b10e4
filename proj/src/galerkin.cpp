#include "koopspec/galerkin.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace koopspec {

const char* rule_name(QuadratureRule rule) {
  switch (rule) {
    case QuadratureRule::MonteCarlo:
      return "montecarlo";
    case QuadratureRule::Trapezoid:
      return "trapezoid";
    case QuadratureRule::ExactPartition:
      return "exact-partition";
  }
  return "?";
}

QuadratureRule parse_rule(const std::string& name) {
  if (name == "montecarlo") return QuadratureRule::MonteCarlo;
  if (name == "trapezoid") return QuadratureRule::Trapezoid;
  if (name == "exact-partition") return QuadratureRule::ExactPartition;
  config_error("unknown quadrature rule '" + name + "'");
}

QuadratureWeights quadrature_weights(const StateSpace& space, const MatrixXd& points, QuadratureRule rule,
                                     std::optional<double> region_measure) {
  const Eigen::Index M = points.rows();
  if (M < 1) config_error("quadrature_weights: no points");
  if (points.cols() != space.dim()) config_error("quadrature_weights: points have wrong dimension");
  QuadratureWeights q;
  q.rule = rule;
  switch (rule) {
    case QuadratureRule::MonteCarlo: {
      const double mass = region_measure.value_or(space.measure());
      if (!(mass > 0)) config_error("quadrature_weights: region measure must be > 0");
      q.w = VectorXd::Constant(M, mass / static_cast<double>(M));
      break;
    }
    case QuadratureRule::Trapezoid: {
      const auto shape = lattice_shape(space, M);
      if (shape.empty()) config_error("quadrature_weights: trapezoid rule needs lattice points");
      const MatrixXd grid = lattice_points(space, shape);
      for (Eigen::Index m = 0; m < M; ++m)
        if (space.distance(points.row(m).transpose(), grid.row(m).transpose()) > 1e-12)
          config_error("quadrature_weights: trapezoid rule needs lattice points (row " + std::to_string(m) + ")");
      // Every lattice cell has equal measure, including the equal-area disk rings.
      q.w = VectorXd::Constant(M, space.measure() / static_cast<double>(M));
      break;
    }
    case QuadratureRule::ExactPartition:
      config_error("quadrature_weights: exact-partition needs the cells; use partition_weights");
  }
  return q;
}

QuadratureWeights partition_weights(const std::vector<Interval>& cells, const MatrixXd& points) {
  if (cells.empty()) config_error("partition_weights: no cells");
  if (points.cols() != 1) config_error("partition_weights: points must be one-dimensional");
  const Eigen::Index M = points.rows();
  std::vector<int> owner(static_cast<std::size_t>(M), -1);
  std::vector<int> count(cells.size(), 0);
  for (Eigen::Index m = 0; m < M; ++m) {
    const double x = points(m, 0);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const bool last_closed = cells[c].hi >= 1.0 && x == cells[c].hi;
      if ((x >= cells[c].lo && x < cells[c].hi) || last_closed) {
        owner[static_cast<std::size_t>(m)] = static_cast<int>(c);
        ++count[c];
        break;
      }
    }
    if (owner[static_cast<std::size_t>(m)] < 0)
      config_error("partition_weights: point " + std::to_string(m) + " lies in no cell");
  }
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (count[c] == 0) config_error("partition_weights: cell " + std::to_string(c) + " has no point");
  QuadratureWeights q;
  q.rule = QuadratureRule::ExactPartition;
  q.w.resize(M);
  for (Eigen::Index m = 0; m < M; ++m) {
    const auto c = static_cast<std::size_t>(owner[static_cast<std::size_t>(m)]);
    q.w[m] = cells[c].length() / count[c];
  }
  q.certified_error = 0.0;
  return q;
}

void certify_quadrature(QuadratureWeights& w, const Dictionary& dict, std::optional<double> map_lipschitz,
                        const EvaluationMatrix& psi_x, double eta) {
  w.certified_error.reset();
  if (!map_lipschitz || !(eta >= 0)) return;
  double slope = 0;
  for (const Observable& g : dict.observables()) {
    if (!g.lipschitz) return;
    slope = std::max(slope, *g.lipschitz);
  }
  const VectorXd mass = psi_x.values.cwiseAbs().transpose() * w.w;
  w.certified_error = slope * (*map_lipschitz + 1.0) * eta * mass.maxCoeff();
  w.heuristic = dict.kind() == DictionaryKind::Rbf;
}

namespace {

constexpr Eigen::Index kBlockRows = 256;

struct Partial {
  MatrixXcd G, A, L;
};

}  // namespace

Triple assemble(const EvaluationMatrix& psi_x, const EvaluationMatrix& psi_y, const QuadratureWeights& w,
                bool keep_factor) {
  const MatrixXcd& X = psi_x.values;
  const MatrixXcd& Y = psi_y.values;
  if (psi_x.side != EvaluationMatrix::Side::X || psi_y.side != EvaluationMatrix::Side::Y)
    config_error("assemble: expected an X-side and a Y-side evaluation");
  if (X.rows() != Y.rows() || X.cols() != Y.cols()) config_error("assemble: evaluation shapes differ");
  if (w.w.size() != X.rows()) config_error("assemble: weight count does not match snapshot count");
  if ((w.w.array() < 0).any()) config_error("assemble: negative quadrature weight");
  const Eigen::Index M = X.rows(), N = X.cols();
  const Eigen::Index nb = (M + kBlockRows - 1) / kBlockRows;

  std::vector<Partial> parts(static_cast<std::size_t>(nb));
  parallel_for(static_cast<std::size_t>(nb), [&](std::size_t b) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(b) * kBlockRows;
    const Eigen::Index rows = std::min(kBlockRows, M - r0);
    const auto wb = w.w.segment(r0, rows).asDiagonal();
    const MatrixXcd wx = wb * X.middleRows(r0, rows);
    const MatrixXcd wy = wb * Y.middleRows(r0, rows);
    Partial& p = parts[b];
    p.G = X.middleRows(r0, rows).adjoint() * wx;
    p.A = X.middleRows(r0, rows).adjoint() * wy;
    p.L = Y.middleRows(r0, rows).adjoint() * wy;
  });
  // Pairwise tree: the shape depends only on the block count.
  for (std::size_t stride = 1; stride < parts.size(); stride *= 2) {
    for (std::size_t i = 0; i + stride < parts.size(); i += 2 * stride) {
      parts[i].G += parts[i + stride].G;
      parts[i].A += parts[i + stride].A;
      parts[i].L += parts[i + stride].L;
    }
  }

  Triple t;
  t.G = hermitian_part<double>(parts[0].G);
  t.A = std::move(parts[0].A);
  t.L = hermitian_part<double>(parts[0].L);
  t.transform = MatrixXcd::Identity(N, N);
  if (keep_factor) {
    MatrixXcd S(M, 2 * N);
    const VectorXd sw = w.w.cwiseSqrt();
    S.leftCols(N) = sw.asDiagonal() * X;
    S.rightCols(N) = sw.asDiagonal() * Y;
    Eigen::HouseholderQR<MatrixXcd> qr(S);
    const Eigen::Index r = std::min(M, 2 * N);
    const MatrixXcd R = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    t.factor_x = R.leftCols(N);
    t.factor_y = R.rightCols(N);
  }
  return t;
}

TripleChecks check_triple(const Triple& t) {
  TripleChecks c;
  c.hermitian_error_g = (t.G - t.G.adjoint()).cwiseAbs().maxCoeff();
  c.hermitian_error_l = (t.L - t.L.adjoint()).cwiseAbs().maxCoeff();
  auto rel_min = [](const MatrixXcd& H) {
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(hermitian_part<double>(H), Eigen::EigenvaluesOnly);
    const double top = std::max(std::abs(es.eigenvalues().maxCoeff()), std::abs(es.eigenvalues().minCoeff()));
    return top > 0 ? es.eigenvalues().minCoeff() / top : 0.0;
  };
  c.min_eig_g = rel_min(t.G);
  c.min_eig_l = rel_min(t.L);
  c.orthonormal_error = (t.G - MatrixXcd::Identity(t.size(), t.size())).cwiseAbs().maxCoeff();
  return c;
}

// ---------------------------------------------------------------------------
// cache files
// ---------------------------------------------------------------------------

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_f64(std::string& out, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, 8);
  put_u64(out, v);
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) numerical_error("read_triple: truncated file");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= std::uint64_t{static_cast<unsigned char>(in[pos + k])} << (8 * k);
  pos += 8;
  return v;
}

double get_f64(const std::string& in, std::size_t& pos) {
  const std::uint64_t v = get_u64(in, pos);
  double x;
  std::memcpy(&x, &v, 8);
  return x;
}

void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) config_error("cannot write " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) config_error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

enum : std::uint64_t { kOrthonormal = 1, kMeasurePreserving = 2, kHasDelta = 4, kHasFactor = 8 };

void put_matrix(std::string& out, const MatrixXcd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      put_f64(out, m(i, j).real());
      put_f64(out, m(i, j).imag());
    }
}

MatrixXcd get_matrix(const std::string& in, std::size_t& pos, Eigen::Index rows, Eigen::Index cols) {
  MatrixXcd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double re = get_f64(in, pos);
      m(i, j) = Complex(re, get_f64(in, pos));
    }
  return m;
}

}  // namespace

void write_triple(const std::string& path, const Triple& t) {
  const auto N = static_cast<std::uint64_t>(t.size());
  std::uint64_t flags = 0;
  if (t.basis_is_orthonormal) flags |= kOrthonormal;
  if (t.measure_preserving) flags |= kMeasurePreserving;
  if (t.delta_bound) flags |= kHasDelta;
  if (t.has_factor()) flags |= kHasFactor;
  std::string out;
  out.reserve(16 + 48 * N * N + 8);
  put_u64(out, N);
  put_u64(out, flags);
  for (const MatrixXcd* m : {&t.G, &t.A, &t.L}) put_matrix(out, *m);
  if (t.delta_bound) put_f64(out, *t.delta_bound);
  // Extension sections: the square-root factor and the basis transform.
  if (t.has_factor()) {
    put_u64(out, static_cast<std::uint64_t>(t.factor_x.rows()));
    put_matrix(out, t.factor_x);
    put_matrix(out, t.factor_y);
  }
  put_u64(out, static_cast<std::uint64_t>(t.transform.rows()));
  if (t.transform.size() > 0) put_matrix(out, t.transform);
  atomic_write(path, out);
  atomic_write(path + ".txt", t.provenance.empty() ? std::string("\n") : t.provenance + "\n");
}

Triple read_triple(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) config_error("cannot open " + path);
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  const std::uint64_t N = get_u64(in, pos);
  const std::uint64_t flags = get_u64(in, pos);
  if (N == 0 || N > (1u << 20)) numerical_error("read_triple: bad dimension in " + path);
  Triple t;
  const auto n = static_cast<Eigen::Index>(N);
  for (MatrixXcd* m : {&t.G, &t.A, &t.L}) *m = get_matrix(in, pos, n, n);
  t.basis_is_orthonormal = flags & kOrthonormal;
  t.measure_preserving = flags & kMeasurePreserving;
  if (flags & kHasDelta) t.delta_bound = get_f64(in, pos);
  if (flags & kHasFactor) {
    const auto r = static_cast<Eigen::Index>(get_u64(in, pos));
    t.factor_x = get_matrix(in, pos, r, n);
    t.factor_y = get_matrix(in, pos, r, n);
  }
  const auto rows = static_cast<Eigen::Index>(get_u64(in, pos));
  if (rows > 0) t.transform = get_matrix(in, pos, rows, n);
  if (pos != in.size()) numerical_error("read_triple: trailing bytes in " + path);
  std::ifstream side(path + ".txt");
  if (side) {
    std::string text((std::istreambuf_iterator<char>(side)), std::istreambuf_iterator<char>());
    while (!text.empty() && text.back() == '\n') text.pop_back();
    t.provenance = text;
  }
  return t;
}

}  // namespace koopspec
