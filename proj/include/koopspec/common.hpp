#ifndef KOOPSPEC_COMMON_HPP
#define KOOPSPEC_COMMON_HPP

#include <complex>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace koopspec {

using Complex = std::complex<double>;

template <typename Real>
using CMatrix = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using CVector = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;

using MatrixXcd = CMatrix<double>;
using VectorXcd = CVector<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// A point of a state space. Circle states have one coordinate, torus and
// disk states two, box states d.
using State = Eigen::VectorXd;

enum class ErrorKind {
  Config,     // bad parameters or inputs
  Numerical,  // eigensolver trouble, degenerate data
  Domain,     // point outside a space, off-table query
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void config_error(const std::string& msg) { throw Error(ErrorKind::Config, msg); }
[[noreturn]] inline void numerical_error(const std::string& msg) { throw Error(ErrorKind::Numerical, msg); }
[[noreturn]] inline void domain_error(const std::string& msg) { throw Error(ErrorKind::Domain, msg); }

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Representative of an angle in [-pi, pi).
double wrap_angle(double theta);

// Worker count used by every parallel loop in the library. Results never
// depend on it.
void set_threads(unsigned n);
unsigned threads();

// Runs body(i) for i in [0, n). Each index is visited exactly once; the
// assignment of indices to workers is static.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace koopspec

#endif  // KOOPSPEC_COMMON_HPP
