#ifndef KOOPSPEC_RANDOM_HPP
#define KOOPSPEC_RANDOM_HPP

#include <array>
#include <cmath>
#include <cstdint>

namespace koopspec {

// Philox4x32-10 (Salmon et al., SC'11). Counter-based: the value for a given
// (key, counter) pair is fixed, so streams split across threads stay
// reproducible.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Block operator()(std::uint64_t counter, std::uint64_t stream = 0) const {
    Block ctr{static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
              static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

  // Two uniforms in [0, 1) with 53-bit resolution.
  std::array<double, 2> uniform2(std::uint64_t counter, std::uint64_t stream = 0) const {
    const Block b = (*this)(counter, stream);
    return {to_unit(b[0], b[1]), to_unit(b[2], b[3])};
  }

  double uniform(std::uint64_t counter, std::uint64_t stream = 0) const {
    return uniform2(counter, stream)[0];
  }

  // Standard normal pair via Box-Muller.
  std::array<double, 2> normal2(std::uint64_t counter, std::uint64_t stream = 0) const {
    const auto u = uniform2(counter, stream);
    const double r = std::sqrt(-2.0 * std::log(1.0 - u[0]));
    const double a = 6.283185307179586 * u[1];
    return {r * std::cos(a), r * std::sin(a)};
  }

 private:
  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (std::uint64_t{hi} << 21) ^ (lo >> 11);
    return static_cast<double>(bits & ((std::uint64_t{1} << 53) - 1)) * 0x1.0p-53;
  }

  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  std::array<std::uint32_t, 2> key_;
};

}  // namespace koopspec

#endif  // KOOPSPEC_RANDOM_HPP
