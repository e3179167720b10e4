#ifndef KOOPSPEC_IO_HPP
#define KOOPSPEC_IO_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "koopspec/common.hpp"
#include "koopspec/dynamics.hpp"
#include "koopspec/rage.hpp"
#include "koopspec/spectral.hpp"

namespace koopspec {

// Flat `key = value` text; keys may be dotted (`grid.spacing`). `#` starts a
// comment. Later sets override earlier ones.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "config");
  static KeyValues load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void merge(const KeyValues& other);

  std::string get(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;  // comma separated
  std::vector<int> get_ints(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // Sorted `key = value` lines.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// `%.17g`, with "inf", "-inf" and "nan" for the non-finite values.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);

// Snapshot CSV: header `dim,precision_exponent,seed`, one line of those
// values, then rows x_1..x_d,y_1..y_d.
struct SnapshotFile {
  MatrixXd X, Y;
  int precision_exponent = 0;
  std::uint64_t seed = 0;
};
std::string snapshots_to_csv(const SnapshotSet& s, std::uint64_t seed);
void write_snapshots(const std::string& path, const SnapshotSet& s, std::uint64_t seed);
SnapshotFile read_snapshots(const std::string& path);

// `re,im,residual,mode`.
std::string results_to_csv(const SpectralResult& r);
void write_results(const std::string& path, const SpectralResult& r);
SpectralResult read_results(const std::string& path);

// `re,im,residual` for every valid grid point.
std::string field_to_csv(const ResidualField& f);

// `n,L,pp_mass,cont_mass`.
std::string rage_to_csv(const std::vector<RageEstimate>& rows);
std::vector<RageEstimate> read_rage(const std::string& path);

// `theta,mass`.
std::string atoms_to_csv(const std::vector<Atom>& atoms);

// Time series: a `dt_steps=1` header row, then one value (real) or two
// (re, im) per row. Bad rows are rejected with their line number.
VectorXcd parse_series(const std::string& text, const std::string& origin = "series");
VectorXcd read_series(const std::string& path, bool mean_subtract);
std::string series_to_csv(const VectorXcd& s);

// Heatmap of log10 residual with contour lines at `levels` (residual values)
// and optional marked points; `provenance` lands in a CSV comment.
struct SvgPlot {
  std::vector<double> levels;
  std::vector<Complex> marks;
  std::vector<std::pair<std::string, std::string>> provenance;
  std::string title;
};
std::string residual_svg(const ResidualField& f, const SvgPlot& plot);

// 64-bit FNV-1a, printed as 16 hex digits.
std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 1469598103934665603ULL);
std::string hex64(std::uint64_t v);

}  // namespace koopspec

#endif  // KOOPSPEC_IO_HPP
