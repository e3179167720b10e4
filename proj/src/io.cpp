#include "koopspec/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace koopspec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// key-value config
// ---------------------------------------------------------------------------

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      config_error(origin + ":" + std::to_string(i + 1) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) config_error(origin + ":" + std::to_string(i + 1) + ": empty key");
    kv.values_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::string& path) { return parse(read_file(path), path); }

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string KeyValues::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) config_error("missing config key '" + key + "'");
  return it->second;
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key) const { return parse_double(get(key), key); }

double KeyValues::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long KeyValues::get_int(const std::string& key) const {
  const std::string s = get(key);
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) config_error("config key '" + key + "': expected an integer, got '" + s + "'");
  return v;
}

long long KeyValues::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  config_error("config key '" + key + "': expected true or false, got '" + s + "'");
}

std::vector<double> KeyValues::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& s : split(get(key), ',')) out.push_back(parse_double(s, key));
  return out;
}

std::vector<int> KeyValues::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (double v : get_doubles(key)) {
    if (v != std::floor(v) || std::abs(v) > 2e9) config_error("config key '" + key + "': expected integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// files and numbers
// ---------------------------------------------------------------------------

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) config_error("cannot write " + tmp.string());
    out << content;
    if (!out) config_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& context) {
  const std::string t = trim(s);
  if (t == "inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  if (t == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (t.empty()) config_error(context + ": empty number");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) config_error(context + ": not a number '" + t + "'");
  return v;
}

// ---------------------------------------------------------------------------
// snapshots
// ---------------------------------------------------------------------------

std::string snapshots_to_csv(const SnapshotSet& s, std::uint64_t seed) {
  std::string out = "dim,precision_exponent,seed\n";
  out += std::to_string(s.dim()) + "," + std::to_string(s.precision_exponent) + "," + std::to_string(seed) + "\n";
  for (Eigen::Index m = 0; m < s.size(); ++m) {
    for (int k = 0; k < s.dim(); ++k) out += format_double(s.X(m, k)) + ",";
    for (int k = 0; k < s.dim(); ++k) out += format_double(s.Y(m, k)) + (k + 1 < s.dim() ? "," : "\n");
  }
  return out;
}

void write_snapshots(const std::string& path, const SnapshotSet& s, std::uint64_t seed) {
  write_file_atomic(path, snapshots_to_csv(s, seed));
}

SnapshotFile read_snapshots(const std::string& path) {
  const auto lines = lines_of(read_file(path));
  if (lines.size() < 2 || trim(lines[0]) != "dim,precision_exponent,seed")
    config_error(path + ": expected header dim,precision_exponent,seed");
  const auto head = split(lines[1], ',');
  if (head.size() != 3) config_error(path + ":2: expected dim,precision_exponent,seed values");
  SnapshotFile f;
  const int d = static_cast<int>(parse_double(head[0], path + ":2"));
  f.precision_exponent = static_cast<int>(parse_double(head[1], path + ":2"));
  f.seed = std::stoull(head[2]);
  if (d < 1) config_error(path + ":2: dim must be >= 1");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto cells = split(lines[i], ',');
    const std::string where = path + ":" + std::to_string(i + 1);
    if (static_cast<int>(cells.size()) != 2 * d) config_error(where + ": expected " + std::to_string(2 * d) + " columns");
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(parse_double(c, where));
    rows.push_back(std::move(r));
  }
  const auto M = static_cast<Eigen::Index>(rows.size());
  f.X.resize(M, d);
  f.Y.resize(M, d);
  for (Eigen::Index m = 0; m < M; ++m)
    for (int k = 0; k < d; ++k) {
      f.X(m, k) = rows[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)];
      f.Y(m, k) = rows[static_cast<std::size_t>(m)][static_cast<std::size_t>(d + k)];
    }
  return f;
}

// ---------------------------------------------------------------------------
// result tables
// ---------------------------------------------------------------------------

std::string results_to_csv(const SpectralResult& r) {
  std::string out = "re,im,residual,mode\n";
  for (std::size_t k = 0; k < r.size(); ++k)
    out += format_double(r.points[k].real()) + "," + format_double(r.points[k].imag()) + "," +
           format_double(r.residuals[k]) + "," + mode_name(r.mode) + "\n";
  return out;
}

void write_results(const std::string& path, const SpectralResult& r) { write_file_atomic(path, results_to_csv(r)); }

SpectralResult read_results(const std::string& path) {
  const auto lines = lines_of(read_file(path));
  if (lines.empty() || trim(lines[0]) != "re,im,residual,mode") config_error(path + ": expected header re,im,residual,mode");
  SpectralResult r;
  bool first = true;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string where = path + ":" + std::to_string(i + 1);
    const auto c = split(lines[i], ',');
    if (c.size() != 4) config_error(where + ": expected 4 columns");
    const ResultMode mode = parse_mode(c[3]);
    if (!first && mode != r.mode) config_error(where + ": mixed modes");
    r.mode = mode;
    first = false;
    r.points.emplace_back(parse_double(c[0], where), parse_double(c[1], where));
    r.residuals.push_back(parse_double(c[2], where));
  }
  return r;
}

std::string field_to_csv(const ResidualField& f) {
  std::string out = "re,im,residual\n";
  for (int b = 0; b < f.nim; ++b)
    for (int a = 0; a < f.nre; ++a) {
      if (!f.valid(a, b)) continue;
      const Complex z = f.point(a, b);
      out += format_double(z.real()) + "," + format_double(z.imag()) + "," + format_double(f.at(a, b)) + "\n";
    }
  return out;
}

std::string rage_to_csv(const std::vector<RageEstimate>& rows) {
  std::string out = "n,L,pp_mass,cont_mass\n";
  for (const auto& r : rows)
    out += std::to_string(r.n) + "," + std::to_string(r.L) + "," + format_double(r.pp_mass) + "," +
           format_double(r.cont_mass) + "\n";
  return out;
}

std::vector<RageEstimate> read_rage(const std::string& path) {
  const auto lines = lines_of(read_file(path));
  if (lines.empty() || trim(lines[0]) != "n,L,pp_mass,cont_mass") config_error(path + ": expected header n,L,pp_mass,cont_mass");
  std::vector<RageEstimate> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string where = path + ":" + std::to_string(i + 1);
    const auto c = split(lines[i], ',');
    if (c.size() != 4) config_error(where + ": expected 4 columns");
    RageEstimate r;
    r.n = static_cast<int>(parse_double(c[0], where));
    r.L = static_cast<int>(parse_double(c[1], where));
    r.pp_mass = parse_double(c[2], where);
    r.cont_mass = parse_double(c[3], where);
    out.push_back(r);
  }
  return out;
}

std::string atoms_to_csv(const std::vector<Atom>& atoms) {
  std::string out = "theta,mass\n";
  for (const auto& a : atoms) out += format_double(a.theta) + "," + format_double(a.mass) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// series
// ---------------------------------------------------------------------------

VectorXcd parse_series(const std::string& text, const std::string& origin) {
  const auto lines = lines_of(text);
  if (lines.empty() || trim(lines[0]) != "dt_steps=1") config_error(origin + ":1: expected header dt_steps=1");
  std::vector<Complex> v;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string where = origin + ":" + std::to_string(i + 1);
    const auto c = split(lines[i], ',');
    if (c.size() == 1) {
      v.emplace_back(parse_double(c[0], where), 0.0);
    } else if (c.size() == 2) {
      v.emplace_back(parse_double(c[0], where), parse_double(c[1], where));
    } else {
      config_error(where + ": expected one or two columns");
    }
    if (!std::isfinite(v.back().real()) || !std::isfinite(v.back().imag())) config_error(where + ": non-finite value");
  }
  if (v.empty()) config_error(origin + ": no samples");
  return Eigen::Map<VectorXcd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

VectorXcd read_series(const std::string& path, bool mean_subtract) {
  VectorXcd s = parse_series(read_file(path), path);
  if (mean_subtract) s.array() -= s.mean();
  return s;
}

std::string series_to_csv(const VectorXcd& s) {
  std::string out = "dt_steps=1\n";
  for (Eigen::Index t = 0; t < s.size(); ++t) out += format_double(s[t].real()) + "," + format_double(s[t].imag()) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// svg
// ---------------------------------------------------------------------------

namespace {

std::string color_for(double t) {
  // dark blue (small residual) to pale yellow
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(20 + 230 * t));
  const int g = static_cast<int>(std::lround(30 + 200 * t));
  const int b = static_cast<int>(std::lround(110 + 40 * (1 - t)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string residual_svg(const ResidualField& f, const SvgPlot& plot) {
  const double cell = std::max(2.0, std::min(12.0, 600.0 / std::max(f.nre, f.nim)));
  const double W = cell * f.nre, H = cell * f.nim;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(W + 20) << "\" height=\"" << fmt(H + 40)
      << "\">\n";
  out << "<!-- provenance\nkey,value\n";
  for (const auto& [k, v] : plot.provenance) out << k << "," << v << "\n";
  out << "-->\n";
  if (!plot.title.empty()) out << "<text x=\"10\" y=\"16\" font-size=\"12\">" << plot.title << "</text>\n";
  out << "<g transform=\"translate(10,30)\">\n";

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index k = 0; k < f.values.size(); ++k) {
    if (std::isnan(f.values[k])) continue;
    const double v = std::log10(std::max(f.values[k], 1e-16));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  // Image rows go top to bottom, the imaginary axis bottom to top.
  auto px = [&](double a) { return cell * (a + 0.5); };
  auto py = [&](double b) { return H - cell * (b + 0.5); };
  for (int b = 0; b < f.nim; ++b)
    for (int a = 0; a < f.nre; ++a) {
      if (!f.valid(a, b)) continue;
      const double v = std::log10(std::max(f.at(a, b), 1e-16));
      out << "<rect x=\"" << fmt(px(a) - cell / 2) << "\" y=\"" << fmt(py(b) - cell / 2) << "\" width=\"" << fmt(cell)
          << "\" height=\"" << fmt(cell) << "\" fill=\"" << color_for((v - lo) / span) << "\"/>\n";
    }

  // Marching squares on the residual itself.
  for (double level : plot.levels) {
    out << "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
    for (int b = 0; b + 1 < f.nim; ++b)
      for (int a = 0; a + 1 < f.nre; ++a) {
        if (!f.valid(a, b) || !f.valid(a + 1, b) || !f.valid(a, b + 1) || !f.valid(a + 1, b + 1)) continue;
        const double v[4] = {f.at(a, b), f.at(a + 1, b), f.at(a + 1, b + 1), f.at(a, b + 1)};
        const double cx[4] = {0, 1, 1, 0}, cy[4] = {0, 0, 1, 1};
        std::vector<std::pair<double, double>> hits;
        for (int e = 0; e < 4; ++e) {
          const int n = (e + 1) % 4;
          if ((v[e] < level) == (v[n] < level)) continue;
          const double s = (level - v[e]) / (v[n] - v[e]);
          hits.emplace_back(a + cx[e] + s * (cx[n] - cx[e]), b + cy[e] + s * (cy[n] - cy[e]));
        }
        for (std::size_t h = 0; h + 1 < hits.size(); h += 2)
          out << "<line x1=\"" << fmt(px(hits[h].first)) << "\" y1=\"" << fmt(py(hits[h].second)) << "\" x2=\""
              << fmt(px(hits[h + 1].first)) << "\" y2=\"" << fmt(py(hits[h + 1].second)) << "\"/>\n";
      }
    out << "</g>\n";
  }

  for (const Complex& z : plot.marks) {
    const double a = z.real() / f.spacing - f.re0, b = z.imag() / f.spacing - f.im0;
    out << "<circle cx=\"" << fmt(px(a)) << "\" cy=\"" << fmt(py(b)) << "\" r=\"3\" fill=\"red\"/>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

std::uint64_t fnv1a(const std::string& data, std::uint64_t h) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace koopspec
