#pragma once

#include <algorithm>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace voltcoal {

inline constexpr double kPi = 3.141592653589793;

// Error type thrown by all load/validate/solve entry points.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline std::string strfmt(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  char buf[512];
  std::vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Deterministic random numbers.
//
// All stochastic pieces of the library draw through Rng so that a scenario
// seed fully determines every sampled quantity.  Substreams are derived with
// splitmix64 so that e.g. profile noise and fault sampling never share state.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derive an independent stream seed from a base seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x632be59bd9b4e019ull));
}

// xoshiro-free minimal generator: splitmix64 sequence.  Fully specified
// (unlike std distributions), so results are identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x8e12fca98cd5e1c7ull)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller (deterministic, platform independent).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Sample k distinct indices from [0, n) without replacement (partial
  // Fisher-Yates over an index vector; order of draws is deterministic).
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    if (k > n) k = n;
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(below(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(k));
    return idx;
  }

 private:
  std::uint64_t state_;
};

// Minimal dense row-major matrix (big enough for coupling matrices over a
// few dozen inverters; no linear algebra needed anywhere in the library).
struct Matrix {
  size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(size_t i, size_t j) { return data[i * cols + j]; }
  double at(size_t i, size_t j) const { return data[i * cols + j]; }
  double max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::fabs(v));
    return m;
  }
};

// ---------------------------------------------------------------------------
// Small string helpers for the text file formats.
// ---------------------------------------------------------------------------

inline std::string_view trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, const char* what) {
  std::string tmp(trim(s));
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (end == tmp.c_str() || *end != '\0')
    throw Error(strfmt("%s: not a number: '%s'", what, tmp.c_str()));
  return v;
}

inline long parse_long(std::string_view s, const char* what) {
  std::string tmp(trim(s));
  char* end = nullptr;
  long v = std::strtol(tmp.c_str(), &end, 10);
  if (end == tmp.c_str() || *end != '\0')
    throw Error(strfmt("%s: not an integer: '%s'", what, tmp.c_str()));
  return v;
}

// Parse "HH:MM" into seconds since midnight.
inline double parse_hhmm(std::string_view s, const char* what) {
  auto parts = split(trim(s), ':');
  if (parts.size() != 2) throw Error(strfmt("%s: expected HH:MM, got '%.*s'", what, static_cast<int>(s.size()), s.data()));
  long h = parse_long(parts[0], what);
  long m = parse_long(parts[1], what);
  if (h < 0 || h > 24 || m < 0 || m > 59) throw Error(strfmt("%s: out-of-range time", what));
  return 3600.0 * static_cast<double>(h) + 60.0 * static_cast<double>(m);
}

// Fixed-format float for CSV output (deterministic across runs/platforms).
inline void append_csv_double(std::string& out, double v, int prec = 6) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  out += buf;
}

}  // namespace voltcoal
