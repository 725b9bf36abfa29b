#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "voltcoal/util.hpp"

namespace voltcoal {

// ---------------------------------------------------------------------------
// Daily demand / generation profiles.
//
// A Profile is a step-held series over one day: values[i] applies on
// [i*resolution_s, (i+1)*resolution_s).  Values are normalized multipliers of
// a device's rated kW (peak == 1).  Lookups wrap modulo 24 h so multi-day
// simulations repeat the daily cycle.
// ---------------------------------------------------------------------------

constexpr double kDaySeconds = 86400.0;

struct Profile {
  double resolution_s = 60.0;
  std::vector<double> values;

  double at(double t_s) const {
    if (values.empty()) throw Error("Profile::at: empty profile");
    double day_t = std::fmod(t_s, kDaySeconds);
    if (day_t < 0) day_t += kDaySeconds;
    auto idx = static_cast<size_t>(day_t / resolution_s);
    if (idx >= values.size()) idx = values.size() - 1;
    return values[idx];
  }
};

enum class ProfileKind { residential_load, commercial_load, pv };

inline const char* to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::residential_load: return "residential_load";
    case ProfileKind::commercial_load: return "commercial_load";
    case ProfileKind::pv: return "pv";
  }
  return "?";
}

inline ProfileKind profile_kind_from_string(const std::string& s) {
  if (s == "residential_load" || s == "residential") return ProfileKind::residential_load;
  if (s == "commercial_load" || s == "commercial") return ProfileKind::commercial_load;
  if (s == "pv") return ProfileKind::pv;
  throw Error(strfmt("unknown profile kind '%s'", s.c_str()));
}

namespace detail {

inline double gauss_bump(double hour, double center, double width) {
  double d = (hour - center) / width;
  return std::exp(-0.5 * d * d);
}

// Smooth 0->1 ramp over [lo, hi] (smootherstep).
inline double ramp01(double hour, double lo, double hi) {
  if (hour <= lo) return 0.0;
  if (hour >= hi) return 1.0;
  double t = (hour - lo) / (hi - lo);
  return t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
}

inline void normalize_peak(std::vector<double>& v) {
  double peak = 0.0;
  for (double x : v) peak = std::max(peak, x);
  if (peak <= 0.0) throw Error("profile normalization: series has no positive value");
  for (double& x : v) x /= peak;
}

}  // namespace detail

// Morning and evening residential peaks on a small overnight base, with a
// slowly varying multiplicative perturbation (first-order filtered noise) so
// distinct households differ minute to minute.
inline Profile generate_residential_profile(double resolution_s, uint64_t seed) {
  if (resolution_s <= 0 || resolution_s > kDaySeconds)
    throw Error("generate_residential_profile: resolution out of range");
  Rng rng(derive_seed(seed, 0x7265736964ULL));
  auto n = static_cast<size_t>(kDaySeconds / resolution_s);
  Profile p;
  p.resolution_s = resolution_s;
  p.values.resize(n);
  double noise = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double hour = (static_cast<double>(i) + 0.5) * resolution_s / 3600.0;
    double shape = 0.16 + 0.42 * detail::gauss_bump(hour, 7.5, 1.05) +
                   0.78 * detail::gauss_bump(hour, 19.5, 1.6);
    noise = 0.94 * noise + 0.06 * (0.20 * rng.normal());
    p.values[i] = std::max(0.02, shape * (1.0 + noise));
  }
  detail::normalize_peak(p.values);
  return p;
}

// Working-hours plateau: ramp up across 08:30-09:48, down across 15:00-16:30,
// small overnight base, mild filtered noise.  Short "machine cycle" bumps
// (compressors, HVAC stages) land on top of the plateau during working hours:
// a few percent extra demand for one to three minutes at a time.
inline Profile generate_commercial_profile(double resolution_s, uint64_t seed) {
  if (resolution_s <= 0 || resolution_s > kDaySeconds)
    throw Error("generate_commercial_profile: resolution out of range");
  Rng rng(derive_seed(seed, 0x636f6d6dULL));
  auto n = static_cast<size_t>(kDaySeconds / resolution_s);
  Profile p;
  p.resolution_s = resolution_s;
  p.values.resize(n);
  double noise = 0.0;
  double bump_amp = 0.0;
  double bump_left_s = 0.0;
  const double start_per_step = 0.10 * resolution_s / 60.0;
  for (size_t i = 0; i < n; ++i) {
    double hour = (static_cast<double>(i) + 0.5) * resolution_s / 3600.0;
    double plateau = detail::ramp01(hour, 8.5, 9.8) * (1.0 - detail::ramp01(hour, 15.0, 16.5));
    double shape = 0.14 + 0.86 * plateau;
    if (bump_left_s > 0.0) {
      bump_left_s -= resolution_s;
    } else {
      bump_amp = 0.0;
      if (rng.uniform(0.0, 1.0) < start_per_step) {
        bump_amp = rng.uniform(0.050, 0.120);
        bump_left_s = rng.uniform(1.0, 3.0) * 60.0;
      }
    }
    shape += bump_amp * plateau;
    noise = 0.95 * noise + 0.05 * (0.10 * rng.normal());
    p.values[i] = std::max(0.02, shape * (1.0 + noise));
  }
  detail::normalize_peak(p.values);
  return p;
}

// Clear-sky irradiance bell between sunrise and sunset (exactly zero outside
// daylight), with a handful of short random cloud transits that cut output by
// a bounded depth.  Cloud windows avoid the late-morning span so the daily
// argmax stays near solar noon.
inline Profile generate_pv_profile(double resolution_s, uint64_t seed) {
  if (resolution_s <= 0 || resolution_s > kDaySeconds)
    throw Error("generate_pv_profile: resolution out of range");
  Rng rng(derive_seed(seed, 0x70765f67ULL));
  constexpr double kSunrise = 6.2, kSunset = 19.8;
  auto n = static_cast<size_t>(kDaySeconds / resolution_s);
  Profile p;
  p.resolution_s = resolution_s;
  p.values.assign(n, 0.0);

  struct Cloud {
    double start_h, len_h, depth;
  };
  std::vector<Cloud> clouds;
  int n_clouds = 4 + static_cast<int>(rng.below(6));
  for (int c = 0; c < n_clouds; ++c) {
    Cloud cl;
    cl.start_h = rng.uniform(kSunrise + 0.5, kSunset - 1.0);
    cl.len_h = rng.uniform(2.0, 10.0) / 60.0;
    cl.depth = rng.uniform(0.25, 0.60);
    // Keep a clear window around solar noon so the peak stays put.
    if (cl.start_h + cl.len_h > 12.4 && cl.start_h < 13.6) continue;
    clouds.push_back(cl);
  }

  for (size_t i = 0; i < n; ++i) {
    double hour = (static_cast<double>(i) + 0.5) * resolution_s / 3600.0;
    if (hour <= kSunrise || hour >= kSunset) continue;
    double phase = (hour - kSunrise) / (kSunset - kSunrise);
    double bell = std::pow(std::sin(kPi * phase), 1.4);
    double factor = 1.0;
    for (const Cloud& cl : clouds)
      if (hour >= cl.start_h && hour < cl.start_h + cl.len_h)
        factor = std::min(factor, 1.0 - cl.depth);
    p.values[i] = bell * factor;
  }
  detail::normalize_peak(p.values);
  return p;
}

inline Profile generate_profile(ProfileKind kind, double resolution_s, uint64_t seed) {
  switch (kind) {
    case ProfileKind::residential_load: return generate_residential_profile(resolution_s, seed);
    case ProfileKind::commercial_load: return generate_commercial_profile(resolution_s, seed);
    case ProfileKind::pv: return generate_pv_profile(resolution_s, seed);
  }
  throw Error("generate_profile: bad kind");
}

// ---------------------------------------------------------------------------
// CSV ingestion: rows of "time_s,value" with ascending times starting at 0.
// Rows must lie on a uniform grid (the grid step is inferred from the first
// two rows); values are step-held.
// ---------------------------------------------------------------------------

inline Profile load_profile_csv(std::istream& in, const std::string& origin = "profile") {
  std::vector<double> times, vals;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s(trim(line));
    if (s.empty() || s[0] == '#') continue;
    if (lineno == 1 && s.find_first_not_of("0123456789+-.eE, \t") != std::string::npos)
      continue;  // header row
    auto cols = split(s, ',');
    if (cols.size() != 2)
      throw Error(strfmt("%s:%d: expected 'time_s,value'", origin.c_str(), lineno));
    times.push_back(parse_double(cols[0], "time_s"));
    vals.push_back(parse_double(cols[1], "value"));
  }
  if (times.size() < 2) throw Error(origin + ": need at least two samples");
  if (times.front() != 0.0) throw Error(origin + ": first sample must be at time 0");
  double step = times[1] - times[0];
  if (step <= 0) throw Error(origin + ": times must be strictly increasing");
  for (size_t i = 1; i < times.size(); ++i) {
    double expect = static_cast<double>(i) * step;
    if (std::abs(times[i] - expect) > 1e-6)
      throw Error(strfmt("%s: sample %zu not on uniform %.9g s grid", origin.c_str(), i, step));
  }
  Profile p;
  p.resolution_s = step;
  p.values = std::move(vals);
  return p;
}

inline Profile load_profile_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open profile file '" + path + "'");
  return load_profile_csv(in, path);
}

inline void save_profile_csv(const Profile& p, std::ostream& out) {
  out << "time_s,value\n";
  for (size_t i = 0; i < p.values.size(); ++i) {
    std::string row;
    append_csv_double(row, static_cast<double>(i) * p.resolution_s, 1);
    row += ',';
    append_csv_double(row, p.values[i], 6);
    out << row << '\n';
  }
}

inline void save_profile_csv_file(const Profile& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write profile file '" + path + "'");
  save_profile_csv(p, out);
}

}  // namespace voltcoal
