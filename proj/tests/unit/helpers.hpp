#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "nnspeaker/audio.hpp"

namespace test_helpers {

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("nnspeaker_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * ((static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53);
}

// Steady buzz through a pair of resonators: a stand-in for voiced speech.
inline std::vector<double> voiced_tone(int n, int fs, double f0, double f1 = 600.0,
                                       double f2 = 1700.0) {
  std::vector<double> out(static_cast<size_t>(n), 0.0);
  double y1a = 0, y2a = 0, y1b = 0, y2b = 0;
  const double ra = std::exp(-std::numbers::pi * 120.0 / fs);
  const double rb = std::exp(-std::numbers::pi * 150.0 / fs);
  const double c1a = 2 * ra * std::cos(2 * std::numbers::pi * f1 / fs), c2a = -ra * ra;
  const double c1b = 2 * rb * std::cos(2 * std::numbers::pi * f2 / fs), c2b = -rb * rb;
  double phase = 1.0;
  for (int i = 0; i < n; ++i) {
    phase += f0 / fs;
    double x = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      x = 1.0;
    }
    double ya = (1 - ra) * x + c1a * y1a + c2a * y2a;
    y2a = y1a;
    y1a = ya;
    double yb = (1 - rb) * ya + c1b * y1b + c2b * y2b;
    y2b = y1b;
    y1b = yb;
    out[static_cast<size_t>(i)] = yb;
  }
  double peak = 0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0)
    for (double& v : out) v /= peak;
  return out;
}

// Low-passed noise at a given peak amplitude: a stand-in for room noise.
inline std::vector<double> quiet_noise(int n, double peak, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> out(static_cast<size_t>(n));
  double lp = 0.0;
  for (int i = 0; i < n; ++i) {
    lp = 0.98 * lp + 0.02 * uniform(rng, -1.0, 1.0);
    out[static_cast<size_t>(i)] = lp;
  }
  double mx = 0;
  for (double v : out) mx = std::max(mx, std::abs(v));
  if (mx > 0)
    for (double& v : out) v *= peak / mx;
  return out;
}

}  // namespace test_helpers
