#include "nnspeaker/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

#include "nnspeaker/common.hpp"

namespace nnspeaker::preprocess {

namespace {

constexpr double kPi = std::numbers::pi;

// Positive-frequency DFT basis for one frame length, cached since the VAD
// reuses a single frame size for a whole corpus.
struct DftTable {
  Eigen::MatrixXd cos_basis;  // K x N
  Eigen::MatrixXd sin_basis;  // K x N
};

const DftTable& dft_table(int n) {
  static std::mutex mutex;
  static std::map<int, DftTable> cache;  // node-based: references stay valid
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const int k_max = n / 2;
  DftTable t;
  t.cos_basis.resize(k_max, n);
  t.sin_basis.resize(k_max, n);
  for (int k = 1; k <= k_max; ++k)
    for (int i = 0; i < n; ++i) {
      const double w = 2.0 * kPi * k * i / n;
      t.cos_basis(k - 1, i) = std::cos(w);
      t.sin_basis(k - 1, i) = std::sin(w);
    }
  return cache.emplace(n, std::move(t)).first->second;
}

int frame_count(size_t n_samples, int win, int hop) {
  if (n_samples < static_cast<size_t>(win)) return 0;
  return static_cast<int>((n_samples - static_cast<size_t>(win)) / static_cast<size_t>(hop)) + 1;
}

}  // namespace

AudioBuffer normalize_amplitude(const AudioBuffer& audio) {
  double peak = 0.0;
  for (double s : audio.samples) peak = std::max(peak, std::abs(s));
  AudioBuffer out = audio;
  if (peak > 0.0)
    for (double& s : out.samples) s /= peak;
  return out;
}

double short_term_energy(std::span<const double> frame) {
  if (frame.empty()) throw std::invalid_argument("short_term_energy: empty frame");
  double acc = 0.0;
  for (double s : frame) acc += s * s;
  return acc / static_cast<double>(frame.size());
}

double spectral_centroid(std::span<const double> frame) {
  if (frame.size() < 2) throw std::invalid_argument("spectral_centroid: need at least 2 samples");
  const int n = static_cast<int>(frame.size());
  const auto& table = dft_table(n);
  const Eigen::Map<const Eigen::VectorXd> x(frame.data(), n);
  const Eigen::VectorXd re = table.cos_basis * x;
  const Eigen::VectorXd im = table.sin_basis * x;
  double weighted = 0.0, total = 0.0;
  for (int k = 0; k < re.size(); ++k) {
    const double mag = std::hypot(re[k], im[k]);
    weighted += (k + 1) * mag;
    total += mag;
  }
  if (total <= 0.0) return 0.0;
  return weighted / total;
}

FrameSeries frame_series(const AudioBuffer& audio, double win_s, double hop_s, FrameStat stat) {
  const int win = static_cast<int>(std::lround(win_s * audio.sample_rate));
  const int hop = static_cast<int>(std::lround(hop_s * audio.sample_rate));
  if (win <= 0 || hop <= 0 || win <= hop)
    throw std::invalid_argument("frame_series: need frame_len > hop_len > 0");
  const int n_frames = frame_count(audio.samples.size(), win, hop);
  if (n_frames == 0) throw std::invalid_argument("frame_series: audio shorter than one window");

  FrameSeries out;
  out.frame_len = win;
  out.hop_len = hop;
  out.values.resize(static_cast<size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) {
    const std::span<const double> frame(audio.samples.data() + static_cast<size_t>(i) * hop,
                                        static_cast<size_t>(win));
    out.values[static_cast<size_t>(i)] =
        stat == FrameStat::kEnergy ? short_term_energy(frame) : spectral_centroid(frame);
  }
  return out;
}

std::vector<double> median_smooth(const std::vector<double>& series, int step, int order) {
  if (step < 1) throw std::invalid_argument("median_smooth: step must be >= 1");
  if (order < 1) throw std::invalid_argument("median_smooth: order must be >= 1");
  if (step % 2 == 0) ++step;
  if (series.empty() || step == 1) return series;

  const int n = static_cast<int>(series.size());
  const int half = step / 2;
  std::vector<double> cur = series, next(series.size());
  std::vector<double> window;
  window.reserve(static_cast<size_t>(step));
  for (int pass = 0; pass < order; ++pass) {
    for (int i = 0; i < n; ++i) {
      const int h = std::min({half, i, n - 1 - i});
      window.assign(cur.begin() + (i - h), cur.begin() + (i + h + 1));
      std::nth_element(window.begin(), window.begin() + h, window.end());
      next[static_cast<size_t>(i)] = window[static_cast<size_t>(h)];
    }
    cur.swap(next);
  }
  return cur;
}

double histogram_threshold(const std::vector<double>& series, int n_bins, double weight_w) {
  if (series.empty()) throw std::invalid_argument("histogram_threshold: empty series");
  if (n_bins < 3) throw std::invalid_argument("histogram_threshold: need at least 3 bins");

  const auto [lo_it, hi_it] = std::minmax_element(series.begin(), series.end());
  const double lo = *lo_it, hi = *hi_it;
  if (lo == hi) return lo;

  const double bin_width = (hi - lo) / n_bins;
  std::vector<double> counts(static_cast<size_t>(n_bins), 0.0);
  for (double v : series) {
    int b = static_cast<int>((v - lo) / bin_width);
    b = std::min(b, n_bins - 1);
    counts[static_cast<size_t>(b)] += 1.0;
  }

  std::vector<double> smoothed(counts.size());
  for (int i = 0; i < n_bins; ++i) {
    double acc = counts[static_cast<size_t>(i)];
    int m = 1;
    if (i > 0) { acc += counts[static_cast<size_t>(i - 1)]; ++m; }
    if (i + 1 < n_bins) { acc += counts[static_cast<size_t>(i + 1)]; ++m; }
    smoothed[static_cast<size_t>(i)] = acc / m;
  }

  auto bin_center = [&](int b) { return lo + (b + 0.5) * bin_width; };
  // A maximum must also carry real mass; isolated outlier frames otherwise
  // masquerade as a second mode and drag the threshold into the bulk.
  const double min_mass = 0.05 * static_cast<double>(series.size());
  std::vector<double> maxima;
  for (int i = 0; i < n_bins; ++i) {
    const bool above_left = i == 0 || smoothed[static_cast<size_t>(i)] > smoothed[static_cast<size_t>(i - 1)];
    const bool above_right =
        i == n_bins - 1 || smoothed[static_cast<size_t>(i)] > smoothed[static_cast<size_t>(i + 1)];
    if (above_left && above_right && smoothed[static_cast<size_t>(i)] >= min_mass)
      maxima.push_back(bin_center(i));
  }

  if (maxima.size() < 2) {
    double mean = 0.0;
    for (double v : series) mean += v;
    return 0.5 * mean / static_cast<double>(series.size());
  }
  const double m1 = maxima[0], m2 = maxima[1];
  return (weight_w * m1 + m2) / (weight_w + 1.0);
}

VadMask detect_voice(const AudioBuffer& audio, const VadConfig& cfg) {
  if (audio.samples.empty()) throw std::invalid_argument("detect_voice: empty audio");

  VadMask mask;
  mask.sample_mask.assign(audio.samples.size(), false);

  const int win = static_cast<int>(std::lround(cfg.win_s * audio.sample_rate));
  const int hop = static_cast<int>(std::lround(cfg.hop_s * audio.sample_rate));
  if (frame_count(audio.samples.size(), win, hop) == 0) {
    warn("detect_voice: audio shorter than one frame, everything marked unvoiced");
    return mask;
  }

  const FrameSeries energy = frame_series(audio, cfg.win_s, cfg.hop_s, FrameStat::kEnergy);
  const FrameSeries centroid = frame_series(audio, cfg.win_s, cfg.hop_s, FrameStat::kCentroid);

  mask.energy = median_smooth(energy.values, cfg.smooth_step, cfg.smooth_order);
  mask.centroid = median_smooth(centroid.values, cfg.smooth_step, cfg.smooth_order);
  mask.threshold_energy = histogram_threshold(mask.energy, cfg.hist_bins, cfg.peak_weight);
  mask.threshold_centroid = histogram_threshold(mask.centroid, cfg.hist_bins, cfg.peak_weight);

  const size_t n_frames = mask.energy.size();
  std::vector<double> decisions(n_frames);
  for (size_t i = 0; i < n_frames; ++i)
    decisions[i] =
        (mask.energy[i] > mask.threshold_energy && mask.centroid[i] > mask.threshold_centroid)
            ? 1.0
            : 0.0;
  if (cfg.smooth_mask)
    decisions = median_smooth(decisions, cfg.smooth_step, cfg.smooth_order);

  mask.frame_decisions.resize(n_frames);
  for (size_t i = 0; i < n_frames; ++i) {
    mask.frame_decisions[i] = decisions[i] > 0.5;
    if (mask.frame_decisions[i]) {
      const size_t start = i * static_cast<size_t>(hop);
      const size_t stop = std::min(audio.samples.size(), start + static_cast<size_t>(win));
      for (size_t s = start; s < stop; ++s) mask.sample_mask[s] = true;
    }
  }
  return mask;
}

AudioBuffer extract_voiced(const AudioBuffer& audio, const VadMask& mask) {
  if (mask.sample_mask.size() != audio.samples.size())
    throw std::invalid_argument("extract_voiced: mask not aligned to audio");
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  out.samples.reserve(audio.samples.size());
  for (size_t i = 0; i < audio.samples.size(); ++i)
    if (mask.sample_mask[i]) out.samples.push_back(audio.samples[i]);
  return out;
}

}  // namespace nnspeaker::preprocess
