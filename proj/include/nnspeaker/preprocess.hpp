#pragma once

#include <span>
#include <vector>

#include "nnspeaker/audio.hpp"

namespace nnspeaker::preprocess {

// Scales so max |sample| == 1; an all-zero buffer is returned unchanged.
AudioBuffer normalize_amplitude(const AudioBuffer& audio);

// Mean squared amplitude of one analysis frame.
double short_term_energy(std::span<const double> frame);

// Magnitude-weighted mean bin index over the positive-frequency half of the
// frame's DFT (bins 1..K, K = floor(N/2)). An all-zero frame yields the
// sentinel 0: such a frame can never count as voiced.
double spectral_centroid(std::span<const double> frame);

enum class FrameStat { kEnergy, kCentroid };

struct FrameSeries {
  std::vector<double> values;  // one value per frame
  int frame_len = 0;           // samples
  int hop_len = 0;             // samples
};

FrameSeries frame_series(const AudioBuffer& audio, double win_s, double hop_s,
                         FrameStat stat);

// Sliding median, repeated `order` times. The window shrinks symmetrically
// near the edges so its length stays odd; even step widths are rounded up to
// the next odd value. Output length equals input length.
std::vector<double> median_smooth(const std::vector<double>& series, int step, int order);

// Threshold from the value distribution: build an n_bins histogram over
// [min, max], smooth counts with a centered 3-bin moving average, find local
// maxima (strictly greater than every existing neighbor, edge bins compared
// one-sided, and holding at least 5% of the series mass), then combine the
// two lowest-position maxima M1 < M2 as T = (W*M1 + M2) / (W + 1). Falls
// back to 0.5*mean(series) when fewer than two maxima exist, and to the
// constant itself for a constant series.
double histogram_threshold(const std::vector<double>& series, int n_bins, double weight_w);

struct VadConfig {
  double win_s = 0.050;
  double hop_s = 0.025;
  int smooth_step = 7;
  int smooth_order = 2;
  int hist_bins = 30;
  double peak_weight = 3.0;
  bool smooth_mask = true;  // extra median pass over the binary decisions
};

struct VadMask {
  std::vector<bool> frame_decisions;
  std::vector<bool> sample_mask;  // aligned to the source buffer
  double threshold_energy = 0.0;
  double threshold_centroid = 0.0;
  // smoothed per-frame statistics, kept for reporting
  std::vector<double> energy;
  std::vector<double> centroid;
};

// Energy/centroid VAD: a frame is voiced iff both smoothed statistics exceed
// their histogram-derived thresholds; a sample is voiced iff some voiced
// frame covers it. Audio shorter than one frame yields an all-unvoiced mask
// with a warning.
VadMask detect_voice(const AudioBuffer& audio, const VadConfig& cfg = {});

// Concatenation of the voiced samples in original order.
AudioBuffer extract_voiced(const AudioBuffer& audio, const VadMask& mask);

}  // namespace nnspeaker::preprocess
