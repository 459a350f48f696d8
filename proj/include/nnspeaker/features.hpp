#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nnspeaker/audio.hpp"
#include "nnspeaker/corpus.hpp"
#include "nnspeaker/preprocess.hpp"

namespace nnspeaker::features {

// A file that cannot produce features (too short, fully unvoiced). Callers
// processing a set log it and drop the file instead of failing the run.
struct SkipFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FeatureMatrix {
  Eigen::MatrixXd data;  // frames x dims
  double win_s = 0.0;
  double hop_s = 0.0;
  std::string speaker_id;
  std::string file_id;

  int frames() const { return static_cast<int>(data.rows()); }
  int dims() const { return static_cast<int>(data.cols()); }
};

struct MfccConfig {
  double win_s = 0.025;
  double hop_s = 0.010;
  double preemphasis = 0.97;
  int n_mels = 20;
  int n_coeffs = 13;     // includes the 0th coefficient
  double log_floor = 1e-10;
};

// Mel cepstra over Hamming-windowed frames: pre-emphasis, power spectrum on
// the next power-of-two transform, triangular mel bands from 0 to Nyquist,
// floored log, orthonormal DCT-II, first n_coeffs kept.
FeatureMatrix mfcc(const AudioBuffer& audio, const MfccConfig& cfg = {});

// Appends delta and double-delta columns (regression slope over +-2 frames
// with replicated edges): 13 dims in, 39 out in [static|delta|ddelta] order.
FeatureMatrix add_deltas(const FeatureMatrix& input);

struct SpeakerStats {
  std::string speaker_id;
  Eigen::VectorXd mean;
  Eigen::VectorXd std_dev;  // population convention, floored at 1e-6
};

SpeakerStats fit_speaker_stats(const std::vector<FeatureMatrix>& features);
FeatureMatrix apply_mvn(const FeatureMatrix& input, const SpeakerStats& stats);

// Stacks win_frames consecutive rows (hop hop_frames) into single vectors;
// with 39-dim input and the 10/3 defaults each output row has 390 dims and
// spans 100 ms with a 30 ms hop. Throws SkipFile when there are fewer than
// win_frames rows.
FeatureMatrix concatenate_frames(const FeatureMatrix& input, int win_frames = 10,
                                 int hop_frames = 3);

// --- feature files -------------------------------------------------------
// Binary, little-endian: magic "NNSF", u32 version, u32 rows, u32 cols,
// f64 win_s, f64 hop_s, then rows*cols f32 row-major.

void write_features(const std::filesystem::path& path, const FeatureMatrix& fm);
FeatureMatrix read_features(const std::filesystem::path& path);

struct FeatureIndexEntry {
  std::string speaker_id;
  std::string file_id;
  std::filesystem::path path;
  int rows = 0;
};

void write_feature_index(const std::vector<FeatureIndexEntry>& entries,
                         const std::filesystem::path& dir);
std::vector<FeatureIndexEntry> read_feature_index(const std::filesystem::path& dir);

// --- whole-set extraction --------------------------------------------------

enum class MvnMode { kSpeaker, kGlobal, kNone };

struct FeaturizeOptions {
  bool apply_vad = true;
  preprocess::VadConfig vad;
  MfccConfig mfcc;
  MvnMode mvn = MvnMode::kSpeaker;
  int concat_win = 10;
  int concat_hop = 3;
};

struct FeaturizeSummary {
  std::vector<FeatureIndexEntry> written;
  std::vector<std::string> skipped;  // "<speaker>/<file>: reason"
};

// Runs the full front end over every manifest entry (normalize, VAD, MFCC,
// deltas, MVN over this set, concatenation) and writes one feature file per
// utterance plus index.csv under out_dir. Mean/variance statistics are
// fitted within the processed set only: per speaker for kSpeaker, pooled for
// kGlobal.
FeaturizeSummary featurize_manifest(const corpus::Manifest& manifest,
                                    const std::filesystem::path& out_dir,
                                    const FeaturizeOptions& opts = {});

}  // namespace nnspeaker::features
