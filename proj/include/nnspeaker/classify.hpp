#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nnspeaker/features.hpp"
#include "nnspeaker/nn.hpp"

namespace nnspeaker::classify {

// Per-frame log likelihoods: row m holds log of the clipped final-layer
// activations for frame m. All entries are strictly negative and finite.
struct LogScoreFrameMatrix {
  Eigen::MatrixXd scores;  // M x K
  std::string speaker_id;
  std::string file_id;
};

LogScoreFrameMatrix frame_scores(const nn::Model& model, const features::FeatureMatrix& feats);

// Argmax over column sums of the first first_m rows; ties break toward the
// lowest index. Returns a 0-based class index.
int predict(const LogScoreFrameMatrix& scores, int first_m);

// Smallest N such that every prefix of length >= N predicts true_class;
// nullopt when even the full file is misclassified.
std::optional<int> frames_needed(const LogScoreFrameMatrix& scores, int true_class);

// Speech length covered by n concatenated frames. Fractional n is accepted
// so that mean frame counts can be reported as durations.
double duration_from_frames(double n, double t_win = 0.100, double t_hop = 0.030);

struct FramesNeededStats {
  int min_frames = 0;
  double mean_frames = 0.0;
  int max_frames = 0;
  double min_s = 0.0;
  double mean_s = 0.0;
  double max_s = 0.0;
  int n_defined = 0;  // files with a defined frames-needed count
};

struct FileResult {
  std::string speaker_id;
  std::string file_id;
  int true_class = 0;
  int predicted = 0;
  int n_frames = 0;
  int correct_frames = 0;
  std::optional<int> frames_needed;
};

struct ClassificationReport {
  double frame_accuracy_pct = 0.0;
  double file_accuracy_pct = 0.0;
  FramesNeededStats needed;
  std::vector<FileResult> files;
};

// Scores every feature file against the model. Entries must belong to
// speakers among the model's class labels.
ClassificationReport evaluate(const nn::Model& model,
                              const std::vector<features::FeatureIndexEntry>& entries);

}  // namespace nnspeaker::classify
