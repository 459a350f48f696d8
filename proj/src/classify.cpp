#include "nnspeaker/classify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace nnspeaker::classify {

namespace {
constexpr double kClip = 1e-12;
}

LogScoreFrameMatrix frame_scores(const nn::Model& model, const features::FeatureMatrix& feats) {
  if (feats.dims() != model.input_dims())
    throw std::invalid_argument("frame_scores: feature dims do not match the model");
  const auto activations = nn::forward(model, feats.data);
  LogScoreFrameMatrix out;
  out.speaker_id = feats.speaker_id;
  out.file_id = feats.file_id;
  out.scores = activations.back().array().max(kClip).min(1.0 - kClip).log().matrix();
  return out;
}

int predict(const LogScoreFrameMatrix& scores, int first_m) {
  const int m = static_cast<int>(scores.scores.rows());
  if (first_m < 1 || first_m > m) throw std::invalid_argument("predict: first_m out of range");
  const Eigen::RowVectorXd sums = scores.scores.topRows(first_m).colwise().sum();
  int best = 0;
  for (int k = 1; k < sums.size(); ++k)
    if (sums[k] > sums[best]) best = k;
  return best;
}

std::optional<int> frames_needed(const LogScoreFrameMatrix& scores, int true_class) {
  const int m = static_cast<int>(scores.scores.rows());
  if (m < 1) throw std::invalid_argument("frames_needed: empty scores");

  // Walk prefix sums once; the answer is one past the last incorrect prefix.
  Eigen::RowVectorXd sums = Eigen::RowVectorXd::Zero(scores.scores.cols());
  int last_wrong = 0;
  for (int n = 1; n <= m; ++n) {
    sums += scores.scores.row(n - 1);
    int best = 0;
    for (int k = 1; k < sums.size(); ++k)
      if (sums[k] > sums[best]) best = k;
    if (best != true_class) last_wrong = n;
  }
  if (last_wrong == m) return std::nullopt;
  return last_wrong + 1;
}

double duration_from_frames(double n, double t_win, double t_hop) {
  if (n < 1.0) throw std::invalid_argument("duration_from_frames: need n >= 1");
  return (n - 1.0) * t_hop + t_win;
}

ClassificationReport evaluate(const nn::Model& model,
                              const std::vector<features::FeatureIndexEntry>& entries) {
  if (entries.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::map<std::string, int> class_of;
  for (size_t i = 0; i < model.meta.class_labels.size(); ++i)
    class_of[model.meta.class_labels[i]] = static_cast<int>(i);

  ClassificationReport report;
  long total_frames = 0, correct_frames = 0;
  int correct_files = 0;
  std::vector<int> needed_counts;

  for (const auto& e : entries) {
    const auto it = class_of.find(e.speaker_id);
    if (it == class_of.end())
      throw std::invalid_argument("evaluate: speaker outside the model's classes: " + e.speaker_id);
    const int true_class = it->second;

    auto feats = features::read_features(e.path);
    feats.speaker_id = e.speaker_id;
    feats.file_id = e.file_id;
    const LogScoreFrameMatrix scores = frame_scores(model, feats);

    FileResult fr;
    fr.speaker_id = e.speaker_id;
    fr.file_id = e.file_id;
    fr.true_class = true_class;
    fr.n_frames = static_cast<int>(scores.scores.rows());
    for (int m = 0; m < fr.n_frames; ++m) {
      Eigen::Index arg = 0;
      scores.scores.row(m).maxCoeff(&arg);
      if (static_cast<int>(arg) == true_class) ++fr.correct_frames;
    }
    fr.predicted = predict(scores, fr.n_frames);
    fr.frames_needed = frames_needed(scores, true_class);

    total_frames += fr.n_frames;
    correct_frames += fr.correct_frames;
    if (fr.predicted == true_class) ++correct_files;
    if (fr.frames_needed) needed_counts.push_back(*fr.frames_needed);
    report.files.push_back(std::move(fr));
  }

  report.frame_accuracy_pct = 100.0 * static_cast<double>(correct_frames) /
                              static_cast<double>(total_frames);
  report.file_accuracy_pct = 100.0 * correct_files / static_cast<double>(report.files.size());

  if (!needed_counts.empty()) {
    report.needed.n_defined = static_cast<int>(needed_counts.size());
    report.needed.min_frames = *std::min_element(needed_counts.begin(), needed_counts.end());
    report.needed.max_frames = *std::max_element(needed_counts.begin(), needed_counts.end());
    double sum = 0.0;
    for (int n : needed_counts) sum += n;
    report.needed.mean_frames = sum / static_cast<double>(needed_counts.size());
    report.needed.min_s = duration_from_frames(report.needed.min_frames);
    report.needed.mean_s = duration_from_frames(report.needed.mean_frames);
    report.needed.max_s = duration_from_frames(report.needed.max_frames);
  }
  return report;
}

}  // namespace nnspeaker::classify
