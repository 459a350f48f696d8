#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nnspeaker/corpus.hpp"
#include "nnspeaker/features.hpp"
#include "nnspeaker/nn.hpp"

namespace nnspeaker::verify {

// Mean over frames of the log clipped network outputs: one component per
// enrolled class, all strictly negative.
Eigen::VectorXd mean_log_output(const nn::Model& model, const features::FeatureMatrix& feats);

// Divides by the component sum. With all-negative inputs the outputs are
// positive, sum to one, and the most client-like (least negative) component
// becomes the smallest output, so comparisons flip: smaller means closer.
Eigen::VectorXd normalize_scores(const Eigen::VectorXd& scores);

// One verification trial: a combination of n test files from one speaker,
// scored against every enrolled class.
struct Trial {
  std::string speaker_id;
  std::string combo_id;  // file ids joined with '+'
  bool imposter = false;
  Eigen::VectorXd normalized;  // K components, sum 1
};

struct TrialSet {
  std::vector<Trial> trials;
  std::vector<std::string> client_ids;  // model class labels, index = class
};

// Enumerates all n_files-combinations (lexicographic in canonical file
// order) of each split speaker's test files and scores them. Multi-file
// trials pool the files' frames, which equals a frame-weighted mean.
// Speakers with fewer than n_files files are skipped with a warning.
TrialSet build_trials(const nn::Model& model,
                      const std::vector<features::FeatureIndexEntry>& test_entries,
                      const corpus::SplitPlan& split, int n_files);

// Fraction of client trials whose normalized client component beats (is
// smaller than) that component of every imposter trial, averaged over
// clients and combinations.
double argmax_verify_accuracy_pct(const TrialSet& trials);

// Point where p1*N(x; mu1, sigma1^2) equals (1-p1)*N(x; mu2, sigma2^2),
// solved in closed form (log-quadratic; linear for equal variances).
// Prefers the root between the means, otherwise the one nearest their
// midpoint. Throws NumericError when no real root exists.
double gaussian_intersection(double mu1, double sigma1, double p1, double mu2, double sigma2);

struct SpeakerThreshold {
  double threshold = 0.0;
  double mu_pos = 0.0, sigma_pos = 0.0;
  double mu_neg = 0.0, sigma_neg = 0.0;
  double prior_pos = 0.0;
  bool midpoint_fallback = false;  // no Gaussian intersection existed
  bool global_fallback = false;    // too few trials; pooled fit used
};

struct ThresholdTable {
  std::vector<SpeakerThreshold> by_client;  // index = class index
};

// Per-client positive/negative score lists: positives are the client's own
// trial combinations, negatives every imposter combination, both read off
// the normalized client component.
struct ClientScores {
  std::vector<double> positives;
  std::vector<double> negatives;
};

std::vector<ClientScores> client_scores(const TrialSet& trials);

// Gaussian fits (population variance, 1e-6 sigma floor) with empirical class
// priors; the threshold is the weighted-density intersection, falling back
// to the midpoint when no intersection exists and to a pooled global fit
// when a client has fewer than 2 samples on either side.
ThresholdTable fit_thresholds(const TrialSet& trials);
ThresholdTable fit_thresholds_from(const std::vector<ClientScores>& scores);

// score(k, trial) -> score(k, trial) - T_k.
std::vector<ClientScores> shift_scores(const std::vector<ClientScores>& scores,
                                       const ThresholdTable& table);

struct RocPoint {
  double threshold = 0.0;  // in original score units (lower = more client-like)
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // sorted by FPR, TPR non-decreasing
  double eer_pct = 0.0;
  double auc_pct = 0.0;
  double threshold_at_eer = 0.0;
};

// ROC over (score, is_client) trials. A trial is accepted when its score is
// small enough, so the sweep statistic is the negated score; the EER is the
// linear interpolation of the FPR + TPR = 1 crossing and the AUC uses the
// trapezoid rule. Warns (without flipping) if the AUC lands below 50%.
RocCurve roc(const std::vector<std::pair<double, bool>>& score_is_client);

// Flattens per-client scores into ROC trials.
std::vector<std::pair<double, bool>> pool_trials(const std::vector<ClientScores>& scores);

}  // namespace nnspeaker::verify
