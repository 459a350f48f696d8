#include "nnspeaker/verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "nnspeaker/classify.hpp"
#include "nnspeaker/common.hpp"

namespace nnspeaker::verify {

Eigen::VectorXd mean_log_output(const nn::Model& model, const features::FeatureMatrix& feats) {
  if (feats.frames() < 1) throw std::invalid_argument("mean_log_output: empty features");
  const auto scores = classify::frame_scores(model, feats);
  return scores.scores.colwise().mean().transpose();
}

Eigen::VectorXd normalize_scores(const Eigen::VectorXd& scores) {
  const double sum = scores.sum();
  if (sum == 0.0) throw NumericError("normalize_scores: zero component sum");
  return scores / sum;
}

TrialSet build_trials(const nn::Model& model,
                      const std::vector<features::FeatureIndexEntry>& test_entries,
                      const corpus::SplitPlan& split, int n_files) {
  if (n_files < 1 || n_files > 5)
    throw std::invalid_argument("build_trials: n_files must be in [1, 5]");

  TrialSet set;
  set.client_ids = model.meta.class_labels;

  const std::set<std::string> clients(split.group_a.begin(), split.group_a.end());
  const std::set<std::string> imposters(split.group_b.begin(), split.group_b.end());

  // Per-file log-score sums; a combination's mean over pooled frames is the
  // ratio of summed sums to summed frame counts.
  struct FileScore {
    std::string file_id;
    Eigen::VectorXd sum_log;
    int frames = 0;
  };
  std::map<std::string, std::vector<FileScore>> by_speaker;
  std::vector<std::string> speaker_order;
  for (const auto& e : test_entries) {
    if (!clients.count(e.speaker_id) && !imposters.count(e.speaker_id)) continue;
    auto fm = features::read_features(e.path);
    fm.speaker_id = e.speaker_id;
    fm.file_id = e.file_id;
    const auto scores = classify::frame_scores(model, fm);
    if (!by_speaker.count(e.speaker_id)) speaker_order.push_back(e.speaker_id);
    by_speaker[e.speaker_id].push_back(
        {e.file_id, scores.scores.colwise().sum().transpose(),
         static_cast<int>(scores.scores.rows())});
  }

  for (const auto& speaker : speaker_order) {
    const auto& files = by_speaker.at(speaker);
    const int n = static_cast<int>(files.size());
    if (n < n_files) {
      warn("speaker " + speaker + " has " + std::to_string(n) +
           " test files, fewer than the trial size; skipped");
      continue;
    }
    // lexicographic index combinations
    std::vector<int> idx(static_cast<size_t>(n_files));
    for (int i = 0; i < n_files; ++i) idx[static_cast<size_t>(i)] = i;
    while (true) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(model.n_classes());
      int frames = 0;
      std::string combo_id;
      for (int i : idx) {
        sum += files[static_cast<size_t>(i)].sum_log;
        frames += files[static_cast<size_t>(i)].frames;
        if (!combo_id.empty()) combo_id += '+';
        combo_id += files[static_cast<size_t>(i)].file_id;
      }
      Trial trial;
      trial.speaker_id = speaker;
      trial.combo_id = combo_id;
      trial.imposter = imposters.count(speaker) > 0;
      trial.normalized = normalize_scores(sum / static_cast<double>(frames));
      set.trials.push_back(std::move(trial));

      int pos = n_files - 1;
      while (pos >= 0 && idx[static_cast<size_t>(pos)] == n - n_files + pos) --pos;
      if (pos < 0) break;
      ++idx[static_cast<size_t>(pos)];
      for (int i = pos + 1; i < n_files; ++i)
        idx[static_cast<size_t>(i)] = idx[static_cast<size_t>(i - 1)] + 1;
    }
  }
  return set;
}

std::vector<ClientScores> client_scores(const TrialSet& set) {
  std::map<std::string, int> class_of;
  for (size_t i = 0; i < set.client_ids.size(); ++i)
    class_of[set.client_ids[i]] = static_cast<int>(i);

  std::vector<ClientScores> out(set.client_ids.size());
  for (const auto& trial : set.trials) {
    if (trial.imposter) {
      for (size_t k = 0; k < out.size(); ++k)
        out[k].negatives.push_back(trial.normalized[static_cast<Eigen::Index>(k)]);
    } else {
      const auto it = class_of.find(trial.speaker_id);
      if (it == class_of.end()) continue;  // client without an enrolled class
      out[static_cast<size_t>(it->second)].positives.push_back(
          trial.normalized[it->second]);
    }
  }
  return out;
}

double argmax_verify_accuracy_pct(const TrialSet& set) {
  const auto scores = client_scores(set);
  bool any_neg = false, any_pos = false;
  for (const auto& cs : scores) {
    any_neg |= !cs.negatives.empty();
    any_pos |= !cs.positives.empty();
  }
  if (!any_neg) throw std::invalid_argument("argmax_verify_accuracy: no imposter trials");
  if (!any_pos) throw std::invalid_argument("argmax_verify_accuracy: no client trials");

  long total = 0, wins = 0;
  for (const auto& cs : scores) {
    if (cs.positives.empty() || cs.negatives.empty()) continue;
    const double best_neg = *std::min_element(cs.negatives.begin(), cs.negatives.end());
    for (double p : cs.positives) {
      ++total;
      if (p < best_neg) ++wins;  // must beat every imposter
    }
  }
  if (total == 0) throw std::invalid_argument("argmax_verify_accuracy: no usable trials");
  return 100.0 * static_cast<double>(wins) / static_cast<double>(total);
}

double gaussian_intersection(double mu1, double sigma1, double p1, double mu2, double sigma2) {
  if (sigma1 < 1e-6 || sigma2 < 1e-6)
    throw std::invalid_argument("gaussian_intersection: sigma below floor");
  if (!(p1 > 0.0 && p1 < 1.0))
    throw std::invalid_argument("gaussian_intersection: prior outside (0, 1)");
  if (mu1 == mu2) throw std::invalid_argument("gaussian_intersection: equal means");

  // log p1 - log sigma1 - (x-mu1)^2/(2 sigma1^2) =
  // log(1-p1) - log sigma2 - (x-mu2)^2/(2 sigma2^2)
  const double r = std::log((1.0 - p1) * sigma1 / (p1 * sigma2));
  const double a = 1.0 / (2.0 * sigma2 * sigma2) - 1.0 / (2.0 * sigma1 * sigma1);
  const double b = mu1 / (sigma1 * sigma1) - mu2 / (sigma2 * sigma2);
  const double c =
      mu2 * mu2 / (2.0 * sigma2 * sigma2) - mu1 * mu1 / (2.0 * sigma1 * sigma1) - r;

  const double lo = std::min(mu1, mu2), hi = std::max(mu1, mu2);
  const double mid = 0.5 * (mu1 + mu2);

  if (a == 0.0) {  // equal variances: the log-density difference is linear
    if (b == 0.0) throw NumericError("gaussian_intersection: degenerate linear equation");
    return -c / b;
  }

  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) throw NumericError("gaussian_intersection: no real intersection");
  const double sq = std::sqrt(disc);
  const double r1 = (-b + sq) / (2.0 * a);
  const double r2 = (-b - sq) / (2.0 * a);

  const bool r1_in = r1 >= lo && r1 <= hi;
  const bool r2_in = r2 >= lo && r2 <= hi;
  if (r1_in && !r2_in) return r1;
  if (r2_in && !r1_in) return r2;
  return std::abs(r1 - mid) <= std::abs(r2 - mid) ? r1 : r2;
}

namespace {

struct Gaussian {
  double mu = 0.0;
  double sigma = 0.0;
};

Gaussian fit_gaussian(const std::vector<double>& values) {
  Gaussian g;
  const double n = static_cast<double>(values.size());
  for (double v : values) g.mu += v;
  g.mu /= n;
  double var = 0.0;
  for (double v : values) var += (v - g.mu) * (v - g.mu);
  var /= n;  // population convention
  g.sigma = std::max(std::sqrt(var), 1e-6);
  return g;
}

double threshold_for(const Gaussian& pos, const Gaussian& neg, double prior_pos,
                     bool* midpoint_fallback) {
  *midpoint_fallback = false;
  if (pos.mu == neg.mu) {
    *midpoint_fallback = true;
    return pos.mu;
  }
  try {
    return gaussian_intersection(pos.mu, pos.sigma, prior_pos, neg.mu, neg.sigma);
  } catch (const NumericError&) {
    *midpoint_fallback = true;
    return 0.5 * (pos.mu + neg.mu);
  }
}

}  // namespace

ThresholdTable fit_thresholds_from(const std::vector<ClientScores>& scores) {
  bool any = false;
  for (const auto& cs : scores) any |= !cs.negatives.empty();
  if (!any) throw std::invalid_argument("fit_thresholds: no imposter trials");

  // Pooled fallback for clients with too few samples on either side.
  std::vector<double> pooled_pos, pooled_neg;
  for (const auto& cs : scores) {
    pooled_pos.insert(pooled_pos.end(), cs.positives.begin(), cs.positives.end());
    pooled_neg.insert(pooled_neg.end(), cs.negatives.begin(), cs.negatives.end());
  }

  ThresholdTable table;
  table.by_client.resize(scores.size());
  for (size_t k = 0; k < scores.size(); ++k) {
    const bool enough = scores[k].positives.size() >= 2 && scores[k].negatives.size() >= 2;
    const auto& pos_values = enough ? scores[k].positives : pooled_pos;
    const auto& neg_values = enough ? scores[k].negatives : pooled_neg;
    if (pos_values.size() < 2 || neg_values.size() < 2)
      throw std::invalid_argument("fit_thresholds: fewer than 2 samples even after pooling");
    if (!enough)
      warn("client " + std::to_string(k) + " has too few trials; pooled threshold used");

    SpeakerThreshold& st = table.by_client[k];
    const Gaussian pos = fit_gaussian(pos_values);
    const Gaussian neg = fit_gaussian(neg_values);
    st.mu_pos = pos.mu;
    st.sigma_pos = pos.sigma;
    st.mu_neg = neg.mu;
    st.sigma_neg = neg.sigma;
    st.prior_pos = static_cast<double>(pos_values.size()) /
                   static_cast<double>(pos_values.size() + neg_values.size());
    st.global_fallback = !enough;
    st.threshold = threshold_for(pos, neg, st.prior_pos, &st.midpoint_fallback);
  }
  return table;
}

ThresholdTable fit_thresholds(const TrialSet& trials) {
  return fit_thresholds_from(client_scores(trials));
}

std::vector<ClientScores> shift_scores(const std::vector<ClientScores>& scores,
                                       const ThresholdTable& table) {
  if (table.by_client.size() != scores.size())
    throw std::invalid_argument("shift_scores: threshold table does not cover all clients");
  std::vector<ClientScores> out = scores;
  for (size_t k = 0; k < out.size(); ++k) {
    const double t = table.by_client[k].threshold;
    for (double& v : out[k].positives) v -= t;
    for (double& v : out[k].negatives) v -= t;
  }
  return out;
}

std::vector<std::pair<double, bool>> pool_trials(const std::vector<ClientScores>& scores) {
  std::vector<std::pair<double, bool>> out;
  for (const auto& cs : scores) {
    for (double v : cs.positives) out.emplace_back(v, true);
    for (double v : cs.negatives) out.emplace_back(v, false);
  }
  return out;
}

RocCurve roc(const std::vector<std::pair<double, bool>>& score_is_client) {
  long n_pos = 0, n_neg = 0;
  for (const auto& [score, is_client] : score_is_client) (is_client ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("roc: need both client and imposter trials");

  // Sweep statistic: negated score (accept when the score is small).
  std::vector<std::pair<double, bool>> sweep;
  sweep.reserve(score_is_client.size());
  for (const auto& [score, is_client] : score_is_client) sweep.emplace_back(-score, is_client);
  std::sort(sweep.begin(), sweep.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve curve;
  long tp = 0, fp = 0;
  for (size_t i = 0; i < sweep.size();) {
    const double stat = sweep[i].first;
    for (; i < sweep.size() && sweep[i].first == stat; ++i)
      (sweep[i].second ? tp : fp) += 1;
    curve.points.push_back({-stat, static_cast<double>(fp) / static_cast<double>(n_neg),
                            static_cast<double>(tp) / static_cast<double>(n_pos)});
  }

  // EER: interpolate the FPR + TPR = 1 crossing along the curve (the sweep
  // starts at the implicit (0, 0) vertex).
  double prev_fpr = 0.0, prev_tpr = 0.0, prev_thresh = curve.points.front().threshold;
  double eer = 0.0, eer_thresh = curve.points.front().threshold;
  for (const auto& p : curve.points) {
    const double d0 = prev_fpr + prev_tpr - 1.0;
    const double d1 = p.fpr + p.tpr - 1.0;
    if (d1 >= 0.0) {
      const double alpha = d1 == d0 ? 1.0 : (0.0 - d0) / (d1 - d0);
      eer = prev_fpr + alpha * (p.fpr - prev_fpr);
      eer_thresh = prev_thresh + alpha * (p.threshold - prev_thresh);
      break;
    }
    prev_fpr = p.fpr;
    prev_tpr = p.tpr;
    prev_thresh = p.threshold;
  }
  curve.eer_pct = 100.0 * eer;
  curve.threshold_at_eer = eer_thresh;

  // AUC by the trapezoid rule from (0, 0).
  double auc = 0.0;
  prev_fpr = 0.0;
  prev_tpr = 0.0;
  for (const auto& p : curve.points) {
    auc += (p.fpr - prev_fpr) * 0.5 * (p.tpr + prev_tpr);
    prev_fpr = p.fpr;
    prev_tpr = p.tpr;
  }
  curve.auc_pct = 100.0 * auc;
  if (curve.auc_pct < 50.0)
    warn("ROC AUC below 50%; decision polarity may not match the score distribution");
  return curve;
}

}  // namespace nnspeaker::verify
