// Acceptance suite: one criterion per function, one PASS/FAIL line each.
// Returns the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nnspeaker/audio.hpp"
#include "nnspeaker/classify.hpp"
#include "nnspeaker/common.hpp"
#include "nnspeaker/corpus.hpp"
#include "nnspeaker/features.hpp"
#include "nnspeaker/nn.hpp"
#include "nnspeaker/pipeline.hpp"
#include "nnspeaker/preprocess.hpp"
#include "nnspeaker/synth.hpp"
#include "nnspeaker/verify.hpp"

namespace fs = std::filesystem;
using namespace nnspeaker;

namespace {

struct Outcome {
  bool pass = false;
  bool skipped = false;
  std::string detail;
};

double unit(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * ((static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53);
}

// ---------------------------------------------------------------------------
// Shared desk-scale corpus (seed 7, 20 speakers, 10 files, 2.5 s, 8 kHz).

struct DeskCorpus {
  fs::path root;
  corpus::Manifest manifest;
  fs::path train_features;
  fs::path test_features;
};

const DeskCorpus& desk_corpus(const fs::path& work) {
  static DeskCorpus corpus_state;
  static bool ready = false;
  if (ready) return corpus_state;

  corpus::SynthConfig synth;
  synth.seed = 7;
  synth.n_speakers = 20;
  synth.files_per_speaker = 10;
  synth.duration_s = 2.5;
  corpus_state.root = work / "corpus";
  corpus_state.manifest = corpus::generate_synthetic_corpus(synth, corpus_state.root);

  // Front end over the full split (all speakers enrolled): train features
  // from the train categories, test features from the test categories.
  // Speaker-level statistics only involve a speaker's own files, so smaller
  // enrolled subsets can safely reuse these files.
  const auto split = corpus::make_split(corpus_state.manifest,
                                        static_cast<int>(corpus_state.manifest.speakers().size()));
  corpus::Manifest train_manifest, test_manifest;
  for (const auto& e : corpus_state.manifest.entries) {
    if (split.is_train_category(e.category)) train_manifest.entries.push_back(e);
    if (split.is_test_category(e.category)) test_manifest.entries.push_back(e);
  }
  corpus_state.train_features = work / "features" / "train";
  corpus_state.test_features = work / "features" / "test";
  features::FeaturizeOptions opts;  // defaults: VAD on, SMVN, 10x3 concat
  features::featurize_manifest(train_manifest, corpus_state.train_features, opts);
  features::featurize_manifest(test_manifest, corpus_state.test_features, opts);
  ready = true;
  return corpus_state;
}

std::vector<features::FeatureIndexEntry> entries_for_speakers(
    const std::vector<features::FeatureIndexEntry>& entries,
    const std::vector<std::string>& speakers) {
  const std::set<std::string> keep(speakers.begin(), speakers.end());
  std::vector<features::FeatureIndexEntry> out;
  for (const auto& e : entries)
    if (keep.count(e.speaker_id)) out.push_back(e);
  return out;
}

nn::TrainResult train_on(const DeskCorpus& corpus_state, const std::vector<std::string>& clients,
                         int hidden, uint64_t seed) {
  const auto train_entries =
      entries_for_speakers(features::read_feature_index(corpus_state.train_features), clients);
  const nn::LabeledBatch full = nn::load_batch(train_entries, clients);
  const auto [train_set, monitor_set] = nn::split_monitor(full);

  nn::TrainConfig cfg;  // full default schedule {3,1,0.3,0.1,0}
  cfg.seed = seed;
  std::vector<int> sizes = {static_cast<int>(train_set.x.cols()), hidden,
                            static_cast<int>(clients.size())};
  nn::TrainResult result = nn::train(train_set, monitor_set, sizes, cfg);
  result.model.meta.class_labels = clients;
  return result;
}

// ---------------------------------------------------------------------------
// Criteria.

Outcome c1_gradient() {
  Outcome o;
  const double err0 = nn::gradient_check({9, 5, 4}, 7, 1, 0.0);
  const double err1 = nn::gradient_check({9, 5, 4}, 7, 1, 2.5);
  o.pass = err0 < 1e-6 && err1 < 1e-6;
  std::ostringstream s;
  s << "max rel err " << err0 << " (lambda 0), " << err1 << " (lambda 2.5)";
  o.detail = s.str();
  return o;
}

Outcome c2_durations() {
  Outcome o;
  const auto near = [](double a, double b) { return std::abs(a - b) < 1e-12; };
  const double mean_dur = classify::duration_from_frames(13.55);
  o.pass = near(classify::duration_from_frames(2), 0.13) &&
           near(classify::duration_from_frames(6), 0.25) &&
           near(classify::duration_from_frames(37), 1.18) && near(mean_dur, 0.4765) &&
           std::round(mean_dur * 100.0) == 48.0;
  std::ostringstream s;
  s << "2->" << classify::duration_from_frames(2) << " 6->" << classify::duration_from_frames(6)
    << " 37->" << classify::duration_from_frames(37) << " 13.55->" << mean_dur;
  o.detail = s.str();
  return o;
}

Outcome c3_intersection() {
  Outcome o;
  const auto log_density = [](double x, double mu, double sigma, double p) {
    return std::log(p) - std::log(sigma) - (x - mu) * (x - mu) / (2.0 * sigma * sigma);
  };
  std::mt19937_64 rng(33);
  double worst = 0.0;
  int tested = 0;
  while (tested < 100) {
    const double mu1 = unit(rng, -3, -0.5), mu2 = unit(rng, 0.5, 3);
    const double s1 = unit(rng, 0.2, 1.5), s2 = unit(rng, 0.2, 1.5);
    const double p1 = unit(rng, 0.05, 0.95);
    auto g = [&](double x) {
      return log_density(x, mu1, s1, p1) - log_density(x, mu2, s2, 1 - p1);
    };
    if (g(mu1) * g(mu2) >= 0) continue;
    ++tested;
    double lo = mu1, hi = mu2;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (g(lo) * g(mid) <= 0)
        hi = mid;
      else
        lo = mid;
    }
    const double closed = verify::gaussian_intersection(mu1, s1, p1, mu2, s2);
    worst = std::max(worst, std::abs(closed - 0.5 * (lo + hi)));
  }
  const double sym1 = std::abs(verify::gaussian_intersection(-1, 1, 0.5, 1, 1));
  const double sym2 = std::abs(verify::gaussian_intersection(0, 1, 0.5, 4, 1) - 2.0);
  o.pass = worst < 1e-9 && sym1 < 1e-12 && sym2 < 1e-12;
  std::ostringstream s;
  s << "bisection worst gap " << worst << ", symmetric gaps " << sym1 << ", " << sym2;
  o.detail = s.str();
  return o;
}

Outcome c4_vad() {
  Outcome o;
  const int fs = 8000;
  AudioBuffer audio;
  audio.sample_rate = fs;
  // 1 s quiet noise, 1 s voiced buzz, 1 s quiet noise.
  {
    std::mt19937_64 rng(91);
    double lp = 0.0;
    std::vector<double> noise(2 * fs);
    for (auto& v : noise) {
      lp = 0.98 * lp + 0.02 * unit(rng, -1, 1);
      v = lp;
    }
    double mx = 0;
    for (double v : noise) mx = std::max(mx, std::abs(v));
    for (auto& v : noise) v *= 0.001 / mx;

    std::vector<double> voiced(fs, 0.0);
    double y1 = 0, y2 = 0, phase = 1.0;
    const double r = std::exp(-std::numbers::pi * 140.0 / fs);
    const double c1 = 2 * r * std::cos(2 * std::numbers::pi * 700.0 / fs), c2 = -r * r;
    for (int i = 0; i < fs; ++i) {
      phase += 115.0 / fs;
      double x = 0;
      if (phase >= 1.0) {
        phase -= 1.0;
        x = 1.0;
      }
      const double y = (1 - r) * x + c1 * y1 + c2 * y2;
      y2 = y1;
      y1 = y;
      voiced[static_cast<size_t>(i)] = y;
    }
    double vp = 0;
    for (double v : voiced) vp = std::max(vp, std::abs(v));
    for (auto& v : voiced) v /= vp;

    audio.samples.assign(noise.begin(), noise.begin() + fs);
    audio.samples.insert(audio.samples.end(), voiced.begin(), voiced.end());
    audio.samples.insert(audio.samples.end(), noise.begin() + fs, noise.end());
  }
  audio = preprocess::normalize_amplitude(audio);
  const auto mask = preprocess::detect_voice(audio);
  const auto coverage = [&](size_t from, size_t to) {
    size_t on = 0;
    for (size_t i = from; i < to; ++i) on += mask.sample_mask[i] ? 1 : 0;
    return static_cast<double>(on) / static_cast<double>(to - from);
  };
  const double mid = coverage(fs, 2 * fs);
  const double head = coverage(0, fs);
  const double tail = coverage(2 * fs, 3 * fs);
  o.pass = mid >= 0.90 && head <= 0.10 && tail <= 0.10;
  std::ostringstream s;
  s << "voiced coverage: head " << 100 * head << "%, middle " << 100 * mid << "%, tail "
    << 100 * tail << "%";
  o.detail = s.str();
  return o;
}

Outcome c5_smvn(const fs::path& work) {
  Outcome o;
  const DeskCorpus& corpus_state = desk_corpus(work);

  features::MfccConfig mfcc_cfg;
  double worst_mean = 0.0, worst_var = 0.0;
  for (const auto& speaker : corpus_state.manifest.speakers()) {
    std::vector<features::FeatureMatrix> mats;
    for (const auto& e : corpus_state.manifest.entries_for(speaker)) {
      AudioBuffer audio = preprocess::normalize_amplitude(read_wav(e.path));
      const auto mask = preprocess::detect_voice(audio);
      audio = preprocess::extract_voiced(audio, mask);
      mats.push_back(features::add_deltas(features::mfcc(audio, mfcc_cfg)));
    }
    const auto stats = features::fit_speaker_stats(mats);
    for (auto& fm : mats) fm = features::apply_mvn(fm, stats);

    long frames = 0;
    for (const auto& fm : mats) frames += fm.frames();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(39), sum_sq = Eigen::VectorXd::Zero(39);
    for (const auto& fm : mats) {
      sum += fm.data.colwise().sum().transpose();
      sum_sq += fm.data.array().square().colwise().sum().matrix().transpose();
    }
    const Eigen::VectorXd mean = sum / static_cast<double>(frames);
    const Eigen::VectorXd var =
        sum_sq / static_cast<double>(frames) - mean.array().square().matrix();
    worst_mean = std::max(worst_mean, mean.cwiseAbs().maxCoeff());
    worst_var = std::max(worst_var, (var.array() - 1.0).abs().maxCoeff());
  }
  o.pass = worst_mean < 1e-9 && worst_var < 1e-6;
  std::ostringstream s;
  s << "worst |mean| " << worst_mean << ", worst |var-1| " << worst_var;
  o.detail = s.str();
  return o;
}

Outcome c6_classification(const fs::path& work) {
  Outcome o;
  const DeskCorpus& corpus_state = desk_corpus(work);
  const auto clients = corpus_state.manifest.speakers();  // all 20 enrolled

  const auto result = train_on(corpus_state, clients, 100, 1);
  const auto test_entries =
      entries_for_speakers(features::read_feature_index(corpus_state.test_features), clients);
  const auto report = classify::evaluate(result.model, test_entries);

  o.pass = report.file_accuracy_pct >= 95.0 && report.frame_accuracy_pct >= 50.0;
  std::ostringstream s;
  s << "test file accuracy " << report.file_accuracy_pct << "%, frame accuracy "
    << report.frame_accuracy_pct << "% (" << result.model.meta.iterations << " iterations)";
  o.detail = s.str();
  return o;
}

Outcome c7_verification(const fs::path& work) {
  Outcome o;
  const DeskCorpus& corpus_state = desk_corpus(work);
  const auto split = corpus::make_split(corpus_state.manifest, 12);
  const auto test_entries = features::read_feature_index(corpus_state.test_features);

  int wins = 0;
  double eer_seed7 = 1e9;
  std::ostringstream s;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const auto result = train_on(corpus_state, split.group_a, 100, seed);
    const auto trials = verify::build_trials(result.model, test_entries, split, 2);
    const auto scores = verify::client_scores(trials);
    const auto table = verify::fit_thresholds_from(scores);
    const double eer_global = verify::roc(verify::pool_trials(scores)).eer_pct;
    const double eer_shifted =
        verify::roc(verify::pool_trials(verify::shift_scores(scores, table))).eer_pct;
    if (eer_shifted <= eer_global + 1.0) ++wins;
    if (seed == 7) eer_seed7 = eer_shifted;
    s << "seed " << seed << ": global " << eer_global << "%, per-speaker " << eer_shifted
      << "%; ";
  }
  o.pass = wins >= 8 && eer_seed7 <= 15.0;
  s << "wins " << wins << "/10";
  o.detail = s.str();
  return o;
}

Outcome c8_roc() {
  Outcome o;
  std::vector<std::pair<double, bool>> separated;
  for (int i = 0; i < 40; ++i) separated.emplace_back(0.05 + 1e-4 * i, true);
  for (int i = 0; i < 160; ++i) separated.emplace_back(0.5 + 1e-4 * i, false);
  const auto perfect = verify::roc(separated);

  std::mt19937_64 rng(55);
  std::vector<std::pair<double, bool>> shuffled;
  for (int i = 0; i < 10000; ++i) shuffled.emplace_back(unit(rng, 0, 1), (rng() & 1) != 0);
  const auto random_curve = verify::roc(shuffled);

  double worst_sum = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd v(8);
    for (int i = 0; i < 8; ++i) v[i] = unit(rng, -12, -0.05);
    worst_sum = std::max(worst_sum, std::abs(verify::normalize_scores(v).sum() - 1.0));
  }

  o.pass = perfect.eer_pct == 0.0 && perfect.auc_pct == 100.0 && random_curve.eer_pct >= 45.0 &&
           random_curve.eer_pct <= 55.0 && worst_sum <= 1e-12;
  std::ostringstream s;
  s << "perfect EER " << perfect.eer_pct << "% AUC " << perfect.auc_pct << "%, shuffled EER "
    << random_curve.eer_pct << "%, worst |sum-1| " << worst_sum;
  o.detail = s.str();
  return o;
}

Outcome c9_determinism(const fs::path& work) {
  Outcome o;
  auto cfg = pipeline::RunConfig::defaults();
  cfg.set("corpus.root", (work / "det_corpus").generic_string());
  cfg.set("run.out", (work / "det_out").generic_string());
  cfg.set("synth.enabled", "true");
  cfg.set("synth.seed", "11");
  cfg.set("synth.speakers", "5");
  cfg.set("synth.files", "6");
  cfg.set("synth.duration_s", "1.2");
  cfg.set("corpus.n_in_domain", "4");
  cfg.set("train.hidden", "12");
  cfg.set("train.schedule", "1,0");
  cfg.set("train.max_total_iters", "60");

  const fs::path out = work / "det_out";
  const auto first = pipeline::run_pipeline(cfg, {});
  if (!first.ok) {
    o.detail = "first run failed at " + first.failed_stage + ": " + first.error;
    return o;
  }
  const std::vector<fs::path> artifacts = {out / "model.nnsm", out / "classify_report.json",
                                           out / "verify_report.json", out / "roc.csv"};
  std::vector<uint64_t> hashes;
  for (const auto& p : artifacts) hashes.push_back(hash_file(p));

  fs::remove_all(out);
  const auto second = pipeline::run_pipeline(cfg, {});
  if (!second.ok) {
    o.detail = "second run failed at " + second.failed_stage + ": " + second.error;
    return o;
  }
  bool identical = true;
  for (size_t i = 0; i < artifacts.size(); ++i)
    identical &= hash_file(artifacts[i]) == hashes[i];
  o.pass = identical;
  o.detail = identical ? "model and reports byte-identical across runs"
                       : "artifact bytes differ between runs";
  return o;
}

Outcome c10_timit(const fs::path& work) {
  Outcome o;
  const char* root_env = std::getenv("NNSPEAKER_TIMIT_ROOT");
  if (root_env == nullptr || std::string(root_env).empty()) {
    o.skipped = true;
    o.detail = "set NNSPEAKER_TIMIT_ROOT to the 8 kHz TIMIT train folder to enable";
    return o;
  }

  // Full-scale protocol: all male train-folder speakers, first 200 enrolled,
  // SX training, SA/SI testing, network 390:200:200.
  const corpus::Manifest manifest = corpus::build_manifest(root_env, 'm');
  const auto split = corpus::make_split(manifest, 200);
  corpus::Manifest train_manifest, test_manifest;
  for (const auto& e : manifest.entries) {
    const bool in_a = std::find(split.group_a.begin(), split.group_a.end(), e.speaker_id) !=
                      split.group_a.end();
    if (in_a && split.is_train_category(e.category)) train_manifest.entries.push_back(e);
    if (split.is_test_category(e.category)) test_manifest.entries.push_back(e);
  }
  const fs::path feat_dir = work / "timit_features";
  features::FeaturizeOptions opts;
  const auto train_sum = features::featurize_manifest(train_manifest, feat_dir / "train", opts);
  const auto test_sum = features::featurize_manifest(test_manifest, feat_dir / "test", opts);

  std::vector<std::string> clients;
  {
    std::set<std::string> present;
    for (const auto& e : train_sum.written) present.insert(e.speaker_id);
    for (const auto& s : split.group_a)
      if (present.count(s)) clients.push_back(s);
  }
  const nn::LabeledBatch train_set = nn::load_batch(train_sum.written, clients);
  auto test_entries_a = entries_for_speakers(test_sum.written, clients);
  const nn::LabeledBatch monitor_set = nn::load_batch(test_entries_a, clients);

  nn::TrainConfig cfg;
  cfg.seed = 1;
  nn::TrainResult result = nn::train(
      train_set, monitor_set, {static_cast<int>(train_set.x.cols()), 200,
                               static_cast<int>(clients.size())}, cfg);
  result.model.meta.class_labels = clients;

  const auto report = classify::evaluate(result.model, test_entries_a);
  const auto trials = verify::build_trials(result.model, test_sum.written, split, 2);
  const auto scores = verify::client_scores(trials);
  const auto table = verify::fit_thresholds_from(scores);
  const double eer_global = verify::roc(verify::pool_trials(scores)).eer_pct;
  const double eer_shifted =
      verify::roc(verify::pool_trials(verify::shift_scores(scores, table))).eer_pct;

  const bool classification_ok = report.file_accuracy_pct == 100.0 &&
                                 std::abs(report.frame_accuracy_pct - 71.42) <= 2.0;
  const bool verification_ok =
      eer_shifted >= 4.0 && eer_shifted <= 9.0 && eer_shifted < eer_global;
  o.pass = classification_ok && verification_ok;
  std::ostringstream s;
  s << "file " << report.file_accuracy_pct << "%, frame " << report.frame_accuracy_pct
    << "%, EER global " << eer_global << "% -> per-speaker " << eer_shifted << "%";
  o.detail = s.str();
  return o;
}

}  // namespace

int main() {
  const fs::path work = fs::current_path() / "acceptance_work";
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"C1 gradient correctness (9:5:4, lambda 0 and 2.5)", [] { return c1_gradient(); }},
      {"C2 frame-count duration arithmetic", [] { return c2_durations(); }},
      {"C3 gaussian intersection vs bisection", [] { return c3_intersection(); }},
      {"C4 voice activity detection on constructed audio", [] { return c4_vad(); }},
      {"C5 speaker-level MVN self-consistency", [&] { return c5_smvn(work); }},
      {"C6 desk-scale classification accuracy", [&] { return c6_classification(work); }},
      {"C7 desk-scale verification EER", [&] { return c7_verification(work); }},
      {"C8 ROC and score normalization properties", [] { return c8_roc(); }},
      {"C9 pipeline determinism", [&] { return c9_determinism(work); }},
      {"C10 TIMIT reproduction (data-gated)", [&] { return c10_timit(work); }},
  };

  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = fn();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = outcome.skipped ? "SKIP" : (outcome.pass ? "PASS" : "FAIL");
    if (!outcome.pass && !outcome.skipped) ++failures;
    std::printf("[%s] %s (%.1f s)\n", tag, name.c_str(), elapsed);
    if (!outcome.detail.empty()) std::printf("       %s\n", outcome.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
