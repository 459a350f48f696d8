// nnspeaker: speaker classification and verification toolkit.
//
// Subcommands cover the whole pipeline (corpus preparation, voice activity
// detection, feature extraction, network training, evaluation) plus `run`,
// which executes staged experiments from a config file.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

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

constexpr const char* kVersion = "nnspeaker 0.1.0";

std::vector<int> parse_sizes(const std::string& text) {
  std::vector<int> sizes;
  for (const auto& part : split_string(text, ':')) sizes.push_back(std::stoi(part));
  if (sizes.size() < 2) throw std::invalid_argument("--sizes needs at least input:output");
  return sizes;
}

// Feature directories either hold index.csv directly or train/ and test/
// subdirectories produced by the pipeline.
struct FeatureDirs {
  std::vector<features::FeatureIndexEntry> train;
  std::vector<features::FeatureIndexEntry> test;
};

FeatureDirs load_feature_dirs(const fs::path& dir) {
  FeatureDirs out;
  if (fs::exists(dir / "train" / "index.csv"))
    out.train = features::read_feature_index(dir / "train");
  if (fs::exists(dir / "test" / "index.csv"))
    out.test = features::read_feature_index(dir / "test");
  if (out.train.empty() && out.test.empty() && fs::exists(dir / "index.csv"))
    out.train = features::read_feature_index(dir);
  if (out.train.empty() && out.test.empty())
    throw IoError("no index.csv under " + dir.string() + " (or its train/test subdirectories)");
  return out;
}

std::vector<std::string> distinct_speakers(const std::vector<features::FeatureIndexEntry>& entries) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& e : entries)
    if (seen.insert(e.speaker_id).second) out.push_back(e.speaker_id);
  return out;
}

int cmd_prepare(const std::string& root, const std::string& out, const std::string& gender) {
  std::optional<char> g;
  if (!gender.empty()) g = gender.front();
  const corpus::Manifest manifest = corpus::build_manifest(root, g);
  corpus::write_manifest_csv(manifest, out);
  std::printf("wrote %s: %zu entries, %zu speakers\n", out.c_str(), manifest.entries.size(),
              manifest.speakers().size());
  return 0;
}

int cmd_synth(uint64_t seed, int speakers, int files, double duration, const std::string& out) {
  corpus::SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_speakers = speakers;
  cfg.files_per_speaker = files;
  cfg.duration_s = duration;
  const corpus::Manifest manifest = corpus::generate_synthetic_corpus(cfg, out);
  std::printf("wrote %zu files for %d speakers under %s\n", manifest.entries.size(), speakers,
              out.c_str());
  return 0;
}

int cmd_vad(const std::string& in, const std::string& out, const preprocess::VadConfig& cfg,
            const std::string& mask_out) {
  const AudioBuffer audio = preprocess::normalize_amplitude(read_wav(in));
  const auto mask = preprocess::detect_voice(audio, cfg);
  const AudioBuffer voiced = preprocess::extract_voiced(audio, mask);
  write_wav(out, voiced);
  size_t kept = voiced.samples.size();
  std::printf("kept %zu of %zu samples (%.1f%%), T_E=%.6g T_C=%.6g\n", kept,
              audio.samples.size(), 100.0 * kept / std::max<size_t>(1, audio.samples.size()),
              mask.threshold_energy, mask.threshold_centroid);
  if (!mask_out.empty()) {
    std::ofstream csv(mask_out, std::ios::binary);
    if (!csv) throw IoError("cannot write mask csv: " + mask_out);
    csv << "frame,energy,centroid,voiced\n";
    for (size_t i = 0; i < mask.frame_decisions.size(); ++i) {
      char line[96];
      std::snprintf(line, sizeof(line), "%zu,%.12g,%.12g,%d\n", i, mask.energy[i],
                    mask.centroid[i], mask.frame_decisions[i] ? 1 : 0);
      csv << line;
    }
  }
  return 0;
}

int cmd_featurize(const std::string& manifest_path, const std::string& out,
                  const std::string& mvn, const std::string& concat, bool no_vad) {
  const corpus::Manifest manifest = corpus::read_manifest_csv(manifest_path);
  features::FeaturizeOptions opts;
  opts.apply_vad = !no_vad;
  opts.mvn = mvn == "speaker"  ? features::MvnMode::kSpeaker
             : mvn == "global" ? features::MvnMode::kGlobal
                               : features::MvnMode::kNone;
  const auto wxh = split_string(concat, 'x');
  if (wxh.size() != 2) throw std::invalid_argument("--concat expects WINxHOP, e.g. 10x3");
  opts.concat_win = std::stoi(wxh[0]);
  opts.concat_hop = std::stoi(wxh[1]);
  const auto summary = features::featurize_manifest(manifest, out, opts);
  std::printf("wrote %zu feature files under %s (%zu skipped)\n", summary.written.size(),
              out.c_str(), summary.skipped.size());
  return 0;
}

int cmd_train(const std::string& features_dir, const std::string& sizes_text, uint64_t seed,
              const std::string& schedule, const std::string& monitor, const std::string& out) {
  const FeatureDirs dirs = load_feature_dirs(features_dir);
  if (dirs.train.empty()) throw IoError("no training features under " + features_dir);
  const std::vector<std::string> class_labels = distinct_speakers(dirs.train);

  const nn::LabeledBatch full = nn::load_batch(dirs.train, class_labels);
  nn::LabeledBatch train_set, monitor_set;
  if (monitor == "test") {
    if (dirs.test.empty())
      throw IoError("--monitor test needs a test/ feature directory");
    auto test_entries = dirs.test;
    std::erase_if(test_entries, [&](const features::FeatureIndexEntry& e) {
      return std::find(class_labels.begin(), class_labels.end(), e.speaker_id) ==
             class_labels.end();
    });
    train_set = full;
    monitor_set = nn::load_batch(test_entries, class_labels);
  } else {
    std::tie(train_set, monitor_set) = nn::split_monitor(full);
  }

  std::vector<int> sizes = parse_sizes(sizes_text);
  if (sizes.front() != train_set.x.cols())
    throw std::invalid_argument("--sizes input layer " + std::to_string(sizes.front()) +
                                " does not match feature dims " +
                                std::to_string(train_set.x.cols()));
  if (sizes.back() != static_cast<int>(class_labels.size()))
    throw std::invalid_argument("--sizes output layer " + std::to_string(sizes.back()) +
                                " does not match speaker count " +
                                std::to_string(class_labels.size()));

  nn::TrainConfig cfg;
  cfg.seed = seed;
  cfg.lambda_schedule.clear();
  for (const auto& part : split_string(schedule, ',')) cfg.lambda_schedule.push_back(std::stod(part));

  nn::TrainResult result = nn::train(train_set, monitor_set, sizes, cfg);
  result.model.meta.class_labels = class_labels;
  nn::write_model(out, result.model);

  const auto& history = result.history;
  std::printf("trained %d iterations (%s), final monitor accuracy %.2f%%\n",
              result.model.meta.iterations, result.model.meta.stop_reason.c_str(),
              history.empty() ? 0.0 : history.back().monitor_accuracy_pct);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_gridsearch(const std::string& features_dir, const std::string& hidden_layers,
                   const std::string& nodes, double fraction, int budget, uint64_t seed,
                   const std::string& out_path) {
  const FeatureDirs dirs = load_feature_dirs(features_dir);
  if (dirs.train.empty()) throw IoError("no training features under " + features_dir);
  const std::vector<std::string> class_labels = distinct_speakers(dirs.train);
  const nn::LabeledBatch full = nn::load_batch(dirs.train, class_labels);
  const auto [train_set, monitor_set] = nn::split_monitor(full);

  nn::GridSearchConfig cfg;
  cfg.hidden_layer_counts.clear();
  for (const auto& p : split_string(hidden_layers, ',')) cfg.hidden_layer_counts.push_back(std::stoi(p));
  cfg.nodes_per_layer.clear();
  for (const auto& p : split_string(nodes, ',')) cfg.nodes_per_layer.push_back(std::stoi(p));
  cfg.subset_fraction = fraction;
  cfg.budget_iters = budget;
  cfg.seed = seed;

  const auto ranked = nn::grid_search(train_set, monitor_set, cfg);
  nlohmann::json out = nlohmann::json::array();
  for (size_t i = 0; i < ranked.size(); ++i) {
    std::string sizes;
    for (size_t j = 0; j < ranked[i].layer_sizes.size(); ++j) {
      if (j) sizes += ':';
      sizes += std::to_string(ranked[i].layer_sizes[j]);
    }
    std::printf("%2zu. %-18s %.2f%%\n", i + 1, sizes.c_str(), ranked[i].monitor_accuracy_pct);
    out.push_back({{"rank", i + 1},
                   {"sizes", sizes},
                   {"monitor_accuracy_pct", ranked[i].monitor_accuracy_pct}});
  }
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::binary);
    f << out.dump(2) << '\n';
  }
  return 0;
}

int cmd_gradcheck(const std::string& sizes_text, int samples, double lambda, uint64_t seed) {
  const auto sizes = parse_sizes(sizes_text);
  const double err = nn::gradient_check(sizes, samples, seed, lambda);
  std::printf("max relative gradient error: %.3e\n", err);
  return err < 1e-6 ? 0 : 1;
}

int cmd_eval_classify(const std::string& model_path, const std::string& features_dir,
                      const std::string& out) {
  const nn::Model model = nn::read_model(model_path);
  FeatureDirs dirs = load_feature_dirs(features_dir);
  const std::set<std::string> classes(model.meta.class_labels.begin(),
                                      model.meta.class_labels.end());
  const auto keep_known = [&](std::vector<features::FeatureIndexEntry>& entries) {
    std::erase_if(entries, [&](const features::FeatureIndexEntry& e) {
      return !classes.count(e.speaker_id);
    });
  };
  keep_known(dirs.train);
  keep_known(dirs.test);

  const auto cfg = pipeline::RunConfig::defaults();
  pipeline::write_classify_report(out, cfg, model, dirs.train, dirs.test);

  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_eval_verify(const std::string& model_path, const std::string& features_dir,
                    const std::string& split_path, int n_files, const std::string& thresholds,
                    const std::string& out, const std::string& roc_out) {
  const nn::Model model = nn::read_model(model_path);
  FeatureDirs dirs = load_feature_dirs(features_dir);
  const auto& entries = dirs.test.empty() ? dirs.train : dirs.test;
  const corpus::SplitPlan split = corpus::read_split_json(split_path);

  auto cfg = pipeline::RunConfig::defaults();
  cfg.set("verify.n_files", std::to_string(n_files));
  cfg.set("verify.thresholds", thresholds);
  pipeline::write_verify_report(out, roc_out, cfg, model, entries, split);

  std::printf("wrote %s and %s\n", out.c_str(), roc_out.c_str());
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& stages_text) {
  const auto cfg = config_path.empty() ? pipeline::RunConfig::defaults()
                                       : pipeline::RunConfig::from_file(config_path);
  std::vector<std::string> stages;
  if (!stages_text.empty())
    for (const auto& s : split_string(stages_text, ',')) stages.push_back(s);
  const auto result = pipeline::run_pipeline(cfg, stages);
  if (!result.ok) {
    std::fprintf(stderr, "pipeline failed at stage %s: %s\n", result.failed_stage.c_str(),
                 result.error.c_str());
    return result.failed_stage_ordinal;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-independent speaker classification and verification toolkit"};
  app.set_version_flag("--version", std::string(kVersion) + " (c++" +
                                        std::to_string(__cplusplus / 100 % 100) + ", eigen)");
  app.require_subcommand(1);

  try {
    // prepare
    auto* prepare = app.add_subcommand("prepare", "Scan a corpus tree into a manifest");
    std::string root, out = "manifest.csv", gender;
    prepare->add_option("--root", root, "corpus root directory")->required();
    prepare->add_option("--out", out, "output manifest path");
    prepare->add_option("--gender", gender, "keep speakers whose id starts with this letter");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic test corpus");
    uint64_t synth_seed = 7;
    int synth_speakers = 20, synth_files = 10;
    double synth_duration = 2.5;
    std::string synth_out;
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--speakers", synth_speakers, "number of speakers")->check(CLI::Range(2, 10000));
    synth->add_option("--files", synth_files, "files per speaker")->check(CLI::Range(2, 1000));
    synth->add_option("--duration", synth_duration, "seconds per file");
    synth->add_option("--out", synth_out, "output directory")->required();

    // vad
    auto* vad = app.add_subcommand("vad", "Voice activity detection on one file");
    std::string vad_in, vad_out, vad_mask_out;
    preprocess::VadConfig vad_cfg;
    vad->add_option("--in", vad_in, "input wav")->required();
    vad->add_option("--out", vad_out, "voiced-only output wav")->required();
    vad->add_option("--step", vad_cfg.smooth_step, "median smoothing step");
    vad->add_option("--order", vad_cfg.smooth_order, "median smoothing order");
    vad->add_option("--bins", vad_cfg.hist_bins, "histogram bins");
    vad->add_option("--weight", vad_cfg.peak_weight, "histogram peak weight");
    vad->add_option("--mask-out", vad_mask_out, "per-frame csv (frame, E, C, decision)");

    // featurize
    auto* featurize = app.add_subcommand("featurize", "Extract features for a manifest");
    std::string feat_manifest, feat_out, feat_mvn = "speaker", feat_concat = "10x3";
    bool feat_no_vad = false;
    featurize->add_option("--manifest", feat_manifest, "manifest csv")->required();
    featurize->add_option("--out", feat_out, "output directory")->required();
    featurize->add_option("--mvn", feat_mvn, "speaker|global|none")
        ->check(CLI::IsMember({"speaker", "global", "none"}));
    featurize->add_option("--concat", feat_concat, "frame concatenation WINxHOP");
    featurize->add_flag("--no-vad", feat_no_vad, "skip voice activity detection");

    // train
    auto* train = app.add_subcommand("train", "Train the speaker classifier");
    std::string train_features, train_sizes = "390:200:200", train_schedule = "3,1,0.3,0.1,0";
    std::string train_monitor = "val", train_out = "model.nnsm";
    uint64_t train_seed = 1;
    train->add_option("--features", train_features, "feature directory")->required();
    train->add_option("--sizes", train_sizes, "layer sizes, e.g. 390:200:200");
    train->add_option("--seed", train_seed, "weight init seed");
    train->add_option("--schedule", train_schedule, "regularization schedule");
    train->add_option("--monitor", train_monitor, "val|test")
        ->check(CLI::IsMember({"val", "test"}));
    train->add_option("--out", train_out, "output model path");

    // gridsearch
    auto* grid = app.add_subcommand("gridsearch", "Rank network structures");
    std::string grid_features, grid_layers = "1,2", grid_nodes = "50,100,200,400", grid_out;
    double grid_fraction = 0.10;
    int grid_budget = 50;
    uint64_t grid_seed = 1;
    grid->add_option("--features", grid_features, "feature directory")->required();
    grid->add_option("--hidden-layers", grid_layers, "hidden layer counts");
    grid->add_option("--nodes", grid_nodes, "nodes per hidden layer");
    grid->add_option("--fraction", grid_fraction, "training subset fraction");
    grid->add_option("--budget", grid_budget, "iterations per candidate");
    grid->add_option("--seed", grid_seed, "subset selection seed");
    grid->add_option("--out", grid_out, "optional json output");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Verify the analytic gradient");
    std::string gc_sizes = "9:5:4";
    int gc_samples = 7;
    double gc_lambda = 0.0;
    uint64_t gc_seed = 1;
    gradcheck->add_option("--sizes", gc_sizes, "layer sizes");
    gradcheck->add_option("--samples", gc_samples, "random samples");
    gradcheck->add_option("--lambda", gc_lambda, "regularization strength");
    gradcheck->add_option("--seed", gc_seed, "seed");

    // eval-classify
    auto* eval_c = app.add_subcommand("eval-classify", "Classification accuracy report");
    std::string ec_model, ec_features, ec_out = "classify_report.json";
    eval_c->add_option("--model", ec_model, "model file")->required();
    eval_c->add_option("--features", ec_features, "feature directory")->required();
    eval_c->add_option("--out", ec_out, "report path");

    // eval-verify
    auto* eval_v = app.add_subcommand("eval-verify", "Verification ROC/EER report");
    std::string ev_model, ev_features, ev_split, ev_thresholds = "per-speaker";
    std::string ev_out = "verify_report.json", ev_roc = "roc.csv";
    int ev_nfiles = 2;
    eval_v->add_option("--model", ev_model, "model file")->required();
    eval_v->add_option("--features", ev_features, "feature directory")->required();
    eval_v->add_option("--split", ev_split, "split json")->required();
    eval_v->add_option("--nfiles", ev_nfiles, "files per trial")->check(CLI::Range(1, 5));
    eval_v->add_option("--thresholds", ev_thresholds, "per-speaker|global")
        ->check(CLI::IsMember({"per-speaker", "global"}));
    eval_v->add_option("--out", ev_out, "report path");
    eval_v->add_option("--roc-out", ev_roc, "roc csv path");

    // run
    auto* run = app.add_subcommand("run", "Run pipeline stages from a config file");
    std::string run_config, run_stages;
    run->add_option("--config", run_config, "run configuration file");
    run->add_option("--stages", run_stages, "comma-separated subset of stages");

    CLI11_PARSE(app, argc, argv);

    if (prepare->parsed()) return cmd_prepare(root, out, gender);
    if (synth->parsed())
      return cmd_synth(synth_seed, synth_speakers, synth_files, synth_duration, synth_out);
    if (vad->parsed()) return cmd_vad(vad_in, vad_out, vad_cfg, vad_mask_out);
    if (featurize->parsed())
      return cmd_featurize(feat_manifest, feat_out, feat_mvn, feat_concat, feat_no_vad);
    if (train->parsed())
      return cmd_train(train_features, train_sizes, train_seed, train_schedule, train_monitor,
                       train_out);
    if (grid->parsed())
      return cmd_gridsearch(grid_features, grid_layers, grid_nodes, grid_fraction, grid_budget,
                            grid_seed, grid_out);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_sizes, gc_samples, gc_lambda, gc_seed);
    if (eval_c->parsed()) return cmd_eval_classify(ec_model, ec_features, ec_out);
    if (eval_v->parsed())
      return cmd_eval_verify(ev_model, ev_features, ev_split, ev_nfiles, ev_thresholds, ev_out,
                             ev_roc);
    if (run->parsed()) return cmd_run(run_config, run_stages);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
