#include "nnspeaker/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nnspeaker/audio.hpp"
#include "nnspeaker/common.hpp"
#include "nnspeaker/preprocess.hpp"
#include "nnspeaker/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace nnspeaker::pipeline {

namespace {

enum class KeyType { kString, kInt, kReal, kBool };

struct KeySpec {
  KeyType type;
  std::string default_value;
  std::function<bool(const std::string&)> ok;  // extra validation, may be null
};

bool parse_bool(const std::string& v, bool* out) {
  if (v == "true" || v == "1") { *out = true; return true; }
  if (v == "false" || v == "0") { *out = false; return true; }
  return false;
}

bool parse_int(const std::string& v, long* out) {
  try {
    size_t pos = 0;
    *out = std::stol(v, &pos);
    return pos == v.size();
  } catch (...) {
    return false;
  }
}

bool parse_real(const std::string& v, double* out) {
  try {
    size_t pos = 0;
    *out = std::stod(v, &pos);
    return pos == v.size();
  } catch (...) {
    return false;
  }
}

bool int_at_least(const std::string& v, long min) {
  long x = 0;
  return parse_int(v, &x) && x >= min;
}

bool real_positive(const std::string& v) {
  double x = 0;
  return parse_real(v, &x) && x > 0;
}

bool valid_schedule(const std::string& v) {
  const auto parts = split_string(v, ',');
  if (parts.empty()) return false;
  double prev = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    double x = 0;
    if (!parse_real(parts[i], &x) || x < 0) return false;
    if (i > 0 && x >= prev) return false;  // strictly decreasing
    prev = x;
  }
  return prev == 0.0;  // ends at zero
}

bool valid_hidden(const std::string& v) {
  const auto parts = split_string(v, ',');
  if (parts.empty()) return false;
  for (const auto& p : parts) {
    long x = 0;
    if (!parse_int(p, &x) || x < 1) return false;
  }
  return true;
}

const std::map<std::string, KeySpec>& key_registry() {
  static const std::map<std::string, KeySpec> registry = {
      {"corpus.root", {KeyType::kString, "corpus", nullptr}},
      {"corpus.gender",
       {KeyType::kString, "",
        [](const std::string& v) { return v.empty() || v == "M" || v == "F" || v == "m" || v == "f"; }}},
      {"corpus.n_in_domain", {KeyType::kInt, "0", [](const std::string& v) { return int_at_least(v, 0); }}},
      {"synth.enabled", {KeyType::kBool, "false", nullptr}},
      {"synth.seed", {KeyType::kInt, "7", [](const std::string& v) { return int_at_least(v, 0); }}},
      {"synth.speakers", {KeyType::kInt, "20", [](const std::string& v) { return int_at_least(v, 2); }}},
      {"synth.files", {KeyType::kInt, "10", [](const std::string& v) { return int_at_least(v, 2); }}},
      {"synth.duration_s", {KeyType::kReal, "2.5", real_positive}},
      {"vad.enabled", {KeyType::kBool, "true", nullptr}},
      {"vad.win_s", {KeyType::kReal, "0.050", real_positive}},
      {"vad.hop_s", {KeyType::kReal, "0.025", real_positive}},
      {"vad.step", {KeyType::kInt, "7", [](const std::string& v) { return int_at_least(v, 1); }}},
      {"vad.order", {KeyType::kInt, "2", [](const std::string& v) { return int_at_least(v, 1); }}},
      {"vad.bins", {KeyType::kInt, "30", [](const std::string& v) { return int_at_least(v, 3); }}},
      {"vad.weight", {KeyType::kReal, "3", real_positive}},
      {"vad.smooth_mask", {KeyType::kBool, "true", nullptr}},
      {"mfcc.win_s", {KeyType::kReal, "0.025", real_positive}},
      {"mfcc.hop_s", {KeyType::kReal, "0.010", real_positive}},
      {"mfcc.preemphasis",
       {KeyType::kReal, "0.97",
        [](const std::string& v) { double x; return parse_real(v, &x) && x >= 0 && x < 1; }}},
      {"mfcc.mels", {KeyType::kInt, "20", [](const std::string& v) { return int_at_least(v, 2); }}},
      {"mfcc.coeffs", {KeyType::kInt, "13", [](const std::string& v) { return int_at_least(v, 1); }}},
      {"mfcc.log_floor", {KeyType::kReal, "1e-10", real_positive}},
      {"feat.mvn",
       {KeyType::kString, "speaker",
        [](const std::string& v) { return v == "speaker" || v == "global" || v == "none"; }}},
      {"feat.concat_win", {KeyType::kInt, "10", [](const std::string& v) { return int_at_least(v, 1); }}},
      {"feat.concat_hop", {KeyType::kInt, "3", [](const std::string& v) { return int_at_least(v, 1); }}},
      {"train.hidden", {KeyType::kString, "200", valid_hidden}},
      {"train.schedule", {KeyType::kString, "3,1,0.3,0.1,0", valid_schedule}},
      {"train.checkpoint_iters", {KeyType::kInt, "10", [](const std::string& v) { return int_at_least(v, 1); }}},
      {"train.stop_delta",
       {KeyType::kReal, "0.1",
        [](const std::string& v) { double x; return parse_real(v, &x) && x >= 0; }}},
      {"train.stop_patience", {KeyType::kInt, "2", [](const std::string& v) { return int_at_least(v, 1); }}},
      {"train.max_total_iters", {KeyType::kInt, "1000", [](const std::string& v) { return int_at_least(v, 0); }}},
      {"train.seed", {KeyType::kInt, "1", [](const std::string& v) { return int_at_least(v, 0); }}},
      {"train.monitor",
       {KeyType::kString, "val", [](const std::string& v) { return v == "val" || v == "test"; }}},
      {"verify.n_files",
       {KeyType::kInt, "2",
        [](const std::string& v) { long x; return parse_int(v, &x) && x >= 1 && x <= 5; }}},
      {"verify.thresholds",
       {KeyType::kString, "per-speaker",
        [](const std::string& v) { return v == "per-speaker" || v == "global"; }}},
      {"run.out", {KeyType::kString, "out", nullptr}},
  };
  return registry;
}

std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t\r\n");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r\n");
  return s.substr(from, to - from + 1);
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  for (const auto& [key, spec] : key_registry()) cfg.values_[key] = spec.default_value;
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& registry = key_registry();
  const auto it = registry.find(key);
  if (it == registry.end())
    throw std::invalid_argument("unknown configuration key: " + key);
  const KeySpec& spec = it->second;
  bool ok = true;
  switch (spec.type) {
    case KeyType::kString: break;
    case KeyType::kInt: { long x; ok = parse_int(value, &x); break; }
    case KeyType::kReal: { double x; ok = parse_real(value, &x); break; }
    case KeyType::kBool: { bool x; ok = parse_bool(value, &x); break; }
  }
  if (ok && spec.ok) ok = spec.ok(value);
  if (!ok) throw std::invalid_argument("bad value for " + key + ": " + value);
  values_[key] = value;
}

RunConfig RunConfig::from_overrides(const std::map<std::string, std::string>& overrides) {
  RunConfig cfg = defaults();
  for (const auto& [key, value] : overrides) cfg.set(key, value);
  return cfg;
}

RunConfig RunConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config: " + path.string());
  RunConfig cfg = defaults();
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) + " is not key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

const std::string& RunConfig::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("unknown configuration key: " + key);
  return it->second;
}

int RunConfig::integer(const std::string& key) const {
  long x = 0;
  parse_int(str(key), &x);
  return static_cast<int>(x);
}

double RunConfig::real(const std::string& key) const {
  double x = 0;
  parse_real(str(key), &x);
  return x;
}

bool RunConfig::boolean(const std::string& key) const {
  bool x = false;
  parse_bool(str(key), &x);
  return x;
}

features::FeaturizeOptions RunConfig::featurize_options(bool inline_vad) const {
  features::FeaturizeOptions opts;
  opts.apply_vad = inline_vad && boolean("vad.enabled");
  opts.vad.win_s = real("vad.win_s");
  opts.vad.hop_s = real("vad.hop_s");
  opts.vad.smooth_step = integer("vad.step");
  opts.vad.smooth_order = integer("vad.order");
  opts.vad.hist_bins = integer("vad.bins");
  opts.vad.peak_weight = real("vad.weight");
  opts.vad.smooth_mask = boolean("vad.smooth_mask");
  opts.mfcc.win_s = real("mfcc.win_s");
  opts.mfcc.hop_s = real("mfcc.hop_s");
  opts.mfcc.preemphasis = real("mfcc.preemphasis");
  opts.mfcc.n_mels = integer("mfcc.mels");
  opts.mfcc.n_coeffs = integer("mfcc.coeffs");
  opts.mfcc.log_floor = real("mfcc.log_floor");
  const std::string mvn = str("feat.mvn");
  opts.mvn = mvn == "speaker" ? features::MvnMode::kSpeaker
             : mvn == "global" ? features::MvnMode::kGlobal
                               : features::MvnMode::kNone;
  opts.concat_win = integer("feat.concat_win");
  opts.concat_hop = integer("feat.concat_hop");
  return opts;
}

nn::TrainConfig RunConfig::train_config() const {
  nn::TrainConfig cfg;
  cfg.lambda_schedule.clear();
  for (const auto& part : split_string(str("train.schedule"), ','))
    cfg.lambda_schedule.push_back(std::stod(part));
  cfg.checkpoint_iters = integer("train.checkpoint_iters");
  cfg.stop_delta = real("train.stop_delta");
  cfg.stop_patience = integer("train.stop_patience");
  cfg.max_total_iters = integer("train.max_total_iters");
  cfg.seed = static_cast<uint64_t>(integer("train.seed"));
  return cfg;
}

const std::vector<std::string>& canonical_stages() {
  static const std::vector<std::string> stages = {"prepare",       "vad",
                                                  "featurize",     "train",
                                                  "eval-classify", "eval-verify"};
  return stages;
}

namespace {

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& [key, value] : cfg.values()) j[key] = value;
  return j;
}

// --- stage state (artifact fingerprints) -----------------------------------

class StageState {
 public:
  explicit StageState(const fs::path& out_dir) : path_(out_dir / ".stage_state.json") {
    std::ifstream in(path_);
    if (in) {
      try {
        in >> state_;
      } catch (...) {
        state_ = json::object();
      }
    }
    if (!state_.is_object()) state_ = json::object();
  }

  bool up_to_date(const std::string& stage, const std::string& config_hash,
                  const std::vector<fs::path>& inputs) const {
    if (!state_.contains(stage)) return false;
    const json& s = state_.at(stage);
    if (s.value("config", "") != config_hash) return false;
    const auto check = [](const json& recorded) {
      for (const auto& [file, hash] : recorded.items()) {
        const fs::path p(file);
        if (!fs::exists(p)) return false;
        if (hash_hex(hash_file(p)) != hash.get<std::string>()) return false;
      }
      return true;
    };
    // Inputs must be the same set that was recorded, with matching hashes.
    if (s.contains("inputs")) {
      std::set<std::string> recorded;
      for (const auto& [file, hash] : s.at("inputs").items()) recorded.insert(file);
      std::set<std::string> current;
      for (const auto& p : inputs) current.insert(p.generic_string());
      if (recorded != current) return false;
      if (!check(s.at("inputs"))) return false;
    }
    return s.contains("outputs") && check(s.at("outputs"));
  }

  void record(const std::string& stage, const std::string& config_hash,
              const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
    json s;
    s["config"] = config_hash;
    json in_j = json::object(), out_j = json::object();
    for (const auto& p : inputs) in_j[p.generic_string()] = hash_hex(hash_file(p));
    for (const auto& p : outputs) out_j[p.generic_string()] = hash_hex(hash_file(p));
    s["inputs"] = in_j;
    s["outputs"] = out_j;
    state_[stage] = s;
    std::ofstream out(path_);
    out << state_.dump(1) << '\n';
  }

 private:
  fs::path path_;
  json state_;
};

std::string subset_hash(const RunConfig& cfg, const std::vector<std::string>& prefixes) {
  std::string blob;
  for (const auto& [key, value] : cfg.values())
    for (const auto& prefix : prefixes)
      if (key.rfind(prefix, 0) == 0) blob += key + "=" + value + ";";
  return hash_hex(fnv1a64(blob.data(), blob.size()));
}

void require_artifact(const fs::path& p, const std::string& stage, const std::string& hint) {
  if (!fs::exists(p))
    throw IoError("stage " + stage + ": missing input artifact " + p.generic_string() +
                  " (" + hint + ")");
}

struct StageIo {
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
};

// --- individual stages ------------------------------------------------------

StageIo stage_prepare(const RunConfig& cfg, const fs::path& out) {
  StageIo io;
  const fs::path root(cfg.str("corpus.root"));
  if (cfg.boolean("synth.enabled") && !fs::exists(root / "mspk000")) {
    corpus::SynthConfig synth;
    synth.seed = static_cast<uint64_t>(cfg.integer("synth.seed"));
    synth.n_speakers = cfg.integer("synth.speakers");
    synth.files_per_speaker = cfg.integer("synth.files");
    synth.duration_s = cfg.real("synth.duration_s");
    corpus::generate_synthetic_corpus(synth, root);
  }
  std::optional<char> gender;
  if (!cfg.str("corpus.gender").empty()) gender = cfg.str("corpus.gender").front();
  const corpus::Manifest manifest = corpus::build_manifest(root, gender);
  if (manifest.entries.empty()) throw IoError("prepare: no usable files under " + root.string());

  const int n_speakers = static_cast<int>(manifest.speakers().size());
  int n_in_domain = cfg.integer("corpus.n_in_domain");
  if (n_in_domain == 0) n_in_domain = n_speakers;
  const corpus::SplitPlan split = corpus::make_split(manifest, n_in_domain);

  corpus::write_manifest_csv(manifest, out / "manifest.csv");
  corpus::write_split_json(split, out / "split.json");
  io.outputs = {out / "manifest.csv", out / "split.json"};
  return io;
}

StageIo stage_vad(const RunConfig& cfg, const fs::path& out) {
  StageIo io;
  const fs::path manifest_path = out / "manifest.csv";
  require_artifact(manifest_path, "vad", "run the prepare stage first");
  io.inputs = {manifest_path};

  const corpus::Manifest manifest = corpus::read_manifest_csv(manifest_path);
  corpus::Manifest voiced_manifest;
  if (cfg.boolean("vad.enabled")) {
    preprocess::VadConfig vad;
    vad.win_s = cfg.real("vad.win_s");
    vad.hop_s = cfg.real("vad.hop_s");
    vad.smooth_step = cfg.integer("vad.step");
    vad.smooth_order = cfg.integer("vad.order");
    vad.hist_bins = cfg.integer("vad.bins");
    vad.peak_weight = cfg.real("vad.weight");
    vad.smooth_mask = cfg.boolean("vad.smooth_mask");
    for (const auto& entry : manifest.entries) {
      const AudioBuffer audio = preprocess::normalize_amplitude(read_wav(entry.path));
      const auto mask = preprocess::detect_voice(audio, vad);
      const AudioBuffer voiced = preprocess::extract_voiced(audio, mask);
      const fs::path dir = out / "vad" / entry.speaker_id;
      fs::create_directories(dir);
      const fs::path voiced_path = dir / (entry.sentence_id + ".wav");
      write_wav(voiced_path, voiced);
      voiced_manifest.entries.push_back(
          {entry.speaker_id, entry.sentence_id, entry.category, voiced_path});
      io.outputs.push_back(voiced_path);
    }
  } else {
    voiced_manifest = manifest;  // pass-through listing
  }
  corpus::write_manifest_csv(voiced_manifest, out / "manifest_vad.csv");
  io.outputs.push_back(out / "manifest_vad.csv");
  return io;
}

StageIo stage_featurize(const RunConfig& cfg, const fs::path& out) {
  StageIo io;
  // Prefer the vad stage's output; otherwise featurize the raw manifest with
  // inline voice detection.
  const fs::path vad_manifest = out / "manifest_vad.csv";
  const fs::path raw_manifest = out / "manifest.csv";
  const bool have_vad_stage = fs::exists(vad_manifest);
  const fs::path manifest_path = have_vad_stage ? vad_manifest : raw_manifest;
  require_artifact(manifest_path, "featurize", "run the prepare stage first");
  const fs::path split_path = out / "split.json";
  require_artifact(split_path, "featurize", "run the prepare stage first");
  io.inputs = {manifest_path, split_path};

  const corpus::Manifest manifest = corpus::read_manifest_csv(manifest_path);
  const corpus::SplitPlan split = corpus::read_split_json(split_path);
  const std::set<std::string> group_a(split.group_a.begin(), split.group_a.end());
  const std::set<std::string> group_b(split.group_b.begin(), split.group_b.end());

  corpus::Manifest train_manifest, test_manifest;
  for (const auto& e : manifest.entries) {
    if (group_a.count(e.speaker_id) && split.is_train_category(e.category))
      train_manifest.entries.push_back(e);
    if ((group_a.count(e.speaker_id) || group_b.count(e.speaker_id)) &&
        split.is_test_category(e.category))
      test_manifest.entries.push_back(e);
  }

  const auto opts = cfg.featurize_options(/*inline_vad=*/!have_vad_stage);
  const auto train_summary =
      features::featurize_manifest(train_manifest, out / "features" / "train", opts);
  const auto test_summary =
      features::featurize_manifest(test_manifest, out / "features" / "test", opts);

  for (const auto& e : train_summary.written) io.outputs.push_back(e.path);
  for (const auto& e : test_summary.written) io.outputs.push_back(e.path);
  io.outputs.push_back(out / "features" / "train" / "index.csv");
  io.outputs.push_back(out / "features" / "test" / "index.csv");
  return io;
}

StageIo stage_train(const RunConfig& cfg, const fs::path& out) {
  StageIo io;
  const fs::path train_index = out / "features" / "train" / "index.csv";
  require_artifact(train_index, "train", "run the featurize stage first");
  const fs::path split_path = out / "split.json";
  require_artifact(split_path, "train", "run the prepare stage first");
  io.inputs = {train_index, split_path};

  const auto entries = features::read_feature_index(out / "features" / "train");
  for (const auto& e : entries) io.inputs.push_back(e.path);
  const corpus::SplitPlan split = corpus::read_split_json(split_path);

  // Class labels: group A speakers that actually have training features.
  std::set<std::string> present;
  for (const auto& e : entries) present.insert(e.speaker_id);
  std::vector<std::string> class_labels;
  for (const auto& s : split.group_a)
    if (present.count(s)) class_labels.push_back(s);
  if (class_labels.size() < 2) throw std::invalid_argument("train: fewer than two trainable speakers");

  const nn::LabeledBatch full = nn::load_batch(entries, class_labels);

  nn::LabeledBatch train_set, monitor_set;
  if (cfg.str("train.monitor") == "test") {
    const fs::path test_index = out / "features" / "test" / "index.csv";
    require_artifact(test_index, "train", "test monitoring needs featurized test data");
    io.inputs.push_back(test_index);
    auto test_entries = features::read_feature_index(out / "features" / "test");
    std::erase_if(test_entries, [&](const features::FeatureIndexEntry& e) {
      return std::find(class_labels.begin(), class_labels.end(), e.speaker_id) ==
             class_labels.end();
    });
    train_set = full;
    monitor_set = nn::load_batch(test_entries, class_labels);
  } else {
    std::tie(train_set, monitor_set) = nn::split_monitor(full);
  }

  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(train_set.x.cols()));
  for (const auto& part : split_string(cfg.str("train.hidden"), ','))
    sizes.push_back(std::stoi(part));
  sizes.push_back(static_cast<int>(class_labels.size()));

  nn::TrainResult result = nn::train(train_set, monitor_set, sizes, cfg.train_config());
  result.model.meta.class_labels = class_labels;
  nn::write_model(out / "model.nnsm", result.model);
  io.outputs = {out / "model.nnsm"};
  return io;
}

StageIo stage_eval_classify(const RunConfig& cfg, const fs::path& out) {
  StageIo io;
  const fs::path model_path = out / "model.nnsm";
  require_artifact(model_path, "eval-classify", "run the train stage first");
  const fs::path train_index = out / "features" / "train" / "index.csv";
  const fs::path test_index = out / "features" / "test" / "index.csv";
  require_artifact(test_index, "eval-classify", "run the featurize stage first");
  io.inputs = {model_path, test_index};
  if (fs::exists(train_index)) io.inputs.push_back(train_index);

  const nn::Model model = nn::read_model(model_path);
  std::vector<features::FeatureIndexEntry> train_entries;
  if (fs::exists(train_index))
    train_entries = features::read_feature_index(out / "features" / "train");
  auto test_entries = features::read_feature_index(out / "features" / "test");
  const std::set<std::string> classes(model.meta.class_labels.begin(),
                                      model.meta.class_labels.end());
  std::erase_if(test_entries, [&](const features::FeatureIndexEntry& e) {
    return !classes.count(e.speaker_id);
  });

  write_classify_report(out / "classify_report.json", cfg, model, train_entries, test_entries);
  io.outputs = {out / "classify_report.json"};
  return io;
}

StageIo stage_eval_verify(const RunConfig& cfg, const fs::path& out) {
  StageIo io;
  const fs::path model_path = out / "model.nnsm";
  require_artifact(model_path, "eval-verify", "run the train stage first");
  const fs::path test_index = out / "features" / "test" / "index.csv";
  require_artifact(test_index, "eval-verify", "run the featurize stage first");
  const fs::path split_path = out / "split.json";
  require_artifact(split_path, "eval-verify", "run the prepare stage first");
  io.inputs = {model_path, test_index, split_path};

  const nn::Model model = nn::read_model(model_path);
  const auto test_entries = features::read_feature_index(out / "features" / "test");
  const corpus::SplitPlan split = corpus::read_split_json(split_path);

  write_verify_report(out / "verify_report.json", out / "roc.csv", cfg, model, test_entries,
                      split);
  io.outputs = {out / "verify_report.json", out / "roc.csv"};
  return io;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, std::vector<std::string> stages) {
  const auto& canonical = canonical_stages();
  if (stages.empty()) stages = canonical;
  for (const auto& s : stages)
    if (std::find(canonical.begin(), canonical.end(), s) == canonical.end())
      throw std::invalid_argument("unknown stage: " + s);
  std::sort(stages.begin(), stages.end(), [&](const std::string& a, const std::string& b) {
    return std::find(canonical.begin(), canonical.end(), a) <
           std::find(canonical.begin(), canonical.end(), b);
  });
  stages.erase(std::unique(stages.begin(), stages.end()), stages.end());

  const fs::path out(cfg.str("run.out"));
  fs::create_directories(out);
  StageState state(out);

  // Config key prefixes each stage's behavior depends on.
  const std::map<std::string, std::vector<std::string>> stage_keys = {
      {"prepare", {"corpus.", "synth."}},
      {"vad", {"vad."}},
      {"featurize", {"vad.", "mfcc.", "feat."}},
      {"train", {"train."}},
      // Reports embed the full resolved config, so any change re-runs them.
      {"eval-classify", {""}},
      {"eval-verify", {""}},
  };
  const std::map<std::string, std::function<StageIo(const RunConfig&, const fs::path&)>>
      stage_fn = {
          {"prepare", stage_prepare},           {"vad", stage_vad},
          {"featurize", stage_featurize},       {"train", stage_train},
          {"eval-classify", stage_eval_classify}, {"eval-verify", stage_eval_verify},
      };

  // Probe inputs without running (for up-to-date checks).
  const auto probe_inputs = [&](const std::string& stage) {
    std::vector<fs::path> inputs;
    auto add_if = [&](const fs::path& p) {
      if (fs::exists(p)) inputs.push_back(p);
    };
    if (stage == "vad") add_if(out / "manifest.csv");
    if (stage == "featurize") {
      add_if(fs::exists(out / "manifest_vad.csv") ? out / "manifest_vad.csv"
                                                  : out / "manifest.csv");
      add_if(out / "split.json");
    }
    if (stage == "train") {
      add_if(out / "features" / "train" / "index.csv");
      add_if(out / "split.json");
      if (fs::exists(out / "features" / "train" / "index.csv"))
        for (const auto& e : features::read_feature_index(out / "features" / "train"))
          add_if(e.path);
      if (cfg.str("train.monitor") == "test") add_if(out / "features" / "test" / "index.csv");
    }
    if (stage == "eval-classify") {
      add_if(out / "model.nnsm");
      add_if(out / "features" / "train" / "index.csv");
      add_if(out / "features" / "test" / "index.csv");
    }
    if (stage == "eval-verify") {
      add_if(out / "model.nnsm");
      add_if(out / "features" / "test" / "index.csv");
      add_if(out / "split.json");
    }
    return inputs;
  };

  PipelineResult result;
  for (const auto& stage : stages) {
    StageResult sr;
    sr.stage = stage;
    const std::string config_hash = subset_hash(cfg, stage_keys.at(stage));
    try {
      const auto probed = probe_inputs(stage);
      if (state.up_to_date(stage, config_hash, probed)) {
        sr.skipped = true;
        sr.message = "up to date";
        std::printf("[%s] skipped (up to date)\n", stage.c_str());
      } else {
        const StageIo io = stage_fn.at(stage)(cfg, out);
        state.record(stage, config_hash, io.inputs, io.outputs);
        sr.ran = true;
        uint64_t in_h = 0, out_h = 0;
        for (const auto& p : io.inputs) in_h ^= hash_file(p);
        for (const auto& p : io.outputs) out_h ^= hash_file(p);
        std::printf("[%s] ok in=%s out=%s\n", stage.c_str(), hash_hex(in_h).c_str(),
                    hash_hex(out_h).c_str());
      }
    } catch (const std::exception& e) {
      result.ok = false;
      result.failed_stage = stage;
      result.failed_stage_ordinal =
          static_cast<int>(std::find(canonical.begin(), canonical.end(), stage) -
                           canonical.begin()) +
          1;
      result.error = e.what();
      sr.message = e.what();
      result.stages.push_back(sr);
      std::fprintf(stderr, "[%s] failed: %s\n", stage.c_str(), e.what());
      return result;
    }
    result.stages.push_back(sr);
  }
  return result;
}

void write_classify_report(const fs::path& path, const RunConfig& cfg, const nn::Model& model,
                           const std::vector<features::FeatureIndexEntry>& train_entries,
                           const std::vector<features::FeatureIndexEntry>& test_entries) {
  json report;
  report["config"] = config_json(cfg);
  report["model"] = {{"layer_sizes", model.layer_sizes},
                     {"seed", model.meta.seed},
                     {"iterations", model.meta.iterations},
                     {"stop_reason", model.meta.stop_reason}};

  const auto dataset_json = [&](const std::vector<features::FeatureIndexEntry>& entries) {
    const classify::ClassificationReport r = classify::evaluate(model, entries);
    json files = json::array();
    for (const auto& f : r.files) {
      json jf;
      jf["speaker_id"] = f.speaker_id;
      jf["file_id"] = f.file_id;
      jf["predicted"] = model.meta.class_labels[static_cast<size_t>(f.predicted)];
      jf["n_frames"] = f.n_frames;
      jf["correct_frames"] = f.correct_frames;
      if (f.frames_needed)
        jf["frames_needed"] = *f.frames_needed;
      else
        jf["frames_needed"] = nullptr;
      files.push_back(jf);
    }
    json j;
    j["frame_accuracy_pct"] = r.frame_accuracy_pct;
    j["file_accuracy_pct"] = r.file_accuracy_pct;
    j["frames_needed"] = {{"min", r.needed.min_frames},   {"mean", r.needed.mean_frames},
                          {"max", r.needed.max_frames},   {"min_s", r.needed.min_s},
                          {"mean_s", r.needed.mean_s},    {"max_s", r.needed.max_s},
                          {"n_defined", r.needed.n_defined}};
    j["files"] = files;
    return j;
  };

  if (!train_entries.empty()) report["train"] = dataset_json(train_entries);
  if (!test_entries.empty()) report["test"] = dataset_json(test_entries);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << report.dump(2) << '\n';
}

void write_verify_report(const fs::path& report_path, const fs::path& roc_csv_path,
                         const RunConfig& cfg, const nn::Model& model,
                         const std::vector<features::FeatureIndexEntry>& test_entries,
                         const corpus::SplitPlan& split) {
  const int n_files = cfg.integer("verify.n_files");
  const verify::TrialSet trials = verify::build_trials(model, test_entries, split, n_files);
  const auto scores = verify::client_scores(trials);
  const verify::ThresholdTable table = verify::fit_thresholds_from(scores);
  const auto shifted = verify::shift_scores(scores, table);

  const verify::RocCurve curve_global = verify::roc(verify::pool_trials(scores));
  const verify::RocCurve curve_shifted = verify::roc(verify::pool_trials(shifted));
  const bool per_speaker = cfg.str("verify.thresholds") == "per-speaker";
  const verify::RocCurve& primary = per_speaker ? curve_shifted : curve_global;

  json report;
  report["config"] = config_json(cfg);
  report["n_files"] = n_files;
  report["n_clients"] = static_cast<int>(split.group_a.size());
  report["n_imposters"] = static_cast<int>(split.group_b.size());
  report["n_trials"] = static_cast<int>(trials.trials.size());
  report["argmax_accuracy_pct"] = verify::argmax_verify_accuracy_pct(trials);
  report["eer_global_pct"] = curve_global.eer_pct;
  report["eer_per_speaker_pct"] = curve_shifted.eer_pct;
  report["auc_global_pct"] = curve_global.auc_pct;
  report["auc_per_speaker_pct"] = curve_shifted.auc_pct;
  report["threshold_at_eer"] = primary.threshold_at_eer;
  report["thresholds_mode"] = per_speaker ? "per-speaker" : "global";

  json thresholds = json::object();
  for (size_t k = 0; k < table.by_client.size(); ++k) {
    const auto& st = table.by_client[k];
    thresholds[trials.client_ids[k]] = {
        {"threshold", st.threshold},       {"mu_pos", st.mu_pos},
        {"sigma_pos", st.sigma_pos},       {"mu_neg", st.mu_neg},
        {"sigma_neg", st.sigma_neg},       {"prior_pos", st.prior_pos},
        {"midpoint_fallback", st.midpoint_fallback},
        {"global_fallback", st.global_fallback}};
  }
  report["thresholds"] = thresholds;

  std::ofstream out(report_path, std::ios::binary);
  if (!out) throw IoError("cannot write report: " + report_path.string());
  out << report.dump(2) << '\n';

  std::ofstream roc_out(roc_csv_path, std::ios::binary);
  if (!roc_out) throw IoError("cannot write roc csv: " + roc_csv_path.string());
  roc_out << "threshold,FPR,TPR\n";
  for (const auto& p : primary.points) {
    char line[96];
    std::snprintf(line, sizeof(line), "%.12g,%.12g,%.12g\n", p.threshold, p.fpr, p.tpr);
    roc_out << line;
  }
}

}  // namespace nnspeaker::pipeline
