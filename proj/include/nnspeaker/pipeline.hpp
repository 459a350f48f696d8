#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nnspeaker/classify.hpp"
#include "nnspeaker/corpus.hpp"
#include "nnspeaker/features.hpp"
#include "nnspeaker/nn.hpp"
#include "nnspeaker/verify.hpp"

namespace nnspeaker::pipeline {

// Flat dotted-key configuration covering every stage tunable. Values are
// kept as strings; construction validates names, types and ranges, so a
// RunConfig instance is always fully resolved (defaults overlaid with the
// user's overrides). Unknown keys are rejected by name.
class RunConfig {
 public:
  static RunConfig defaults();
  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_overrides(const std::map<std::string, std::string>& overrides);

  const std::string& str(const std::string& key) const;
  int integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;

  void set(const std::string& key, const std::string& value);  // validates

  const std::map<std::string, std::string>& values() const { return values_; }

  features::FeaturizeOptions featurize_options(bool inline_vad) const;
  nn::TrainConfig train_config() const;

 private:
  std::map<std::string, std::string> values_;
};

const std::vector<std::string>& canonical_stages();

struct StageResult {
  std::string stage;
  bool ran = false;      // did real work
  bool skipped = false;  // up to date, nothing recomputed
  std::string message;
};

struct PipelineResult {
  std::vector<StageResult> stages;
  bool ok = true;
  std::string failed_stage;
  int failed_stage_ordinal = 0;  // 1-based position in the canonical list
  std::string error;
};

// Executes the requested stages in canonical order under cfg["run.out"].
// Each stage records input/output artifact hashes; a stage whose recorded
// hashes still match is skipped. Configuration problems throw before any
// stage runs; stage failures stop the run and name the stage.
PipelineResult run_pipeline(const RunConfig& cfg, std::vector<std::string> stages);

// Report writers shared by the pipeline and the standalone CLI commands.
// Reports are JSON with alphabetically ordered keys, no timestamps, and the
// fully resolved configuration embedded.
void write_classify_report(const std::filesystem::path& path, const RunConfig& cfg,
                           const nn::Model& model,
                           const std::vector<features::FeatureIndexEntry>& train_entries,
                           const std::vector<features::FeatureIndexEntry>& test_entries);

void write_verify_report(const std::filesystem::path& report_path,
                         const std::filesystem::path& roc_csv_path, const RunConfig& cfg,
                         const nn::Model& model,
                         const std::vector<features::FeatureIndexEntry>& test_entries,
                         const corpus::SplitPlan& split);

}  // namespace nnspeaker::pipeline
