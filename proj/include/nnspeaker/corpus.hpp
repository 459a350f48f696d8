#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nnspeaker::corpus {

enum class Category { kSX, kSI, kSA };

std::string category_name(Category c);
std::optional<Category> category_from_sentence_id(const std::string& sentence_id);

struct ManifestEntry {
  std::string speaker_id;
  std::string sentence_id;
  Category category = Category::kSX;
  std::filesystem::path path;
};

// Deterministic listing of the corpus: entries are totally ordered by
// (dialect region, speaker name, sentence id), so two builds over the same
// tree are identical.
struct Manifest {
  std::vector<ManifestEntry> entries;

  // Distinct speakers in manifest order.
  std::vector<std::string> speakers() const;
  std::vector<ManifestEntry> entries_for(const std::string& speaker_id) const;
};

// Walks a TIMIT-like tree (region/speaker/sentence.wav) or a flat tree
// (speaker/sentence.wav). Categories come from the sentence-id prefix
// (SX/SI/SA, case-insensitive); files with other prefixes are skipped with a
// warning, as are speakers that end up with zero usable files. `gender`
// filters on the conventional first letter of the speaker id ('m'/'f').
Manifest build_manifest(const std::filesystem::path& root,
                        std::optional<char> gender = std::nullopt);

void write_manifest_csv(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest_csv(const std::filesystem::path& path);

// Speaker and file-set split: group A speakers are the enrolled in-domain
// set, group B are imposters. Training files are group A's train-category
// sentences; test files are the test-category sentences of both groups.
struct SplitPlan {
  std::vector<std::string> group_a;
  std::vector<std::string> group_b;
  std::vector<Category> train_categories = {Category::kSX};
  std::vector<Category> test_categories = {Category::kSA, Category::kSI};

  bool is_train_category(Category c) const;
  bool is_test_category(Category c) const;
};

// First n_in_domain manifest speakers become group A, the rest group B.
// Group A speakers with no train-category files are dropped with a warning.
SplitPlan make_split(const Manifest& manifest, int n_in_domain,
                     std::optional<char> gender = std::nullopt);

void write_split_json(const SplitPlan& split, const std::filesystem::path& path);
SplitPlan read_split_json(const std::filesystem::path& path);

}  // namespace nnspeaker::corpus
