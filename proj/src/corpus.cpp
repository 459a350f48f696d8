#include "nnspeaker/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "nnspeaker/common.hpp"

namespace fs = std::filesystem;

namespace nnspeaker::corpus {

std::string category_name(Category c) {
  switch (c) {
    case Category::kSX: return "SX";
    case Category::kSI: return "SI";
    case Category::kSA: return "SA";
  }
  return "?";
}

std::optional<Category> category_from_sentence_id(const std::string& sentence_id) {
  const std::string lower = to_lower(sentence_id);
  if (lower.rfind("sx", 0) == 0) return Category::kSX;
  if (lower.rfind("si", 0) == 0) return Category::kSI;
  if (lower.rfind("sa", 0) == 0) return Category::kSA;
  return std::nullopt;
}

std::vector<std::string> Manifest::speakers() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (out.empty() || out.back() != e.speaker_id) out.push_back(e.speaker_id);
  return out;
}

std::vector<ManifestEntry> Manifest::entries_for(const std::string& speaker_id) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.speaker_id == speaker_id) out.push_back(e);
  return out;
}

namespace {

bool is_wav(const fs::path& p) {
  return to_lower(p.extension().string()) == ".wav";
}

bool gender_matches(const std::string& speaker_id, std::optional<char> gender) {
  if (!gender) return true;
  if (speaker_id.empty()) return false;
  return std::tolower(static_cast<unsigned char>(speaker_id.front())) ==
         std::tolower(static_cast<unsigned char>(*gender));
}

// One speaker directory: collects its wav files as manifest entries.
std::vector<ManifestEntry> collect_speaker(const fs::path& dir, const std::string& speaker_id) {
  std::vector<ManifestEntry> out;
  std::vector<fs::path> files;
  for (const auto& f : fs::directory_iterator(dir))
    if (f.is_regular_file() && is_wav(f.path())) files.push_back(f.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    const std::string sentence_id = to_lower(p.stem().string());
    const auto cat = category_from_sentence_id(sentence_id);
    if (!cat) {
      warn("unrecognized sentence category, skipping: " + p.string());
      continue;
    }
    out.push_back({speaker_id, sentence_id, *cat, p});
  }
  return out;
}

}  // namespace

Manifest build_manifest(const fs::path& root, std::optional<char> gender) {
  std::error_code ec;
  if (!fs::is_directory(root, ec))
    throw IoError("corpus root is not a readable directory: " + root.string());

  // Directories under root that directly contain wav files are speaker dirs
  // (flat layout); directories of directories are dialect regions.
  std::vector<fs::path> level1;
  for (const auto& d : fs::directory_iterator(root))
    if (d.is_directory()) level1.push_back(d.path());
  std::sort(level1.begin(), level1.end());

  // (region, speaker dir) pairs in deterministic order.
  std::vector<std::pair<std::string, fs::path>> speaker_dirs;
  for (const auto& dir : level1) {
    bool has_subdirs = false;
    for (const auto& sub : fs::directory_iterator(dir))
      if (sub.is_directory()) { has_subdirs = true; break; }
    if (has_subdirs) {
      std::vector<fs::path> subs;
      for (const auto& sub : fs::directory_iterator(dir))
        if (sub.is_directory()) subs.push_back(sub.path());
      std::sort(subs.begin(), subs.end());
      for (const auto& s : subs) speaker_dirs.emplace_back(dir.filename().string(), s);
    } else {
      speaker_dirs.emplace_back("", dir);
    }
  }

  Manifest manifest;
  std::set<std::string> seen;
  for (const auto& [region, dir] : speaker_dirs) {
    const std::string speaker_id = to_lower(dir.filename().string());
    if (!gender_matches(speaker_id, gender)) continue;
    if (!seen.insert(speaker_id).second) {
      warn("duplicate speaker id across regions, skipping: " + speaker_id);
      continue;
    }
    auto entries = collect_speaker(dir, speaker_id);
    if (entries.empty()) {
      warn("speaker with zero usable files, excluded: " + speaker_id);
      continue;
    }
    manifest.entries.insert(manifest.entries.end(), entries.begin(), entries.end());
  }
  return manifest;
}

void write_manifest_csv(const Manifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << "speaker_id,sentence_id,category,path\n";
  for (const auto& e : manifest.entries)
    out << e.speaker_id << ',' << e.sentence_id << ',' << category_name(e.category) << ','
        << e.path.generic_string() << '\n';
  if (!out) throw IoError("manifest write failed: " + path.string());
}

Manifest read_manifest_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty manifest: " + path.string());
  if (line.rfind("speaker_id,sentence_id,category,path", 0) != 0)
    throw ParseError("bad manifest header: " + path.string());
  Manifest manifest;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_string(line, ',');
    if (fields.size() != 4)
      throw ParseError("bad manifest row " + std::to_string(line_no) + ": " + path.string());
    const auto cat = category_from_sentence_id(fields[1]);
    if (!cat)
      throw ParseError("bad category in manifest row " + std::to_string(line_no));
    manifest.entries.push_back({fields[0], fields[1], *cat, fields[3]});
  }
  return manifest;
}

bool SplitPlan::is_train_category(Category c) const {
  return std::find(train_categories.begin(), train_categories.end(), c) != train_categories.end();
}

bool SplitPlan::is_test_category(Category c) const {
  return std::find(test_categories.begin(), test_categories.end(), c) != test_categories.end();
}

SplitPlan make_split(const Manifest& manifest, int n_in_domain, std::optional<char> gender) {
  if (n_in_domain <= 0) throw std::invalid_argument("n_in_domain must be positive");

  std::vector<std::string> speakers;
  for (const auto& s : manifest.speakers())
    if (gender_matches(s, gender)) speakers.push_back(s);
  if (static_cast<size_t>(n_in_domain) > speakers.size())
    throw std::invalid_argument("n_in_domain exceeds speaker count");

  SplitPlan split;
  for (size_t i = 0; i < speakers.size(); ++i) {
    if (static_cast<int>(i) < n_in_domain)
      split.group_a.push_back(speakers[i]);
    else
      split.group_b.push_back(speakers[i]);
  }

  // Enrolled speakers need train-category files; drop the ones without.
  std::set<std::string> with_train;
  for (const auto& e : manifest.entries)
    if (split.is_train_category(e.category)) with_train.insert(e.speaker_id);
  std::vector<std::string> kept;
  for (const auto& s : split.group_a) {
    if (with_train.count(s)) {
      kept.push_back(s);
    } else {
      warn("speaker has no train-category files, excluded from group A: " + s);
    }
  }
  split.group_a = std::move(kept);
  return split;
}

void write_split_json(const SplitPlan& split, const fs::path& path) {
  nlohmann::json j;
  j["group_a"] = split.group_a;
  j["group_b"] = split.group_b;
  std::vector<std::string> tr, te;
  for (auto c : split.train_categories) tr.push_back(category_name(c));
  for (auto c : split.test_categories) te.push_back(category_name(c));
  j["train_categories"] = tr;
  j["test_categories"] = te;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write split: " + path.string());
  out << j.dump(2) << '\n';
}

SplitPlan read_split_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read split: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad split json: " + std::string(e.what()));
  }
  SplitPlan split;
  split.group_a = j.at("group_a").get<std::vector<std::string>>();
  split.group_b = j.at("group_b").get<std::vector<std::string>>();
  auto parse_cats = [&](const char* key) {
    std::vector<Category> cats;
    for (const auto& name : j.at(key).get<std::vector<std::string>>()) {
      auto c = category_from_sentence_id(name);
      if (!c) throw ParseError("bad category in split json: " + name);
      cats.push_back(*c);
    }
    return cats;
  };
  split.train_categories = parse_cats("train_categories");
  split.test_categories = parse_cats("test_categories");
  return split;
}

}  // namespace nnspeaker::corpus
