#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnspeaker {

// Input bytes that are not what the format promises (wrong codec, channel
// count, bit depth, ...).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally broken input (truncated chunk, bad header, malformed CSV).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure (unreadable tree, unwritable directory).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric breakdown (non-finite weights, zero normalizer, no real root).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void warn(const std::string& message);

// FNV-1a, used for artifact fingerprints in pipeline state tracking.
uint64_t fnv1a64(const void* data, size_t size);
uint64_t hash_file(const std::filesystem::path& path);
std::string hash_hex(uint64_t h);

// Uniform double strictly inside (0, 1), derived from the raw engine output
// so results do not depend on the standard library's distribution internals.
double uniform_unit(std::mt19937_64& rng);

// Deterministic stream seed for a (run seed, item...) tuple.
uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0);

std::vector<std::string> split_string(const std::string& s, char delim);
std::string to_lower(const std::string& s);

}  // namespace nnspeaker
