#pragma once

#include <cstdint>
#include <filesystem>

#include "nnspeaker/corpus.hpp"

namespace nnspeaker::corpus {

struct SynthConfig {
  uint64_t seed = 7;
  int n_speakers = 20;
  int files_per_speaker = 10;
  double duration_s = 2.5;
  int sample_rate = 8000;
};

// Writes a deterministic mini corpus of 16-bit PCM WAV files under out_dir
// (one directory per speaker) and returns its manifest. Each speaker is a
// fixed set of vocal-tract-like resonators excited by a pulse train whose
// pitch drifts inside a per-speaker range; files alternate voiced segments
// with silences. Identical seeds produce byte-identical corpora.
Manifest generate_synthetic_corpus(const SynthConfig& cfg,
                                   const std::filesystem::path& out_dir);

}  // namespace nnspeaker::corpus
