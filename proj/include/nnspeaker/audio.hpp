#pragma once

#include <filesystem>
#include <vector>

namespace nnspeaker {

// Mono sample sequence. Samples are dimensionless amplitudes, nominally in
// [-1, 1] after ingestion or amplitude normalization.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Reads a RIFF/WAVE file. Only linear PCM, 16-bit, mono is accepted; sample
// values are scaled by 1/32768. Rates other than 8000 Hz are accepted with a
// warning.
AudioBuffer read_wav(const std::filesystem::path& path);

// Writes 16-bit PCM mono. Samples are clamped to [-1, 1] and rounded to the
// nearest quantization step.
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);

}  // namespace nnspeaker
