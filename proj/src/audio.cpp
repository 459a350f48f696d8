#include "nnspeaker/audio.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "nnspeaker/common.hpp"

namespace nnspeaker {

namespace {

uint16_t read_u16le(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t read_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void write_u16le(std::ofstream& out, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

void write_u32le(std::ofstream& out, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path.string());

  std::array<unsigned char, 12> riff{};
  if (!in.read(reinterpret_cast<char*>(riff.data()), riff.size()))
    throw ParseError("truncated RIFF header: " + path.string());
  if (std::memcmp(riff.data(), "RIFF", 4) != 0 || std::memcmp(riff.data() + 8, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file: " + path.string());

  bool have_fmt = false;
  uint16_t format_tag = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  AudioBuffer audio;
  bool have_data = false;

  std::array<unsigned char, 8> chunk{};
  while (in.read(reinterpret_cast<char*>(chunk.data()), chunk.size())) {
    const uint32_t size = read_u32le(chunk.data() + 4);
    if (std::memcmp(chunk.data(), "fmt ", 4) == 0) {
      if (size < 16) throw ParseError("fmt chunk too small: " + path.string());
      std::vector<unsigned char> fmt(size);
      if (!in.read(reinterpret_cast<char*>(fmt.data()), size))
        throw ParseError("truncated fmt chunk: " + path.string());
      format_tag = read_u16le(fmt.data());
      channels = read_u16le(fmt.data() + 2);
      sample_rate = read_u32le(fmt.data() + 4);
      bits = read_u16le(fmt.data() + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk.data(), "data", 4) == 0) {
      if (!have_fmt) throw ParseError("data chunk before fmt chunk: " + path.string());
      if (format_tag != 1) throw FormatError("unsupported encoding (want PCM): " + path.string());
      if (channels != 1) throw FormatError("unsupported channel count (want mono): " + path.string());
      if (bits != 16) throw FormatError("unsupported bit depth (want 16): " + path.string());
      std::vector<unsigned char> data(size);
      if (size > 0 && !in.read(reinterpret_cast<char*>(data.data()), size))
        throw ParseError("truncated data chunk: " + path.string());
      const size_t n = size / 2;
      audio.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        const auto raw = static_cast<int16_t>(read_u16le(data.data() + 2 * i));
        audio.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      have_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);  // skip unknown chunk, word aligned
      if (!in) throw ParseError("truncated chunk in wav file: " + path.string());
    }
  }
  if (!have_fmt || !have_data) throw ParseError("missing fmt/data chunk: " + path.string());

  audio.sample_rate = static_cast<int>(sample_rate);
  if (sample_rate != 8000)
    warn("expected 8000 Hz, got " + std::to_string(sample_rate) + " Hz: " + path.string());
  return audio;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open wav file for writing: " + path.string());

  const uint32_t n = static_cast<uint32_t>(audio.samples.size());
  const uint32_t data_size = n * 2;
  const uint32_t rate = static_cast<uint32_t>(audio.sample_rate);

  out.write("RIFF", 4);
  write_u32le(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32le(out, 16);
  write_u16le(out, 1);  // PCM
  write_u16le(out, 1);  // mono
  write_u32le(out, rate);
  write_u32le(out, rate * 2);  // byte rate
  write_u16le(out, 2);         // block align
  write_u16le(out, 16);        // bits
  out.write("data", 4);
  write_u32le(out, data_size);
  for (double s : audio.samples) {
    double clamped = std::min(1.0, std::max(-1.0, s));
    auto q = static_cast<long>(std::lround(clamped * 32768.0));
    q = std::min(32767l, std::max(-32768l, q));
    write_u16le(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace nnspeaker
