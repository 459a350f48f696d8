#include "nnspeaker/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>

#include "nnspeaker/common.hpp"

namespace fs = std::filesystem;

namespace nnspeaker::features {

namespace {

constexpr double kPi = std::numbers::pi;

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Iterative radix-2 FFT, in place. n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const auto u = a[i + j];
        const auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Triangular mel filterbank, n_mels x (nfft/2 + 1), bands spanning 0..Nyquist.
Eigen::MatrixXd mel_filterbank(int sample_rate, int nfft, int n_mels) {
  auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };

  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[static_cast<size_t>(i)] = mel_to_hz(mel_hi * i / (n_mels + 1));

  const int n_bins = nfft / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
  for (int b = 0; b < n_mels; ++b) {
    const double fl = edges[static_cast<size_t>(b)];
    const double fc = edges[static_cast<size_t>(b) + 1];
    const double fr = edges[static_cast<size_t>(b) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / nfft;
      double w = 0.0;
      if (f >= fl && f <= fc && fc > fl)
        w = (f - fl) / (fc - fl);
      else if (f > fc && f <= fr && fr > fc)
        w = (fr - f) / (fr - fc);
      fb(b, k) = w;
    }
  }
  return fb;
}

// Orthonormal DCT-II, n_coeffs x n_mels.
Eigen::MatrixXd dct_matrix(int n_coeffs, int n_mels) {
  Eigen::MatrixXd dct(n_coeffs, n_mels);
  for (int j = 0; j < n_coeffs; ++j) {
    const double scale = j == 0 ? std::sqrt(1.0 / n_mels) : std::sqrt(2.0 / n_mels);
    for (int b = 0; b < n_mels; ++b)
      dct(j, b) = scale * std::cos(kPi * j * (2.0 * b + 1.0) / (2.0 * n_mels));
  }
  return dct;
}

void write_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_f64(std::ofstream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::ifstream& in, const fs::path& path) {
  uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw ParseError("truncated feature file: " + path.string());
  return v;
}

double read_f64(std::ifstream& in, const fs::path& path) {
  double v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw ParseError("truncated feature file: " + path.string());
  return v;
}

}  // namespace

FeatureMatrix mfcc(const AudioBuffer& audio, const MfccConfig& cfg) {
  if (audio.sample_rate <= 0) throw std::invalid_argument("mfcc: unknown sample rate");
  const int win = static_cast<int>(std::lround(cfg.win_s * audio.sample_rate));
  const int hop = static_cast<int>(std::lround(cfg.hop_s * audio.sample_rate));
  if (audio.samples.size() < static_cast<size_t>(win))
    throw SkipFile("mfcc: audio shorter than one frame");

  // Pre-emphasis over the whole signal; y[0] = x[0].
  std::vector<double> emphasized(audio.samples.size());
  emphasized[0] = audio.samples[0];
  for (size_t i = 1; i < audio.samples.size(); ++i)
    emphasized[i] = audio.samples[i] - cfg.preemphasis * audio.samples[i - 1];

  std::vector<double> hamming(static_cast<size_t>(win));
  for (int i = 0; i < win; ++i)
    hamming[static_cast<size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (win - 1));

  const int nfft = next_pow2(win);
  const int n_bins = nfft / 2 + 1;
  const Eigen::MatrixXd fb = mel_filterbank(audio.sample_rate, nfft, cfg.n_mels);
  const Eigen::MatrixXd dct = dct_matrix(cfg.n_coeffs, cfg.n_mels);

  const int n_frames =
      static_cast<int>((audio.samples.size() - static_cast<size_t>(win)) / static_cast<size_t>(hop)) + 1;

  FeatureMatrix out;
  out.win_s = cfg.win_s;
  out.hop_s = cfg.hop_s;
  out.data.resize(n_frames, cfg.n_coeffs);

  std::vector<std::complex<double>> buf(static_cast<size_t>(nfft));
  Eigen::VectorXd power(n_bins);
  for (int f = 0; f < n_frames; ++f) {
    const size_t start = static_cast<size_t>(f) * static_cast<size_t>(hop);
    for (int i = 0; i < win; ++i)
      buf[static_cast<size_t>(i)] = emphasized[start + static_cast<size_t>(i)] *
                                    hamming[static_cast<size_t>(i)];
    std::fill(buf.begin() + win, buf.end(), std::complex<double>(0.0, 0.0));
    fft_radix2(buf);
    for (int k = 0; k < n_bins; ++k) power[k] = std::norm(buf[static_cast<size_t>(k)]);

    Eigen::VectorXd band = fb * power;
    for (int b = 0; b < cfg.n_mels; ++b) band[b] = std::log(std::max(band[b], cfg.log_floor));
    out.data.row(f) = (dct * band).transpose();
  }
  return out;
}

FeatureMatrix add_deltas(const FeatureMatrix& input) {
  if (input.frames() < 1) throw std::invalid_argument("add_deltas: empty features");
  const int n = input.frames();
  const int d = input.dims();

  auto regression = [&](const Eigen::MatrixXd& src) {
    Eigen::MatrixXd out(n, d);
    for (int t = 0; t < n; ++t) {
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
      for (int k = -2; k <= 2; ++k) {
        const int idx = std::clamp(t + k, 0, n - 1);  // replicate edges
        acc += static_cast<double>(k) * src.row(idx);
      }
      out.row(t) = acc / 10.0;
    }
    return out;
  };

  const Eigen::MatrixXd delta = regression(input.data);
  const Eigen::MatrixXd ddelta = regression(delta);

  FeatureMatrix out = input;
  out.data.resize(n, 3 * d);
  out.data.leftCols(d) = input.data;
  out.data.middleCols(d, d) = delta;
  out.data.rightCols(d) = ddelta;
  return out;
}

SpeakerStats fit_speaker_stats(const std::vector<FeatureMatrix>& features) {
  long total = 0;
  int dims = 0;
  for (const auto& fm : features) {
    total += fm.frames();
    dims = fm.dims();
  }
  if (total < 2) throw std::invalid_argument("fit_speaker_stats: need at least 2 frames");

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dims);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(dims);
  for (const auto& fm : features) {
    sum += fm.data.colwise().sum().transpose();
    sum_sq += fm.data.array().square().colwise().sum().matrix().transpose();
  }

  SpeakerStats stats;
  stats.speaker_id = features.front().speaker_id;
  stats.mean = sum / static_cast<double>(total);
  Eigen::VectorXd var =
      sum_sq / static_cast<double>(total) - stats.mean.array().square().matrix();
  stats.std_dev = var.array().max(0.0).sqrt().max(1e-6).matrix();
  return stats;
}

FeatureMatrix apply_mvn(const FeatureMatrix& input, const SpeakerStats& stats) {
  if (input.dims() != stats.mean.size())
    throw std::invalid_argument("apply_mvn: dimension mismatch");
  FeatureMatrix out = input;
  out.data = (input.data.rowwise() - stats.mean.transpose()).array().rowwise() /
             stats.std_dev.transpose().array();
  return out;
}

FeatureMatrix concatenate_frames(const FeatureMatrix& input, int win_frames, int hop_frames) {
  if (win_frames < 1 || hop_frames < 1)
    throw std::invalid_argument("concatenate_frames: bad window/hop");
  const int n = input.frames();
  if (n < win_frames)
    throw SkipFile("concatenate_frames: fewer frames than the concatenation window");
  const int d = input.dims();
  const int m = (n - win_frames) / hop_frames + 1;

  FeatureMatrix out = input;
  out.data.resize(m, win_frames * d);
  for (int i = 0; i < m; ++i)
    for (int w = 0; w < win_frames; ++w)
      out.data.block(i, w * d, 1, d) = input.data.row(i * hop_frames + w);
  out.win_s = win_frames * input.hop_s;
  out.hop_s = hop_frames * input.hop_s;
  return out;
}

void write_features(const fs::path& path, const FeatureMatrix& fm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file: " + path.string());
  out.write("NNSF", 4);
  write_u32(out, 1);
  write_u32(out, static_cast<uint32_t>(fm.frames()));
  write_u32(out, static_cast<uint32_t>(fm.dims()));
  write_f64(out, fm.win_s);
  write_f64(out, fm.hop_s);
  for (int r = 0; r < fm.frames(); ++r)
    for (int c = 0; c < fm.dims(); ++c) {
      const float v = static_cast<float>(fm.data(r, c));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  if (!out) throw IoError("feature write failed: " + path.string());
}

FeatureMatrix read_features(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read feature file: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "NNSF", 4) != 0)
    throw FormatError("not a feature file: " + path.string());
  const uint32_t version = read_u32(in, path);
  if (version != 1) throw FormatError("unsupported feature file version");
  const uint32_t rows = read_u32(in, path);
  const uint32_t cols = read_u32(in, path);

  FeatureMatrix fm;
  fm.win_s = read_f64(in, path);
  fm.hop_s = read_f64(in, path);
  fm.data.resize(rows, cols);
  for (uint32_t r = 0; r < rows; ++r)
    for (uint32_t c = 0; c < cols; ++c) {
      float v = 0;
      if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw ParseError("truncated feature payload: " + path.string());
      fm.data(r, c) = v;
    }
  return fm;
}

void write_feature_index(const std::vector<FeatureIndexEntry>& entries, const fs::path& dir) {
  std::ofstream out(dir / "index.csv", std::ios::binary);
  if (!out) throw IoError("cannot write feature index under " + dir.string());
  out << "speaker_id,file_id,path,rows\n";
  for (const auto& e : entries)
    out << e.speaker_id << ',' << e.file_id << ',' << e.path.generic_string() << ',' << e.rows
        << '\n';
}

std::vector<FeatureIndexEntry> read_feature_index(const fs::path& dir) {
  const fs::path path = dir / "index.csv";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read feature index: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("speaker_id,file_id,path,rows", 0) != 0)
    throw ParseError("bad feature index header: " + path.string());
  std::vector<FeatureIndexEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_string(line, ',');
    if (fields.size() != 4) throw ParseError("bad feature index row: " + path.string());
    entries.push_back({fields[0], fields[1], fields[2], std::stoi(fields[3])});
  }
  return entries;
}

FeaturizeSummary featurize_manifest(const corpus::Manifest& manifest, const fs::path& out_dir,
                                    const FeaturizeOptions& opts) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir))
    throw IoError("cannot create feature directory: " + out_dir.string());

  FeaturizeSummary summary;

  // Front end per file, in manifest (canonical) order.
  struct Pending {
    corpus::ManifestEntry entry;
    FeatureMatrix feats;  // 39-dim
  };
  std::vector<Pending> pending;
  for (const auto& entry : manifest.entries) {
    try {
      AudioBuffer audio = preprocess::normalize_amplitude(read_wav(entry.path));
      if (opts.apply_vad) {
        const auto mask = preprocess::detect_voice(audio, opts.vad);
        audio = preprocess::extract_voiced(audio, mask);
      }
      FeatureMatrix feats = add_deltas(mfcc(audio, opts.mfcc));
      feats.speaker_id = entry.speaker_id;
      feats.file_id = entry.sentence_id;
      pending.push_back({entry, std::move(feats)});
    } catch (const SkipFile& e) {
      summary.skipped.push_back(entry.speaker_id + "/" + entry.sentence_id + ": " + e.what());
      warn("skipping " + entry.path.string() + ": " + e.what());
    }
  }

  // Normalization statistics over the processed set.
  if (opts.mvn != MvnMode::kNone && !pending.empty()) {
    std::map<std::string, std::vector<FeatureMatrix>> by_speaker;
    std::vector<FeatureMatrix> all;
    for (const auto& p : pending) {
      if (opts.mvn == MvnMode::kSpeaker)
        by_speaker[p.entry.speaker_id].push_back(p.feats);
      else
        all.push_back(p.feats);
    }
    std::map<std::string, SpeakerStats> stats;
    if (opts.mvn == MvnMode::kSpeaker) {
      for (auto& [spk, mats] : by_speaker) stats[spk] = fit_speaker_stats(mats);
    } else {
      stats[""] = fit_speaker_stats(all);
    }
    for (auto& p : pending) {
      const auto& s = opts.mvn == MvnMode::kSpeaker ? stats.at(p.entry.speaker_id) : stats.at("");
      p.feats = apply_mvn(p.feats, s);
    }
  }

  // Concatenate and write.
  for (auto& p : pending) {
    try {
      const FeatureMatrix concat = concatenate_frames(p.feats, opts.concat_win, opts.concat_hop);
      const fs::path path = out_dir / (p.entry.speaker_id + "_" + p.entry.sentence_id + ".nnsf");
      write_features(path, concat);
      summary.written.push_back({p.entry.speaker_id, p.entry.sentence_id, path, concat.frames()});
    } catch (const SkipFile& e) {
      summary.skipped.push_back(p.entry.speaker_id + "/" + p.entry.sentence_id + ": " + e.what());
      warn("skipping " + p.entry.path.string() + ": " + e.what());
    }
  }
  write_feature_index(summary.written, out_dir);
  return summary;
}

}  // namespace nnspeaker::features
