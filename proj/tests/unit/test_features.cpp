#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "nnspeaker/common.hpp"
#include "nnspeaker/features.hpp"

using namespace nnspeaker;
using namespace nnspeaker::features;

namespace {

constexpr double kPi = std::numbers::pi;

AudioBuffer buffer_of(std::vector<double> samples, int rate = 8000) {
  AudioBuffer b;
  b.samples = std::move(samples);
  b.sample_rate = rate;
  return b;
}

// Plain-loop cepstrum computation: naive DFT, scalar filterbank and DCT.
// Slow but written independently of the production path.
Eigen::MatrixXd mfcc_reference(const AudioBuffer& audio, const MfccConfig& cfg) {
  const int fs = audio.sample_rate;
  const int win = static_cast<int>(std::lround(cfg.win_s * fs));
  const int hop = static_cast<int>(std::lround(cfg.hop_s * fs));
  int nfft = 1;
  while (nfft < win) nfft *= 2;
  const int n_bins = nfft / 2 + 1;

  std::vector<double> emphasized(audio.samples.size());
  emphasized[0] = audio.samples[0];
  for (size_t i = 1; i < audio.samples.size(); ++i)
    emphasized[i] = audio.samples[i] - cfg.preemphasis * audio.samples[i - 1];

  auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[static_cast<size_t>(i)] = mel_to_hz(hz_to_mel(fs / 2.0) * i / (cfg.n_mels + 1));

  const int n_frames = static_cast<int>((audio.samples.size() - static_cast<size_t>(win)) /
                                        static_cast<size_t>(hop)) + 1;
  Eigen::MatrixXd out(n_frames, cfg.n_coeffs);
  for (int f = 0; f < n_frames; ++f) {
    std::vector<double> frame(static_cast<size_t>(nfft), 0.0);
    for (int i = 0; i < win; ++i)
      frame[static_cast<size_t>(i)] =
          emphasized[static_cast<size_t>(f) * hop + static_cast<size_t>(i)] *
          (0.54 - 0.46 * std::cos(2.0 * kPi * i / (win - 1)));

    std::vector<double> power(static_cast<size_t>(n_bins));
    for (int k = 0; k < n_bins; ++k) {
      std::complex<double> acc(0, 0);
      for (int i = 0; i < nfft; ++i)
        acc += frame[static_cast<size_t>(i)] *
               std::exp(std::complex<double>(0, -2.0 * kPi * k * i / nfft));
      power[static_cast<size_t>(k)] = std::norm(acc);
    }

    std::vector<double> logmel(static_cast<size_t>(cfg.n_mels));
    for (int b = 0; b < cfg.n_mels; ++b) {
      double acc = 0;
      for (int k = 0; k < n_bins; ++k) {
        const double freq = static_cast<double>(k) * fs / nfft;
        const double fl = edges[static_cast<size_t>(b)];
        const double fc = edges[static_cast<size_t>(b) + 1];
        const double fr = edges[static_cast<size_t>(b) + 2];
        double w = 0;
        if (freq >= fl && freq <= fc && fc > fl) w = (freq - fl) / (fc - fl);
        else if (freq > fc && freq <= fr && fr > fc) w = (fr - freq) / (fr - fc);
        acc += w * power[static_cast<size_t>(k)];
      }
      logmel[static_cast<size_t>(b)] = std::log(std::max(acc, cfg.log_floor));
    }

    for (int j = 0; j < cfg.n_coeffs; ++j) {
      double acc = 0;
      for (int b = 0; b < cfg.n_mels; ++b)
        acc += logmel[static_cast<size_t>(b)] * std::cos(kPi * j * (2.0 * b + 1.0) / (2.0 * cfg.n_mels));
      out(f, j) = acc * (j == 0 ? std::sqrt(1.0 / cfg.n_mels) : std::sqrt(2.0 / cfg.n_mels));
    }
  }
  return out;
}

// Regression slope over +-2 frames with clamped indices, scalar loops.
Eigen::MatrixXd delta_reference(const Eigen::MatrixXd& src) {
  const int n = static_cast<int>(src.rows());
  Eigen::MatrixXd out(n, src.cols());
  for (int t = 0; t < n; ++t)
    for (int d = 0; d < src.cols(); ++d) {
      double num = 0;
      for (int k = -2; k <= 2; ++k)
        num += k * src(std::clamp(t + k, 0, n - 1), d);
      out(t, d) = num / 10.0;
    }
  return out;
}

}  // namespace

TEST_CASE("mfcc frame geometry") {
  const auto fm = mfcc(buffer_of(std::vector<double>(8000, 0.01)));
  CHECK(fm.frames() == 98);  // floor((8000-200)/80)+1
  CHECK(fm.dims() == 13);
  CHECK(fm.win_s == doctest::Approx(0.025));
  CHECK(fm.hop_s == doctest::Approx(0.010));
  CHECK_THROWS_AS(mfcc(buffer_of(std::vector<double>(100, 0.01))), SkipFile);
}

TEST_CASE("mfcc of silence is a constant log-floor cepstrum") {
  const auto fm = mfcc(buffer_of(std::vector<double>(2000, 0.0)));
  for (int f = 1; f < fm.frames(); ++f)
    CHECK((fm.data.row(f) - fm.data.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  // Cosine transform of a constant vector: everything beyond c0 vanishes.
  for (int j = 1; j < fm.dims(); ++j) CHECK(std::abs(fm.data(0, j)) < 1e-9);
}

TEST_CASE("mfcc matches the naive reference implementation") {
  std::mt19937_64 rng(101);
  std::vector<double> samples(1600);
  for (auto& v : samples) v = test_helpers::uniform(rng, -1, 1);
  const auto audio = buffer_of(std::move(samples));
  const MfccConfig cfg;
  const auto fast = mfcc(audio, cfg);
  const auto slow = mfcc_reference(audio, cfg);
  REQUIRE(fast.data.rows() == slow.rows());
  CHECK((fast.data - slow).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("low sinusoid vs white noise: spectral tilt shows in c1") {
  const int fs = 8000;
  std::vector<double> sine(static_cast<size_t>(fs));
  for (int i = 0; i < fs; ++i)
    sine[static_cast<size_t>(i)] = std::sin(2.0 * kPi * 400.0 * i / fs);
  std::mt19937_64 rng(103);
  std::vector<double> noise(static_cast<size_t>(fs));
  for (auto& v : noise) v = test_helpers::uniform(rng, -1, 1);

  const auto fm_sine = mfcc(buffer_of(std::move(sine)));
  const auto fm_noise = mfcc(buffer_of(std::move(noise)));
  CHECK(fm_sine.data.col(1).mean() > fm_noise.data.col(1).mean());
}

TEST_CASE("mfcc is deterministic") {
  std::mt19937_64 rng(107);
  std::vector<double> samples(2400);
  for (auto& v : samples) v = test_helpers::uniform(rng, -1, 1);
  const auto a = mfcc(buffer_of(samples));
  const auto b = mfcc(buffer_of(samples));
  CHECK((a.data - b.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("add_deltas") {
  SUBCASE("constant input: all derivatives vanish") {
    FeatureMatrix fm;
    fm.data = Eigen::MatrixXd::Constant(7, 3, 2.5);
    const auto out = add_deltas(fm);
    REQUIRE(out.dims() == 9);
    CHECK(out.data.rightCols(6).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("linear ramp: interior deltas are the slope") {
    FeatureMatrix fm;
    fm.data.resize(9, 1);
    for (int t = 0; t < 9; ++t) fm.data(t, 0) = t;
    const auto out = add_deltas(fm);
    for (int t = 2; t < 7; ++t) CHECK(out.data(t, 1) == doctest::Approx(1.0));
  }
  SUBCASE("random input matches the direct regression formula") {
    std::mt19937_64 rng(109);
    FeatureMatrix fm;
    fm.data.resize(7, 4);
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 4; ++c) fm.data(r, c) = test_helpers::uniform(rng, -2, 2);
    const auto out = add_deltas(fm);
    const auto d1 = delta_reference(fm.data);
    const auto d2 = delta_reference(d1);
    CHECK((out.data.middleCols(4, 4) - d1).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((out.data.rightCols(4) - d2).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("linearity") {
    std::mt19937_64 rng(113);
    FeatureMatrix x, y;
    x.data.resize(6, 2);
    y.data.resize(6, 2);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 2; ++c) {
        x.data(r, c) = test_helpers::uniform(rng, -1, 1);
        y.data(r, c) = test_helpers::uniform(rng, -1, 1);
      }
    FeatureMatrix combo;
    combo.data = 2.0 * x.data + 3.0 * y.data;
    const Eigen::MatrixXd lhs = add_deltas(combo).data;
    const Eigen::MatrixXd rhs = 2.0 * add_deltas(x).data + 3.0 * add_deltas(y).data;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("speaker statistics and normalization") {
  SUBCASE("two-frame example, population convention") {
    FeatureMatrix fm;
    fm.data.resize(2, 1);
    fm.data << 0.0, 2.0;
    const auto stats = fit_speaker_stats({fm});
    CHECK(stats.mean[0] == doctest::Approx(1.0));
    CHECK(stats.std_dev[0] == doctest::Approx(1.0));
  }
  SUBCASE("constant dimension hits the floor") {
    FeatureMatrix fm;
    fm.data = Eigen::MatrixXd::Constant(5, 2, 3.0);
    CHECK(fit_speaker_stats({fm}).std_dev[0] == doctest::Approx(1e-6));
  }
  SUBCASE("matches a two-pass reference") {
    std::mt19937_64 rng(127);
    FeatureMatrix fm;
    fm.data.resize(100, 3);
    for (int r = 0; r < 100; ++r)
      for (int c = 0; c < 3; ++c) fm.data(r, c) = test_helpers::uniform(rng, -5, 5);
    const auto stats = fit_speaker_stats({fm});
    for (int c = 0; c < 3; ++c) {
      double mean = 0;
      for (int r = 0; r < 100; ++r) mean += fm.data(r, c);
      mean /= 100;
      double var = 0;
      for (int r = 0; r < 100; ++r) var += (fm.data(r, c) - mean) * (fm.data(r, c) - mean);
      var /= 100;
      CHECK(stats.mean[c] == doctest::Approx(mean).epsilon(1e-12));
      CHECK(stats.std_dev[c] == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    }
  }
  SUBCASE("too few frames") {
    FeatureMatrix fm;
    fm.data.resize(1, 2);
    fm.data << 1.0, 2.0;
    CHECK_THROWS_AS(fit_speaker_stats({fm}), std::invalid_argument);
  }
  SUBCASE("self-normalization gives zero mean, unit variance") {
    std::mt19937_64 rng(131);
    FeatureMatrix fm;
    fm.data.resize(80, 4);
    for (int r = 0; r < 80; ++r)
      for (int c = 0; c < 4; ++c) fm.data(r, c) = test_helpers::uniform(rng, -3, 7);
    const auto normalized = apply_mvn(fm, fit_speaker_stats({fm}));
    for (int c = 0; c < 4; ++c) {
      CHECK(std::abs(normalized.data.col(c).mean()) < 1e-9);
      const double var = normalized.data.col(c).array().square().mean() -
                         normalized.data.col(c).mean() * normalized.data.col(c).mean();
      CHECK(std::abs(var - 1.0) < 1e-6);
    }
  }
  SUBCASE("unit stats are the identity") {
    FeatureMatrix fm;
    fm.data.resize(3, 2);
    fm.data << 1, 2, 3, 4, 5, 6;
    SpeakerStats stats;
    stats.mean = Eigen::VectorXd::Zero(2);
    stats.std_dev = Eigen::VectorXd::Ones(2);
    CHECK((apply_mvn(fm, stats).data - fm.data).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("dimension mismatch") {
    FeatureMatrix fm;
    fm.data.resize(2, 3);
    fm.data.setZero();
    SpeakerStats stats;
    stats.mean = Eigen::VectorXd::Zero(2);
    stats.std_dev = Eigen::VectorXd::Ones(2);
    CHECK_THROWS_AS(apply_mvn(fm, stats), std::invalid_argument);
  }
}

TEST_CASE("concatenate_frames") {
  FeatureMatrix fm;
  fm.win_s = 0.025;
  fm.hop_s = 0.010;

  SUBCASE("10 frames make a single 390-dim vector") {
    fm.data = Eigen::MatrixXd::Random(10, 39);
    const auto out = concatenate_frames(fm, 10, 3);
    CHECK(out.frames() == 1);
    CHECK(out.dims() == 390);
    CHECK(out.win_s == doctest::Approx(0.100));
    CHECK(out.hop_s == doctest::Approx(0.030));
  }
  SUBCASE("13 frames make two windows") {
    fm.data = Eigen::MatrixXd::Random(13, 39);
    CHECK(concatenate_frames(fm, 10, 3).frames() == 2);
  }
  SUBCASE("9 frames cannot fill a window") {
    fm.data = Eigen::MatrixXd::Random(9, 39);
    CHECK_THROWS_AS(concatenate_frames(fm, 10, 3), SkipFile);
  }
  SUBCASE("pure rearrangement: output entries map back to input entries") {
    std::mt19937_64 rng(137);
    fm.data.resize(17, 5);
    for (int r = 0; r < 17; ++r)
      for (int c = 0; c < 5; ++c) fm.data(r, c) = test_helpers::uniform(rng, -9, 9);
    const auto out = concatenate_frames(fm, 4, 2);
    REQUIRE(out.frames() == 7);
    for (int i = 0; i < out.frames(); ++i)
      for (int w = 0; w < 4; ++w)
        for (int c = 0; c < 5; ++c)
          CHECK(out.data(i, w * 5 + c) == fm.data(i * 2 + w, c));
  }
}

TEST_CASE("feature file round-trip") {
  const auto dir = test_helpers::fresh_dir("nnsf");
  FeatureMatrix fm;
  fm.win_s = 0.100;
  fm.hop_s = 0.030;
  std::mt19937_64 rng(139);
  fm.data.resize(6, 8);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 8; ++c)
      fm.data(r, c) = static_cast<float>(test_helpers::uniform(rng, -4, 4));

  write_features(dir / "x.nnsf", fm);
  const auto back = read_features(dir / "x.nnsf");
  CHECK(back.win_s == fm.win_s);
  CHECK(back.hop_s == fm.hop_s);
  CHECK((back.data - fm.data).cwiseAbs().maxCoeff() == 0.0);  // payload was f32-exact

  CHECK_THROWS_AS(read_features(dir / "missing.nnsf"), IoError);
}
