#include "disfluent/dsp.hpp"
#include "disfluent/error.hpp"

#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace disfluent;

namespace {

Eigen::VectorXf sine(double hz, int rate, Eigen::Index n, double amplitude = 1.0) {
  Eigen::VectorXf x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = static_cast<float>(amplitude * std::sin(2 * std::numbers::pi * hz * i / rate));
  return x;
}

}  // namespace

TEST(Hann, ClosedFormSmallCases) {
  const auto w3 = hann_window<double>(3);
  EXPECT_DOUBLE_EQ(w3[0], 0.0);
  EXPECT_DOUBLE_EQ(w3[1], 1.0);
  EXPECT_DOUBLE_EQ(w3[2], 0.0);
  const auto w4 = hann_window<double>(4);
  EXPECT_DOUBLE_EQ(w4[0], 0.0);
  EXPECT_NEAR(w4[1], 0.75, 1e-15);
  EXPECT_NEAR(w4[2], 0.75, 1e-15);
  EXPECT_DOUBLE_EQ(w4[3], 0.0);
}

TEST(Hann, SymmetricWithUnitCentre) {
  for (Eigen::Index n : {2, 5, 17, 400, 401}) {
    const auto w = hann_window<float>(n);
    for (Eigen::Index k = 0; k < n; ++k) EXPECT_EQ(w[k], w[n - 1 - k]);
    if (n % 2 == 1) EXPECT_FLOAT_EQ(w[n / 2], 1.0f);
    EXPECT_LE(w.maxCoeff(), 1.0f);
  }
}

TEST(Hann, TooShortThrows) {
  try {
    hann_window<double>(1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthTooSmall);
  }
}

TEST(Stft, CanonicalGeometry) {
  SpectrogramConfig cfg;
  EXPECT_EQ(cfg.window_length(16000), 400);
  EXPECT_EQ(cfg.hop_length(16000), 160);
  EXPECT_EQ(cfg.freq_bins(), 257);
  EXPECT_EQ(cfg.frame_count(64000, 16000), 1 + (64000 - 400) / 160);
  EXPECT_EQ(cfg.frame_count(64000, 16000), 398);
  const auto X = stft<float>(Eigen::VectorXf::Zero(64000), cfg, 16000);
  EXPECT_EQ(X.rows(), 257);
  EXPECT_EQ(X.cols(), 398);
  EXPECT_EQ(X.cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Stft, ThousandHertzPeaksAtBin32EveryFrame) {
  const auto X = stft<double>(sine(1000, 16000, 64000), SpectrogramConfig{}, 16000);
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    Eigen::Index arg;
    X.col(f).cwiseAbs().maxCoeff(&arg);
    ASSERT_EQ(arg, 32) << "frame " << f;
  }
}

TEST(Stft, ToneEnergyConcentratedNearItsBin) {
  const auto X = stft<double>(sine(2500, 16000, 8000), SpectrogramConfig{}, 16000);
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    const Eigen::VectorXd e = X.col(f).cwiseAbs2();
    EXPECT_GE(e.segment(80 - 2, 5).sum() / e.sum(), 0.70);
  }
}

TEST(Stft, MatchesDirectDft) {
  std::mt19937_64 rng(11);
  std::normal_distribution<float> n(0.f, 0.3f);
  Eigen::VectorXf x(2000);
  for (auto& v : x) v = n(rng);
  SpectrogramConfig cfg;
  const auto X = stft<double>(x, cfg, 16000);
  const auto w = hann_window<double>(400);
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    std::vector<double> frame(400);
    for (int k = 0; k < 400; ++k) frame[k] = static_cast<double>(x[f * 160 + k]) * w[k];
    const auto ref = oracle::dft(frame, 512, 257);
    double scale = 0;
    for (const auto& c : ref) scale = std::max(scale, std::abs(c));
    for (int k = 0; k < 257; ++k) ASSERT_LT(std::abs(X(k, f) - ref[k]) / scale, 1e-6) << f << "," << k;
  }
}

TEST(Stft, ParsevalAgainstWindowedEnergy) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  Eigen::VectorXf x(1600);
  for (auto& v : x) v = u(rng);
  const auto X = stft<double>(x, SpectrogramConfig{}, 16000);
  const auto w = hann_window<double>(400);
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    double time_energy = 0;
    for (int k = 0; k < 400; ++k) time_energy += std::pow(x[f * 160 + k] * w[k], 2);
    double freq_energy = std::norm(X(0, f)) + std::norm(X(256, f));
    for (int k = 1; k < 256; ++k) freq_energy += 2 * std::norm(X(k, f));
    EXPECT_NEAR(freq_energy / 512.0, time_energy, 1e-6 * time_energy);
  }
}

TEST(Stft, ShorterThanWindowThrows) {
  try {
    stft<float>(Eigen::VectorXf::Zero(399), SpectrogramConfig{}, 16000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooShort);
  }
}

TEST(SpectrogramConfig, RejectsBadGeometry) {
  SpectrogramConfig c;
  c.fft_len = 500;
  EXPECT_THROW(c.validate(16000), Error);
  c.fft_len = 256;  // 400-sample window no longer fits
  EXPECT_THROW(c.validate(16000), Error);
  EXPECT_NO_THROW(SpectrogramConfig{}.validate(16000));
}

TEST(Spectrogram, CanonicalClipShapeAndNormalisation) {
  AudioClip clip;
  clip.samples = sine(440, 16000, 64000, 0.3);
  clip.samples += sine(3100, 16000, 64000, 0.1);
  const auto s = spectrogram(clip, SpectrogramConfig{});
  EXPECT_EQ(s.freq_bins(), 257);
  EXPECT_EQ(s.frames(), 398);
  const Eigen::ArrayXXd v = s.values.cast<double>().array();
  const double mean = v.mean();
  const double std = std::sqrt((v - mean).square().mean());
  EXPECT_LT(std::abs(mean), 1e-6);
  EXPECT_LT(std::abs(std - 1.0), 1e-6);
}

TEST(Spectrogram, SilenceSitsOnTheLogFloor) {
  SpectrogramConfig cfg;
  cfg.normalize = false;
  const auto s = spectrogram(Eigen::VectorXf::Zero(64000), 16000, cfg);
  EXPECT_TRUE((s.values.array() == static_cast<float>(std::log(1e-10))).all());
  cfg.normalize = true;
  const auto n = spectrogram(Eigen::VectorXf::Zero(64000), 16000, cfg);
  EXPECT_TRUE(n.values.allFinite());
}

TEST(Spectrogram, Deterministic) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  Eigen::VectorXf x(20000);
  for (auto& v : x) v = u(rng);
  const auto a = spectrogram(x, 16000, SpectrogramConfig{});
  const auto b = spectrogram(x, 16000, SpectrogramConfig{});
  EXPECT_TRUE((a.values.array() == b.values.array()).all());
}

TEST(FeatureCache, RoundTripIsExact) {
  testing_support::TempDir dir("dsp");
  Spectrogram s;
  s.values = Eigen::MatrixXf::Random(257, 12);
  s.sample_rate = 16000;
  write_feature_cache(dir / "a.dsfg", s);
  const auto bytes = testing_support::slurp(dir / "a.dsfg");
  ASSERT_EQ(bytes.size(), 20u + 257u * 12u * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "DSFG");
  // Header fields, little-endian u32: version 1, bins 257 = 0x101.
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 0x01);
  // Row-major: the second stored value is row 0, column 1.
  float second;
  std::memcpy(&second, bytes.data() + 24, 4);
  EXPECT_EQ(second, s.values(0, 1));
  const auto back = read_feature_cache(dir / "a.dsfg");
  EXPECT_EQ(back.sample_rate, 16000);
  EXPECT_TRUE((back.values.array() == s.values.array()).all());
}

TEST(FeatureCache, RejectsForeignFiles) {
  testing_support::TempDir dir("dsp");
  testing_support::spit(dir / "bad.dsfg", "NOPE0000000000000000");
  EXPECT_THROW(read_feature_cache(dir / "bad.dsfg"), Error);
  EXPECT_THROW(read_feature_cache(dir / "missing.dsfg"), Error);
}
