#pragma once

#include "disfluent/audio.hpp"

#include <Eigen/Core>

#include <complex>
#include <cstdint>
#include <filesystem>

namespace disfluent {

/// Analysis geometry: 25 ms Hann windows every 10 ms, zero-padded to a
/// 512-point FFT (257 bins at 16 kHz).
struct SpectrogramConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int fft_len = 512;
  double log_floor = 1e-10;
  bool normalize = true;

  Eigen::Index window_length(int sample_rate) const;
  Eigen::Index hop_length(int sample_rate) const;
  Eigen::Index freq_bins() const { return fft_len / 2 + 1; }
  Eigen::Index frame_count(Eigen::Index num_samples, int sample_rate) const;

  /// Throws InvalidConfig unless the window fits the FFT and fft_len is a power of two.
  void validate(int sample_rate) const;

  bool operator==(const SpectrogramConfig&) const = default;
};

/// Natural-log magnitude, shape (freq_bins x frames).
struct Spectrogram {
  Eigen::MatrixXf values;
  int sample_rate = kCanonicalSampleRate;

  Eigen::Index freq_bins() const { return values.rows(); }
  Eigen::Index frames() const { return values.cols(); }
};

/// Symmetric Hann window, w[k] = 0.5 - 0.5 cos(2 pi k / (n - 1)).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> hann_window(Eigen::Index n);

/// Short-time Fourier transform; column f covers samples [f*hop, f*hop + window).
/// Transforms are evaluated in double precision and rounded to Scalar.
template <typename Scalar>
Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic> stft(
    const Eigen::Ref<const Eigen::VectorXf>& samples, const SpectrogramConfig& config, int sample_rate);

Spectrogram spectrogram(const Eigen::Ref<const Eigen::VectorXf>& samples, int sample_rate,
                        const SpectrogramConfig& config);
Spectrogram spectrogram(const AudioClip& clip, const SpectrogramConfig& config);

/// Feature cache record: "DSFG", version, freq_bins, frames, sample_rate
/// (u32 each) then row-major float32 values, little-endian throughout.
void write_feature_cache(const std::filesystem::path& path, const Spectrogram& spec);
Spectrogram read_feature_cache(const std::filesystem::path& path);

inline constexpr std::uint32_t kFeatureCacheVersion = 1;

}  // namespace disfluent
