#include "disfluent/dsp.hpp"

#include "disfluent/detail/binary_io.hpp"
#include "disfluent/error.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <numbers>

namespace disfluent {

Eigen::Index SpectrogramConfig::window_length(int sample_rate) const {
  return static_cast<Eigen::Index>(std::llround(window_ms * sample_rate / 1000.0));
}

Eigen::Index SpectrogramConfig::hop_length(int sample_rate) const {
  return static_cast<Eigen::Index>(std::llround(hop_ms * sample_rate / 1000.0));
}

Eigen::Index SpectrogramConfig::frame_count(Eigen::Index num_samples, int sample_rate) const {
  const auto window = window_length(sample_rate);
  if (num_samples < window) return 0;
  return 1 + (num_samples - window) / hop_length(sample_rate);
}

void SpectrogramConfig::validate(int sample_rate) const {
  if (sample_rate <= 0) throw Error(Errc::InvalidConfig, "sample rate must be positive");
  if (fft_len < 2 || (fft_len & (fft_len - 1)) != 0) {
    throw Error(Errc::InvalidConfig, "fft_len must be a power of two, got " + std::to_string(fft_len));
  }
  const auto window = window_length(sample_rate);
  if (window < 2) throw Error(Errc::InvalidConfig, "analysis window shorter than two samples");
  if (window > fft_len) {
    throw Error(Errc::InvalidConfig, "window of " + std::to_string(window) + " samples exceeds fft_len " +
                                         std::to_string(fft_len));
  }
  if (hop_length(sample_rate) < 1) throw Error(Errc::InvalidConfig, "hop must be at least one sample");
  if (!(log_floor > 0.0)) throw Error(Errc::InvalidConfig, "log_floor must be positive");
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> hann_window(Eigen::Index n) {
  if (n < 2) throw Error(Errc::LengthTooSmall, "Hann window needs at least two points");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w(n);
  const double denom = static_cast<double>(n - 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    w[k] = static_cast<Scalar>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / denom));
  }
  // Pin the endpoints and mirror so the window is exactly symmetric.
  for (Eigen::Index k = 0; k < n / 2; ++k) w[n - 1 - k] = w[k];
  w[0] = w[n - 1] = Scalar(0);
  return w;
}

template <typename Scalar>
Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic> stft(
    const Eigen::Ref<const Eigen::VectorXf>& samples, const SpectrogramConfig& config, int sample_rate) {
  config.validate(sample_rate);
  const auto window_len = config.window_length(sample_rate);
  const auto hop = config.hop_length(sample_rate);
  if (samples.size() < window_len) {
    throw Error(Errc::TooShort, std::to_string(samples.size()) + " samples is shorter than one window of " +
                                    std::to_string(window_len));
  }

  const auto frames = config.frame_count(samples.size(), sample_rate);
  const auto bins = config.freq_bins();
  const Eigen::VectorXd window = hann_window<double>(window_len);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);

  Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic> out(bins, frames);
  Eigen::VectorXd frame = Eigen::VectorXd::Zero(config.fft_len);
  Eigen::VectorXcd spectrum(bins);
  for (Eigen::Index f = 0; f < frames; ++f) {
    frame.head(window_len) = samples.segment(f * hop, window_len).cast<double>().cwiseProduct(window);
    fft.fwd(spectrum, frame);
    out.col(f) = spectrum.head(bins).template cast<std::complex<Scalar>>();
  }
  return out;
}

Spectrogram spectrogram(const Eigen::Ref<const Eigen::VectorXf>& samples, int sample_rate,
                        const SpectrogramConfig& config) {
  const auto spectrum = stft<double>(samples, config, sample_rate);
  Eigen::MatrixXd logmag = (spectrum.cwiseAbs().array() + config.log_floor).log().matrix();

  if (config.normalize) {
    const double mean = logmag.mean();
    logmag.array() -= mean;
    const double variance = logmag.squaredNorm() / static_cast<double>(logmag.size());
    logmag /= std::max(std::sqrt(variance), 1e-8);
  }

  Spectrogram out;
  out.values = logmag.cast<float>();
  out.sample_rate = sample_rate;
  if (!out.values.allFinite()) throw Error(Errc::NumericalError, "non-finite spectrogram value");
  return out;
}

Spectrogram spectrogram(const AudioClip& clip, const SpectrogramConfig& config) {
  return spectrogram(clip.samples, clip.sample_rate, config);
}

void write_feature_cache(const std::filesystem::path& path, const Spectrogram& spec) {
  detail::ByteWriter w;
  w.bytes("DSFG");
  w.uint<std::uint32_t>(kFeatureCacheVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(spec.freq_bins()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(spec.frames()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(spec.sample_rate));
  for (Eigen::Index r = 0; r < spec.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < spec.values.cols(); ++c) w.f32(spec.values(r, c));
  }
  w.save(path);
}

Spectrogram read_feature_cache(const std::filesystem::path& path) {
  detail::ByteReader r(path);
  if (r.bytes(4) != "DSFG") throw Error(Errc::MalformedHeader, "bad feature cache magic in " + r.name());
  const auto version = r.uint<std::uint32_t>();
  if (version != kFeatureCacheVersion) {
    throw Error(Errc::UnsupportedFormat, "feature cache version " + std::to_string(version) + " in " + r.name());
  }
  const auto bins = r.uint<std::uint32_t>();
  const auto frames = r.uint<std::uint32_t>();
  Spectrogram spec;
  spec.sample_rate = static_cast<int>(r.uint<std::uint32_t>());
  if (r.remaining() != static_cast<std::size_t>(bins) * frames * 4) {
    throw Error(Errc::MalformedHeader, "feature cache payload size mismatch in " + r.name());
  }
  spec.values.resize(bins, frames);
  for (std::uint32_t row = 0; row < bins; ++row) {
    for (std::uint32_t col = 0; col < frames; ++col) spec.values(row, col) = r.f32();
  }
  return spec;
}

template Eigen::VectorXf hann_window<float>(Eigen::Index);
template Eigen::VectorXd hann_window<double>(Eigen::Index);
template Eigen::MatrixXcf stft<float>(const Eigen::Ref<const Eigen::VectorXf>&, const SpectrogramConfig&, int);
template Eigen::MatrixXcd stft<double>(const Eigen::Ref<const Eigen::VectorXf>&, const SpectrogramConfig&, int);

}  // namespace disfluent
