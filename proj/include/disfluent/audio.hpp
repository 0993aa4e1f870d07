#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace disfluent {

inline constexpr int kCanonicalSampleRate = 16000;
inline constexpr double kClipSeconds = 4.0;

/// Mono (after decoding) amplitude samples in [-1, 1].
struct AudioBuffer {
  Eigen::VectorXf samples;
  int sample_rate = kCanonicalSampleRate;
  int channels = 1;

  Eigen::Index size() const { return samples.size(); }
  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Fixed-length slice of a recording; shorter tails are zero-padded.
struct AudioClip {
  Eigen::VectorXf samples;
  int sample_rate = kCanonicalSampleRate;
  std::string subject_id;
  std::size_t clip_index = 0;
  double start_time_s = 0.0;
};

/// Decodes a RIFF/WAVE file (PCM16 or IEEE float32, one or two channels).
/// Stereo input is averaged to mono.
AudioBuffer load_wav(const std::filesystem::path& path);
AudioBuffer decode_wav(std::span<const unsigned char> bytes);

/// Writes 16-bit PCM, little-endian, mono.
void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer);
std::vector<unsigned char> encode_wav(const AudioBuffer& buffer);

/// Kaiser-windowed sinc interpolation (beta 8, 32 zero crossings per side).
/// Identity when the rates already match.
AudioBuffer resample(const AudioBuffer& buffer, int target_rate);

/// Non-overlapping consecutive clips. A partial tail is kept (zero-padded)
/// only when it holds at least half a clip of real audio.
std::vector<AudioClip> segment(const AudioBuffer& buffer, double clip_seconds,
                               const std::string& subject_id);

}  // namespace disfluent
