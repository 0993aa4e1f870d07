#include "disfluent/audio.hpp"

#include "disfluent/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <optional>

namespace disfluent {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(std::span<const unsigned char> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const unsigned char> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<unsigned char>((v >> shift) & 0xFF));
}

bool tag_equals(std::span<const unsigned char> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

struct FormatChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits_per_sample = 0;
  std::uint16_t block_align = 0;
};

double kaiser(double u, double beta) {
  if (std::abs(u) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - u * u)) / std::cyl_bessel_i(0.0, beta);
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

AudioBuffer decode_wav(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || !tag_equals(bytes, 0, "RIFF") || !tag_equals(bytes, 8, "WAVE")) {
    throw Error(Errc::MalformedHeader, "missing RIFF/WAVE signature");
  }

  std::optional<FormatChunk> fmt;
  std::span<const unsigned char> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (tag_equals(bytes, pos, "fmt ")) {
      if (chunk_size < 16 || body + chunk_size > bytes.size()) {
        throw Error(Errc::MalformedHeader, "truncated fmt chunk");
      }
      FormatChunk f;
      f.format = read_u16(bytes, body);
      f.channels = read_u16(bytes, body + 2);
      f.sample_rate = read_u32(bytes, body + 4);
      f.block_align = read_u16(bytes, body + 12);
      f.bits_per_sample = read_u16(bytes, body + 14);
      if (f.format == kFormatExtensible) {
        // Sub-format GUID starts 8 bytes into the extension; its first two
        // bytes carry the plain format code.
        if (chunk_size < 40) throw Error(Errc::MalformedHeader, "truncated extensible fmt chunk");
        f.format = read_u16(bytes, body + 24);
      }
      fmt = f;
    } else if (tag_equals(bytes, pos, "data")) {
      // Some writers leave the data size unset when streaming; clamp to file.
      const std::size_t available = bytes.size() - body;
      data = bytes.subspan(body, std::min<std::size_t>(chunk_size, available));
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }

  if (!fmt) throw Error(Errc::MalformedHeader, "missing fmt chunk");
  if (!have_data) throw Error(Errc::MalformedHeader, "missing data chunk");

  const bool pcm16 = fmt->format == kFormatPcm && fmt->bits_per_sample == 16;
  const bool float32 = fmt->format == kFormatFloat && fmt->bits_per_sample == 32;
  if (!pcm16 && !float32) {
    throw Error(Errc::UnsupportedFormat, "format code " + std::to_string(fmt->format) + " with " +
                                             std::to_string(fmt->bits_per_sample) + " bits per sample");
  }
  if (fmt->channels != 1 && fmt->channels != 2) {
    throw Error(Errc::UnsupportedFormat, std::to_string(fmt->channels) + " channels");
  }
  if (fmt->sample_rate == 0) throw Error(Errc::MalformedHeader, "zero sample rate");

  const std::size_t bytes_per_sample = fmt->bits_per_sample / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt->channels;
  const auto frames = static_cast<Eigen::Index>(data.size() / frame_bytes);

  auto sample_at = [&](std::size_t offset) -> float {
    if (pcm16) {
      const auto raw = static_cast<std::int16_t>(read_u16(data, offset));
      return static_cast<float>(raw) / 32768.0f;
    }
    const std::uint32_t bits = read_u32(data, offset);
    float value;
    std::memcpy(&value, &bits, sizeof value);
    if (!std::isfinite(value)) return 0.0f;
    return std::clamp(value, -1.0f, 1.0f);
  };

  AudioBuffer out;
  out.sample_rate = static_cast<int>(fmt->sample_rate);
  out.channels = 1;
  out.samples.resize(frames);
  for (Eigen::Index i = 0; i < frames; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * frame_bytes;
    if (fmt->channels == 1) {
      out.samples[i] = sample_at(base);
    } else {
      out.samples[i] = 0.5f * (sample_at(base) + sample_at(base + bytes_per_sample));
    }
  }
  return out;
}

AudioBuffer load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::Io, "read failed for " + path.string());
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<unsigned char> encode_wav(const AudioBuffer& buffer) {
  if (buffer.sample_rate <= 0) throw Error(Errc::InvalidConfig, "sample rate must be positive");
  const auto n = static_cast<std::uint32_t>(buffer.samples.size());
  const std::uint32_t data_bytes = n * 2;

  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (std::uint32_t i = 0; i < n; ++i) {
    const float clamped = std::clamp(buffer.samples[i], -1.0f, 1.0f);
    const long q = std::clamp(std::lround(clamped * 32768.0f), -32768L, 32767L);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer) {
  const auto bytes = encode_wav(buffer);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

AudioBuffer resample(const AudioBuffer& buffer, int target_rate) {
  if (target_rate <= 0) throw Error(Errc::InvalidRate, "target rate must be positive");
  if (buffer.samples.size() == 0) throw Error(Errc::EmptyBuffer, "cannot resample an empty buffer");
  if (target_rate == buffer.sample_rate) return buffer;

  constexpr double kBeta = 8.0;
  constexpr double kZeroCrossings = 32.0;

  const double source_rate = buffer.sample_rate;
  const double step = source_rate / target_rate;
  const double cutoff = std::min(1.0, static_cast<double>(target_rate) / source_rate);
  const double half_width = kZeroCrossings / cutoff;
  const auto in_len = buffer.samples.size();
  const auto out_len = static_cast<Eigen::Index>(
      std::llround(static_cast<double>(in_len) * target_rate / source_rate));

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.channels = 1;
  out.samples.resize(out_len);
  for (Eigen::Index i = 0; i < out_len; ++i) {
    const double center = static_cast<double>(i) * step;
    const auto first = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::ceil(center - half_width)));
    const auto last = std::min<Eigen::Index>(in_len - 1, static_cast<Eigen::Index>(std::floor(center + half_width)));
    double acc = 0.0;
    double weight_sum = 0.0;
    for (Eigen::Index k = first; k <= last; ++k) {
      const double offset = center - static_cast<double>(k);
      const double w = cutoff * sinc(cutoff * offset) * kaiser(offset / half_width, kBeta);
      acc += w * buffer.samples[k];
      weight_sum += w;
    }
    const double value = weight_sum != 0.0 ? acc / weight_sum : 0.0;
    out.samples[i] = static_cast<float>(std::clamp(value, -1.0, 1.0));
  }
  return out;
}

std::vector<AudioClip> segment(const AudioBuffer& buffer, double clip_seconds, const std::string& subject_id) {
  if (buffer.channels != 1) throw Error(Errc::InvalidConfig, "segment expects a mono buffer");
  if (clip_seconds <= 0.0) throw Error(Errc::InvalidConfig, "clip length must be positive");

  const auto clip_len = static_cast<Eigen::Index>(std::llround(clip_seconds * buffer.sample_rate));
  const Eigen::Index total = buffer.samples.size();
  std::vector<AudioClip> clips;
  if (total == 0 || clip_len == 0) return clips;

  for (Eigen::Index start = 0; start < total; start += clip_len) {
    const Eigen::Index real = std::min(clip_len, total - start);
    if (real < clip_len && 2 * real < clip_len) break;

    AudioClip clip;
    clip.sample_rate = buffer.sample_rate;
    clip.subject_id = subject_id;
    clip.clip_index = clips.size();
    clip.start_time_s = static_cast<double>(clip.clip_index) * clip_seconds;
    clip.samples = Eigen::VectorXf::Zero(clip_len);
    clip.samples.head(real) = buffer.samples.segment(start, real);
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace disfluent
