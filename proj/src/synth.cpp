#include "disfluent/dataset.hpp"

#include "disfluent/error.hpp"
#include "disfluent/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <tuple>

namespace disfluent {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kToneAmplitude = 0.2;
constexpr double kFadeSeconds = 0.005;
// Harmonics of the background voice stay below the lowest signature band.
constexpr double kVoiceCeilingHz = 950.0;

constexpr std::array<SynthSignature, kStutterClassCount> kSignatures{{
    {StutterClass::S, 1300.0, 1700.0, 0.38},
    {StutterClass::W, 2300.0, 2700.0, 0.60},
    {StutterClass::PH, 3300.0, 3700.0, 0.95},
    {StutterClass::R, 4200.0, 4800.0, 0.60},
    {StutterClass::I, 5200.0, 5800.0, 0.40},
    {StutterClass::PR, 6300.0, 6700.0, 1.20},
}};

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

// Portable Fisher-Yates; std::shuffle differs between standard libraries.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

struct Synth {
  Eigen::VectorXd& out;
  int rate;

  Eigen::Index index(double t) const { return static_cast<Eigen::Index>(std::llround(t * rate)); }

  double fade(double t, double duration) const {
    const double edge = std::min(kFadeSeconds, duration / 2);
    if (t < edge) return 0.5 - 0.5 * std::cos(std::numbers::pi * t / edge);
    if (t > duration - edge) return 0.5 - 0.5 * std::cos(std::numbers::pi * (duration - t) / edge);
    return 1.0;
  }

  // Linear chirp from f0 to f1; a constant tone when they are equal.
  void tone(double start, double duration, double f0, double f1, double amplitude) {
    const Eigen::Index a = index(start);
    const Eigen::Index b = std::min<Eigen::Index>(index(start + duration), out.size());
    for (Eigen::Index i = a; i < b; ++i) {
      const double t = static_cast<double>(i - a) / rate;
      const double phase = kTwoPi * (f0 * t + 0.5 * (f1 - f0) / duration * t * t);
      out[i] += amplitude * fade(t, duration) * std::sin(phase);
    }
  }

  void band_noise(double start, double duration, double lo, double hi, double amplitude, std::mt19937_64& rng) {
    constexpr int kPartials = 24;
    std::array<double, kPartials> freq{}, phase{};
    for (int k = 0; k < kPartials; ++k) {
      freq[k] = uniform(rng, lo, hi);
      phase[k] = uniform(rng, 0.0, kTwoPi);
    }
    const double scale = amplitude * std::sqrt(2.0 / kPartials);
    const Eigen::Index a = index(start);
    const Eigen::Index b = std::min<Eigen::Index>(index(start + duration), out.size());
    for (Eigen::Index i = a; i < b; ++i) {
      const double t = static_cast<double>(i - a) / rate;
      double s = 0.0;
      for (int k = 0; k < kPartials; ++k) s += std::sin(kTwoPi * freq[k] * t + phase[k]);
      out[i] += scale * fade(t, duration) * s;
    }
  }
};

// Sum of f0 harmonics with a syllable-rate envelope and slow pitch drift.
void voice(Eigen::VectorXd& out, int rate, double f0, std::mt19937_64& rng) {
  const double drift_hz = uniform(rng, 0.2, 0.5);
  const double syllable_hz = uniform(rng, 3.0, 5.0);
  const double drift_phase = uniform(rng, 0.0, kTwoPi);
  double phase = 0.0;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    const double f = f0 * (1.0 + 0.08 * std::sin(kTwoPi * drift_hz * t + drift_phase));
    phase += kTwoPi * f / rate;
    const double envelope = 0.35 + 0.65 * std::pow(std::sin(std::numbers::pi * syllable_hz * t), 2);
    double s = 0.0;
    for (int k = 1; k * f < kVoiceCeilingHz; ++k) s += std::sin(k * phase) / (k * k);
    out[i] += 0.25 * envelope * s;
  }
}

void render_event(Synth& synth, const DisfluencyEvent& e, double jitter, std::mt19937_64& rng) {
  const double t0 = e.start_s;
  const double a = kToneAmplitude;
  switch (e.stutter_class) {
    case StutterClass::S:  // three short bursts
      for (int k = 0; k < 3; ++k) synth.tone(t0 + 0.15 * k, 0.08, 1500.0 * jitter, 1500.0 * jitter, a);
      break;
    case StutterClass::W:  // two longer bursts
      for (int k = 0; k < 2; ++k) synth.tone(t0 + 0.35 * k, 0.25, 2500.0 * jitter, 2500.0 * jitter, a);
      break;
    case StutterClass::PH:  // a two-note figure, repeated
      for (int k = 0; k < 2; ++k) {
        synth.tone(t0 + 0.55 * k, 0.2, 3400.0 * jitter, 3400.0 * jitter, a);
        synth.tone(t0 + 0.55 * k + 0.2, 0.2, 3600.0 * jitter, 3600.0 * jitter, a);
      }
      break;
    case StutterClass::R:  // upward glide
      synth.tone(t0, e.duration(), 4300.0 * jitter, 4700.0 * jitter, a);
      break;
    case StutterClass::I:
      synth.band_noise(t0, e.duration(), 5250.0 * jitter, 5750.0 * jitter, a, rng);
      break;
    case StutterClass::PR:  // sustained tone
      synth.tone(t0, e.duration(), 6500.0 * jitter, 6500.0 * jitter, a);
      break;
  }
}

}  // namespace

std::span<const SynthSignature> synth_signatures() { return kSignatures; }

std::string synth_subject_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%02zu", index + 1);
  return buf;
}

std::vector<SynthRecording> synth_recordings(std::uint64_t seed, std::size_t n_subjects,
                                             std::size_t clips_per_subject) {
  if (n_subjects < 2) throw Error(Errc::TooFewSubjects, "synthetic corpus needs at least 2 subjects");
  if (clips_per_subject < 1) throw Error(Errc::InvalidConfig, "synthetic corpus needs at least 1 clip per subject");
  const int rate = kCanonicalSampleRate;
  const auto clip_samples = static_cast<Eigen::Index>(kClipSeconds * rate);
  const std::size_t positives = std::max<std::size_t>(clips_per_subject / 2, clips_per_subject >= 2 ? 1 : 0);

  std::vector<SynthRecording> recordings;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    std::mt19937_64 rng(derive_seed(seed, {s}));
    SynthRecording rec;
    rec.subject_id = synth_subject_id(s);
    const double f0 = uniform(rng, 100.0, 220.0);
    const double jitter = uniform(rng, 0.97, 1.03);

    // Which clips are positive for each class.
    for (const auto& sig : kSignatures) {
      std::vector<std::size_t> order(clips_per_subject);
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      shuffle(order, rng);
      order.resize(positives);
      std::sort(order.begin(), order.end());
      for (std::size_t clip : order) {
        const double duration =
            sig.stutter_class == StutterClass::PR ? uniform(rng, sig.min_duration_s, 1.6) : sig.min_duration_s;
        const double clip_start = static_cast<double>(clip) * kClipSeconds;
        // Whole event inside the clip, rounded to milliseconds.
        const double offset = std::round(uniform(rng, 0.1, kClipSeconds - duration - 0.1) * 1000.0) / 1000.0;
        const double start = clip_start + offset;
        const double end = std::round((start + duration) * 1000.0) / 1000.0;
        rec.events.push_back({rec.subject_id, start, end, sig.stutter_class});
      }
    }
    std::stable_sort(rec.events.begin(), rec.events.end(),
                     [](const DisfluencyEvent& a, const DisfluencyEvent& b) { return a.start_s < b.start_s; });

    Eigen::VectorXd mix = Eigen::VectorXd::Zero(clip_samples * static_cast<Eigen::Index>(clips_per_subject));
    voice(mix, rate, f0, rng);
    Synth synth{mix, rate};
    for (const auto& e : rec.events) render_event(synth, e, jitter, rng);
    for (Eigen::Index i = 0; i < mix.size(); ++i) mix[i] += 0.002 * (2.0 * unit(rng) - 1.0);

    const double peak = mix.cwiseAbs().maxCoeff();
    if (peak > 0.9) mix *= 0.9 / peak;
    rec.audio.samples = mix.cast<float>();
    rec.audio.sample_rate = rate;
    rec.audio.channels = 1;
    recordings.push_back(std::move(rec));
  }
  return recordings;
}

SynthCorpus synth_corpus(std::uint64_t seed, std::size_t n_subjects, std::size_t clips_per_subject,
                         const std::filesystem::path& out_dir) {
  const auto recordings = synth_recordings(seed, n_subjects, clips_per_subject);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  if (ec) throw Error(Errc::Io, "cannot create " + (out_dir / "wav").string() + ": " + ec.message());

  SynthCorpus corpus;
  corpus.manifest.provenance = "synthetic planted-signal corpus; seed " + std::to_string(seed) + ", " +
                               std::to_string(n_subjects) + " subjects x " + std::to_string(clips_per_subject) +
                               " clips";
  for (const auto& rec : recordings) {
    const std::string rel = "wav/" + rec.subject_id + ".wav";
    write_wav(out_dir / rel, rec.audio);
    corpus.manifest.subjects.push_back(rec.subject_id);
    const auto clips = segment(rec.audio, kClipSeconds, rec.subject_id);
    auto labeled = label_clips(clips, rec.events, rel);
    corpus.manifest.clips.insert(corpus.manifest.clips.end(), labeled.begin(), labeled.end());
    corpus.events.insert(corpus.events.end(), rec.events.begin(), rec.events.end());
  }
  std::stable_sort(corpus.events.begin(), corpus.events.end(),
                   [](const DisfluencyEvent& a, const DisfluencyEvent& b) {
                     return std::tie(a.subject_id, a.start_s) < std::tie(b.subject_id, b.start_s);
                   });
  corpus.manifest_path = "manifest.json";
  corpus.annotations_path = "annotations.csv";
  write_annotations(out_dir / corpus.annotations_path, corpus.events);
  write_manifest(out_dir / corpus.manifest_path, corpus.manifest);
  return corpus;
}

}  // namespace disfluent
