#pragma once

#include "disfluent/audio.hpp"
#include "disfluent/stutter_class.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace disfluent {

struct DisfluencyEvent {
  std::string subject_id;
  double start_s = 0.0;
  double end_s = 0.0;
  StutterClass stutter_class = StutterClass::S;

  double duration() const { return end_s - start_s; }
  bool operator==(const DisfluencyEvent&) const = default;
};

/// One 0/1 flag per stutter class; every class is always present.
class ClassLabels {
 public:
  std::uint8_t operator[](StutterClass c) const { return flags_[class_index(c)]; }
  void set(StutterClass c, bool positive) { flags_[class_index(c)] = positive ? 1 : 0; }
  bool any() const;

  bool operator==(const ClassLabels&) const = default;

 private:
  std::array<std::uint8_t, kStutterClassCount> flags_{};
};

/// Time window of one clip inside a subject's recording.
struct ClipWindow {
  std::string subject_id;
  std::size_t clip_index = 0;
  double start_s = 0.0;
  double duration_s = kClipSeconds;
};

struct LabeledClip {
  /// Recording the clip was cut from; clip_index selects the window.
  std::string wav_path;
  std::string subject_id;
  std::size_t clip_index = 0;
  ClassLabels labels;

  /// Feature-cache key, `<subject>_<clip_index>`.
  std::string key() const;
  bool operator==(const LabeledClip&) const = default;
};

struct CorpusManifest {
  std::vector<std::string> subjects;
  std::vector<LabeledClip> clips;
  std::string provenance;

  /// Throws InvalidConfig when a clip names an unknown subject or a
  /// (subject, clip_index) pair repeats.
  void validate() const;
  bool operator==(const CorpusManifest&) const = default;
};

/// Reads `subject_id,start_s,end_s,class` rows (header required). Events come
/// back sorted by (subject_id, start_s).
std::vector<DisfluencyEvent> parse_annotations(const std::filesystem::path& path);
std::vector<DisfluencyEvent> parse_annotations_text(std::string_view text);
void write_annotations(const std::filesystem::path& path, std::span<const DisfluencyEvent> events);

/// A clip is positive for class c when an event of class c from the same
/// subject overlaps the clip window by at least half the event's duration.
std::vector<ClassLabels> label_windows(std::span<const ClipWindow> windows, std::span<const DisfluencyEvent> events);
std::vector<LabeledClip> label_clips(std::span<const AudioClip> clips, std::span<const DisfluencyEvent> events,
                                     const std::string& wav_path = {});

struct LosoFold {
  std::string test_subject;
  std::vector<std::string> train_subjects;
  /// Indices into the manifest's clip list.
  std::vector<std::size_t> train_clips;
  std::vector<std::size_t> test_clips;
};

/// One fold per subject, ordered by subject_id.
std::vector<LosoFold> loso_splits(const CorpusManifest& manifest);

/// JSON: {"subjects": [...], "clips": [{wav_path, subject_id, clip_index,
/// labels{S,W,PH,R,I,PR}}], "provenance": "..."}. Relative wav paths are
/// resolved against the manifest's directory on read.
void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
CorpusManifest read_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(std::string_view text, const std::filesystem::path& base_dir = {});

// Planted-signal corpus

/// Each class owns a frequency band so a detector only needs to notice
/// energy in its band. Every class is positive in half of each subject's
/// clips (rounded down, at least one when clips_per_subject >= 2).
struct SynthSignature {
  StutterClass stutter_class;
  double low_hz;
  double high_hz;
  double min_duration_s;
};

std::span<const SynthSignature> synth_signatures();

struct SynthCorpus {
  CorpusManifest manifest;
  std::vector<DisfluencyEvent> events;
  /// Paths written, relative to the output directory.
  std::filesystem::path manifest_path;
  std::filesystem::path annotations_path;
};

/// Writes `<out>/wav/<subject>.wav` (one recording per subject, exactly
/// clips_per_subject clips long), `<out>/annotations.csv` and
/// `<out>/manifest.json`. Output is a pure function of the arguments.
SynthCorpus synth_corpus(std::uint64_t seed, std::size_t n_subjects, std::size_t clips_per_subject,
                         const std::filesystem::path& out_dir);

/// Audio and events only, no files.
struct SynthRecording {
  std::string subject_id;
  AudioBuffer audio;
  std::vector<DisfluencyEvent> events;
};
std::vector<SynthRecording> synth_recordings(std::uint64_t seed, std::size_t n_subjects,
                                             std::size_t clips_per_subject);

std::string synth_subject_id(std::size_t index);

}  // namespace disfluent
