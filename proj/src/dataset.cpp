#include "disfluent/dataset.hpp"

#include "disfluent/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace disfluent {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_seconds(std::string_view field, std::size_t line, const char* what) {
  double value = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error(Errc::ParseError, std::string("invalid ") + what + " '" + std::string(field) + "'", line);
  }
  return value;
}

std::string format_seconds(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

bool ClassLabels::any() const {
  return std::any_of(flags_.begin(), flags_.end(), [](std::uint8_t f) { return f != 0; });
}

std::string LabeledClip::key() const { return subject_id + "_" + std::to_string(clip_index); }

void CorpusManifest::validate() const {
  const std::set<std::string> known(subjects.begin(), subjects.end());
  if (known.size() != subjects.size()) throw Error(Errc::InvalidConfig, "manifest lists a subject twice");
  std::set<std::pair<std::string, std::size_t>> seen;
  for (const auto& clip : clips) {
    if (!known.contains(clip.subject_id)) {
      throw Error(Errc::InvalidConfig, "clip " + clip.key() + " names unknown subject '" + clip.subject_id + "'");
    }
    if (!seen.emplace(clip.subject_id, clip.clip_index).second) {
      throw Error(Errc::InvalidConfig, "duplicate clip " + clip.key());
    }
  }
}

std::vector<DisfluencyEvent> parse_annotations_text(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<DisfluencyEvent> events;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (!header_seen) {
      const std::vector<std::string_view> expected{"subject_id", "start_s", "end_s", "class"};
      if (fields != expected) {
        throw Error(Errc::ParseError, "expected header 'subject_id,start_s,end_s,class'", line_no);
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 4) {
      throw Error(Errc::ParseError, "expected 4 fields, got " + std::to_string(fields.size()), line_no);
    }
    if (fields[0].empty()) throw Error(Errc::ParseError, "empty subject_id", line_no);
    DisfluencyEvent e;
    e.subject_id = std::string(fields[0]);
    e.start_s = parse_seconds(fields[1], line_no, "start_s");
    e.end_s = parse_seconds(fields[2], line_no, "end_s");
    if (e.start_s < 0.0) throw Error(Errc::ParseError, "start_s is negative", line_no);
    if (e.end_s <= e.start_s) throw Error(Errc::ParseError, "end_s must be greater than start_s", line_no);
    const auto cls = parse_stutter_class(fields[3]);
    if (!cls) throw Error(Errc::UnknownClass, "unknown stutter class '" + std::string(fields[3]) + "'", line_no);
    e.stutter_class = *cls;
    events.push_back(std::move(e));
  }
  if (!header_seen) throw Error(Errc::ParseError, "annotation file is empty", std::size_t{1});
  std::stable_sort(events.begin(), events.end(), [](const DisfluencyEvent& a, const DisfluencyEvent& b) {
    return std::tie(a.subject_id, a.start_s) < std::tie(b.subject_id, b.start_s);
  });
  return events;
}

std::vector<DisfluencyEvent> parse_annotations(const std::filesystem::path& path) {
  return parse_annotations_text(read_text(path));
}

void write_annotations(const std::filesystem::path& path, std::span<const DisfluencyEvent> events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << "subject_id,start_s,end_s,class\n";
  for (const auto& e : events) {
    out << e.subject_id << ',' << format_seconds(e.start_s) << ',' << format_seconds(e.end_s) << ','
        << to_string(e.stutter_class) << '\n';
  }
  if (!out) throw Error(Errc::Io, "failed writing " + path.string());
}

std::vector<ClassLabels> label_windows(std::span<const ClipWindow> windows, std::span<const DisfluencyEvent> events) {
  std::vector<ClassLabels> labels(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    const double w_end = w.start_s + w.duration_s;
    for (const auto& e : events) {
      if (e.subject_id != w.subject_id) continue;
      const double overlap = std::min(e.end_s, w_end) - std::max(e.start_s, w.start_s);
      if (overlap <= 0.0) continue;
      // Relative slack absorbs rounding in decimal timestamps at exactly 50%.
      if (overlap >= 0.5 * e.duration() * (1.0 - 1e-9)) labels[i].set(e.stutter_class, true);
    }
  }
  return labels;
}

std::vector<LabeledClip> label_clips(std::span<const AudioClip> clips, std::span<const DisfluencyEvent> events,
                                     const std::string& wav_path) {
  std::vector<ClipWindow> windows;
  windows.reserve(clips.size());
  for (const auto& c : clips) {
    windows.push_back({c.subject_id, c.clip_index, c.start_time_s,
                       static_cast<double>(c.samples.size()) / static_cast<double>(c.sample_rate)});
  }
  const auto labels = label_windows(windows, events);
  std::vector<LabeledClip> out;
  out.reserve(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    out.push_back({wav_path, clips[i].subject_id, clips[i].clip_index, labels[i]});
  }
  return out;
}

std::vector<LosoFold> loso_splits(const CorpusManifest& manifest) {
  std::vector<std::string> subjects = manifest.subjects;
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < 2) {
    throw Error(Errc::TooFewSubjects,
                "leave-one-subject-out needs at least 2 subjects, got " + std::to_string(subjects.size()));
  }
  std::vector<LosoFold> folds;
  folds.reserve(subjects.size());
  for (const auto& test : subjects) {
    LosoFold fold;
    fold.test_subject = test;
    for (const auto& s : subjects) {
      if (s != test) fold.train_subjects.push_back(s);
    }
    for (std::size_t i = 0; i < manifest.clips.size(); ++i) {
      (manifest.clips[i].subject_id == test ? fold.test_clips : fold.train_clips).push_back(i);
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::string manifest_to_json(const CorpusManifest& manifest) {
  nlohmann::ordered_json j;
  j["subjects"] = manifest.subjects;
  auto clips = nlohmann::ordered_json::array();
  for (const auto& c : manifest.clips) {
    nlohmann::ordered_json labels;
    for (StutterClass cls : kStutterClasses) labels[std::string(to_string(cls))] = static_cast<int>(c.labels[cls]);
    clips.push_back({{"wav_path", c.wav_path},
                     {"subject_id", c.subject_id},
                     {"clip_index", c.clip_index},
                     {"labels", std::move(labels)}});
  }
  j["clips"] = std::move(clips);
  j["provenance"] = manifest.provenance;
  return j.dump(2) + "\n";
}

CorpusManifest manifest_from_json(std::string_view text, const std::filesystem::path& base_dir) {
  CorpusManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.subjects = j.at("subjects").get<std::vector<std::string>>();
    for (const auto& c : j.at("clips")) {
      LabeledClip clip;
      std::filesystem::path wav = c.at("wav_path").get<std::string>();
      if (!base_dir.empty() && wav.is_relative()) wav = base_dir / wav;
      clip.wav_path = wav.lexically_normal().string();
      clip.subject_id = c.at("subject_id").get<std::string>();
      clip.clip_index = c.at("clip_index").get<std::size_t>();
      const auto& labels = c.at("labels");
      for (StutterClass cls : kStutterClasses) {
        const int v = labels.at(std::string(to_string(cls))).get<int>();
        if (v != 0 && v != 1) throw Error(Errc::ParseError, "label for " + clip.key() + " must be 0 or 1");
        clip.labels.set(cls, v == 1);
      }
      m.clips.push_back(std::move(clip));
    }
    if (j.contains("provenance")) m.provenance = j.at("provenance").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  manifest.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << manifest_to_json(manifest);
  if (!out) throw Error(Errc::Io, "failed writing " + path.string());
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::Io, "manifest not found: " + path.string());
  return manifest_from_json(read_text(path), path.parent_path());
}

}  // namespace disfluent
