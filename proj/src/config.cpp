#include "disfluent/config.hpp"

#include "disfluent/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace disfluent {
namespace {

using json = nlohmann::ordered_json;

void only_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, std::string(where) + " must be an object");
  const std::set<std::string_view> ok(allowed);
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw Error(Errc::InvalidConfig, "unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_path(const json& j, const char* key, const std::filesystem::path& base, std::filesystem::path& out) {
  if (!j.contains(key)) return;
  std::filesystem::path p = j.at(key).get<std::string>();
  if (!base.empty() && p.is_relative()) p = base / p;
  out = p.lexically_normal();
}

json classes_json(const std::vector<StutterClass>& classes) {
  auto a = json::array();
  for (StutterClass c : classes) a.push_back(std::string(to_string(c)));
  return a;
}

std::vector<StutterClass> classes_from(const json& j) {
  std::vector<StutterClass> out;
  for (const auto& c : j) {
    const auto name = c.get<std::string>();
    const auto cls = parse_stutter_class(name);
    if (!cls) throw Error(Errc::UnknownClass, "unknown stutter class '" + name + "'");
    out.push_back(*cls);
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  spectrogram.validate(kCanonicalSampleRate);
  model.validate();
  train.validate();
  if (classes.empty()) throw Error(Errc::InvalidConfig, "at least one class must be selected");
  const std::set<StutterClass> unique(classes.begin(), classes.end());
  if (unique.size() != classes.size()) throw Error(Errc::InvalidConfig, "a class is listed twice");
  if (jobs < 1) throw Error(Errc::InvalidConfig, "jobs must be at least 1");
  if (model.freq_bins + 1 != spectrogram.freq_bins()) {
    throw Error(Errc::InvalidConfig, "model expects " + std::to_string(model.freq_bins + 1) +
                                         " spectrogram rows but fft_len " + std::to_string(spectrogram.fft_len) +
                                         " gives " + std::to_string(spectrogram.freq_bins()));
  }
}

LosoConfig RunConfig::loso() const {
  LosoConfig c;
  c.train = train;
  c.model = model;
  c.classes = classes;
  c.jobs = jobs;
  return c;
}

std::string config_to_json(const RunConfig& config) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["paths"] = {{"manifest", config.paths.manifest.generic_string()},
                {"cache_dir", config.paths.cache_dir.generic_string()},
                {"checkpoint_dir", config.paths.checkpoint_dir.generic_string()},
                {"report_dir", config.paths.report_dir.generic_string()}};
  const auto& s = config.spectrogram;
  j["spectrogram"] = {{"window_ms", s.window_ms},
                      {"hop_ms", s.hop_ms},
                      {"fft_len", s.fft_len},
                      {"log_floor", s.log_floor},
                      {"normalize", s.normalize}};
  const auto& m = config.model;
  auto blocks = json::array();
  for (const auto& b : m.blocks) {
    blocks.push_back({{"channels", {b.channels[0], b.channels[1], b.channels[2]}},
                      {"stride", {b.stride[0], b.stride[1]}},
                      {"kernel", b.kernel}});
  }
  j["model"] = {{"freq_bins", m.freq_bins},         {"stem_channels", m.stem_channels},
                {"stem_kernel", m.stem_kernel},     {"blocks", std::move(blocks)},
                {"lstm_layers", m.lstm_layers},     {"lstm_units", m.lstm_units},
                {"dropout_rates", m.dropout_rates}, {"classes", m.classes}};
  j["train"] = {{"learning_rate", config.train.learning_rate},
                {"epochs", config.train.epochs},
                {"batch_size", config.train.batch_size},
                {"seed", config.train.seed}};
  j["loso"] = {{"classes", classes_json(config.classes)}, {"jobs", config.jobs}};
  j["synth"] = {{"seed", config.synth.seed},
                {"subjects", config.synth.subjects},
                {"clips_per_subject", config.synth.clips_per_subject}};
  return j.dump(2) + "\n";
}

RunConfig config_from_json(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    const auto j = json::parse(text);
    only_keys(j, "config", {"schema_version", "paths", "spectrogram", "model", "train", "loso", "synth"});
    if (!j.contains("schema_version")) throw Error(Errc::InvalidConfig, "config lacks schema_version");
    const int version = j.at("schema_version").get<int>();
    if (version != kConfigSchemaVersion) {
      throw Error(Errc::InvalidConfig, "unsupported config schema_version " + std::to_string(version));
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      only_keys(p, "paths", {"manifest", "cache_dir", "checkpoint_dir", "report_dir"});
      read_path(p, "manifest", base_dir, c.paths.manifest);
      read_path(p, "cache_dir", base_dir, c.paths.cache_dir);
      read_path(p, "checkpoint_dir", base_dir, c.paths.checkpoint_dir);
      read_path(p, "report_dir", base_dir, c.paths.report_dir);
    }
    if (j.contains("spectrogram")) {
      const auto& s = j.at("spectrogram");
      only_keys(s, "spectrogram", {"window_ms", "hop_ms", "fft_len", "log_floor", "normalize"});
      read_if(s, "window_ms", c.spectrogram.window_ms);
      read_if(s, "hop_ms", c.spectrogram.hop_ms);
      read_if(s, "fft_len", c.spectrogram.fft_len);
      read_if(s, "log_floor", c.spectrogram.log_floor);
      read_if(s, "normalize", c.spectrogram.normalize);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      only_keys(m, "model",
                {"freq_bins", "stem_channels", "stem_kernel", "blocks", "lstm_layers", "lstm_units", "dropout_rates",
                 "classes"});
      read_if(m, "freq_bins", c.model.freq_bins);
      read_if(m, "stem_channels", c.model.stem_channels);
      read_if(m, "stem_kernel", c.model.stem_kernel);
      read_if(m, "lstm_layers", c.model.lstm_layers);
      read_if(m, "lstm_units", c.model.lstm_units);
      read_if(m, "dropout_rates", c.model.dropout_rates);
      read_if(m, "classes", c.model.classes);
      if (m.contains("blocks")) {
        c.model.blocks.clear();
        for (const auto& b : m.at("blocks")) {
          only_keys(b, "model.blocks[]", {"channels", "stride", "kernel"});
          ConvBlockSpec spec;
          spec.channels = b.at("channels").get<std::array<Index, 3>>();
          spec.stride = b.at("stride").get<std::array<Index, 2>>();
          read_if(b, "kernel", spec.kernel);
          c.model.blocks.push_back(spec);
        }
      }
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      only_keys(t, "train", {"learning_rate", "epochs", "batch_size", "seed"});
      read_if(t, "learning_rate", c.train.learning_rate);
      read_if(t, "epochs", c.train.epochs);
      read_if(t, "batch_size", c.train.batch_size);
      read_if(t, "seed", c.train.seed);
    }
    if (j.contains("loso")) {
      const auto& l = j.at("loso");
      only_keys(l, "loso", {"classes", "jobs"});
      if (l.contains("classes")) c.classes = classes_from(l.at("classes"));
      read_if(l, "jobs", c.jobs);
    }
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      only_keys(s, "synth", {"seed", "subjects", "clips_per_subject"});
      read_if(s, "seed", c.synth.seed);
      read_if(s, "subjects", c.synth.subjects);
      read_if(s, "clips_per_subject", c.synth.clips_per_subject);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), path.parent_path());
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << config_to_json(config);
  if (!out) throw Error(Errc::Io, "failed writing " + path.string());
}

void apply_environment(RunConfig& config) {
  if (const char* cache = std::getenv("DISFLUENT_CACHE"); cache && *cache) config.paths.cache_dir = cache;
}

std::vector<StutterClass> parse_class_list(std::string_view csv) {
  std::vector<StutterClass> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    auto item = csv.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    const auto cls = parse_stutter_class(item);
    if (!cls) throw Error(Errc::UnknownClass, "unknown stutter class '" + std::string(item) + "'");
    out.push_back(*cls);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace disfluent
