#include "cli.hpp"

#include "disfluent/config.hpp"
#include "disfluent/dataset.hpp"
#include "disfluent/dsp.hpp"
#include "disfluent/error.hpp"
#include "disfluent/harness.hpp"
#include "disfluent/model.hpp"
#include "disfluent/random.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace disfluent::cli {
namespace {

namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::string> classes;
  std::optional<std::size_t> jobs;
  std::optional<std::string> out;
  std::optional<std::string> manifest;
  std::optional<std::string> checkpoints;
  std::optional<std::size_t> subjects;
  std::optional<std::size_t> clips;
  std::string from;
  std::string wav;
};

// Errors that stem from inputs or configuration rather than from a defect.
bool is_user_error(Errc code) {
  switch (code) {
    case Errc::BatchTooSmall:
    case Errc::EmptySequence:
    case Errc::LabelOutOfRange:
    case Errc::NonScalarLoss:
    case Errc::NumericalError:
      return false;
    default:
      return true;
  }
}

RunConfig resolve(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  apply_environment(c);
  if (f.seed) {
    c.train.seed = *f.seed;
    c.synth.seed = *f.seed;
  }
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.classes) c.classes = parse_class_list(*f.classes);
  if (f.jobs) c.jobs = *f.jobs;
  if (f.manifest) c.paths.manifest = *f.manifest;
  if (f.checkpoints) c.paths.checkpoint_dir = *f.checkpoints;
  if (f.out) {
    c.paths.report_dir = *f.out;
    c.paths.checkpoint_dir = *f.out;
  }
  if (f.subjects) c.synth.subjects = *f.subjects;
  if (f.clips) c.synth.clips_per_subject = *f.clips;
  c.validate();
  return c;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::Io, "failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path cache_file(const RunConfig& c, const LabeledClip& clip) { return c.paths.cache_dir / (clip.key() + ".dsfg"); }

fs::path checkpoint_file(const RunConfig& c, StutterClass cls) {
  return c.paths.checkpoint_dir / (std::string(to_string(cls)) + ".dsck");
}

std::string spectrogram_json(const SpectrogramConfig& s) {
  return nlohmann::ordered_json{{"window_ms", s.window_ms},
                                {"hop_ms", s.hop_ms},
                                {"fft_len", s.fft_len},
                                {"log_floor", s.log_floor},
                                {"normalize", s.normalize}}
             .dump() +
         "\n";
}

// Cached record newer than its source recording.
bool up_to_date(const fs::path& cached, const fs::path& source) {
  std::error_code ec1, ec2;
  const auto cached_time = fs::last_write_time(cached, ec1);
  const auto source_time = fs::last_write_time(source, ec2);
  return !ec1 && !ec2 && cached_time >= source_time;
}

AudioBuffer load_canonical(const fs::path& wav) {
  auto audio = load_wav(wav);
  if (audio.sample_rate != kCanonicalSampleRate) audio = resample(audio, kCanonicalSampleRate);
  return audio;
}

std::vector<Eigen::MatrixXf> load_features(const RunConfig& c, const CorpusManifest& manifest) {
  std::vector<Eigen::MatrixXf> features;
  features.reserve(manifest.clips.size());
  for (const auto& clip : manifest.clips) {
    const auto path = cache_file(c, clip);
    if (!fs::exists(path)) {
      throw Error(Errc::MissingFeatures,
                  "no cached features for clip " + clip.key() + " (" + path.string() + "); run `disfluent featurize` first");
    }
    features.push_back(read_feature_cache(path).values);
  }
  return features;
}

std::string seconds_since(std::chrono::steady_clock::time_point t0) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fs",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return buf;
}

int cmd_synth(const Flags& f, std::ostream& out) {
  const auto c = resolve(f);
  const fs::path dir = f.out ? fs::path(*f.out) : c.paths.manifest.parent_path();
  if (dir.empty()) throw Error(Errc::InvalidConfig, "synth needs --out or a manifest path with a directory");
  const auto corpus = synth_corpus(c.synth.seed, c.synth.subjects, c.synth.clips_per_subject, dir);
  out << "wrote " << corpus.manifest.clips.size() << " clips from " << corpus.manifest.subjects.size()
      << " subjects to " << dir.string() << "\n";
  return 0;
}

int cmd_featurize(const Flags& f, std::ostream& out, std::ostream& err) {
  const auto c = resolve(f);
  const auto manifest = read_manifest(c.paths.manifest);
  ensure_dir(c.paths.cache_dir);

  // A settings change invalidates every cached record.
  const auto settings_path = c.paths.cache_dir / "features.json";
  const auto settings = spectrogram_json(c.spectrogram);
  const bool settings_match = fs::exists(settings_path) && read_file(settings_path) == settings;
  if (!settings_match) write_file(settings_path, settings);

  std::map<std::string, std::vector<AudioClip>> recordings;
  std::map<std::string, std::string> failed_recordings;
  std::size_t written = 0, current = 0, failed = 0;
  for (const auto& clip : manifest.clips) {
    const auto target = cache_file(c, clip);
    if (settings_match && up_to_date(target, clip.wav_path)) {
      ++current;
      continue;
    }
    try {
      if (auto bad = failed_recordings.find(clip.wav_path); bad != failed_recordings.end()) {
        throw Error(Errc::Io, bad->second);
      }
      auto it = recordings.find(clip.wav_path);
      if (it == recordings.end()) {
        try {
          const auto audio = load_canonical(clip.wav_path);
          it = recordings.emplace(clip.wav_path, segment(audio, kClipSeconds, clip.subject_id)).first;
        } catch (const Error& e) {
          failed_recordings.emplace(clip.wav_path, e.what());
          throw;
        }
      }
      if (clip.clip_index >= it->second.size()) {
        throw Error(Errc::TooShort, "recording has " + std::to_string(it->second.size()) + " clips, clip " +
                                        std::to_string(clip.clip_index) + " requested");
      }
      write_feature_cache(target, spectrogram(it->second[clip.clip_index], c.spectrogram));
      ++written;
    } catch (const Error& e) {
      err << "featurize: " << clip.wav_path << " (clip " << clip.key() << "): " << e.what() << "\n";
      ++failed;
    }
  }
  out << "featurized " << written << ", up to date " << current << ", failed " << failed << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_train(const Flags& f, const std::optional<std::string>& one_class, std::ostream& out, std::ostream& err) {
  Flags flags = f;
  if (one_class) flags.classes = *one_class;
  const auto c = resolve(flags);
  const auto manifest = read_manifest(c.paths.manifest);
  const auto features = load_features(c, manifest);
  std::vector<const Eigen::MatrixXf*> x;
  for (const auto& m : features) x.push_back(&m);
  ensure_dir(c.paths.checkpoint_dir);
  ensure_dir(c.paths.report_dir);

  TrainingHistory all;
  for (StutterClass cls : c.classes) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig tc = c.train;
    tc.class_label = cls;
    tc.seed = derive_seed(c.train.seed, {class_index(cls)});
    auto model = build_model(c.model, cls, derive_seed(tc.seed, {0x1u}));
    const auto labels = binary_labels(manifest.clips, cls);
    const auto history = train(model, x, labels, tc, [&](const EpochRecord& r) {
      err << "train " << to_string(cls) << " epoch " << r.epoch << "/" << tc.epochs << " loss " << r.train_loss
          << " acc " << 100.0 * r.train_accuracy << "% (" << seconds_since(t0) << ")\n";
    });
    save_checkpoint(checkpoint_file(c, cls), model.to_checkpoint());
    all.records.insert(all.records.end(), history.records.begin(), history.records.end());
    out << "wrote " << checkpoint_file(c, cls).string() << "\n";
  }
  write_history(all, c.paths.report_dir / "history.csv");
  return 0;
}

void print_metrics(const MetricsTable& m, std::ostream& out) { out << metrics_csv(m); }

int cmd_loso(const Flags& f, std::ostream& out, std::ostream& err) {
  const auto c = resolve(f);
  const auto manifest = read_manifest(c.paths.manifest);
  loso_splits(manifest);  // fails early on a single-subject corpus
  const auto features = load_features(c, manifest);
  ensure_dir(c.paths.report_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = loso_evaluate(manifest, features, c.loso(), [&](const FoldResult& r) {
    err << "loso fold " << r.fold << " (" << r.test_subject << ") class " << to_string(r.class_label)
        << (r.skipped ? " skipped: " + r.note
                      : " tp " + std::to_string(r.confusion.tp) + " fp " + std::to_string(r.confusion.fp) + " tn " +
                            std::to_string(r.confusion.tn) + " fn " + std::to_string(r.confusion.fn))
        << " (" << seconds_since(t0) << ")\n";
  });
  report(result.metrics, result.history, c.paths.report_dir);
  write_file(c.paths.report_dir / "loso_results.json", loso_result_to_json(result));
  std::string log = "config\n" + config_to_json(c);
  for (const auto& line : result.log) log += line + "\n";
  write_file(c.paths.report_dir / "run.log", log);
  for (const auto& line : result.log) {
    if (line.find("SKIPPED") != std::string::npos) err << "warning: " << line << "\n";
  }
  print_metrics(result.metrics, out);
  return 0;
}

int cmd_predict(const Flags& f, std::ostream& out) {
  const auto c = resolve(f);
  for (StutterClass cls : c.classes) {
    if (!fs::exists(checkpoint_file(c, cls))) {
      throw Error(Errc::MissingCheckpoint, "no checkpoint for class " + std::string(to_string(cls)) + " at " +
                                               checkpoint_file(c, cls).string());
    }
  }
  const auto audio = load_canonical(f.wav);
  const auto clips = segment(audio, kClipSeconds, fs::path(f.wav).stem().string());
  std::vector<Eigen::MatrixXf> features;
  for (const auto& clip : clips) features.push_back(spectrogram(clip, c.spectrogram).values);

  // probabilities[class][clip]
  std::vector<std::vector<float>> probabilities;
  for (StutterClass cls : c.classes) {
    auto model = build_model(c.model, cls, 0);
    model.load(load_checkpoint(checkpoint_file(c, cls)));
    std::vector<float> p;
    for (const auto& m : features) {
      const Eigen::MatrixXf* one[] = {&m};
      p.push_back(model.predict_proba(stack_spectrograms(one))(0, 1));
    }
    probabilities.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < clips.size(); ++i) {
    for (std::size_t k = 0; k < c.classes.size(); ++k) {
      const float p = probabilities[k][i];
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(p));
      out << clips[i].clip_index << ' ' << to_string(c.classes[k]) << ' ' << buf << ' ' << (p > 0.5f ? 1 : 0) << "\n";
    }
  }
  return 0;
}

int cmd_report(const Flags& f, std::ostream& out) {
  const auto c = resolve(f);
  const fs::path source = f.from.empty() ? c.paths.report_dir / "loso_results.json" : fs::path(f.from);
  if (!fs::exists(source)) {
    throw Error(Errc::Io, "no LOSO results at " + source.string() + "; run `disfluent loso` first");
  }
  const auto result = loso_result_from_json(read_file(source));
  report(result.metrics, result.history, c.paths.report_dir);
  print_metrics(result.metrics, out);
  return 0;
}

void add_config(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON run configuration (schema_version 1)")->check(CLI::ExistingFile);
}
void add_seed(CLI::App* app, Flags& f) { app->add_option("--seed", f.seed, "Base seed for every random stream"); }
void add_epochs(CLI::App* app, Flags& f) {
  app->add_option("--epochs", f.epochs, "Training epochs per model")->check(CLI::PositiveNumber);
}
void add_classes(CLI::App* app, Flags& f) {
  app->add_option("--classes", f.classes, "Comma-separated subset of S,W,PH,R,I,PR");
}
void add_out(CLI::App* app, Flags& f, const std::string& what) { app->add_option("--out", f.out, what); }
void add_manifest(CLI::App* app, Flags& f) {
  app->add_option("--manifest", f.manifest, "Corpus manifest (overrides paths.manifest)");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stutter disfluency detection: spectrogram features, residual Bi-LSTM detectors, LOSO evaluation"};
  app.require_subcommand(1);
  app.footer(
      "Settings are layered: built-in defaults < --config file < DISFLUENT_CACHE (feature cache dir) < flags.\n"
      "Exit codes: 0 success, 1 user or data error, 2 internal error.");

  Flags f;
  std::optional<std::string> one_class;

  auto* synth = app.add_subcommand("synth", "Write a planted-signal synthetic corpus (WAVs, annotations, manifest)");
  add_config(synth, f);
  add_seed(synth, f);
  add_out(synth, f, "Corpus output directory");
  synth->add_option("--subjects", f.subjects, "Number of subjects (>= 2)")->check(CLI::Range(2, 1000));
  synth->add_option("--clips", f.clips, "4 s clips per subject")->check(CLI::PositiveNumber);

  auto* featurize = app.add_subcommand("featurize", "Compute and cache spectrograms for every manifest clip");
  add_config(featurize, f);
  add_manifest(featurize, f);

  auto* train_cmd = app.add_subcommand("train", "Train one detector per class on the whole corpus");
  add_config(train_cmd, f);
  add_manifest(train_cmd, f);
  add_seed(train_cmd, f);
  add_epochs(train_cmd, f);
  add_classes(train_cmd, f);
  train_cmd->add_option("--class", one_class, "Single class to train (same as --classes with one entry)");
  add_out(train_cmd, f, "Directory for checkpoints and history.csv");

  auto* loso = app.add_subcommand("loso", "Leave-one-subject-out evaluation over the selected classes");
  add_config(loso, f);
  add_manifest(loso, f);
  add_seed(loso, f);
  add_epochs(loso, f);
  add_classes(loso, f);
  loso->add_option("--jobs", f.jobs, "Worker threads for (fold, class) jobs; results do not depend on it")
      ->check(CLI::PositiveNumber);
  add_out(loso, f, "Directory for metrics.csv, history.csv, loso_results.json and run.log");

  auto* predict = app.add_subcommand("predict", "Per-clip class probabilities for a WAV file");
  add_config(predict, f);
  add_classes(predict, f);
  predict->add_option("--checkpoints", f.checkpoints, "Directory holding <class>.dsck files");
  predict->add_option("wav", f.wav, "Input WAV")->required()->check(CLI::ExistingFile);

  auto* report_cmd = app.add_subcommand("report", "Re-render metrics.csv and history.csv from loso_results.json");
  add_config(report_cmd, f);
  add_out(report_cmd, f, "Report directory (default: paths.report_dir)");
  report_cmd->add_option("--from", f.from, "LOSO results file (default: <report dir>/loso_results.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(f, out);
    if (*featurize) return cmd_featurize(f, out, err);
    if (*train_cmd) return cmd_train(f, one_class, out, err);
    if (*loso) return cmd_loso(f, out, err);
    if (*predict) return cmd_predict(f, out);
    if (*report_cmd) return cmd_report(f, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_user_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace disfluent::cli
