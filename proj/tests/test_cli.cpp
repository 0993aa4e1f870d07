#include "cli.hpp"

#include "disfluent/audio.hpp"
#include "disfluent/config.hpp"
#include "disfluent/dataset.hpp"
#include "disfluent/error.hpp"
#include "disfluent/harness.hpp"

#include "support/temp_dir.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using namespace disfluent;
namespace fs = std::filesystem;
using testing_support::slurp;
using testing_support::spit;
using testing_support::TempDir;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "disfluent");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Canonical front end, small detector: 256 rows halve twice to 64, time in multiples of 4.
RunConfig tiny_config(const fs::path& root) {
  RunConfig c;
  c.paths.manifest = root / "corpus/manifest.json";
  c.paths.cache_dir = root / "cache";
  c.paths.checkpoint_dir = root / "checkpoints";
  c.paths.report_dir = root / "reports";
  c.model.freq_bins = 256;
  c.model.stem_channels = 4;
  c.model.stem_kernel = 3;
  c.model.blocks = {{{4, 4, 4}, {2, 2}}, {{4, 3, 3}, {2, 2}}};
  c.model.lstm_units = 8;
  c.train.learning_rate = 1e-3;
  c.train.epochs = 1;
  c.train.batch_size = 2;
  return c;
}

// Two subjects with two clips each, featurized and trained once for every test.
class CliCorpus : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    save_config(*dir_ / "run.json", tiny_config(dir_->path()));
    ASSERT_EQ(run({"synth", "--config", config(), "--subjects", "2", "--clips", "2", "--out", (*dir_ / "corpus").string()})
                  .code,
              0);
    ASSERT_EQ(run({"featurize", "--config", config()}).code, 0);
    const auto trained = run({"train", "--config", config()});
    ASSERT_EQ(trained.code, 0) << trained.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string config() { return (*dir_ / "run.json").string(); }
  static fs::path path(const std::string& rel) { return *dir_ / rel; }

  static TempDir* dir_;
};
TempDir* CliCorpus::dir_ = nullptr;

}  // namespace

TEST(Cli, HelpForEveryCommand) {
  const auto top = run({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const char* cmd : {"synth", "featurize", "train", "loso", "predict", "report"}) {
    EXPECT_NE(top.out.find(cmd), std::string::npos) << cmd;
    const auto sub = run({cmd, "--help"});
    EXPECT_EQ(sub.code, 0) << cmd;
    EXPECT_NE(sub.out.find("--config"), std::string::npos) << cmd;
  }
  EXPECT_NE(run({"loso", "--help"}).out.find("--jobs"), std::string::npos);
}

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run({"loso", "--bogus"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"train", "--epochs", "0"}).code, 1);
  const auto bad_class = run({"train", "--classes", "S,PW", "--manifest", "/nonexistent.json"});
  EXPECT_EQ(bad_class.code, 1);
  EXPECT_NE(bad_class.err.find("PW"), std::string::npos);
}

TEST(Cli, BinaryExitCodes) {
  const std::string exe = DISFLUENT_CLI_PATH;
  EXPECT_EQ(std::system((exe + " --help > /dev/null").c_str()), 0);
  const int status = std::system((exe + " loso --bogus > /dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 1);
}

TEST(Config, JsonRoundTripAndRelativePaths) {
  TempDir dir("cli");
  auto c = tiny_config(dir.path());
  c.classes = {StutterClass::W, StutterClass::PR};
  c.jobs = 3;
  c.train.seed = 99;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  save_config(dir / "c.json", c);
  EXPECT_EQ(load_config(dir / "c.json"), c);

  const auto rel = config_from_json(R"({"schema_version": 1, "paths": {"cache_dir": "feat"}})", "/base");
  EXPECT_EQ(rel.paths.cache_dir, fs::path("/base/feat"));
  EXPECT_EQ(rel.model, ModelConfig::canonical());
  EXPECT_THROW(config_from_json(R"({"schema_version": 1, "colour": 3})"), Error);
  EXPECT_THROW(config_from_json(R"({"schema_version": 2})"), Error);
}

TEST(Config, CacheEnvironmentOverridesDefault) {
  TempDir dir("cli");
  RunConfig c;
  ::setenv("DISFLUENT_CACHE", (dir / "envcache").c_str(), 1);
  apply_environment(c);
  ::unsetenv("DISFLUENT_CACHE");
  EXPECT_EQ(c.paths.cache_dir, dir / "envcache");
  RunConfig untouched;
  apply_environment(untouched);
  EXPECT_EQ(untouched.paths.cache_dir, fs::path("cache"));
  EXPECT_EQ(parse_class_list("S, PR"), (std::vector<StutterClass>{StutterClass::S, StutterClass::PR}));
}

TEST(Cli, FeaturizeWritesThenSkips) {
  TempDir dir("cli");
  save_config(dir / "run.json", tiny_config(dir.path()));
  const auto cfg = (dir / "run.json").string();
  ASSERT_EQ(run({"synth", "--config", cfg, "--seed", "7", "--out", (dir / "corpus").string()}).code, 0);
  const auto first = run({"featurize", "--config", cfg});
  EXPECT_EQ(first.code, 0) << first.err;
  EXPECT_NE(first.out.find("featurized 40, up to date 0, failed 0"), std::string::npos) << first.out;
  const auto second = run({"featurize", "--config", cfg});
  EXPECT_NE(second.out.find("featurized 0, up to date 40"), std::string::npos) << second.out;
  std::size_t cached = 0;
  for (const auto& e : fs::directory_iterator(dir / "cache")) cached += e.path().extension() == ".dsfg";
  EXPECT_EQ(cached, 40u);
}

TEST(Cli, FeaturizeNamesCorruptRecording) {
  TempDir dir("cli");
  save_config(dir / "run.json", tiny_config(dir.path()));
  const auto cfg = (dir / "run.json").string();
  ASSERT_EQ(run({"synth", "--config", cfg, "--subjects", "2", "--clips", "1", "--out", (dir / "corpus").string()}).code, 0);
  spit(dir / "corpus/wav/s02.wav", "RIFF not really a wave file");
  const auto r = run({"featurize", "--config", cfg});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("s02.wav"), std::string::npos) << r.err;
  EXPECT_NE(r.out.find("featurized 1,"), std::string::npos);
}

TEST(Cli, CacheEnvironmentVariableRedirectsFeaturize) {
  TempDir dir("cli");
  save_config(dir / "run.json", tiny_config(dir.path()));
  const auto cfg = (dir / "run.json").string();
  ASSERT_EQ(run({"synth", "--config", cfg, "--subjects", "2", "--clips", "1", "--out", (dir / "corpus").string()}).code, 0);
  ::setenv("DISFLUENT_CACHE", (dir / "elsewhere").c_str(), 1);
  const auto r = run({"featurize", "--config", cfg});
  ::unsetenv("DISFLUENT_CACHE");
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(dir / "elsewhere/s01_0.dsfg"));
  EXPECT_FALSE(fs::exists(dir / "cache"));
}

TEST(Cli, TrainWithoutFeaturesPointsAtFeaturize) {
  TempDir dir("cli");
  save_config(dir / "run.json", tiny_config(dir.path()));
  const auto cfg = (dir / "run.json").string();
  ASSERT_EQ(run({"synth", "--config", cfg, "--subjects", "2", "--clips", "1", "--out", (dir / "corpus").string()}).code, 0);
  const auto r = run({"train", "--config", cfg, "--class", "S"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("featurize"), std::string::npos) << r.err;
}

TEST(Cli, LosoNeedsTwoSubjects) {
  TempDir dir("cli");
  auto c = tiny_config(dir.path());
  save_config(dir / "run.json", c);
  CorpusManifest m;
  m.subjects = {"solo"};
  m.clips = {{"wav/solo.wav", "solo", 0, {}}};
  fs::create_directories(dir / "corpus");
  write_manifest(dir / "corpus/manifest.json", m);
  const auto r = run({"loso", "--config", (dir / "run.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("TooFewSubjects"), std::string::npos) << r.err;
}

TEST_F(CliCorpus, TrainWritesCheckpointAndHistory) {
  for (StutterClass c : kStutterClasses) EXPECT_TRUE(fs::exists(path("checkpoints/" + std::string(to_string(c)) + ".dsck")));
  const auto history = slurp(path("reports/history.csv"));
  EXPECT_EQ(count_lines(history), 7u);  // header + one epoch per class

  TempDir other("cli");
  const auto r = run({"train", "--config", config(), "--class", "S", "--out", other.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(other / "S.dsck"));
  EXPECT_FALSE(fs::exists(other / "W.dsck"));
  EXPECT_EQ(count_lines(slurp(other / "history.csv")), 2u);
}

TEST_F(CliCorpus, PredictPrintsOneLinePerClipAndClass) {
  AudioBuffer b;
  b.samples = Eigen::VectorXf::Zero(8 * kCanonicalSampleRate);
  for (Eigen::Index i = 0; i < b.samples.size(); ++i) b.samples[i] = 0.3f * std::sin(0.2f * static_cast<float>(i));
  write_wav(path("eight.wav"), b);
  const auto r = run({"predict", "--config", config(), path("eight.wav").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 12u);
  std::istringstream lines(r.out);
  std::size_t clip;
  std::string cls;
  double p;
  int flag;
  while (lines >> clip >> cls >> p >> flag) {
    EXPECT_LT(clip, 2u);
    EXPECT_TRUE(parse_stutter_class(cls).has_value()) << cls;
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    EXPECT_EQ(flag, p > 0.5 ? 1 : 0);
  }
}

TEST_F(CliCorpus, PredictOnSilenceIsFinite) {
  AudioBuffer b;
  b.samples = Eigen::VectorXf::Zero(4 * kCanonicalSampleRate);
  write_wav(path("silent.wav"), b);
  const auto r = run({"predict", "--config", config(), "--classes", "PR", path("silent.wav").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 1u);
  EXPECT_EQ(r.out.find("nan"), std::string::npos);
}

TEST_F(CliCorpus, PredictNamesMissingCheckpoint) {
  TempDir empty("cli");
  const auto r = run({"predict", "--config", config(), "--checkpoints", empty.path().string(), "--classes", "W",
                      path("corpus/wav/s01.wav").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("class W"), std::string::npos) << r.err;
}

TEST_F(CliCorpus, LosoOverTwoClassesAndReportRerender) {
  TempDir out("cli");
  const auto r = run({"loso", "--config", config(), "--classes", "S,W", "--out", out.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto metrics = slurp(out / "metrics.csv");
  const auto rows = parse_metrics_csv(metrics);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].label, "S");
  EXPECT_EQ(rows[1].label, "W");
  EXPECT_EQ(rows[2].label, "AVERAGE");
  EXPECT_EQ(r.out, metrics);
  EXPECT_TRUE(fs::exists(out / "run.log"));

  const auto history = slurp(out / "history.csv");
  fs::remove(out / "metrics.csv");
  fs::remove(out / "history.csv");
  const auto again = run({"report", "--config", config(), "--out", out.path().string()});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(out / "metrics.csv"), metrics);
  EXPECT_EQ(slurp(out / "history.csv"), history);

  TempDir nothing("cli");
  const auto missing = run({"report", "--config", config(), "--out", nothing.path().string()});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("loso"), std::string::npos);
}
