#include "disfluent/error.hpp"
#include "disfluent/harness.hpp"

#include "support/temp_dir.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace disfluent;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::Io;
}

// Miniature-sized feature matrices; positives carry a bright band in rows 4..6.
struct PlantedSet {
  std::vector<Eigen::MatrixXf> features;
  std::vector<int> labels;

  std::vector<const Eigen::MatrixXf*> pointers() const {
    std::vector<const Eigen::MatrixXf*> out;
    for (const auto& f : features) out.push_back(&f);
    return out;
  }
};

PlantedSet planted(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.3f);
  PlantedSet s;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::MatrixXf m = Eigen::MatrixXf::NullaryExpr(17, 16, [&] { return noise(rng); });
    const int y = i % 2 == 0 ? 1 : 0;
    if (y) m.middleRows(4, 3).array() += 2.0f;
    s.features.push_back(std::move(m));
    s.labels.push_back(y);
  }
  return s;
}

// A small manifest whose clips are planted per class: clip k of each
// subject is positive for class (k % 6) only.
std::pair<CorpusManifest, std::vector<Eigen::MatrixXf>> planted_corpus(std::size_t subjects, std::size_t clips) {
  CorpusManifest m;
  std::vector<Eigen::MatrixXf> features;
  std::mt19937_64 rng(77);
  std::normal_distribution<float> noise(0.0f, 0.3f);
  for (std::size_t s = 0; s < subjects; ++s) {
    const std::string id = "s" + std::to_string(s + 1);
    m.subjects.push_back(id);
    for (std::size_t k = 0; k < clips; ++k) {
      LabeledClip clip{"wav/" + id + ".wav", id, k, {}};
      const auto c = kStutterClasses[k % 6];
      clip.labels.set(c, true);
      Eigen::MatrixXf f = Eigen::MatrixXf::NullaryExpr(17, 16, [&] { return noise(rng); });
      f.row(static_cast<Eigen::Index>(2 + 2 * (k % 6))).array() += 2.0f;
      m.clips.push_back(clip);
      features.push_back(std::move(f));
    }
  }
  return {m, features};
}

LosoConfig small_loso(std::size_t jobs) {
  LosoConfig c;
  c.model = ModelConfig::miniature();
  c.train.epochs = 2;
  c.train.batch_size = 4;
  c.train.learning_rate = 1e-3;
  c.train.seed = 3;
  c.classes = {StutterClass::S, StutterClass::PR};
  c.jobs = jobs;
  return c;
}

}  // namespace

// --- metrics ---------------------------------------------------------------------

TEST(Metrics, WorkedFixture) {
  const Confusion c{8, 5, 85, 2};
  EXPECT_DOUBLE_EQ(miss_rate(c), 20.0);
  EXPECT_DOUBLE_EQ(accuracy(c), 93.0);
}

TEST(Metrics, Extremes) {
  EXPECT_DOUBLE_EQ(miss_rate({4, 3, 1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(miss_rate({0, 0, 7, 5}), 100.0);
  EXPECT_DOUBLE_EQ(accuracy({0, 6, 0, 4}), 0.0);
  EXPECT_DOUBLE_EQ(accuracy({3, 0, 9, 0}), 100.0);
}

TEST(Metrics, UndefinedCasesRaise) {
  EXPECT_EQ(code_of([] { miss_rate({0, 2, 8, 0}); }), Errc::NoPositives);
  EXPECT_EQ(code_of([] { accuracy({}); }), Errc::EmptyEvaluation);
}

TEST(Metrics, TallyCountsEachCell) {
  const std::vector<int> pred{1, 1, 0, 0, 1, 0};
  const std::vector<int> truth{1, 0, 0, 1, 1, 0};
  EXPECT_EQ(tally(pred, truth), (Confusion{2, 1, 2, 1}));
  EXPECT_THROW(tally(pred, std::vector<int>{1}), Error);
}

TEST(Metrics, AllNegativePredictorScoresAccuracyButMissesEverything) {
  std::vector<int> truth(100, 0), pred(100, 0);
  std::fill(truth.begin(), truth.begin() + 10, 1);
  const auto c = tally(pred, truth);
  EXPECT_DOUBLE_EQ(accuracy(c), 90.0);
  EXPECT_DOUBLE_EQ(miss_rate(c), 100.0);
}

TEST(Metrics, TableMicroAveragesConfusions) {
  std::vector<ClassMetrics> summed;
  // Two folds for S summed beforehand: (3,0,5,1) + (1,1,6,3).
  Confusion s{3, 0, 5, 1};
  s += Confusion{1, 1, 6, 3};
  summed.push_back({StutterClass::S, s, 0, 0});
  summed.push_back({StutterClass::W, {5, 0, 5, 0}, 0, 0});
  const auto t = metrics_from_confusions(summed);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_DOUBLE_EQ(t.rows[0].miss_rate_pct, 50.0);  // 4 / 8, not the mean of 25 and 75
  EXPECT_DOUBLE_EQ(t.rows[0].accuracy_pct, 75.0);
  EXPECT_DOUBLE_EQ(t.average_miss_rate_pct, 25.0);
  EXPECT_DOUBLE_EQ(t.average_accuracy_pct, 87.5);

  summed.push_back({StutterClass::I, {0, 1, 4, 0}, 0, 0});
  EXPECT_EQ(code_of([&] { metrics_from_confusions(summed); }), Errc::NoPositives);
}

// --- training --------------------------------------------------------------------

TEST(Training, ZeroLearningRateLeavesParametersUntouched) {
  const auto data = planted(6, 1);
  auto model = build_model(ModelConfig::miniature(), StutterClass::S, 4);
  std::vector<Eigen::VectorXf> before;
  for (const auto& p : model.parameters()) before.push_back(p.data());
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  const auto history = train(model, data.pointers(), data.labels, cfg);
  ASSERT_EQ(history.records.size(), 2u);
  const auto after = model.parameters();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_TRUE((after[i].data().array() == before[i].array()).all());
}

TEST(Training, SameSeedIsReproducible) {
  const auto data = planted(10, 2);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 9;
  auto a = build_model(ModelConfig::miniature(), StutterClass::S, 4);
  auto b = build_model(ModelConfig::miniature(), StutterClass::S, 4);
  const auto ha = train(a, data.pointers(), data.labels, cfg);
  const auto hb = train(b, data.pointers(), data.labels, cfg);
  for (std::size_t e = 0; e < ha.records.size(); ++e) {
    EXPECT_EQ(ha.records[e].train_loss, hb.records[e].train_loss);
    EXPECT_EQ(ha.records[e].train_accuracy, hb.records[e].train_accuracy);
  }
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE((pa[i].data().array() == pb[i].data().array()).all());
}

TEST(Training, LearnsAPlantedBand) {
  const auto data = planted(16, 3);
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.epochs = 25;
  cfg.batch_size = 4;
  cfg.seed = 1;
  auto model = build_model(ModelConfig::miniature(), StutterClass::S, 5);
  const auto h = train(model, data.pointers(), data.labels, cfg);
  EXPECT_LT(h.records.back().train_loss, h.records.front().train_loss);
  const auto held_out = planted(20, 99);
  const auto c = evaluate(model, held_out.pointers(), held_out.labels, 8);
  EXPECT_EQ(c.total(), 20u);
  EXPECT_GE(accuracy(c), 90.0);
}

TEST(Training, RejectsSingleClassLabels) {
  auto data = planted(4, 1);
  std::fill(data.labels.begin(), data.labels.end(), 0);
  auto model = build_model(ModelConfig::miniature(), StutterClass::S, 4);
  EXPECT_EQ(code_of([&] { train(model, data.pointers(), data.labels, TrainConfig{}); }), Errc::DegenerateLabels);
  data.labels[0] = 2;
  EXPECT_EQ(code_of([&] { train(model, data.pointers(), data.labels, TrainConfig{}); }), Errc::LabelOutOfRange);
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(bad.validate(), Error);
}

// --- reports ---------------------------------------------------------------------

TEST(Reports, MetricsCsvHasSevenRowsAndRoundTrips) {
  std::vector<ClassMetrics> summed;
  std::size_t k = 1;
  for (StutterClass c : kStutterClasses) summed.push_back({c, {k, k % 3, 40 + k, 7 - k}, 0, 0}), ++k;
  const auto table = metrics_from_confusions(summed);
  const auto text = metrics_csv(table);
  const auto rows = parse_metrics_csv(text);
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(text.substr(0, text.find('\n')), "class,MR_pct,Acc_pct");
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(rows[i].label, to_string(kStutterClasses[i]));
    EXPECT_NEAR(rows[i].miss_rate_pct, table.rows[i].miss_rate_pct, 0.005);
    EXPECT_NEAR(rows[i].accuracy_pct, table.rows[i].accuracy_pct, 0.005);
  }
  EXPECT_EQ(rows[6].label, "AVERAGE");
  EXPECT_NEAR(rows[6].miss_rate_pct, table.average_miss_rate_pct, 0.005);
  EXPECT_NE(text.find("S,85.71,"), std::string::npos);  // S: 6 / 7
  EXPECT_THROW(parse_metrics_csv("class,MR,Acc\n"), Error);
}

TEST(Reports, HistoryCsvForSixClassesOverThirtyEpochs) {
  TrainingHistory h;
  for (StutterClass c : kStutterClasses)
    for (int e = 1; e <= 30; ++e) h.records.push_back({e, c, 0.5, e / 30.0});
  testing_support::TempDir dir("harness");
  report(metrics_from_confusions(std::vector<ClassMetrics>{{StutterClass::S, {1, 0, 1, 0}, 0, 0}}), h, dir / "out");
  const auto text = testing_support::slurp(dir / "out/history.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 181);
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,class,train_accuracy");
  EXPECT_NE(text.find("\n30,PR,100.00\n"), std::string::npos);
  EXPECT_NE(text.find("\n3,S,10.00\n"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "out/metrics.csv"));
}

// --- LOSO ------------------------------------------------------------------------

TEST(Loso, FoldSeedsAreDistinct) {
  std::set<std::uint64_t> seeds;
  for (std::size_t f = 0; f < 25; ++f)
    for (StutterClass c : kStutterClasses) seeds.insert(fold_seed(1, f, c));
  EXPECT_EQ(seeds.size(), 150u);
  EXPECT_NE(fold_seed(1, 0, StutterClass::S), fold_seed(2, 0, StutterClass::S));
}

TEST(Loso, StructureAndWorkerIndependence) {
  const auto [manifest, features] = planted_corpus(3, 6);
  const auto serial = loso_evaluate(manifest, features, small_loso(1));
  ASSERT_EQ(serial.folds.size(), 6u);  // 3 folds x 2 classes
  for (const auto& f : serial.folds) {
    EXPECT_FALSE(f.skipped);
    EXPECT_EQ(f.confusion.total(), 6u);
    EXPECT_EQ(f.confusion.positives(), 1u);
    EXPECT_EQ(f.history.records.size(), 2u);
  }
  ASSERT_EQ(serial.metrics.rows.size(), 2u);
  EXPECT_EQ(serial.metrics.rows[0].confusion.total(), 18u);
  EXPECT_EQ(serial.history.records.size(), 4u);
  EXPECT_EQ(serial.log.size(), 7u);

  const auto parallel = loso_evaluate(manifest, features, small_loso(2));
  EXPECT_EQ(metrics_csv(serial.metrics), metrics_csv(parallel.metrics));
  EXPECT_EQ(history_csv(serial.history), history_csv(parallel.history));
  for (std::size_t i = 0; i < serial.folds.size(); ++i) {
    EXPECT_EQ(serial.folds[i].confusion, parallel.folds[i].confusion);
    EXPECT_EQ(serial.folds[i].seed, parallel.folds[i].seed);
  }
}

TEST(Loso, SkipsFoldsWithoutPositivesInTraining) {
  auto [manifest, features] = planted_corpus(3, 6);
  // Only subject s1 has a PR positive; its training split excludes it.
  for (auto& clip : manifest.clips)
    if (clip.subject_id != "s1") clip.labels.set(StutterClass::PR, false);
  auto cfg = small_loso(1);
  cfg.classes = {StutterClass::PR};
  const auto folds = loso_splits(manifest);
  const auto skipped = run_fold(manifest, features, folds[0], 0, StutterClass::PR, cfg);
  EXPECT_TRUE(skipped.skipped);
  EXPECT_NE(skipped.note.find("0 positives"), std::string::npos);
  EXPECT_TRUE(skipped.history.records.empty());
  EXPECT_FALSE(run_fold(manifest, features, folds[1], 1, StutterClass::PR, cfg).skipped);
  // The remaining folds test subjects without PR clips, so the class has no miss rate.
  EXPECT_EQ(code_of([&] { loso_evaluate(manifest, features, cfg); }), Errc::NoPositives);
}

TEST(Loso, RejectsMisalignedFeatures) {
  auto [manifest, features] = planted_corpus(2, 6);
  features.pop_back();
  EXPECT_EQ(code_of([&] { loso_evaluate(manifest, features, small_loso(1)); }), Errc::MissingFeatures);
}

TEST(Loso, ResultJsonRoundTrip) {
  const auto [manifest, features] = planted_corpus(2, 6);
  const auto r = loso_evaluate(manifest, features, small_loso(1));
  const auto back = loso_result_from_json(loso_result_to_json(r));
  ASSERT_EQ(back.folds.size(), r.folds.size());
  for (std::size_t i = 0; i < r.folds.size(); ++i) {
    EXPECT_EQ(back.folds[i].confusion, r.folds[i].confusion);
    EXPECT_EQ(back.folds[i].test_subject, r.folds[i].test_subject);
    EXPECT_EQ(back.folds[i].history.records.size(), r.folds[i].history.records.size());
    EXPECT_EQ(back.folds[i].history.records[1].train_loss, r.folds[i].history.records[1].train_loss);
  }
  EXPECT_EQ(metrics_csv(back.metrics), metrics_csv(r.metrics));
  EXPECT_EQ(history_csv(back.history), history_csv(r.history));
}
