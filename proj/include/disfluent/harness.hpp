#pragma once

#include "disfluent/dataset.hpp"
#include "disfluent/model.hpp"
#include "disfluent/optim.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace disfluent {

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 30;
  int batch_size = 8;
  std::uint64_t seed = 0;
  StutterClass class_label = StutterClass::S;

  void validate() const;
  RmsPropConfig optimizer() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  StutterClass class_label = StutterClass::S;
  double train_loss = 0.0;
  /// Fraction in [0, 1] of training clips classified correctly by the
  /// train-mode forward passes of this epoch.
  double train_accuracy = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> records;
};

using EpochObserver = std::function<void(const EpochRecord&)>;

/// Mini-batch RMSProp on softmax cross-entropy. `labels` are 0/1, one per
/// feature matrix; every feature matrix has the same shape. Batches are
/// reshuffled every epoch from a stream seeded by `config.seed`.
TrainingHistory train(StutterDetector& model, std::span<const Eigen::MatrixXf* const> features,
                      std::span<const int> labels, const TrainConfig& config, const EpochObserver& observer = {});

/// Binary labels of `clips` for one class.
std::vector<int> binary_labels(std::span<const LabeledClip> clips, StutterClass class_label);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  std::size_t positives() const { return tp + fn; }
  Confusion& operator+=(const Confusion& o);
  bool operator==(const Confusion&) const = default;
};

/// Eval-mode predictions (argmax over the two logits) tallied against labels.
Confusion evaluate(StutterDetector& model, std::span<const Eigen::MatrixXf* const> features,
                   std::span<const int> labels, int batch_size = 8);
Confusion tally(std::span<const int> predictions, std::span<const int> labels);

/// 100 fn / (tp + fn). Throws NoPositives when tp + fn == 0.
double miss_rate(const Confusion& c);
/// 100 (tp + tn) / total. Throws EmptyEvaluation on an empty confusion.
double accuracy(const Confusion& c);

struct ClassMetrics {
  StutterClass class_label = StutterClass::S;
  Confusion confusion;
  double miss_rate_pct = 0.0;
  double accuracy_pct = 0.0;
};

struct MetricsTable {
  std::vector<ClassMetrics> rows;
  double average_miss_rate_pct = 0.0;
  double average_accuracy_pct = 0.0;
};

/// Metrics per class from summed confusions; averages are unweighted means
/// over the listed classes.
MetricsTable metrics_from_confusions(std::span<const ClassMetrics> summed);

struct FoldResult {
  std::size_t fold = 0;
  std::string test_subject;
  StutterClass class_label = StutterClass::S;
  std::uint64_t seed = 0;
  bool skipped = false;
  std::string note;
  Confusion confusion;
  TrainingHistory history;
};

struct LosoConfig {
  TrainConfig train;
  ModelConfig model = ModelConfig::canonical();
  std::vector<StutterClass> classes{kStutterClasses.begin(), kStutterClasses.end()};
  std::size_t jobs = 1;
};

struct LosoResult {
  MetricsTable metrics;
  std::vector<FoldResult> folds;
  /// Per class and epoch, train accuracy averaged over the folds that ran.
  TrainingHistory history;
  std::vector<std::string> log;
};

using FoldObserver = std::function<void(const FoldResult&)>;

/// Seed for the (fold, class) job: model init, shuffling and dropout.
std::uint64_t fold_seed(std::uint64_t base, std::size_t fold, StutterClass class_label);

/// Trains a fresh model on the fold's training clips and evaluates it on the
/// held-out subject. `features` is aligned with `manifest.clips`.
FoldResult run_fold(const CorpusManifest& manifest, std::span<const Eigen::MatrixXf> features, const LosoFold& fold,
                    std::size_t fold_index, StutterClass class_label, const LosoConfig& config,
                    const EpochObserver& observer = {});

/// Every (fold, class) job, on up to `config.jobs` worker threads. Results
/// do not depend on the worker count. Folds whose training split lacks a
/// positive or a negative for the class are skipped and logged.
LosoResult loso_evaluate(const CorpusManifest& manifest, std::span<const Eigen::MatrixXf> features,
                         const LosoConfig& config, const FoldObserver& observer = {});

/// Recomputes metrics and aggregated history from per-fold results.
LosoResult summarize_folds(std::vector<FoldResult> folds, std::span<const StutterClass> classes);

// Reports

/// `class,MR_pct,Acc_pct` rows with two decimals, then `AVERAGE`.
std::string metrics_csv(const MetricsTable& metrics);
/// `epoch,class,train_accuracy` rows, train_accuracy in percent.
std::string history_csv(const TrainingHistory& history);

struct MetricsCsvRow {
  std::string label;
  double miss_rate_pct = 0.0;
  double accuracy_pct = 0.0;
};
std::vector<MetricsCsvRow> parse_metrics_csv(std::string_view text);

/// Writes metrics.csv and history.csv into `out_dir` (created if needed).
void report(const MetricsTable& metrics, const TrainingHistory& history, const std::filesystem::path& out_dir);
void write_history(const TrainingHistory& history, const std::filesystem::path& path);

/// Lossless JSON of a LOSO run (per-fold confusions and histories).
std::string loso_result_to_json(const LosoResult& result);
LosoResult loso_result_from_json(std::string_view text);

}  // namespace disfluent
