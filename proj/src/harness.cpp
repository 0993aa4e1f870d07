#include "disfluent/harness.hpp"

#include "disfluent/error.hpp"
#include "disfluent/random.hpp"

#include <algorithm>
#include <atomic>
#include <cfenv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace disfluent {
namespace {

void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::Io, "failed writing " + path.string());
}

void require_labels(std::span<const Eigen::MatrixXf* const> features, std::span<const int> labels) {
  if (features.size() != labels.size()) {
    throw Error(Errc::ShapeMismatch, std::to_string(features.size()) + " feature matrices but " +
                                         std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(Errc::LabelOutOfRange, "binary label must be 0 or 1, got " + std::to_string(y));
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(Errc::InvalidConfig, "epochs must be at least 1");
  if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(Errc::InvalidConfig, "learning_rate must be finite and non-negative");
  }
}

RmsPropConfig TrainConfig::optimizer() const {
  RmsPropConfig c;
  c.learning_rate = learning_rate;
  return c;
}

std::vector<int> binary_labels(std::span<const LabeledClip> clips, StutterClass class_label) {
  std::vector<int> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(c.labels[class_label]);
  return out;
}

TrainingHistory train(StutterDetector& model, std::span<const Eigen::MatrixXf* const> features,
                      std::span<const int> labels, const TrainConfig& config, const EpochObserver& observer) {
  config.validate();
  require_labels(features, labels);
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw Error(Errc::DegenerateLabels, "training set for class " + std::string(to_string(config.class_label)) +
                                            " has " + std::to_string(positives) + " positives out of " +
                                            std::to_string(labels.size()));
  }

  RmsProp<float> optimizer(model.parameters(), config.optimizer());
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, {0x5u}));
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainingHistory history;
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::vector<const Eigen::MatrixXf*> batch;
      std::vector<int> batch_labels;
      for (std::size_t k = begin; k < end; ++k) {
        batch.push_back(features[order[k]]);
        batch_labels.push_back(labels[order[k]]);
      }
      Graph<float> graph;
      const auto input = stack_spectrograms(batch);
      const auto logits = model.logits(graph, input, Mode::Train, derive_seed(config.seed, {0xD0u, step}));
      const auto loss = softmax_cross_entropy(graph, logits, batch_labels);
      for (std::size_t k = 0; k < batch_labels.size(); ++k) {
        const auto row = static_cast<Index>(k);
        const int predicted = logits.data()[row * 2 + 1] > logits.data()[row * 2] ? 1 : 0;
        if (predicted == batch_labels[k]) ++correct;
      }
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch_labels.size());
      backward(graph, loss, optimizer.params());
      optimizer.step();
      ++step;
    }
    EpochRecord record;
    record.epoch = epoch;
    record.class_label = config.class_label;
    record.train_loss = loss_sum / static_cast<double>(labels.size());
    record.train_accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    history.records.push_back(record);
    if (observer) observer(record);
  }
  return history;
}

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

Confusion tally(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw Error(Errc::ShapeMismatch, "prediction and label counts differ");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] != 0;
    const bool y = labels[i] != 0;
    if (p && y) ++c.tp;
    if (p && !y) ++c.fp;
    if (!p && !y) ++c.tn;
    if (!p && y) ++c.fn;
  }
  return c;
}

Confusion evaluate(StutterDetector& model, std::span<const Eigen::MatrixXf* const> features,
                   std::span<const int> labels, int batch_size) {
  require_labels(features, labels);
  if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be at least 1");
  std::vector<int> predictions;
  predictions.reserve(labels.size());
  const auto step = static_cast<std::size_t>(batch_size);
  for (std::size_t begin = 0; begin < features.size(); begin += step) {
    const std::size_t end = std::min(features.size(), begin + step);
    const auto probs = model.predict_proba(stack_spectrograms(features.subspan(begin, end - begin)));
    for (Index r = 0; r < probs.rows(); ++r) predictions.push_back(probs(r, 1) > probs(r, 0) ? 1 : 0);
  }
  return tally(predictions, labels);
}

double miss_rate(const Confusion& c) {
  if (c.positives() == 0) throw Error(Errc::NoPositives, "miss rate is undefined without positive clips");
  return 100.0 * static_cast<double>(c.fn) / static_cast<double>(c.positives());
}

double accuracy(const Confusion& c) {
  if (c.total() == 0) throw Error(Errc::EmptyEvaluation, "accuracy of an empty evaluation");
  return 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

MetricsTable metrics_from_confusions(std::span<const ClassMetrics> summed) {
  MetricsTable table;
  for (const auto& row : summed) {
    ClassMetrics m = row;
    try {
      m.miss_rate_pct = miss_rate(m.confusion);
    } catch (const Error& e) {
      throw Error(e.code(), "class " + std::string(to_string(m.class_label)) + ": " + e.what());
    }
    m.accuracy_pct = accuracy(m.confusion);
    table.average_miss_rate_pct += m.miss_rate_pct;
    table.average_accuracy_pct += m.accuracy_pct;
    table.rows.push_back(m);
  }
  if (!table.rows.empty()) {
    table.average_miss_rate_pct /= static_cast<double>(table.rows.size());
    table.average_accuracy_pct /= static_cast<double>(table.rows.size());
  }
  return table;
}

std::uint64_t fold_seed(std::uint64_t base, std::size_t fold, StutterClass class_label) {
  return derive_seed(base, {fold, class_index(class_label)});
}

FoldResult run_fold(const CorpusManifest& manifest, std::span<const Eigen::MatrixXf> features, const LosoFold& fold,
                    std::size_t fold_index, StutterClass class_label, const LosoConfig& config,
                    const EpochObserver& observer) {
  if (features.size() != manifest.clips.size()) {
    throw Error(Errc::MissingFeatures, "feature count does not match the manifest");
  }
  FoldResult result;
  result.fold = fold_index;
  result.test_subject = fold.test_subject;
  result.class_label = class_label;
  result.seed = fold_seed(config.train.seed, fold_index, class_label);

  auto gather = [&](const std::vector<std::size_t>& idx, std::vector<const Eigen::MatrixXf*>& x, std::vector<int>& y) {
    for (std::size_t i : idx) {
      x.push_back(&features[i]);
      y.push_back(manifest.clips[i].labels[class_label]);
    }
  };
  std::vector<const Eigen::MatrixXf*> train_x, test_x;
  std::vector<int> train_y, test_y;
  gather(fold.train_clips, train_x, train_y);
  gather(fold.test_clips, test_x, test_y);

  const auto positives = std::count(train_y.begin(), train_y.end(), 1);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(train_y.size())) {
    result.skipped = true;
    result.note = "training split has " + std::to_string(positives) + " positives out of " +
                  std::to_string(train_y.size());
    return result;
  }

  TrainConfig tc = config.train;
  tc.class_label = class_label;
  tc.seed = result.seed;
  auto model = build_model(config.model, class_label, derive_seed(result.seed, {0x1u}));
  result.history = train(model, train_x, train_y, tc, observer);
  if (!test_x.empty()) result.confusion = evaluate(model, test_x, test_y, tc.batch_size);
  return result;
}

LosoResult summarize_folds(std::vector<FoldResult> folds, std::span<const StutterClass> classes) {
  LosoResult result;
  std::vector<ClassMetrics> summed;
  for (StutterClass c : classes) {
    ClassMetrics m;
    m.class_label = c;
    std::map<int, std::pair<double, int>> per_epoch;
    for (const auto& f : folds) {
      if (f.class_label != c || f.skipped) continue;
      m.confusion += f.confusion;
      for (const auto& r : f.history.records) {
        auto& acc = per_epoch[r.epoch];
        acc.first += r.train_accuracy;
        acc.second += 1;
      }
    }
    for (const auto& [epoch, acc] : per_epoch) {
      EpochRecord r;
      r.epoch = epoch;
      r.class_label = c;
      r.train_accuracy = acc.first / acc.second;
      double loss = 0.0;
      for (const auto& f : folds) {
        if (f.class_label != c || f.skipped) continue;
        for (const auto& fr : f.history.records) {
          if (fr.epoch == epoch) loss += fr.train_loss;
        }
      }
      r.train_loss = loss / acc.second;
      result.history.records.push_back(r);
    }
    summed.push_back(m);
  }
  result.metrics = metrics_from_confusions(summed);
  result.folds = std::move(folds);
  return result;
}

LosoResult loso_evaluate(const CorpusManifest& manifest, std::span<const Eigen::MatrixXf> features,
                         const LosoConfig& config, const FoldObserver& observer) {
  config.train.validate();
  const auto folds = loso_splits(manifest);
  if (config.classes.empty()) throw Error(Errc::InvalidConfig, "no classes selected");

  struct Job {
    std::size_t fold;
    StutterClass cls;
  };
  std::vector<Job> jobs;
  for (StutterClass c : config.classes) {
    for (std::size_t f = 0; f < folds.size(); ++f) jobs.push_back({f, c});
  }
  std::vector<FoldResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex observer_mutex;

  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        results[j] = run_fold(manifest, features, folds[jobs[j].fold], jobs[j].fold, jobs[j].cls, config);
        if (observer) {
          std::lock_guard lock(observer_mutex);
          observer(results[j]);
        }
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(config.jobs, 1, jobs.size());
  if (workers == 1) {
    worker();
  } else {
    // Workers inherit the caller's rounding and denormal modes.
    std::fenv_t env;
    std::fegetenv(&env);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&worker, env] {
        std::fesetenv(&env);
        worker();
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  auto result = summarize_folds(std::move(results), config.classes);
  std::vector<std::string> log;
  log.push_back("folds " + std::to_string(folds.size()) + ", classes " + std::to_string(config.classes.size()) +
                ", jobs " + std::to_string(workers));
  for (const auto& f : result.folds) {
    std::string line = "fold " + std::to_string(f.fold) + " test " + f.test_subject + " class " +
                       std::string(to_string(f.class_label)) + " seed " + std::to_string(f.seed);
    if (f.skipped) {
      line += " SKIPPED: " + f.note;
    } else {
      line += " tp " + std::to_string(f.confusion.tp) + " fp " + std::to_string(f.confusion.fp) + " tn " +
              std::to_string(f.confusion.tn) + " fn " + std::to_string(f.confusion.fn);
    }
    log.push_back(std::move(line));
  }
  result.log = std::move(log);
  return result;
}

std::string metrics_csv(const MetricsTable& metrics) {
  std::string out = "class,MR_pct,Acc_pct\n";
  for (const auto& row : metrics.rows) {
    out += std::string(to_string(row.class_label)) + "," + fixed2(row.miss_rate_pct) + "," +
           fixed2(row.accuracy_pct) + "\n";
  }
  out += "AVERAGE," + fixed2(metrics.average_miss_rate_pct) + "," + fixed2(metrics.average_accuracy_pct) + "\n";
  return out;
}

std::string history_csv(const TrainingHistory& history) {
  std::string out = "epoch,class,train_accuracy\n";
  for (const auto& r : history.records) {
    out += std::to_string(r.epoch) + "," + std::string(to_string(r.class_label)) + "," +
           fixed2(100.0 * r.train_accuracy) + "\n";
  }
  return out;
}

std::vector<MetricsCsvRow> parse_metrics_csv(std::string_view text) {
  std::vector<MetricsCsvRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "class,MR_pct,Acc_pct") throw Error(Errc::ParseError, "unexpected metrics header", line_no);
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw Error(Errc::ParseError, "expected 3 fields", line_no);
    }
    MetricsCsvRow row;
    row.label = line.substr(0, c1);
    try {
      row.miss_rate_pct = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
      row.accuracy_pct = std::stod(line.substr(c2 + 1));
    } catch (const std::exception&) {
      throw Error(Errc::ParseError, "invalid number", line_no);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_history(const TrainingHistory& history, const std::filesystem::path& path) {
  write_text(path, history_csv(history));
}

void report(const MetricsTable& metrics, const TrainingHistory& history, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + out_dir.string() + ": " + ec.message());
  write_text(out_dir / "metrics.csv", metrics_csv(metrics));
  write_history(history, out_dir / "history.csv");
}

}  // namespace disfluent
