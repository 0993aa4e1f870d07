#include "disfluent/error.hpp"
#include "disfluent/harness.hpp"

#include <nlohmann/json.hpp>

namespace disfluent {
namespace {

using json = nlohmann::ordered_json;

StutterClass class_from(const json& j) {
  const auto name = j.get<std::string>();
  const auto c = parse_stutter_class(name);
  if (!c) throw Error(Errc::UnknownClass, "unknown stutter class '" + name + "'");
  return *c;
}

}  // namespace

// Metrics are derived data: only the per-fold results and the class list are
// stored, and reading recomputes the table.
std::string loso_result_to_json(const LosoResult& result) {
  json j;
  j["schema_version"] = 1;
  auto classes = json::array();
  for (const auto& row : result.metrics.rows) classes.push_back(std::string(to_string(row.class_label)));
  j["classes"] = std::move(classes);
  auto folds = json::array();
  for (const auto& f : result.folds) {
    json fj;
    fj["fold"] = f.fold;
    fj["test_subject"] = f.test_subject;
    fj["class"] = std::string(to_string(f.class_label));
    fj["seed"] = f.seed;
    fj["skipped"] = f.skipped;
    fj["note"] = f.note;
    fj["confusion"] = {{"tp", f.confusion.tp}, {"fp", f.confusion.fp}, {"tn", f.confusion.tn}, {"fn", f.confusion.fn}};
    auto history = json::array();
    for (const auto& r : f.history.records) {
      history.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"train_accuracy", r.train_accuracy}});
    }
    fj["history"] = std::move(history);
    folds.push_back(std::move(fj));
  }
  j["folds"] = std::move(folds);
  j["log"] = result.log;
  return j.dump(2) + "\n";
}

LosoResult loso_result_from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    if (j.at("schema_version").get<int>() != 1) throw Error(Errc::ParseError, "unsupported LOSO result schema");
    std::vector<StutterClass> classes;
    for (const auto& c : j.at("classes")) classes.push_back(class_from(c));
    std::vector<FoldResult> folds;
    for (const auto& fj : j.at("folds")) {
      FoldResult f;
      f.fold = fj.at("fold").get<std::size_t>();
      f.test_subject = fj.at("test_subject").get<std::string>();
      f.class_label = class_from(fj.at("class"));
      f.seed = fj.at("seed").get<std::uint64_t>();
      f.skipped = fj.at("skipped").get<bool>();
      f.note = fj.at("note").get<std::string>();
      const auto& cj = fj.at("confusion");
      f.confusion = {cj.at("tp").get<std::size_t>(), cj.at("fp").get<std::size_t>(), cj.at("tn").get<std::size_t>(),
                     cj.at("fn").get<std::size_t>()};
      for (const auto& rj : fj.at("history")) {
        EpochRecord r;
        r.epoch = rj.at("epoch").get<int>();
        r.class_label = f.class_label;
        r.train_loss = rj.at("train_loss").get<double>();
        r.train_accuracy = rj.at("train_accuracy").get<double>();
        f.history.records.push_back(r);
      }
      folds.push_back(std::move(f));
    }
    auto result = summarize_folds(std::move(folds), classes);
    result.log = j.at("log").get<std::vector<std::string>>();
    return result;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("LOSO result: ") + e.what());
  }
}

}  // namespace disfluent
