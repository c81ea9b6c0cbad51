#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gcsich/evaluator.hpp"
#include "gcsich/rng.hpp"

using namespace gcsich;

namespace {

// Probability that a random positive outscores a random negative.
double pair_count_auc(const std::vector<double>& s, const std::vector<int>& t) {
  double credit = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (t[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (t[j] != 0) continue;
      ++pairs;
      credit += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return credit / static_cast<double>(pairs);
}

data::Dataset toy_test_set() {
  // p1: favorable, 3 slices; p2: unfavorable, 2 slices; p3: favorable, 1 slice.
  data::Dataset d;
  auto add = [&](std::string id, int label, int n) {
    for (int i = 0; i < n; ++i) {
      data::Sample s;
      s.patient_id = id;
      s.label = label;
      s.gcs = label ? 14 : 5;
      s.path = id + "_" + std::to_string(i) + ".png";
      d.push_back(s);
    }
  };
  add("p1", 1, 3);
  add("p2", 0, 2);
  add("p3", 1, 1);
  return d;
}

}  // namespace

TEST_CASE("confusion metric examples") {
  const std::vector<int> t = {1, 0, 1, 0};
  auto all = eval::confusion_metrics(t, t);
  CHECK(*all.accuracy == 1.0);
  CHECK(*all.tpr == 1.0);
  CHECK(*all.tnr == 1.0);
  CHECK(*all.f1 == 1.0);

  // tp=2, fn=1, tn=3, fp=0
  const std::vector<int> truth = {1, 1, 1, 0, 0, 0};
  const std::vector<int> pred = {1, 1, 0, 0, 0, 0};
  auto m = eval::confusion_metrics(pred, truth);
  CHECK(m.counts == eval::ConfusionCounts{2, 0, 3, 1});
  CHECK(*m.accuracy == 5.0 / 6.0);
  CHECK(*m.tpr == 2.0 / 3.0);
  CHECK(*m.tnr == 1.0);
  CHECK(*m.f1 == 0.8);

  const std::vector<int> negs = {0, 0, 0};
  auto n = eval::confusion_metrics(std::vector<int>{0, 1, 0}, negs);
  CHECK_FALSE(n.tpr.has_value());
  CHECK(n.tnr.has_value());
  CHECK(n.accuracy.has_value());
  CHECK(*n.f1 == 0.0);
  CHECK(eval::to_json(n)["tpr"].is_null());

  CHECK_THROWS_AS(eval::confusion_metrics(std::vector<int>{1}, std::vector<int>{1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(eval::confusion_metrics(std::vector<int>{}, std::vector<int>{}), std::invalid_argument);
  CHECK_THROWS_AS(eval::confusion_metrics(std::vector<int>{2}, std::vector<int>{1}), std::invalid_argument);
}

TEST_CASE("flipping labels swaps tpr and tnr") {
  num::RngStream rng(3, "flip");
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<int> p(n), t(n), pf(n), tf(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(2));
      t[i] = static_cast<int>(rng.below(2));
      pf[i] = 1 - p[i];
      tf[i] = 1 - t[i];
    }
    const auto a = eval::confusion_metrics(p, t);
    const auto b = eval::confusion_metrics(pf, tf);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.tpr == b.tnr);
    CHECK(a.tnr == b.tpr);
  }
}

TEST_CASE("majority vote examples and exhaustive oracle") {
  CHECK(eval::majority_vote(std::vector<int>{1, 1, 0}).prediction == 1);
  auto tie = eval::majority_vote(std::vector<int>{1, 0});
  CHECK(tie.prediction == 0);
  CHECK(tie.tie);
  CHECK_THROWS_AS(eval::majority_vote(std::vector<int>{}), std::invalid_argument);

  for (std::size_t k = 1; k <= 6; ++k) {
    for (std::size_t bits = 0; bits < (1u << k); ++bits) {
      std::vector<int> v(k);
      std::size_t ones = 0;
      for (std::size_t i = 0; i < k; ++i) {
        v[i] = static_cast<int>((bits >> i) & 1u);
        ones += static_cast<std::size_t>(v[i]);
      }
      const auto r = eval::majority_vote(v);
      CHECK(r.prediction == (static_cast<double>(ones) > static_cast<double>(k) / 2.0 ? 1 : 0));
      CHECK(r.tie == (2 * ones == k));
    }
  }
}

TEST_CASE("patient_vote groups in first-appearance order") {
  std::vector<eval::SlicePrediction> s = {
      {"b", "", 1, 0.9, 1}, {"a", "", 0, 0.2, 0}, {"b", "", 1, 0.4, 0}, {"b", "", 1, 0.7, 1}, {"a", "", 0, 0.6, 1}};
  const auto p = eval::patient_vote(s);
  REQUIRE(p.size() == 2);
  CHECK(p[0].patient_id == "b");
  CHECK(p[0].prediction == 1);
  CHECK(p[0].slices == 3);
  CHECK(p[0].score == doctest::Approx(2.0 / 3.0));
  CHECK(p[1].patient_id == "a");
  CHECK(p[1].prediction == 0);
  CHECK(p[1].tie);
  s.push_back({"a", "", 1, 0.5, 0});
  CHECK_THROWS_AS(eval::patient_vote(s), std::invalid_argument);
}

TEST_CASE("roc_auc examples") {
  auto perfect = eval::roc_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0});
  CHECK(perfect.auc == 1.0);
  auto ex = eval::roc_auc(std::vector<double>{0.8, 0.3, 0.5, 0.1}, std::vector<int>{1, 1, 0, 0});
  CHECK(ex.auc == 0.75);
  auto flat = eval::roc_auc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<int>{1, 0, 0});
  CHECK(flat.auc == 0.5);
  CHECK_THROWS_AS(eval::roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(eval::roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), std::invalid_argument);
}

TEST_CASE("trapezoid AUC equals pair counting on random instances") {
  num::RngStream rng(17, "auc");
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    std::vector<double> s(n);
    std::vector<int> t(n);
    const bool coarse = trial % 2 == 0;  // coarse scores force ties
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
      t[i] = static_cast<int>(rng.below(2));
    }
    t[0] = 1;
    t[1] = 0;
    const auto roc = eval::roc_auc(s, t);
    CHECK(std::abs(roc.auc - pair_count_auc(s, t)) <= 1e-9);

    const auto& pts = roc.points;
    CHECK(pts.front().fpr == 0.0);
    CHECK(pts.front().tpr == 0.0);
    CHECK(pts.back().fpr == 1.0);
    CHECK(pts.back().tpr == 1.0);
    for (std::size_t i = 1; i < pts.size(); ++i) {
      CHECK(pts[i].fpr >= pts[i - 1].fpr);
      CHECK(pts[i].tpr >= pts[i - 1].tpr);
      CHECK(pts[i].threshold < pts[i - 1].threshold);
    }
  }
}

TEST_CASE("evaluate_run with oracle predictors") {
  const auto test = toy_test_set();
  const auto perfect = eval::evaluate_run([](const data::Sample& s) { return s.label ? 0.9 : 0.1; }, test);
  CHECK(*perfect.slice.accuracy == 1.0);
  CHECK(*perfect.patient.accuracy == 1.0);
  CHECK(*perfect.patient.tpr == 1.0);
  CHECK(*perfect.patient.tnr == 1.0);
  CHECK(*perfect.slice_auc == 1.0);
  CHECK(*perfect.patient_auc == 1.0);
  CHECK(perfect.ties == 0);
  CHECK(perfect.slices.size() == 6);
  CHECK(perfect.patients.size() == 3);

  const auto favorable = eval::evaluate_run([](const data::Sample&) { return 0.8; }, test);
  CHECK(*favorable.patient.tpr == 1.0);
  CHECK(*favorable.patient.tnr == 0.0);
  CHECK(*favorable.slice_auc == 0.5);

  CHECK_THROWS(eval::evaluate_run([](const data::Sample&) { return 1.5; }, test));
}

TEST_CASE("report and csv files") {
  const auto dir = std::filesystem::temp_directory_path() / "gcsich_eval_test";
  std::filesystem::create_directories(dir);
  std::vector<eval::SlicePrediction> rows = {
      {"p1", "a.png", 1, 0.75, 1}, {"p1", "b.png", 1, 0.25, 0}, {"p2", "c.png", 0, 0.1, 0}};
  eval::write_predictions_csv(dir / "pred.csv", rows);
  const auto back = eval::read_predictions_csv(dir / "pred.csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].patient_id == rows[i].patient_id);
    CHECK(back[i].slice == rows[i].slice);
    CHECK(back[i].score == rows[i].score);
    CHECK(back[i].prediction == rows[i].prediction);
  }
  const auto report = eval::evaluate_predictions(back);
  CHECK(report.ties == 1);
  eval::write_report(dir / "report.json", report);
  eval::write_roc_csv(dir / "roc.csv", report.roc);
  std::ifstream in(dir / "report.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["patient_count"] == 2);
  CHECK(j["roc"][0]["threshold"].is_null());
  std::ifstream roc(dir / "roc.csv");
  std::string header;
  std::getline(roc, header);
  CHECK(header == "fpr,tpr,threshold");

  std::ofstream bad(dir / "bad.csv");
  bad << "p1,a.png,1,1.7\n";
  bad.close();
  CHECK_THROWS(eval::read_predictions_csv(dir / "bad.csv"));
  std::filesystem::remove_all(dir);
}
