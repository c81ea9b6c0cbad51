#include "gcsich/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gcsich::eval {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_label(int v, const char* what) {
  if (v != 0 && v != 1) throw std::invalid_argument(std::string(what) + " must be 0 or 1");
}

}  // namespace

ConfusionCounts count_confusion(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.size() != truths.size()) {
    throw std::invalid_argument("confusion: " + std::to_string(predictions.size()) +
                                " predictions vs " + std::to_string(truths.size()) + " truths");
  }
  if (predictions.empty()) throw std::invalid_argument("confusion: empty input");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    check_label(predictions[i], "prediction");
    check_label(truths[i], "truth");
    if (truths[i] == 1) {
      (predictions[i] == 1 ? c.tp : c.fn) += 1;
    } else {
      (predictions[i] == 1 ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

ConfusionMetrics metrics_from_counts(const ConfusionCounts& c) {
  ConfusionMetrics m;
  m.counts = c;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.tpr = ratio(c.tp, c.tp + c.fn);
  m.tnr = ratio(c.tn, c.tn + c.fp);
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

ConfusionMetrics confusion_metrics(std::span<const int> predictions, std::span<const int> truths) {
  return metrics_from_counts(count_confusion(predictions, truths));
}

VoteResult majority_vote(std::span<const int> slice_predictions) {
  if (slice_predictions.empty()) throw std::invalid_argument("patient_vote: patient without slices");
  std::size_t ones = 0;
  for (int p : slice_predictions) {
    check_label(p, "slice prediction");
    ones += static_cast<std::size_t>(p);
  }
  const std::size_t k = slice_predictions.size();
  return {2 * ones > k ? 1 : 0, 2 * ones == k};
}

std::vector<PatientPrediction> patient_vote(std::span<const SlicePrediction> slices) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const SlicePrediction*>> groups;
  for (const auto& s : slices) {
    auto& g = groups[s.patient_id];
    if (g.empty()) order.push_back(s.patient_id);
    g.push_back(&s);
  }
  std::vector<PatientPrediction> out;
  for (const auto& id : order) {
    const auto& g = groups[id];
    std::vector<int> votes;
    double score = 0.0;
    for (const auto* s : g) {
      if (s->truth != g.front()->truth) {
        throw std::invalid_argument("patient_vote: conflicting truths for patient " + id);
      }
      votes.push_back(s->prediction);
      score += s->score;
    }
    const auto v = majority_vote(votes);
    out.push_back({id, g.front()->truth, v.prediction, v.tie, g.size(), score / static_cast<double>(g.size())});
  }
  return out;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> truths) {
  if (scores.size() != truths.size()) throw std::invalid_argument("roc_auc: length mismatch");
  std::size_t pos = 0;
  for (int t : truths) {
    check_label(t, "truth");
    pos += static_cast<std::size_t>(t);
  }
  const std::size_t neg = truths.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc: truths contain a single class");
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("roc_auc: non-finite score");
  }

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double threshold = scores[idx[i]];
    for (; i < idx.size() && scores[idx[i]] == threshold; ++i) (truths[idx[i]] == 1 ? tp : fp) += 1;
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos), threshold});
  }
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return roc;
}

EvalReport evaluate_predictions(std::vector<SlicePrediction> slices) {
  if (slices.empty()) throw std::invalid_argument("evaluate: no slice predictions");
  EvalReport r;
  std::vector<int> preds, truths;
  std::vector<double> scores;
  for (const auto& s : slices) {
    preds.push_back(s.prediction);
    truths.push_back(s.truth);
    scores.push_back(s.score);
  }
  r.slice = confusion_metrics(preds, truths);
  r.patients = patient_vote(slices);
  std::vector<int> ppreds, ptruths;
  std::vector<double> pscores;
  for (const auto& p : r.patients) {
    ppreds.push_back(p.prediction);
    ptruths.push_back(p.truth);
    pscores.push_back(p.score);
    r.ties += p.tie ? 1 : 0;
  }
  r.patient = confusion_metrics(ppreds, ptruths);
  const auto both = [](const std::vector<int>& t) {
    return std::count(t.begin(), t.end(), 1) > 0 && std::count(t.begin(), t.end(), 0) > 0;
  };
  if (both(truths)) {
    r.roc = roc_auc(scores, truths);
    r.slice_auc = r.roc.auc;
  }
  if (both(ptruths)) r.patient_auc = roc_auc(pscores, ptruths).auc;
  r.slices = std::move(slices);
  return r;
}

std::vector<SlicePrediction> predict_slices(const Predictor& predictor, const data::Dataset& test) {
  std::vector<SlicePrediction> out;
  out.reserve(test.size());
  for (const auto& s : test) {
    const double p = predictor(s);
    if (!(p >= 0.0 && p <= 1.0)) throw std::runtime_error("predictor returned a probability outside [0, 1]");
    out.push_back({s.patient_id, s.path.filename().string(), s.label, p, p > 0.5 ? 1 : 0});
  }
  return out;
}

EvalReport evaluate_run(const Predictor& predictor, const data::Dataset& test) {
  return evaluate_predictions(predict_slices(predictor, test));
}

Predictor model_predictor(const net::FusionModel& model, net::InputMode input) {
  return [&model, input](const data::Sample& s) {
    net::RunOptions run;
    run.input = input;
    num::NoGradGuard guard;
    return net::forward(s.image, s.gcs, model, run)[1];
  };
}

EvalReport evaluate_run(const net::FusionModel& model, const data::Dataset& test, net::InputMode input) {
  return evaluate_run(model_predictor(model, input), test);
}

nlohmann::json to_json(const ConfusionMetrics& m) {
  return {{"tp", m.counts.tp},       {"fp", m.counts.fp},   {"tn", m.counts.tn},
          {"fn", m.counts.fn},       {"n", m.counts.total()}, {"accuracy", opt(m.accuracy)},
          {"tpr", opt(m.tpr)},       {"tnr", opt(m.tnr)},   {"f1", opt(m.f1)}};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json roc = nlohmann::json::array();
  for (const auto& p : r.roc.points) {
    roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr},
                   {"threshold", std::isinf(p.threshold) ? nlohmann::json(nullptr) : nlohmann::json(p.threshold)}});
  }
  nlohmann::json patients = nlohmann::json::array();
  for (const auto& p : r.patients) {
    patients.push_back({{"patient_id", p.patient_id}, {"truth", p.truth}, {"prediction", p.prediction},
                        {"tie", p.tie}, {"slices", p.slices}, {"score", p.score}});
  }
  return {{"slice", to_json(r.slice)},
          {"patient", to_json(r.patient)},
          {"ties", r.ties},
          {"slice_auc", opt(r.slice_auc)},
          {"patient_auc", opt(r.patient_auc)},
          {"slice_count", r.slices.size()},
          {"patient_count", r.patients.size()},
          {"roc", roc},
          {"patients", patients}};
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(report).dump(2) << '\n';
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "fpr,tpr,threshold\n";
  for (const auto& p : roc.points) out << fmt(p.fpr) << ',' << fmt(p.tpr) << ',' << fmt(p.threshold) << '\n';
}

std::vector<SlicePrediction> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<SlicePrediction> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (lineno == 1 && !f.empty() && f[0] == "patient_id") continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 4) throw std::runtime_error(where + ": expected patient_id,slice,truth,score");
    SlicePrediction s;
    s.patient_id = f[0];
    s.slice = f[1];
    try {
      std::size_t used = 0;
      s.truth = std::stoi(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("truth");
      s.score = std::stod(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument("score");
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": unparsable truth or score");
    }
    if (s.truth != 0 && s.truth != 1) throw std::runtime_error(where + ": truth must be 0 or 1");
    if (!(s.score >= 0.0 && s.score <= 1.0)) throw std::runtime_error(where + ": score outside [0, 1]");
    s.prediction = s.score > 0.5 ? 1 : 0;
    rows.push_back(std::move(s));
  }
  return rows;
}

void write_predictions_csv(const std::filesystem::path& path, std::span<const SlicePrediction> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "patient_id,slice,truth,score\n";
  for (const auto& r : rows) out << r.patient_id << ',' << r.slice << ',' << r.truth << ',' << fmt(r.score) << '\n';
}

}  // namespace gcsich::eval
