// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: test_acceptance [name-substring ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attention_oracle.hpp"
#include "gcsich/checkpoint.hpp"
#include "gcsich/cli.hpp"
#include "gcsich/cohort.hpp"
#include "gcsich/ctprep.hpp"
#include "gcsich/evaluator.hpp"
#include "gcsich/explain.hpp"
#include "gcsich/fusionnet.hpp"
#include "gcsich/gradcheck.hpp"
#include "gcsich/synth.hpp"
#include "gcsich/trainer.hpp"
#include "op_cases.hpp"
#include "test_support.hpp"

using namespace gcsich;
using num::DType;
using num::Tensor;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

Tensor nll(const Tensor& logits, std::size_t label) {
  return num::scale(num::element(num::log_softmax(logits, 0), label), -1.0);
}

Tensor random_image(std::uint64_t seed, std::size_t size, DType dtype) {
  num::RngStream rng(seed, "acceptance/image");
  return testing::random_tensor(rng, {1, size, size}, -1.0, 1.0, dtype);
}

net::ModelConfig f64_tiny() {
  auto c = net::ModelConfig::tiny();
  c.dtype = DType::f64;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  double op_worst = 0.0;
  std::size_t op_checks = 0;
  for (const auto& c : testing::op_cases()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto rep = testing::check_op_case(c, seed);
      o.require(rep.passed && rep.max_rel_error < 1e-5, c.name + " seed " + std::to_string(seed) + ": " + rep.summary());
      op_worst = std::max(op_worst, rep.max_rel_error);
      ++op_checks;
    }
  }
  double model_worst = 0.0;
  for (auto layout : {net::FusionLayout::single_token, net::FusionLayout::two_token}) {
    for (std::uint64_t seed : {41, 42, 43}) {
      auto cfg = f64_tiny();
      cfg.fusion = layout;
      const auto m = net::init_model(cfg, seed);
      const auto x = random_image(seed, cfg.input_size, DType::f64);
      net::RunOptions run;
      run.mode = num::Mode::train;
      run.dropout_seed = seed;
      num::GradCheckOptions opts;
      opts.eps = 1e-2;
      opts.max_per_input = 8;
      opts.seed = 99 + seed;
      opts.extrapolate = true;
      const int gcs = 3 + static_cast<int>(seed % 13);
      const auto rep = num::grad_check(
          [&] { return nll(net::forward_trace(x, gcs, m, run).logits, seed % 2); }, m.params.tensors(), opts);
      o.require(rep.passed && rep.max_rel_error < 1e-5, net::to_string(layout) + ": " + rep.summary());
      model_worst = std::max(model_worst, rep.max_rel_error);
    }
  }
  const double dt = seconds_since(t0);
  o.require(dt < 120.0, "runtime under 2 min");
  o.note(fmt("%zu op checks, worst %.2e; full model worst %.2e (< 1e-5); %.1f s (< 120 s)", op_checks, op_worst,
             model_worst, dt));
  return o;
}

Outcome attention_degeneracy() {
  Outcome o;
  double worst_shift = 0.0;
  for (auto dtype : {DType::f64, DType::f32}) {
    for (bool block : {false, true}) {
      auto cfg = net::ModelConfig::tiny();
      cfg.dtype = dtype;
      cfg.encoder_block = block;
      auto m = net::init_model(cfg, 11);
      const auto x = random_image(3, cfg.input_size, dtype);
      const auto before = net::forward_trace(x, 8, m);
      num::RngStream rng(4, "acceptance/perturb");
      for (const char* w : {"attn.w_q", "attn.w_k"}) {
        auto t = m.params.at(w);
        auto v = t.to_vector();
        for (auto& e : v) e += 10.0 * (rng.uniform() - 0.5);
        t.assign(v);
      }
      const auto after = net::forward_trace(x, 8, m);
      for (std::size_t i = 0; i < before.mixed.numel(); ++i)
        worst_shift = std::max(worst_shift, std::abs(before.mixed[i] - after.mixed[i]));
      for (std::size_t i = 0; i < 2; ++i)
        worst_shift = std::max(worst_shift, std::abs(before.probabilities[i] - after.probabilities[i]));
    }
  }
  o.require(worst_shift <= 1e-6, "single-token output invariant to query/key weights");

  bool zero_grad = true;
  {
    const auto m = net::init_model(f64_tiny(), 31);
    num::GradTape tape;
    tape.backward(nll(net::forward_trace(random_image(6, 32, DType::f64), 12, m).logits, 1));
    for (const char* w : {"attn.w_q", "attn.w_k"})
      for (double g : m.params.at(w).grad()) zero_grad = zero_grad && g == 0.0;
  }
  o.require(zero_grad, "query/key gradients exactly zero");

  double oracle_err = 0.0;
  const std::size_t d = net::kModelWidth, heads = 16;
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    num::RngStream rng(trial, "acceptance/two-token");
    const auto x = testing::random_tensor(rng, {2, d});
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    const auto wq = testing::random_tensor(rng, {d, d}, -s, s), wk = testing::random_tensor(rng, {d, d}, -s, s),
               wv = testing::random_tensor(rng, {d, d}, -s, s), wo = testing::random_tensor(rng, {d, d}, -s, s);
    const auto got = net::multi_head_attention(x, wq, wk, wv, wo, heads);
    const auto want =
        testing::attention_oracle(x.to_vector(), 2, d, wq.to_vector(), wk.to_vector(), wv.to_vector(), wo.to_vector(), heads);
    for (std::size_t i = 0; i < want.size(); ++i) oracle_err = std::max(oracle_err, std::abs(got[i] - want[i]));
  }
  // The tiny model's own two-token attention, with its weights and real tokens.
  {
    auto cfg = f64_tiny();
    cfg.fusion = net::FusionLayout::two_token;
    cfg.encoder_block = false;
    const auto m = net::init_model(cfg, 19);
    const auto tokens = net::forward_trace(random_image(9, 32, DType::f64), 6, m).tokens;
    const auto got = net::attention_fuse(tokens, m);
    const auto w = [&](const char* name) { return m.params.at(name).to_vector(); };
    const auto want = testing::attention_oracle(tokens.to_vector(), tokens.dim(0), d, w("attn.w_q"), w("attn.w_k"),
                                                w("attn.w_v"), w("attn.w_o"), cfg.heads);
    o.require(tokens.dim(0) == 2, "two tokens");
    for (std::size_t i = 0; i < want.size(); ++i) oracle_err = std::max(oracle_err, std::abs(got[i] - want[i]));
  }
  o.require(oracle_err <= 1e-9, "two-token output matches loop oracle");
  o.note(fmt("max output shift %.2e (<= 1e-6); query/key grads %s; two-token oracle err %.2e (<= 1e-9)", worst_shift,
             zero_grad ? "all zero" : "NONZERO", oracle_err));
  return o;
}

Outcome dimension_chain() {
  Outcome o;
  const auto t0 = Clock::now();
  o.require(net::kImageFeatures == 128 && net::kGcsFeatures == 64 && net::kModelWidth == 192, "128 + 64 = 192");
  for (const auto& [name, cfg] : {std::pair{"tiny", net::ModelConfig::tiny()},
                                  std::pair{"paper-scale", net::ModelConfig::paper_scale()}}) {
    o.require(cfg.heads == 16 && net::kModelWidth / cfg.heads == 12, std::string(name) + " 16 heads of 12");
    const auto m = net::init_model(cfg, 5);
    const auto t = net::forward_trace(random_image(1, cfg.input_size, cfg.dtype), 9, m);
    o.require(t.image_features.shape() == num::Shape{128}, std::string(name) + " image features 128");
    o.require(t.gcs_features.shape() == num::Shape{64}, std::string(name) + " gcs features 64");
    o.require(t.tokens.shape() == num::Shape{1, 192}, std::string(name) + " fused token 1x192");
    o.require(t.mixed.shape() == num::Shape{1, 192}, std::string(name) + " attention output 1x192");
    o.require(t.logits.shape() == num::Shape{2}, std::string(name) + " logits 2");

    const auto bytes = net::encode_checkpoint(m.params);
    const auto back = net::decode_checkpoint(bytes);
    bool exact = back.size() == m.params.size();
    for (std::size_t i = 0; exact && i < back.size(); ++i) {
      exact = back.entries()[i].first == m.params.entries()[i].first &&
              back.entries()[i].second.dtype() == m.params.entries()[i].second.dtype() &&
              testing::bitwise_equal(back.entries()[i].second, m.params.entries()[i].second);
    }
    exact = exact && net::encode_checkpoint(back) == bytes;
    o.require(exact, std::string(name) + " checkpoint round-trip bit-exact");
    o.note(fmt("%s: input %zu, %zu params, checkpoint %zu bytes", name, cfg.input_size, m.params.parameter_count(),
               bytes.size()));
  }
  o.note(fmt("128 + 64 -> 192 = 16 x 12 -> 2; %.1f s", seconds_since(t0)));
  return o;
}

Outcome evaluator_oracles() {
  Outcome o;
  double auc_err = 0.0;
  for (std::uint64_t inst = 0; inst < 200; ++inst) {
    num::RngStream rng(inst, "acceptance/auc");
    const auto n = static_cast<std::size_t>(rng.between(2, 60));
    std::vector<double> scores(n);
    std::vector<int> truths(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.between(0, 10)) / 10.0;  // coarse grid forces ties
      truths[i] = rng.uniform() < 0.5;
    }
    truths[0] = 0;
    truths[1] = 1;
    double pairs = 0.0, wins = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (truths[i] == 1 && truths[j] == 0) {
          pairs += 1.0;
          wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
        }
    auc_err = std::max(auc_err, std::abs(eval::roc_auc(scores, truths).auc - wins / pairs));
  }
  o.require(auc_err <= 1e-9, "AUC equals pair counting");

  std::size_t vote_cases = 0;
  bool vote_ok = true;
  for (std::size_t k = 1; k <= 6; ++k) {
    for (std::size_t bits = 0; bits < (1u << k); ++bits) {
      std::vector<int> v(k);
      std::size_t ones = 0;
      for (std::size_t i = 0; i < k; ++i) ones += (v[i] = (bits >> i) & 1u);
      const auto r = eval::majority_vote(v);
      vote_ok = vote_ok && r.prediction == (2 * ones > k ? 1 : 0) && r.tie == (2 * ones == k);
      ++vote_cases;
    }
  }
  o.require(vote_ok, "vote matches exhaustive oracle");

  const std::vector<int> pred{1, 1, 0, 0, 0, 0}, truth{1, 1, 1, 0, 0, 0};
  const auto m = eval::confusion_metrics(pred, truth);
  const bool counts = m.counts == eval::ConfusionCounts{2, 0, 3, 1};
  o.require(counts, "confusion counts tp 2 fp 0 tn 3 fn 1");
  o.require(m.accuracy && *m.accuracy == 5.0 / 6.0, "accuracy exactly 5/6");
  o.require(m.f1 && *m.f1 == 0.8, "f1 exactly 0.8");
  o.note(fmt("AUC max err %.2e over 200 instances; %zu vote patterns; acc %.17g, f1 %.17g", auc_err, vote_cases,
             m.accuracy.value_or(-1.0), m.f1.value_or(-1.0)));
  return o;
}

Outcome preprocessing_phantom() {
  Outcome o;
  std::size_t ring = 0, ring_removed = 0, brain = 0, brain_kept = 0, slices = 0;
  bool idempotent = true;
  double worst_mu = 0.0, worst_sigma = 0.0;
  for (auto rule : {synth::LabelRule::gcs_only, synth::LabelRule::blob_only, synth::LabelRule::mixed}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      synth::PhantomSpec spec;
      spec.rule = rule;
      spec.seed = seed;
      const auto patients = synth::simulate(spec);
      for (const auto& p : patients) {
        for (const auto& sl : p.slices) {
          const auto stripped = prep::strip_nonbrain(sl.image, {});
          idempotent = idempotent && prep::strip_nonbrain(stripped, {}).pixels == stripped.pixels;
          for (std::size_t i = 0; i < sl.image.size(); ++i) {
            if (sl.ring.bits[i]) {
              ++ring;
              ring_removed += stripped.pixels[i] == 0.0;
            }
            if (sl.brain.bits[i]) {
              ++brain;
              brain_kept += stripped.pixels[i] == sl.image.pixels[i];
            }
          }
          ++slices;
        }
      }

      // Standardized tissue of the training fold, read back from the samples.
      const auto folds = synth::phantom_folds(patients, 0.8, seed, DType::f64);
      double total = 0.0, sq = 0.0;
      std::size_t n = 0;
      for (const auto& s : folds.train) {
        const auto& p = *std::find_if(patients.begin(), patients.end(),
                                      [&](const auto& q) { return q.patient_id == s.patient_id; });
        const auto stem = s.path.stem().string();
        const auto k = std::stoul(stem.substr(stem.rfind("_s") + 2));
        const auto stripped = prep::strip_nonbrain(p.slices.at(k).image, {});
        for (std::size_t i = 0; i < stripped.size(); ++i) {
          if (stripped.pixels[i] == 0.0) continue;
          total += s.image[i];
          sq += s.image[i] * s.image[i];
          ++n;
        }
      }
      const double mu = total / static_cast<double>(n);
      const double sigma = std::sqrt(sq / static_cast<double>(n) - mu * mu);
      worst_mu = std::max(worst_mu, std::abs(mu));
      worst_sigma = std::max(worst_sigma, std::abs(sigma - 1.0));
    }
  }
  const double removed = static_cast<double>(ring_removed) / static_cast<double>(ring);
  const double kept = static_cast<double>(brain_kept) / static_cast<double>(brain);
  o.require(ring_removed == ring, "ring fully removed");
  o.require(kept >= 0.99, "brain preserved");
  o.require(idempotent, "strip idempotent");
  o.require(worst_mu < 1e-3 && worst_sigma < 1e-3, "training-fold tissue standardized");
  o.note(fmt("%zu slices: ring removed %.4f%%, brain kept %.4f%% (>= 99%%), idempotent %s; tissue |mu| %.1e, "
             "|sigma-1| %.1e (< 1e-3)",
             slices, 100.0 * removed, 100.0 * kept, idempotent ? "yes" : "NO", worst_mu, worst_sigma));
  return o;
}

Outcome split_hygiene() {
  Outcome o;
  synth::PhantomSpec spec;
  spec.patients = 57;
  spec.min_slices = 1;
  spec.max_slices = 9;
  spec.seed = 12;
  const auto cohort = synth::phantom_records(synth::simulate(spec));
  std::size_t total_slices = 0;
  for (const auto& p : cohort) total_slices += p.slice_paths.size();

  std::size_t crossings = 0, bad_counts = 0, plans = 0;
  auto check = [&](const cohort::SplitPlan& plan) {
    const std::set<std::string> train(plan.train_ids.begin(), plan.train_ids.end());
    const std::set<std::string> test(plan.test_ids.begin(), plan.test_ids.end());
    for (const auto& id : test) crossings += train.count(id);
    const auto folds = cohort::expand_slices(plan, cohort, {}, false);
    for (const auto& s : folds.test) crossings += train.count(s.patient_id);
    for (const auto& s : folds.train) crossings += test.count(s.patient_id);
    std::size_t want_train = 0, want_test = 0;
    for (const auto& p : cohort) (train.count(p.patient_id) ? want_train : want_test) += p.slice_paths.size();
    bad_counts += train.size() + test.size() != cohort.size() || folds.train.size() != want_train ||
                  folds.test.size() != want_test || folds.train.size() + folds.test.size() != total_slices;
    ++plans;
  };
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    check(cohort::split_patients(cohort, 0.8, seed));
    std::map<std::string, int> tested;
    for (const auto& plan : cohort::kfold_patients(cohort, 5, seed)) {
      check(plan);
      for (const auto& id : plan.test_ids) ++tested[id];
    }
    bad_counts += tested.size() != cohort.size();
    for (const auto& [id, n] : tested) bad_counts += n != 1;
  }
  o.require(crossings == 0, "no patient crosses folds");
  o.require(bad_counts == 0, "slice and patient counts sum");
  o.note(fmt("%zu plans over 100 seeds (random 80/20 and 5-fold); %zu crossings; %zu count mismatches", plans,
             crossings, bad_counts));
  return o;
}

// Stratified 5-fold patient cross-validation; every patient is tested once.
// Returns pooled patient accuracy.
double cv_patient_accuracy(synth::LabelRule rule, std::uint64_t seed, net::InputMode mode) {
  synth::PhantomSpec spec;
  spec.rule = rule;
  spec.seed = seed;
  const auto patients = synth::simulate(spec);
  std::size_t correct = 0, total = 0;
  for (const auto& plan : cohort::kfold_patients(synth::phantom_records(patients), 5, seed)) {
    const auto folds = synth::phantom_folds(patients, plan, DType::f32);
    train::TrainConfig c;
    c.epochs = 15;
    c.lr = 1e-3;
    c.batch_size = 32;
    c.seed = seed;
    c.input = mode;
    const auto r = train::fit(folds.train, {}, net::ModelConfig::tiny(), c);
    for (const auto& p : eval::evaluate_run(r.final_model, folds.test, mode).patients) {
      correct += p.prediction == p.truth;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

double mean_accuracy(synth::LabelRule rule, net::InputMode mode, std::string& per_seed) {
  double sum = 0.0;
  per_seed.clear();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const double a = cv_patient_accuracy(rule, seed, mode);
    per_seed += fmt("%s%.3f", seed ? " " : "", a);
    sum += a;
  }
  return sum / 5.0;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// The time budget applies to one mode's full protocol, in process CPU time.
Outcome end_to_end_gcs_rule() {
  Outcome o;
  std::string fs_seeds, is_seeds;
  const double c0 = cpu_seconds();
  const double fusion = mean_accuracy(synth::LabelRule::gcs_only, net::InputMode::fusion, fs_seeds);
  const double c1 = cpu_seconds();
  const double image = mean_accuracy(synth::LabelRule::gcs_only, net::InputMode::image_only, is_seeds);
  const double c2 = cpu_seconds();
  o.require(fusion >= 0.90, "fusion >= 0.90");
  o.require(image <= 0.65, "image-only <= 0.65");
  o.require(c1 - c0 < 300.0 && c2 - c1 < 300.0, "under 5 min CPU per mode");
  o.note(fmt("fusion %.3f [%s] (>= 0.90); image-only %.3f [%s] (<= 0.65); CPU fusion %.1f s, image-only %.1f s "
             "(< 300 s each)",
             fusion, fs_seeds.c_str(), image, is_seeds.c_str(), c1 - c0, c2 - c1));
  return o;
}

Outcome end_to_end_mixed_rule() {
  Outcome o;
  const auto t0 = Clock::now();
  std::string f, i, g;
  const double fusion = mean_accuracy(synth::LabelRule::mixed, net::InputMode::fusion, f);
  const double image = mean_accuracy(synth::LabelRule::mixed, net::InputMode::image_only, i);
  const double gcs = mean_accuracy(synth::LabelRule::mixed, net::InputMode::gcs_only, g);
  o.require(fusion >= image, "fusion >= image-only");
  o.require(fusion >= gcs, "fusion >= gcs-only");
  o.note(fmt("fusion %.3f [%s]; image-only %.3f [%s]; gcs-only %.3f [%s]; %.1f s", fusion, f.c_str(), image, i.c_str(),
             gcs, g.c_str(), seconds_since(t0)));
  return o;
}

Outcome overfit() {
  Outcome o;
  synth::PhantomSpec spec;
  spec.patients = 8;
  spec.min_slices = 1;
  spec.max_slices = 1;
  spec.seed = 1;
  const auto patients = synth::simulate(spec);
  auto folds = synth::phantom_folds(patients, 0.75, 1, DType::f32);
  data::Dataset all = folds.train;
  all.insert(all.end(), folds.test.begin(), folds.test.end());
  train::TrainConfig c;
  c.epochs = 200;
  c.lr = 1e-3;
  c.batch_size = 8;
  c.dropout = 0.0;
  const auto r = train::fit(all, all, net::ModelConfig::tiny(), c);
  std::size_t first = 0;
  for (const auto& e : r.history)
    if (!first && e.val_slice_acc && *e.val_slice_acc == 1.0) first = e.epoch;
  const double acc = train::slice_accuracy(r.final_model, all, net::InputMode::fusion);
  o.require(all.size() == 8, "eight slices");
  o.require(first != 0 && acc == 1.0, "100% training accuracy within 200 epochs");
  o.note(fmt("%zu slices; 100%% first reached at epoch %zu; final accuracy %.3f; loss %.3g -> %.3g", all.size(), first,
             acc, r.history.front().train_loss, r.history.back().train_loss));
  return o;
}

Outcome saliency() {
  Outcome o;
  synth::PhantomSpec spec;
  spec.patients = 6;
  spec.seed = 2;
  spec.rule = synth::LabelRule::blob_only;
  const auto folds = synth::phantom_folds(synth::simulate(spec), 0.5, 2, DType::f32);
  const auto model = net::init_model(net::ModelConfig::tiny(), 7);
  auto flat = net::FusionModel{model.config, model.params.clone()};
  auto head_w = flat.params.at("head.fc.w");
  head_w.assign(std::vector<double>(head_w.numel(), 0.0));

  std::size_t maps = 0, exact = 0, zero = 0, in_range = 0, determ = 0, live = 0, seed_differs = 0, checked_zero = 0;
  auto unit = [](const explain::SaliencyMap& m) {
    return std::all_of(m.values.begin(), m.values.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  };
  auto all_zero = [](const explain::SaliencyMap& m) {
    return std::all_of(m.values.begin(), m.values.end(), [](double v) { return v == 0.0; });
  };
  for (const auto& s : folds.test) {
    const auto cam = explain::fusion_cam_model(model, s.gcs);
    const auto flat_cam = explain::fusion_cam_model(flat, s.gcs);
    for (int target : {0, 1}) {
      const auto base = explain::grad_cam(cam, s.image, target);
      const auto one = explain::smooth_grad_cam(cam, s.image, target, {1, 0.0, 0});
      const auto a = explain::smooth_grad_cam(cam, s.image, target, {6, 0.1, 21});
      const auto b = explain::smooth_grad_cam(cam, s.image, target, {6, 0.1, 21});
      const auto c = explain::smooth_grad_cam(cam, s.image, target, {6, 0.1, 22});
      exact += one == base;
      in_range += unit(base) && unit(a) && unit(c);
      determ += a == b;
      // An all-zero map stays zero under any noise draw.
      if (a.max() > 0.0) {
        ++live;
        seed_differs += a != c;
      }
      ++maps;
      zero += all_zero(explain::grad_cam(flat_cam, s.image, target)) &&
              all_zero(explain::smooth_grad_cam(flat_cam, s.image, target, {4, 0.1, 3}));
      ++checked_zero;
    }
  }
  o.require(maps > 0 && exact == maps, "n=1, sigma=0 equals the plain map pixel-exact");
  o.require(zero == checked_zero, "constant score gives zero maps");
  o.require(in_range == maps, "maps in [0, 1]");
  o.require(determ == maps, "seeded maps reproducible");
  o.require(seed_differs == live, "another seed changes a nonzero map");
  o.note(fmt("%zu slice/class pairs: exact %zu, zero-map %zu, in range %zu, reproducible %zu, seed-sensitive %zu of %zu nonzero",
             maps, exact, zero, in_range, determ, seed_differs, live));
  return o;
}

Outcome determinism() {
  Outcome o;
  const auto base = fs::temp_directory_path() / "gcsich_acceptance_determinism";
  fs::remove_all(base);
  const auto p = [&](const char* name) { return (base / name).string(); };
  auto run = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "gcsich");
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    if (code != 0) o.require(false, args[1] + ": " + err.str());
    return code == 0;
  };
  {
    fs::create_directories(base);
    std::ofstream cfg(base / "run.toml");
    cfg << "[run]\nseed = 5\n\n[train]\nepochs = 3\nlr = 1e-3\n\n[model]\ndtype = \"f64\"\n";
  }
  bool ok = run({"synth", "--config", p("run.toml"), "--out", p("raw")}) &&
            run({"prep", "--config", p("run.toml"), "--manifest", p("raw/manifest.jsonl"), "--out", p("prep")});
  for (const char* r : {"a", "b"}) {
    const std::string run_dir = std::string("run_") + r, eval_dir = std::string("eval_") + r;
    ok = ok &&
         run({"train", "--config", p("run.toml"), "--manifest", p("prep/manifest.jsonl"), "--out", p(run_dir.c_str())}) &&
         run({"eval", "--config", p("run.toml"), "--run", p(run_dir.c_str()), "--out", p(eval_dir.c_str())});
  }
  if (ok) {
    const auto a = slurp(base / "eval_a" / "metrics.json"), b = slurp(base / "eval_b" / "metrics.json");
    o.require(!a.empty() && a == b, "metrics JSON byte-identical");
    o.require(slurp(base / "run_a" / "final.gich") == slurp(base / "run_b" / "final.gich"), "checkpoints identical");
    o.note(fmt("two f64 runs with seed 5: metrics.json %zu bytes, %s", a.size(), a == b ? "identical" : "DIFFERENT"));
  }
  fs::remove_all(base);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"attention degeneracy", attention_degeneracy},
      {"dimension chain and checkpoint", dimension_chain},
      {"evaluator oracles", evaluator_oracles},
      {"preprocessing phantom", preprocessing_phantom},
      {"split hygiene", split_hygiene},
      {"end-to-end gcs-driven phantom", end_to_end_gcs_rule},
      {"end-to-end mixed phantom", end_to_end_mixed_rule},
      {"overfit eight slices", overfit},
      {"saliency", saliency},
      {"determinism", determinism},
  };
  const std::vector<std::string> filters(argv + 1, argv + argc);
  int failed = 0, ran = 0;
  for (const auto& [name, check] : criteria) {
    if (!filters.empty() &&
        std::none_of(filters.begin(), filters.end(), [&](const auto& f) { return name.find(f) != std::string::npos; }))
      continue;
    Outcome out;
    try {
      out = check();
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    ++ran;
    failed += !out.pass;
    std::printf("%s  %s: %s\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 && ran > 0 ? 0 : 1;
}
