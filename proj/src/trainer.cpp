#include "gcsich/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "gcsich/checkpoint.hpp"
#include "gcsich/evaluator.hpp"
#include "gcsich/ops.hpp"
#include "gcsich/rng.hpp"

namespace gcsich::train {

using num::Tensor;

Tensor cross_entropy(const Tensor& logits, int label, double weight) {
  if (label != 0 && label != 1) throw std::invalid_argument("cross_entropy: label must be 0 or 1");
  if (logits.shape() != num::Shape{2}) {
    throw std::invalid_argument("cross_entropy: expected 2 logits, got " + num::shape_string(logits.shape()));
  }
  const auto lp = num::element(num::log_softmax(logits, 0), static_cast<std::size_t>(label));
  return num::scale(lp, -weight);
}

AdamState make_adam(const std::vector<Tensor>& params, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != params[k].numel() || state.m[k].size() != params[k].numel()) {
      throw std::invalid_argument("adam_step: shape mismatch at parameter " + std::to_string(k));
    }
  }
  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto values = p.to_vector();
    auto& m = state.m[k];
    auto& v = state.v[k];
    const auto& g = grads[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      values[i] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
    }
    p.assign(values);
  }
}

void adam_step(const std::vector<Tensor>& params, AdamState& state) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    auto q = p;
    const auto g = q.grad();
    grads.emplace_back(g.begin(), g.end());
  }
  adam_step(params, grads, state);
}

void validate(const TrainConfig& c) {
  if (c.epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw std::invalid_argument("learning rate must be positive");
  if (c.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (c.eval_every == 0) throw std::invalid_argument("eval_every must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  num::RngStream rng(seed, "shuffle/epoch-" + std::to_string(epoch));
  rng.shuffle(order);
  return order;
}

double slice_accuracy(const net::FusionModel& model, const data::Dataset& samples, net::InputMode input) {
  if (samples.empty()) throw std::invalid_argument("slice_accuracy: empty dataset");
  std::size_t correct = 0;
  net::RunOptions run;
  run.input = input;
  num::NoGradGuard guard;
  for (const auto& s : samples) {
    const auto p = net::forward(s.image, s.gcs, model, run);
    correct += (p[1] > p[0] ? 1 : 0) == s.label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

namespace {

std::string csv_value(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

}  // namespace

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw TrainError("cannot write " + path.string());
  out << "epoch,train_loss,val_slice_acc,val_patient_acc,val_auc\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << csv_value(r.train_loss) << ',' << csv_value(r.val_slice_acc) << ','
        << csv_value(r.val_patient_acc) << ',' << csv_value(r.val_auc) << '\n';
  }
}

FitResult fit(const data::Dataset& train, const data::Dataset& val, const net::ModelConfig& model_config,
              const TrainConfig& config, const std::optional<std::filesystem::path>& out_dir) {
  validate(config);
  if (train.empty()) throw TrainError("training set is empty");
  std::size_t positives = 0;
  for (const auto& s : train) positives += s.label == 1 ? 1 : 0;
  if (positives == 0 || positives == train.size()) throw TrainError("training set holds a single class");

  auto mc = model_config;
  mc.dropout = config.dropout;
  FitResult result{net::init_model(mc, config.seed), {}, 0, std::nullopt, {}};
  auto& model = result.final_model;
  const auto params = model.params.tensors();
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  auto adam = make_adam(params, adam_cfg);

  double class_weight[2] = {1.0, 1.0};
  if (config.class_weighting) {
    const double n = static_cast<double>(train.size());
    class_weight[1] = n / (2.0 * static_cast<double>(positives));
    class_weight[0] = n / (2.0 * static_cast<double>(train.size() - positives));
  }

  result.best_model = {mc, model.params.clone()};
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), config.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      model.params.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const auto idx = order[k];
        const auto& s = train[idx];
        net::RunOptions run;
        run.mode = num::Mode::train;
        run.input = config.input;
        run.dropout_seed = config.seed;
        run.dropout_stream = "dropout/epoch-" + std::to_string(epoch) + "/sample-" + std::to_string(idx);
        try {
          num::GradTape tape;
          const auto t = net::forward_trace(s.image, s.gcs, model, run);
          const auto loss = cross_entropy(t.logits, s.label, class_weight[s.label]);
          loss_sum += loss.item();
          tape.backward(num::scale(loss, inv_batch));
        } catch (const num::NumericError& e) {
          throw TrainError("training diverged at epoch " + std::to_string(epoch) + ", sample " +
                           s.path.string() + ": " + e.what());
        }
      }
      try {
        adam_step(params, adam);
      } catch (const num::NumericError& e) {
        throw TrainError("training diverged at epoch " + std::to_string(epoch) + " (update): " + e.what());
      }
    }
    model.params.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    if (!std::isfinite(rec.train_loss)) {
      throw TrainError("training loss is not finite at epoch " + std::to_string(epoch));
    }
    if (!val.empty() && (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      const auto report = eval::evaluate_run(model, val, config.input);
      rec.val_slice_acc = report.slice.accuracy;
      rec.val_patient_acc = report.patient.accuracy;
      rec.val_auc = report.slice_auc;
      if (!result.best_val_patient_acc || *rec.val_patient_acc > *result.best_val_patient_acc) {
        result.best_val_patient_acc = rec.val_patient_acc;
        result.best_epoch = epoch;
        result.best_model = {mc, model.params.clone()};
      }
    }
    result.history.push_back(rec);
  }
  if (val.empty()) {
    result.best_epoch = config.epochs;
    result.best_model = {mc, model.params.clone()};
  }

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    net::save_checkpoint(*out_dir / "final.gich", model.params);
    net::save_checkpoint(*out_dir / "best.gich", result.best_model.params);
    write_history_csv(*out_dir / "history.csv", result.history);
  }
  return result;
}

}  // namespace gcsich::train
