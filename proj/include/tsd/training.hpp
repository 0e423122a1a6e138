#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "tsd/checkpoint.hpp"
#include "tsd/eval.hpp"

namespace tsd {

enum class LrSchedule { constant, one_cycle };

inline std::string schedule_name(LrSchedule s) {
  return s == LrSchedule::constant ? "constant" : "one_cycle";
}

inline LrSchedule schedule_from_name(const std::string& name) {
  if (name == "constant") return LrSchedule::constant;
  if (name == "one_cycle") return LrSchedule::one_cycle;
  throw ConfigError("unknown scheduler '" + name + "' (constant|one_cycle)");
}

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 64;
  long epochs = 15000;
  long max_steps = 0;  // 0 = uncapped; otherwise stop after this many optimizer steps
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LrSchedule schedule = LrSchedule::constant;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train config: learning rate must be positive");
    if (batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (max_steps < 0) throw ConfigError("train config: max_steps must be >= 0");
  }
};

template <typename S>
struct TrainState {
  std::vector<VecX<S>> m1, m2;  // Adam moments, one buffer per parameter
  long step = 0;
  double best_val_rmse = HUGE_VAL;
  long best_epoch = -1;
};

// One-cycle shape: linear ramp to max_lr over the first 30% of steps, then
// cosine decay down to max_lr/25 at the final step.
inline double one_cycle_lr(long step, long total_steps, double max_lr) {
  if (step < 0 || step >= total_steps)
    throw UsageError("one_cycle_lr: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(total_steps) + ")");
  const long peak = std::lround(0.3 * double(total_steps));
  if (step <= peak && peak > 0) return max_lr * double(step) / double(peak);
  const double min_lr = max_lr / 25.0;
  if (total_steps - 1 <= peak) return min_lr;
  const double progress = double(step - peak) / double(total_steps - 1 - peak);
  return min_lr + (max_lr - min_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

// Sum over the four components of (1/M) ||truth - pred||^2.
template <typename S>
Tensor<S> decomposition_loss(Tape<S>& tape, const std::array<Tensor<S>, 4>& pred,
                             const std::array<VecX<S>, 4>& truth) {
  Tensor<S> loss;
  for (int i = 0; i < 4; ++i) {
    const auto& p = pred[std::size_t(i)];
    const auto& t = truth[std::size_t(i)];
    if (p.rank() != 1 || p.shape()[0] != t.size())
      throw UsageError("decomposition_loss: component " + std::string(kComponentNames[std::size_t(i)]) +
                       " has length " + std::to_string(p.size()) + ", truth has " +
                       std::to_string(t.size()));
    auto term = scale(sum_squares(sub(p, tape.constant(t, {int(t.size())}))), S(1) / S(t.size()));
    loss = i == 0 ? term : add(loss, term);
  }
  return loss;
}

// Bias-corrected Adam update, in place. Parameters whose gradient buffer is
// empty (never touched in the sweep) are skipped.
template <typename S>
void adam_step(ModelParams<S>& params, const std::vector<VecX<S>>& grads, TrainState<S>& state,
               const TrainConfig& cfg, double lr) {
  if (grads.size() != params.size())
    throw UsageError("adam_step: gradient buffer count does not match parameters");
  if (state.m1.empty()) {
    state.m1.resize(params.size());
    state.m2.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m1[i] = VecX<S>::Zero(params.values[i].size());
      state.m2[i] = VecX<S>::Zero(params.values[i].size());
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  const S b1 = S(cfg.beta1), b2 = S(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() == 0) continue;
    if (!all_finite(grads[i]))
      throw NumericalError("adam_step: non-finite gradient in parameter '" + params.names[i] +
                           "' at step " + std::to_string(state.step));
    auto& m1 = state.m1[i];
    auto& m2 = state.m2[i];
    m1 = b1 * m1 + (S(1) - b1) * grads[i];
    m2 = (b2 * m2.array() + (S(1) - b2) * grads[i].array().square()).matrix();
    params.values[i].array() -=
        S(lr) * (m1.array() / S(bc1)) / ((m2.array() / S(bc2)).sqrt() + S(cfg.eps));
  }
}

struct EpochMetrics {
  long epoch = 0;
  double train_loss = 0.0;
  std::array<double, 4> val_rmse{};
  double val_avg = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  long epochs_run = 0;
  long steps = 0;
  double best_val_avg = HUGE_VAL;
  long best_epoch = -1;
  std::vector<EpochMetrics> history;
};

// Epoch loop: seeded shuffle, fixed-size mini-batches (last partial batch
// dropped), per-sample tapes with gradients averaged over the batch, one Adam
// step per batch. After each epoch the validation set is scored and the
// checkpoint is overwritten iff the average component RMSE improved. Metrics
// stream to `log_path` as CSV.
template <typename S>
TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<DecomposedSample>& train_set,
                  const std::vector<DecomposedSample>& val_set, const std::string& ckpt_path,
                  const std::string& log_path) {
  mcfg.validate();
  tcfg.validate();
  if (train_set.empty() || val_set.empty())
    throw DataError("train: empty training or validation set");
  for (const auto* set : {&train_set, &val_set})
    if ((*set)[0].f.size() != mcfg.input_len)
      throw ConfigError("train: dataset signal length " + std::to_string((*set)[0].f.size()) +
                        " does not match the model input length " +
                        std::to_string(mcfg.input_len));
  const long steps_per_epoch = long(train_set.size()) / tcfg.batch_size;
  if (steps_per_epoch < 1)
    throw ConfigError("train: batch size " + std::to_string(tcfg.batch_size) +
                      " exceeds the training set (" + std::to_string(train_set.size()) + ")");

  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw DataError("train: cannot open metrics log '" + log_path + "'");
  log << "epoch,train_loss,rmse_c,rmse_s,rmse_o,rmse_n,rmse_avg,lr\n";

  Rng init_rng(derive_seed(tcfg.seed, 0));
  ModelParams<S> params = init_params<S>(mcfg, init_rng);
  TrainState<S> state;

  long total_steps = tcfg.epochs * steps_per_epoch;
  if (tcfg.max_steps > 0) total_steps = std::min(total_steps, tcfg.max_steps);

  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::vector<VecX<S>> grad_accum(params.size());

  TrainResult result;
  const auto val_indices = full_subset(val_set.size());
  bool stop = false;
  for (long epoch = 1; epoch <= tcfg.epochs && !stop; ++epoch) {
    // seeded shuffle, independent of the dropout streams
    Rng shuffle_rng(derive_seed(tcfg.seed, 1, std::uint64_t(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = std::size_t(shuffle_rng.uniform_int(0, std::int64_t(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    long batches = 0;
    double lr_now = tcfg.lr;
    for (long b = 0; b < steps_per_epoch; ++b) {
      if (state.step >= total_steps) {
        stop = true;
        break;
      }
      for (auto& g : grad_accum) g.resize(0);
      double batch_loss = 0.0;
      for (int k = 0; k < tcfg.batch_size; ++k) {
        const int idx = order[std::size_t(b * tcfg.batch_size + k)];
        const DecomposedSample& smp = train_set[std::size_t(idx)];
        Tape<S> tape;
        BoundParams<S> bound;
        Rng drop_rng(derive_seed(tcfg.seed, 2, derive_seed(std::uint64_t(state.step), std::uint64_t(idx))));
        ForwardOptions<S> opt;
        opt.training = true;
        opt.with_grads = true;
        opt.rng = &drop_rng;
        auto comps = tsd_forward(tape, VecX<S>(smp.f.template cast<S>()), params, opt, &bound);
        const std::array<VecX<S>, 4> truth = {smp.c.template cast<S>(), smp.s.template cast<S>(),
                                              smp.o.template cast<S>(), smp.n.template cast<S>()};
        Tensor<S> loss = decomposition_loss(tape, comps, truth);
        const double loss_value = double(loss.scalar());
        if (!std::isfinite(loss_value))
          throw NumericalError("train: non-finite loss at step " + std::to_string(state.step) +
                               "; last checkpoint preserved");
        batch_loss += loss_value;
        tape.backward(loss);
        for (std::size_t i = 0; i < params.size(); ++i) {
          if (!bound.all[i].has_grad()) continue;
          if (grad_accum[i].size() == 0)
            grad_accum[i] = bound.all[i].grad();
          else
            grad_accum[i] += bound.all[i].grad();
        }
      }
      for (auto& g : grad_accum)
        if (g.size() > 0) g /= S(tcfg.batch_size);
      lr_now = tcfg.schedule == LrSchedule::one_cycle
                   ? one_cycle_lr(state.step, total_steps, tcfg.lr)
                   : tcfg.lr;
      adam_step(params, grad_accum, state, tcfg, lr_now);
      loss_sum += batch_loss / tcfg.batch_size;
      ++batches;
    }
    if (batches == 0) break;

    const ComponentReport val = evaluate(params, val_set, val_indices);
    EpochMetrics row;
    row.epoch = epoch;
    row.train_loss = loss_sum / double(batches);
    row.val_rmse = val.rmse_mean;
    row.val_avg = val.rmse_avg;
    row.lr = lr_now;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%ld,%.10e,%.10e,%.10e,%.10e,%.10e,%.10e,%.10e\n", row.epoch,
                  row.train_loss, row.val_rmse[0], row.val_rmse[1], row.val_rmse[2],
                  row.val_rmse[3], row.val_avg, row.lr);
    log << buf;
    log.flush();
    result.history.push_back(row);
    result.epochs_run = epoch;
    if (row.val_avg < state.best_val_rmse) {
      state.best_val_rmse = row.val_avg;
      state.best_epoch = epoch;
      if constexpr (std::is_same_v<S, float>)
        save_checkpoint(ckpt_path, params);
      else
        save_checkpoint(ckpt_path, params.template cast<float>());
    }
  }
  result.steps = state.step;
  result.best_val_avg = state.best_val_rmse;
  result.best_epoch = state.best_epoch;
  return result;
}

}  // namespace tsd
