#pragma once

// Bi-level training loop: blocks of gradient-descent steps alternate with
// blocks of prune steps (ratio p:g) until the parameter budget is reached,
// then training continues on the shrunken model for the remaining steps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/groups.hpp"
#include "prunelab/model.hpp"
#include "prunelab/optimizer.hpp"
#include "prunelab/rng.hpp"
#include "prunelab/saliency.hpp"
#include "prunelab/second_order.hpp"

namespace prunelab {

struct TrainConfig {
  std::int64_t target_params = 0;  // 0 disables pruning
  int prune_per_macro = 1;         // p in p:g
  int gd_per_macro = 1;            // g in p:g
  AdamWConfig adamw;
  int warmup_steps = 100;
  bool cosine_schedule = true;  // else constant after warmup
  int batch_tokens = 1024;      // tokens per gd step
  int seq_len = 128;
  std::int64_t max_steps = 0;
  std::uint64_t seed = 0;
  bool second_order = false;
  bool block_compensation = false;
  SaliencyMetric metric = SaliencyMetric::first_plus_diag_fisher;
  bool signed_saliency = false;
  bool normalize_scores = false;
  Accumulation accumulation = Accumulation::ema;
  double ema_beta = 0.9;
  int prune_warmup_gd_steps = 50;  // no prune before this many gd steps
  int hessian_window = 4;
  PruneSpace space;
  bool stop_at_target = false;  // end run at first crossing (skip continued gd)

  int sequences_per_batch() const {
    const int n = batch_tokens / seq_len;
    return n > 0 ? n : 1;
  }
  void validate(std::int64_t initial_params) const {
    if (target_params < 0 || target_params >= initial_params)
      fail(Errc::config_error, "target_params must be below the initial count");
    if (prune_per_macro < 0 || gd_per_macro < 0 ||
        (prune_per_macro == 0 && gd_per_macro == 0))
      fail(Errc::config_error, "prune:gd ratio needs a positive component");
    if (seq_len < 2) fail(Errc::config_error, "seq_len must be at least 2");
    if (max_steps < 0) fail(Errc::config_error, "max_steps must be non-negative");
  }
};

struct TraceRow {
  std::int64_t step = 0;    // gd steps completed when the prune fired
  std::int64_t tokens = 0;  // tokens consumed so far
  double s_attn = 0, s_ffn = 0, s_stem = 0;
  GroupType chosen = GroupType::attn;
  std::vector<int> indices;  // per-layer, or a single entry for stem
  int hidden = 0;            // post-prune dims
  std::vector<int> heads, ffn;
  std::int64_t params = 0;  // post-prune count
  std::int64_t group_size = 0;
};
using PruneTrace = std::vector<TraceRow>;

struct MetricsRow {
  std::int64_t step = 0;
  std::int64_t tokens = 0;
  double loss = 0;
  double lr = 0;
  std::int64_t params = 0;
};

inline double lr_at(const TrainConfig& cfg, std::int64_t step) {
  const double base = cfg.adamw.lr;
  if (step < cfg.warmup_steps)
    return base * static_cast<double>(step + 1) / cfg.warmup_steps;
  if (!cfg.cosine_schedule || cfg.max_steps <= cfg.warmup_steps) return base;
  double prog = static_cast<double>(step - cfg.warmup_steps) /
                static_cast<double>(cfg.max_steps - cfg.warmup_steps);
  if (prog > 1.0) prog = 1.0;
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * prog));
}

template <typename T>
struct Trainer {
  TransformerModel<T> mdl;
  TrainConfig cfg;
  AdamWState<T> opt;
  SaliencyState<T> sal;
  HessianState<T> hess;
  Rng data_rng;
  std::int64_t gd_steps = 0;
  std::int64_t tokens = 0;
  PruneTrace trace;
  std::vector<MetricsRow> metrics;
};

template <typename T>
Trainer<T> make_trainer(TransformerModel<T> mdl, const TrainConfig& cfg) {
  cfg.validate(parameter_count(mdl));
  Trainer<T> t{std::move(mdl), cfg, {}, {}, {}, Rng(cfg.seed).split("data")};
  t.opt = make_adamw(t.mdl, cfg.adamw);
  t.sal = make_saliency_state(t.mdl, cfg.accumulation, cfg.metric);
  t.sal.beta = static_cast<T>(cfg.ema_beta);
  t.sal.signed_mode = cfg.signed_saliency;
  if (cfg.second_order) t.hess = make_hessian_state(t.mdl, cfg.hessian_window);
  return t;
}

template <typename T>
T max_param(const TransformerModel<T>& mdl) {
  T mx = 0;
  mdl.w.visit([&](const std::string&, const auto& ten) {
    using U = std::remove_cvref_t<decltype(ten)>;
    if constexpr (std::is_same_v<U, Matrix<T>>) {
      mx = std::max(mx, ten.max_abs());
    } else {
      for (T v : ten) mx = std::max(mx, std::abs(v));
    }
  });
  return mx;
}

// One optimizer update; accumulates saliency (and, when enabled, activation
// statistics for compensation) from this step's tape before the weights move.
template <typename T>
double gd_step(Trainer<T>& t, const Batch& batch) {
  ForwardTape<T> tape = forward(t.mdl, batch);
  if (!std::isfinite(static_cast<double>(tape.loss)))
    fail(Errc::non_finite_loss,
         "step " + std::to_string(t.gd_steps) + " loss=" +
             std::to_string(static_cast<double>(tape.loss)) +
             " max|w|=" + std::to_string(static_cast<double>(max_param(t.mdl))));
  Weights<T> grads = backward(t.mdl, tape);
  accumulate(t.sal, t.mdl, grads);
  if (t.cfg.second_order) hessian_accumulate(t.hess, tape);
  const double lr = lr_at(t.cfg, t.gd_steps);
  adamw_step(t.mdl, grads, t.opt, lr);
  t.gd_steps++;
  t.tokens += batch.total();
  t.metrics.push_back({t.gd_steps, t.tokens, static_cast<double>(tape.loss), lr,
                       parameter_count(t.mdl)});
  return static_cast<double>(tape.loss);
}

// Score, select, (optionally compensate,) apply one mini-group, and re-slice
// every stateful buffer that shadows the weights.
template <typename T>
const TraceRow& prune_step(Trainer<T>& t) {
  const SaliencyReport r =
      score_and_select(t.sal, t.mdl, t.cfg.space, t.cfg.normalize_scores);
  MiniGroup g = chosen_group(r, t.mdl, t.cfg.space);
  if (t.cfg.second_order)
    compensate_group(t.mdl, g, t.hess, t.cfg.block_compensation);
  else
    apply_prune(t.mdl, g);
  sync_to_prune(t.sal, g);
  slice_optimizer(t.opt, g.slices);
  TraceRow row;
  row.step = t.gd_steps;
  row.tokens = t.tokens;
  row.s_attn = r.s_attn;
  row.s_ffn = r.s_ffn;
  row.s_stem = r.s_stem;
  row.chosen = g.type;
  row.indices = g.indices;
  row.hidden = t.mdl.cfg.hidden;
  row.heads = t.mdl.cfg.heads;
  row.ffn = t.mdl.cfg.ffn;
  row.params = parameter_count(t.mdl);
  row.group_size = g.size;
  t.trace.push_back(std::move(row));
  return t.trace.back();
}

template <typename T>
bool needs_prune(const Trainer<T>& t) {
  return t.cfg.target_params > 0 &&
         parameter_count(t.mdl) > t.cfg.target_params &&
         t.gd_steps >= t.cfg.prune_warmup_gd_steps;
}

// Full loop. next_batch(rng) must yield a training batch; the trainer owns
// the data stream's rng so runs are reproducible from the seed alone.
template <typename T, typename SampleFn>
void run(Trainer<T>& t, SampleFn&& next_batch) {
  if (t.cfg.gd_per_macro == 0) {  // degenerate prune-only mode
    while (t.cfg.target_params > 0 &&
           parameter_count(t.mdl) > t.cfg.target_params)
      prune_step(t);
    return;
  }
  while (t.gd_steps < t.cfg.max_steps) {
    for (int i = 0; i < t.cfg.gd_per_macro && t.gd_steps < t.cfg.max_steps; ++i)
      gd_step(t, next_batch(t.data_rng));
    for (int i = 0; i < t.cfg.prune_per_macro && needs_prune(t); ++i)
      prune_step(t);
    if (t.cfg.stop_at_target && t.cfg.target_params > 0 &&
        parameter_count(t.mdl) <= t.cfg.target_params)
      return;
  }
}

}  // namespace prunelab
