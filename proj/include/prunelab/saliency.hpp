#pragma once

// Taylor saliency on the output layer group (w_o and w_down only): element
// scores are accumulated across training steps, then aggregated into the
// three candidate scores -- per-layer min head band (attn), per-layer min
// channel row (ffn), global min hidden column (stem) -- and the cheapest
// group type wins. Sums run in a fixed row-major order so scores are
// reproducible and exactly comparable with enumeration oracles.

#include <limits>
#include <string>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/groups.hpp"
#include "prunelab/model.hpp"

namespace prunelab {

enum class SaliencyMetric {
  first_order,            // |w * g|
  first_plus_diag_fisher  // |w * g + 0.5 * w^2 * g^2|
};

inline const char* saliency_metric_name(SaliencyMetric m) {
  return m == SaliencyMetric::first_order ? "first_order" : "first_plus_diag_fisher";
}

// Per-element saliency. In signed mode the absolute value is deferred to
// group aggregation (the raw Taylor term), so entries may be negative.
template <typename T>
Matrix<T> elementwise_saliency(const Matrix<T>& w, const Matrix<T>& g, SaliencyMetric metric,
                               bool signed_mode = false) {
  if (!w.same_shape(g)) fail(Errc::shape_mismatch, "saliency " + w.shape_str(g));
  Matrix<T> s(w.rows(), w.cols());
  for (std::int64_t i = 0; i < w.size(); ++i) {
    const T wg = w.data()[i] * g.data()[i];
    T v = metric == SaliencyMetric::first_order ? wg : wg + T(0.5) * wg * wg;
    s.data()[i] = signed_mode ? v : std::abs(v);
  }
  return s;
}

enum class Accumulation { sum, ema };

template <typename T>
struct SaliencyState {
  using Mode = Accumulation;
  Mode mode = Mode::ema;
  T beta = T(0.9);
  SaliencyMetric metric = SaliencyMetric::first_plus_diag_fisher;
  bool signed_mode = false;
  std::vector<Matrix<T>> o, down;  // per layer, shaped like w_o / w_down
  std::int64_t steps_accumulated = 0;
};

template <typename T>
SaliencyState<T> make_saliency_state(const TransformerModel<T>& mdl,
                                     typename SaliencyState<T>::Mode mode =
                                         SaliencyState<T>::Mode::ema,
                                     SaliencyMetric metric =
                                         SaliencyMetric::first_plus_diag_fisher) {
  SaliencyState<T> st;
  st.mode = mode;
  st.metric = metric;
  for (const auto& lw : mdl.w.layers) {
    st.o.emplace_back(lw.w_o.rows(), lw.w_o.cols());
    st.down.emplace_back(lw.w_down.rows(), lw.w_down.cols());
  }
  return st;
}

// Fold one training step's gradients into the running saliency.
template <typename T>
void accumulate(SaliencyState<T>& st, const TransformerModel<T>& mdl, const Weights<T>& grads) {
  if (st.o.size() != mdl.w.layers.size())
    fail(Errc::shape_mismatch, "saliency state layer count");
  for (std::size_t l = 0; l < st.o.size(); ++l) {
    const auto& lw = mdl.w.layers[l];
    const auto& gl = grads.layers[l];
    if (!st.o[l].same_shape(lw.w_o) || !st.down[l].same_shape(lw.w_down))
      fail(Errc::shape_mismatch, "saliency state not synced to pruned model");
    const auto so = elementwise_saliency(lw.w_o, gl.w_o, st.metric, st.signed_mode);
    const auto sd = elementwise_saliency(lw.w_down, gl.w_down, st.metric, st.signed_mode);
    if (st.mode == SaliencyState<T>::Mode::sum) {
      st.o[l].add_scaled(so, T(1));
      st.down[l].add_scaled(sd, T(1));
    } else {
      st.o[l].scale(st.beta);
      st.o[l].add_scaled(so, T(1) - st.beta);
      st.down[l].scale(st.beta);
      st.down[l].add_scaled(sd, T(1) - st.beta);
    }
  }
  st.steps_accumulated++;
}

// Drop the rows/cols a prune removed (w_o rows for attn bands, w_down rows
// for ffn channels; stem touches only columns of the scored matrices).
template <typename T>
void sync_to_prune(SaliencyState<T>& st, const MiniGroup& g) {
  for (std::size_t l = 0; l < st.o.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    if (const auto it = g.slices.find(p + "w_o"); it != g.slices.end()) {
      if (!it->second.rows.empty()) st.o[l] = st.o[l].removed_rows(it->second.rows);
      if (!it->second.cols.empty()) st.o[l] = st.o[l].removed_cols(it->second.cols);
    }
    if (const auto it = g.slices.find(p + "w_down"); it != g.slices.end()) {
      if (!it->second.rows.empty()) st.down[l] = st.down[l].removed_rows(it->second.rows);
      if (!it->second.cols.empty()) st.down[l] = st.down[l].removed_cols(it->second.cols);
    }
  }
}

struct SaliencyReport {
  double s_attn = std::numeric_limits<double>::infinity();
  double s_ffn = std::numeric_limits<double>::infinity();
  double s_stem = std::numeric_limits<double>::infinity();
  bool attn_ok = false, ffn_ok = false, stem_ok = false;
  std::vector<int> attn_heads;    // chosen head per layer
  std::vector<int> ffn_channels;  // chosen channel per layer
  int stem_index = -1;
};

// argmin over the three per-type scores; ties break attn < ffn < stem.
inline GroupType select_prune_type(const SaliencyReport& r) {
  if (!r.attn_ok && !r.ffn_ok && !r.stem_ok)
    fail(Errc::no_eligible_candidate, "all group types at their floors");
  GroupType best = GroupType::attn;
  double s = r.attn_ok ? r.s_attn : std::numeric_limits<double>::infinity();
  if (r.ffn_ok && r.s_ffn < s) {
    best = GroupType::ffn;
    s = r.s_ffn;
  }
  if (r.stem_ok && r.s_stem < s) best = GroupType::stem;
  if (!r.attn_ok && best == GroupType::attn) best = r.ffn_ok ? GroupType::ffn : GroupType::stem;
  return best;
}

// Aggregate accumulated element saliency into the three candidate scores.
// `normalize_by_size` divides each score by its group's parameter count (off
// by default: raw sums are compared across types).
template <typename T>
SaliencyReport score_and_select(const SaliencyState<T>& st, const TransformerModel<T>& mdl,
                                const PruneSpace& space = {}, bool normalize_by_size = false) {
  if (st.steps_accumulated < 1)
    fail(Errc::config_error, "score_and_select before any saliency accumulation");
  const ModelConfig& cfg = mdl.cfg;
  const int L = cfg.layers(), dh = cfg.head_dim, m = cfg.hidden;
  SaliencyReport r;

  bool attn_feasible = space.allow_attn, ffn_feasible = space.allow_ffn;
  for (int l = 0; l < L; ++l) {
    attn_feasible = attn_feasible && cfg.heads[l] - 1 >= space.min_heads;
    ffn_feasible = ffn_feasible && cfg.ffn[l] - 1 >= space.min_ffn;
  }
  const bool stem_feasible = space.allow_stem && m - 1 >= space.hidden_floor(cfg);

  if (attn_feasible) {
    double total = 0.0;
    r.attn_heads.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
      double best = std::numeric_limits<double>::infinity();
      int best_i = -1;
      for (int i = 0; i < cfg.heads[l]; ++i) {
        double band = 0.0;
        for (int p = i * dh; p < (i + 1) * dh; ++p)
          for (int c = 0; c < m; ++c) band += static_cast<double>(st.o[l](p, c));
        if (st.signed_mode) band = std::abs(band);
        if (band < best) {
          best = band;
          best_i = i;
        }
      }
      r.attn_heads[static_cast<std::size_t>(l)] = best_i;
      total += best;
    }
    r.s_attn = total;
    r.attn_ok = true;
  }

  if (ffn_feasible) {
    double total = 0.0;
    r.ffn_channels.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
      double best = std::numeric_limits<double>::infinity();
      int best_i = -1;
      for (int i = 0; i < cfg.ffn[l]; ++i) {
        double row = 0.0;
        for (int c = 0; c < m; ++c) row += static_cast<double>(st.down[l](i, c));
        if (st.signed_mode) row = std::abs(row);
        if (row < best) {
          best = row;
          best_i = i;
        }
      }
      r.ffn_channels[static_cast<std::size_t>(l)] = best_i;
      total += best;
    }
    r.s_ffn = total;
    r.ffn_ok = true;
  }

  if (stem_feasible) {
    std::vector<double> colsum(static_cast<std::size_t>(m), 0.0);
    for (int l = 0; l < L; ++l) {
      for (int p = 0; p < st.o[l].rows(); ++p)
        for (int c = 0; c < m; ++c) colsum[static_cast<std::size_t>(c)] += st.o[l](p, c);
      for (int p = 0; p < st.down[l].rows(); ++p)
        for (int c = 0; c < m; ++c) colsum[static_cast<std::size_t>(c)] += st.down[l](p, c);
    }
    double best = std::numeric_limits<double>::infinity();
    int best_i = -1;
    for (int c = 0; c < m; ++c) {
      const double v = st.signed_mode ? std::abs(colsum[static_cast<std::size_t>(c)])
                                      : colsum[static_cast<std::size_t>(c)];
      if (v < best) {
        best = v;
        best_i = c;
      }
    }
    r.s_stem = best;
    r.stem_index = best_i;
    r.stem_ok = true;
  }

  if (!r.attn_ok && !r.ffn_ok && !r.stem_ok)
    fail(Errc::no_eligible_candidate, "all group types at their floors");

  if (normalize_by_size) {
    if (r.attn_ok)
      r.s_attn /= static_cast<double>(
          build_group(mdl, GroupType::attn, r.attn_heads, space).size);
    if (r.ffn_ok)
      r.s_ffn /= static_cast<double>(
          build_group(mdl, GroupType::ffn, r.ffn_channels, space).size);
    if (r.stem_ok)
      r.s_stem /= static_cast<double>(
          build_group(mdl, GroupType::stem, {r.stem_index}, space).size);
  }
  return r;
}

// Convenience: the winning group, built and ready to apply.
template <typename T>
MiniGroup chosen_group(const SaliencyReport& r, const TransformerModel<T>& mdl,
                       const PruneSpace& space = {}) {
  const GroupType type = select_prune_type(r);
  if (type == GroupType::attn) return build_group(mdl, GroupType::attn, r.attn_heads, space);
  if (type == GroupType::ffn) return build_group(mdl, GroupType::ffn, r.ffn_channels, space);
  return build_group(mdl, GroupType::stem, {r.stem_index}, space);
}

}  // namespace prunelab
