#pragma once

// OBS-style weight compensation. Per output-layer matrix (w_o, w_down) a
// Gram-matrix proxy H = X^T X of its recent input activations is kept over a
// sliding window of batches; when a prune removes input row p, the surviving
// rows absorb -(W_{p,:}/u_p) * u with u = (H + lambda I)^{-1} e_p, the exact
// least-squares correction for that single row. Attention prunes remove a
// head_dim band of rows: the default applies the single-row formula to each
// band row with H held fixed (writes into other doomed band rows are
// discarded by the prune); an exact joint block solve is available behind a
// flag. Stem prunes remove output columns instead of input rows, which this
// layerwise formulation cannot compensate, so they prune plainly.

#include <deque>
#include <string>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/groups.hpp"
#include "prunelab/model.hpp"

namespace prunelab {

// x^T x summed over rows (token positions).
template <typename T>
Matrix<T> gram(const Matrix<T>& x) {
  return matmul(x, x, true, false);
}

template <typename T>
struct HessianState {
  struct BatchGram {
    std::vector<Matrix<T>> o, down;  // per layer
    std::int64_t tokens = 0;
  };
  std::deque<BatchGram> entries;  // most recent last
  int window = 4;
  T damping_scale = T(1e-2);  // lambda = damping_scale * mean(diag H)
  std::vector<int> dim_o, dim_down;  // expected input dims per layer

  std::int64_t samples() const {
    std::int64_t n = 0;
    for (const auto& e : entries) n += e.tokens;
    return n;
  }
};

template <typename T>
HessianState<T> make_hessian_state(const TransformerModel<T>& mdl, int window = 4) {
  HessianState<T> st;
  st.window = window;
  for (int l = 0; l < mdl.cfg.layers(); ++l) {
    st.dim_o.push_back(mdl.cfg.heads[l] * mdl.cfg.head_dim);
    st.dim_down.push_back(mdl.cfg.ffn[l]);
  }
  return st;
}

// Fold one batch's activations in; the oldest batch beyond the window falls out.
template <typename T>
void hessian_accumulate(HessianState<T>& st, const ForwardTape<T>& tape) {
  if (tape.layers.size() != st.dim_o.size())
    fail(Errc::shape_mismatch, "hessian state layer count");
  typename HessianState<T>::BatchGram e;
  for (std::size_t l = 0; l < tape.layers.size(); ++l) {
    const auto& lt = tape.layers[l];
    if (lt.ctx.cols() != st.dim_o[l] || lt.ffn_mid.cols() != st.dim_down[l])
      fail(Errc::shape_mismatch, "hessian state not synced to pruned model");
    e.o.push_back(gram(lt.ctx));
    e.down.push_back(gram(lt.ffn_mid));
  }
  e.tokens = tape.batch.total();
  st.entries.push_back(std::move(e));
  while (static_cast<int>(st.entries.size()) > st.window) st.entries.pop_front();
}

template <typename T>
Matrix<T> window_sum(const HessianState<T>& st, int layer, bool down) {
  const int d = down ? st.dim_down[static_cast<std::size_t>(layer)]
                     : st.dim_o[static_cast<std::size_t>(layer)];
  Matrix<T> h(d, d);
  for (const auto& e : st.entries)
    h.add_scaled(down ? e.down[static_cast<std::size_t>(layer)]
                      : e.o[static_cast<std::size_t>(layer)],
                 T(1));
  return h;
}

// Drop pruned rows/cols from every window entry. Gram matrices of sliced
// activations are sliced Gram matrices, so this is exact, not approximate.
template <typename T>
void sync_hessian(HessianState<T>& st, const MiniGroup& g) {
  for (std::size_t l = 0; l < st.dim_o.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    const auto slice = [&](const std::string& name, std::vector<Matrix<T>>
                                                        HessianState<T>::BatchGram::*field,
                           int& dim) {
      const auto it = g.slices.find(name);
      if (it == g.slices.end() || it->second.rows.empty()) return;
      for (auto& e : st.entries) {
        auto& m = (e.*field)[l];
        m = m.removed_rows(it->second.rows).removed_cols(it->second.rows);
      }
      dim -= static_cast<int>(it->second.rows.size());
    };
    slice(p + "w_o", &HessianState<T>::BatchGram::o, st.dim_o[l]);
    slice(p + "w_down", &HessianState<T>::BatchGram::down, st.dim_down[l]);
  }
}

// Correction that zeroes input row p of w while minimizing the change to
// X w per output column: u = (h + lambda I)^{-1} e_p, delta_{:,c} =
// -(w_{p,c}/u_p) u. Row p of w + delta is exactly zero.
template <typename T>
Matrix<T> obs_column_update(const Matrix<T>& w, const Matrix<T>& h, T lambda, int p) {
  const int d = h.rows();
  if (p < 0 || p >= d || w.rows() != d)
    fail(Errc::index_out_of_range, "obs row " + std::to_string(p));
  Matrix<T> hd = h;
  for (int i = 0; i < d; ++i) hd(i, i) += lambda;
  std::vector<T> b(static_cast<std::size_t>(d), T(0));
  b[static_cast<std::size_t>(p)] = T(1);
  const auto u = solve_spd(hd, b);
  const T up = u[static_cast<std::size_t>(p)];
  if (std::abs(static_cast<double>(up)) < 1e-12)
    fail(Errc::numerically_singular, "pivot " + std::to_string(static_cast<double>(up)));
  Matrix<T> delta(w.rows(), w.cols());
  for (int c = 0; c < w.cols(); ++c) {
    const T f = -w(p, c) / up;
    for (int r = 0; r < d; ++r) delta(r, c) = f * u[static_cast<std::size_t>(r)];
    delta(p, c) = -w(p, c);  // exact zero after the add, no rounding residue
  }
  return delta;
}

// Joint least-squares for a whole removed row band: surviving rows R get
// W_R += (H_RR + lambda I)^{-1} H_RP W_P, band rows go exactly to zero.
template <typename T>
Matrix<T> obs_block_update(const Matrix<T>& w, const Matrix<T>& h, T lambda,
                           const std::vector<int>& band) {
  const int d = h.rows(), nb = static_cast<int>(band.size());
  Matrix<T> h_rr = h.removed_rows(band).removed_cols(band);
  for (int i = 0; i < h_rr.rows(); ++i) h_rr(i, i) += lambda;
  Matrix<T> h_rp(d - nb, nb);
  Matrix<T> w_p(nb, w.cols());
  {
    int rr = 0;
    std::size_t k = 0;
    for (int r = 0; r < d; ++r) {
      if (k < band.size() && band[k] == r) {
        for (int c = 0; c < w.cols(); ++c) w_p(static_cast<int>(k), c) = w(r, c);
        ++k;
        continue;
      }
      for (int j = 0; j < nb; ++j) h_rp(rr, j) = h(r, band[static_cast<std::size_t>(j)]);
      ++rr;
    }
  }
  const Matrix<T> rhs = matmul(h_rp, w_p);
  const Matrix<T> u = solve_spd_multi(h_rr, rhs);
  Matrix<T> delta(w.rows(), w.cols());
  {
    int rr = 0;
    std::size_t k = 0;
    for (int r = 0; r < d; ++r) {
      if (k < band.size() && band[k] == r) {
        for (int c = 0; c < w.cols(); ++c) delta(r, c) = -w(r, c);
        ++k;
        continue;
      }
      for (int c = 0; c < w.cols(); ++c) delta(r, c) = u(rr, c);
      ++rr;
    }
  }
  return delta;
}

namespace detail {

template <typename T>
T mean_diag(const Matrix<T>& h) {
  T s = T(0);
  for (int i = 0; i < h.rows(); ++i) s += h(i, i);
  return s / static_cast<T>(h.rows());
}

// Retry with doubled damping when the solve degenerates.
template <typename T, typename F>
Matrix<T> with_damping_retry(T lambda0, F&& attempt) {
  T lambda = lambda0;
  for (int tries = 0; tries < 60; ++tries) {
    try {
      return attempt(lambda);
    } catch (const Error& e) {
      if (e.code() != Errc::numerically_singular && e.code() != Errc::not_positive_definite)
        throw;
      lambda = std::max(lambda * T(2), T(1e-12));
    }
  }
  fail(Errc::numerically_singular, "damping retries exhausted");
}

}  // namespace detail

// Compensate the output-layer matrices this group deprives of input rows,
// then physically prune and re-slice the Gram window. Stem groups prune
// plainly (their members are output columns, outside this machinery).
template <typename T>
void compensate_group(TransformerModel<T>& mdl, const MiniGroup& g, HessianState<T>& st,
                      bool block_mode = false) {
  if (g.type != GroupType::stem) {
    if (st.entries.empty()) fail(Errc::config_error, "no hessian window accumulated");
    for (int l = 0; l < mdl.cfg.layers(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      auto& lw = mdl.w.layers[static_cast<std::size_t>(l)];
      if (g.type == GroupType::attn) {
        const auto& band = g.slices.at(p + "w_o").rows;
        const Matrix<T> h = window_sum(st, l, false);
        const T lambda0 = st.damping_scale * detail::mean_diag(h);
        if (block_mode) {
          const auto delta = detail::with_damping_retry<T>(
              lambda0, [&](T lam) { return obs_block_update(lw.w_o, h, lam, band); });
          lw.w_o.add_scaled(delta, T(1));
        } else {
          for (int p_row : band) {
            const auto delta = detail::with_damping_retry<T>(
                lambda0, [&](T lam) { return obs_column_update(lw.w_o, h, lam, p_row); });
            lw.w_o.add_scaled(delta, T(1));
          }
        }
      } else {
        const int p_row = g.indices[static_cast<std::size_t>(l)];
        const Matrix<T> h = window_sum(st, l, true);
        const T lambda0 = st.damping_scale * detail::mean_diag(h);
        const auto delta = detail::with_damping_retry<T>(
            lambda0, [&](T lam) { return obs_column_update(lw.w_down, h, lam, p_row); });
        lw.w_down.add_scaled(delta, T(1));
      }
    }
  }
  apply_prune(mdl, g);
  sync_hessian(st, g);
}

}  // namespace prunelab
