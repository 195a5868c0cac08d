#pragma once

// AdamW with decoupled weight decay. Moment buffers are kept per tensor in
// the model's visit order and are re-sliced in lockstep whenever a prune
// removes rows or columns (state for removed slices is discarded).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/groups.hpp"
#include "prunelab/model.hpp"

namespace prunelab {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

template <typename T>
struct AdamWState {
  AdamWConfig cfg;
  std::int64_t t = 0;  // completed update steps
  std::vector<std::string> names;
  std::vector<std::pair<int, int>> shapes;  // vectors as (1, len)
  std::vector<std::vector<T>> m, v;
};

template <typename T>
AdamWState<T> make_adamw(const TransformerModel<T>& mdl, const AdamWConfig& cfg = {}) {
  AdamWState<T> st;
  st.cfg = cfg;
  mdl.w.visit([&](const std::string& name, const auto& ten) {
    using U = std::remove_cvref_t<decltype(ten)>;
    st.names.push_back(name);
    std::size_t n;
    if constexpr (std::is_same_v<U, Matrix<T>>) {
      st.shapes.emplace_back(ten.rows(), ten.cols());
      n = static_cast<std::size_t>(ten.size());
    } else {
      st.shapes.emplace_back(1, static_cast<int>(ten.size()));
      n = ten.size();
    }
    st.m.emplace_back(n, T(0));
    st.v.emplace_back(n, T(0));
  });
  return st;
}

// One update with the given current learning rate; bumps the model version
// (outstanding tapes become stale).
template <typename T>
void adamw_step(TransformerModel<T>& mdl, const Weights<T>& grads, AdamWState<T>& st,
                double lr) {
  st.t++;
  const double bc1 = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.t));
  std::vector<std::pair<T*, std::size_t>> ps;
  std::vector<std::pair<const T*, std::size_t>> gs;
  mdl.w.visit([&](const std::string&, auto& ten) {
    using U = std::remove_cvref_t<decltype(ten)>;
    if constexpr (std::is_same_v<U, Matrix<T>>)
      ps.emplace_back(ten.data(), static_cast<std::size_t>(ten.size()));
    else
      ps.emplace_back(ten.data(), ten.size());
  });
  grads.visit([&](const std::string&, const auto& ten) {
    using U = std::remove_cvref_t<decltype(ten)>;
    if constexpr (std::is_same_v<U, Matrix<T>>)
      gs.emplace_back(ten.data(), static_cast<std::size_t>(ten.size()));
    else
      gs.emplace_back(ten.data(), ten.size());
  });
  if (ps.size() != st.m.size() || gs.size() != st.m.size())
    fail(Errc::shape_mismatch, "optimizer state tensor count");
  for (std::size_t k = 0; k < ps.size(); ++k) {
    if (ps[k].second != st.m[k].size() || gs[k].second != st.m[k].size())
      fail(Errc::shape_mismatch, "optimizer state not synced for " + st.names[k]);
    T* p = ps[k].first;
    const T* g = gs[k].first;
    T* mo = st.m[k].data();
    T* vo = st.v[k].data();
    const T b1 = static_cast<T>(st.cfg.beta1), b2 = static_cast<T>(st.cfg.beta2);
    for (std::size_t i = 0; i < ps[k].second; ++i) {
      mo[i] = b1 * mo[i] + (T(1) - b1) * g[i];
      vo[i] = b2 * vo[i] + (T(1) - b2) * g[i] * g[i];
      const double mhat = static_cast<double>(mo[i]) / bc1;
      const double vhat = static_cast<double>(vo[i]) / bc2;
      const double upd = mhat / (std::sqrt(vhat) + st.cfg.eps) +
                         st.cfg.weight_decay * static_cast<double>(p[i]);
      p[i] -= static_cast<T>(lr * upd);
    }
  }
  mdl.version++;
}

// Drop moment entries for pruned rows/cols, matching the weight slicing.
template <typename T>
void slice_optimizer(AdamWState<T>& st, const SliceMap& slices) {
  for (std::size_t k = 0; k < st.names.size(); ++k) {
    const auto it = slices.find(st.names[k]);
    if (it == slices.end()) continue;
    auto [r, c] = st.shapes[k];
    for (auto* buf : {&st.m[k], &st.v[k]}) {
      Matrix<T> wrap(r, c);
      std::copy(buf->begin(), buf->end(), wrap.data());
      if (!it->second.rows.empty()) wrap = wrap.removed_rows(it->second.rows);
      if (!it->second.cols.empty()) wrap = wrap.removed_cols(it->second.cols);
      buf->assign(wrap.data(), wrap.data() + wrap.size());
    }
    st.shapes[k] = {r - static_cast<int>(it->second.rows.size()),
                    c - static_cast<int>(it->second.cols.size())};
  }
}

}  // namespace prunelab
