#pragma once

// The pruning space: coupled "mini-groups" that remove one attention head per
// layer, one FFN channel per layer, or one shared hidden channel everywhere,
// while keeping every matrix shape consistent. Pruning physically shrinks the
// model (reallocation, no masks); a slice map records exactly which rows and
// columns vanished so callers can re-slice optimizer or saliency state.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/model.hpp"

namespace prunelab {

enum class GroupType { attn, ffn, stem };

inline const char* group_type_name(GroupType t) {
  switch (t) {
    case GroupType::attn: return "attn";
    case GroupType::ffn: return "ffn";
    case GroupType::stem: return "stem";
  }
  return "?";
}

struct TensorSlices {
  std::vector<int> rows, cols;  // sorted removal lists
};

// Keyed by the tensor names Weights::visit emits, plus "pos" for the
// positional buffer (which shrinks with the stem but is not a parameter).
using SliceMap = std::map<std::string, TensorSlices>;

struct MiniGroup {
  GroupType type = GroupType::attn;
  std::vector<int> indices;  // per layer (attn: head, ffn: channel); stem: one entry
  SliceMap slices;
  std::int64_t size = 0;     // trainable scalars removed
  std::uint64_t version = 0; // model version this group was built against
  std::vector<int> kv_removed_per_layer;  // attn only: removed kv head or -1
};

struct PruneSpace {
  int min_heads = 1;
  int min_ffn = 1;
  int min_hidden = 0;  // 0 -> defaults to 2 * head_dim
  bool allow_attn = true, allow_ffn = true, allow_stem = true;

  int hidden_floor(const ModelConfig& cfg) const {
    return min_hidden > 0 ? min_hidden : 2 * cfg.head_dim;
  }
};

// Apply a callback to the named tensor (weights by visit name, or "pos").
template <typename T, typename F>
void with_tensor(TransformerModel<T>& mdl, const std::string& name, F&& f) {
  if (name == "pos") {
    f(mdl.pos);
    return;
  }
  bool found = false;
  mdl.w.visit([&](const std::string& n, auto& t) {
    if (n == name) {
      f(t);
      found = true;
    }
  });
  if (!found) fail(Errc::index_out_of_range, "no tensor named " + name);
}

// New query->kv map after removing query head `pruned_query`. The kv head is
// removed iff its query set becomes empty; returns (new_map, removed_kv|-1).
inline std::pair<std::vector<int>, int> gqa_remap(const std::vector<int>& q_to_kv,
                                                  int pruned_query) {
  const int h = static_cast<int>(q_to_kv.size());
  if (pruned_query < 0 || pruned_query >= h)
    fail(Errc::index_out_of_range, "query head " + std::to_string(pruned_query));
  const int j = q_to_kv[static_cast<std::size_t>(pruned_query)];
  bool still_used = false;
  for (int i = 0; i < h; ++i)
    if (i != pruned_query && q_to_kv[static_cast<std::size_t>(i)] == j) still_used = true;
  const int removed_kv = still_used ? -1 : j;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(h - 1));
  for (int i = 0; i < h; ++i) {
    if (i == pruned_query) continue;
    int k = q_to_kv[static_cast<std::size_t>(i)];
    if (removed_kv >= 0 && k > removed_kv) --k;
    out.push_back(k);
  }
  return {out, removed_kv};
}

namespace detail {

inline void add_rows(SliceMap& m, const std::string& name, int first, int count) {
  auto& s = m[name].rows;
  for (int i = 0; i < count; ++i) s.push_back(first + i);
}

inline void add_cols(SliceMap& m, const std::string& name, int first, int count) {
  auto& s = m[name].cols;
  for (int i = 0; i < count; ++i) s.push_back(first + i);
}

}  // namespace detail

// Assemble the full coupled member list for one prune choice. `indices` is a
// head index per layer (attn), a channel index per layer (ffn), or a single
// shared hidden index (stem).
template <typename T>
MiniGroup build_group(const TransformerModel<T>& mdl, GroupType type,
                      const std::vector<int>& indices, const PruneSpace& space = {}) {
  const ModelConfig& cfg = mdl.cfg;
  const int L = cfg.layers(), dh = cfg.head_dim, m = cfg.hidden;
  MiniGroup g;
  g.type = type;
  g.indices = indices;
  g.version = mdl.version;

  if (type == GroupType::stem) {
    if (indices.size() != 1) fail(Errc::index_out_of_range, "stem group takes one index");
    const int i = indices[0];
    if (i < 0 || i >= m) fail(Errc::index_out_of_range, "stem index " + std::to_string(i));
    if (m - 1 < space.hidden_floor(cfg))
      fail(Errc::floor_violation, "hidden would drop below " +
                                      std::to_string(space.hidden_floor(cfg)));
    detail::add_cols(g.slices, "emb", i, 1);
    for (int l = 0; l < L; ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      detail::add_rows(g.slices, p + "w_q", i, 1);
      detail::add_rows(g.slices, p + "w_k", i, 1);
      detail::add_rows(g.slices, p + "w_v", i, 1);
      detail::add_cols(g.slices, p + "w_o", i, 1);
      detail::add_rows(g.slices, p + "w_up", i, 1);
      detail::add_rows(g.slices, p + "w_gate", i, 1);
      detail::add_cols(g.slices, p + "w_down", i, 1);
      detail::add_cols(g.slices, p + "attn_norm", i, 1);
      detail::add_cols(g.slices, p + "ffn_norm", i, 1);
    }
    detail::add_cols(g.slices, "final_norm", i, 1);
    if (!cfg.tied_embeddings) detail::add_rows(g.slices, "head", i, 1);
    detail::add_cols(g.slices, "pos", i, 1);
  } else if (type == GroupType::ffn) {
    if (static_cast<int>(indices.size()) != L)
      fail(Errc::index_out_of_range, "ffn group needs one channel per layer");
    for (int l = 0; l < L; ++l) {
      const int i = indices[static_cast<std::size_t>(l)];
      if (i < 0 || i >= cfg.ffn[l])
        fail(Errc::index_out_of_range, "ffn channel " + std::to_string(i));
      if (cfg.ffn[l] - 1 < space.min_ffn)
        fail(Errc::floor_violation, "ffn width at floor in layer " + std::to_string(l));
      const std::string p = "layers." + std::to_string(l) + ".";
      detail::add_cols(g.slices, p + "w_up", i, 1);
      detail::add_cols(g.slices, p + "w_gate", i, 1);
      detail::add_rows(g.slices, p + "w_down", i, 1);
    }
  } else {
    if (static_cast<int>(indices.size()) != L)
      fail(Errc::index_out_of_range, "attn group needs one head per layer");
    g.kv_removed_per_layer.assign(static_cast<std::size_t>(L), -1);
    for (int l = 0; l < L; ++l) {
      const int i = indices[static_cast<std::size_t>(l)];
      if (i < 0 || i >= cfg.heads[l])
        fail(Errc::index_out_of_range, "head " + std::to_string(i));
      if (cfg.heads[l] - 1 < space.min_heads)
        fail(Errc::floor_violation, "heads at floor in layer " + std::to_string(l));
      const auto [map2, removed_kv] = gqa_remap(mdl.q_to_kv[static_cast<std::size_t>(l)], i);
      (void)map2;
      g.kv_removed_per_layer[static_cast<std::size_t>(l)] = removed_kv;
      const std::string p = "layers." + std::to_string(l) + ".";
      detail::add_cols(g.slices, p + "w_q", i * dh, dh);
      if (removed_kv >= 0) {
        detail::add_cols(g.slices, p + "w_k", removed_kv * dh, dh);
        detail::add_cols(g.slices, p + "w_v", removed_kv * dh, dh);
      }
      detail::add_rows(g.slices, p + "w_o", i * dh, dh);
    }
  }

  // Trainable scalars removed (the "pos" buffer does not count).
  mdl.w.visit([&](const std::string& name, const auto& t) {
    const auto it = g.slices.find(name);
    if (it == g.slices.end()) return;
    const std::int64_t nr = static_cast<std::int64_t>(it->second.rows.size());
    const std::int64_t nc = static_cast<std::int64_t>(it->second.cols.size());
    using U = std::remove_cvref_t<decltype(t)>;
    if constexpr (std::is_same_v<U, Matrix<T>>)
      g.size += nr * t.cols() + nc * t.rows() - nr * nc;
    else
      g.size += nc;
  });
  return g;
}

// Physically remove the group's members, update config dims and query->kv
// maps, and bump the model version. The group's slice map tells callers how
// to shrink any per-parameter state of their own.
template <typename T>
void apply_prune(TransformerModel<T>& mdl, const MiniGroup& g) {
  if (g.version != mdl.version)
    fail(Errc::stale_group, "group built against version " + std::to_string(g.version) +
                                ", model at " + std::to_string(mdl.version));
  for (const auto& [name, sl] : g.slices) {
    with_tensor(mdl, name, [&](auto& t) {
      using U = std::remove_cvref_t<decltype(t)>;
      if constexpr (std::is_same_v<U, Matrix<T>>) {
        if (!sl.rows.empty()) t = t.removed_rows(sl.rows);
        if (!sl.cols.empty()) t = t.removed_cols(sl.cols);
      } else {
        if (!sl.cols.empty()) t = removed_indices(t, sl.cols);
      }
    });
  }
  const int L = mdl.cfg.layers();
  if (g.type == GroupType::stem) {
    mdl.cfg.hidden -= 1;
  } else if (g.type == GroupType::ffn) {
    for (int l = 0; l < L; ++l) mdl.cfg.ffn[l] -= 1;
  } else {
    for (int l = 0; l < L; ++l) {
      auto [map2, removed_kv] =
          gqa_remap(mdl.q_to_kv[static_cast<std::size_t>(l)], g.indices[static_cast<std::size_t>(l)]);
      mdl.q_to_kv[static_cast<std::size_t>(l)] = std::move(map2);
      mdl.cfg.heads[l] -= 1;
      if (removed_kv >= 0) mdl.cfg.kv_heads[l] -= 1;
    }
  }
  mdl.version++;
}

}  // namespace prunelab
