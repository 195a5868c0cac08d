#pragma once

// Decoder-only transformer: embedding (+ optional fixed sinusoidal positions)
// -> L pre-norm blocks of causal self-attention + SwiGLU FFN -> final norm ->
// LM head. Forward records a tape; backward replays it for exact gradients.
// Every width (hidden, heads, kv heads, FFN channels) can shrink under
// pruning, so head/channel counts are per-layer lists.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/kernels.hpp"
#include "prunelab/matrix.hpp"
#include "prunelab/rng.hpp"

namespace prunelab {

struct ModelConfig {
  int vocab = 0;
  int hidden = 0;
  int head_dim = 16;
  int max_seq_len = 0;
  std::vector<int> heads;     // query heads per layer
  std::vector<int> kv_heads;  // kv heads per layer
  std::vector<int> ffn;       // FFN intermediate width per layer
  bool tied_embeddings = false;
  bool positional = true;  // add a fixed sinusoidal buffer to the embeddings

  int layers() const { return static_cast<int>(heads.size()); }

  // Convenience for the common uniform-width starting point.
  static ModelConfig uniform(int vocab, int hidden, int n_layers, int heads, int kv_heads,
                             int head_dim, int ffn, int max_seq_len) {
    ModelConfig c;
    c.vocab = vocab;
    c.hidden = hidden;
    c.head_dim = head_dim;
    c.max_seq_len = max_seq_len;
    c.heads.assign(n_layers, heads);
    c.kv_heads.assign(n_layers, kv_heads);
    c.ffn.assign(n_layers, ffn);
    return c;
  }

  void validate() const {
    if (vocab < 1 || hidden < 1 || head_dim < 1 || max_seq_len < 1)
      fail(Errc::config_error, "vocab/hidden/head_dim/max_seq_len must be >= 1");
    if (heads.empty() || heads.size() != kv_heads.size() || heads.size() != ffn.size())
      fail(Errc::config_error, "per-layer lists empty or of unequal length");
    for (int l = 0; l < layers(); ++l) {
      if (heads[l] < 1 || ffn[l] < 1) fail(Errc::config_error, "layer widths must be >= 1");
      if (kv_heads[l] < 1 || kv_heads[l] > heads[l])
        fail(Errc::config_error, "kv_heads must be in [1, heads]");
    }
  }
};

template <typename T>
struct LayerWeights {
  Matrix<T> w_q, w_k, w_v;     // hidden x (heads|kv)*head_dim
  Matrix<T> w_o;               // heads*head_dim x hidden
  Matrix<T> w_up, w_gate;      // hidden x ffn
  Matrix<T> w_down;            // ffn x hidden
  std::vector<T> attn_norm, ffn_norm;  // gain vectors, length hidden
};

template <typename T>
struct Weights {
  Matrix<T> embedding;  // vocab x hidden
  std::vector<LayerWeights<T>> layers;
  std::vector<T> final_norm;
  Matrix<T> lm_head;  // hidden x vocab; empty (0x0) when embeddings are tied

  // Stable enumeration of every trainable tensor. The functor must accept
  // both (name, Matrix<T>&) and (name, std::vector<T>&).
  template <typename F>
  void visit(F&& f) {
    f(std::string("emb"), embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      auto& lw = layers[l];
      f(p + "w_q", lw.w_q);
      f(p + "w_k", lw.w_k);
      f(p + "w_v", lw.w_v);
      f(p + "w_o", lw.w_o);
      f(p + "w_up", lw.w_up);
      f(p + "w_gate", lw.w_gate);
      f(p + "w_down", lw.w_down);
      f(p + "attn_norm", lw.attn_norm);
      f(p + "ffn_norm", lw.ffn_norm);
    }
    f(std::string("final_norm"), final_norm);
    if (lm_head.size() > 0) f(std::string("head"), lm_head);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<Weights*>(this)->visit([&](const std::string& name, auto& t) {
      f(name, static_cast<const std::remove_reference_t<decltype(t)>&>(t));
    });
  }
};

template <typename T>
Weights<T> zeros_like(const Weights<T>& w) {
  Weights<T> z;
  z.embedding = Matrix<T>(w.embedding.rows(), w.embedding.cols());
  z.layers.resize(w.layers.size());
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& s = w.layers[l];
    auto& d = z.layers[l];
    d.w_q = Matrix<T>(s.w_q.rows(), s.w_q.cols());
    d.w_k = Matrix<T>(s.w_k.rows(), s.w_k.cols());
    d.w_v = Matrix<T>(s.w_v.rows(), s.w_v.cols());
    d.w_o = Matrix<T>(s.w_o.rows(), s.w_o.cols());
    d.w_up = Matrix<T>(s.w_up.rows(), s.w_up.cols());
    d.w_gate = Matrix<T>(s.w_gate.rows(), s.w_gate.cols());
    d.w_down = Matrix<T>(s.w_down.rows(), s.w_down.cols());
    d.attn_norm.assign(s.attn_norm.size(), T(0));
    d.ffn_norm.assign(s.ffn_norm.size(), T(0));
  }
  z.final_norm.assign(w.final_norm.size(), T(0));
  if (w.lm_head.size() > 0) z.lm_head = Matrix<T>(w.lm_head.rows(), w.lm_head.cols());
  return z;
}

template <typename T>
struct TransformerModel {
  ModelConfig cfg;
  Weights<T> w;
  std::vector<std::vector<int>> q_to_kv;  // per layer: query head -> kv head
  Matrix<T> pos;  // max_seq_len x hidden sinusoidal buffer (not a parameter)
  std::uint64_t version = 0;  // bumped on every weight/shape mutation
};

// One training example batch: `tokens` and `targets` are batch*seq_len ids in
// row-major (sequence-contiguous) order; a target of -1 is not scored.
struct Batch {
  int batch = 0;
  int seq_len = 0;
  std::vector<int> tokens;
  std::vector<int> targets;

  int total() const { return batch * seq_len; }
};

// Everything backward and the Gram-matrix accumulator need, recorded while
// the loss was computed. `ctx` feeds w_o, `ffn_mid` feeds w_down.
template <typename T>
struct ForwardTape {
  std::uint64_t version = 0;
  Batch batch;
  struct LayerTape {
    Matrix<T> x_in;                // residual stream entering the block
    Matrix<T> h1;                  // attn-normed input
    Matrix<T> q, k, v;
    std::vector<Matrix<T>> soft;   // [b*heads + i], each seq_len x seq_len
    Matrix<T> ctx;                 // concatenated heads, input to w_o
    Matrix<T> x_mid;               // after attention residual
    Matrix<T> h2;                  // ffn-normed
    Matrix<T> up, gate, sg;        // sg = silu(gate)
    Matrix<T> ffn_mid;             // sg . up, input to w_down
  };
  std::vector<LayerTape> layers;
  Matrix<T> x_final;   // residual stream after the last block
  Matrix<T> h_final;   // final-normed
  Matrix<T> logits;
  CrossEntropyOut<T> ce{T(0), Matrix<T>(), 0};
  T loss = T(0);
};

namespace detail {

template <typename T>
Matrix<T> band(const Matrix<T>& src, int row0, int nrows, int col0, int ncols) {
  Matrix<T> out(nrows, ncols);
  for (int r = 0; r < nrows; ++r)
    for (int c = 0; c < ncols; ++c) out(r, c) = src(row0 + r, col0 + c);
  return out;
}

template <typename T>
void band_add(Matrix<T>& dst, const Matrix<T>& part, int row0, int col0) {
  for (int r = 0; r < part.rows(); ++r)
    for (int c = 0; c < part.cols(); ++c) dst(row0 + r, col0 + c) += part(r, c);
}

}  // namespace detail

template <typename T>
ForwardTape<T> forward(const TransformerModel<T>& mdl, const Batch& batch) {
  const ModelConfig& cfg = mdl.cfg;
  const int B = batch.batch, S = batch.seq_len, m = cfg.hidden, dh = cfg.head_dim;
  if (B < 1 || S < 1 || batch.tokens.size() != static_cast<std::size_t>(B * S) ||
      batch.targets.size() != batch.tokens.size())
    fail(Errc::shape_mismatch, "batch dims vs token/target counts");
  if (S > cfg.max_seq_len)
    fail(Errc::sequence_too_long,
         std::to_string(S) + " > max_seq_len " + std::to_string(cfg.max_seq_len));

  ForwardTape<T> tape;
  tape.version = mdl.version;
  tape.batch = batch;
  tape.layers.resize(static_cast<std::size_t>(cfg.layers()));

  Matrix<T> x = embedding_gather(mdl.w.embedding, batch.tokens);
  if (cfg.positional)
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < S; ++t)
        for (int c = 0; c < m; ++c) x(b * S + t, c) += mdl.pos(t, c);

  const T ninf = -std::numeric_limits<T>::infinity();
  for (int l = 0; l < cfg.layers(); ++l) {
    auto& lt = tape.layers[static_cast<std::size_t>(l)];
    const auto& lw = mdl.w.layers[static_cast<std::size_t>(l)];
    const int h = cfg.heads[l];
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    lt.x_in = std::move(x);
    lt.h1 = rmsnorm_rows(lt.x_in, lw.attn_norm);
    lt.q = matmul(lt.h1, lw.w_q);
    lt.k = matmul(lt.h1, lw.w_k);
    lt.v = matmul(lt.h1, lw.w_v);
    lt.ctx = Matrix<T>(B * S, h * dh);
    lt.soft.reserve(static_cast<std::size_t>(B * h));
    for (int b = 0; b < B; ++b) {
      for (int i = 0; i < h; ++i) {
        const int j = mdl.q_to_kv[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
        const Matrix<T> qi = detail::band(lt.q, b * S, S, i * dh, dh);
        const Matrix<T> kj = detail::band(lt.k, b * S, S, j * dh, dh);
        const Matrix<T> vj = detail::band(lt.v, b * S, S, j * dh, dh);
        Matrix<T> sc(S, S);
        matmul_into(sc, qi, kj, false, true, scale, T(0));
        for (int r = 0; r < S; ++r)
          for (int c = r + 1; c < S; ++c) sc(r, c) = ninf;
        Matrix<T> soft = softmax_rows(sc);
        const Matrix<T> ctx_i = matmul(soft, vj);
        detail::band_add(lt.ctx, ctx_i, b * S, i * dh);
        lt.soft.push_back(std::move(soft));
      }
    }
    lt.x_mid = matmul(lt.ctx, lw.w_o);
    lt.x_mid.add_scaled(lt.x_in, T(1));
    lt.h2 = rmsnorm_rows(lt.x_mid, lw.ffn_norm);
    lt.up = matmul(lt.h2, lw.w_up);
    lt.gate = matmul(lt.h2, lw.w_gate);
    lt.sg = silu(lt.gate);
    lt.ffn_mid = hadamard(lt.sg, lt.up);
    x = matmul(lt.ffn_mid, lw.w_down);
    x.add_scaled(lt.x_mid, T(1));
  }

  tape.x_final = std::move(x);
  tape.h_final = rmsnorm_rows(tape.x_final, mdl.w.final_norm);
  tape.logits = cfg.tied_embeddings ? matmul(tape.h_final, mdl.w.embedding, false, true)
                                    : matmul(tape.h_final, mdl.w.lm_head);
  tape.ce = cross_entropy(tape.logits, batch.targets);
  tape.loss = tape.ce.loss;
  return tape;
}

template <typename T>
Weights<T> backward(const TransformerModel<T>& mdl, const ForwardTape<T>& tape,
                    T dloss = T(1)) {
  if (tape.version != mdl.version)
    fail(Errc::stale_tape, "model mutated since forward (version " +
                               std::to_string(mdl.version) + " vs tape " +
                               std::to_string(tape.version) + ")");
  const ModelConfig& cfg = mdl.cfg;
  const int B = tape.batch.batch, S = tape.batch.seq_len, m = cfg.hidden, dh = cfg.head_dim;
  Weights<T> g = zeros_like(mdl.w);

  const Matrix<T> dlogits = cross_entropy_backward(tape.ce, tape.batch.targets, dloss);
  Matrix<T> dhf(B * S, m);
  if (cfg.tied_embeddings) {
    matmul_into(dhf, dlogits, mdl.w.embedding, false, false);
    matmul_into(g.embedding, dlogits, tape.h_final, true, false, T(1), T(1));
  } else {
    matmul_into(dhf, dlogits, mdl.w.lm_head, false, true);
    matmul_into(g.lm_head, tape.h_final, dlogits, true, false, T(1), T(1));
  }
  Matrix<T> dx(B * S, m);
  rmsnorm_backward(tape.x_final, mdl.w.final_norm, dhf, dx, g.final_norm);

  for (int l = cfg.layers() - 1; l >= 0; --l) {
    const auto& lt = tape.layers[static_cast<std::size_t>(l)];
    const auto& lw = mdl.w.layers[static_cast<std::size_t>(l)];
    auto& gl = g.layers[static_cast<std::size_t>(l)];
    const int h = cfg.heads[l], kv = cfg.kv_heads[l], n = cfg.ffn[l];
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    // FFN: x_out = x_mid + (sg . up) w_down
    Matrix<T> dmid(B * S, n);
    matmul_into(dmid, dx, lw.w_down, false, true);
    matmul_into(gl.w_down, lt.ffn_mid, dx, true, false, T(1), T(1));
    const Matrix<T> dsg = hadamard(dmid, lt.up);
    const Matrix<T> dup = hadamard(dmid, lt.sg);
    const Matrix<T> dgate = silu_backward(lt.gate, dsg);
    Matrix<T> dh2(B * S, m);
    matmul_into(dh2, dup, lw.w_up, false, true, T(1), T(0));
    matmul_into(dh2, dgate, lw.w_gate, false, true, T(1), T(1));
    matmul_into(gl.w_up, lt.h2, dup, true, false, T(1), T(1));
    matmul_into(gl.w_gate, lt.h2, dgate, true, false, T(1), T(1));
    Matrix<T> dx_mid = dx;  // residual passthrough
    rmsnorm_backward(lt.x_mid, lw.ffn_norm, dh2, dx_mid, gl.ffn_norm);

    // Attention: x_mid = x_in + ctx w_o
    Matrix<T> dctx(B * S, h * dh);
    matmul_into(dctx, dx_mid, lw.w_o, false, true);
    matmul_into(gl.w_o, lt.ctx, dx_mid, true, false, T(1), T(1));
    Matrix<T> dq(B * S, h * dh), dk(B * S, kv * dh), dv(B * S, kv * dh);
    for (int b = 0; b < B; ++b) {
      for (int i = 0; i < h; ++i) {
        const int j = mdl.q_to_kv[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
        const Matrix<T>& soft = lt.soft[static_cast<std::size_t>(b * h + i)];
        const Matrix<T> qi = detail::band(lt.q, b * S, S, i * dh, dh);
        const Matrix<T> kj = detail::band(lt.k, b * S, S, j * dh, dh);
        const Matrix<T> vj = detail::band(lt.v, b * S, S, j * dh, dh);
        const Matrix<T> dctx_i = detail::band(dctx, b * S, S, i * dh, dh);
        const Matrix<T> dsoft = matmul(dctx_i, vj, false, true);
        const Matrix<T> dvj = matmul(soft, dctx_i, true, false);
        detail::band_add(dv, dvj, b * S, j * dh);
        const Matrix<T> dsc = softmax_rows_backward(soft, dsoft);
        Matrix<T> dqi(S, dh), dkj(S, dh);
        matmul_into(dqi, dsc, kj, false, false, scale, T(0));
        matmul_into(dkj, dsc, qi, true, false, scale, T(0));
        detail::band_add(dq, dqi, b * S, i * dh);
        detail::band_add(dk, dkj, b * S, j * dh);
      }
    }
    Matrix<T> dh1(B * S, m);
    matmul_into(dh1, dq, lw.w_q, false, true, T(1), T(0));
    matmul_into(dh1, dk, lw.w_k, false, true, T(1), T(1));
    matmul_into(dh1, dv, lw.w_v, false, true, T(1), T(1));
    matmul_into(gl.w_q, lt.h1, dq, true, false, T(1), T(1));
    matmul_into(gl.w_k, lt.h1, dk, true, false, T(1), T(1));
    matmul_into(gl.w_v, lt.h1, dv, true, false, T(1), T(1));
    dx = std::move(dx_mid);  // residual passthrough into x_in
    rmsnorm_backward(lt.x_in, lw.attn_norm, dh1, dx, gl.attn_norm);
  }

  embedding_scatter_add(g.embedding, tape.batch.tokens, dx);
  return g;
}

// Trainable scalar count (the positional buffer is excluded).
template <typename T>
std::int64_t parameter_count(const TransformerModel<T>& mdl) {
  std::int64_t n = 0;
  mdl.w.visit([&](const std::string&, const auto& t) {
    using U = std::remove_cvref_t<decltype(t)>;
    if constexpr (std::is_same_v<U, Matrix<T>>)
      n += t.size();
    else
      n += static_cast<std::int64_t>(t.size());
  });
  return n;
}

// Same count computed from the architecture alone.
inline std::int64_t parameter_count(const ModelConfig& cfg) {
  const std::int64_t m = cfg.hidden, dh = cfg.head_dim, v = cfg.vocab;
  std::int64_t n = v * m;  // embedding
  for (int l = 0; l < cfg.layers(); ++l) {
    const std::int64_t h = cfg.heads[l], kv = cfg.kv_heads[l], f = cfg.ffn[l];
    n += m * h * dh;        // w_q
    n += 2 * m * kv * dh;   // w_k, w_v
    n += h * dh * m;        // w_o
    n += 2 * m * f;         // w_up, w_gate
    n += f * m;             // w_down
    n += 2 * m;             // norm gains
  }
  n += m;                       // final norm
  if (!cfg.tied_embeddings) n += m * v;  // head
  return n;
}

// Sinusoidal position buffer; column pairs (2p, 2p+1) hold sin/cos at
// geometrically spaced frequencies.
template <typename T>
Matrix<T> sinusoidal_positions(int max_seq_len, int hidden, T scale = T(1)) {
  Matrix<T> pos(max_seq_len, hidden);
  for (int t = 0; t < max_seq_len; ++t) {
    for (int c = 0; c < hidden; ++c) {
      const double p = c / 2;
      const double freq = std::pow(10000.0, -2.0 * p / hidden);
      const double a = t * freq;
      pos(t, c) = scale * static_cast<T>((c % 2 == 0) ? std::sin(a) : std::cos(a));
    }
  }
  return pos;
}

// Validate a query->kv assignment against the config: per-layer size, range,
// and onto (every kv head serves at least one query head).
inline void validate_q_to_kv(const ModelConfig& cfg,
                             const std::vector<std::vector<int>>& q_to_kv) {
  if (static_cast<int>(q_to_kv.size()) != cfg.layers())
    fail(Errc::config_error, "query->kv map layer count mismatch");
  for (int l = 0; l < cfg.layers(); ++l) {
    const auto& map = q_to_kv[static_cast<std::size_t>(l)];
    const int h = cfg.heads[l], kv = cfg.kv_heads[l];
    if (static_cast<int>(map.size()) != h)
      fail(Errc::config_error, "query->kv map size mismatch in layer " + std::to_string(l));
    std::vector<char> hit(static_cast<std::size_t>(kv), 0);
    for (int q : map) {
      if (q < 0 || q >= kv)
        fail(Errc::config_error, "query->kv map entry out of range in layer " + std::to_string(l));
      hit[static_cast<std::size_t>(q)] = 1;
    }
    for (char c : hit)
      if (!c) fail(Errc::config_error, "query->kv map not onto in layer " + std::to_string(l));
  }
}

// Allocate a model of the given shape with zero weights and an empty
// positional buffer; deserialization fills everything afterwards.
template <typename T>
TransformerModel<T> empty_model(const ModelConfig& cfg) {
  cfg.validate();
  TransformerModel<T> mdl;
  mdl.cfg = cfg;
  const int m = cfg.hidden, dh = cfg.head_dim;
  mdl.w.embedding = Matrix<T>(cfg.vocab, m);
  mdl.w.layers.resize(static_cast<std::size_t>(cfg.layers()));
  mdl.q_to_kv.resize(static_cast<std::size_t>(cfg.layers()));
  for (int l = 0; l < cfg.layers(); ++l) {
    const int h = cfg.heads[l], kv = cfg.kv_heads[l], n = cfg.ffn[l];
    auto& lw = mdl.w.layers[static_cast<std::size_t>(l)];
    lw.w_q = Matrix<T>(m, h * dh);
    lw.w_k = Matrix<T>(m, kv * dh);
    lw.w_v = Matrix<T>(m, kv * dh);
    lw.w_o = Matrix<T>(h * dh, m);
    lw.w_up = Matrix<T>(m, n);
    lw.w_gate = Matrix<T>(m, n);
    lw.w_down = Matrix<T>(n, m);
    lw.attn_norm.assign(static_cast<std::size_t>(m), T(0));
    lw.ffn_norm.assign(static_cast<std::size_t>(m), T(0));
    mdl.q_to_kv[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(h), 0);
  }
  mdl.w.final_norm.assign(static_cast<std::size_t>(m), T(0));
  if (!cfg.tied_embeddings) mdl.w.lm_head = Matrix<T>(m, cfg.vocab);
  mdl.pos = Matrix<T>(cfg.max_seq_len, m);
  return mdl;
}

// Fresh model: N(0, init_std) weights, norm gains sqrt(hidden) (the energy
// normalizer in rmsnorm_rows absorbs the usual 1/sqrt(width)), query heads
// assigned to kv heads in contiguous groups, or by the explicit map when a
// shape inherited from a pruned model has irregular head sharing.
template <typename T>
TransformerModel<T> init_model(const ModelConfig& cfg, Rng& rng, T init_std = T(0.02),
                               const std::vector<std::vector<int>>* q_map = nullptr) {
  cfg.validate();
  TransformerModel<T> mdl;
  mdl.cfg = cfg;
  const int m = cfg.hidden, dh = cfg.head_dim;
  const T gain0 = std::sqrt(static_cast<T>(m));
  mdl.w.embedding = Matrix<T>::randn(cfg.vocab, m, rng, init_std);
  mdl.w.layers.resize(static_cast<std::size_t>(cfg.layers()));
  mdl.q_to_kv.resize(static_cast<std::size_t>(cfg.layers()));
  for (int l = 0; l < cfg.layers(); ++l) {
    const int h = cfg.heads[l], kv = cfg.kv_heads[l], n = cfg.ffn[l];
    if (q_map == nullptr && h % kv != 0)
      fail(Errc::config_error, "heads must be a multiple of kv_heads at init");
    auto& lw = mdl.w.layers[static_cast<std::size_t>(l)];
    lw.w_q = Matrix<T>::randn(m, h * dh, rng, init_std);
    lw.w_k = Matrix<T>::randn(m, kv * dh, rng, init_std);
    lw.w_v = Matrix<T>::randn(m, kv * dh, rng, init_std);
    lw.w_o = Matrix<T>::randn(h * dh, m, rng, init_std);
    lw.w_up = Matrix<T>::randn(m, n, rng, init_std);
    lw.w_gate = Matrix<T>::randn(m, n, rng, init_std);
    lw.w_down = Matrix<T>::randn(n, m, rng, init_std);
    lw.attn_norm.assign(static_cast<std::size_t>(m), gain0);
    lw.ffn_norm.assign(static_cast<std::size_t>(m), gain0);
    auto& map = mdl.q_to_kv[static_cast<std::size_t>(l)];
    map.assign(static_cast<std::size_t>(h), 0);
    if (q_map == nullptr)
      for (int i = 0; i < h; ++i) map[static_cast<std::size_t>(i)] = i / (h / kv);
  }
  if (q_map != nullptr) {
    validate_q_to_kv(cfg, *q_map);
    mdl.q_to_kv = *q_map;
  }
  mdl.w.final_norm.assign(static_cast<std::size_t>(m), gain0);
  if (!cfg.tied_embeddings) mdl.w.lm_head = Matrix<T>::randn(m, cfg.vocab, rng, init_std);
  mdl.pos = cfg.positional ? sinusoidal_positions<T>(cfg.max_seq_len, m)
                           : Matrix<T>(cfg.max_seq_len, m);
  return mdl;
}

// Greedy continuation for smoke tests: argmax next token, repeated.
template <typename T>
std::vector<int> greedy_decode(const TransformerModel<T>& mdl, std::vector<int> ids,
                               int n_new) {
  for (int step = 0; step < n_new; ++step) {
    const int S = static_cast<int>(ids.size());
    Batch b;
    b.batch = 1;
    b.seq_len = S;
    b.tokens = ids;
    b.targets.assign(ids.size(), -1);
    b.targets[0] = 0;  // loss value unused; keeps the tape well-formed
    const auto tape = forward(mdl, b);
    int best = 0;
    for (int c = 1; c < tape.logits.cols(); ++c)
      if (tape.logits(S - 1, c) > tape.logits(S - 1, best)) best = c;
    ids.push_back(best);
  }
  return ids;
}

}  // namespace prunelab
