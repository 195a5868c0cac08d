#pragma once

// Checkpoint format: a plain-text header of key=value lines (format version,
// full architecture including per-layer dims and query->kv maps, rng state,
// progress counters, tensor offsets), a single "payload" line, then raw
// little-endian fp32 data. Save -> load roundtrips bit-identically.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/model.hpp"
#include "prunelab/optimizer.hpp"

namespace prunelab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is defined as little-endian fp32");

inline constexpr const char* kCheckpointFormat = "prunelab-ckpt-v1";

struct CheckpointMeta {
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_state = 0;
  std::int64_t step = 0;
  std::int64_t tokens = 0;
  bool has_optimizer = false;
  std::int64_t opt_t = 0;
};

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::vector<int> split_ints(const std::string& s, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      fail(Errc::bad_checkpoint, "bad integer list for " + key);
    }
  }
  return out;
}

template <typename T>
void for_each_tensor(TransformerModel<T>& mdl,
                     const std::function<void(const std::string&, T*, std::int64_t)>& f) {
  mdl.w.visit([&](const std::string& name, auto& ten) {
    using U = std::remove_cvref_t<decltype(ten)>;
    if constexpr (std::is_same_v<U, Matrix<T>>)
      f(name, ten.data(), ten.size());
    else
      f(name, ten.data(), static_cast<std::int64_t>(ten.size()));
  });
  f("pos", mdl.pos.data(), mdl.pos.size());
}

template <typename T>
void for_each_tensor(const TransformerModel<T>& mdl,
                     const std::function<void(const std::string&, const T*, std::int64_t)>& f) {
  mdl.w.visit([&](const std::string& name, const auto& ten) {
    using U = std::remove_cvref_t<decltype(ten)>;
    if constexpr (std::is_same_v<U, Matrix<T>>)
      f(name, ten.data(), ten.size());
    else
      f(name, ten.data(), static_cast<std::int64_t>(ten.size()));
  });
  f("pos", mdl.pos.data(), mdl.pos.size());
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const TransformerModel<float>& mdl,
                            const CheckpointMeta& meta,
                            const AdamWState<float>* opt = nullptr) {
  std::ostringstream hdr;
  hdr << "format=" << kCheckpointFormat << "\n";
  const ModelConfig& c = mdl.cfg;
  hdr << "vocab=" << c.vocab << "\nhidden=" << c.hidden << "\nhead_dim=" << c.head_dim
      << "\nmax_seq_len=" << c.max_seq_len << "\ntied_embeddings=" << (c.tied_embeddings ? 1 : 0)
      << "\npositional=" << (c.positional ? 1 : 0) << "\nlayers=" << c.layers() << "\n";
  hdr << "heads=" << detail::join_ints(c.heads) << "\n";
  hdr << "kv_heads=" << detail::join_ints(c.kv_heads) << "\n";
  hdr << "ffn=" << detail::join_ints(c.ffn) << "\n";
  for (int l = 0; l < c.layers(); ++l)
    hdr << "q_to_kv." << l << "=" << detail::join_ints(mdl.q_to_kv[static_cast<std::size_t>(l)])
        << "\n";
  hdr << "rng_seed=" << meta.rng_seed << "\nrng_state=" << meta.rng_state
      << "\nstep=" << meta.step << "\ntokens=" << meta.tokens << "\n";
  hdr << "optimizer_state=" << (opt != nullptr ? 1 : 0) << "\n";
  if (opt != nullptr) hdr << "opt_t=" << opt->t << "\n";

  std::vector<std::pair<const float*, std::int64_t>> blobs;
  std::int64_t off = 0;
  detail::for_each_tensor<float>(mdl, [&](const std::string& name, const float* p,
                                          std::int64_t n) {
    hdr << "tensor=" << name << ":" << off << ":" << n << "\n";
    blobs.emplace_back(p, n);
    off += n;
  });
  if (opt != nullptr) {
    for (std::size_t k = 0; k < opt->names.size(); ++k) {
      hdr << "tensor=opt.m." << opt->names[k] << ":" << off << ":" << opt->m[k].size() << "\n";
      blobs.emplace_back(opt->m[k].data(), static_cast<std::int64_t>(opt->m[k].size()));
      off += static_cast<std::int64_t>(opt->m[k].size());
      hdr << "tensor=opt.v." << opt->names[k] << ":" << off << ":" << opt->v[k].size() << "\n";
      blobs.emplace_back(opt->v[k].data(), static_cast<std::int64_t>(opt->v[k].size()));
      off += static_cast<std::int64_t>(opt->v[k].size());
    }
  }
  hdr << "payload_floats=" << off << "\npayload\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_failure, "cannot open checkpoint for writing: " + path);
  const std::string h = hdr.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& [p, n] : blobs)
    out.write(reinterpret_cast<const char*>(p),
              static_cast<std::streamsize>(n * static_cast<std::int64_t>(sizeof(float))));
  out.flush();
  if (!out) fail(Errc::io_failure, "write error on checkpoint: " + path);
}

struct LoadedCheckpoint {
  TransformerModel<float> mdl;
  CheckpointMeta meta;
  AdamWState<float> opt;  // valid iff meta.has_optimizer
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_failure, "cannot open checkpoint: " + path);

  std::map<std::string, std::string> kv;
  std::vector<std::tuple<std::string, std::int64_t, std::int64_t>> tensors;
  std::string line;
  bool saw_payload = false;
  while (std::getline(in, line)) {
    if (line == "payload") {
      saw_payload = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(Errc::bad_checkpoint, "malformed header line: " + line);
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "tensor") {
      const auto c1 = val.find(':');
      const auto c2 = val.rfind(':');
      if (c1 == std::string::npos || c2 == c1)
        fail(Errc::bad_checkpoint, "malformed tensor entry: " + val);
      try {
        tensors.emplace_back(val.substr(0, c1), std::stoll(val.substr(c1 + 1, c2 - c1 - 1)),
                             std::stoll(val.substr(c2 + 1)));
      } catch (const std::exception&) {
        fail(Errc::bad_checkpoint, "malformed tensor entry: " + val);
      }
    } else {
      kv[key] = val;
    }
  }
  if (!saw_payload) fail(Errc::bad_checkpoint, "missing payload marker");

  auto need = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) fail(Errc::bad_checkpoint, "missing header key " + key);
    return it->second;
  };
  auto to_i64 = [&](const std::string& key) -> std::int64_t {
    try {
      return std::stoll(need(key));
    } catch (const std::exception&) {
      fail(Errc::bad_checkpoint, "bad integer for " + key);
    }
  };
  auto to_u64 = [&](const std::string& key) -> std::uint64_t {
    try {
      return std::stoull(need(key));
    } catch (const std::exception&) {
      fail(Errc::bad_checkpoint, "bad integer for " + key);
    }
  };

  if (need("format") != kCheckpointFormat)
    fail(Errc::bad_checkpoint, "unknown format version: " + need("format"));

  ModelConfig cfg;
  cfg.vocab = static_cast<int>(to_i64("vocab"));
  cfg.hidden = static_cast<int>(to_i64("hidden"));
  cfg.head_dim = static_cast<int>(to_i64("head_dim"));
  cfg.max_seq_len = static_cast<int>(to_i64("max_seq_len"));
  cfg.tied_embeddings = to_i64("tied_embeddings") != 0;
  cfg.positional = to_i64("positional") != 0;
  const int layers = static_cast<int>(to_i64("layers"));
  cfg.heads = detail::split_ints(need("heads"), "heads");
  cfg.kv_heads = detail::split_ints(need("kv_heads"), "kv_heads");
  cfg.ffn = detail::split_ints(need("ffn"), "ffn");
  if (cfg.layers() != layers || static_cast<int>(cfg.kv_heads.size()) != layers ||
      static_cast<int>(cfg.ffn.size()) != layers)
    fail(Errc::bad_checkpoint, "per-layer dim lists disagree with layer count");

  LoadedCheckpoint lc{empty_model<float>(cfg), {}, {}};
  for (int l = 0; l < layers; ++l) {
    const std::string key = "q_to_kv." + std::to_string(l);
    lc.mdl.q_to_kv[static_cast<std::size_t>(l)] = detail::split_ints(need(key), key);
  }
  validate_q_to_kv(cfg, lc.mdl.q_to_kv);
  lc.meta.rng_seed = to_u64("rng_seed");
  lc.meta.rng_state = to_u64("rng_state");
  lc.meta.step = to_i64("step");
  lc.meta.tokens = to_i64("tokens");
  lc.meta.has_optimizer = to_i64("optimizer_state") != 0;

  const std::int64_t payload_floats = to_i64("payload_floats");
  std::vector<float> payload(static_cast<std::size_t>(payload_floats));
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(payload.size() * sizeof(float)))
    fail(Errc::bad_checkpoint, "payload truncated");
  char extra;
  if (in.read(&extra, 1) && in.gcount() == 1)
    fail(Errc::bad_checkpoint, "trailing bytes after payload");

  std::map<std::string, std::pair<std::int64_t, std::int64_t>> index;
  for (const auto& [name, off, n] : tensors) {
    if (off < 0 || n < 0 || off + n > payload_floats)
      fail(Errc::bad_checkpoint, "tensor " + name + " exceeds payload");
    if (!index.emplace(name, std::make_pair(off, n)).second)
      fail(Errc::bad_checkpoint, "duplicate tensor " + name);
  }
  auto fetch = [&](const std::string& name, float* dst, std::int64_t n) {
    const auto it = index.find(name);
    if (it == index.end()) fail(Errc::bad_checkpoint, "missing tensor " + name);
    if (it->second.second != n)
      fail(Errc::bad_checkpoint, "tensor " + name + " holds " +
                                     std::to_string(it->second.second) + " floats, expected " +
                                     std::to_string(n));
    std::copy_n(payload.data() + it->second.first, static_cast<std::size_t>(n), dst);
  };
  detail::for_each_tensor<float>(lc.mdl, fetch);

  if (lc.meta.has_optimizer) {
    lc.opt = make_adamw(lc.mdl);
    lc.opt.t = to_i64("opt_t");
    for (std::size_t k = 0; k < lc.opt.names.size(); ++k) {
      fetch("opt.m." + lc.opt.names[k], lc.opt.m[k].data(),
            static_cast<std::int64_t>(lc.opt.m[k].size()));
      fetch("opt.v." + lc.opt.names[k], lc.opt.v[k].data(),
            static_cast<std::int64_t>(lc.opt.v[k].size()));
    }
  }
  return lc;
}

}  // namespace prunelab
