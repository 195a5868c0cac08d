#pragma once

// Flat key=value run configuration. Every key has a default; unknown keys and
// unparsable values raise config_error naming the key. '#' starts a comment.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "prunelab/errors.hpp"
#include "prunelab/corpus.hpp"
#include "prunelab/trainer.hpp"

namespace prunelab {

struct RunConfig {
  TrainConfig train;
  // architecture
  int vocab = kByteVocab;
  int hidden = 64;
  int layers = 2;
  int heads = 4;
  int kv_heads = 0;  // 0 -> same as heads
  int head_dim = 16;
  int ffn = 128;
  int max_seq_len = 0;  // 0 -> seq_len
  bool tied_embeddings = false;
  bool positional = true;
  double init_std = 0.02;
  double train_frac = 0.98;

  ModelConfig model_config() const {
    const int kv = kv_heads > 0 ? kv_heads : heads;
    const int msl = max_seq_len > 0 ? max_seq_len : train.seq_len;
    return ModelConfig::uniform(vocab, hidden, layers, heads, kv, head_dim, ffn, msl);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename F>
auto parse_or_fail(const std::string& key, const std::string& val, F&& conv) {
  try {
    std::size_t used = 0;
    auto out = conv(val, &used);
    if (used != val.size()) throw std::invalid_argument(val);
    return out;
  } catch (const std::exception&) {
    fail(Errc::config_error, "key " + key + " has unparsable value '" + val + "'");
  }
}

inline std::int64_t to_int(const std::string& key, const std::string& val) {
  return parse_or_fail(key, val,
                       [](const std::string& s, std::size_t* u) { return std::stoll(s, u); });
}

inline std::uint64_t to_uint(const std::string& key, const std::string& val) {
  return parse_or_fail(key, val,
                       [](const std::string& s, std::size_t* u) { return std::stoull(s, u); });
}

inline double to_double(const std::string& key, const std::string& val) {
  return parse_or_fail(key, val,
                       [](const std::string& s, std::size_t* u) { return std::stod(s, u); });
}

inline bool to_bool(const std::string& key, const std::string& val) {
  if (val == "1" || val == "true" || val == "yes") return true;
  if (val == "0" || val == "false" || val == "no") return false;
  fail(Errc::config_error, "key " + key + " wants a boolean, got '" + val + "'");
}

}  // namespace detail

inline void apply_config_line(RunConfig& rc, const std::string& key, const std::string& val) {
  using detail::to_bool;
  using detail::to_double;
  using detail::to_int;
  using detail::to_uint;
  TrainConfig& t = rc.train;
  if (key == "seed") t.seed = to_uint(key, val);
  else if (key == "target_params") t.target_params = to_int(key, val);
  else if (key == "ratio") {
    const auto colon = val.find(':');
    if (colon == std::string::npos)
      fail(Errc::config_error, "key ratio wants p:g, got '" + val + "'");
    t.prune_per_macro = static_cast<int>(to_int(key, val.substr(0, colon)));
    t.gd_per_macro = static_cast<int>(to_int(key, val.substr(colon + 1)));
  }
  else if (key == "lr") t.adamw.lr = to_double(key, val);
  else if (key == "beta1") t.adamw.beta1 = to_double(key, val);
  else if (key == "beta2") t.adamw.beta2 = to_double(key, val);
  else if (key == "eps") t.adamw.eps = to_double(key, val);
  else if (key == "weight_decay") t.adamw.weight_decay = to_double(key, val);
  else if (key == "warmup_steps") t.warmup_steps = static_cast<int>(to_int(key, val));
  else if (key == "schedule") {
    if (val == "cosine") t.cosine_schedule = true;
    else if (val == "constant") t.cosine_schedule = false;
    else fail(Errc::config_error, "key schedule wants cosine|constant, got '" + val + "'");
  }
  else if (key == "batch_tokens") t.batch_tokens = static_cast<int>(to_int(key, val));
  else if (key == "seq_len") t.seq_len = static_cast<int>(to_int(key, val));
  else if (key == "max_steps") t.max_steps = to_int(key, val);
  else if (key == "second_order") t.second_order = to_bool(key, val);
  else if (key == "block_compensation") t.block_compensation = to_bool(key, val);
  else if (key == "metric") {
    if (val == "first_order") t.metric = SaliencyMetric::first_order;
    else if (val == "first_plus_diag_fisher") t.metric = SaliencyMetric::first_plus_diag_fisher;
    else fail(Errc::config_error,
              "key metric wants first_order|first_plus_diag_fisher, got '" + val + "'");
  }
  else if (key == "signed_saliency") t.signed_saliency = to_bool(key, val);
  else if (key == "normalize_scores") t.normalize_scores = to_bool(key, val);
  else if (key == "accumulation") {
    if (val == "ema") t.accumulation = Accumulation::ema;
    else if (val == "sum") t.accumulation = Accumulation::sum;
    else fail(Errc::config_error, "key accumulation wants ema|sum, got '" + val + "'");
  }
  else if (key == "ema_beta") t.ema_beta = to_double(key, val);
  else if (key == "prune_warmup") t.prune_warmup_gd_steps = static_cast<int>(to_int(key, val));
  else if (key == "hessian_window") t.hessian_window = static_cast<int>(to_int(key, val));
  else if (key == "min_heads") t.space.min_heads = static_cast<int>(to_int(key, val));
  else if (key == "min_ffn") t.space.min_ffn = static_cast<int>(to_int(key, val));
  else if (key == "min_hidden") t.space.min_hidden = static_cast<int>(to_int(key, val));
  else if (key == "stop_at_target") t.stop_at_target = to_bool(key, val);
  else if (key == "vocab") rc.vocab = static_cast<int>(to_int(key, val));
  else if (key == "hidden") rc.hidden = static_cast<int>(to_int(key, val));
  else if (key == "layers") rc.layers = static_cast<int>(to_int(key, val));
  else if (key == "heads") rc.heads = static_cast<int>(to_int(key, val));
  else if (key == "kv_heads") rc.kv_heads = static_cast<int>(to_int(key, val));
  else if (key == "head_dim") rc.head_dim = static_cast<int>(to_int(key, val));
  else if (key == "ffn") rc.ffn = static_cast<int>(to_int(key, val));
  else if (key == "max_seq_len") rc.max_seq_len = static_cast<int>(to_int(key, val));
  else if (key == "tied_embeddings") rc.tied_embeddings = to_bool(key, val);
  else if (key == "positional") rc.positional = to_bool(key, val);
  else if (key == "init_std") rc.init_std = to_double(key, val);
  else if (key == "train_frac") rc.train_frac = to_double(key, val);
  else fail(Errc::config_error, "unknown key " + key);
}

inline RunConfig parse_config(const std::string& text) {
  RunConfig rc;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(Errc::config_error, "line " + std::to_string(lineno) + " is not key=value: " + line);
    apply_config_line(rc, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return rc;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_failure, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// PRUNELAB_SEED overrides the config seed when set.
inline void apply_env_seed(RunConfig& rc) {
  if (const char* env = std::getenv("PRUNELAB_SEED")) {
    rc.train.seed = detail::to_uint("PRUNELAB_SEED", env);
  }
}

}  // namespace prunelab
