#pragma once

// Byte-level corpus handling: the file is the token stream (vocab = 256 byte
// values plus one pad id), split positionally into train and held-out parts.
// The training sampler never crosses into the held-out region.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "prunelab/errors.hpp"
#include "prunelab/model.hpp"
#include "prunelab/rng.hpp"

namespace prunelab {

inline constexpr int kByteVocab = 257;  // 256 byte values + pad
inline constexpr int kPadToken = 256;

struct Corpus {
  std::string path;
  std::vector<std::uint8_t> bytes;
  std::size_t split = 0;  // bytes [0, split) train, [split, size) held out

  std::size_t train_size() const { return split; }
  std::size_t heldout_size() const { return bytes.size() - split; }
};

inline Corpus make_corpus(std::vector<std::uint8_t> bytes, double train_frac = 0.98) {
  if (train_frac <= 0.0 || train_frac >= 1.0)
    fail(Errc::config_error, "train_frac must lie strictly between 0 and 1");
  Corpus c;
  c.bytes = std::move(bytes);
  c.split = static_cast<std::size_t>(static_cast<double>(c.bytes.size()) * train_frac);
  return c;
}

inline Corpus load_corpus(const std::string& path, double train_frac = 0.98) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_failure, "cannot open corpus file " + path);
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  if (in.bad()) fail(Errc::io_failure, "read error on corpus file " + path);
  Corpus c = make_corpus(std::move(bytes), train_frac);
  c.path = path;
  return c;
}

// Sample sequences uniformly from the train region. Each sequence needs
// seq_len + 1 consecutive bytes (inputs plus the shifted targets), so no
// sampled index ever reaches the held-out region.
inline Batch sample_batch(const Corpus& c, Rng& rng, int n_seq, int seq_len) {
  if (c.split < static_cast<std::size_t>(seq_len) + 1)
    fail(Errc::corpus_too_small,
         "train split has " + std::to_string(c.split) + " bytes; a batch needs " +
             std::to_string(seq_len + 1));
  Batch b;
  b.batch = n_seq;
  b.seq_len = seq_len;
  b.tokens.resize(static_cast<std::size_t>(n_seq) * seq_len);
  b.targets.resize(b.tokens.size());
  const std::uint64_t starts = static_cast<std::uint64_t>(c.split) - seq_len;
  for (int s = 0; s < n_seq; ++s) {
    const std::size_t off = static_cast<std::size_t>(rng.below(starts));
    for (int i = 0; i < seq_len; ++i) {
      b.tokens[static_cast<std::size_t>(s) * seq_len + i] = c.bytes[off + i];
      b.targets[static_cast<std::size_t>(s) * seq_len + i] = c.bytes[off + i + 1];
    }
  }
  return b;
}

// exp(mean next-token cross-entropy) over non-overlapping windows of the
// chosen split; the trailing partial window is dropped.
template <typename T>
double evaluate_perplexity(const TransformerModel<T>& mdl, const Corpus& c,
                           bool held_out = true, int seq_len = 0,
                           int windows_per_batch = 32) {
  if (seq_len <= 0) seq_len = std::min<int>(mdl.cfg.max_seq_len, 128);
  const std::size_t begin = held_out ? c.split : 0;
  const std::size_t end = held_out ? c.bytes.size() : c.split;
  const std::size_t len = end - begin;
  const std::size_t n_windows = len / static_cast<std::size_t>(seq_len);
  if (n_windows == 0)
    fail(Errc::empty_split, "split holds " + std::to_string(len) +
                                " bytes; one window needs " + std::to_string(seq_len));
  double loss_sum = 0.0;
  std::int64_t scored = 0;
  for (std::size_t w0 = 0; w0 < n_windows; w0 += windows_per_batch) {
    const int nb = static_cast<int>(
        std::min<std::size_t>(windows_per_batch, n_windows - w0));
    Batch b;
    b.batch = nb;
    b.seq_len = seq_len;
    b.tokens.resize(static_cast<std::size_t>(nb) * seq_len);
    b.targets.assign(b.tokens.size(), -1);
    for (int s = 0; s < nb; ++s) {
      const std::size_t off = begin + (w0 + s) * static_cast<std::size_t>(seq_len);
      for (int i = 0; i < seq_len; ++i)
        b.tokens[static_cast<std::size_t>(s) * seq_len + i] = c.bytes[off + i];
      for (int i = 0; i + 1 < seq_len; ++i)
        b.targets[static_cast<std::size_t>(s) * seq_len + i] = c.bytes[off + i + 1];
    }
    ForwardTape<T> tape = forward(mdl, b);
    loss_sum += static_cast<double>(tape.ce.loss) * tape.ce.scored;
    scored += tape.ce.scored;
  }
  return std::exp(loss_sum / static_cast<double>(scored));
}

}  // namespace prunelab
