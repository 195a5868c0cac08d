#pragma once

// Deterministic synthetic English-like text: templated clauses over fixed
// lexicons, seeded by the library rng. Gives byte-level structure (spelling,
// agreement patterns, punctuation rhythm) that a small LM can actually learn,
// with no external data dependency.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <string>

#include "prunelab/errors.hpp"
#include "prunelab/rng.hpp"

namespace prunelab {

namespace detail {

inline const char* const kNouns[] = {
    "engine",  "harbor",  "lantern", "river",   "garden",  "ledger",  "meadow",
    "signal",  "copper",  "marble",  "anchor",  "bridge",  "cellar",  "drum",
    "father",  "glacier", "hammer",  "island",  "journal", "kettle",  "ladder",
    "market",  "needle",  "orchard", "pillar",  "quarry",  "ribbon",  "saddle",
    "tunnel",  "valley",  "window",  "yarn",    "archive", "beacon",  "compass",
    "dynamo",  "furnace", "granary", "helm",    "ingot"};
inline const char* const kVerbs[] = {
    "measured", "carried",  "repaired", "watched",  "gathered", "lowered",
    "painted",  "recorded", "sharpened", "steered", "traded",   "weighed",
    "braced",   "cleaned",  "dragged",  "emptied",  "folded",   "guarded",
    "hoisted",  "ignited",  "joined",   "kindled",  "loaded",   "mended"};
inline const char* const kAdjectives[] = {
    "quiet",   "copper",  "narrow", "steady",  "ancient", "bright", "careful",
    "damp",    "eager",   "faded",  "gentle",  "heavy",   "iron",   "jagged",
    "keen",    "long",    "mossy",  "new",     "oiled",   "pale",   "rough",
    "silent",  "tall",    "worn"};
inline const char* const kDeterminers[] = {"the", "a", "this", "every", "its"};
inline const char* const kPrepositions[] = {"near",   "under",  "beside",
                                            "within", "against", "through"};
inline const char* const kConjunctions[] = {"and", "but", "so", "yet"};

template <std::size_t N>
const char* pick(Rng& rng, const char* const (&list)[N]) {
  return list[rng.below(N)];
}

inline void noun_phrase(Rng& rng, std::string& out) {
  out += pick(rng, kDeterminers);
  out += ' ';
  if (rng.below(2) == 0) {
    out += pick(rng, kAdjectives);
    out += ' ';
  }
  out += pick(rng, kNouns);
}

inline void clause(Rng& rng, std::string& out) {
  noun_phrase(rng, out);
  out += ' ';
  out += pick(rng, kVerbs);
  out += ' ';
  noun_phrase(rng, out);
  if (rng.below(3) == 0) {
    out += ' ';
    out += pick(rng, kPrepositions);
    out += ' ';
    noun_phrase(rng, out);
  }
}

}  // namespace detail

inline std::string generate_text(std::uint64_t seed, std::size_t n_bytes) {
  Rng rng = Rng(seed).split("textgen");
  std::string out;
  out.reserve(n_bytes + 256);
  std::size_t sentences = 0;
  while (out.size() < n_bytes) {
    const std::size_t start = out.size();
    detail::clause(rng, out);
    if (rng.below(4) == 0) {
      out += ", ";
      out += detail::pick(rng, detail::kConjunctions);
      out += ' ';
      detail::clause(rng, out);
    }
    out += '.';
    out[start] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[start])));
    ++sentences;
    if (sentences % 6 == 0)
      out += "\n\n";
    else
      out += ' ';
  }
  out.resize(n_bytes);
  return out;
}

inline void write_corpus_file(const std::string& path, std::uint64_t seed,
                              std::size_t n_bytes) {
  const std::string text = generate_text(seed, n_bytes);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_failure, "cannot open corpus file for writing: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) fail(Errc::io_failure, "write error on corpus file: " + path);
}

}  // namespace prunelab
