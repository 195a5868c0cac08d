#pragma once

#include <stdexcept>
#include <string>

namespace prunelab {

enum class Errc {
  shape_mismatch,
  not_positive_definite,
  token_out_of_range,
  sequence_too_long,
  stale_tape,
  index_out_of_range,
  floor_violation,
  stale_group,
  no_eligible_candidate,
  numerically_singular,
  non_finite_loss,
  corpus_too_small,
  empty_split,
  io_failure,
  config_error,
  bad_checkpoint,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::not_positive_definite: return "not_positive_definite";
    case Errc::token_out_of_range: return "token_out_of_range";
    case Errc::sequence_too_long: return "sequence_too_long";
    case Errc::stale_tape: return "stale_tape";
    case Errc::index_out_of_range: return "index_out_of_range";
    case Errc::floor_violation: return "floor_violation";
    case Errc::stale_group: return "stale_group";
    case Errc::no_eligible_candidate: return "no_eligible_candidate";
    case Errc::numerically_singular: return "numerically_singular";
    case Errc::non_finite_loss: return "non_finite_loss";
    case Errc::corpus_too_small: return "corpus_too_small";
    case Errc::empty_split: return "empty_split";
    case Errc::io_failure: return "io_failure";
    case Errc::config_error: return "config_error";
    case Errc::bad_checkpoint: return "bad_checkpoint";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace prunelab
