#pragma once

#include <exception>
#include <stdexcept>
#include <string>

namespace canon {

/// Root of every exception thrown by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CANON_DEFINE_ERROR(Name, Base)   \
  class Name : public Base {             \
   public:                               \
    using Base::Base;                    \
  };

CANON_DEFINE_ERROR(IoError, Error)
CANON_DEFINE_ERROR(FormatError, Error)
CANON_DEFINE_ERROR(ArgumentError, Error)
CANON_DEFINE_ERROR(DimensionMismatch, ArgumentError)
CANON_DEFINE_ERROR(IndexError, ArgumentError)

CANON_DEFINE_ERROR(EmptyLogits, Error)
CANON_DEFINE_ERROR(MissingNormPrompt, Error)
CANON_DEFINE_ERROR(BothWeightsZero, Error)

CANON_DEFINE_ERROR(SingularKernel, Error)
CANON_DEFINE_ERROR(OptimizerError, Error)
CANON_DEFINE_ERROR(EvaluationError, Error)

// Backend failures. Remote transport errors derive from BackendError so
// callers can catch the whole family at once.
CANON_DEFINE_ERROR(BackendError, Error)
CANON_DEFINE_ERROR(Timeout, BackendError)
CANON_DEFINE_ERROR(ProtocolError, BackendError)
CANON_DEFINE_ERROR(ServerError, BackendError)
CANON_DEFINE_ERROR(RangeError, BackendError)

CANON_DEFINE_ERROR(ConfigError, Error)
CANON_DEFINE_ERROR(DatasetError, Error)

#undef CANON_DEFINE_ERROR

/// Call from inside a catch block: rethrows the in-flight engine error as the
/// same type with `context` prefixed to its message. Foreign exceptions pass
/// through untouched.
[[noreturn]] inline void rethrow_with_context(const std::string& context) {
  auto current = std::current_exception();
  auto wrap = [&](const auto& e) { return context + ": " + e.what(); };
  try {
    std::rethrow_exception(current);
  }
#define CANON_RETHROW(Name) \
  catch (const Name& e) { throw Name(wrap(e)); }
  CANON_RETHROW(Timeout)
  CANON_RETHROW(ProtocolError)
  CANON_RETHROW(ServerError)
  CANON_RETHROW(RangeError)
  CANON_RETHROW(BackendError)
  CANON_RETHROW(DimensionMismatch)
  CANON_RETHROW(IndexError)
  CANON_RETHROW(ArgumentError)
  CANON_RETHROW(IoError)
  CANON_RETHROW(FormatError)
  CANON_RETHROW(EmptyLogits)
  CANON_RETHROW(MissingNormPrompt)
  CANON_RETHROW(BothWeightsZero)
  CANON_RETHROW(SingularKernel)
  CANON_RETHROW(OptimizerError)
  CANON_RETHROW(EvaluationError)
  CANON_RETHROW(ConfigError)
  CANON_RETHROW(DatasetError)
  CANON_RETHROW(Error)
#undef CANON_RETHROW
}

}  // namespace canon
