#pragma once

#include <stdexcept>
#include <string>

namespace comute {

// Every failure the library reports derives from one of the std exception
// families so callers can catch broadly or by name.

struct NonDivisibleArea : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TooManyLinks : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IndexOutOfRange : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct DegenerateSegment : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct WindowMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct StaleForwardState : std::logic_error {
  using std::logic_error::logic_error;
};

struct InsufficientCombinations : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct EmptyDataset : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct MissingGridTemplates : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DiskWriteFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace comute
