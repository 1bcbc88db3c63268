#pragma once

#include <stdexcept>
#include <string>

namespace slimseiz {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// EDF / annotation parsing
struct InvalidHeader : Error { using Error::Error; };
struct TruncatedData : Error { using Error::Error; };
struct UnsupportedLayout : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct OrderError : Error { using Error::Error; };

// Windowing / splits
struct EmptyClass : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };

// Classical ML
struct DegenerateInput : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct TooFewMinority : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };

// Neural network core
struct NonFinite : Error { using Error::Error; };
struct GraphCycle : Error { using Error::Error; };
struct NoPositives : Error { using Error::Error; };
struct BudgetExceeded : Error { using Error::Error; };

}  // namespace slimseiz
