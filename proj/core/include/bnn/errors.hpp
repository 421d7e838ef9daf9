#pragma once

#include <stdexcept>
#include <string>

namespace bnn {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// dataset
struct WrongMagic : Error { using Error::Error; };
struct Truncated : Error { using Error::Error; };
struct LabelOutOfRange : Error { using Error::Error; };
struct NotEnoughData : Error { using Error::Error; };

// tensor-nn / training
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };

// calibration
struct EmptyBatch : Error { using Error::Error; };

// likelihood probe
struct BadAddress : Error { using Error::Error; };
struct NotReLU : Error { using Error::Error; };
struct NegativeInput : Error { using Error::Error; };
struct InfiniteWStar : Error { using Error::Error; };
struct NotEnoughWeights : Error { using Error::Error; };

// io
struct BadCheckpoint : Error { using Error::Error; };
struct BadConfig : Error { using Error::Error; };
struct BadCsv : Error { using Error::Error; };

}  // namespace bnn
