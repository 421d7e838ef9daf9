#pragma once

#include <cstdint>
#include <vector>

#include "bnn/tensor.hpp"

namespace bnn {

/// Class probabilities with their targets. Rows must sum to 1 within 1e-9;
/// argmax ties break toward the lowest class index.
struct PredictionBatch {
    Tensor probs;  // (n, 10)
    std::vector<std::uint8_t> labels;
};

struct ReliabilityBin {
    std::size_t count = 0;
    double mean_conf = 0.0;
    double accuracy = 0.0;
};

/// Equal-width partition of (0, 1]; empty bins contribute 0 to ECE.
struct ReliabilityBins {
    std::size_t n_bins = 15;
    std::vector<ReliabilityBin> bins;
};

double accuracy(const PredictionBatch& pred);

/// ECE = sum_b (count_b / n) * |acc_b - conf_b| over equal-width bins of
/// max-probability confidence. Bin b covers ((b-1)/B, b/B]; confidence 0
/// goes to bin 1.
double ece(const PredictionBatch& pred, std::size_t n_bins = 15);

ReliabilityBins reliability_rows(const PredictionBatch& pred, std::size_t n_bins = 15);

/// Predicted class of one probability row (lowest index wins ties).
std::size_t argmax_class(const Tensor& probs, std::size_t row);

}  // namespace bnn
