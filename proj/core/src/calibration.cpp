#include "bnn/calibration.hpp"

#include <cmath>

#include "bnn/errors.hpp"

namespace bnn {

std::size_t argmax_class(const Tensor& probs, std::size_t row) {
    const std::size_t k = probs.dim(1);
    const double* r = probs.data.data() + row * k;
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
        if (r[j] > r[best]) best = j;
    return best;
}

double accuracy(const PredictionBatch& pred) {
    const std::size_t n = pred.probs.dim(0);
    if (n == 0) throw EmptyBatch("accuracy of an empty batch");
    std::size_t correct = 0;
    for (std::size_t r = 0; r < n; ++r)
        if (argmax_class(pred.probs, r) == pred.labels[r]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(n);
}

ReliabilityBins reliability_rows(const PredictionBatch& pred, std::size_t n_bins) {
    const std::size_t n = pred.probs.dim(0);
    if (n == 0) throw EmptyBatch("reliability of an empty batch");
    ReliabilityBins table;
    table.n_bins = n_bins;
    table.bins.assign(n_bins, ReliabilityBin{});
    std::vector<double> conf_sum(n_bins, 0.0);
    std::vector<std::size_t> correct(n_bins, 0);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t cls = argmax_class(pred.probs, r);
        const double conf = pred.probs.at2(r, cls);
        // bin b covers ((b-1)/B, b/B]; conf 0 lands in bin 1
        std::size_t b = static_cast<std::size_t>(
            std::ceil(conf * static_cast<double>(n_bins)));
        if (b == 0) b = 1;
        if (b > n_bins) b = n_bins;
        auto& bin = table.bins[b - 1];
        bin.count += 1;
        conf_sum[b - 1] += conf;
        if (cls == pred.labels[r]) ++correct[b - 1];
    }
    for (std::size_t b = 0; b < n_bins; ++b) {
        if (table.bins[b].count == 0) continue;
        const double c = static_cast<double>(table.bins[b].count);
        table.bins[b].mean_conf = conf_sum[b] / c;
        table.bins[b].accuracy = static_cast<double>(correct[b]) / c;
    }
    return table;
}

double ece(const PredictionBatch& pred, std::size_t n_bins) {
    const auto table = reliability_rows(pred, n_bins);
    const double n = static_cast<double>(pred.probs.dim(0));
    double total = 0.0;
    for (const auto& bin : table.bins) {
        if (bin.count == 0) continue;
        total += (static_cast<double>(bin.count) / n) *
                 std::abs(bin.accuracy - bin.mean_conf);
    }
    return total;
}

}  // namespace bnn
