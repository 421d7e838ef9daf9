#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "bnn/nn.hpp"
#include "bnn/rng.hpp"
#include "bnn/tensor.hpp"

namespace bnn {

/// One weight of the network: dense weights as (layer, neuron, input),
/// conv weights as (layer, out channel, flat index into ic*kh*kw).
struct WeightAddress {
    std::size_t layer = 0;
    std::size_t out_idx = 0;
    std::size_t in_idx = 0;
};

/// 1-D conditional log-likelihood slice along one weight.
struct ProfileScan {
    WeightAddress addr;
    std::vector<double> grid;    // strictly increasing
    std::vector<double> loglik;  // sum_n ln p(y_n | x_n, w)
    double mode_value = 0.0;     // grid point of max loglik (ties: largest)
};

struct PlateauReport {
    bool has_left_plateau = false;
    double plateau_boundary_est = 0.0;
    double theoretical_w_star = std::numeric_limits<double>::infinity();
    bool near_mode = false;
};

struct ScanParams {
    std::size_t n_points = 256;
    double span = 3.0;           // window half-width in units of max(1, |w|)
    bool cover_w_star = true;    // extend the left edge below w* when finite
    double w_star_margin = 1.0;
    double flat_tol = 1e-9;
    double near_frac = 0.25;
};

struct SurveyEntry {
    WeightAddress addr;
    double w_star = std::numeric_limits<double>::infinity();
    PlateauReport report;
};

struct SurveyResult {
    std::vector<SurveyEntry> entries;
    double fraction_with_plateau = 0.0;
    double fraction_near_mode = 0.0;
};

/// Reference to the addressed weight; throws BadAddress.
double& weight_ref(PointNetwork& net, const WeightAddress& addr);

/// sum_n ln p(y_n | x_n) with the addressed weight set to w_value; the
/// network is restored afterwards (observationally pure).
double conditional_loglik(PointNetwork& net, const WeightAddress& addr,
                          double w_value, const Tensor& inputs,
                          const std::vector<std::uint8_t>& labels);

/// The plateau bound: w*_i = min_n w*_{ni} with
/// w*_{ni} = -(sum_{j != i} w_j h_{nj} + b) / h_{ni} when h_{ni} > 0 and
/// +inf when h_{ni} = 0. Requires a ReLU net (slope 0) and nonnegative
/// inputs at the addressed site; both are checked, not assumed. For conv
/// weights the minimum also ranges over every spatial site the kernel
/// element touches.
double theoretical_w_star(PointNetwork& net, const WeightAddress& addr,
                          const Tensor& inputs);

ProfileScan scan_profile(PointNetwork& net, const WeightAddress& addr,
                         double lo, double hi, std::size_t n_points,
                         const Tensor& inputs,
                         const std::vector<std::uint8_t>& labels);

/// Left-plateau detection: the maximal prefix of grid points whose loglik
/// stays within flat_tol of the first one, needing length >= 3, with the
/// scan's left edge below w_star when one is supplied.
PlateauReport detect_plateau(const ProfileScan& scan, double flat_tol,
                             double near_frac,
                             std::optional<double> w_star = std::nullopt);

/// Samples K distinct weights of one layer and reports plateau fractions.
SurveyResult survey(PointNetwork& net, const Tensor& inputs,
                    const std::vector<std::uint8_t>& labels, std::size_t layer,
                    std::size_t k, Rng& rng, const ScanParams& params);

struct DeltaCheck {
    double delta = 0.0;
    double grad_backprop = 0.0;
    double grad_fd = 0.0;
    double loglik = 0.0;
};

struct VerificationVerdict {
    bool pass = false;
    double w_star = 0.0;
    std::vector<DeltaCheck> checks;
    bool grads_zero = false;      // |backprop| < 1e-12 at every delta
    bool fd_zero = false;         // |central fd| < 1e-8 at every delta
    bool loglik_constant = false; // values agree within 1e-9 across deltas
};

/// Sets w_i = w* - delta for each delta and verifies the proposition's
/// three consequences (zero backprop gradient, zero finite difference,
/// constant conditional log-likelihood).
VerificationVerdict verify_proposition(PointNetwork& net, const WeightAddress& addr,
                                       const Tensor& inputs,
                                       const std::vector<std::uint8_t>& labels,
                                       const std::vector<double>& deltas);

}  // namespace bnn
