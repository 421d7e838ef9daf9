#pragma once

#include <cstdint>
#include <vector>

#include "bnn/dataset.hpp"
#include "bnn/nn.hpp"
#include "bnn/rng.hpp"
#include "bnn/tensor.hpp"

namespace bnn {

/// Per-weight Gaussian posterior factors q(w) = N(mu, sigma^2) with
/// sigma = softplus(rho). Tensors are aligned with param_tensors() order
/// of the skeleton network.
struct VariationalPosterior {
    PointNetwork skeleton;  // shapes and activation; parameter values unused
    std::vector<Tensor> mu;
    std::vector<Tensor> rho;
};

inline double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

enum class KlScaleMode {
    PerBatch,    // kl_scale = 1 / (minibatches per epoch)
    PerExample,  // kl_scale = 1 / N
};

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t epochs = 20;
    std::size_t batch_size = 100;
    std::uint64_t seed = 1;
    double alpha = 0.0;  // activation slope
    std::size_t mc_samples_train = 1;
    std::size_t mc_samples_predict = 32;
    KlScaleMode kl_mode = KlScaleMode::PerBatch;
    std::size_t ece_bins = 15;
};

/// Standard Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState zeros_like(const std::vector<Tensor*>& params);
};

void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, double lr);

struct EpochRow {
    std::size_t epoch = 0;
    double train_nll = 0.0;
    double kl = 0.0;
    double elbo = 0.0;
    double val_accuracy = 0.0;
    double val_ece = 0.0;
    double wall_seconds = 0.0;
};

struct RunRecord {
    std::vector<EpochRow> rows;
};

/// Posterior with He-initialized means and rho = -5 (sigma ~ 6.7e-3).
VariationalPosterior init_posterior(const PointNetwork& arch, Rng& rng);

/// Reparameterized draw w = mu + sigma * eps into `out`; the noise draw is
/// returned so gradients can be passed back (dw/dmu = 1, dw/drho =
/// eps * sigmoid(rho)).
void sample_weights(const VariationalPosterior& vp, Rng& rng,
                    PointNetwork& out, std::vector<Tensor>& noise);

/// Posterior mean network (sigma ignored).
PointNetwork mean_network(const VariationalPosterior& vp);

/// Closed-form KL(q || N(0,1)) summed over all parameters:
/// sum 1/2 (mu^2 + sigma^2 - 1 - 2 ln sigma).
double kl_to_standard_normal(const VariationalPosterior& vp);

/// Mean-field VI with the reparameterization trick; loss per step is
/// mean-batch NLL + kl_scale * KL, optimized by Adam over (mu, rho).
VariationalPosterior train_mfvi(const PointNetwork& arch, const DataSplit& data,
                                const TrainConfig& cfg, RunRecord& record);

/// Plain NLL minimization with Adam (deterministic / MAP-style training).
PointNetwork train_map(const PointNetwork& arch, const DataSplit& data,
                       const TrainConfig& cfg, RunRecord& record);

/// Monte-Carlo predictive distribution: (1/S) sum_s softmax(f(x; w_s)).
Tensor predict_bayes(const VariationalPosterior& vp, const Tensor& batch,
                     std::size_t mc_samples, Rng& rng);

/// Deterministic softmax predictions of a point network.
Tensor predict_point(const PointNetwork& net, const Tensor& batch);

}  // namespace bnn
