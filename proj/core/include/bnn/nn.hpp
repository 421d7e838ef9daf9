#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnn/rng.hpp"
#include "bnn/tensor.hpp"

namespace bnn {

/// Leaky-ReLU slope family: alpha = -1 is |x|, 0 is ReLU, 1 is identity.
struct Activation {
    double slope = 0.0;
};

inline double leaky_relu(double x, double alpha) {
    return x > 0.0 ? x : alpha * x;
}

/// Subgradient at x = 0 is defined as alpha. Fixed so that runs are
/// bit-reproducible and so the plateau boundary w* itself has zero gradient.
inline double leaky_relu_grad(double x, double alpha) {
    return x > 0.0 ? 1.0 : alpha;
}

Tensor leaky_relu(const Tensor& x, double alpha);
Tensor leaky_relu_grad(const Tensor& x, double alpha);

enum class LayerKind { Dense, Conv, MaxPool, Flatten };

struct Layer {
    LayerKind kind = LayerKind::Dense;
    Tensor weights;  // Dense: (out, in); Conv: (oc, ic, kh, kw)
    Tensor bias;     // Dense: (out); Conv: (oc)

    bool parametric() const {
        return kind == LayerKind::Dense || kind == LayerKind::Conv;
    }

    static Layer dense(std::size_t in, std::size_t out);
    static Layer conv(std::size_t in_ch, std::size_t out_ch,
                      std::size_t kh, std::size_t kw);
    static Layer maxpool();
    static Layer flatten();
};

/// Deterministic weights for a layered net. The activation is applied after
/// every parametric layer except the last one, which emits the 10 logits.
struct PointNetwork {
    std::vector<Layer> layers;
    Activation activation;

    std::size_t last_parametric() const;
    std::size_t param_count() const;
};

/// He-style init: w ~ N(0, 2/fan_in), biases zero.
PointNetwork make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                      std::size_t classes, double alpha, Rng& rng);
/// conv 3x3 (c1) -> act -> pool 2x2 -> conv 3x3 (c2) -> act -> pool -> dense.
PointNetwork make_convnet(std::size_t in_rows, std::size_t in_cols,
                          std::size_t c1, std::size_t c2,
                          std::size_t classes, double alpha, Rng& rng);

struct LayerCache {
    Tensor pre;                       // pre-activation (parametric layers only)
    Tensor out;                       // layer output as seen by the next layer
    std::vector<std::uint32_t> argmax;  // maxpool winner indices
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    const Tensor& logits() const { return layers.back().out; }
};

struct Gradients {
    std::vector<Tensor> weights;  // indexed by layer; empty for non-parametric
    std::vector<Tensor> bias;

    static Gradients zeros_like(const PointNetwork& net);
};

/// Flat, stable ordering over parameter tensors (weights then bias per
/// parametric layer). Shared by Adam, checkpoints, and the posterior.
std::vector<Tensor*> param_tensors(PointNetwork& net);
std::vector<const Tensor*> param_tensors(const PointNetwork& net);
std::vector<Tensor*> param_tensors(Gradients& g, const PointNetwork& net);

/// Full forward pass; the cache keeps every pre- and post-activation.
void forward(const PointNetwork& net, const Tensor& batch, ForwardCache& cache);

/// Cache-free logits starting at layer `start`, fed with that layer's
/// input. Scanning one weight of layer l only needs layers l..end, so
/// profile scans reuse the frozen prefix activations.
Tensor forward_logits_from(const PointNetwork& net, std::size_t start,
                           const Tensor& input);

/// Mean negative log-likelihood (softmax cross-entropy) of the batch.
double softmax_nll(const Tensor& logits, const std::vector<std::uint8_t>& labels);

/// Row-wise softmax of a (n, k) logit tensor.
Tensor softmax_rows(const Tensor& logits);

/// Sum over the batch of ln p(y_n | x_n); equals -n * mean NLL.
double log_likelihood_sum(const PointNetwork& net, const Tensor& batch,
                          const std::vector<std::uint8_t>& labels);

/// Exact reverse-mode gradients of the mean NLL.
double loss_and_grads(const PointNetwork& net, const Tensor& batch,
                      const std::vector<std::uint8_t>& labels, Gradients& grads);

// Individual layer ops, exposed for direct verification.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias);
void conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& d_out,
                     Tensor& d_kernels, Tensor& d_bias, Tensor& d_input);
Tensor maxpool2x2_forward(const Tensor& input, std::vector<std::uint32_t>& argmax);
Tensor maxpool2x2_backward(const Tensor& d_out, const std::vector<std::uint32_t>& argmax,
                           const std::vector<std::size_t>& input_shape);

}  // namespace bnn
