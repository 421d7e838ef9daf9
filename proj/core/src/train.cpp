#include "bnn/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <utility>

#include "bnn/calibration.hpp"
#include "bnn/errors.hpp"

namespace bnn {

AdamState AdamState::zeros_like(const std::vector<Tensor*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
        s.m.emplace_back(p->shape);
        s.v.emplace_back(p->shape);
    }
    return s;
}

void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeMismatch("adam: parameter/gradient lists differ in length");
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g)) throw ShapeMismatch("adam: gradient shape mismatch");
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

VariationalPosterior init_posterior(const PointNetwork& arch, Rng& rng) {
    VariationalPosterior vp;
    vp.skeleton = arch;
    // re-randomize means with the caller's rng; rho = -5 keeps early noise small
    for (auto& l : vp.skeleton.layers) {
        if (!l.parametric()) continue;
        const std::size_t fan_in =
            l.kind == LayerKind::Dense
                ? l.weights.dim(1)
                : l.weights.dim(1) * l.weights.dim(2) * l.weights.dim(3);
        const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& w : l.weights.data) w = scale * rng.next_gaussian();
        l.bias.fill(0.0);
    }
    for (const Tensor* p : param_tensors(std::as_const(vp.skeleton))) {
        vp.mu.push_back(*p);
        Tensor rho(p->shape);
        rho.fill(-5.0);
        vp.rho.push_back(std::move(rho));
    }
    return vp;
}

void sample_weights(const VariationalPosterior& vp, Rng& rng,
                    PointNetwork& out, std::vector<Tensor>& noise) {
    if (out.layers.empty()) out = vp.skeleton;
    auto targets = param_tensors(out);
    if (targets.size() != vp.mu.size())
        throw ShapeMismatch("sampled network does not match the posterior");
    noise.resize(vp.mu.size());
    for (std::size_t i = 0; i < vp.mu.size(); ++i) {
        const Tensor& mu = vp.mu[i];
        const Tensor& rho = vp.rho[i];
        Tensor& eps = noise[i];
        if (!eps.same_shape(mu)) eps = Tensor(mu.shape);
        Tensor& w = *targets[i];
        for (std::size_t j = 0; j < mu.size(); ++j) {
            eps[j] = rng.next_gaussian();
            w[j] = mu[j] + softplus(rho[j]) * eps[j];
        }
    }
}

PointNetwork mean_network(const VariationalPosterior& vp) {
    PointNetwork net = vp.skeleton;
    auto targets = param_tensors(net);
    for (std::size_t i = 0; i < vp.mu.size(); ++i) *targets[i] = vp.mu[i];
    return net;
}

double kl_to_standard_normal(const VariationalPosterior& vp) {
    double total = 0.0;
    for (std::size_t i = 0; i < vp.mu.size(); ++i) {
        for (std::size_t j = 0; j < vp.mu[i].size(); ++j) {
            const double mu = vp.mu[i][j];
            const double sigma = softplus(vp.rho[i][j]);
            total += 0.5 * (mu * mu + sigma * sigma - 1.0) - std::log(sigma);
        }
    }
    return total;
}

Tensor predict_point(const PointNetwork& net, const Tensor& batch) {
    ForwardCache cache;
    forward(net, batch, cache);
    return softmax_rows(cache.logits());
}

Tensor predict_bayes(const VariationalPosterior& vp, const Tensor& batch,
                     std::size_t mc_samples, Rng& rng) {
    PointNetwork sampled;
    std::vector<Tensor> noise;
    Tensor acc;
    for (std::size_t s = 0; s < mc_samples; ++s) {
        sample_weights(vp, rng, sampled, noise);
        Tensor p = predict_point(sampled, batch);
        if (s == 0) {
            acc = std::move(p);
        } else {
            for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += p[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(mc_samples);
    for (auto& v : acc.data) v *= inv;
    return acc;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.next_below(i)]);
    return order;
}

void gather_batch(const Tensor& inputs, const std::vector<std::uint8_t>& labels,
                  const std::vector<std::size_t>& order, std::size_t begin,
                  std::size_t end, Tensor& bx, std::vector<std::uint8_t>& by) {
    const std::size_t row = inputs.size() / inputs.dim(0);
    std::vector<std::size_t> shape = inputs.shape;
    shape[0] = end - begin;
    bx = Tensor(shape);
    by.resize(end - begin);
    for (std::size_t k = begin; k < end; ++k) {
        const std::size_t src = order[k];
        std::copy_n(inputs.data.begin() + src * row, row,
                    bx.data.begin() + (k - begin) * row);
        by[k - begin] = labels[src];
    }
}

Tensor training_inputs(const PointNetwork& arch, const ImageSet& images) {
    return arch.layers.front().kind == LayerKind::Conv ? image_batch_4d(images)
                                                       : flatten_images(images);
}

struct EvalResult {
    double acc = std::nan("");
    double ece_val = std::nan("");
};

EvalResult evaluate(const Tensor& probs, const std::vector<std::uint8_t>& labels,
                    std::size_t bins) {
    PredictionBatch pb{probs, labels};
    return {accuracy(pb), ece(pb, bins)};
}

}  // namespace

PointNetwork train_map(const PointNetwork& arch, const DataSplit& data,
                       const TrainConfig& cfg, RunRecord& record) {
    PointNetwork net = arch;
    net.activation.slope = cfg.alpha;
    Rng rng(cfg.seed);
    auto params = param_tensors(net);
    AdamState adam = AdamState::zeros_like(params);
    const Tensor train_x = training_inputs(net, data.train_images);
    const Tensor val_x =
        data.val_images.count ? training_inputs(net, data.val_images) : Tensor{};
    const std::size_t n = data.train_labels.count;
    Gradients grads;
    record.rows.clear();

    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(n, rng);
        double nll_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, n);
            Tensor bx;
            std::vector<std::uint8_t> by;
            gather_batch(train_x, data.train_labels.labels, order, begin, end, bx, by);
            const double nll = loss_and_grads(net, bx, by, grads);
            if (!std::isfinite(nll))
                throw NonFiniteLoss("non-finite NLL at epoch " + std::to_string(epoch));
            std::vector<const Tensor*> g;
            for (Tensor* t : param_tensors(grads, net)) g.push_back(t);
            adam_step(adam, params, g, cfg.learning_rate);
            nll_sum += nll;
            ++steps;
        }
        EpochRow row;
        row.epoch = epoch;
        row.train_nll = steps ? nll_sum / static_cast<double>(steps) : 0.0;
        row.kl = 0.0;
        row.elbo = -row.train_nll * static_cast<double>(n);
        if (data.val_images.count) {
            const auto ev = evaluate(predict_point(net, val_x),
                                     data.val_labels.labels, cfg.ece_bins);
            row.val_accuracy = ev.acc;
            row.val_ece = ev.ece_val;
        }
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        record.rows.push_back(row);
    }
    return net;
}

VariationalPosterior train_mfvi(const PointNetwork& arch, const DataSplit& data,
                                const TrainConfig& cfg, RunRecord& record) {
    Rng rng(cfg.seed);
    PointNetwork proto = arch;
    proto.activation.slope = cfg.alpha;
    VariationalPosterior vp = init_posterior(proto, rng);

    std::vector<Tensor*> opt_params;
    for (auto& t : vp.mu) opt_params.push_back(&t);
    for (auto& t : vp.rho) opt_params.push_back(&t);
    AdamState adam = AdamState::zeros_like(opt_params);

    const std::size_t n = data.train_labels.count;
    const std::size_t num_batches =
        n ? (n + cfg.batch_size - 1) / cfg.batch_size : 1;
    const double kl_scale =
        n == 0 ? 1.0
        : cfg.kl_mode == KlScaleMode::PerBatch
            ? 1.0 / static_cast<double>(num_batches)
            : 1.0 / static_cast<double>(n);

    const Tensor train_x =
        n ? training_inputs(proto, data.train_images) : Tensor{};
    const Tensor val_x =
        data.val_images.count ? training_inputs(proto, data.val_images) : Tensor{};

    PointNetwork sampled;
    std::vector<Tensor> noise;
    Gradients grads;
    std::vector<Tensor> g_mu(vp.mu.size()), g_rho(vp.rho.size());
    for (std::size_t i = 0; i < vp.mu.size(); ++i) {
        g_mu[i] = Tensor(vp.mu[i].shape);
        g_rho[i] = Tensor(vp.rho[i].shape);
    }
    record.rows.clear();

    auto one_step = [&](const Tensor& bx, const std::vector<std::uint8_t>& by,
                        bool has_data) -> double {
        for (auto& t : g_mu) t.fill(0.0);
        for (auto& t : g_rho) t.fill(0.0);
        double nll = 0.0;
        if (has_data) {
            const double inv_s = 1.0 / static_cast<double>(cfg.mc_samples_train);
            for (std::size_t s = 0; s < cfg.mc_samples_train; ++s) {
                sample_weights(vp, rng, sampled, noise);
                nll += inv_s * loss_and_grads(sampled, bx, by, grads);
                auto g = param_tensors(grads, sampled);
                for (std::size_t i = 0; i < vp.mu.size(); ++i) {
                    const Tensor& dw = *g[i];
                    for (std::size_t j = 0; j < dw.size(); ++j) {
                        g_mu[i][j] += inv_s * dw[j];
                        g_rho[i][j] += inv_s * dw[j] * noise[i][j] *
                                       sigmoid(vp.rho[i][j]);
                    }
                }
            }
        }
        // KL gradient: d/dmu = mu; d/dsigma = sigma - 1/sigma, chained
        // through dsigma/drho = sigmoid(rho)
        for (std::size_t i = 0; i < vp.mu.size(); ++i) {
            for (std::size_t j = 0; j < vp.mu[i].size(); ++j) {
                const double sigma = softplus(vp.rho[i][j]);
                g_mu[i][j] += kl_scale * vp.mu[i][j];
                g_rho[i][j] +=
                    kl_scale * (sigma - 1.0 / sigma) * sigmoid(vp.rho[i][j]);
            }
        }
        std::vector<const Tensor*> g;
        for (const auto& t : g_mu) g.push_back(&t);
        for (const auto& t : g_rho) g.push_back(&t);
        adam_step(adam, opt_params, g, cfg.learning_rate);
        return nll;
    };

    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double nll_sum = 0.0;
        std::size_t steps = 0;
        if (n) {
            const auto order = epoch_order(n, rng);
            for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
                const std::size_t end = std::min(begin + cfg.batch_size, n);
                Tensor bx;
                std::vector<std::uint8_t> by;
                gather_batch(train_x, data.train_labels.labels, order, begin, end,
                             bx, by);
                const double nll = one_step(bx, by, true);
                if (!std::isfinite(nll))
                    throw NonFiniteLoss("non-finite NLL at epoch " +
                                        std::to_string(epoch));
                nll_sum += nll;
                ++steps;
            }
        } else {
            one_step(Tensor{}, {}, false);
        }
        EpochRow row;
        row.epoch = epoch;
        row.train_nll = steps ? nll_sum / static_cast<double>(steps) : 0.0;
        row.kl = kl_to_standard_normal(vp);
        row.elbo = -(row.train_nll * static_cast<double>(n) + row.kl);
        if (data.val_images.count) {
            // fresh eval stream per epoch so eval cost never perturbs training
            Rng eval_rng(cfg.seed ^ (0xECE5EEDULL + 0x9E3779B9ULL * (epoch + 1)));
            const Tensor probs =
                predict_bayes(vp, val_x, cfg.mc_samples_predict, eval_rng);
            const auto ev = evaluate(probs, data.val_labels.labels, cfg.ece_bins);
            row.val_accuracy = ev.acc;
            row.val_ece = ev.ece_val;
        }
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        record.rows.push_back(row);
    }
    return vp;
}

}  // namespace bnn
