#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "bnn/checkpoint.hpp"
#include "bnn/train.hpp"
#include "support/test_utils.hpp"

using namespace bnn;
using namespace bnn::testutil;

namespace {

const double RHO_SIGMA1 = std::log(std::exp(1.0) - 1.0);  // softplus == 1

// 1-in 2-out dense skeleton with hand-set posterior factors
VariationalPosterior tiny_posterior() {
    VariationalPosterior vp;
    vp.skeleton.activation.slope = 0.0;
    vp.skeleton.layers.push_back(Layer::dense(1, 2));
    vp.mu = {Tensor({2, 1}), Tensor({2})};
    vp.rho = {Tensor({2, 1}), Tensor({2})};
    for (auto& t : vp.rho) t.fill(RHO_SIGMA1);
    return vp;
}

}  // namespace

TEST_CASE("softplus and sigmoid basics") {
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(softplus(RHO_SIGMA1) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(softplus(100.0) == 100.0);  // large-x shortcut
    CHECK(sigmoid(0.0) == 0.5);
    // d softplus / dx == sigmoid
    const double h = 1e-6;
    CHECK((softplus(0.4 + h) - softplus(0.4 - h)) / (2 * h) ==
          doctest::Approx(sigmoid(0.4)).epsilon(1e-8));
}

TEST_CASE("kl is exactly zero at the prior and 0.5 for a unit mean shift") {
    auto vp = tiny_posterior();  // all mu = 0, all sigma = 1
    CHECK(kl_to_standard_normal(vp) == doctest::Approx(0.0).epsilon(1e-14));

    vp.mu[0][0] = 1.0;  // KL(N(1,1) || N(0,1)) = 1/2
    CHECK(kl_to_standard_normal(vp) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("kl matches the closed form on a hand value") {
    auto vp = tiny_posterior();
    vp.mu[0][0] = 0.3;
    vp.rho[0][0] = -0.7;
    const double sigma = softplus(-0.7);
    const double expect =
        0.5 * (0.3 * 0.3 + sigma * sigma - 1.0) - std::log(sigma);
    CHECK(kl_to_standard_normal(vp) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(kl_to_standard_normal(vp) > 0.0);
}

TEST_CASE("kl closed form agrees with a monte-carlo estimate") {
    const double mu = 0.7;
    const double rho = 0.3;
    const double sigma = softplus(rho);
    const double closed = 0.5 * (mu * mu + sigma * sigma - 1.0) - std::log(sigma);

    Rng rng(2024);
    const std::size_t s = 400000;
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
        const double w = mu + sigma * rng.next_gaussian();
        const double z = (w - mu) / sigma;
        const double diff = -std::log(sigma) - 0.5 * z * z + 0.5 * w * w;
        sum += diff;
        sumsq += diff * diff;
    }
    const double mean = sum / s;
    const double se = std::sqrt((sumsq / s - mean * mean) / s);
    CHECK(std::abs(mean - closed) < 5.0 * se + 1e-6);
}

TEST_CASE("sample_weights satisfies the reparameterization identity exactly") {
    auto vp = tiny_posterior();
    vp.mu[0][0] = 0.5;
    vp.mu[0][1] = -1.5;
    vp.rho[0][0] = -2.0;
    Rng rng(5);
    PointNetwork net;
    std::vector<Tensor> noise;
    sample_weights(vp, rng, net, noise);
    auto params = param_tensors(net);
    for (std::size_t i = 0; i < vp.mu.size(); ++i)
        for (std::size_t j = 0; j < vp.mu[i].size(); ++j)
            CHECK((*params[i])[j] ==
                  vp.mu[i][j] + softplus(vp.rho[i][j]) * noise[i][j]);
}

TEST_CASE("sample_weights collapses to the mean when sigma vanishes") {
    auto vp = tiny_posterior();
    vp.mu[0][0] = 3.25;
    for (auto& t : vp.rho) t.fill(-40.0);  // sigma ~ 4e-18
    Rng rng(8);
    PointNetwork net;
    std::vector<Tensor> noise;
    sample_weights(vp, rng, net, noise);
    CHECK(net.layers[0].weights[0] == doctest::Approx(3.25).epsilon(1e-15));
}

TEST_CASE("sample_weights empirical mean and spread match the factors") {
    auto vp = tiny_posterior();
    vp.mu[0][0] = -0.8;
    vp.rho[0][0] = 0.2;
    const double sigma = softplus(0.2);
    Rng rng(77);
    PointNetwork net;
    std::vector<Tensor> noise;
    const std::size_t s = 20000;
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
        sample_weights(vp, rng, net, noise);
        const double w = net.layers[0].weights[0];
        sum += w;
        sumsq += w * w;
    }
    const double mean = sum / s;
    const double sd = std::sqrt(sumsq / s - mean * mean);
    CHECK(std::abs(mean - (-0.8)) < 4.0 * sigma / std::sqrt(double(s)) + 1e-3);
    CHECK(sd == doctest::Approx(sigma).epsilon(0.03));
}

TEST_CASE("analytic single-step gradients match finite differences of the "
          "frozen-noise objective") {
    // objective: L(mu, rho) = nll(mu + softplus(rho) * eps) + c * KL(mu, rho)
    // with one frozen noise draw; this is exactly what one MFVI step descends
    Rng data_rng(6);
    auto batch = random_batch(4, 3, data_rng);
    auto labels = random_labels(4, 10, data_rng);

    PointNetwork arch;
    arch.activation.slope = -0.5;
    arch.layers.push_back(Layer::dense(3, 10));
    VariationalPosterior vp;
    vp.skeleton = arch;
    vp.mu = {Tensor({10, 3}), Tensor({10})};
    vp.rho = {Tensor({10, 3}), Tensor({10})};
    for (auto& t : vp.mu)
        for (auto& v : t.data) v = 0.4 * data_rng.next_gaussian();
    for (auto& t : vp.rho)
        for (auto& v : t.data) v = -1.0 + 0.5 * data_rng.next_gaussian();

    std::vector<Tensor> eps = vp.mu;  // shapes only
    for (auto& t : eps)
        for (auto& v : t.data) v = data_rng.next_gaussian();

    const double c = 0.01;
    auto objective = [&] {
        PointNetwork net = vp.skeleton;
        auto params = param_tensors(net);
        for (std::size_t i = 0; i < vp.mu.size(); ++i)
            for (std::size_t j = 0; j < vp.mu[i].size(); ++j)
                (*params[i])[j] =
                    vp.mu[i][j] + softplus(vp.rho[i][j]) * eps[i][j];
        return softmax_nll(forward_logits_from(net, 0, batch), labels) +
               c * kl_to_standard_normal(vp);
    };

    // analytic gradients via the chain rule through w = mu + sigma * eps
    PointNetwork net = vp.skeleton;
    auto params = param_tensors(net);
    for (std::size_t i = 0; i < vp.mu.size(); ++i)
        for (std::size_t j = 0; j < vp.mu[i].size(); ++j)
            (*params[i])[j] = vp.mu[i][j] + softplus(vp.rho[i][j]) * eps[i][j];
    Gradients grads = Gradients::zeros_like(net);
    loss_and_grads(net, batch, labels, grads);
    auto dw = param_tensors(grads, net);

    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < vp.mu.size(); ++i) {
        for (std::size_t j = 0; j < vp.mu[i].size(); ++j) {
            const double sig = sigmoid(vp.rho[i][j]);
            const double sigma = softplus(vp.rho[i][j]);
            const double g_mu = (*dw[i])[j] + c * vp.mu[i][j];
            const double g_rho = (*dw[i])[j] * eps[i][j] * sig +
                                 c * (sigma - 1.0 / sigma) * sig;

            double* vars[2] = {&vp.mu[i][j], &vp.rho[i][j]};
            const double analytic[2] = {g_mu, g_rho};
            for (int k = 0; k < 2; ++k) {
                const double saved = *vars[k];
                *vars[k] = saved + h;
                const double up = objective();
                *vars[k] = saved - h;
                const double down = objective();
                *vars[k] = saved;
                const double fd = (up - down) / (2 * h);
                const double denom =
                    std::max({std::abs(fd), std::abs(analytic[k]), 1e-6});
                worst = std::max(worst, std::abs(fd - analytic[k]) / denom);
            }
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
    Tensor p({3}, {1.0, -2.0, 0.5});
    Tensor g({3});
    AdamState st = AdamState::zeros_like({&p});
    adam_step(st, {&p}, {&g}, 0.1);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);
    CHECK(p[2] == 0.5);
}

TEST_CASE("adam first step has magnitude lr in the gradient direction") {
    Tensor p({2}, {0.0, 0.0});
    Tensor g({2}, {4.0, -0.25});
    AdamState st = AdamState::zeros_like({&p});
    adam_step(st, {&p}, {&g}, 0.001);
    // bias correction makes mhat = g, vhat = g^2, so step = -lr * sign(g)
    CHECK(p[0] == doctest::Approx(-0.001).epsilon(1e-5));
    CHECK(p[1] == doctest::Approx(0.001).epsilon(1e-4));
}

TEST_CASE("adam minimizes a quadratic bowl") {
    Tensor p({1}, {5.0});
    Tensor g({1});
    AdamState st = AdamState::zeros_like({&p});
    for (int i = 0; i < 5000; ++i) {
        g[0] = 2.0 * (p[0] - 3.0);
        adam_step(st, {&p}, {&g}, 0.01);
    }
    CHECK(std::abs(p[0] - 3.0) < 1e-3);
}

TEST_CASE("map training separates the toy blobs") {
    auto data = toy_blobs(200, 200, 99);
    Rng rng(1);
    auto arch = make_mlp(2, {8}, 10, 0.0, rng);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 20;
    cfg.learning_rate = 0.01;
    RunRecord rec;
    auto net = train_map(arch, data, cfg, rec);
    REQUIRE(rec.rows.size() == 30);
    CHECK(rec.rows.back().val_accuracy > 0.95);
    CHECK(rec.rows.back().train_nll < rec.rows.front().train_nll);
    (void)net;
}

TEST_CASE("mfvi training separates the toy blobs and raises the elbo") {
    auto data = toy_blobs(200, 200, 99);
    Rng rng(1);
    auto arch = make_mlp(2, {8}, 10, 0.0, rng);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 20;
    cfg.learning_rate = 0.01;
    cfg.kl_mode = KlScaleMode::PerExample;
    RunRecord rec;
    auto vp = train_mfvi(arch, data, cfg, rec);
    CHECK(rec.rows.back().val_accuracy > 0.95);
    CHECK(rec.rows.back().elbo > rec.rows.front().elbo);
    CHECK(rec.rows.back().kl > 0.0);
    (void)vp;
}

TEST_CASE("training is bit-deterministic in the seed") {
    auto data = toy_blobs(100, 50, 4);
    Rng rng(2);
    auto arch = make_mlp(2, {6}, 10, -0.5, rng);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 25;
    cfg.seed = 31;

    RunRecord a, b;
    train_mfvi(arch, data, cfg, a);
    train_mfvi(arch, data, cfg, b);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].train_nll == b.rows[i].train_nll);
        CHECK(a.rows[i].kl == b.rows[i].kl);
        CHECK(a.rows[i].val_ece == b.rows[i].val_ece);
    }

    cfg.seed = 32;
    RunRecord c;
    train_mfvi(arch, data, cfg, c);
    CHECK(c.rows.back().train_nll != a.rows.back().train_nll);
}

TEST_CASE("with no data the posterior falls back to the prior") {
    DataSplit empty;  // zero train and val examples
    Rng rng(3);
    auto arch = make_mlp(2, {3}, 10, 0.0, rng);
    TrainConfig cfg;
    cfg.epochs = 4000;  // one KL-only step per epoch
    cfg.learning_rate = 0.01;
    RunRecord rec;
    auto vp = train_mfvi(arch, empty, cfg, rec);
    double worst_mu = 0.0, worst_sigma = 0.0;
    for (std::size_t i = 0; i < vp.mu.size(); ++i) {
        for (std::size_t j = 0; j < vp.mu[i].size(); ++j) {
            worst_mu = std::max(worst_mu, std::abs(vp.mu[i][j]));
            worst_sigma =
                std::max(worst_sigma, std::abs(softplus(vp.rho[i][j]) - 1.0));
        }
    }
    CHECK(worst_mu < 1e-2);
    CHECK(worst_sigma < 1e-2);
    CHECK(rec.rows.back().kl < 1e-3);
}

TEST_CASE("predict_bayes rows sum to one and match the mean net when "
          "sigma vanishes") {
    auto vp = tiny_posterior();
    vp.mu[0][0] = 1.2;
    vp.mu[0][1] = -0.4;
    for (auto& t : vp.rho) t.fill(-40.0);
    Tensor batch({3, 1}, {0.5, -1.0, 2.0});
    Rng rng(10);
    auto probs = predict_bayes(vp, batch, 16, rng);
    auto point = predict_point(mean_network(vp), batch);
    for (std::size_t i = 0; i < 3; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
            s += probs.at2(i, j);
            CHECK(probs.at2(i, j) == doctest::Approx(point.at2(i, j)).epsilon(1e-12));
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("predict_bayes matches 2-d quadrature on a two-weight net") {
    // only the two weights are random (bias sigma ~ 0), so the predictive
    // integral is over a 2-d gaussian and can be done by brute force
    auto vp = tiny_posterior();
    vp.mu[0][0] = 0.9;
    vp.mu[0][1] = -0.3;
    vp.rho[0][0] = RHO_SIGMA1;  // sigma 1
    vp.rho[0][1] = -0.5;
    vp.rho[1].fill(-40.0);
    const double s0 = softplus(vp.rho[0][0]);
    const double s1 = softplus(vp.rho[0][1]);

    const double x = 1.3;
    Tensor batch({1, 1}, {x});

    // midpoint quadrature over +-8 sigma
    const int q = 400;
    double quad0 = 0.0, wsum = 0.0;
    for (int a = 0; a < q; ++a) {
        const double za = -8.0 + 16.0 * (a + 0.5) / q;
        const double wa = std::exp(-0.5 * za * za);
        const double w0 = vp.mu[0][0] + s0 * za;
        for (int b = 0; b < q; ++b) {
            const double zb = -8.0 + 16.0 * (b + 0.5) / q;
            const double wgt = wa * std::exp(-0.5 * zb * zb);
            const double w1 = vp.mu[0][1] + s1 * zb;
            const double p0 = 1.0 / (1.0 + std::exp((w1 - w0) * x));
            quad0 += wgt * p0;
            wsum += wgt;
        }
    }
    quad0 /= wsum;

    Rng rng(123);
    auto probs = predict_bayes(vp, batch, 10000, rng);
    CHECK(std::abs(probs.at2(0, 0) - quad0) < 2e-2);
}

TEST_CASE("posterior checkpoints round-trip bit-exactly") {
    auto data = toy_blobs(60, 20, 8);
    Rng rng(9);
    auto arch = make_mlp(2, {4}, 10, -0.5, rng);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 30;
    RunRecord rec;
    auto vp = train_mfvi(arch, data, cfg, rec);

    const std::string path = "tmp_posterior.ckpt";
    save_posterior(vp, path);
    CHECK(checkpoint_is_posterior(path));
    auto back = load_posterior(path);
    REQUIRE(back.mu.size() == vp.mu.size());
    for (std::size_t i = 0; i < vp.mu.size(); ++i)
        for (std::size_t j = 0; j < vp.mu[i].size(); ++j) {
            CHECK(back.mu[i][j] == vp.mu[i][j]);
            CHECK(back.rho[i][j] == vp.rho[i][j]);
        }
    CHECK(back.skeleton.activation.slope == vp.skeleton.activation.slope);
    std::remove(path.c_str());
}
