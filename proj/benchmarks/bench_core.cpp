#include <benchmark/benchmark.h>

#include "bnn/calibration.hpp"
#include "bnn/nn.hpp"
#include "bnn/probe.hpp"
#include "bnn/rng.hpp"

using namespace bnn;

namespace {

Tensor random_batch(std::size_t n, std::size_t dim, Rng& rng, bool nonneg) {
    Tensor t({n, dim});
    for (auto& v : t.data) v = nonneg ? rng.next_double() : rng.next_gaussian();
    return t;
}

std::vector<std::uint8_t> random_labels(std::size_t n, Rng& rng) {
    std::vector<std::uint8_t> labels(n);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.next_below(10));
    return labels;
}

}  // namespace

static void BM_MlpForward(benchmark::State& state) {
    const auto batch_n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    auto net = make_mlp(784, {64, 64}, 10, -0.5, rng);
    auto batch = random_batch(batch_n, 784, rng, true);
    ForwardCache cache;
    for (auto _ : state) {
        forward(net, batch, cache);
        benchmark::DoNotOptimize(cache.logits().data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(32)->Arg(128)->Arg(512);

static void BM_MlpBackward(benchmark::State& state) {
    const auto batch_n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    auto net = make_mlp(784, {64, 64}, 10, -0.5, rng);
    auto batch = random_batch(batch_n, 784, rng, true);
    auto labels = random_labels(batch_n, rng);
    Gradients grads = Gradients::zeros_like(net);
    for (auto _ : state) {
        const double loss = loss_and_grads(net, batch, labels, grads);
        benchmark::DoNotOptimize(loss);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpBackward)->Arg(32)->Arg(128)->Arg(512);

static void BM_ConvForward(benchmark::State& state) {
    Rng rng(3);
    auto net = make_convnet(28, 28, 8, 16, 10, -0.5, rng);
    const std::size_t n = 32;
    Tensor batch({n, 1, 28, 28});
    for (auto& v : batch.data) v = rng.next_double();
    ForwardCache cache;
    for (auto _ : state) {
        forward(net, batch, cache);
        benchmark::DoNotOptimize(cache.logits().data.data());
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ConvForward);

static void BM_ProfileScan(benchmark::State& state) {
    Rng rng(4);
    auto net = make_mlp(784, {64, 64}, 10, 0.0, rng);
    auto batch = random_batch(128, 784, rng, true);
    auto labels = random_labels(128, rng);
    const WeightAddress addr{1, 10, 20};
    for (auto _ : state) {
        auto scan = scan_profile(net, addr, -3.0, 3.0, 256, batch, labels);
        benchmark::DoNotOptimize(scan.loglik.data());
    }
}
BENCHMARK(BM_ProfileScan);

static void BM_Ece(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(5);
    PredictionBatch pred;
    pred.probs = Tensor({n, 10});
    pred.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 10; ++j) {
            pred.probs.at2(i, j) = rng.next_double() + 1e-9;
            s += pred.probs.at2(i, j);
        }
        for (std::size_t j = 0; j < 10; ++j) pred.probs.at2(i, j) /= s;
        pred.labels[i] = static_cast<std::uint8_t>(rng.next_below(10));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(ece(pred, 15));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Ece)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
