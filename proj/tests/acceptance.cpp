// Acceptance gate: end-to-end checks of the plateau analysis and the
// calibration experiment at desk scale. One PASS/FAIL line per criterion;
// the process exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "bnn/calibration.hpp"
#include "bnn/csvio.hpp"
#include "bnn/dataset.hpp"
#include "bnn/nn.hpp"
#include "bnn/probe.hpp"
#include "bnn/rng.hpp"
#include "bnn/svg.hpp"
#include "bnn/train.hpp"
#include "support/test_utils.hpp"

using namespace bnn;
using namespace bnn::testutil;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::cout << "criterion " << criterion << ": " << (pass ? "PASS" : "FAIL")
              << " - " << detail << std::endl;
    if (!pass) ++g_failures;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

int main() {
    const std::string dir = fixture_dir();
    std::cout << "data: " << dir << "\n";
    const auto all_images = load_idx_images(dir + "/train-images-idx3-ubyte");
    const auto all_labels = load_idx_labels(dir + "/train-labels-idx1-ubyte");

    // ------------------------------------------------ shared MAP model
    // relu mlp 784-64-64-10 fitted on 600 examples; probed on its second
    // hidden layer where the inputs are relu outputs (nonnegative)
    const auto small = make_split(all_images, all_labels, 600, 1000, 12345);
    const Tensor probe_x = flatten_images(small.train_images);
    const auto& probe_y = small.train_labels.labels;

    Rng arch_rng(7);
    const auto arch = make_mlp(784, {64, 64}, 10, 0.0, arch_rng);
    TrainConfig map_cfg;
    map_cfg.epochs = 40;
    map_cfg.seed = 3;
    RunRecord map_rec;
    auto relu_net = train_map(arch, small, map_cfg, map_rec);

    // ------------------------------------------------------ criterion 1
    // theoretical plateau bound w* verified on >= 20 second-layer weights:
    // below w* the backprop gradient vanishes (|g| < 1e-12), the central
    // finite difference vanishes (< 1e-8), and the conditional
    // log-likelihood is constant within 1e-9 across deltas {0.1, 1, 10}
    std::vector<WeightAddress> verified;
    std::vector<double> w_stars;
    {
        const std::size_t layer = 1;
        const std::size_t total = relu_net.layers[layer].weights.size();
        const std::size_t cols = relu_net.layers[layer].weights.dim(1);
        std::vector<std::size_t> pool(total);
        for (std::size_t i = 0; i < total; ++i) pool[i] = i;
        Rng pick(404);
        for (std::size_t i = 0; i + 1 < total; ++i)
            std::swap(pool[i], pool[i + pick.next_below(total - i)]);

        std::size_t passed = 0, tried = 0;
        for (std::size_t flat : pool) {
            if (verified.size() >= 20) break;
            WeightAddress addr{layer, flat / cols, flat % cols};
            const double w_star = theoretical_w_star(relu_net, addr, probe_x);
            if (!std::isfinite(w_star)) continue;
            ++tried;
            const auto verdict = verify_proposition(relu_net, addr, probe_x,
                                                    probe_y, {0.1, 1.0, 10.0});
            if (verdict.pass) {
                ++passed;
                verified.push_back(addr);
                w_stars.push_back(verdict.w_star);
            }
        }
        std::ostringstream d;
        d << passed << "/" << tried
          << " sampled layer-2 weights satisfy the plateau bound "
             "(grad<1e-12, fd<1e-8, loglik flat within 1e-9)";
        report(1, passed >= 20 && passed == tried, d.str());
    }

    // ------------------------------------------------------ criterion 2
    // contrast: with slope -0.5 the likelihood is NOT flat below the relu
    // bound at >= 90% of the same addresses
    {
        TrainConfig leaky_cfg = map_cfg;
        leaky_cfg.alpha = -0.5;
        RunRecord rec;
        auto leaky_net = train_map(arch, small, leaky_cfg, rec);
        std::size_t moved = 0;
        for (std::size_t i = 0; i < verified.size(); ++i) {
            const double a = conditional_loglik(leaky_net, verified[i],
                                                w_stars[i] - 1.0, probe_x, probe_y);
            const double b = conditional_loglik(leaky_net, verified[i],
                                                w_stars[i] - 10.0, probe_x, probe_y);
            if (std::abs(a - b) > 1e-6) ++moved;
        }
        std::ostringstream d;
        d << moved << "/" << verified.size()
          << " addresses show loglik movement > 1e-6 below w* at slope -0.5";
        report(2, !verified.empty() &&
                      10 * moved >= 9 * verified.size(),
               d.str());
    }

    // ------------------------------------------------------ criterion 3
    // likelihood survey: more than half of the sampled second-layer
    // weights exhibit a detectable left plateau
    {
        ScanParams params;
        Rng srng(99);
        const auto result =
            survey(relu_net, probe_x, probe_y, 1, 20, srng, params);
        std::ostringstream d;
        d << "with_plateau=" << result.fraction_with_plateau
          << " near_mode=" << result.fraction_near_mode << " over "
          << result.entries.size() << " weights";
        report(3, result.fraction_with_plateau > 0.5, d.str());
    }

    // ------------------------------------------------------ criterion 4
    // calibration sweep: mfvi mlp on a 5000/2000 split, slopes -0.5 and 0,
    // five seeds each; slope -0.5 must give lower mean ece at comparable
    // accuracy (|mean diff| < 0.03), all within an hour
    {
        const auto t0 = std::chrono::steady_clock::now();
        const auto split = make_split(all_images, all_labels, 5000, 2000, 12345);
        std::vector<double> ece_leaky, ece_relu, acc_leaky, acc_relu;
        for (double slope : {-0.5, 0.0}) {
            for (std::uint64_t seed = 1; seed <= 5; ++seed) {
                TrainConfig cfg;
                cfg.alpha = slope;
                cfg.seed = seed;
                cfg.epochs = 20;
                cfg.kl_mode = KlScaleMode::PerExample;
                RunRecord rec;
                Rng r(7);
                train_mfvi(make_mlp(784, {64, 64}, 10, slope, r), split, cfg, rec);
                const auto& last = rec.rows.back();
                (slope == 0.0 ? ece_relu : ece_leaky).push_back(last.val_ece);
                (slope == 0.0 ? acc_relu : acc_leaky).push_back(last.val_accuracy);
            }
        }
        const double hours =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count() /
            3600.0;
        const double me_l = mean(ece_leaky), me_r = mean(ece_relu);
        const double ma_l = mean(acc_leaky), ma_r = mean(acc_relu);
        std::ostringstream d;
        d << "mean ece: slope -0.5 " << me_l << " vs relu " << me_r
          << "; mean acc " << ma_l << " vs " << ma_r << "; "
          << hours << " h";
        report(4, me_l < me_r && std::abs(ma_l - ma_r) < 0.03 && hours < 1.0,
               d.str());
    }

    // ------------------------------------------------------ criterion 5
    // exact unit oracles: closed-form kl values, hand-computed ece, the
    // ln(10) uniform-logit nll, and a finite-difference gradient check
    {
        bool ok = true;
        std::ostringstream d;

        VariationalPosterior vp;
        vp.skeleton.activation.slope = 0.0;
        vp.skeleton.layers.push_back(Layer::dense(1, 2));
        vp.mu = {Tensor({2, 1}), Tensor({2})};
        vp.rho = {Tensor({2, 1}), Tensor({2})};
        const double rho1 = std::log(std::exp(1.0) - 1.0);  // softplus = 1
        for (auto& t : vp.rho) t.fill(rho1);
        ok &= std::abs(kl_to_standard_normal(vp)) < 1e-12;
        vp.mu[0][0] = 1.0;
        ok &= std::abs(kl_to_standard_normal(vp) - 0.5) < 1e-12;
        d << "kl(0)=" << (ok ? "exact" : "WRONG");

        PredictionBatch pb;
        pb.probs = Tensor({4, 10});
        pb.labels = {1, 2, 3, 0};
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < 10; ++j) pb.probs.at2(i, j) = 0.2 / 9.0;
            pb.probs.at2(i, i + 1 < 4 ? i + 1 : 9) = 0.8;
        }
        // preds are classes 1,2,3,9 at conf 0.8; labels make 3 of 4 correct
        const double e = ece(pb, 15);
        ok &= std::abs(e - 0.05) < 1e-12;
        d << ", ece hand case err=" << std::abs(e - 0.05);

        Tensor logits({3, 10});
        logits.fill(0.7);
        const double nll = softmax_nll(logits, {0, 5, 9});
        ok &= std::abs(nll - std::log(10.0)) < 1e-12;
        d << ", uniform nll err=" << std::abs(nll - std::log(10.0));

        Rng rng(42);
        auto net = make_mlp(6, {5, 4}, 10, -0.5, rng);
        auto batch = random_batch(3, 6, rng);
        auto labels = random_labels(3, 10, rng);
        Gradients bp = Gradients::zeros_like(net);
        loss_and_grads(net, batch, labels, bp);
        auto fd = finite_difference_grads(net, batch, labels);
        const double rel = max_rel_error(bp, fd, net);
        ok &= rel < 1e-5;
        d << ", grad rel err=" << rel;

        report(5, ok, d.str());
    }

    // ------------------------------------------------------ criterion 6
    // determinism: identical configs produce byte-identical result files
    {
        TrainConfig cfg;
        cfg.epochs = 5;
        cfg.seed = 11;
        cfg.kl_mode = KlScaleMode::PerExample;
        Rng r1(7), r2(7);
        RunRecord a, b;
        train_mfvi(make_mlp(784, {16}, 10, -0.5, r1), small, cfg, a);
        train_mfvi(make_mlp(784, {16}, 10, -0.5, r2), small, cfg, b);
        write_run_csv("acc_rerun_a.csv", a);
        write_run_csv("acc_rerun_b.csv", b);
        const bool same = slurp("acc_rerun_a.csv") == slurp("acc_rerun_b.csv");
        std::remove("acc_rerun_a.csv");
        std::remove("acc_rerun_b.csv");
        report(6, same, same ? "rerun csv files are byte-identical"
                             : "rerun csv files differ");
    }

    // ------------------------------------------------------ criterion 7
    // decalibration curves: per-epoch validation ece for both slopes, and
    // the relu decalibration gap (final ece minus the best ece seen)
    {
        const auto split = make_split(all_images, all_labels, 2000, 1000, 12345);
        LinePlot plot("validation ece by epoch", "epoch", "ece");
        double relu_gap = 0.0, relu_final = 0.0, leaky_final = 0.0;
        for (double slope : {0.0, -0.5}) {
            TrainConfig cfg;
            cfg.alpha = slope;
            cfg.seed = 1;
            cfg.epochs = 30;
            cfg.kl_mode = KlScaleMode::PerExample;
            RunRecord rec;
            Rng r(7);
            train_mfvi(make_mlp(784, {64, 64}, 10, slope, r), split, cfg, rec);
            std::vector<double> xs, ys;
            double best = 1.0;
            for (const auto& row : rec.rows) {
                xs.push_back(static_cast<double>(row.epoch));
                ys.push_back(row.val_ece);
                best = std::min(best, row.val_ece);
            }
            write_run_csv(slope == 0.0 ? "decal_relu.csv" : "decal_leaky.csv",
                          rec);
            plot.add_series(slope == 0.0 ? "relu" : "leaky -0.5", xs, ys);
            if (slope == 0.0) {
                relu_gap = rec.rows.back().val_ece - best;
                relu_final = rec.rows.back().val_ece;
            } else {
                leaky_final = rec.rows.back().val_ece;
            }
        }
        plot.write("decal_ece.svg");
        std::ostringstream d;
        d << "relu decalibration gap=" << relu_gap << " (final ece "
          << relu_final << "), leaky final ece " << leaky_final
          << "; curves in decal_relu.csv decal_leaky.csv decal_ece.svg";
        report(7, relu_gap >= 0.0 && std::isfinite(relu_gap) &&
                      std::isfinite(leaky_final),
               d.str());
    }

    std::cout << (g_failures ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED")
              << " (" << (7 - g_failures) << "/7)" << std::endl;
    return g_failures ? 1 : 0;
}
