#include "bnn/probe.hpp"

#include <algorithm>
#include <cmath>

#include "bnn/errors.hpp"

namespace bnn {

namespace {

const Layer& checked_layer(const PointNetwork& net, const WeightAddress& addr) {
    if (addr.layer >= net.layers.size())
        throw BadAddress("layer index out of range");
    const Layer& l = net.layers[addr.layer];
    if (!l.parametric()) throw BadAddress("addressed layer has no weights");
    return l;
}

std::size_t flat_weight_index(const Layer& l, const WeightAddress& addr) {
    if (l.kind == LayerKind::Dense) {
        if (addr.out_idx >= l.weights.dim(0) || addr.in_idx >= l.weights.dim(1))
            throw BadAddress("dense weight index out of range");
        return addr.out_idx * l.weights.dim(1) + addr.in_idx;
    }
    const std::size_t per_oc = l.weights.dim(1) * l.weights.dim(2) * l.weights.dim(3);
    if (addr.out_idx >= l.weights.dim(0) || addr.in_idx >= per_oc)
        throw BadAddress("conv weight index out of range");
    return addr.out_idx * per_oc + addr.in_idx;
}

}  // namespace

double& weight_ref(PointNetwork& net, const WeightAddress& addr) {
    const Layer& l = checked_layer(net, addr);
    return net.layers[addr.layer].weights.data[flat_weight_index(l, addr)];
}

double conditional_loglik(PointNetwork& net, const WeightAddress& addr,
                          double w_value, const Tensor& inputs,
                          const std::vector<std::uint8_t>& labels) {
    double& w = weight_ref(net, addr);
    const double saved = w;
    w = w_value;
    const double ll = log_likelihood_sum(net, inputs, labels);
    w = saved;
    return ll;
}

double theoretical_w_star(PointNetwork& net, const WeightAddress& addr,
                          const Tensor& inputs) {
    if (net.activation.slope != 0.0)
        throw NotReLU("theoretical_w_star requires slope 0");
    const Layer& l = checked_layer(net, addr);
    const double w_cur = weight_ref(net, addr);

    ForwardCache cache;
    forward(net, inputs, cache);
    const Tensor& layer_in =
        addr.layer == 0 ? inputs : cache.layers[addr.layer - 1].out;
    const Tensor& pre = cache.layers[addr.layer].pre;

    double w_star = std::numeric_limits<double>::infinity();
    const std::size_t n = inputs.dim(0);

    if (l.kind == LayerKind::Dense) {
        const std::size_t in = l.weights.dim(1);
        for (std::size_t r = 0; r < n; ++r) {
            const double h = layer_in.data[r * in + addr.in_idx];
            if (h < 0.0)
                throw NegativeInput("input h < 0 at the addressed site");
            if (h == 0.0) continue;  // this example never constrains w
            const double a = pre.at2(r, addr.out_idx);
            w_star = std::min(w_star, w_cur - a / h);
        }
        return w_star;
    }

    // conv: the proposition applies per multiply-accumulate site, so the
    // minimum ranges over examples and every output position the kernel
    // element touches
    const std::size_t kh = l.weights.dim(2), kw = l.weights.dim(3);
    const std::size_t ky = addr.in_idx / kw % kh;
    const std::size_t kx = addr.in_idx % kw;
    const std::size_t ic = addr.in_idx / (kh * kw);
    const std::size_t oh = pre.dim(2), ow = pre.dim(3);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double h =
                    layer_in.data[layer_in.idx4(r, ic, oy + ky, ox + kx)];
                if (h < 0.0)
                    throw NegativeInput("input h < 0 at the addressed site");
                if (h == 0.0) continue;
                const double a = pre.data[pre.idx4(r, addr.out_idx, oy, ox)];
                w_star = std::min(w_star, w_cur - a / h);
            }
    return w_star;
}

ProfileScan scan_profile(PointNetwork& net, const WeightAddress& addr,
                         double lo, double hi, std::size_t n_points,
                         const Tensor& inputs,
                         const std::vector<std::uint8_t>& labels) {
    if (!(lo < hi) || n_points < 16)
        throw BadAddress("scan requires lo < hi and n_points >= 16");
    ProfileScan scan;
    scan.addr = addr;
    scan.grid.resize(n_points);
    scan.loglik.resize(n_points);

    // activations below the probed layer never depend on its weights, so
    // they are computed once and each grid point replays only layers
    // addr.layer .. end
    checked_layer(net, addr);
    Tensor prefix;
    if (addr.layer == 0) {
        prefix = inputs;
    } else {
        ForwardCache cache;
        forward(net, inputs, cache);
        prefix = std::move(cache.layers[addr.layer - 1].out);
    }
    double& w_ref = weight_ref(net, addr);
    const double saved = w_ref;
    const double n_examples = static_cast<double>(inputs.dim(0));

    const double step = (hi - lo) / static_cast<double>(n_points - 1);
    for (std::size_t k = 0; k < n_points; ++k) {
        const double w = (k == n_points - 1) ? hi : lo + step * static_cast<double>(k);
        scan.grid[k] = w;
        w_ref = w;
        const Tensor logits = forward_logits_from(net, addr.layer, prefix);
        scan.loglik[k] = -softmax_nll(logits, labels) * n_examples;
    }
    w_ref = saved;
    // mode: max loglik, ties resolved to the largest grid value so that a
    // fully flat scan still satisfies boundary <= mode
    std::size_t best = 0;
    for (std::size_t k = 1; k < n_points; ++k)
        if (scan.loglik[k] >= scan.loglik[best]) best = k;
    scan.mode_value = scan.grid[best];
    return scan;
}

PlateauReport detect_plateau(const ProfileScan& scan, double flat_tol,
                             double near_frac, std::optional<double> w_star) {
    PlateauReport report;
    if (w_star) report.theoretical_w_star = *w_star;
    std::size_t prefix = 1;
    while (prefix < scan.grid.size() &&
           std::abs(scan.loglik[prefix] - scan.loglik[0]) < flat_tol)
        ++prefix;
    const bool below_bound = !w_star || scan.grid.front() < *w_star;
    if (prefix >= 3 && below_bound) {
        report.has_left_plateau = true;
        report.plateau_boundary_est = scan.grid[prefix - 1];
        const double width = scan.grid.back() - scan.grid.front();
        report.near_mode =
            (scan.mode_value - report.plateau_boundary_est) <= near_frac * width;
    }
    return report;
}

SurveyResult survey(PointNetwork& net, const Tensor& inputs,
                    const std::vector<std::uint8_t>& labels, std::size_t layer,
                    std::size_t k, Rng& rng, const ScanParams& params) {
    WeightAddress probeaddr{layer, 0, 0};
    const Layer& l = checked_layer(net, probeaddr);
    const std::size_t total = l.weights.size();
    if (k > total)
        throw NotEnoughWeights("layer has " + std::to_string(total) +
                               " weights, requested " + std::to_string(k));
    const std::size_t cols = l.kind == LayerKind::Dense
                                 ? l.weights.dim(1)
                                 : l.weights.dim(1) * l.weights.dim(2) * l.weights.dim(3);

    // partial Fisher-Yates: first k entries of a seeded permutation
    std::vector<std::size_t> pool(total);
    for (std::size_t i = 0; i < total; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i)
        std::swap(pool[i], pool[i + rng.next_below(total - i)]);

    SurveyResult result;
    std::size_t with_plateau = 0, near_mode = 0;
    for (std::size_t i = 0; i < k; ++i) {
        SurveyEntry entry;
        entry.addr = {layer, pool[i] / cols, pool[i] % cols};
        std::optional<double> w_star;
        if (net.activation.slope == 0.0) {
            entry.w_star = theoretical_w_star(net, entry.addr, inputs);
            if (std::isfinite(entry.w_star)) w_star = entry.w_star;
        }
        const double w_cur = weight_ref(net, entry.addr);
        const double s = std::max(1.0, std::abs(w_cur));
        double lo = w_cur - params.span * s;
        const double hi = w_cur + params.span * s;
        if (params.cover_w_star && w_star)
            lo = std::min(lo, *w_star - params.w_star_margin);
        const auto scan =
            scan_profile(net, entry.addr, lo, hi, params.n_points, inputs, labels);
        entry.report = detect_plateau(scan, params.flat_tol, params.near_frac, w_star);
        if (entry.report.has_left_plateau) {
            ++with_plateau;
            if (entry.report.near_mode) ++near_mode;
        }
        result.entries.push_back(entry);
    }
    result.fraction_with_plateau =
        static_cast<double>(with_plateau) / static_cast<double>(k);
    result.fraction_near_mode =
        static_cast<double>(near_mode) / static_cast<double>(k);
    return result;
}

VerificationVerdict verify_proposition(PointNetwork& net, const WeightAddress& addr,
                                       const Tensor& inputs,
                                       const std::vector<std::uint8_t>& labels,
                                       const std::vector<double>& deltas) {
    if (net.activation.slope != 0.0)
        throw NotReLU("verify_proposition requires slope 0");
    VerificationVerdict verdict;
    verdict.w_star = theoretical_w_star(net, addr, inputs);
    if (!std::isfinite(verdict.w_star))
        throw InfiniteWStar("w* is not finite for this address");

    double& w = weight_ref(net, addr);
    const double saved = w;
    Gradients grads;
    const Layer& l = net.layers[addr.layer];
    const std::size_t flat = flat_weight_index(l, addr);

    verdict.grads_zero = true;
    verdict.fd_zero = true;
    verdict.loglik_constant = true;
    for (double delta : deltas) {
        DeltaCheck check;
        check.delta = delta;
        w = verdict.w_star - delta;
        loss_and_grads(net, inputs, labels, grads);
        check.grad_backprop = grads.weights[addr.layer].data[flat];

        const double h = 1e-4;
        w = verdict.w_star - delta + h;
        ForwardCache cache;
        forward(net, inputs, cache);
        const double lp = softmax_nll(cache.logits(), labels);
        w = verdict.w_star - delta - h;
        forward(net, inputs, cache);
        const double lm = softmax_nll(cache.logits(), labels);
        check.grad_fd = (lp - lm) / (2.0 * h);

        w = saved;
        check.loglik = conditional_loglik(net, addr, verdict.w_star - delta,
                                          inputs, labels);
        verdict.checks.push_back(check);
        if (std::abs(check.grad_backprop) >= 1e-12) verdict.grads_zero = false;
        if (std::abs(check.grad_fd) >= 1e-8) verdict.fd_zero = false;
    }
    for (const auto& check : verdict.checks)
        if (std::abs(check.loglik - verdict.checks.front().loglik) > 1e-9)
            verdict.loglik_constant = false;
    w = saved;
    verdict.pass = verdict.grads_zero && verdict.fd_zero && verdict.loglik_constant;
    return verdict;
}

}  // namespace bnn
