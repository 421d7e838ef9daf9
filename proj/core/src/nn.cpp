#include "bnn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bnn/errors.hpp"

namespace bnn {

Tensor leaky_relu(const Tensor& x, double alpha) {
    Tensor out = x;
    for (auto& v : out.data) v = leaky_relu(v, alpha);
    return out;
}

Tensor leaky_relu_grad(const Tensor& x, double alpha) {
    Tensor out = x;
    for (auto& v : out.data) v = leaky_relu_grad(v, alpha);
    return out;
}

Layer Layer::dense(std::size_t in, std::size_t out) {
    Layer l;
    l.kind = LayerKind::Dense;
    l.weights = Tensor({out, in});
    l.bias = Tensor({out});
    return l;
}

Layer Layer::conv(std::size_t in_ch, std::size_t out_ch,
                  std::size_t kh, std::size_t kw) {
    Layer l;
    l.kind = LayerKind::Conv;
    l.weights = Tensor({out_ch, in_ch, kh, kw});
    l.bias = Tensor({out_ch});
    return l;
}

Layer Layer::maxpool() {
    Layer l;
    l.kind = LayerKind::MaxPool;
    return l;
}

Layer Layer::flatten() {
    Layer l;
    l.kind = LayerKind::Flatten;
    return l;
}

std::size_t PointNetwork::last_parametric() const {
    for (std::size_t i = layers.size(); i > 0; --i)
        if (layers[i - 1].parametric()) return i - 1;
    throw ShapeMismatch("network has no parametric layer");
}

std::size_t PointNetwork::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
        if (l.parametric()) n += l.weights.size() + l.bias.size();
    return n;
}

namespace {

void he_init(Layer& l, Rng& rng) {
    std::size_t fan_in = l.kind == LayerKind::Dense
                             ? l.weights.dim(1)
                             : l.weights.dim(1) * l.weights.dim(2) * l.weights.dim(3);
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& w : l.weights.data) w = scale * rng.next_gaussian();
    l.bias.fill(0.0);
}

}  // namespace

PointNetwork make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                      std::size_t classes, double alpha, Rng& rng) {
    PointNetwork net;
    net.activation.slope = alpha;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
        net.layers.push_back(Layer::dense(in, h));
        in = h;
    }
    net.layers.push_back(Layer::dense(in, classes));
    for (auto& l : net.layers) he_init(l, rng);
    return net;
}

PointNetwork make_convnet(std::size_t in_rows, std::size_t in_cols,
                          std::size_t c1, std::size_t c2,
                          std::size_t classes, double alpha, Rng& rng) {
    PointNetwork net;
    net.activation.slope = alpha;
    net.layers.push_back(Layer::conv(1, c1, 3, 3));
    net.layers.push_back(Layer::maxpool());
    net.layers.push_back(Layer::conv(c1, c2, 3, 3));
    net.layers.push_back(Layer::maxpool());
    net.layers.push_back(Layer::flatten());
    const std::size_t h1 = (in_rows - 2) / 2;
    const std::size_t w1 = (in_cols - 2) / 2;
    const std::size_t h2 = (h1 - 2) / 2;
    const std::size_t w2 = (w1 - 2) / 2;
    net.layers.push_back(Layer::dense(c2 * h2 * w2, classes));
    for (auto& l : net.layers)
        if (l.parametric()) he_init(l, rng);
    return net;
}

Gradients Gradients::zeros_like(const PointNetwork& net) {
    Gradients g;
    g.weights.resize(net.layers.size());
    g.bias.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].parametric()) {
            g.weights[i] = Tensor(net.layers[i].weights.shape);
            g.bias[i] = Tensor(net.layers[i].bias.shape);
        }
    }
    return g;
}

std::vector<Tensor*> param_tensors(PointNetwork& net) {
    std::vector<Tensor*> out;
    for (auto& l : net.layers) {
        if (!l.parametric()) continue;
        out.push_back(&l.weights);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<const Tensor*> param_tensors(const PointNetwork& net) {
    std::vector<const Tensor*> out;
    for (const auto& l : net.layers) {
        if (!l.parametric()) continue;
        out.push_back(&l.weights);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<Tensor*> param_tensors(Gradients& g, const PointNetwork& net) {
    std::vector<Tensor*> out;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (!net.layers[i].parametric()) continue;
        out.push_back(&g.weights[i]);
        out.push_back(&g.bias[i]);
    }
    return out;
}

namespace {

Tensor dense_forward(const Tensor& input, const Tensor& w, const Tensor& b) {
    if (input.rank() != 2 || input.dim(1) != w.dim(1))
        throw ShapeMismatch("dense layer input does not match weight shape");
    const std::size_t n = input.dim(0), in = w.dim(1), out = w.dim(0);
    Tensor y({n, out});
    for (std::size_t r = 0; r < n; ++r) {
        const double* x = input.data.data() + r * in;
        double* yr = y.data.data() + r * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wo = w.data.data() + o * in;
            double acc = b[o];
            for (std::size_t i = 0; i < in; ++i) acc += wo[i] * x[i];
            yr[o] = acc;
        }
    }
    return y;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    if (input.rank() != 4 || kernels.rank() != 4 || input.dim(1) != kernels.dim(1))
        throw ShapeMismatch("conv layer input does not match kernel shape");
    const std::size_t n = input.dim(0), ic = input.dim(1);
    const std::size_t h = input.dim(2), w = input.dim(3);
    const std::size_t oc = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    if (h < kh || w < kw) throw ShapeMismatch("conv input smaller than kernel");
    const std::size_t oh = h - kh + 1, ow = w - kw + 1;
    Tensor y({n, oc, oh, ow});
    // valid cross-correlation, stride 1
    for (std::size_t b0 = 0; b0 < n; ++b0)
        for (std::size_t o = 0; o < oc; ++o)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = bias[o];
                    for (std::size_t c = 0; c < ic; ++c)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const double* in_row =
                                input.data.data() + input.idx4(b0, c, oy + ky, ox);
                            const double* k_row =
                                kernels.data.data() + kernels.idx4(o, c, ky, 0);
                            for (std::size_t kx = 0; kx < kw; ++kx)
                                acc += k_row[kx] * in_row[kx];
                        }
                    y.data[y.idx4(b0, o, oy, ox)] = acc;
                }
    return y;
}

void conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& d_out,
                     Tensor& d_kernels, Tensor& d_bias, Tensor& d_input) {
    const std::size_t n = input.dim(0), ic = input.dim(1);
    const std::size_t oc = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    const std::size_t oh = d_out.dim(2), ow = d_out.dim(3);
    d_kernels = Tensor(kernels.shape);
    d_bias = Tensor({oc});
    d_input = Tensor(input.shape);
    for (std::size_t b0 = 0; b0 < n; ++b0)
        for (std::size_t o = 0; o < oc; ++o)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const double g = d_out.data[d_out.idx4(b0, o, oy, ox)];
                    if (g == 0.0) continue;
                    d_bias[o] += g;
                    for (std::size_t c = 0; c < ic; ++c)
                        for (std::size_t ky = 0; ky < kh; ++ky)
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::size_t ii =
                                    input.idx4(b0, c, oy + ky, ox + kx);
                                const std::size_t ki = kernels.idx4(o, c, ky, kx);
                                d_kernels.data[ki] += g * input.data[ii];
                                d_input.data[ii] += g * kernels.data[ki];
                            }
                }
}

Tensor maxpool2x2_forward(const Tensor& input, std::vector<std::uint32_t>& argmax) {
    if (input.rank() != 4) throw ShapeMismatch("maxpool expects a 4-d input");
    const std::size_t n = input.dim(0), c = input.dim(1);
    const std::size_t h = input.dim(2), w = input.dim(3);
    const std::size_t oh = h / 2, ow = w / 2;  // odd trailing row/col dropped
    Tensor y({n, c, oh, ow});
    argmax.assign(y.size(), 0);
    for (std::size_t b0 = 0; b0 < n; ++b0)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    // tie-break: first maximal index in row-major order
                    std::size_t best = input.idx4(b0, ch, 2 * oy, 2 * ox);
                    double best_v = input.data[best];
                    const std::size_t cand[3] = {
                        input.idx4(b0, ch, 2 * oy, 2 * ox + 1),
                        input.idx4(b0, ch, 2 * oy + 1, 2 * ox),
                        input.idx4(b0, ch, 2 * oy + 1, 2 * ox + 1)};
                    for (std::size_t ci : cand)
                        if (input.data[ci] > best_v) {
                            best = ci;
                            best_v = input.data[ci];
                        }
                    const std::size_t oi = y.idx4(b0, ch, oy, ox);
                    y.data[oi] = best_v;
                    argmax[oi] = static_cast<std::uint32_t>(best);
                }
    return y;
}

Tensor maxpool2x2_backward(const Tensor& d_out, const std::vector<std::uint32_t>& argmax,
                           const std::vector<std::size_t>& input_shape) {
    Tensor d_in(input_shape);
    for (std::size_t i = 0; i < d_out.size(); ++i)
        d_in.data[argmax[i]] += d_out.data[i];
    return d_in;
}

void forward(const PointNetwork& net, const Tensor& batch, ForwardCache& cache) {
    cache.layers.assign(net.layers.size(), LayerCache{});
    const std::size_t last = net.last_parametric();
    const Tensor* cur = &batch;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        LayerCache& lc = cache.layers[i];
        switch (l.kind) {
            case LayerKind::Dense:
                lc.pre = dense_forward(*cur, l.weights, l.bias);
                lc.out = (i == last) ? lc.pre
                                     : leaky_relu(lc.pre, net.activation.slope);
                break;
            case LayerKind::Conv:
                lc.pre = conv2d_forward(*cur, l.weights, l.bias);
                lc.out = (i == last) ? lc.pre
                                     : leaky_relu(lc.pre, net.activation.slope);
                break;
            case LayerKind::MaxPool:
                lc.out = maxpool2x2_forward(*cur, lc.argmax);
                break;
            case LayerKind::Flatten: {
                lc.out = *cur;
                lc.out.shape = {cur->dim(0), cur->size() / cur->dim(0)};
                break;
            }
        }
        cur = &lc.out;
    }
}

Tensor forward_logits_from(const PointNetwork& net, std::size_t start,
                           const Tensor& input) {
    if (start >= net.layers.size()) throw ShapeMismatch("start layer out of range");
    const std::size_t last = net.last_parametric();
    Tensor cur = input;
    std::vector<std::uint32_t> argmax;
    for (std::size_t i = start; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        switch (l.kind) {
            case LayerKind::Dense:
                cur = dense_forward(cur, l.weights, l.bias);
                break;
            case LayerKind::Conv:
                cur = conv2d_forward(cur, l.weights, l.bias);
                break;
            case LayerKind::MaxPool:
                cur = maxpool2x2_forward(cur, argmax);
                break;
            case LayerKind::Flatten:
                cur.shape = {cur.dim(0), cur.size() / cur.dim(0)};
                break;
        }
        if (l.parametric() && i != last)
            for (auto& v : cur.data) v = leaky_relu(v, net.activation.slope);
    }
    return cur;
}

double softmax_nll(const Tensor& logits, const std::vector<std::uint8_t>& labels) {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) throw ShapeMismatch("label count does not match batch");
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = logits.data.data() + r * k;
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
        total += std::log(sum) + mx - row[labels[r]];
    }
    return total / static_cast<double>(n);
}

Tensor softmax_rows(const Tensor& logits) {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor p({n, k});
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = logits.data.data() + r * k;
        double* pr = p.data.data() + r * k;
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            pr[j] = std::exp(row[j] - mx);
            sum += pr[j];
        }
        for (std::size_t j = 0; j < k; ++j) pr[j] /= sum;
    }
    return p;
}

double log_likelihood_sum(const PointNetwork& net, const Tensor& batch,
                          const std::vector<std::uint8_t>& labels) {
    const Tensor logits = forward_logits_from(net, 0, batch);
    return -softmax_nll(logits, labels) * static_cast<double>(batch.dim(0));
}

double loss_and_grads(const PointNetwork& net, const Tensor& batch,
                      const std::vector<std::uint8_t>& labels, Gradients& grads) {
    for (auto l : labels)
        if (l > 9) throw ShapeMismatch("label out of range");
    ForwardCache cache;
    forward(net, batch, cache);
    const Tensor& logits = cache.logits();
    const double nll = softmax_nll(logits, labels);

    grads = Gradients::zeros_like(net);
    const std::size_t n = logits.dim(0);
    const std::size_t last = net.last_parametric();

    // d(mean NLL)/d(logits) = (softmax - onehot)/n
    Tensor d = softmax_rows(logits);
    for (std::size_t r = 0; r < n; ++r) d.at2(r, labels[r]) -= 1.0;
    for (auto& v : d.data) v /= static_cast<double>(n);

    for (std::size_t ii = net.layers.size(); ii > 0; --ii) {
        const std::size_t i = ii - 1;
        const Layer& l = net.layers[i];
        const LayerCache& lc = cache.layers[i];
        const Tensor& input = (i == 0) ? batch : cache.layers[i - 1].out;
        switch (l.kind) {
            case LayerKind::Dense: {
                if (i != last) {
                    for (std::size_t j = 0; j < d.size(); ++j)
                        d.data[j] *= leaky_relu_grad(lc.pre.data[j],
                                                     net.activation.slope);
                }
                const std::size_t in = l.weights.dim(1), out = l.weights.dim(0);
                Tensor& dw = grads.weights[i];
                Tensor& db = grads.bias[i];
                Tensor d_in({input.dim(0), in});
                for (std::size_t r = 0; r < n; ++r) {
                    const double* x = input.data.data() + r * in;
                    const double* dr = d.data.data() + r * out;
                    double* dir = d_in.data.data() + r * in;
                    for (std::size_t o = 0; o < out; ++o) {
                        const double g = dr[o];
                        if (g == 0.0) continue;
                        db[o] += g;
                        double* dwo = dw.data.data() + o * in;
                        const double* wo = l.weights.data.data() + o * in;
                        for (std::size_t c = 0; c < in; ++c) {
                            dwo[c] += g * x[c];
                            dir[c] += g * wo[c];
                        }
                    }
                }
                d = std::move(d_in);
                break;
            }
            case LayerKind::Conv: {
                if (i != last) {
                    for (std::size_t j = 0; j < d.size(); ++j)
                        d.data[j] *= leaky_relu_grad(lc.pre.data[j],
                                                     net.activation.slope);
                }
                Tensor d_in;
                conv2d_backward(input, l.weights, d, grads.weights[i],
                                grads.bias[i], d_in);
                d = std::move(d_in);
                break;
            }
            case LayerKind::MaxPool:
                d = maxpool2x2_backward(d, lc.argmax, input.shape);
                break;
            case LayerKind::Flatten:
                d.shape = input.shape;
                break;
        }
    }
    return nll;
}

}  // namespace bnn
