#include "bnn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <utility>

#include "bnn/errors.hpp"

namespace bnn {

namespace {

constexpr char kMagic[4] = {'B', 'N', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

void write_f64(std::ofstream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw BadCheckpoint("checkpoint truncated");
    return v;
}

double read_f64(std::ifstream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw BadCheckpoint("checkpoint truncated");
    return v;
}

void write_header(std::ofstream& out, const PointNetwork& net, std::uint8_t kind) {
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    out.put(static_cast<char>(kind));
    write_f64(out, net.activation.slope);
    write_u32(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& l : net.layers) {
        out.put(static_cast<char>(l.kind));
        std::uint32_t dims[4] = {0, 0, 0, 0};
        if (l.kind == LayerKind::Dense) {
            dims[0] = static_cast<std::uint32_t>(l.weights.dim(0));
            dims[1] = static_cast<std::uint32_t>(l.weights.dim(1));
        } else if (l.kind == LayerKind::Conv) {
            for (int i = 0; i < 4; ++i)
                dims[i] = static_cast<std::uint32_t>(l.weights.dim(i));
        }
        for (std::uint32_t d : dims) write_u32(out, d);
    }
}

PointNetwork read_header(std::ifstream& in, std::uint8_t expected_kind) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw BadCheckpoint("not a checkpoint file");
    if (read_u32(in) != kVersion) throw BadCheckpoint("unknown checkpoint version");
    const int kind = in.get();
    if (kind != expected_kind)
        throw BadCheckpoint(expected_kind == 0
                                ? "expected a point-network checkpoint"
                                : "expected a posterior checkpoint");
    PointNetwork net;
    net.activation.slope = read_f64(in);
    const std::uint32_t n_layers = read_u32(in);
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const int lk = in.get();
        std::uint32_t dims[4];
        for (auto& d : dims) d = read_u32(in);
        switch (lk) {
            case 0: net.layers.push_back(Layer::dense(dims[1], dims[0])); break;
            case 1:
                net.layers.push_back(Layer::conv(dims[1], dims[0], dims[2], dims[3]));
                break;
            case 2: net.layers.push_back(Layer::maxpool()); break;
            case 3: net.layers.push_back(Layer::flatten()); break;
            default: throw BadCheckpoint("unknown layer kind in checkpoint");
        }
    }
    return net;
}

void write_params(std::ofstream& out, const std::vector<const Tensor*>& params) {
    for (const Tensor* t : params)
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->size() * 8));
}

void read_params(std::ifstream& in, const std::vector<Tensor*>& params) {
    for (Tensor* t : params) {
        in.read(reinterpret_cast<char*>(t->data.data()),
                static_cast<std::streamsize>(t->size() * 8));
        if (!in) throw BadCheckpoint("checkpoint payload truncated");
    }
}

}  // namespace

void save_point_network(const PointNetwork& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    write_header(out, net, 0);
    write_params(out, param_tensors(net));
}

PointNetwork load_point_network(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    PointNetwork net = read_header(in, 0);
    read_params(in, param_tensors(net));
    return net;
}

void save_posterior(const VariationalPosterior& vp, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    write_header(out, vp.skeleton, 1);
    std::vector<const Tensor*> mu, rho;
    for (const auto& t : vp.mu) mu.push_back(&t);
    for (const auto& t : vp.rho) rho.push_back(&t);
    write_params(out, mu);
    write_params(out, rho);
}

VariationalPosterior load_posterior(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    VariationalPosterior vp;
    vp.skeleton = read_header(in, 1);
    for (const Tensor* p : param_tensors(std::as_const(vp.skeleton))) {
        vp.mu.emplace_back(p->shape);
        vp.rho.emplace_back(p->shape);
    }
    std::vector<Tensor*> mu, rho;
    for (auto& t : vp.mu) mu.push_back(&t);
    for (auto& t : vp.rho) rho.push_back(&t);
    read_params(in, mu);
    read_params(in, rho);
    return vp;
}

bool checkpoint_is_posterior(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw BadCheckpoint("not a checkpoint file");
    read_u32(in);
    return in.get() == 1;
}

}  // namespace bnn
