#include "bnn/dataset.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <numeric>

#include "bnn/errors.hpp"
#include "bnn/rng.hpp"

namespace bnn {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B) {
        // gzip: inflate in chunks
        std::vector<std::uint8_t> out;
        z_stream zs{};
        if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
            throw Error("zlib init failed for " + path);
        zs.next_in = bytes.data();
        zs.avail_in = static_cast<uInt>(bytes.size());
        std::uint8_t buf[1 << 16];
        int rc;
        do {
            zs.next_out = buf;
            zs.avail_out = sizeof(buf);
            rc = inflate(&zs, Z_NO_FLUSH);
            if (rc != Z_OK && rc != Z_STREAM_END) {
                inflateEnd(&zs);
                throw Error("gzip decompression failed for " + path);
            }
            out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
        } while (rc != Z_STREAM_END);
        inflateEnd(&zs);
        return out;
    }
    return bytes;
}

std::uint32_t read_u32_be(const std::vector<std::uint8_t>& b, std::size_t off) {
    if (off + 4 > b.size()) throw Truncated("IDX header truncated");
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void write_u32_be(std::ofstream& out, std::uint32_t v) {
    const char buf[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
    out.write(buf, 4);
}

}  // namespace

ImageSet load_idx_images(const std::string& path) {
    const auto bytes = read_all_bytes(path);
    const std::uint32_t magic = read_u32_be(bytes, 0);
    if (magic != kImageMagic)
        throw WrongMagic("expected IDX image magic 0x00000803 in " + path);
    ImageSet set;
    set.count = read_u32_be(bytes, 4);
    set.rows = read_u32_be(bytes, 8);
    set.cols = read_u32_be(bytes, 12);
    const std::size_t n = set.count * set.rows * set.cols;
    if (bytes.size() < 16 + n)
        throw Truncated("IDX image payload shorter than header promises: " + path);
    set.pixels = Tensor({set.count, set.rows, set.cols});
    for (std::size_t i = 0; i < n; ++i)
        set.pixels[i] = static_cast<double>(bytes[16 + i]) / 255.0;
    return set;
}

LabelSet load_idx_labels(const std::string& path) {
    const auto bytes = read_all_bytes(path);
    const std::uint32_t magic = read_u32_be(bytes, 0);
    if (magic != kLabelMagic)
        throw WrongMagic("expected IDX label magic 0x00000801 in " + path);
    LabelSet set;
    set.count = read_u32_be(bytes, 4);
    if (bytes.size() < 8 + set.count)
        throw Truncated("IDX label payload shorter than header promises: " + path);
    set.labels.resize(set.count);
    for (std::size_t i = 0; i < set.count; ++i) {
        const std::uint8_t v = bytes[8 + i];
        if (v > 9)
            throw LabelOutOfRange("label " + std::to_string(int(v)) +
                                  " out of range [0,9] at index " + std::to_string(i));
        set.labels[i] = v;
    }
    return set;
}

void save_idx_images(const ImageSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    write_u32_be(out, kImageMagic);
    write_u32_be(out, static_cast<std::uint32_t>(set.count));
    write_u32_be(out, static_cast<std::uint32_t>(set.rows));
    write_u32_be(out, static_cast<std::uint32_t>(set.cols));
    for (double v : set.pixels.data) {
        const auto byte = static_cast<std::uint8_t>(v * 255.0 + 0.5);
        out.put(static_cast<char>(byte));
    }
}

void save_idx_labels(const LabelSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    write_u32_be(out, kLabelMagic);
    write_u32_be(out, static_cast<std::uint32_t>(set.count));
    for (std::uint8_t v : set.labels) out.put(static_cast<char>(v));
}

DataSplit make_split(const ImageSet& images, const LabelSet& labels,
                     std::size_t train_n, std::size_t val_n,
                     std::uint64_t seed, bool* all_classes_covered) {
    if (images.count != labels.count)
        throw ShapeMismatch("image/label counts differ");
    if (train_n + val_n > images.count)
        throw NotEnoughData("requested " + std::to_string(train_n + val_n) +
                            " examples from a set of " + std::to_string(images.count));

    std::vector<std::size_t> order(images.count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    // Fisher-Yates driven only by the seed
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = rng.next_below(i);
        std::swap(order[i - 1], order[j]);
    }

    const std::size_t px = images.rows * images.cols;
    auto take = [&](std::size_t offset, std::size_t n, ImageSet& im, LabelSet& lb) {
        im.count = n;
        im.rows = images.rows;
        im.cols = images.cols;
        im.pixels = Tensor({n, images.rows, images.cols});
        lb.count = n;
        lb.labels.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t src = order[offset + k];
            std::copy_n(images.pixels.data.begin() + src * px, px,
                        im.pixels.data.begin() + k * px);
            lb.labels[k] = labels.labels[src];
        }
    };

    DataSplit split;
    split.seed = seed;
    take(0, train_n, split.train_images, split.train_labels);
    take(train_n, val_n, split.val_images, split.val_labels);

    if (all_classes_covered) {
        bool seen[10] = {};
        for (auto l : split.train_labels.labels) seen[l] = true;
        *all_classes_covered = true;
        for (bool s : seen)
            if (!s) *all_classes_covered = false;
    }
    return split;
}

Tensor flatten_images(const ImageSet& set) {
    Tensor t({set.count, set.rows * set.cols});
    t.data = set.pixels.data;
    return t;
}

Tensor image_batch_4d(const ImageSet& set) {
    Tensor t({set.count, 1, set.rows, set.cols});
    t.data = set.pixels.data;
    return t;
}

}  // namespace bnn
