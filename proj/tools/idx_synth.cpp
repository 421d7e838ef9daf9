// Generates an MNIST-shaped IDX dataset from the bundled 8x8 handwritten
// digits (UCI optical recognition set): bilinear upsampling to 28x28 plus
// seeded integer-shift augmentation. Used where the real MNIST/FMNIST
// files are not available; the file layout and value range match the
// originals exactly, so every downstream tool works unchanged.

#include <zlib.h>

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bnn/dataset.hpp"
#include "bnn/rng.hpp"

namespace {

struct Digit {
    double pixels[64];  // intensities in [0, 1]
    std::uint8_t label;
};

std::vector<Digit> load_digits_csv(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<Digit> digits;
    char buf[4096];
    while (gzgets(f, buf, sizeof(buf))) {
        std::stringstream ss(buf);
        std::string field;
        Digit d{};
        int i = 0;
        while (std::getline(ss, field, ',')) {
            const double v = std::stod(field);
            if (i < 64)
                d.pixels[i] = v / 16.0;
            else
                d.label = static_cast<std::uint8_t>(v);
            ++i;
        }
        if (i == 65) digits.push_back(d);
    }
    gzclose(f);
    if (digits.empty()) throw std::runtime_error("no rows in " + path);
    return digits;
}

// bilinear sample of the 8x8 source at fractional coordinates
double sample(const Digit& d, double y, double x) {
    if (y <= -1.0 || y >= 8.0 || x <= -1.0 || x >= 8.0) return 0.0;
    const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
    const double fy = y - y0, fx = x - x0;
    auto px = [&](int yy, int xx) {
        return (yy < 0 || yy > 7 || xx < 0 || xx > 7) ? 0.0 : d.pixels[yy * 8 + xx];
    };
    return px(y0, x0) * (1 - fy) * (1 - fx) + px(y0, x0 + 1) * (1 - fy) * fx +
           px(y0 + 1, x0) * fy * (1 - fx) + px(y0 + 1, x0 + 1) * fy * fx;
}

void render(const Digit& d, int dy, int dx, double* out28) {
    // 20x20 glyph area centered in the 28x28 frame, like the original files
    constexpr double scale = 8.0 / 20.0;
    for (int y = 0; y < 28; ++y)
        for (int x = 0; x < 28; ++x) {
            const double sy = (y - 4 - dy + 0.5) * scale - 0.5;
            const double sx = (x - 4 - dx + 0.5) * scale - 0.5;
            out28[y * 28 + x] = std::clamp(sample(d, sy, sx), 0.0, 1.0);
        }
}

bnn::ImageSet make_images(const std::vector<Digit>& digits, std::size_t n,
                          bnn::Rng& rng, std::vector<std::uint8_t>& labels,
                          bool base_pass) {
    bnn::ImageSet set;
    set.count = n;
    set.rows = set.cols = 28;
    set.pixels = bnn::Tensor({n, 28, 28});
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        // optional unshifted pass through the base set, then shifted copies
        const bool plain = base_pass && i < digits.size();
        const std::size_t base = plain ? i : rng.next_below(digits.size());
        const int dy = plain ? 0 : static_cast<int>(rng.next_below(5)) - 2;
        const int dx = plain ? 0 : static_cast<int>(rng.next_below(5)) - 2;
        render(digits[base], dy, dx, set.pixels.data.data() + i * 784);
        labels[i] = digits[base].label;
    }
    return set;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthesize MNIST-shaped IDX files from the bundled 8x8 digits"};
    std::string source, out_dir;
    std::size_t train_n = 20000, test_n = 4000;
    std::uint64_t seed = 20240601;
    app.add_option("--source", source, "digits.csv.gz path")->required();
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--train-n", train_n, "training images to generate");
    app.add_option("--test-n", test_n, "test images to generate");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    try {
        const auto digits = load_digits_csv(source);
        std::filesystem::create_directories(out_dir);
        bnn::Rng rng(seed);
        bnn::LabelSet labels;

        bnn::ImageSet train = make_images(digits, train_n, rng, labels.labels, true);
        labels.count = train_n;
        bnn::save_idx_images(train, out_dir + "/train-images-idx3-ubyte");
        bnn::save_idx_labels(labels, out_dir + "/train-labels-idx1-ubyte");

        bnn::ImageSet test = make_images(digits, test_n, rng, labels.labels, false);
        labels.count = test_n;
        bnn::save_idx_images(test, out_dir + "/t10k-images-idx3-ubyte");
        bnn::save_idx_labels(labels, out_dir + "/t10k-labels-idx1-ubyte");

        std::cout << "wrote " << train_n << " train and " << test_n
                  << " test images to " << out_dir << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
