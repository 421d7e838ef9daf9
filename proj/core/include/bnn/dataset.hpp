#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnn/tensor.hpp"

namespace bnn {

/// Images normalized to [0,1] by v/255. No mean/std standardization:
/// keeping first-layer inputs nonnegative is load-bearing for the
/// plateau analysis in the probe module.
struct ImageSet {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    Tensor pixels;  // (count, rows, cols)
};

struct LabelSet {
    std::size_t count = 0;
    std::vector<std::uint8_t> labels;  // each in [0, 9]
};

struct DataSplit {
    ImageSet train_images;
    LabelSet train_labels;
    ImageSet val_images;
    LabelSet val_labels;
    std::uint64_t seed = 0;
};

/// IDX image file (magic 0x00000803). Raw or gzip (0x1F 0x8B prefix).
ImageSet load_idx_images(const std::string& path);

/// IDX label file (magic 0x00000801). Raw or gzip.
LabelSet load_idx_labels(const std::string& path);

void save_idx_images(const ImageSet& set, const std::string& path);
void save_idx_labels(const LabelSet& set, const std::string& path);

/// Seeded uniform shuffle; first train_n indices become the training set,
/// the next val_n the validation set. Pure in (seed, train_n, val_n).
/// Returns true through *all_classes_covered (if non-null) when every
/// class 0-9 appears in the training slice.
DataSplit make_split(const ImageSet& images, const LabelSet& labels,
                     std::size_t train_n, std::size_t val_n,
                     std::uint64_t seed, bool* all_classes_covered = nullptr);

/// (n, rows*cols) view for dense nets.
Tensor flatten_images(const ImageSet& set);
/// (n, 1, rows, cols) view for conv nets.
Tensor image_batch_4d(const ImageSet& set);

}  // namespace bnn
