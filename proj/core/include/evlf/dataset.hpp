#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "evlf/tensor.hpp"

namespace evlf {

// Labeled image set; pixel values in [0,1].
struct LabeledDataset {
    Tensor images;  // [n x h x w x c]
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;

    std::size_t size() const { return labels.size(); }
    std::size_t num_classes() const { return class_names.size(); }
    Tensor image(std::size_t i) const;  // [h x w x c]
    std::vector<std::size_t> indices_of_class(std::size_t label) const;
};

// Synthetic desk-scale dataset: per class, a smooth seeded template plus
// per-sample Gaussian pixel noise (sigma = 0.1), clamped to [0,1].
LabeledDataset gen_blobs(std::size_t num_classes, std::size_t per_class, const Shape& image_dims,
                         std::uint64_t seed);

// Deterministic per-class split: first `train_per_class` samples of each
// class go to the first set, the rest to the second.
std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& ds,
                                                          std::size_t train_per_class);

// CIFAR-10 binary batches: 3073-byte records, 1 label byte then three
// 1024-byte planes (R, G, B), each 32x32 row-major. `path` may be a single
// .bin file or a directory holding data_batch_*.bin.
LabeledDataset load_cifar10(const std::filesystem::path& path,
                            const std::vector<std::size_t>& classes = {},
                            std::size_t limit_per_class = 0);

const std::vector<std::string>& cifar10_class_names();

}  // namespace evlf
