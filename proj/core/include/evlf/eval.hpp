#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "evlf/dataset.hpp"
#include "evlf/tensor.hpp"

namespace evlf {

// Small MLP over flattened images with a softmax cross-entropy head.
struct ClassifierParams {
    std::size_t input_dim = 0, width = 0, num_classes = 0;
    Tensor w1, b1, w2, b2, w3, b3;

    static ClassifierParams init(std::size_t input_dim, std::size_t num_classes,
                                 std::size_t width, std::uint64_t seed, bool trainable = true);
    std::vector<Tensor> parameters() const;
    void freeze();
};

struct ClassifierTrainConfig {
    std::size_t epochs = 100;
    double lr = 1e-3;
    std::size_t width = 128;
    std::size_t batch = 16;
};

// Fixed-budget AdamW training; deterministic given seed.
ClassifierParams train_classifier(const LabeledDataset& train_set, std::size_t num_classes,
                                  const ClassifierTrainConfig& cfg, std::uint64_t seed,
                                  std::vector<double>* epoch_losses = nullptr);

Tensor classifier_logits(const ClassifierParams& params, const Tensor& images);  // [n x classes]

// Top-1 accuracy; argmax ties break toward the lowest class index.
double accuracy_from_logits(const Tensor& logits, const std::vector<std::size_t>& labels);
double evaluate(const ClassifierParams& params, const LabeledDataset& test_set);

// k-NN coverage: a generated sample is covered if it lies within the
// k-th-nearest-neighbor radius of any real sample. Exact pairwise distances.
struct CoverageReport {
    std::size_t k = 0;
    std::vector<double> radii;  // per real sample, distance to its k-th nearest other real
    std::vector<bool> covered;  // per generated sample
    double score = 0.0;         // covered fraction
};

CoverageReport coverage(const Tensor& real, const Tensor& generated, std::size_t k = 20);

// Exact 2-D PCA projection (power iteration with implicit deflation).
struct Embedding2D {
    std::vector<std::array<double, 2>> points;
    Tensor components;  // [2 x dim], orthonormal rows
    std::array<double, 2> variances = {0.0, 0.0};
    bool degenerate = false;  // zero-variance input
};

Embedding2D project_2d(const Tensor& vectors);

// CSV rows: x,y,label,source tag. Degenerate inputs yield zero coordinates
// and a warning comment line.
std::string embedding_csv(const Embedding2D& emb, const std::vector<std::size_t>& labels,
                          const std::vector<std::string>& tags);

}  // namespace evlf
