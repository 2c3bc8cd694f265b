#pragma once

#include <cstdint>
#include <vector>

#include "evlf/dataset.hpp"
#include "evlf/tensor.hpp"

namespace evlf {

// Spatial latent grid produced by the visual encoder.
struct VisualLatent {
    Tensor grid;  // [H x W x C]
};

// Per-class token sequence from the text encoder stand-in.
struct TextEmbedding {
    Tensor tokens;  // [L x C_t]
};

// Patch-linear autoencoder: non-overlapping p x p patches, a linear map with
// tanh to latent channels, and a mirrored linear decoder. Deterministic
// feature map, no sampling.
struct AutoencoderParams {
    std::size_t patch = 0;
    std::size_t image_h = 0, image_w = 0, image_c = 0;
    std::size_t latent_c = 0;
    Tensor w_enc;  // [p*p*c x latent_c]
    Tensor b_enc;  // [latent_c]
    Tensor w_dec;  // [latent_c x p*p*c]
    Tensor b_dec;  // [p*p*c]

    std::size_t grid_h() const { return image_h / patch; }
    std::size_t grid_w() const { return image_w / patch; }

    static AutoencoderParams init(std::size_t image_h, std::size_t image_w, std::size_t image_c,
                                  std::size_t patch, std::size_t latent_c, std::uint64_t seed,
                                  bool trainable);
    std::vector<Tensor> parameters() const;
    void freeze();  // drop requires_grad on all weights
};

// [h x w x c] image -> [N x p*p*c] patch-token matrix, grid-row-major.
Tensor patchify(const Tensor& image, std::size_t patch);
Tensor unpatchify(const Tensor& tokens, std::size_t image_h, std::size_t image_w,
                  std::size_t image_c, std::size_t patch);

VisualLatent encode(const AutoencoderParams& params, const Tensor& image);
Tensor decode(const AutoencoderParams& params, const VisualLatent& latent);

// Reconstruction training; returns frozen params. Identical seed gives
// identical params. Per-epoch mean losses are appended to *epoch_losses.
AutoencoderParams train_autoencoder(const LabeledDataset& dataset, std::size_t patch,
                                    std::size_t latent_c, std::size_t epochs, double lr,
                                    std::uint64_t seed, std::size_t batch = 16,
                                    std::vector<double>* epoch_losses = nullptr);

// Learnable per-class embedding table with L tokens per class. Rows start as
// seeded unit-variance Gaussians, L2-normalized; the table trains jointly
// with the fusion module unless frozen.
class TextEmbeddingTable {
public:
    TextEmbeddingTable(std::size_t num_classes, std::size_t tokens_per_class, std::size_t dim,
                       std::uint64_t seed, bool trainable = true);
    // Rehydrate from a checkpoint block.
    TextEmbeddingTable(Tensor table, std::size_t tokens_per_class);

    TextEmbedding embed(std::size_t label) const;  // throws on out-of-range label
    Tensor& table() { return table_; }
    const Tensor& table() const { return table_; }
    std::size_t num_classes() const { return table_.dim(0) / tokens_per_class_; }
    std::size_t tokens_per_class() const { return tokens_per_class_; }
    std::size_t dim() const { return table_.dim(1); }

private:
    Tensor table_;  // [num_classes*L x C_t]
    std::size_t tokens_per_class_;
};

TextEmbedding embed_class(const TextEmbeddingTable& table, std::size_t label);

}  // namespace evlf
