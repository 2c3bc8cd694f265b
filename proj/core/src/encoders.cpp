#include "evlf/encoders.hpp"

#include <cmath>

#include "evlf/errors.hpp"
#include "evlf/optim.hpp"
#include "evlf/rng.hpp"

namespace evlf {

AutoencoderParams AutoencoderParams::init(std::size_t image_h, std::size_t image_w,
                                          std::size_t image_c, std::size_t patch,
                                          std::size_t latent_c, std::uint64_t seed,
                                          bool trainable) {
    if (patch == 0 || image_h % patch != 0 || image_w % patch != 0) {
        throw ConfigError("autoencoder: patch must divide image dims");
    }
    AutoencoderParams p;
    p.patch = patch;
    p.image_h = image_h;
    p.image_w = image_w;
    p.image_c = image_c;
    p.latent_c = latent_c;
    const std::size_t ppc = patch * patch * image_c;
    Rng rng(seed, 0xAE);
    p.w_enc = Tensor::randn({ppc, latent_c}, rng, 1.0 / std::sqrt(static_cast<double>(ppc)), trainable);
    p.b_enc = Tensor::zeros({latent_c}, trainable);
    p.w_dec = Tensor::randn({latent_c, ppc}, rng, 1.0 / std::sqrt(static_cast<double>(latent_c)), trainable);
    p.b_dec = Tensor::zeros({ppc}, trainable);
    return p;
}

std::vector<Tensor> AutoencoderParams::parameters() const { return {w_enc, b_enc, w_dec, b_dec}; }

void AutoencoderParams::freeze() {
    w_enc = w_enc.detached();
    b_enc = b_enc.detached();
    w_dec = w_dec.detached();
    b_dec = b_dec.detached();
}

Tensor patchify(const Tensor& image, std::size_t patch) {
    if (image.rank() != 3) throw ShapeError("patchify: image must be h x w x c, got " + shape_str(image.shape()));
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if (patch == 0 || h % patch != 0 || w % patch != 0) {
        throw ShapeError("patchify: patch " + std::to_string(patch) + " does not tile " +
                         shape_str(image.shape()));
    }
    const std::size_t gh = h / patch, gw = w / patch;
    const std::size_t ppc = patch * patch * c;
    std::vector<double> out(gh * gw * ppc);
    auto src = image.data();
    std::size_t row = 0;
    for (std::size_t gy = 0; gy < gh; ++gy) {
        for (std::size_t gx = 0; gx < gw; ++gx, ++row) {
            std::size_t k = 0;
            for (std::size_t py = 0; py < patch; ++py) {
                for (std::size_t px = 0; px < patch; ++px) {
                    for (std::size_t ch = 0; ch < c; ++ch, ++k) {
                        const std::size_t y = gy * patch + py;
                        const std::size_t x = gx * patch + px;
                        out[row * ppc + k] = src[(y * w + x) * c + ch];
                    }
                }
            }
        }
    }
    return Tensor::from_data({gh * gw, ppc}, std::move(out));
}

Tensor unpatchify(const Tensor& tokens, std::size_t image_h, std::size_t image_w,
                  std::size_t image_c, std::size_t patch) {
    const std::size_t gh = image_h / patch, gw = image_w / patch;
    const std::size_t ppc = patch * patch * image_c;
    if (tokens.rank() != 2 || tokens.dim(0) != gh * gw || tokens.dim(1) != ppc) {
        throw ShapeError("unpatchify: tokens " + shape_str(tokens.shape()) + " do not match " +
                         std::to_string(image_h) + "x" + std::to_string(image_w) + "x" +
                         std::to_string(image_c) + " with patch " + std::to_string(patch));
    }
    // pure index permutation; keep it on the graph for shape-inverse tests
    std::vector<double> out(image_h * image_w * image_c);
    auto src = tokens.data();
    std::size_t row = 0;
    std::vector<std::size_t> dst_index(tokens.numel());
    for (std::size_t gy = 0; gy < gh; ++gy) {
        for (std::size_t gx = 0; gx < gw; ++gx, ++row) {
            std::size_t k = 0;
            for (std::size_t py = 0; py < patch; ++py) {
                for (std::size_t px = 0; px < patch; ++px) {
                    for (std::size_t ch = 0; ch < image_c; ++ch, ++k) {
                        const std::size_t y = gy * patch + py;
                        const std::size_t x = gx * patch + px;
                        const std::size_t dst = (y * image_w + x) * image_c + ch;
                        out[dst] = src[row * ppc + k];
                        dst_index[row * ppc + k] = dst;
                    }
                }
            }
        }
    }
    return Tensor::op({image_h, image_w, image_c}, std::move(out), {tokens},
                      [tokens, idx = std::move(dst_index)](std::span<const double> g) {
                          if (!tokens.requires_grad()) return;
                          auto& gt = tokens.grad_buffer();
                          for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[idx[i]];
                      });
}

VisualLatent encode(const AutoencoderParams& params, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != params.image_h || image.dim(1) != params.image_w ||
        image.dim(2) != params.image_c) {
        throw ShapeError("encode: image " + shape_str(image.shape()) + " does not match config " +
                         std::to_string(params.image_h) + "x" + std::to_string(params.image_w) +
                         "x" + std::to_string(params.image_c));
    }
    Tensor tokens = patchify(image, params.patch);
    Tensor z = tanh(add_row_vector(matmul(tokens, params.w_enc), params.b_enc));
    return {reshape(z, {params.grid_h(), params.grid_w(), params.latent_c})};
}

Tensor decode(const AutoencoderParams& params, const VisualLatent& latent) {
    const Shape want{params.grid_h(), params.grid_w(), params.latent_c};
    if (latent.grid.shape() != want) {
        throw ShapeError("decode: latent " + shape_str(latent.grid.shape()) +
                         " does not match config " + shape_str(want));
    }
    Tensor tokens = reshape(latent.grid, {params.grid_h() * params.grid_w(), params.latent_c});
    Tensor patches = add_row_vector(matmul(tokens, params.w_dec), params.b_dec);
    return unpatchify(patches, params.image_h, params.image_w, params.image_c, params.patch);
}

AutoencoderParams train_autoencoder(const LabeledDataset& dataset, std::size_t patch,
                                    std::size_t latent_c, std::size_t epochs, double lr,
                                    std::uint64_t seed, std::size_t batch,
                                    std::vector<double>* epoch_losses) {
    if (dataset.size() == 0) throw ConfigError("train_autoencoder: empty dataset");
    const Shape& s = dataset.images.shape();
    AutoencoderParams params =
        AutoencoderParams::init(s[1], s[2], s[3], patch, latent_c, seed, true);
    std::vector<Tensor> trainable = params.parameters();
    AdamW opt(lr, 0.0);
    Rng shuffle_rng(seed, 0xAE5);

    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t stop = std::min(order.size(), start + batch);
            // stack patch tokens of the whole minibatch
            std::vector<double> stacked;
            std::size_t rows = 0, cols = 0;
            for (std::size_t i = start; i < stop; ++i) {
                Tensor tok = patchify(dataset.image(order[i]), patch);
                rows += tok.dim(0);
                cols = tok.dim(1);
                stacked.insert(stacked.end(), tok.data().begin(), tok.data().end());
            }
            Tensor target = Tensor::from_data({rows, cols}, std::move(stacked));
            Tensor z = tanh(add_row_vector(matmul(target, params.w_enc), params.b_enc));
            Tensor recon = add_row_vector(matmul(z, params.w_dec), params.b_dec);
            Tensor diff = sub(recon, target);
            Tensor loss = mean(mul(diff, diff));
            loss_sum += loss.value();
            ++steps;
            zero_grads(trainable);
            backward(loss);
            opt.step(trainable);
        }
        if (epoch_losses) epoch_losses->push_back(loss_sum / static_cast<double>(steps));
    }
    params.freeze();
    return params;
}

TextEmbeddingTable::TextEmbeddingTable(std::size_t num_classes, std::size_t tokens_per_class,
                                       std::size_t dim, std::uint64_t seed, bool trainable)
    : tokens_per_class_(tokens_per_class) {
    if (num_classes == 0 || tokens_per_class == 0 || dim == 0) {
        throw ConfigError("text table: dims must be positive");
    }
    Rng rng(seed, 0x7E47);
    Tensor raw = Tensor::randn({num_classes * tokens_per_class, dim}, rng);
    Tensor normed = l2_normalize_rows(raw);
    table_ = Tensor::from_data(normed.shape(),
                               std::vector<double>(normed.data().begin(), normed.data().end()),
                               trainable);
}

TextEmbeddingTable::TextEmbeddingTable(Tensor table, std::size_t tokens_per_class)
    : table_(std::move(table)), tokens_per_class_(tokens_per_class) {
    if (table_.rank() != 2 || tokens_per_class_ == 0 || table_.dim(0) % tokens_per_class_ != 0) {
        throw ShapeError("text table: bad table shape " + shape_str(table_.shape()));
    }
}

TextEmbedding TextEmbeddingTable::embed(std::size_t label) const {
    if (label >= num_classes()) {
        throw ConfigError("embed_class: label " + std::to_string(label) + " out of range (" +
                          std::to_string(num_classes()) + " classes)");
    }
    std::vector<std::size_t> rows(tokens_per_class_);
    for (std::size_t i = 0; i < tokens_per_class_; ++i) rows[i] = label * tokens_per_class_ + i;
    return {gather_rows(table_, rows)};
}

TextEmbedding embed_class(const TextEmbeddingTable& table, std::size_t label) {
    return table.embed(label);
}

}  // namespace evlf
