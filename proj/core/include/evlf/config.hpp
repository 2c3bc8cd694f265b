#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace evlf {

// Every knob of a run in one flat, serializable record. Defaults follow the
// reference training recipe: AdamW, 4 epochs, batch 16, lr 3e-4 / 1e-4,
// weight decay 1e-2, lambda1 = 0.1, lambda2 ramped 0.05 -> 1.0 over the
// first 2 epochs.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string dataset = "blobs";  // blobs | cifar10
    std::string data_dir;           // cifar10 binary batches
    std::vector<std::size_t> cifar_classes = {0, 5};  // airplane vs dog smoke subset

    std::size_t num_classes = 4;
    std::size_t per_class = 500;       // training samples per class
    std::size_t test_per_class = 200;  // held-out samples per class (blobs)
    std::size_t ipc = 10;

    std::size_t image_h = 16, image_w = 16, image_c = 1;
    std::size_t patch = 4;     // autoencoder patch edge
    std::size_t latent_c = 8;  // latent channels per patch cell

    // fusion dims
    std::size_t d = 64;
    std::size_t heads = 4;
    std::size_t text_tokens = 4;  // L
    std::size_t text_dim = 32;    // C_t

    // loss weights
    double lambda1 = 0.1;
    double lambda2_start = 0.05;
    double lambda2_end = 1.0;
    std::size_t lambda2_ramp_epochs = 2;
    double temperature = 0.1;

    // fusion training
    double lr_ca = 3e-4;
    double lr_proj = 1e-4;
    double weight_decay = 1e-2;
    std::size_t batch = 16;
    std::size_t epochs_ca = 4;
    bool freeze_text_table = false;

    // autoencoder
    std::size_t ae_epochs = 20;
    double lr_ae = 1e-3;

    // diffusion
    std::size_t diffusion_steps = 200;  // T
    double beta_min = 1e-4;
    double beta_max = 0.02;
    std::size_t t_start = 50;  // partial-noising depth when seeding from fused latents
    std::size_t denoiser_train_steps = 4000;
    std::size_t denoiser_ft_steps = 1500;
    double lr_denoiser = 1e-3;
    std::size_t denoiser_width = 128;
    std::size_t denoiser_time_dim = 32;
    std::size_t denoiser_batch = 32;

    std::string synthesis_mode = "diffuse";  // decode | diffuse
    bool finetune_denoiser = true;

    // evaluation
    std::size_t classifier_epochs = 100;
    double lr_classifier = 1e-3;
    std::size_t classifier_width = 128;
    std::size_t num_seeds = 3;
    std::size_t coverage_k = 20;
    std::string coverage_space = "pixel";  // pixel | latent

    std::size_t latent_h() const { return image_h / patch; }
    std::size_t latent_w() const { return image_w / patch; }

    void validate() const;  // throws ConfigError
};

// Flat `key = value` text, one knob per line, '#' comments. Unknown keys are
// rejected. serialize_config emits every effective value in a fixed order,
// doubles at full round-trip precision.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& cfg);
void save_resolved_config(const std::filesystem::path& out_dir, const RunConfig& cfg);

// FNV-1a over the serialized text; stamped into checkpoints and manifests.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace evlf
