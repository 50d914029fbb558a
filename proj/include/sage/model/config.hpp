#pragma once

#include <filesystem>
#include <string>

namespace sage::model {

// Architecture and inference hyperparameters. Stored on disk as flat
// `key = value` text; unknown keys are rejected.
struct ModelConfig {
    int n_layers = 2;
    int d_model = 32;
    int n_heads = 2;
    int d_ff = 64;
    int vocab_nl = 64;
    int vocab_code = 64;
    int max_seq_len = 256;
    int k_landmark = 16;
    int local_window = 32;
    double eps_rms = 1e-6;
    double beta_swish = 1.0;
    double lambda_skepticism = 0.5;
    double tau_uncertainty = 1.0;
    int d_critic = 8;
    double inv_loss_weight = 0.5;

    // Token ids must index both embedding tables.
    int vocab_size() const { return vocab_nl < vocab_code ? vocab_nl : vocab_code; }

    // Throws std::invalid_argument on any violated invariant.
    void validate() const;

    // L = 64, k = 64, 4096-token window; kept for reference, too large to train here.
    static ModelConfig full_scale();
};

ModelConfig parse_config(const std::string& text);
std::string format_config(const ModelConfig& config);
ModelConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ModelConfig& config);

}  // namespace sage::model
