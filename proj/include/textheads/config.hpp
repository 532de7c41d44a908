#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "textheads/encoder.hpp"
#include "textheads/heads.hpp"
#include "textheads/model.hpp"

namespace textheads {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// `key=value` lines; `#` starts a comment, blank lines are ignored.
/// Throws FormatError for a line without '='.
KeyValues parse_key_values(std::string_view text);
KeyValues read_config_file(const std::filesystem::path& path);

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    double learning_rate = 1e-3;
    std::uint64_t seed = 42;
    EncoderConfig encoder;
    HeadConfig head;
    std::string static_vectors;  // optional path, static encoder only

    void validate() const;
    ModelConfig model_config() const { return {encoder, head}; }
};

/// Every recognised configuration key with its current value. Head
/// hyperparameters for all architectures live side by side so one file can
/// drive a benchmark over several heads.
struct Settings {
    HeadKind head = HeadKind::linear;
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    double learning_rate = 1e-3;
    std::uint64_t seed = 42;
    std::size_t max_len = 128;

    EmbeddingKind encoder = EmbeddingKind::transformer;
    std::size_t enc_layers = 2;
    std::size_t enc_heads = 4;
    std::size_t dim = 128;
    std::size_t ff_dim = 512;
    double enc_dropout = 0.1;
    std::string static_vectors;

    std::vector<std::size_t> kernel_sizes{2, 3, 4};
    std::size_t kernels_per_size = 100;
    std::size_t layers = 2;
    std::size_t hidden = 768;
    std::size_t channels = 250;
    std::size_t kernel = 3;
    std::size_t pool_window = 3;
    std::size_t pool_stride = 2;
    double dropout = 0.1;

    /// Throws UsageError for unknown keys or unparsable values.
    void set(std::string_view key, std::string_view value);
    void apply(const KeyValues& entries);

    HeadConfig head_config(HeadKind kind) const;
    EncoderConfig encoder_config() const;
    TrainConfig train_config() const;
    TrainConfig train_config(HeadKind kind) const;
};

/// Defaults, then the config file, then command-line overrides.
Settings resolve_settings(const KeyValues& file_entries, const KeyValues& overrides);

/// Lossless textual form of a double (17 significant digits).
std::string format_double(double value);

/// Key/value description of a model's architecture; enough to rebuild it.
KeyValues describe(const ModelConfig& config);
/// Inverse of describe(); throws UsageError on unknown keys.
ModelConfig model_config_from(const KeyValues& entries);
/// describe() of the model plus the optimisation settings.
KeyValues describe(const TrainConfig& config);

}  // namespace textheads
