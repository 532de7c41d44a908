#pragma once

#include <cstdint>
#include <string_view>

#include "textheads/encoder.hpp"
#include "textheads/heads.hpp"
#include "textheads/text.hpp"

namespace textheads {

struct ModelConfig {
    EncoderConfig encoder;
    HeadConfig head;

    bool operator==(const ModelConfig&) const = default;
};

struct Prediction {
    int label = 0;
    double probability = 0.0;  // of the predicted label
};

/// Vocabulary, embedding provider and classification head as one unit.
class Model {
public:
    /// Fresh initialisation. For the static provider, `pretrained` (when
    /// given) replaces the random table and must have width config.encoder.dim.
    Model(Vocabulary vocab, ModelConfig config, std::uint64_t seed, const EmbeddingTable* pretrained = nullptr);

    const Vocabulary& vocab() const { return vocab_; }
    const ModelConfig& config() const { return config_; }
    HeadKind kind() const { return head_kind(config_.head); }
    const EncoderParams& encoder_params() const { return encoder_; }
    const Head& head() const { return head_; }

    EncodedText encode(std::string_view text) const;

    /// Two logits for one encoded example. `rng` is needed in train mode.
    Tensor logits(const EncodedText& input, Mode mode, Rng* rng) const;
    Tensor encode_and_embed(const EncodedText& input, Mode mode, Rng* rng) const;

    Prediction predict(std::string_view text) const;

    /// Tensors updated by training.
    ParamList parameters() const;
    /// Every tensor, frozen ones included, in checkpoint order.
    ParamList all_parameters() const;

    /// Deep copy with independent storage.
    Model clone() const;
    /// Copies parameter values from a model of identical structure.
    void assign_values(const Model& other);

private:
    Vocabulary vocab_;
    ModelConfig config_;
    EncoderParams encoder_;
    Head head_;
};

}  // namespace textheads
