#pragma once

#include <cstddef>
#include <string_view>
#include <variant>
#include <vector>

#include "textheads/ops.hpp"
#include "textheads/rng.hpp"
#include "textheads/tensor.hpp"

namespace textheads {

// Classification heads: each maps encoder output [T,D] to two logits
// (class 0 legal, class 1 illegal).

struct LinearHeadConfig {
    bool operator==(const LinearHeadConfig&) const = default;
};

struct TextCnnConfig {
    std::vector<std::size_t> kernel_sizes{2, 3, 4};
    std::size_t kernels_per_size = 100;
    double dropout = 0.1;

    bool operator==(const TextCnnConfig&) const = default;
};

struct BiLstmConfig {
    std::size_t layers = 2;
    std::size_t hidden = 768;
    double dropout = 0.1;

    bool operator==(const BiLstmConfig&) const = default;
};

struct RcnnConfig {
    std::size_t layers = 2;
    std::size_t hidden = 768;
    double dropout = 0.1;

    bool operator==(const RcnnConfig&) const = default;
};

struct DpcnnConfig {
    std::size_t channels = 250;
    std::size_t kernel = 3;
    std::size_t pool_window = 3;
    std::size_t pool_stride = 2;
    double dropout = 0.1;

    bool operator==(const DpcnnConfig&) const = default;
};

using HeadConfig = std::variant<LinearHeadConfig, TextCnnConfig, BiLstmConfig, RcnnConfig, DpcnnConfig>;

enum class HeadKind { linear, textcnn, bilstm, rcnn, dpcnn };

inline constexpr HeadKind kAllHeadKinds[] = {HeadKind::linear, HeadKind::textcnn, HeadKind::bilstm, HeadKind::rcnn,
                                             HeadKind::dpcnn};

HeadKind head_kind(const HeadConfig& config);
/// Config-file spelling: linear, textcnn, bilstm, rcnn, dpcnn.
std::string_view to_string(HeadKind kind);
HeadKind parse_head_kind(std::string_view name);
/// Row label used in benchmark tables (Baseline, CNN, RNN, RCNN, DPCNN).
std::string_view display_name(HeadKind kind);
HeadConfig default_head_config(HeadKind kind);
void validate(const HeadConfig& config);

struct LinearParams {
    Tensor weight;  // [2, D]
    Tensor bias;    // [2]
};

struct ConvParams {
    Tensor weight;  // [K, w, Din]
    Tensor bias;    // [K]
};

struct TextCnnParams {
    std::vector<ConvParams> convs;  // one per kernel size
    LinearParams output;
};

struct BiLstmHeadParams {
    std::vector<BiLstmLayerParams> layers;
    LinearParams output;
};

struct DpcnnParams {
    ConvParams region;
    // Shared by the length-preserving stage and every pyramid block, so the
    // parameter set does not depend on sequence length.
    ConvParams conv_a;
    ConvParams conv_b;
    LinearParams output;
};

using HeadParams = std::variant<LinearParams, TextCnnParams, BiLstmHeadParams, DpcnnParams>;

struct Head {
    HeadConfig config;
    std::size_t input_dim = 0;
    HeadParams params;

    ParamList parameters() const;
    std::size_t parameter_count() const;
};

/// Allocates and initialises a head for encoder width `input_dim`.
Head build_head(const HeadConfig& config, std::size_t input_dim, Rng& rng);

struct HeadContext {
    Mode mode = Mode::eval;
    Rng* rng = nullptr;
    /// When set, dpcnn_head appends the output length of every pyramid block.
    std::vector<std::size_t>* dpcnn_trace = nullptr;
};

Tensor linear_head(const Tensor& emb, const LinearParams& params);
Tensor textcnn_head(const Tensor& emb, const TextCnnConfig& config, const TextCnnParams& params,
                    const HeadContext& ctx);
/// Runs over the first `length` positions of emb.
Tensor bilstm_head(const Tensor& emb, std::size_t length, const BiLstmConfig& config, const BiLstmHeadParams& params,
                   const HeadContext& ctx);
Tensor rcnn_head(const Tensor& emb, std::size_t length, const RcnnConfig& config, const BiLstmHeadParams& params,
                 const HeadContext& ctx);
Tensor dpcnn_head(const Tensor& emb, const DpcnnConfig& config, const DpcnnParams& params, const HeadContext& ctx);

/// Dispatches on the head variant. `length` is the true (unpadded) length;
/// the recurrent heads use only that prefix, the others see all of emb.
Tensor head_forward(const Head& head, const Tensor& emb, std::size_t length, const HeadContext& ctx);

/// Output lengths of the DPCNN pyramid blocks for input length T: starting
/// from L = T, L <- floor((L - window)/stride) + 1 while L >= window.
std::vector<std::size_t> dpcnn_schedule(std::size_t steps, std::size_t window = 3, std::size_t stride = 2);

}  // namespace textheads
