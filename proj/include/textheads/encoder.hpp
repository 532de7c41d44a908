#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "textheads/ops.hpp"
#include "textheads/rng.hpp"
#include "textheads/tensor.hpp"
#include "textheads/text.hpp"

namespace textheads {

/// Which embedding provider feeds the heads. All three map ids[T] to [T,D].
///   static_table     frozen token table, no positions, no layers
///   trainable_table  trainable token table plus learned positions
///   transformer      trainable table, positions and self-attention layers
enum class EmbeddingKind { static_table, trainable_table, transformer };

std::string_view to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding_kind(std::string_view name);

struct EncoderConfig {
    EmbeddingKind kind = EmbeddingKind::transformer;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t dim = 128;
    std::size_t ff_dim = 512;
    std::size_t max_len = 128;
    double dropout = 0.1;

    void validate() const;
    /// Layers actually run; zero for the table-only providers.
    std::size_t active_layers() const { return kind == EmbeddingKind::transformer ? layers : 0; }

    bool operator==(const EncoderConfig&) const = default;
};

struct EmbeddingTable {
    Tensor weights;  // [V, D]; row Vocabulary::pad_id stays zero
};

struct AttentionParams {
    Tensor query_w, query_b;
    Tensor key_w;  // no bias: it would shift every score of a query equally
    Tensor value_w, value_b;
    Tensor out_w, out_b;
};

struct EncoderLayerParams {
    AttentionParams attention;
    Tensor norm1_gain, norm1_bias;
    Tensor ff1_w, ff1_b;
    Tensor ff2_w, ff2_b;
    Tensor norm2_gain, norm2_bias;
};

struct EncoderParams {
    EmbeddingTable table;
    Tensor positional;  // [max_len, D]
    std::vector<EncoderLayerParams> layers;
};

/// out[t] = table[ids[t]] + positional[t], with PAD rows contributing zero.
Tensor embed(std::span<const int> ids, const EmbeddingTable& table, const Tensor& positional);

/// Multi-head scaled dot-product self-attention. Key positions at or after
/// `length` are masked out.
Tensor attention(const Tensor& x, const AttentionParams& params, std::size_t heads, std::size_t length);

/// The per-head attention probability matrices [T,T] that attention() uses.
std::vector<Tensor> attention_weights(const Tensor& x, const AttentionParams& params, std::size_t heads,
                                      std::size_t length);

/// Post-norm transformer stack over the embedded ids.
Tensor encoder_forward(std::span<const int> ids, std::size_t length, const EncoderConfig& config,
                       const EncoderParams& params, Mode mode, Rng* rng);

EncoderParams init_encoder(const EncoderConfig& config, std::size_t vocab_size, Rng& rng);

/// Named tensors of the encoder. Frozen tensors are included only when
/// `trainable_only` is false.
ParamList encoder_parameters(const EncoderParams& params, bool trainable_only);

struct StaticVectors {
    EmbeddingTable table;
    std::size_t dim = 0;
    std::size_t covered = 0;              // regular vocabulary tokens found in the file
    std::vector<std::string> missing;     // regular tokens initialised instead
};

/// Reads `<token> <v1> ... <vD>` lines into a [V,D] table aligned with
/// `vocab`. The returned table is frozen.
StaticVectors load_static_vectors(const std::filesystem::path& path, const Vocabulary& vocab, Rng& rng);

}  // namespace textheads
