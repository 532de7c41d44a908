#include "textheads/encoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "textheads/error.hpp"
#include "textheads/init.hpp"

namespace textheads {

std::string_view to_string(EmbeddingKind kind) {
    switch (kind) {
        case EmbeddingKind::static_table:
            return "static";
        case EmbeddingKind::trainable_table:
            return "trainable";
        case EmbeddingKind::transformer:
            return "transformer";
    }
    return "transformer";
}

EmbeddingKind parse_embedding_kind(std::string_view name) {
    if (name == "static") {
        return EmbeddingKind::static_table;
    }
    if (name == "trainable") {
        return EmbeddingKind::trainable_table;
    }
    if (name == "transformer") {
        return EmbeddingKind::transformer;
    }
    throw ParameterError("unknown encoder kind '" + std::string(name) + "' (static|trainable|transformer)");
}

void EncoderConfig::validate() const {
    if (dim == 0 || heads == 0 || ff_dim == 0) {
        throw ParameterError("encoder: dim, heads and ff_dim must be positive");
    }
    if (dim % heads != 0) {
        throw ParameterError("encoder: dim " + std::to_string(dim) + " not divisible by heads " +
                             std::to_string(heads));
    }
    if (max_len < 2) {
        throw ParameterError("encoder: max_len must be at least 2");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ParameterError("encoder: dropout outside [0,1)");
    }
}

Tensor embed(std::span<const int> ids, const EmbeddingTable& table, const Tensor& positional) {
    Tensor tokens = gather_rows(table.weights, ids, Vocabulary::pad_id);
    if (!positional.defined()) {
        return tokens;
    }
    if (positional.rank() != 2 || positional.dim(1) != tokens.dim(1) || positional.dim(0) < ids.size()) {
        throw ShapeError("embed: positional table " + shape_string(positional.shape()) + " cannot cover " +
                         std::to_string(ids.size()) + " positions of width " + std::to_string(tokens.dim(1)));
    }
    return add(tokens, slice(positional, 0, 0, ids.size()));
}

namespace {

struct Projections {
    Tensor query;
    Tensor key;
    Tensor value;
};

void check_attention_shapes(const Tensor& x, std::size_t heads, std::size_t length) {
    if (x.rank() != 2) {
        throw ShapeError("attention: input must be [T,D], got " + shape_string(x.shape()));
    }
    if (heads == 0 || x.dim(1) % heads != 0) {
        throw ShapeError("attention: width " + std::to_string(x.dim(1)) + " not divisible by " +
                         std::to_string(heads) + " heads");
    }
    if (length == 0 || length > x.dim(0)) {
        throw ShapeError("attention: true length " + std::to_string(length) + " invalid for " +
                         shape_string(x.shape()));
    }
}

std::vector<Tensor> head_probabilities(const Projections& proj, std::size_t heads, std::size_t length) {
    const std::size_t width = proj.query.dim(1) / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width));
    std::vector<Tensor> probs;
    probs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor q = slice(proj.query, 1, h * width, (h + 1) * width);
        Tensor k = slice(proj.key, 1, h * width, (h + 1) * width);
        probs.push_back(masked_softmax(scale(matmul(q, transpose(k)), inv_sqrt), length));
    }
    return probs;
}

Projections project(const Tensor& x, const AttentionParams& p) {
    return {affine(x, p.query_w, p.query_b), affine(x, p.key_w, Tensor()), affine(x, p.value_w, p.value_b)};
}

}  // namespace

std::vector<Tensor> attention_weights(const Tensor& x, const AttentionParams& params, std::size_t heads,
                                      std::size_t length) {
    check_attention_shapes(x, heads, length);
    return head_probabilities(project(x, params), heads, length);
}

Tensor attention(const Tensor& x, const AttentionParams& params, std::size_t heads, std::size_t length) {
    check_attention_shapes(x, heads, length);
    const Projections proj = project(x, params);
    const std::vector<Tensor> probs = head_probabilities(proj, heads, length);
    const std::size_t width = x.dim(1) / heads;
    std::vector<Tensor> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        outputs.push_back(matmul(probs[h], slice(proj.value, 1, h * width, (h + 1) * width)));
    }
    return affine(concat(outputs, 1), params.out_w, params.out_b);
}

Tensor encoder_forward(std::span<const int> ids, std::size_t length, const EncoderConfig& config,
                       const EncoderParams& params, Mode mode, Rng* rng) {
    if (ids.empty() || ids.size() > config.max_len) {
        throw ShapeError("encoder: sequence of " + std::to_string(ids.size()) + " ids exceeds max_len " +
                         std::to_string(config.max_len));
    }
    Tensor x = embed(ids, params.table, params.positional);
    for (const EncoderLayerParams& layer : params.layers) {
        Tensor attended = dropout(attention(x, layer.attention, config.heads, length), config.dropout, mode, rng);
        x = layer_norm(add(x, attended), layer.norm1_gain, layer.norm1_bias);
        Tensor hidden = relu(affine(x, layer.ff1_w, layer.ff1_b));
        Tensor ff = dropout(affine(hidden, layer.ff2_w, layer.ff2_b), config.dropout, mode, rng);
        x = layer_norm(add(x, ff), layer.norm2_gain, layer.norm2_bias);
    }
    return x;
}

EncoderParams init_encoder(const EncoderConfig& config, std::size_t vocab_size, Rng& rng) {
    config.validate();
    const std::size_t d = config.dim;
    EncoderParams p;
    p.table.weights = init_uniform({vocab_size, d}, rng);
    std::span<double> pad_row = p.table.weights.mutable_data().subspan(
        static_cast<std::size_t>(Vocabulary::pad_id) * d, d);
    std::fill(pad_row.begin(), pad_row.end(), 0.0);
    if (config.kind == EmbeddingKind::static_table) {
        p.table.weights.set_requires_grad(false);
        p.positional = Tensor(Shape{config.max_len, d});
    } else {
        p.positional = init_uniform({config.max_len, d}, rng);
    }
    for (std::size_t l = 0; l < config.active_layers(); ++l) {
        EncoderLayerParams layer;
        AttentionParams& a = layer.attention;
        a.query_w = init_uniform({d, d}, rng);
        a.query_b = init_constant({d});
        a.key_w = init_uniform({d, d}, rng);
        a.value_w = init_uniform({d, d}, rng);
        a.value_b = init_constant({d});
        a.out_w = init_uniform({d, d}, rng);
        a.out_b = init_constant({d});
        layer.norm1_gain = init_constant({d}, 1.0);
        layer.norm1_bias = init_constant({d});
        layer.ff1_w = init_uniform({config.ff_dim, d}, rng);
        layer.ff1_b = init_constant({config.ff_dim});
        layer.ff2_w = init_uniform({d, config.ff_dim}, rng);
        layer.ff2_b = init_constant({d});
        layer.norm2_gain = init_constant({d}, 1.0);
        layer.norm2_bias = init_constant({d});
        p.layers.push_back(std::move(layer));
    }
    return p;
}

ParamList encoder_parameters(const EncoderParams& params, bool trainable_only) {
    ParamList out;
    const auto push = [&](std::string name, const Tensor& t) {
        if (!trainable_only || t.requires_grad()) {
            out.push_back({std::move(name), t});
        }
    };
    push("encoder.table", params.table.weights);
    push("encoder.positional", params.positional);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const EncoderLayerParams& layer = params.layers[l];
        const std::string prefix = "encoder.layer" + std::to_string(l) + ".";
        push(prefix + "attn.query_w", layer.attention.query_w);
        push(prefix + "attn.query_b", layer.attention.query_b);
        push(prefix + "attn.key_w", layer.attention.key_w);
        push(prefix + "attn.value_w", layer.attention.value_w);
        push(prefix + "attn.value_b", layer.attention.value_b);
        push(prefix + "attn.out_w", layer.attention.out_w);
        push(prefix + "attn.out_b", layer.attention.out_b);
        push(prefix + "norm1.gain", layer.norm1_gain);
        push(prefix + "norm1.bias", layer.norm1_bias);
        push(prefix + "ff1.w", layer.ff1_w);
        push(prefix + "ff1.b", layer.ff1_b);
        push(prefix + "ff2.w", layer.ff2_w);
        push(prefix + "ff2.b", layer.ff2_b);
        push(prefix + "norm2.gain", layer.norm2_gain);
        push(prefix + "norm2.bias", layer.norm2_bias);
    }
    return out;
}

StaticVectors load_static_vectors(const std::filesystem::path& path, const Vocabulary& vocab, Rng& rng) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open static vectors " + path.string());
    }
    std::unordered_map<std::string, std::vector<double>> rows;
    std::size_t dim = 0;
    std::size_t first_line = 0;
    std::string line;
    for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream fields(line);
        std::string token;
        if (!(fields >> token)) {
            continue;
        }
        std::vector<double> values;
        std::string field;
        while (fields >> field) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(field, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != field.size() || !std::isfinite(v)) {
                throw FormatError(line_no, "value '" + field + "' is not a finite number");
            }
            values.push_back(v);
        }
        if (values.empty()) {
            throw FormatError(line_no, "token '" + token + "' has no vector");
        }
        if (dim == 0) {
            dim = values.size();
            first_line = line_no;
        } else if (values.size() != dim) {
            throw FormatError(line_no, "vector has " + std::to_string(values.size()) + " components, line " +
                                           std::to_string(first_line) + " has " + std::to_string(dim));
        }
        rows.try_emplace(token, std::move(values));
    }
    if (dim == 0) {
        throw FormatError(1, "no vectors found in " + path.string());
    }

    StaticVectors out;
    out.dim = dim;
    out.table.weights = init_uniform({vocab.size(), dim}, rng);
    out.table.weights.set_requires_grad(false);
    std::span<double> values = out.table.weights.mutable_data();
    for (std::size_t id = 0; id < vocab.size(); ++id) {
        const std::string& token = vocab.token(static_cast<int>(id));
        auto it = rows.find(token);
        if (id == static_cast<std::size_t>(Vocabulary::pad_id)) {
            std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(id * dim), dim, 0.0);
            continue;
        }
        if (it != rows.end()) {
            std::copy(it->second.begin(), it->second.end(), values.begin() + static_cast<std::ptrdiff_t>(id * dim));
            if (id >= Vocabulary::reserved) {
                ++out.covered;
            }
        } else if (id >= Vocabulary::reserved) {
            out.missing.push_back(token);
        }
    }
    return out;
}

}  // namespace textheads
