#include "textheads/model.hpp"

#include <algorithm>

#include "textheads/error.hpp"

namespace textheads {

Model::Model(Vocabulary vocab, ModelConfig config, std::uint64_t seed, const EmbeddingTable* pretrained)
    : vocab_(std::move(vocab)), config_(std::move(config)) {
    config_.encoder.validate();
    Rng rng(seed);
    encoder_ = init_encoder(config_.encoder, vocab_.size(), rng);
    head_ = build_head(config_.head, config_.encoder.dim, rng);
    if (pretrained != nullptr) {
        if (config_.encoder.kind != EmbeddingKind::static_table) {
            throw ParameterError("pretrained vectors require the static encoder");
        }
        if (pretrained->weights.shape() != encoder_.table.weights.shape()) {
            throw ShapeError("pretrained table " + shape_string(pretrained->weights.shape()) + " does not match " +
                             shape_string(encoder_.table.weights.shape()));
        }
        encoder_.table.weights = pretrained->weights.detach();
        encoder_.table.weights.set_requires_grad(false);
    }
}

EncodedText Model::encode(std::string_view text) const { return encode_text(text, config_.encoder.max_len, vocab_); }

Tensor Model::encode_and_embed(const EncodedText& input, Mode mode, Rng* rng) const {
    return encoder_forward(input.ids, input.length, config_.encoder, encoder_, mode, rng);
}

Tensor Model::logits(const EncodedText& input, Mode mode, Rng* rng) const {
    Tensor emb = encode_and_embed(input, mode, rng);
    return head_forward(head_, emb, input.length, HeadContext{mode, rng, nullptr});
}

Prediction Model::predict(std::string_view text) const {
    NoGradGuard no_grad;
    const Tensor z = logits(encode(text), Mode::eval, nullptr);
    const std::vector<double> p = softmax(z.data());
    const int label = p[1] > p[0] ? 1 : 0;
    return {label, p[static_cast<std::size_t>(label)]};
}

ParamList Model::parameters() const {
    ParamList out = encoder_parameters(encoder_, true);
    for (auto& p : head_.parameters()) {
        if (p.tensor.requires_grad()) {
            out.push_back(std::move(p));
        }
    }
    return out;
}

ParamList Model::all_parameters() const {
    ParamList out = encoder_parameters(encoder_, false);
    for (auto& p : head_.parameters()) {
        out.push_back(std::move(p));
    }
    return out;
}

Model Model::clone() const {
    Model copy(vocab_, config_, 0);
    copy.assign_values(*this);
    return copy;
}

void Model::assign_values(const Model& other) {
    ParamList dst = all_parameters();
    const ParamList src = other.all_parameters();
    if (dst.size() != src.size()) {
        throw ShapeError("assign_values: models have different parameter sets");
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].name != src[i].name || dst[i].tensor.shape() != src[i].tensor.shape()) {
            throw ShapeError("assign_values: parameter " + dst[i].name + " does not match " + src[i].name);
        }
        auto from = src[i].tensor.data();
        std::copy(from.begin(), from.end(), dst[i].tensor.mutable_data().begin());
    }
}

}  // namespace textheads
