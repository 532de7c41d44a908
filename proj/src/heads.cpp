#include "textheads/heads.hpp"

#include <algorithm>
#include <string>

#include "textheads/error.hpp"
#include "textheads/init.hpp"

namespace textheads {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr std::size_t kClasses = 2;

void check_dropout(double p, const char* head) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw ParameterError(std::string(head) + ": dropout outside [0,1)");
    }
}

void check_embedding(const Tensor& emb, const char* head) {
    if (emb.rank() != 2) {
        throw ShapeError(std::string(head) + ": expected [T,D] input, got " + shape_string(emb.shape()));
    }
}

LinearParams make_output(std::size_t features, Rng& rng) {
    return {init_uniform({kClasses, features}, rng), init_constant({kClasses})};
}

ConvParams make_conv(std::size_t kernels, std::size_t width, std::size_t input, Rng& rng) {
    return {init_uniform({kernels, width, input}, rng), init_constant({kernels})};
}

LstmParams make_lstm(std::size_t input, std::size_t hidden, Rng& rng) {
    LstmParams p{init_uniform({4 * hidden, input}, rng), init_uniform({4 * hidden, hidden}, rng),
                 init_constant({4 * hidden})};
    std::span<double> bias = p.bias.mutable_data();
    std::fill(bias.begin() + static_cast<std::ptrdiff_t>(hidden), bias.begin() + static_cast<std::ptrdiff_t>(2 * hidden),
              1.0);
    return p;
}

BiLstmHeadParams make_bilstm(std::size_t input, std::size_t layers, std::size_t hidden, std::size_t output_features,
                             Rng& rng) {
    BiLstmHeadParams p;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = l == 0 ? input : 2 * hidden;
        BiLstmLayerParams layer;
        layer.forward = make_lstm(in, hidden, rng);
        layer.backward = make_lstm(in, hidden, rng);
        p.layers.push_back(std::move(layer));
    }
    p.output = make_output(output_features, rng);
    return p;
}

Tensor recurrent_input(const Tensor& emb, std::size_t length, const char* head) {
    check_embedding(emb, head);
    if (length == 0 || length > emb.dim(0)) {
        throw ShapeError(std::string(head) + ": true length " + std::to_string(length) + " invalid for " +
                         shape_string(emb.shape()));
    }
    return length == emb.dim(0) ? emb : slice(emb, 0, 0, length);
}

Tensor preactivated_conv(const Tensor& x, const ConvParams& conv) {
    return conv1d(relu(x), conv.weight, conv.bias, Padding::same);
}

void push_linear(ParamList& out, const std::string& prefix, const LinearParams& p) {
    out.push_back({prefix + ".w", p.weight});
    out.push_back({prefix + ".b", p.bias});
}

void push_conv(ParamList& out, const std::string& prefix, const ConvParams& p) {
    out.push_back({prefix + ".w", p.weight});
    out.push_back({prefix + ".b", p.bias});
}

}  // namespace

HeadKind head_kind(const HeadConfig& config) {
    return std::visit(Overloaded{[](const LinearHeadConfig&) { return HeadKind::linear; },
                                 [](const TextCnnConfig&) { return HeadKind::textcnn; },
                                 [](const BiLstmConfig&) { return HeadKind::bilstm; },
                                 [](const RcnnConfig&) { return HeadKind::rcnn; },
                                 [](const DpcnnConfig&) { return HeadKind::dpcnn; }},
                      config);
}

std::string_view to_string(HeadKind kind) {
    switch (kind) {
        case HeadKind::linear:
            return "linear";
        case HeadKind::textcnn:
            return "textcnn";
        case HeadKind::bilstm:
            return "bilstm";
        case HeadKind::rcnn:
            return "rcnn";
        case HeadKind::dpcnn:
            return "dpcnn";
    }
    return "linear";
}

HeadKind parse_head_kind(std::string_view name) {
    for (HeadKind kind : kAllHeadKinds) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    throw ParameterError("unknown head '" + std::string(name) + "' (linear|textcnn|bilstm|rcnn|dpcnn)");
}

std::string_view display_name(HeadKind kind) {
    switch (kind) {
        case HeadKind::linear:
            return "Baseline";
        case HeadKind::textcnn:
            return "CNN";
        case HeadKind::bilstm:
            return "RNN";
        case HeadKind::rcnn:
            return "RCNN";
        case HeadKind::dpcnn:
            return "DPCNN";
    }
    return "Baseline";
}

HeadConfig default_head_config(HeadKind kind) {
    switch (kind) {
        case HeadKind::linear:
            return LinearHeadConfig{};
        case HeadKind::textcnn:
            return TextCnnConfig{};
        case HeadKind::bilstm:
            return BiLstmConfig{};
        case HeadKind::rcnn:
            return RcnnConfig{};
        case HeadKind::dpcnn:
            return DpcnnConfig{};
    }
    return LinearHeadConfig{};
}

void validate(const HeadConfig& config) {
    std::visit(Overloaded{[](const LinearHeadConfig&) {},
                          [](const TextCnnConfig& c) {
                              if (c.kernel_sizes.empty() || c.kernels_per_size == 0 ||
                                  std::count(c.kernel_sizes.begin(), c.kernel_sizes.end(), 0u) > 0) {
                                  throw ParameterError("textcnn: kernel sizes and counts must be positive");
                              }
                              check_dropout(c.dropout, "textcnn");
                          },
                          [](const BiLstmConfig& c) {
                              if (c.layers == 0 || c.hidden == 0) {
                                  throw ParameterError("bilstm: layers and hidden must be positive");
                              }
                              check_dropout(c.dropout, "bilstm");
                          },
                          [](const RcnnConfig& c) {
                              if (c.layers == 0 || c.hidden == 0) {
                                  throw ParameterError("rcnn: layers and hidden must be positive");
                              }
                              check_dropout(c.dropout, "rcnn");
                          },
                          [](const DpcnnConfig& c) {
                              if (c.channels == 0 || c.kernel == 0 || c.pool_window == 0 || c.pool_stride == 0) {
                                  throw ParameterError("dpcnn: channels, kernel and pooling sizes must be positive");
                              }
                              check_dropout(c.dropout, "dpcnn");
                          }},
               config);
}

Head build_head(const HeadConfig& config, std::size_t input_dim, Rng& rng) {
    validate(config);
    if (input_dim == 0) {
        throw ParameterError("build_head: input width must be positive");
    }
    Head head{config, input_dim, LinearParams{}};
    head.params = std::visit(
        Overloaded{[&](const LinearHeadConfig&) -> HeadParams { return make_output(input_dim, rng); },
                   [&](const TextCnnConfig& c) -> HeadParams {
                       TextCnnParams p;
                       for (std::size_t width : c.kernel_sizes) {
                           p.convs.push_back(make_conv(c.kernels_per_size, width, input_dim, rng));
                       }
                       p.output = make_output(c.kernels_per_size * c.kernel_sizes.size(), rng);
                       return p;
                   },
                   [&](const BiLstmConfig& c) -> HeadParams {
                       return make_bilstm(input_dim, c.layers, c.hidden, 2 * c.hidden, rng);
                   },
                   [&](const RcnnConfig& c) -> HeadParams {
                       return make_bilstm(input_dim, c.layers, c.hidden, 2 * c.hidden + input_dim, rng);
                   },
                   [&](const DpcnnConfig& c) -> HeadParams {
                       DpcnnParams p;
                       p.region = make_conv(c.channels, c.kernel, input_dim, rng);
                       p.conv_a = make_conv(c.channels, c.kernel, c.channels, rng);
                       p.conv_b = make_conv(c.channels, c.kernel, c.channels, rng);
                       p.output = make_output(c.channels, rng);
                       return p;
                   }},
        config);
    return head;
}

ParamList Head::parameters() const {
    ParamList out;
    std::visit(Overloaded{[&](const LinearParams& p) { push_linear(out, "head.output", p); },
                          [&](const TextCnnParams& p) {
                              for (std::size_t i = 0; i < p.convs.size(); ++i) {
                                  push_conv(out, "head.conv" + std::to_string(i), p.convs[i]);
                              }
                              push_linear(out, "head.output", p.output);
                          },
                          [&](const BiLstmHeadParams& p) {
                              for (std::size_t l = 0; l < p.layers.size(); ++l) {
                                  for (int dir = 0; dir < 2; ++dir) {
                                      const LstmParams& lstm = dir == 0 ? p.layers[l].forward : p.layers[l].backward;
                                      const std::string prefix =
                                          "head.lstm" + std::to_string(l) + (dir == 0 ? ".fwd" : ".bwd");
                                      out.push_back({prefix + ".w_input", lstm.w_input});
                                      out.push_back({prefix + ".w_hidden", lstm.w_hidden});
                                      out.push_back({prefix + ".bias", lstm.bias});
                                  }
                              }
                              push_linear(out, "head.output", p.output);
                          },
                          [&](const DpcnnParams& p) {
                              push_conv(out, "head.region", p.region);
                              push_conv(out, "head.conv_a", p.conv_a);
                              push_conv(out, "head.conv_b", p.conv_b);
                              push_linear(out, "head.output", p.output);
                          }},
               params);
    return out;
}

std::size_t Head::parameter_count() const { return textheads::parameter_count(parameters()); }

Tensor linear_head(const Tensor& emb, const LinearParams& params) {
    check_embedding(emb, "linear_head");
    return affine(row(emb, 0), params.weight, params.bias);
}

Tensor textcnn_head(const Tensor& emb, const TextCnnConfig& config, const TextCnnParams& params,
                    const HeadContext& ctx) {
    check_embedding(emb, "textcnn_head");
    const std::size_t widest = *std::max_element(config.kernel_sizes.begin(), config.kernel_sizes.end());
    if (emb.dim(0) < widest) {
        throw SequenceTooShortError("textcnn_head: sequence length " + std::to_string(emb.dim(0)) +
                                    " shorter than kernel width " + std::to_string(widest));
    }
    std::vector<Tensor> pooled;
    pooled.reserve(params.convs.size());
    for (const ConvParams& conv : params.convs) {
        pooled.push_back(max_over_time(relu(conv1d(emb, conv.weight, conv.bias, Padding::valid))));
    }
    Tensor features = dropout(concat(pooled, 0), config.dropout, ctx.mode, ctx.rng);
    return affine(features, params.output.weight, params.output.bias);
}

Tensor bilstm_head(const Tensor& emb, std::size_t length, const BiLstmConfig& config, const BiLstmHeadParams& params,
                   const HeadContext& ctx) {
    Tensor seq = recurrent_input(emb, length, "bilstm_head");
    BiLstmOutput out = bilstm(seq, params.layers, config.dropout, ctx.mode, ctx.rng);
    Tensor features = dropout(out.final, config.dropout, ctx.mode, ctx.rng);
    return affine(features, params.output.weight, params.output.bias);
}

Tensor rcnn_head(const Tensor& emb, std::size_t length, const RcnnConfig& config, const BiLstmHeadParams& params,
                 const HeadContext& ctx) {
    Tensor seq = recurrent_input(emb, length, "rcnn_head");
    BiLstmOutput out = bilstm(seq, params.layers, config.dropout, ctx.mode, ctx.rng);
    Tensor pooled = max_over_time(relu(concat({out.outputs, seq}, 1)));
    Tensor features = dropout(pooled, config.dropout, ctx.mode, ctx.rng);
    return affine(features, params.output.weight, params.output.bias);
}

Tensor dpcnn_head(const Tensor& emb, const DpcnnConfig& config, const DpcnnParams& params, const HeadContext& ctx) {
    check_embedding(emb, "dpcnn_head");
    if (emb.dim(0) < config.pool_window) {
        throw SequenceTooShortError("dpcnn_head: sequence length " + std::to_string(emb.dim(0)) +
                                    " shorter than pooling window " + std::to_string(config.pool_window));
    }
    Tensor region = conv1d(emb, params.region.weight, params.region.bias, Padding::same);
    Tensor x = add(region, preactivated_conv(preactivated_conv(region, params.conv_a), params.conv_b));
    while (x.dim(0) >= config.pool_window) {
        Tensor pooled = max_pool_1d(x, config.pool_window, config.pool_stride);
        x = add(pooled, preactivated_conv(preactivated_conv(pooled, params.conv_a), params.conv_b));
        if (ctx.dpcnn_trace != nullptr) {
            ctx.dpcnn_trace->push_back(x.dim(0));
        }
    }
    Tensor features = dropout(max_over_time(x), config.dropout, ctx.mode, ctx.rng);
    return affine(features, params.output.weight, params.output.bias);
}

Tensor head_forward(const Head& head, const Tensor& emb, std::size_t length, const HeadContext& ctx) {
    if (emb.rank() != 2 || emb.dim(1) != head.input_dim) {
        throw ShapeError("head expects [T," + std::to_string(head.input_dim) + "] input, got " +
                         shape_string(emb.shape()));
    }
    return std::visit(
        Overloaded{[&](const LinearHeadConfig&) { return linear_head(emb, std::get<LinearParams>(head.params)); },
                   [&](const TextCnnConfig& c) {
                       return textcnn_head(emb, c, std::get<TextCnnParams>(head.params), ctx);
                   },
                   [&](const BiLstmConfig& c) {
                       return bilstm_head(emb, length, c, std::get<BiLstmHeadParams>(head.params), ctx);
                   },
                   [&](const RcnnConfig& c) {
                       return rcnn_head(emb, length, c, std::get<BiLstmHeadParams>(head.params), ctx);
                   },
                   [&](const DpcnnConfig& c) { return dpcnn_head(emb, c, std::get<DpcnnParams>(head.params), ctx); }},
        head.config);
}

std::vector<std::size_t> dpcnn_schedule(std::size_t steps, std::size_t window, std::size_t stride) {
    std::vector<std::size_t> lengths;
    while (steps >= window) {
        steps = (steps - window) / stride + 1;
        lengths.push_back(steps);
    }
    return lengths;
}

}  // namespace textheads
