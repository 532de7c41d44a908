#include "textheads/gradcheck_suite.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>

#include "textheads/encoder.hpp"
#include "textheads/grad_check.hpp"
#include "textheads/heads.hpp"
#include "textheads/init.hpp"
#include "textheads/model.hpp"
#include "textheads/ops.hpp"
#include "textheads/rng.hpp"

namespace textheads {

bool GradCheckReport::passed() const {
    for (const GradCheckEntry& e : entries) {
        if (!e.passed) {
            return false;
        }
    }
    return !entries.empty();
}

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kKinkMargin = 1e-4;
constexpr int kMaxDraws = 64;

Tensor random_leaf(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) {
        v = rng.uniform(lo, hi);
    }
    Tensor t(shape, std::move(values));
    t.set_requires_grad(true);
    return t;
}

// Distinct values at least 0.09 apart in random order and none near zero,
// so relu and max stay far from their switching points.
Tensor separated_leaf(const Shape& shape, Rng& rng) {
    std::vector<double> values(shape_numel(shape));
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = (static_cast<double>(i) - static_cast<double>(values.size()) / 2.0 + 0.5) * 0.1 +
                    rng.uniform(-0.005, 0.005);
    }
    rng.shuffle(values);
    Tensor t(shape, std::move(values));
    t.set_requires_grad(true);
    return t;
}

Tensor random_constant(const Shape& shape, Rng& rng) {
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) {
        v = rng.uniform(-1.0, 1.0);
    }
    return Tensor(shape, std::move(values));
}

// Sign-flipped identity: forward is exact, backward is deliberately wrong.
Tensor faulty_identity(const Tensor& x) {
    std::vector<double> values(x.data().begin(), x.data().end());
    return Tensor::from_op(
        x.shape(), std::move(values), {x},
        [](std::span<const double>, std::span<const double> out_grad, const std::vector<Tensor>& inputs) {
            std::span<double> g = inputs[0].grad_accumulator();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] -= out_grad[i];
            }
        },
        "faulty_identity");
}

class OpSuite {
public:
    OpSuite(std::uint64_t seed, double tolerance) : rng_(seed), tolerance_(tolerance) {}

    // Reduces `output` to a scalar with fixed random weights so that every
    // output coordinate contributes a distinct amount.
    void check(const std::string& name, const ParamList& params, const std::function<Tensor()>& output) {
        Tensor weights;
        {
            NoGradGuard no_grad;
            weights = random_constant(output().shape(), rng_);
        }
        std::vector<Tensor> tensors;
        for (const auto& p : params) {
            tensors.push_back(p.tensor);
        }
        const GradCheckResult r = grad_check([&] { return sum(mul(output(), weights)); }, tensors);
        entries_.push_back({name, r.max_relative_error, params[r.param_index].name, r.coordinate,
                            r.analytic, r.numeric, r.max_relative_error <= tolerance_});
    }

    Rng& rng() { return rng_; }
    std::vector<GradCheckEntry> take() { return std::move(entries_); }

private:
    Rng rng_;
    double tolerance_;
    std::vector<GradCheckEntry> entries_;
};

LstmParams random_lstm(std::size_t input, std::size_t hidden, Rng& rng) {
    return {random_leaf({4 * hidden, input}, rng, -0.5, 0.5), random_leaf({4 * hidden, hidden}, rng, -0.5, 0.5),
            random_leaf({4 * hidden}, rng, -0.5, 0.5)};
}

}  // namespace

GradCheckReport run_op_gradchecks(std::uint64_t seed, bool inject_fault) {
    const auto start = Clock::now();
    GradCheckReport report;
    OpSuite suite(seed, report.tolerance);
    Rng& rng = suite.rng();

    {
        Tensor a = random_leaf({3, 4}, rng);
        Tensor b = random_leaf({3, 4}, rng);
        suite.check("add", {{"a", a}, {"b", b}}, [=] { return add(a, b); });
        suite.check("sub", {{"a", a}, {"b", b}}, [=] { return sub(a, b); });
        suite.check("mul", {{"a", a}, {"b", b}}, [=] { return mul(a, b); });
        suite.check("scale", {{"a", a}}, [=] { return scale(a, -2.5); });
        suite.check("sum", {{"a", a}}, [=] { return sum(a); });
        suite.check("transpose", {{"a", a}}, [=] { return transpose(a); });
        suite.check("reshape", {{"a", a}}, [=] { return reshape(a, {2, 6}); });
        suite.check("slice", {{"a", a}}, [=] { return slice(a, 1, 1, 3); });
        suite.check("row", {{"a", a}}, [=] { return row(a, 2); });
        suite.check("concat_axis0", {{"a", a}, {"b", b}}, [=] { return concat({a, b}, 0); });
        suite.check("concat_axis1", {{"a", a}, {"b", b}}, [=] { return concat({a, b}, 1); });
        suite.check("stack", {{"a", a}, {"b", b}}, [=] { return stack({row(a, 0), row(b, 1)}); });
        Tensor r = random_leaf({4}, rng);
        suite.check("add_row", {{"x", a}, {"row", r}}, [=] { return add_row(a, r); });
    }
    {
        Tensor a = random_leaf({3, 4}, rng);
        Tensor b = random_leaf({4, 2}, rng);
        suite.check("matmul", {{"a", a}, {"b", b}}, [=] { return matmul(a, b); });
        Tensor w = random_leaf({5, 4}, rng);
        Tensor bias = random_leaf({5}, rng);
        suite.check("affine_matrix", {{"x", a}, {"weight", w}, {"bias", bias}}, [=] { return affine(a, w, bias); });
        Tensor v = random_leaf({4}, rng);
        suite.check("affine_vector", {{"x", v}, {"weight", w}, {"bias", bias}}, [=] { return affine(v, w, bias); });
        suite.check("affine_no_bias", {{"x", a}, {"weight", w}}, [=] { return affine(a, w, Tensor()); });
    }
    {
        Tensor s = separated_leaf({4, 5}, rng);
        suite.check("relu", {{"x", s}}, [=] { return relu(s); });
        Tensor x = random_leaf({4, 5}, rng, -2.0, 2.0);
        suite.check("tanh", {{"x", x}}, [=] { return tanh(x); });
        suite.check("sigmoid", {{"x", x}}, [=] { return sigmoid(x); });
    }
    {
        Tensor input = random_leaf({7, 3}, rng);
        Tensor w = random_leaf({4, 3, 3}, rng);
        Tensor b = random_leaf({4}, rng);
        suite.check("conv1d_valid", {{"input", input}, {"weights", w}, {"bias", b}},
                    [=] { return conv1d(input, w, b, Padding::valid); });
        suite.check("conv1d_same", {{"input", input}, {"weights", w}, {"bias", b}},
                    [=] { return conv1d(input, w, b, Padding::same); });
        Tensor w2 = random_leaf({2, 2, 3}, rng);
        Tensor b2 = random_leaf({2}, rng);
        suite.check("conv1d_same_even_width", {{"input", input}, {"weights", w2}, {"bias", b2}},
                    [=] { return conv1d(input, w2, b2, Padding::same); });
    }
    {
        Tensor x = separated_leaf({6, 4}, rng);
        suite.check("max_over_time", {{"x", x}}, [=] { return max_over_time(x); });
        Tensor y = separated_leaf({9, 3}, rng);
        suite.check("max_pool_1d", {{"x", y}}, [=] { return max_pool_1d(y, 3, 2); });
    }
    {
        Tensor x = random_leaf({4, 6}, rng);
        const std::uint64_t mask_seed = rng.next_u64();
        suite.check("dropout", {{"x", x}}, [=] {
            Rng mask(mask_seed);
            return dropout(x, 0.3, Mode::train, &mask);
        });
    }
    {
        Tensor logits = random_leaf({3, 4}, rng, -2.0, 2.0);
        const std::vector<int> targets{1, 3, 0};
        suite.check("softmax_cross_entropy", {{"logits", logits}},
                    [=] { return softmax_cross_entropy(logits, targets); });
        Tensor scores = random_leaf({3, 5}, rng, -2.0, 2.0);
        suite.check("masked_softmax", {{"scores", scores}}, [=] { return masked_softmax(scores, 3); });
    }
    {
        Tensor x = random_leaf({3, 5}, rng);
        Tensor gain = random_leaf({5}, rng, 0.5, 1.5);
        Tensor bias = random_leaf({5}, rng);
        suite.check("layer_norm", {{"x", x}, {"gain", gain}, {"bias", bias}},
                    [=] { return layer_norm(x, gain, bias); });
    }
    {
        Tensor table = random_leaf({6, 4}, rng);
        const std::vector<int> ids{2, 0, 5, 1, 2};
        suite.check("gather_rows", {{"table", table}}, [=] { return gather_rows(table, ids, 0); });
    }
    {
        Tensor gates = random_leaf({12}, rng);
        Tensor c = random_leaf({3}, rng);
        suite.check("lstm_pointwise", {{"gates", gates}, {"c", c}}, [=] { return lstm_pointwise(gates, c); });
        Tensor x = random_leaf({3}, rng);
        Tensor h = random_leaf({4}, rng);
        Tensor c4 = random_leaf({4}, rng);
        const LstmParams p = random_lstm(3, 4, rng);
        suite.check("lstm_cell",
                    {{"x", x}, {"h", h}, {"c", c4}, {"w_input", p.w_input}, {"w_hidden", p.w_hidden}, {"bias", p.bias}},
                    [=] {
                        const LstmState s = lstm_cell(x, h, c4, p);
                        return concat({s.h, s.c}, 0);
                    });
    }
    {
        Tensor seq = random_leaf({5, 3}, rng);
        std::vector<BiLstmLayerParams> layers{{random_lstm(3, 4, rng), random_lstm(3, 4, rng)},
                                              {random_lstm(8, 4, rng), random_lstm(8, 4, rng)}};
        ParamList params{{"seq", seq}};
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string prefix = "layer" + std::to_string(l);
            params.push_back({prefix + ".fwd.w_input", layers[l].forward.w_input});
            params.push_back({prefix + ".fwd.w_hidden", layers[l].forward.w_hidden});
            params.push_back({prefix + ".fwd.bias", layers[l].forward.bias});
            params.push_back({prefix + ".bwd.w_input", layers[l].backward.w_input});
            params.push_back({prefix + ".bwd.w_hidden", layers[l].backward.w_hidden});
            params.push_back({prefix + ".bwd.bias", layers[l].backward.bias});
        }
        suite.check("bilstm", params, [=] {
            const BiLstmOutput out = bilstm(seq, layers, 0.0, Mode::eval, nullptr);
            return concat({reshape(out.outputs, {out.outputs.numel()}), out.final}, 0);
        });
    }
    {
        const std::size_t d = 8;
        Tensor x = random_leaf({5, d}, rng);
        AttentionParams p;
        p.query_w = random_leaf({d, d}, rng, -0.5, 0.5);
        p.query_b = random_leaf({d}, rng, -0.5, 0.5);
        p.key_w = random_leaf({d, d}, rng, -0.5, 0.5);
        p.value_w = random_leaf({d, d}, rng, -0.5, 0.5);
        p.value_b = random_leaf({d}, rng, -0.5, 0.5);
        p.out_w = random_leaf({d, d}, rng, -0.5, 0.5);
        p.out_b = random_leaf({d}, rng, -0.5, 0.5);
        suite.check("attention",
                    {{"x", x},
                     {"query_w", p.query_w},
                     {"query_b", p.query_b},
                     {"key_w", p.key_w},
                     {"value_w", p.value_w},
                     {"value_b", p.value_b},
                     {"out_w", p.out_w},
                     {"out_b", p.out_b}},
                    [=] { return attention(x, p, 2, 4); });
    }
    if (inject_fault) {
        Tensor x = random_leaf({3, 3}, rng);
        suite.check("faulty_identity (injected)", {{"x", x}}, [=] { return faulty_identity(x); });
    }

    report.entries = suite.take();
    report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return report;
}

GradCheckReport run_model_gradchecks(std::uint64_t seed) {
    const auto start = Clock::now();
    GradCheckReport report;

    const Dataset data{{1, "被告人张某诈骗他人财物"}, {0, "原告李某与被告签订租赁合同"}, {1, "王某盗窃"}};
    const Vocabulary vocab = build_vocab(data);

    EncoderConfig encoder;
    encoder.kind = EmbeddingKind::transformer;
    encoder.layers = 1;
    encoder.heads = 2;
    encoder.dim = 16;
    encoder.ff_dim = 32;
    encoder.max_len = 12;
    encoder.dropout = 0.0;

    const std::vector<HeadConfig> heads{
        LinearHeadConfig{},
        TextCnnConfig{{2, 3, 4}, 4, 0.0},
        BiLstmConfig{2, 8, 0.0},
        RcnnConfig{2, 8, 0.0},
        DpcnnConfig{8, 3, 3, 2, 0.0},
    };

    // Weighted sum of the logits rather than cross-entropy: the loss value
    // stays small, which keeps its rounding below the resolution needed for
    // gradients of order 1e-8.
    Rng weight_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const Tensor weights = random_constant({data.size(), 2}, weight_rng);

    for (const HeadConfig& head : heads) {
        // Finite differences are meaningless across a relu or max switch.
        // Initialisations close to one are redrawn, as are those where a
        // perturbed evaluation took a different linear piece than the
        // unperturbed one.
        Rng seeds(seed);
        std::optional<Model> model;
        std::vector<EncodedText> inputs;
        const auto loss = [&] {
            std::vector<Tensor> logits;
            for (const EncodedText& in : inputs) {
                logits.push_back(model->logits(in, Mode::eval, nullptr));
            }
            return sum(mul(stack(logits), weights));
        };
        GradCheckResult r;
        ParamList params;
        for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
            model.emplace(vocab, ModelConfig{encoder, head}, seeds.next_u64());
            inputs.clear();
            for (const Example& ex : data) {
                inputs.push_back(model->encode(ex.text));
            }
            {
                NoGradGuard no_grad;
                KinkMonitor monitor;
                loss();
                if (monitor.margin() < kKinkMargin) {
                    continue;
                }
            }
            params = model->parameters();
            std::vector<Tensor> tensors;
            for (const auto& p : params) {
                tensors.push_back(p.tensor);
            }
            std::optional<std::uint64_t> baseline;
            bool crossed = false;
            r = grad_check(
                [&] {
                    KinkMonitor monitor;
                    Tensor value = loss();
                    if (!baseline) {
                        baseline = monitor.signature();
                    } else if (monitor.signature() != *baseline) {
                        crossed = true;
                    }
                    return value;
                },
                tensors);
            if (!crossed) {
                break;
            }
        }
        report.entries.push_back({std::string(to_string(head_kind(head))), r.max_relative_error,
                                  params[r.param_index].name, r.coordinate, r.analytic, r.numeric,
                                  r.max_relative_error <= report.tolerance});
    }

    report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return report;
}

std::string format_gradcheck_report(const GradCheckReport& report) {
    std::string out;
    char buffer[256];
    for (const GradCheckEntry& e : report.entries) {
        std::snprintf(buffer, sizeof buffer, "%-4s %-28s max_rel_err=%.3e worst=%s[%zu] analytic=%.6e numeric=%.6e\n",
                      e.passed ? "ok" : "FAIL", e.name.c_str(), e.max_relative_error, e.worst_parameter.c_str(),
                      e.coordinate, e.analytic, e.numeric);
        out += buffer;
    }
    std::size_t failed = 0;
    for (const GradCheckEntry& e : report.entries) {
        failed += e.passed ? 0 : 1;
    }
    std::snprintf(buffer, sizeof buffer, "%zu checks, %zu failed, tolerance %.0e, %.1fs\n", report.entries.size(),
                  failed, report.tolerance, report.seconds);
    out += buffer;
    return out;
}

}  // namespace textheads
