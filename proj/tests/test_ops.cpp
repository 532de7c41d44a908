#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "textheads/error.hpp"
#include "textheads/grad_check.hpp"
#include "textheads/ops.hpp"
#include "textheads/rng.hpp"

using namespace textheads;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, bool grad = false) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) {
        x = rng.uniform(-1.0, 1.0);
    }
    Tensor t(shape, std::move(v));
    if (grad) {
        t.set_requires_grad(true);
    }
    return t;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Matmul, IdentityAndScalar) {
    Tensor eye({2, 2}, std::vector<double>{1, 0, 0, 1});
    Tensor x({2, 2}, std::vector<double>{1.5, -2, 3, 4});
    EXPECT_EQ(values(matmul(eye, x)), values(x));
    EXPECT_DOUBLE_EQ(matmul(Tensor({1, 1}, 2.0), Tensor({1, 1}, 3.0)).item(), 6.0);
}

TEST(Matmul, MatchesNestedLoops) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({4, 2}, rng);
        Tensor c = matmul(a, b);
        ASSERT_EQ(c.shape(), (Shape{3, 2}));
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 2; ++j) {
                double expected = 0.0;
                for (std::size_t k = 0; k < 4; ++k) {
                    expected += a.at(i, k) * b.at(k, j);
                }
                EXPECT_NEAR(c.at(i, j), expected, 1e-12);
            }
        }
    }
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
    try {
        matmul(Tensor({2, 3}), Tensor({2, 3}));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    }
}

TEST(Activation, KnownValues) {
    Tensor x({3}, std::vector<double>{-1, 0, 2});
    EXPECT_EQ(values(relu(x)), (std::vector<double>{0, 0, 2}));
    EXPECT_DOUBLE_EQ(tanh(Tensor({1}, 0.0)).item(), 0.0);
    EXPECT_DOUBLE_EQ(sigmoid(Tensor({1}, 0.0)).item(), 0.5);
}

TEST(Activation, GradientsMatchFiniteDifferences) {
    Rng rng(5);
    for (Activation kind : {Activation::tanh, Activation::sigmoid}) {
        Tensor x = random_tensor({6}, rng, true);
        const Tensor params[] = {x};
        const auto r = grad_check([&] { return sum(activation(kind, x)); }, params);
        EXPECT_LE(r.max_relative_error, 1e-6);
    }
    Tensor x({4}, std::vector<double>{-1.2, -0.4, 0.3, 1.7});
    x.set_requires_grad(true);
    const Tensor params[] = {x};
    EXPECT_LE(grad_check([&] { return sum(mul(relu(x), x)); }, params).max_relative_error, 1e-6);
}

TEST(Concat, Examples) {
    Tensor a({2, 1}, std::vector<double>{1, 2});
    Tensor b({2, 1}, std::vector<double>{3, 4});
    Tensor c = concat({a, b}, 1);
    EXPECT_EQ(c.shape(), (Shape{2, 2}));
    EXPECT_EQ(values(c), (std::vector<double>{1, 3, 2, 4}));
    EXPECT_TRUE(concat({a}, 0).same_storage(a));
    EXPECT_EQ(concat({Tensor({5, 16}), Tensor({5, 8})}, 1).shape(), (Shape{5, 24}));
    EXPECT_THROW(concat({Tensor({2, 2}), Tensor({3, 3})}, 1), ShapeError);
}

TEST(Conv1d, SmallExamples) {
    Tensor input({3, 1}, std::vector<double>{1, 2, 3});
    Tensor kernel({1, 2, 1}, std::vector<double>{1, 1});
    Tensor bias({1}, 0.0);
    EXPECT_EQ(values(conv1d(input, kernel, bias, Padding::valid)), (std::vector<double>{3, 5}));

    Tensor zero({2, 3, 1}, 0.0);
    Tensor b({2}, std::vector<double>{0.5, -1.0});
    Tensor out = conv1d(Tensor({5, 1}, 7.0), zero, b, Padding::valid);
    for (std::size_t t = 0; t < out.dim(0); ++t) {
        EXPECT_DOUBLE_EQ(out.at(t, 0), 0.5);
        EXPECT_DOUBLE_EQ(out.at(t, 1), -1.0);
    }
    EXPECT_EQ(conv1d(Tensor({5, 2}), Tensor({3, 3, 2}), Tensor({3}), Padding::same).shape(), (Shape{5, 3}));
    EXPECT_THROW(conv1d(Tensor({2, 1}), Tensor({1, 3, 1}), Tensor({1}), Padding::valid), SequenceTooShortError);
    EXPECT_THROW(conv1d(Tensor({4, 2}), Tensor({1, 3, 1}), Tensor({1}), Padding::valid), ShapeError);
}

TEST(Conv1d, ValidLengthFormulaForAllT) {
    for (std::size_t w = 1; w <= 4; ++w) {
        for (std::size_t t = w; t <= 512; t += 7) {
            EXPECT_EQ(conv1d(Tensor({t, 1}), Tensor({1, w, 1}), Tensor({1}), Padding::valid).dim(0), t - w + 1);
        }
    }
}

TEST(MaxOverTime, Examples) {
    Tensor x({2, 2}, std::vector<double>{1, 4, 3, 2});
    EXPECT_EQ(values(max_over_time(x)), (std::vector<double>{3, 4}));
    EXPECT_EQ(values(max_over_time(Tensor({6, 1}, 2.5))), (std::vector<double>{2.5}));
}

TEST(MaxOverTime, MatchesColumnLoop) {
    Rng rng(3);
    Tensor x = random_tensor({7, 5}, rng);
    Tensor m = max_over_time(x);
    for (std::size_t k = 0; k < 5; ++k) {
        double best = x.at(0, k);
        for (std::size_t t = 1; t < 7; ++t) {
            best = std::max(best, x.at(t, k));
        }
        EXPECT_EQ(m.at(k), best);
    }
}

TEST(MaxOverTime, GradientGoesToFirstMaximum) {
    Tensor x({3, 1}, std::vector<double>{2, 2, 1});
    x.set_requires_grad(true);
    sum(max_over_time(x)).backward();
    EXPECT_EQ(values(Tensor({3}, std::vector<double>(x.grad().begin(), x.grad().end()))),
              (std::vector<double>{1, 0, 0}));
}

TEST(MaxPool1d, Examples) {
    Tensor x({5, 1}, std::vector<double>{1, 5, 2, 4, 3});
    Tensor p = max_pool_1d(x, 3, 2);
    EXPECT_EQ(p.shape(), (Shape{2, 1}));
    EXPECT_EQ(values(p), (std::vector<double>{5, 4}));
    Tensor c = max_pool_1d(Tensor({9, 2}, -1.5), 3, 2);
    for (double v : c.data()) {
        EXPECT_EQ(v, -1.5);
    }
    EXPECT_THROW(max_pool_1d(Tensor({2, 1}), 3, 2), SequenceTooShortError);
}

TEST(MaxPool1d, LengthRecurrence) {
    const std::pair<std::size_t, std::size_t> chain[] = {{128, 63}, {63, 31}, {31, 15}, {15, 7}, {7, 3}, {3, 1}};
    for (auto [in, out] : chain) {
        EXPECT_EQ(max_pool_1d(Tensor({in, 1}), 3, 2).dim(0), out);
    }
    for (std::size_t t = 3; t <= 512; ++t) {
        EXPECT_EQ(max_pool_1d(Tensor({t, 1}), 3, 2).dim(0), (t - 3) / 2 + 1);
    }
}

TEST(Dropout, IdentityCases) {
    Rng rng(1);
    Tensor x({4}, std::vector<double>{1, 2, 3, 4});
    EXPECT_TRUE(dropout(x, 0.7, Mode::eval, &rng).same_storage(x));
    EXPECT_TRUE(dropout(x, 0.0, Mode::train, &rng).same_storage(x));
    EXPECT_THROW(dropout(x, 1.0, Mode::train, &rng), ParameterError);
    EXPECT_THROW(dropout(x, 0.5, Mode::train, nullptr), ParameterError);
}

TEST(Dropout, InvertedScalingIsUnbiased) {
    Rng rng(2024);
    Tensor x({100000}, 1.0);
    Tensor y = dropout(x, 0.5, Mode::train, &rng);
    const double mean = std::accumulate(y.data().begin(), y.data().end(), 0.0) / 100000.0;
    EXPECT_GE(mean, 0.97);
    EXPECT_LE(mean, 1.03);
    for (double v : y.data()) {
        EXPECT_TRUE(v == 0.0 || v == 2.0);
    }
}

TEST(CrossEntropy, Examples) {
    const int target[] = {1};
    EXPECT_NEAR(softmax_cross_entropy(Tensor({1, 2}, 0.0), target).item(), std::log(2.0), 1e-12);
    EXPECT_LT(softmax_cross_entropy(Tensor({1, 2}, std::vector<double>{0.0, 20.0}), target).item(), 1e-8);
    const int bad[] = {2};
    EXPECT_THROW(softmax_cross_entropy(Tensor({1, 2}), bad), LabelError);
    const int two[] = {0, 1};
    EXPECT_THROW(softmax_cross_entropy(Tensor({1, 2}), two), ShapeError);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHot) {
    Tensor logits({1, 3}, std::vector<double>{0.2, -1.0, 0.7});
    logits.set_requires_grad(true);
    const int target[] = {2};
    softmax_cross_entropy(logits, target).backward();
    const std::vector<double> p = softmax(logits.data());
    EXPECT_NEAR(logits.grad()[0], p[0], 1e-12);
    EXPECT_NEAR(logits.grad()[1], p[1], 1e-12);
    EXPECT_NEAR(logits.grad()[2], p[2] - 1.0, 1e-12);
    logits.zero_grad();
    const Tensor params[] = {logits};
    EXPECT_LE(grad_check([&] { return softmax_cross_entropy(logits, target); }, params).max_relative_error, 1e-6);
}

TEST(MaskedSoftmax, MaskedColumnsAreExactlyZero) {
    Rng rng(8);
    Tensor p = masked_softmax(random_tensor({3, 5}, rng), 2);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(p.at(i, 0) + p.at(i, 1), 1.0, 1e-12);
        EXPECT_EQ(p.at(i, 2), 0.0);
        EXPECT_EQ(p.at(i, 4), 0.0);
    }
}

TEST(LstmCell, ZeroParameters) {
    LstmParams params{Tensor({4, 1}), Tensor({4, 1}), Tensor({4})};
    LstmState s = lstm_cell(Tensor({1}), Tensor({1}), Tensor({1}), params);
    EXPECT_EQ(s.h.item(), 0.0);
    EXPECT_EQ(s.c.item(), 0.0);

    s = lstm_cell(Tensor({1}), Tensor({1}), Tensor({1}, 1.0), params);
    EXPECT_NEAR(s.c.item(), 0.5, 1e-15);
    EXPECT_NEAR(s.h.item(), 0.5 * std::tanh(0.5), 1e-15);
    EXPECT_NEAR(s.h.item(), 0.231059, 1e-6);
}

TEST(LstmCell, GradientsMatchFiniteDifferences) {
    Rng rng(9);
    Tensor x = random_tensor({3}, rng, true);
    Tensor h = random_tensor({2}, rng, true);
    Tensor c = random_tensor({2}, rng, true);
    LstmParams p{random_tensor({8, 3}, rng, true), random_tensor({8, 2}, rng, true), random_tensor({8}, rng, true)};
    Tensor w = random_tensor({4}, rng);
    const Tensor params[] = {x, h, c, p.w_input, p.w_hidden, p.bias};
    const auto r = grad_check(
        [&] {
            LstmState s = lstm_cell(x, h, c, p);
            return sum(mul(concat({s.h, s.c}, 0), w));
        },
        params);
    EXPECT_LE(r.max_relative_error, 1e-4);
}

TEST(Bilstm, SingleStepFinalEqualsOutput) {
    Rng rng(4);
    const std::size_t h = 3;
    std::vector<BiLstmLayerParams> layers{
        {{random_tensor({4 * h, 2}, rng), random_tensor({4 * h, h}, rng), random_tensor({4 * h}, rng)},
         {random_tensor({4 * h, 2}, rng), random_tensor({4 * h, h}, rng), random_tensor({4 * h}, rng)}}};
    BiLstmOutput out = bilstm(random_tensor({1, 2}, rng), layers, 0.0, Mode::eval, nullptr);
    EXPECT_EQ(out.outputs.shape(), (Shape{1, 2 * h}));
    EXPECT_EQ(values(out.final), values(reshape(out.outputs, {2 * h})));
}

TEST(Bilstm, ReversalSwapsDirectionsWithSymmetricParameters) {
    Rng rng(12);
    const std::size_t h = 3;
    LstmParams shared{random_tensor({4 * h, 2}, rng), random_tensor({4 * h, h}, rng), random_tensor({4 * h}, rng)};
    std::vector<BiLstmLayerParams> layers{{shared, shared}};
    Tensor seq = random_tensor({5, 2}, rng);
    std::vector<Tensor> rows;
    for (std::size_t t = 5; t-- > 0;) {
        rows.push_back(row(seq, t));
    }
    Tensor reversed = stack(rows);
    BiLstmOutput a = bilstm(seq, layers, 0.0, Mode::eval, nullptr);
    BiLstmOutput b = bilstm(reversed, layers, 0.0, Mode::eval, nullptr);
    for (std::size_t t = 0; t < 5; ++t) {
        for (std::size_t k = 0; k < h; ++k) {
            EXPECT_NEAR(a.outputs.at(t, k), b.outputs.at(4 - t, h + k), 1e-14);
            EXPECT_NEAR(a.outputs.at(t, h + k), b.outputs.at(4 - t, k), 1e-14);
        }
    }
    for (std::size_t k = 0; k < h; ++k) {
        EXPECT_NEAR(a.final.at(k), b.final.at(h + k), 1e-14);
    }
}

TEST(Bilstm, PaperWidthGivesFinalOf1536) {
    Rng rng(1);
    const std::size_t h = 768;
    const auto lstm = [&](std::size_t in) {
        return LstmParams{Tensor({4 * h, in}), Tensor({4 * h, h}), Tensor({4 * h})};
    };
    std::vector<BiLstmLayerParams> layers{{lstm(4), lstm(4)}, {lstm(2 * h), lstm(2 * h)}};
    BiLstmOutput out = bilstm(random_tensor({1, 4}, rng), layers, 0.0, Mode::eval, nullptr);
    EXPECT_EQ(out.final.shape(), (Shape{1536}));
}

TEST(LayerNorm, Examples) {
    Tensor gain({4}, 1.0);
    Tensor bias({4}, 0.0);
    const Tensor constant = layer_norm(Tensor({2, 4}, 3.0), gain, bias);
    for (double v : constant.data()) {
        EXPECT_EQ(v, 0.0);
    }
    Rng rng(6);
    Tensor x = random_tensor({3, 16}, rng);
    Tensor y = layer_norm(x, Tensor({16}, 2.0), Tensor({16}, 0.5));
    for (std::size_t i = 0; i < 3; ++i) {
        double mean = 0.0;
        double sq = 0.0;
        for (std::size_t j = 0; j < 16; ++j) {
            mean += y.at(i, j) / 16.0;
        }
        for (std::size_t j = 0; j < 16; ++j) {
            sq += (y.at(i, j) - mean) * (y.at(i, j) - mean) / 16.0;
        }
        EXPECT_NEAR(mean, 0.5, 1e-12);
        EXPECT_NEAR(sq, 4.0, 1e-3);
    }
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
    Rng rng(7);
    Tensor x = random_tensor({3, 5}, rng, true);
    Tensor gain = random_tensor({5}, rng, true);
    Tensor bias = random_tensor({5}, rng, true);
    Tensor w = random_tensor({3, 5}, rng);
    const Tensor params[] = {x, gain, bias};
    EXPECT_LE(grad_check([&] { return sum(mul(layer_norm(x, gain, bias), w)); }, params).max_relative_error, 1e-5);
}

TEST(GatherRows, PadRowsAreZeroAndUntouched) {
    Rng rng(2);
    Tensor table = random_tensor({5, 3}, rng, true);
    const int ids[] = {2, 0, 4};
    Tensor out = gather_rows(table, ids, 0);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(out.at(0, k), table.at(2, k));
        EXPECT_EQ(out.at(1, k), 0.0);
    }
    sum(out).backward();
    for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t k = 0; k < 3; ++k) {
            const double expected = (r == 2 || r == 4) ? 1.0 : 0.0;
            EXPECT_EQ(table.grad()[r * 3 + k], expected);
        }
    }
    const int bad[] = {5};
    EXPECT_THROW(gather_rows(table, bad, 0), VocabularyError);
}
