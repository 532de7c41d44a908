#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "textheads/error.hpp"
#include "textheads/synth.hpp"
#include "textheads/training.hpp"

using namespace textheads;

namespace {

// Eight tokens; "x" marks label 1, "y" label 0, plus shared filler.
Dataset separable(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    const char* filler[] = {"a", "b", "c", "d", "e", "f"};
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        std::string text = label == 1 ? "x" : "y";
        for (int k = 0; k < 4; ++k) {
            text += filler[rng.below(6)];
        }
        d.push_back({label, text});
    }
    return d;
}

TrainConfig small_config(HeadConfig head) {
    TrainConfig c;
    c.encoder.kind = EmbeddingKind::trainable_table;
    c.encoder.dim = 8;
    c.encoder.max_len = 8;
    c.encoder.heads = 2;
    c.encoder.layers = 0;
    c.head = std::move(head);
    c.batch_size = 16;
    c.epochs = 10;
    c.learning_rate = 0.01;
    c.seed = 5;
    return c;
}

}  // namespace

TEST(Adam, FirstStepIsLearningRateTimesSign) {
    Tensor p({1}, 0.0);
    p.set_requires_grad(true);
    p.grad_accumulator()[0] = 1.0;
    AdamState state;
    adam_step({{"p", p}}, state, 0.1);
    EXPECT_NEAR(p.at(0), -0.1, 1e-8);
    EXPECT_EQ(state.step, 1u);
    EXPECT_EQ(p.grad()[0], 0.0);
}

TEST(Adam, ZeroGradientLeavesParametersButAdvancesStep) {
    Tensor p({2}, std::vector<double>{0.5, -0.5});
    p.set_requires_grad(true);
    AdamState state;
    adam_step({{"p", p}}, state, 0.1);
    adam_step({{"p", p}}, state, 0.1);
    EXPECT_EQ(p.at(0), 0.5);
    EXPECT_EQ(p.at(1), -0.5);
    EXPECT_EQ(state.step, 2u);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    Tensor p({1}, 0.0);
    p.set_requires_grad(true);
    p.grad_accumulator()[0] = std::numeric_limits<double>::quiet_NaN();
    AdamState state;
    try {
        adam_step({{"head.output.w", p}}, state, 0.1);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("head.output.w"), std::string::npos);
    }
    EXPECT_EQ(p.at(0), 0.0);
}

TEST(Adam, IdenticalRunsIdenticalTrajectories) {
    const auto run = [] {
        Tensor p({2}, std::vector<double>{1.0, 2.0});
        p.set_requires_grad(true);
        AdamState state;
        for (int i = 0; i < 20; ++i) {
            p.grad_accumulator()[0] = p.at(0) * 2.0;
            p.grad_accumulator()[1] = std::sin(p.at(1));
            adam_step({{"p", p}}, state, 0.05);
        }
        return std::vector<double>(p.data().begin(), p.data().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(Train, StepAccountingAndReportRows) {
    const Dataset data = separable(40, 1);
    TrainConfig c = small_config(LinearHeadConfig{});
    c.epochs = 3;
    c.batch_size = 16;
    const TrainResult r = train(data, data, c);
    EXPECT_EQ(r.report.epochs.size(), 3u);
    EXPECT_EQ(r.report.optimizer_steps, 3u * 3u);  // ceil(40 / 16) = 3

    c.epochs = 1;
    c.batch_size = 64;
    EXPECT_EQ(train(data, data, c).report.optimizer_steps, 1u);
}

TEST(Train, LinearLossDecreasesOnSeparableSet) {
    const Dataset data = separable(64, 2);
    const TrainResult r = train(data, data, small_config(LinearHeadConfig{}));
    EXPECT_LT(r.report.epochs.back().train.loss, r.report.epochs.front().train.loss);
    for (const EpochRecord& e : r.report.epochs) {
        EXPECT_GE(e.train.accuracy, 0.0);
        EXPECT_LE(e.train.accuracy, 1.0);
        EXPECT_GE(e.val.loss, 0.0);
    }
}

TEST(Train, ReturnsBestValidationSnapshot) {
    const Dataset train_split = separable(64, 3);
    const Dataset val_split = separable(30, 4);
    TrainConfig c = small_config(TextCnnConfig{{2, 3}, 4, 0.1});
    c.epochs = 6;
    const TrainResult r = train(train_split, val_split, c);
    double best = 0.0;
    for (const EpochRecord& e : r.report.epochs) {
        best = std::max(best, e.val.accuracy);
    }
    EXPECT_EQ(r.report.best_val_accuracy, best);
    EXPECT_EQ(evaluate(r.model, val_split).accuracy, best);
    EXPECT_EQ(r.report.epochs[r.report.best_epoch - 1].val.accuracy, best);
}

TEST(Train, SeededRunsAreIdentical) {
    const Dataset data = separable(48, 5);
    TrainConfig c = small_config(BiLstmConfig{1, 4, 0.2});
    c.epochs = 2;
    const TrainResult a = train(data, data, c);
    const TrainResult b = train(data, data, c);
    EXPECT_EQ(format_run_report(a.report, false), format_run_report(b.report, false));
}

TEST(Train, EmptySplitsRejected) {
    const Dataset data = separable(10, 6);
    EXPECT_THROW(train({}, data, small_config(LinearHeadConfig{})), SizeError);
    EXPECT_THROW(train(data, {}, small_config(LinearHeadConfig{})), SizeError);
}

TEST(Evaluate, DeterministicAndBounded) {
    const Dataset data = separable(30, 7);
    Model model(build_vocab(data), small_config(LinearHeadConfig{}).model_config(), 3);
    const Metrics a = evaluate(model, data);
    const Metrics b = evaluate(model, data);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.count, 30u);
    EXPECT_THROW(evaluate(model, Dataset{}), SizeError);
}

TEST(Evaluate, ConstantLogitModelScoresClassPrior) {
    Rng rng(99);
    Dataset data;
    for (int i = 0; i < 4000; ++i) {
        data.push_back({rng.bernoulli(0.5) ? 1 : 0, "t" + std::to_string(i % 13)});
    }
    Model model(build_vocab(data), small_config(LinearHeadConfig{}).model_config(), 3);
    LinearParams p = std::get<LinearParams>(model.head().params);
    for (double& v : p.weight.mutable_data()) {
        v = 0.0;
    }
    p.bias.mutable_data()[0] = 0.0;
    p.bias.mutable_data()[1] = 1.0;  // always predicts 1
    std::size_t ones = 0;
    for (const Example& e : data) {
        ones += e.label == 1 ? 1 : 0;
    }
    const Metrics m = evaluate(model, data);
    EXPECT_NEAR(m.accuracy, static_cast<double>(ones) / 4000.0, 1e-12);
    EXPECT_NEAR(m.accuracy, 0.5, 0.03);
}

TEST(Format, TimeAndPercent) {
    EXPECT_EQ(format_hms(242.0), "00:04:02");
    EXPECT_EQ(format_hms(0.4), "00:00:00");
    EXPECT_EQ(format_hms(3 * 3600 + 61.9), "03:01:01");
    EXPECT_EQ(format_percent(0.9531), "95.31%");
}

TEST(Format, RunReportLayout) {
    RunReport r;
    r.config.batch_size = 64;
    r.epochs.push_back({1, {0.5, 0.75, 3, 4}, {0.25, 1.0, 2, 2}});
    r.wall_seconds = 242.0;
    r.best_val_accuracy = 1.0;
    r.best_epoch = 1;
    r.optimizer_steps = 1;
    const std::string text = format_run_report(r, true);
    EXPECT_NE(text.find("Training time\tBatch Size\tVal Acc\n00:04:02\t64\t100.00%\n"), std::string::npos);
    EXPECT_NE(format_run_report(r, false).find("\n-\t64\t100.00%\n"), std::string::npos);
}

TEST(Bench, TwoRowsPerArchitecture) {
    const Dataset data = separable(24, 8);
    TrainConfig base = small_config(LinearHeadConfig{});
    base.epochs = 1;
    const std::vector<HeadConfig> heads{LinearHeadConfig{}, DpcnnConfig{4, 3, 3, 2, 0.0}};
    const BenchReport report = bench(heads, {64, 16}, data, data, base);
    ASSERT_EQ(report.rows.size(), 4u);
    EXPECT_EQ(report.rows[0].batch_size, 64u);
    EXPECT_EQ(report.rows[1].batch_size, 16u);
    const std::string text = format_bench_report(report, true);
    EXPECT_EQ(text.rfind("Training time\tBatch Size\tModel\n", 0), 0u);
    EXPECT_NE(text.find("# Baseline\nTraining time\tBatch Size\tVal Acc\n"), std::string::npos);
    EXPECT_NE(text.find("# DPCNN\nTraining time\tBatch Size\tVal Acc\n"), std::string::npos);
}
