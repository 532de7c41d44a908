#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "textheads/config.hpp"
#include "textheads/model.hpp"
#include "textheads/text.hpp"

namespace textheads {

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update of every tensor in `params` from its
/// accumulated gradient, after which the gradients are zeroed. A missing
/// gradient counts as zero. Throws NumericError naming the parameter when a
/// gradient is not finite; nothing is updated in that case.
void adam_step(const ParamList& params, AdamState& state, double learning_rate);

struct Metrics {
    double loss = 0.0;      // mean cross-entropy
    double accuracy = 0.0;  // correct / count
    std::size_t correct = 0;
    std::size_t count = 0;

    bool operator==(const Metrics&) const = default;
};

struct EncodedExample {
    EncodedText input;
    int label = 0;
};

std::vector<EncodedExample> encode_dataset(const Dataset& dataset, const Model& model);

/// Eval-mode loss and accuracy. Throws SizeError on an empty split.
Metrics evaluate(const Model& model, const Dataset& split);
Metrics evaluate(const Model& model, const std::vector<EncodedExample>& split);

/// Mini-batch Adam over a fixed model. train() is built on this; it is also
/// usable directly for custom schedules.
class Trainer {
public:
    Trainer(Model& model, const TrainConfig& config);

    /// One pass over `data` in a seeded shuffled order with batches of
    /// config.batch_size (the last partial batch included). Returns the mean
    /// of the batch losses.
    double train_epoch(const std::vector<EncodedExample>& data);

    std::uint64_t steps() const { return state_.step; }

private:
    Model& model_;
    TrainConfig config_;
    ParamList params_;
    AdamState state_;
    Rng rng_;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    Metrics train;
    Metrics val;
};

struct RunReport {
    TrainConfig config;
    std::vector<EpochRecord> epochs;
    double wall_seconds = 0.0;
    std::uint64_t optimizer_steps = 0;
    double best_val_accuracy = 0.0;
    std::size_t best_epoch = 0;
};

struct TrainResult {
    Model model;  // snapshot from the epoch with the best validation accuracy
    RunReport report;
};

using EpochObserver = std::function<void(const EpochRecord&)>;

/// Builds the vocabulary from `train_split`, initialises a model from
/// config.seed and runs config.epochs epochs, evaluating both splits after
/// each one.
TrainResult train(const Dataset& train_split, const Dataset& val_split, const TrainConfig& config,
                  const EpochObserver& observer = {});

/// h:mm:ss with every field zero-padded to two digits, e.g. 00:04:02.
std::string format_hms(double seconds);
/// Percentage with two decimals, e.g. 95.31%.
std::string format_percent(double fraction);

/// Tab-separated run report. With include_timing false the wall time is
/// replaced by "-" so that reruns compare byte for byte.
std::string format_run_report(const RunReport& report, bool include_timing = true);

struct BenchRow {
    HeadKind kind = HeadKind::linear;
    std::size_t batch_size = 0;
    double wall_seconds = 0.0;
    double best_val_accuracy = 0.0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
};

using BenchObserver = std::function<void(const BenchRow&)>;

/// Trains every head for every batch size; `base` supplies the remaining
/// settings.
BenchReport bench(const std::vector<HeadConfig>& heads, const std::vector<std::size_t>& batch_sizes,
                  const Dataset& train_split, const Dataset& val_split, const TrainConfig& base,
                  const BenchObserver& observer = {});

/// A summary table (Training time, Batch Size, Model) followed by one table
/// per architecture with the columns Training time, Batch Size, Val Acc.
std::string format_bench_report(const BenchReport& report, bool include_timing = true);

}  // namespace textheads
