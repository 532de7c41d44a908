#include "textheads/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "textheads/error.hpp"

namespace textheads {

void adam_step(const ParamList& params, AdamState& state, double learning_rate) {
    if (state.first_moment.empty() && state.step == 0) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.tensor.numel(), 0.0);
            state.second_moment.emplace_back(p.tensor.numel(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " tensors, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.first_moment[i].size() != params[i].tensor.numel()) {
            throw ShapeError("adam_step: state shape mismatch for " + params[i].name);
        }
        for (double g : params[i].tensor.grad()) {
            if (!std::isfinite(g)) {
                throw NumericError("non-finite gradient in parameter " + params[i].name);
            }
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor tensor = params[i].tensor;
        std::span<const double> grad = tensor.grad();
        if (grad.empty()) {
            continue;
        }
        std::span<double> values = tensor.mutable_data();
        std::vector<double>& m = state.first_moment[i];
        std::vector<double>& v = state.second_moment[i];
        for (std::size_t k = 0; k < values.size(); ++k) {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * grad[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * grad[k] * grad[k];
            const double m_hat = m[k] / correction1;
            const double v_hat = v[k] / correction2;
            values[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
        }
        tensor.zero_grad();
    }
}

std::vector<EncodedExample> encode_dataset(const Dataset& dataset, const Model& model) {
    std::vector<EncodedExample> out;
    out.reserve(dataset.size());
    for (const Example& ex : dataset) {
        out.push_back({model.encode(ex.text), ex.label});
    }
    return out;
}

Metrics evaluate(const Model& model, const std::vector<EncodedExample>& split) {
    if (split.empty()) {
        throw SizeError("evaluate: empty split");
    }
    NoGradGuard no_grad;
    Metrics m;
    double total_loss = 0.0;
    for (const EncodedExample& ex : split) {
        const Tensor z = model.logits(ex.input, Mode::eval, nullptr);
        const double z0 = z.at(0);
        const double z1 = z.at(1);
        const double zmax = std::max(z0, z1);
        const double log_denom = zmax + std::log(std::exp(z0 - zmax) + std::exp(z1 - zmax));
        total_loss += log_denom - (ex.label == 1 ? z1 : z0);
        const int predicted = z1 > z0 ? 1 : 0;
        if (predicted == ex.label) {
            ++m.correct;
        }
    }
    m.count = split.size();
    m.loss = total_loss / static_cast<double>(m.count);
    m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.count);
    return m;
}

Metrics evaluate(const Model& model, const Dataset& split) { return evaluate(model, encode_dataset(split, model)); }

Trainer::Trainer(Model& model, const TrainConfig& config)
    : model_(model), config_(config), params_(model.parameters()), rng_(config.seed ^ 0x5851f42d4c957f2dULL) {
    config_.validate();
}

double Trainer::train_epoch(const std::vector<EncodedExample>& data) {
    if (data.empty()) {
        throw SizeError("train_epoch: empty training split");
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng_.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
        const std::size_t end = std::min(order.size(), begin + config_.batch_size);
        std::vector<Tensor> logits;
        std::vector<int> targets;
        logits.reserve(end - begin);
        targets.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            const EncodedExample& ex = data[order[i]];
            logits.push_back(model_.logits(ex.input, Mode::train, &rng_));
            targets.push_back(ex.label);
        }
        Tensor loss = softmax_cross_entropy(stack(logits), targets);
        if (!std::isfinite(loss.item())) {
            throw NumericError("non-finite training loss at step " + std::to_string(state_.step + 1));
        }
        loss.backward();
        adam_step(params_, state_, config_.learning_rate);
        loss_sum += loss.item();
        ++batches;
    }
    return loss_sum / static_cast<double>(batches);
}

TrainResult train(const Dataset& train_split, const Dataset& val_split, const TrainConfig& config,
                  const EpochObserver& observer) {
    config.validate();
    if (train_split.empty() || val_split.empty()) {
        throw SizeError("train: training and validation splits must be non-empty");
    }
    const auto start = std::chrono::steady_clock::now();

    Vocabulary vocab = build_vocab(train_split);
    std::optional<StaticVectors> vectors;
    if (!config.static_vectors.empty()) {
        if (config.encoder.kind != EmbeddingKind::static_table) {
            throw ParameterError("static_vectors requires encoder=static");
        }
        Rng vector_rng(config.seed);
        vectors = load_static_vectors(config.static_vectors, vocab, vector_rng);
        if (vectors->dim != config.encoder.dim) {
            throw ParameterError("static vectors have width " + std::to_string(vectors->dim) + " but dim is " +
                                 std::to_string(config.encoder.dim));
        }
    }
    Model model(std::move(vocab), config.model_config(), config.seed, vectors ? &vectors->table : nullptr);
    const std::vector<EncodedExample> train_data = encode_dataset(train_split, model);
    const std::vector<EncodedExample> val_data = encode_dataset(val_split, model);

    Trainer trainer(model, config);
    RunReport report;
    report.config = config;
    std::optional<Model> best;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        trainer.train_epoch(train_data);
        EpochRecord record{epoch, evaluate(model, train_data), evaluate(model, val_data)};
        if (!best || record.val.accuracy > report.best_val_accuracy) {
            best = model.clone();
            report.best_val_accuracy = record.val.accuracy;
            report.best_epoch = epoch;
        }
        report.epochs.push_back(record);
        if (observer) {
            observer(record);
        }
    }
    report.optimizer_steps = trainer.steps();
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return TrainResult{std::move(*best), std::move(report)};
}

std::string format_hms(double seconds) {
    const auto total = static_cast<long long>(std::max(0.0, std::floor(seconds)));
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%02lld:%02lld:%02lld", total / 3600, (total / 60) % 60, total % 60);
    return buffer;
}

std::string format_percent(double fraction) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.2f%%", fraction * 100.0);
    return buffer;
}

namespace {

std::string format_loss(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.6f", value);
    return buffer;
}

}  // namespace

std::string format_run_report(const RunReport& report, bool include_timing) {
    std::string out = "# run report\nconfig\t";
    const KeyValues entries = describe(report.config);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        out += (i > 0 ? " " : "") + entries[i].first + "=" + entries[i].second;
    }
    out += "\n\nepoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\n";
    for (const EpochRecord& r : report.epochs) {
        out += std::to_string(r.epoch) + "\t" + format_loss(r.train.loss) + "\t" + format_percent(r.train.accuracy) +
               "\t" + format_loss(r.val.loss) + "\t" + format_percent(r.val.accuracy) + "\n";
    }
    out += "\nbest_epoch\t" + std::to_string(report.best_epoch) + "\n";
    out += "optimizer_steps\t" + std::to_string(report.optimizer_steps) + "\n\n";
    out += "Training time\tBatch Size\tVal Acc\n";
    out += (include_timing ? format_hms(report.wall_seconds) : std::string("-")) + "\t" +
           std::to_string(report.config.batch_size) + "\t" + format_percent(report.best_val_accuracy) + "\n";
    return out;
}

BenchReport bench(const std::vector<HeadConfig>& heads, const std::vector<std::size_t>& batch_sizes,
                  const Dataset& train_split, const Dataset& val_split, const TrainConfig& base,
                  const BenchObserver& observer) {
    if (heads.empty() || batch_sizes.empty()) {
        throw ParameterError("bench: need at least one architecture and one batch size");
    }
    BenchReport report;
    for (const HeadConfig& head : heads) {
        for (std::size_t batch : batch_sizes) {
            TrainConfig config = base;
            config.head = head;
            config.batch_size = batch;
            const TrainResult result = train(train_split, val_split, config);
            BenchRow row{head_kind(head), batch, result.report.wall_seconds, result.report.best_val_accuracy};
            report.rows.push_back(row);
            if (observer) {
                observer(row);
            }
        }
    }
    return report;
}

std::string format_bench_report(const BenchReport& report, bool include_timing) {
    const auto time_of = [include_timing](const BenchRow& row) {
        return include_timing ? format_hms(row.wall_seconds) : std::string("-");
    };
    std::string out = "Training time\tBatch Size\tModel\n";
    for (const BenchRow& row : report.rows) {
        out += time_of(row) + "\t" + std::to_string(row.batch_size) + "\t" + std::string(display_name(row.kind)) + "\n";
    }
    std::vector<HeadKind> order;
    for (const BenchRow& row : report.rows) {
        if (std::find(order.begin(), order.end(), row.kind) == order.end()) {
            order.push_back(row.kind);
        }
    }
    for (HeadKind kind : order) {
        out += "\n# " + std::string(display_name(kind)) + "\nTraining time\tBatch Size\tVal Acc\n";
        for (const BenchRow& row : report.rows) {
            if (row.kind == kind) {
                out += time_of(row) + "\t" + std::to_string(row.batch_size) + "\t" +
                       format_percent(row.best_val_accuracy) + "\n";
            }
        }
    }
    return out;
}

}  // namespace textheads
