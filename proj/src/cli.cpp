#include "textheads/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "textheads/checkpoint.hpp"
#include "textheads/config.hpp"
#include "textheads/error.hpp"
#include "textheads/gradcheck_suite.hpp"
#include "textheads/synth.hpp"
#include "textheads/text.hpp"
#include "textheads/training.hpp"

namespace textheads {

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream file(path, std::ios::binary);
    if (!file || !(file << text)) {
        throw IoError("cannot write " + path);
    }
}

std::string one_line(std::string message) {
    for (char& c : message) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return message;
}

KeyValues parse_overrides(const std::vector<std::string>& assignments) {
    KeyValues out;
    for (const std::string& item : assignments) {
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw UsageError("--set expects key=value, got '" + item + "'");
        }
        out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    return out;
}

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        if (comma > pos) {
            out.push_back(text.substr(pos, comma - pos));
        }
        pos = comma + 1;
    }
    return out;
}

// Options shared by train and bench: a config file, generic --set overrides
// and a few named shortcuts, applied in that order on top of the defaults.
struct RunOptions {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::string> head;
    std::string train_path;
    std::string val_path;
    bool no_timing = false;

    void attach(CLI::App* cmd, bool with_head) {
        cmd->add_option("--config", config, "key=value configuration file");
        cmd->add_option("--set", sets, "override a configuration key (key=value), repeatable");
        cmd->add_option("--seed", seed, "random seed");
        cmd->add_option("--epochs", epochs, "number of epochs");
        cmd->add_option("--batch-size", batch_size, "mini-batch size");
        cmd->add_option("--lr", learning_rate, "learning rate");
        if (with_head) {
            cmd->add_option("--head", head, "linear | textcnn | bilstm | rcnn | dpcnn");
        }
        cmd->add_option("--train", train_path, "training split (TSV)")->required();
        cmd->add_option("--val", val_path, "validation split (TSV)")->required();
        cmd->add_flag("--no-timing", no_timing, "write '-' instead of wall time so reports compare byte for byte");
    }

    Settings settings() const {
        KeyValues overrides = parse_overrides(sets);
        if (head) {
            overrides.emplace_back("head", *head);
        }
        if (seed) {
            overrides.emplace_back("seed", std::to_string(*seed));
        }
        if (epochs) {
            overrides.emplace_back("epochs", std::to_string(*epochs));
        }
        if (batch_size) {
            overrides.emplace_back("batch_size", std::to_string(*batch_size));
        }
        if (learning_rate) {
            overrides.emplace_back("learning_rate", format_double(*learning_rate));
        }
        const KeyValues file = config.empty() ? KeyValues{} : read_config_file(config);
        return resolve_settings(file, overrides);
    }
};

std::string format_metrics(const Metrics& m) {
    char buffer[128];
    std::snprintf(buffer, sizeof buffer, "accuracy\t%s\nloss\t%.6f\ncorrect\t%zu\ncount\t%zu\n",
                  format_percent(m.accuracy).c_str(), m.loss, m.correct, m.count);
    return buffer;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Binary legal-text classification with interchangeable classification heads", "textheads"};
    app.require_subcommand(1);

    // split
    std::string split_data;
    std::string split_dir;
    std::uint64_t split_seed = 0;
    auto* split_cmd = app.add_subcommand("split", "write train/val/test splits (64/16/20)");
    split_cmd->add_option("--data", split_data, "labelled dataset (TSV)")->required();
    split_cmd->add_option("--seed", split_seed, "shuffle seed");
    split_cmd->add_option("--out-dir", split_dir, "directory for train.tsv, val.tsv and test.tsv")->required();

    // train
    RunOptions train_opts;
    std::string train_out;
    std::string train_report;
    auto* train_cmd = app.add_subcommand("train", "train one model");
    train_opts.attach(train_cmd, true);
    train_cmd->add_option("--out", train_out, "checkpoint path")->required();
    train_cmd->add_option("--report", train_report, "run report path (default: standard output)");

    // eval
    std::string eval_model;
    std::string eval_data;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a labelled file");
    eval_cmd->add_option("--model", eval_model, "checkpoint")->required();
    eval_cmd->add_option("--data", eval_data, "labelled dataset (TSV)")->required();

    // predict
    std::string predict_model;
    std::string predict_text;
    auto* predict_cmd = app.add_subcommand("predict", "classify one sentence");
    predict_cmd->add_option("--model", predict_model, "checkpoint")->required();
    predict_cmd->add_option("--text", predict_text, "sentence to classify")->required();

    // bench
    RunOptions bench_opts;
    std::string bench_heads = "linear,textcnn,bilstm,rcnn,dpcnn";
    std::vector<std::size_t> bench_batches{64, 16};
    std::string bench_out;
    auto* bench_cmd = app.add_subcommand("bench", "train every architecture at every batch size");
    bench_opts.attach(bench_cmd, false);
    bench_cmd->add_option("--heads", bench_heads, "comma-separated architectures");
    bench_cmd->add_option("--batches", bench_batches, "batch sizes")->delimiter(',');
    bench_cmd->add_option("--out", bench_out, "report path (default: standard output)");

    // gradcheck
    std::string gc_scope;
    std::uint64_t gc_seed = 1;
    bool gc_fault = false;
    auto* gc_cmd = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
    gc_cmd->add_option("scope", gc_scope, "ops | model")->required()->check(CLI::IsMember({"ops", "model"}));
    gc_cmd->add_option("--seed", gc_seed, "seed for the random test instances");
    gc_cmd->add_flag("--inject-fault", gc_fault, "add an op with a broken backward pass (ops scope)");

    // gen-synth
    std::size_t synth_n = 0;
    std::uint64_t synth_seed = 42;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("gen-synth", "write a synthetic labelled corpus");
    synth_cmd->add_option("--n", synth_n, "number of examples (>= 10)")->required();
    synth_cmd->add_option("--seed", synth_seed, "generator seed");
    synth_cmd->add_option("--out", synth_out, "output TSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << one_line(e.what()) << '\n';
        return 1;
    }

    try {
        if (*split_cmd) {
            const Splits splits = split_dataset(load_dataset(split_data), SplitSpec{0.20, 0.16, 0.64, split_seed});
            const std::filesystem::path dir(split_dir);
            std::filesystem::create_directories(dir);
            save_dataset(dir / "train.tsv", splits.train);
            save_dataset(dir / "val.tsv", splits.val);
            save_dataset(dir / "test.tsv", splits.test);
            out << "train\t" << splits.train.size() << "\nval\t" << splits.val.size() << "\ntest\t"
                << splits.test.size() << '\n';
        } else if (*train_cmd) {
            const TrainConfig config = train_opts.settings().train_config();
            const Dataset train_split = load_dataset(train_opts.train_path);
            const Dataset val_split = load_dataset(train_opts.val_path);
            const TrainResult result = train(train_split, val_split, config, [&err](const EpochRecord& r) {
                err << "epoch " << r.epoch << "  train_loss " << r.train.loss << "  val_acc "
                    << format_percent(r.val.accuracy) << '\n';
            });
            save_checkpoint(result.model, train_out);
            const std::string report = format_run_report(result.report, !train_opts.no_timing);
            if (train_report.empty()) {
                out << report;
            } else {
                write_text(train_report, report);
            }
        } else if (*eval_cmd) {
            const Model model = load_checkpoint(eval_model);
            out << format_metrics(evaluate(model, load_dataset(eval_data)));
        } else if (*predict_cmd) {
            const Model model = load_checkpoint(predict_model);
            const Prediction p = model.predict(predict_text);
            char buffer[64];
            std::snprintf(buffer, sizeof buffer, "%d\t%.6f\n", p.label, p.probability);
            out << buffer;
        } else if (*bench_cmd) {
            const Settings settings = bench_opts.settings();
            std::vector<HeadConfig> heads;
            for (const std::string& name : split_commas(bench_heads)) {
                try {
                    heads.push_back(settings.head_config(parse_head_kind(name)));
                } catch (const ParameterError& e) {
                    throw UsageError(e.what());
                }
            }
            const Dataset train_split = load_dataset(bench_opts.train_path);
            const Dataset val_split = load_dataset(bench_opts.val_path);
            const BenchReport report =
                bench(heads, bench_batches, train_split, val_split, settings.train_config(), [&err](const BenchRow& r) {
                    err << display_name(r.kind) << "  batch " << r.batch_size << "  " << format_hms(r.wall_seconds)
                        << "  val_acc " << format_percent(r.best_val_accuracy) << '\n';
                });
            const std::string text = format_bench_report(report, !bench_opts.no_timing);
            if (bench_out.empty()) {
                out << text;
            } else {
                write_text(bench_out, text);
            }
        } else if (*gc_cmd) {
            const GradCheckReport report =
                gc_scope == "ops" ? run_op_gradchecks(gc_seed, gc_fault) : run_model_gradchecks(gc_seed);
            out << format_gradcheck_report(report);
            if (!report.passed()) {
                for (const GradCheckEntry& e : report.entries) {
                    if (!e.passed) {
                        char buffer[256];
                        std::snprintf(buffer, sizeof buffer, "error: gradcheck failed for %s: max relative error %.3e in %s[%zu]",
                                      e.name.c_str(), e.max_relative_error, e.worst_parameter.c_str(), e.coordinate);
                        err << buffer << '\n';
                        break;
                    }
                }
                return 3;
            }
        } else if (*synth_cmd) {
            write_synthetic(synth_n, synth_seed, synth_out);
            out << "wrote " << synth_n << " examples to " << synth_out << '\n';
        }
    } catch (const UsageError& e) {
        err << "error: " << one_line(e.what()) << '\n';
        return 1;
    } catch (const ParameterError& e) {
        err << "error: " << one_line(e.what()) << '\n';
        return 1;
    } catch (const NumericError& e) {
        err << "error: " << one_line(e.what()) << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << one_line(e.what()) << '\n';
        return 2;
    }
    return 0;
}

}  // namespace textheads
