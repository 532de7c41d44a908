#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "textheads/checkpoint.hpp"
#include "textheads/cli.hpp"
#include "textheads/config.hpp"
#include "textheads/gradcheck_suite.hpp"
#include "textheads/ops.hpp"
#include "textheads/synth.hpp"
#include "textheads/training.hpp"

using namespace textheads;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
    bool passed = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, format, value);
    return buffer;
}

std::string read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
    args.insert(args.begin(), "textheads");
    std::vector<const char*> argv;
    for (const std::string& s : args) {
        argv.push_back(s.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text != nullptr) {
        *out_text = out.str();
    }
    if (code != 0) {
        std::fprintf(stderr, "%s", err.str().c_str());
    }
    return code;
}

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "textheads_acceptance";
    fs::create_directories(dir);
    return dir;
}

std::string desk_config() { return std::string(TEXTHEADS_SOURCE_DIR) + "/configs/desk.cfg"; }

Settings desk_settings() { return resolve_settings(read_config_file(desk_config()), {}); }

Tensor random_tensor(Rng& rng, Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.mutable_data()) {
        v = rng.uniform(-1.0, 1.0);
    }
    return t;
}

double max_abs_diff(const Tensor& a, const std::vector<double>& b) {
    if (a.numel() != b.size()) {
        return INFINITY;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b[i]));
    }
    return worst;
}

Verdict reproducibility_statement() {
    return {true,
            "informational: published accuracies need a private corpus and a pretrained encoder; "
            "criteria 2-8 are property-based substitutes"};
}

Verdict gradient_fidelity() {
    const auto start = Clock::now();
    const GradCheckReport ops = run_op_gradchecks(1);
    const GradCheckReport model = run_model_gradchecks(1);
    const double elapsed = seconds_since(start);
    double worst = 0.0;
    std::string worst_name;
    for (const GradCheckReport* r : {&ops, &model}) {
        for (const GradCheckEntry& e : r->entries) {
            if (e.max_relative_error >= worst) {
                worst = e.max_relative_error;
                worst_name = e.name;
            }
        }
    }
    const bool passed = ops.passed() && model.passed() && worst <= 1e-4 && elapsed < 120.0;
    return {passed, std::to_string(ops.entries.size()) + " op checks, " + std::to_string(model.entries.size()) +
                        " architectures, max rel err " + fmt("%.2e", worst) + " (" + worst_name + ") <= 1e-4, " +
                        fmt("%.1f", elapsed) + " s < 120 s"};
}

Verdict oracle_equivalence() {
    const auto start = Clock::now();
    Rng rng(2024);
    constexpr int kInstances = 1000;
    double worst_conv = 0.0;
    double worst_pool = 0.0;
    double worst_matmul = 0.0;
    for (int n = 0; n < kInstances; ++n) {
        const std::size_t w = 1 + rng.below(5);
        const std::size_t t = w + rng.below(10);
        const std::size_t din = 1 + rng.below(5);
        const std::size_t k = 1 + rng.below(5);
        const Tensor x = random_tensor(rng, {t, din});
        const Tensor wt = random_tensor(rng, {k, w, din});
        const Tensor b = random_tensor(rng, {k});
        for (Padding padding : {Padding::valid, Padding::same}) {
            const std::size_t left = padding == Padding::same ? (w - 1) / 2 : 0;
            const std::size_t t_out = padding == Padding::same ? t : t - w + 1;
            std::vector<double> ref(t_out * k);
            for (std::size_t o = 0; o < t_out; ++o) {
                for (std::size_t c = 0; c < k; ++c) {
                    double acc = b.at(c);
                    for (std::size_t j = 0; j < w; ++j) {
                        const long pos = static_cast<long>(o + j) - static_cast<long>(left);
                        if (pos < 0 || pos >= static_cast<long>(t)) {
                            continue;
                        }
                        for (std::size_t d = 0; d < din; ++d) {
                            acc += wt.at(c, j, d) * x.at(static_cast<std::size_t>(pos), d);
                        }
                    }
                    ref[o * k + c] = acc;
                }
            }
            worst_conv = std::max(worst_conv, max_abs_diff(conv1d(x, wt, b, padding), ref));
        }

        const std::size_t window = 1 + rng.below(4);
        const std::size_t stride = 1 + rng.below(3);
        const std::size_t tp = window + rng.below(12);
        const Tensor xp = random_tensor(rng, {tp, k});
        const std::size_t p_out = (tp - window) / stride + 1;
        std::vector<double> pooled(p_out * k);
        for (std::size_t o = 0; o < p_out; ++o) {
            for (std::size_t c = 0; c < k; ++c) {
                double best = -INFINITY;
                for (std::size_t j = 0; j < window; ++j) {
                    best = std::max(best, xp.at(o * stride + j, c));
                }
                pooled[o * k + c] = best;
            }
        }
        worst_pool = std::max(worst_pool, max_abs_diff(max_pool_1d(xp, window, stride), pooled));

        const std::size_t m = 1 + rng.below(6);
        const std::size_t inner = 1 + rng.below(6);
        const std::size_t cols = 1 + rng.below(6);
        const Tensor a = random_tensor(rng, {m, inner});
        const Tensor bm = random_tensor(rng, {inner, cols});
        std::vector<double> prod(m * cols, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                for (std::size_t l = 0; l < inner; ++l) {
                    prod[i * cols + j] += a.at(i, l) * bm.at(l, j);
                }
            }
        }
        worst_matmul = std::max(worst_matmul, max_abs_diff(matmul(a, bm), prod));
    }
    const double elapsed = seconds_since(start);
    const double worst = std::max({worst_conv, worst_pool, worst_matmul});
    return {worst <= 1e-12 && elapsed < 30.0,
            std::to_string(kInstances) + " instances each; max abs diff conv1d " + fmt("%.1e", worst_conv) +
                ", max_pool_1d " + fmt("%.1e", worst_pool) + ", matmul " + fmt("%.1e", worst_matmul) +
                " <= 1e-12, " + fmt("%.2f", elapsed) + " s < 30 s"};
}

bool split_is_partition(std::size_t n, const SplitSizes& expected, std::string& detail) {
    Dataset data;
    for (std::size_t i = 0; i < n; ++i) {
        data.push_back({static_cast<int>(i % 2), "record" + std::to_string(i)});
    }
    const Splits s = split_dataset(data, SplitSpec{0.20, 0.16, 0.64, 7});
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const Dataset* part : {&s.train, &s.val, &s.test}) {
        for (const Example& e : *part) {
            seen.insert(e.text);
            ++total;
        }
    }
    detail += "N=" + std::to_string(n) + " -> (" + std::to_string(s.train.size()) + ", " +
              std::to_string(s.val.size()) + ", " + std::to_string(s.test.size()) + ")";
    return s.train.size() == expected.train && s.val.size() == expected.val && s.test.size() == expected.test &&
           total == n && seen.size() == n;
}

Verdict split_arithmetic() {
    std::string detail;
    const bool big = split_is_partition(6755, {4323, 1081, 1351}, detail);
    detail += "; ";
    const bool small = split_is_partition(100, {64, 16, 20}, detail);
    return {big && small, detail + "; disjoint with full coverage"};
}

Verdict dpcnn_schedule_check() {
    const auto start = Clock::now();
    const DpcnnConfig config{4, 3, 3, 2, 0.0};
    Rng rng(5);
    const Head head = build_head(config, 4, rng);
    const auto& params = std::get<DpcnnParams>(head.params);
    std::size_t mismatches = 0;
    std::vector<std::size_t> at_128;
    for (std::size_t t = 3; t <= 512; ++t) {
        std::vector<std::size_t> expected;
        for (std::size_t len = t; len >= 3;) {
            len = (len - 3) / 2 + 1;
            expected.push_back(len);
        }
        std::vector<std::size_t> trace;
        NoGradGuard no_grad;
        dpcnn_head(random_tensor(rng, {t, 4}), config, params, HeadContext{Mode::eval, nullptr, &trace});
        if (trace != expected || dpcnn_schedule(t) != expected) {
            ++mismatches;
        }
        if (t == 128) {
            at_128 = trace;
        }
    }
    const double elapsed = seconds_since(start);
    std::string lengths;
    for (std::size_t l : at_128) {
        lengths += (lengths.empty() ? "" : ",") + std::to_string(l);
    }
    const bool passed = mismatches == 0 && at_128 == std::vector<std::size_t>{63, 31, 15, 7, 3, 1} && elapsed < 10.0;
    return {passed, "T=128 -> " + lengths + " (" + std::to_string(at_128.size()) + " blocks); " +
                        std::to_string(mismatches) + " mismatches for T in [3,512]; " + fmt("%.2f", elapsed) +
                        " s < 10 s"};
}

Verdict overfit_capacity() {
    const Settings settings = desk_settings();
    const Dataset data = generate_synthetic(64, 7);
    bool all = true;
    std::string detail;
    for (HeadKind kind : kAllHeadKinds) {
        const auto start = Clock::now();
        TrainConfig config = settings.train_config(kind);
        config.batch_size = 16;
        Model model(build_vocab(data), config.model_config(), config.seed);
        const std::vector<EncodedExample> encoded = encode_dataset(data, model);
        Trainer trainer(model, config);
        std::size_t epoch = 0;
        double accuracy = 0.0;
        while (epoch < 300 && accuracy < 1.0 && seconds_since(start) < 300.0) {
            trainer.train_epoch(encoded);
            ++epoch;
            accuracy = evaluate(model, encoded).accuracy;
        }
        const double elapsed = seconds_since(start);
        const bool ok = accuracy == 1.0 && elapsed < 300.0;
        all = all && ok;
        detail += (detail.empty() ? "" : "; ") + std::string(display_name(kind)) + " " + format_percent(accuracy) +
                  " after " + std::to_string(epoch) + " epochs, " + fmt("%.1f", elapsed) + " s";
    }
    return {all, detail + " (need 100% within 300 epochs, < 300 s each)"};
}

Verdict end_to_end_bench() {
    const auto start = Clock::now();
    const fs::path dir = scratch_dir() / "bench";
    fs::create_directories(dir);
    const std::string corpus = (dir / "corpus.tsv").string();
    std::string ignored;
    if (cli({"gen-synth", "--n", "2000", "--seed", "42", "--out", corpus}, &ignored) != 0 ||
        cli({"split", "--data", corpus, "--seed", "42", "--out-dir", dir.string()}, &ignored) != 0) {
        return {false, "could not prepare the corpus"};
    }
    std::string table;
    if (cli({"bench", "--config", desk_config(), "--epochs", "10", "--train", (dir / "train.tsv").string(), "--val",
             (dir / "val.tsv").string()},
            &table) != 0) {
        return {false, "bench failed"};
    }
    const double elapsed = seconds_since(start);
    {
        std::ofstream(dir / "bench.txt") << table;
    }

    const std::regex summary_row(R"((\d{2}):(\d{2}):(\d{2})\t(\d+)\t(Baseline|CNN|RNN|RCNN|DPCNN))");
    const std::regex acc_row(R"((\d{2}):(\d{2}):(\d{2})\t(\d+)\t(\d+\.\d{2})%)");
    std::istringstream lines(table);
    std::string line;
    std::string current;
    std::size_t summary_rows = 0;
    std::size_t acc_rows = 0;
    bool headers_ok = table.rfind("Training time\tBatch Size\tModel\n", 0) == 0;
    double lowest = 100.0;
    std::string lowest_name;
    while (std::getline(lines, line)) {
        std::smatch m;
        if (line.rfind("# ", 0) == 0) {
            current = line.substr(2);
            std::string header;
            std::getline(lines, header);
            headers_ok = headers_ok && header == "Training time\tBatch Size\tVal Acc";
        } else if (current.empty() && std::regex_match(line, m, summary_row)) {
            ++summary_rows;
        } else if (!current.empty() && std::regex_match(line, m, acc_row)) {
            ++acc_rows;
            const double acc = std::stod(m[5]);
            if (acc < lowest) {
                lowest = acc;
                lowest_name = current + " batch " + m[4].str();
            }
        }
    }
    const bool passed = headers_ok && summary_rows == 10 && acc_rows == 10 && lowest >= 90.0 && elapsed < 3600.0;
    return {passed, std::to_string(acc_rows) + "/10 rows in h:mm:ss format, lowest val acc " + fmt("%.2f", lowest) +
                        "% (" + lowest_name + ") >= 90%, " + format_hms(elapsed) + " < 01:00:00"};
}

Verdict determinism_and_persistence() {
    const fs::path dir = scratch_dir() / "determinism";
    fs::create_directories(dir);
    const std::string train_path = (dir / "train.tsv").string();
    const std::string val_path = (dir / "val.tsv").string();
    write_synthetic(200, 11, train_path);
    write_synthetic(60, 12, val_path);

    bool reports_equal = true;
    for (const char* head : {"linear", "textcnn", "bilstm", "rcnn", "dpcnn"}) {
        std::string reports[2];
        for (int i = 0; i < 2; ++i) {
            const std::string ckpt = (dir / (std::string(head) + std::to_string(i) + ".ckpt")).string();
            if (cli({"train", "--config", desk_config(), "--head", head, "--epochs", "2", "--seed", "3", "--train",
                     train_path, "--val", val_path, "--out", ckpt, "--no-timing"},
                    &reports[i]) != 0) {
                return {false, std::string("training failed for ") + head};
            }
        }
        reports_equal = reports_equal && !reports[0].empty() && reports[0] == reports[1] &&
                        read_all(dir / (std::string(head) + "0.ckpt")) == read_all(dir / (std::string(head) + "1.ckpt"));
    }

    TrainConfig config = desk_settings().train_config(HeadKind::rcnn);
    config.epochs = 2;
    const Dataset train_split = load_dataset(train_path);
    const Dataset val_split = load_dataset(val_path);
    const TrainResult result = train(train_split, val_split, config);
    const fs::path ckpt = dir / "roundtrip.ckpt";
    save_checkpoint(result.model, ckpt);
    const Model loaded = load_checkpoint(ckpt);
    const bool metrics_equal =
        evaluate(loaded, val_split) == evaluate(result.model, val_split) &&
        evaluate(loaded, train_split) == evaluate(result.model, train_split);
    return {reports_equal && metrics_equal,
            std::string("timing-free reports and checkpoints of two seeded runs ") +
                (reports_equal ? "byte-identical" : "DIFFER") + " for all 5 heads; checkpoint round-trip metrics " +
                (metrics_equal ? "bit-identical" : "DIFFER")};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Verdict()> check;
    };
    const std::vector<Criterion> criteria{
        {"1 reproducibility statement", reproducibility_statement},
        {"2 gradient fidelity", gradient_fidelity},
        {"3 oracle equivalence", oracle_equivalence},
        {"4 split arithmetic", split_arithmetic},
        {"5 dpcnn schedule", dpcnn_schedule_check},
        {"6 overfit capacity", overfit_capacity},
        {"7 end-to-end bench", end_to_end_bench},
        {"8 determinism and persistence", determinism_and_persistence},
    };
    int failures = 0;
    for (const Criterion& c : criteria) {
        Verdict v;
        try {
            v = c.check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failures += v.passed ? 0 : 1;
        std::printf("%s criterion %s: %s\n", v.passed ? "PASS" : "FAIL", c.name, v.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
