#include "textheads/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "textheads/error.hpp"

namespace textheads {

namespace {

std::string_view trim(std::string_view s) {
    const auto space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
    while (!s.empty() && space(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && space(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw UsageError("invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'");
    }
    return out;
}

std::size_t parse_count(std::string_view key, std::string_view value) {
    return parse_number<std::size_t>(key, value);
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view value) {
    std::vector<std::size_t> out;
    while (!value.empty()) {
        const std::size_t comma = value.find(',');
        out.push_back(parse_count(key, trim(value.substr(0, comma))));
        if (comma == std::string_view::npos) {
            break;
        }
        value.remove_prefix(comma + 1);
    }
    if (out.empty()) {
        throw UsageError("key '" + std::string(key) + "' needs a comma-separated list");
    }
    return out;
}

std::string join(const std::vector<std::size_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += (i > 0 ? "," : "") + std::to_string(values[i]);
    }
    return out;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
    KeyValues out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw FormatError(line_no, "expected key=value, got '" + std::string(line) + "'");
        }
        out.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    return out;
}

KeyValues read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_key_values(buffer.str());
}

void TrainConfig::validate() const {
    if (batch_size == 0) {
        throw ParameterError("batch_size must be at least 1");
    }
    if (epochs == 0) {
        throw ParameterError("epochs must be at least 1");
    }
    if (!(learning_rate > 0.0)) {
        throw ParameterError("learning_rate must be positive");
    }
    encoder.validate();
    textheads::validate(head);
}

void Settings::set(std::string_view key, std::string_view value) {
    try {
        if (key == "head") {
            head = parse_head_kind(value);
        } else if (key == "batch_size") {
            batch_size = parse_count(key, value);
        } else if (key == "epochs") {
            epochs = parse_count(key, value);
        } else if (key == "learning_rate" || key == "lr") {
            learning_rate = parse_number<double>(key, value);
        } else if (key == "seed") {
            seed = parse_number<std::uint64_t>(key, value);
        } else if (key == "max_len") {
            max_len = parse_count(key, value);
        } else if (key == "encoder") {
            encoder = parse_embedding_kind(value);
        } else if (key == "enc_layers") {
            enc_layers = parse_count(key, value);
        } else if (key == "enc_heads") {
            enc_heads = parse_count(key, value);
        } else if (key == "dim") {
            dim = parse_count(key, value);
        } else if (key == "ff_dim") {
            ff_dim = parse_count(key, value);
        } else if (key == "enc_dropout") {
            enc_dropout = parse_number<double>(key, value);
        } else if (key == "static_vectors") {
            static_vectors = std::string(value);
        } else if (key == "kernel_sizes") {
            kernel_sizes = parse_list(key, value);
        } else if (key == "kernels_per_size") {
            kernels_per_size = parse_count(key, value);
        } else if (key == "layers") {
            layers = parse_count(key, value);
        } else if (key == "hidden") {
            hidden = parse_count(key, value);
        } else if (key == "channels") {
            channels = parse_count(key, value);
        } else if (key == "kernel") {
            kernel = parse_count(key, value);
        } else if (key == "pool_window") {
            pool_window = parse_count(key, value);
        } else if (key == "pool_stride") {
            pool_stride = parse_count(key, value);
        } else if (key == "dropout") {
            dropout = parse_number<double>(key, value);
        } else {
            throw UsageError("unknown configuration key '" + std::string(key) + "'");
        }
    } catch (const ParameterError& e) {
        throw UsageError(e.what());
    }
}

void Settings::apply(const KeyValues& entries) {
    for (const auto& [key, value] : entries) {
        set(key, value);
    }
}

HeadConfig Settings::head_config(HeadKind kind) const {
    switch (kind) {
        case HeadKind::linear:
            return LinearHeadConfig{};
        case HeadKind::textcnn:
            return TextCnnConfig{kernel_sizes, kernels_per_size, dropout};
        case HeadKind::bilstm:
            return BiLstmConfig{layers, hidden, dropout};
        case HeadKind::rcnn:
            return RcnnConfig{layers, hidden, dropout};
        case HeadKind::dpcnn:
            return DpcnnConfig{channels, kernel, pool_window, pool_stride, dropout};
    }
    return LinearHeadConfig{};
}

EncoderConfig Settings::encoder_config() const {
    return EncoderConfig{encoder, enc_layers, enc_heads, dim, ff_dim, max_len, enc_dropout};
}

TrainConfig Settings::train_config(HeadKind kind) const {
    TrainConfig config;
    config.batch_size = batch_size;
    config.epochs = epochs;
    config.learning_rate = learning_rate;
    config.seed = seed;
    config.encoder = encoder_config();
    config.head = head_config(kind);
    config.static_vectors = static_vectors;
    return config;
}

TrainConfig Settings::train_config() const { return train_config(head); }

Settings resolve_settings(const KeyValues& file_entries, const KeyValues& overrides) {
    Settings settings;
    settings.apply(file_entries);
    settings.apply(overrides);
    return settings;
}

std::string format_double(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

KeyValues describe(const ModelConfig& config) {
    const EncoderConfig& e = config.encoder;
    KeyValues out{
        {"head", std::string(to_string(head_kind(config.head)))},
        {"encoder", std::string(to_string(e.kind))},
        {"enc_layers", std::to_string(e.layers)},
        {"enc_heads", std::to_string(e.heads)},
        {"dim", std::to_string(e.dim)},
        {"ff_dim", std::to_string(e.ff_dim)},
        {"max_len", std::to_string(e.max_len)},
        {"enc_dropout", format_double(e.dropout)},
    };
    if (const auto* c = std::get_if<TextCnnConfig>(&config.head)) {
        out.emplace_back("kernel_sizes", join(c->kernel_sizes));
        out.emplace_back("kernels_per_size", std::to_string(c->kernels_per_size));
        out.emplace_back("dropout", format_double(c->dropout));
    } else if (const auto* c = std::get_if<BiLstmConfig>(&config.head)) {
        out.emplace_back("layers", std::to_string(c->layers));
        out.emplace_back("hidden", std::to_string(c->hidden));
        out.emplace_back("dropout", format_double(c->dropout));
    } else if (const auto* c = std::get_if<RcnnConfig>(&config.head)) {
        out.emplace_back("layers", std::to_string(c->layers));
        out.emplace_back("hidden", std::to_string(c->hidden));
        out.emplace_back("dropout", format_double(c->dropout));
    } else if (const auto* c = std::get_if<DpcnnConfig>(&config.head)) {
        out.emplace_back("channels", std::to_string(c->channels));
        out.emplace_back("kernel", std::to_string(c->kernel));
        out.emplace_back("pool_window", std::to_string(c->pool_window));
        out.emplace_back("pool_stride", std::to_string(c->pool_stride));
        out.emplace_back("dropout", format_double(c->dropout));
    }
    return out;
}

ModelConfig model_config_from(const KeyValues& entries) {
    Settings settings;
    settings.apply(entries);
    return {settings.encoder_config(), settings.head_config(settings.head)};
}

KeyValues describe(const TrainConfig& config) {
    KeyValues out = describe(config.model_config());
    out.emplace_back("batch_size", std::to_string(config.batch_size));
    out.emplace_back("epochs", std::to_string(config.epochs));
    out.emplace_back("learning_rate", format_double(config.learning_rate));
    out.emplace_back("seed", std::to_string(config.seed));
    if (!config.static_vectors.empty()) {
        out.emplace_back("static_vectors", config.static_vectors);
    }
    return out;
}

}  // namespace textheads
