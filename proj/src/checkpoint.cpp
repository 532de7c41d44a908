#include "textheads/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "textheads/config.hpp"
#include "textheads/error.hpp"

namespace textheads {

namespace {

constexpr std::string_view kMagic = "TEXTHEADS-CKPT";
constexpr std::string_view kVersion = "v1";

using Kind = CheckpointError::Kind;

std::vector<std::string_view> split_spaces(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && line[pos] == ' ') {
            ++pos;
        }
        const std::size_t end = std::min(line.find(' ', pos), line.size());
        if (end > pos) {
            out.push_back(line.substr(pos, end - pos));
        }
        pos = end;
    }
    return out;
}

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    std::string next(const char* what) {
        std::string line;
        if (!std::getline(in_, line)) {
            throw CheckpointError(Kind::truncated, "unexpected end of file, expected " + std::string(what));
        }
        ++line_no_;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        return line;
    }

    std::size_t line_no() const { return line_no_; }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
};

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write checkpoint " + path.string());
    }
    out << kMagic << ' ' << kVersion << '\n';
    for (const auto& [key, value] : describe(model.config())) {
        out << (key == "head" ? "arch" : key) << '=' << value << '\n';
    }
    out << "vocab_size=" << model.vocab().size() << '\n';
    out << "vocab=";
    const auto tokens = model.vocab().regular_tokens();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        out << (i > 0 ? " " : "") << tokens[i];
    }
    out << "\n\n";
    for (const auto& [name, tensor] : model.all_parameters()) {
        out << name << '\n';
        const Shape& shape = tensor.shape();
        for (std::size_t i = 0; i < shape.size(); ++i) {
            out << (i > 0 ? " " : "") << shape[i];
        }
        out << '\n';
        const auto values = tensor.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            out << (i > 0 ? " " : "") << format_double(values[i]);
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("write failed for checkpoint " + path.string());
    }
}

Model load_checkpoint(const std::filesystem::path& path, std::optional<HeadKind> expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    LineReader reader(in);

    std::string magic;
    try {
        magic = reader.next("header");
    } catch (const CheckpointError&) {
        throw CheckpointError(Kind::bad_magic, "empty file " + path.string());
    }
    const auto magic_fields = split_spaces(magic);
    if (magic_fields.size() != 2 || magic_fields[0] != kMagic) {
        throw CheckpointError(Kind::bad_magic, "not a checkpoint (first line '" + magic + "')");
    }
    if (magic_fields[1] != kVersion) {
        throw CheckpointError(Kind::version_mismatch, "unsupported version " + std::string(magic_fields[1]) +
                                                          ", expected " + std::string(kVersion));
    }

    KeyValues settings;
    std::optional<std::size_t> vocab_size;
    std::vector<std::string> vocab_tokens;
    bool have_arch = false;
    bool have_vocab = false;
    for (std::string line = reader.next("header entry"); !line.empty(); line = reader.next("header entry")) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw CheckpointError(Kind::malformed, "line " + std::to_string(reader.line_no()) + ": expected key=value");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "arch") {
            have_arch = true;
            settings.emplace_back("head", value);
        } else if (key == "vocab_size") {
            std::size_t n = 0;
            auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
            if (ec != std::errc() || ptr != value.data() + value.size()) {
                throw CheckpointError(Kind::malformed, "bad vocab_size '" + value + "'");
            }
            vocab_size = n;
        } else if (key == "vocab") {
            have_vocab = true;
            for (std::string_view tok : split_spaces(value)) {
                vocab_tokens.emplace_back(tok);
            }
        } else {
            settings.emplace_back(key, value);
        }
    }
    if (!have_arch || !vocab_size || !have_vocab) {
        throw CheckpointError(Kind::malformed, "header lacks arch, vocab_size or vocab");
    }

    ModelConfig config;
    try {
        config = model_config_from(settings);
        config.encoder.validate();
        validate(config.head);
    } catch (const Error& e) {
        throw CheckpointError(Kind::malformed, std::string("bad header: ") + e.what());
    }
    const HeadKind kind = head_kind(config.head);
    if (expected && *expected != kind) {
        throw CheckpointError(Kind::kind_mismatch, "checkpoint holds a " + std::string(to_string(kind)) +
                                                       " model, expected " + std::string(to_string(*expected)));
    }

    Vocabulary vocab;
    for (const std::string& tok : vocab_tokens) {
        vocab.add(tok);
    }
    if (vocab.size() != *vocab_size) {
        throw CheckpointError(Kind::malformed, "vocab lists " + std::to_string(vocab.size()) +
                                                   " entries, vocab_size says " + std::to_string(*vocab_size));
    }

    Model model(std::move(vocab), config, 0);
    for (const auto& [name, tensor] : model.all_parameters()) {
        const std::string found = reader.next("parameter name");
        if (found != name) {
            throw CheckpointError(Kind::shape_mismatch, "expected parameter " + name + ", found '" + found + "'");
        }
        const std::string shape_line = reader.next("shape");
        Shape shape;
        for (std::string_view field : split_spaces(shape_line)) {
            std::size_t d = 0;
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), d);
            if (ec != std::errc() || ptr != field.data() + field.size()) {
                throw CheckpointError(Kind::malformed, "bad shape line for " + name);
            }
            shape.push_back(d);
        }
        if (shape != tensor.shape()) {
            throw CheckpointError(Kind::shape_mismatch, name + " has shape " + shape_string(shape) + ", expected " +
                                                            shape_string(tensor.shape()));
        }
        const std::string values_line = reader.next("values");
        const auto fields = split_spaces(values_line);
        if (fields.size() != tensor.numel()) {
            throw CheckpointError(fields.size() < tensor.numel() ? Kind::truncated : Kind::malformed,
                                  name + " has " + std::to_string(fields.size()) + " values, expected " +
                                      std::to_string(tensor.numel()));
        }
        Tensor target = tensor;
        std::span<double> values = target.mutable_data();
        for (std::size_t i = 0; i < fields.size(); ++i) {
            const std::string text(fields[i]);
            char* end = nullptr;
            values[i] = std::strtod(text.c_str(), &end);
            if (end != text.c_str() + text.size()) {
                throw CheckpointError(Kind::malformed, "bad value '" + text + "' in " + name);
            }
        }
    }
    return model;
}

}  // namespace textheads
