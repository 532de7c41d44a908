#include "textheads/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "textheads/error.hpp"
#include "textheads/rng.hpp"

namespace textheads {

namespace {

bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_ascii_space(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && is_ascii_space(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

const char* const kReplacement = "\xEF\xBF\xBD";

// Length of the well-formed UTF-8 sequence starting at s[i], or 0.
std::size_t utf8_sequence_length(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (b0 < 0x80) {
        return 1;
    } else if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return 0;
    }
    if (i + len > s.size()) {
        return 0;
    }
    for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            return 0;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    // Overlong forms, surrogates and values past U+10FFFF are rejected.
    static constexpr std::uint32_t min_for_len[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < min_for_len[len] || (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
        return 0;
    }
    return len;
}

}  // namespace

Dataset parse_dataset(std::string_view contents) {
    Dataset out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < contents.size()) {
        std::size_t end = contents.find('\n', pos);
        if (end == std::string_view::npos) {
            end = contents.size();
        }
        std::string_view line = contents.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            continue;
        }
        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos) {
            throw ParseError(line_no, "expected '<label>\\t<text>'");
        }
        const std::string_view label = line.substr(0, tab);
        const std::string_view text = line.substr(tab + 1);
        const bool numeric = !label.empty() && std::all_of(label.begin(), label.end(), [](char c) {
            return c >= '0' && c <= '9';
        });
        if (!numeric) {
            throw ParseError(line_no, "label '" + std::string(label) + "' is not an integer");
        }
        if (label != "0" && label != "1") {
            throw LabelError("line " + std::to_string(line_no) + ": label " + std::string(label) +
                             " not in {0,1}");
        }
        if (trim(text).empty()) {
            throw ParseError(line_no, "empty text");
        }
        out.push_back(Example{label == "1" ? 1 : 0, std::string(text)});
    }
    return out;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open dataset " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_dataset(buffer.str());
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write dataset " + path.string());
    }
    for (const Example& ex : dataset) {
        out << ex.label << '\t' << ex.text << '\n';
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t len = utf8_sequence_length(text, i);
        if (len == 0) {
            tokens.emplace_back(kReplacement);
            ++i;
            continue;
        }
        if (len == 1) {
            const auto c = static_cast<unsigned char>(text[i]);
            if (c < 0x20 || c == 0x7F || c == ' ') {
                ++i;
                continue;
            }
        }
        tokens.emplace_back(text.substr(i, len));
        i += len;
    }
    return tokens;
}

Vocabulary::Vocabulary() {
    for (const char* special : {"[PAD]", "[UNK]", "[CLS]"}) {
        add(special);
    }
}

int Vocabulary::add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) {
        return it->second;
    }
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    ids_.emplace(token, id);
    return id;
}

int Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? unk_id : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::span<const std::string> Vocabulary::regular_tokens() const {
    return std::span<const std::string>(tokens_).subspan(reserved);
}

Vocabulary build_vocab(const Dataset& dataset, std::size_t min_count) {
    struct Count {
        std::size_t count = 0;
        std::size_t first = 0;
    };
    std::unordered_map<std::string, Count> counts;
    std::vector<std::string> order;
    for (const Example& ex : dataset) {
        for (std::string& tok : tokenize(ex.text)) {
            auto [it, inserted] = counts.try_emplace(tok, Count{0, order.size()});
            if (inserted) {
                order.push_back(std::move(tok));
            }
            ++it->second.count;
        }
    }
    std::stable_sort(order.begin(), order.end(), [&counts](const std::string& a, const std::string& b) {
        return counts.at(a).count > counts.at(b).count;
    });
    Vocabulary vocab;
    for (const std::string& tok : order) {
        if (counts.at(tok).count >= min_count) {
            vocab.add(tok);
        }
    }
    return vocab;
}

EncodedText encode_pad(std::span<const std::string> tokens, std::size_t max_len, const Vocabulary& vocab) {
    if (max_len < 2) {
        throw ParameterError("encode_pad: max_len must be at least 2, got " + std::to_string(max_len));
    }
    EncodedText out{std::vector<int>(max_len, Vocabulary::pad_id), 1};
    out.ids[0] = Vocabulary::cls_id;
    const std::size_t kept = std::min(tokens.size(), max_len - 1);
    for (std::size_t i = 0; i < kept; ++i) {
        out.ids[i + 1] = vocab.id(tokens[i]);
    }
    out.length = kept + 1;
    return out;
}

EncodedText encode_text(std::string_view text, std::size_t max_len, const Vocabulary& vocab) {
    const auto tokens = tokenize(text);
    return encode_pad(tokens, max_len, vocab);
}

SplitSizes split_sizes(std::size_t n, const SplitSpec& spec) {
    const double total = spec.test_fraction + spec.val_fraction + spec.train_fraction;
    if (spec.test_fraction < 0.0 || spec.val_fraction < 0.0 || spec.train_fraction < 0.0 ||
        std::abs(total - 1.0) > 1e-9) {
        throw ParameterError("split fractions must be non-negative and sum to 1");
    }
    const auto round_half_up = [n](double fraction) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 0.5));
    };
    const std::size_t test = round_half_up(spec.test_fraction);
    const std::size_t val = round_half_up(spec.val_fraction);
    if (test + val > n) {
        throw SizeError("split fractions leave no room for a training set");
    }
    return {n - test - val, val, test};
}

Splits split_dataset(const Dataset& dataset, const SplitSpec& spec) {
    if (dataset.size() < 5) {
        throw SizeError("split_dataset: need at least 5 examples, got " + std::to_string(dataset.size()));
    }
    const SplitSizes sizes = split_sizes(dataset.size(), spec);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(spec.seed);
    rng.shuffle(order);

    Splits out;
    out.test.reserve(sizes.test);
    out.val.reserve(sizes.val);
    out.train.reserve(sizes.train);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const Example& ex = dataset[order[i]];
        if (i < sizes.test) {
            out.test.push_back(ex);
        } else if (i < sizes.test + sizes.val) {
            out.val.push_back(ex);
        } else {
            out.train.push_back(ex);
        }
    }
    return out;
}

}  // namespace textheads
