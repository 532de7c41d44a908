#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace textheads {

/// One labelled record; label 1 marks text describing illegal behaviour.
struct Example {
    int label = 0;
    std::string text;

    bool operator==(const Example&) const = default;
};

using Dataset = std::vector<Example>;

/// Reads `<label>\t<text>` lines. Empty lines are skipped; order is preserved.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::string_view contents);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// One token per Unicode scalar value. ASCII whitespace and control
/// characters are dropped; invalid UTF-8 bytes become U+FFFD.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
public:
    static constexpr int pad_id = 0;
    static constexpr int unk_id = 1;
    static constexpr int cls_id = 2;
    static constexpr std::size_t reserved = 3;

    Vocabulary();

    /// Appends a token if absent and returns its id.
    int add(const std::string& token);
    /// Id of `token`, or unk_id when it is not in the vocabulary.
    int id(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token(int id) const;
    std::size_t size() const { return tokens_.size(); }
    /// Non-reserved tokens in id order.
    std::span<const std::string> regular_tokens() const;

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

/// Ids 3, 4, ... by descending frequency, ties broken by first occurrence.
Vocabulary build_vocab(const Dataset& dataset, std::size_t min_count = 1);

struct EncodedText {
    std::vector<int> ids;  // exactly max_len entries
    std::size_t length;    // CLS plus kept tokens
};

/// [CLS] + ids(tokens) truncated to max_len-1, right-padded with PAD.
EncodedText encode_pad(std::span<const std::string> tokens, std::size_t max_len, const Vocabulary& vocab);
EncodedText encode_text(std::string_view text, std::size_t max_len, const Vocabulary& vocab);

struct SplitSpec {
    double test_fraction = 0.20;
    double val_fraction = 0.16;
    double train_fraction = 0.64;
    std::uint64_t seed = 0;
};

struct Splits {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Split sizes for n records: test and val are round-half-up of n·fraction,
/// train takes the remainder.
struct SplitSizes {
    std::size_t train;
    std::size_t val;
    std::size_t test;
};
SplitSizes split_sizes(std::size_t n, const SplitSpec& spec);

Splits split_dataset(const Dataset& dataset, const SplitSpec& spec);

}  // namespace textheads
