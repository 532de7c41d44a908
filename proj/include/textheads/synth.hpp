#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "textheads/text.hpp"

namespace textheads {

/// Court-record style sentences. Label-1 texts contain at least one marker
/// bigram for an illegal act (诈骗, 盗窃, ...); label-0 texts never contain a
/// marker character. Both classes share names, civil-case phrases and filler.
/// Exactly n/2 examples (rounded down) have label 1. Throws ParameterError
/// when n < 10.
Dataset generate_synthetic(std::size_t n, std::uint64_t seed);

/// Same as generate_synthetic followed by save_dataset.
void write_synthetic(std::size_t n, std::uint64_t seed, const std::filesystem::path& out);

}  // namespace textheads
