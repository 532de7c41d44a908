#pragma once

#include <filesystem>
#include <optional>

#include "textheads/heads.hpp"
#include "textheads/model.hpp"

namespace textheads {

// Line-oriented text checkpoint:
//
//   TEXTHEADS-CKPT v1
//   arch=<head>
//   <key>=<value>            architecture settings, vocab_size, vocab
//   <blank line>
//   <parameter name>         then per tensor: a name line,
//   <d0> <d1> ...            a shape line,
//   <v0> <v1> ...            and all values with 17 significant digits.

void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Throws CheckpointError with a kind describing the failure. When
/// `expected` is given, a checkpoint of another architecture is rejected with
/// Kind::kind_mismatch.
Model load_checkpoint(const std::filesystem::path& path, std::optional<HeadKind> expected = std::nullopt);

}  // namespace textheads
