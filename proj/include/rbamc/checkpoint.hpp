#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rbamc/model.hpp"

namespace rbamc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint32_t epochs_trained = 0;
    std::uint64_t seed = 0;
    std::uint64_t log_digest = 0;  // FNV-1a of the training log CSV

    friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
    Model model;
    CheckpointMeta meta;
};

/// Orthogonality tolerance for rotation matrices read from a checkpoint.
inline constexpr double kCheckpointOrthoTol = 1e-8;

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const CheckpointMeta& meta);
/// Validates magic, version, checksum, layer geometry, packed sign bits and
/// rotation orthogonality. Throws FormatError (or TruncationError).
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Re-tags a real model's weights as latent weights of `target` (clipped to
/// [−1, 1]). RBNN targets run one rotation solve per binarized layer.
Model convert_model(const Model& source, ModelVariant target);

}  // namespace rbamc
