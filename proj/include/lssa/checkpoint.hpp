#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "lssa/lstm.hpp"

namespace lssa {

/// Stage tags written into checkpoint headers.
namespace stage {
inline constexpr const char* kLm = "lm";
inline constexpr const char* kLmPretrain = "lm-pretrain";
inline constexpr const char* kAePretrain = "ae-pretrain";
inline constexpr const char* kFinetune = "finetune";
inline constexpr const char* kInit = "init";
}  // namespace stage

struct CheckpointMeta {
    ModelConfig config;
    std::uint64_t master_seed = 0;
    std::string stage;
};

struct Checkpoint {
    CheckpointMeta meta;
    std::map<std::string, Matrix> tensors;

    /// Throws CheckpointError if the tensor is absent or has the wrong shape.
    const Matrix& tensor(const std::string& name, std::size_t rows, std::size_t cols) const;

    /// Copies tensors into `params` by name. Throws CheckpointError on any mismatch.
    void load_into(std::span<const NamedParam> params) const;
};

/// File layout: the magic line "LSSA1\n", one JSON header line listing the
/// config, stage, seed and the parameter shapes in file order, then the raw
/// little-endian 64-bit floats of each parameter in that order.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     std::span<const NamedParam> params);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace lssa
