#pragma once

#include <filesystem>
#include <optional>

#include "lpiqa/image.hpp"
#include "lpiqa/nn/adam.hpp"

namespace lpiqa::nn {

class CheckpointError : public DataError {
public:
    enum class Kind { Missing, BadMagic, Truncated, FingerprintMismatch, ShapeMismatch };
    CheckpointError(Kind kind, const std::string& msg) : DataError(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Binary layout (all integers and reals little-endian):
///   "LPIQACKP" | u32 version | u32 len + fingerprint bytes | u32 epoch |
///   u32 tensor count | per tensor: u64 count + f32 values |
///   u8 has_adam [ | f64 lr, beta1, beta2, eps | i64 step |
///                  first moments (u64 count + f32) | second moments ]
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    ModelParams<float> params;
    int epoch = 0;  // completed epochs
    std::optional<AdamState<float>> adam;
};

inline constexpr char kCheckpointMagic[8] = {'L', 'P', 'I', 'Q', 'A', 'C', 'K', 'P'};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt);

/// When `expected` is given, its fingerprint must match the file's.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);
Checkpoint parse_checkpoint(std::span<const unsigned char> bytes, const ModelConfig* expected = nullptr);

/// "model_e0005.ckpt".
std::string checkpoint_filename(const std::string& prefix, int epoch);

}  // namespace lpiqa::nn
