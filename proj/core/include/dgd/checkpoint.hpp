#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "dgd/mlp.hpp"

namespace dgd {

inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

/// Model checkpoint, little-endian:
///   "MDLC" | u16 version | u32 descriptor length | descriptor JSON
///   | u64 parameter count | f32 parameters
/// The descriptor carries "architecture" plus whatever the model needs to
/// rebuild itself; parameters are concatenated in model-defined order.
struct Checkpoint {
  nlohmann::json descriptor;
  std::vector<float> parameters;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Throws FormatError unless descriptor["architecture"] == expected.
void require_architecture(const Checkpoint& ckpt, const std::string& expected);

/// Appends every parameter of `net` to `out`.
void append_parameters(Mlp<float>& net, std::vector<float>& out);
/// Fills `net` from `params` starting at `*offset`, advancing it.
void load_parameters(Mlp<float>& net, std::span<const float> params, std::size_t* offset);

}  // namespace dgd
