#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dgd/data.hpp"

namespace dgd {

inline constexpr std::uint16_t kDatasetFormatVersion = 1;

/// Dataset container, little-endian:
///   "DSTL" | u16 version | u32 num_images, num_classes, channels, height, width
///   | u16 label x num_images | f32 pixels x num_images*C*H*W
///   | u32 trailer length | UTF-8 JSON {"class_names", "provenance"}
/// followed by zero or more tagged sections: 4-byte tag | u64 length | payload.
std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds,
                                         const std::map<std::string, std::vector<std::uint8_t>>& sections = {});

struct DecodedContainer {
  LabeledDataset dataset;
  std::map<std::string, std::vector<std::uint8_t>> sections;
};

DecodedContainer decode_container(std::span<const std::uint8_t> bytes);
LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes);

void write_dataset(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset read_dataset(const std::filesystem::path& path);

/// 8-bit binary PGM of one channel, pixel values clamped to [0, 1]. Debug aid.
void write_pgm(const std::filesystem::path& path, const Tensor& image, std::size_t channel = 0);

}  // namespace dgd
