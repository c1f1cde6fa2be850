#include "dgd/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "dgd/binary_io.hpp"

namespace dgd {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds,
                                         const std::map<std::string, std::vector<std::uint8_t>>& sections) {
  ds.validate();
  if (ds.image_shape.size() != 3) throw InvalidArgument("encode_dataset: image shape must be (C, H, W)");
  if (ds.num_classes > std::numeric_limits<std::uint16_t>::max())
    throw InvalidArgument("encode_dataset: labels are stored as u16");
  for (const auto& img : ds.images) require_finite(img.data(), "encode_dataset: image");

  ByteWriter w;
  w.tag("DSTL");
  w.u16(kDatasetFormatVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.num_classes));
  for (auto d : ds.image_shape) w.u32(static_cast<std::uint32_t>(d));
  for (int label : ds.labels) w.u16(static_cast<std::uint16_t>(label));
  for (const auto& img : ds.images)
    for (float x : img.data()) w.f32(x);
  const nlohmann::json trailer = {{"class_names", ds.class_names}, {"provenance", ds.provenance}};
  const std::string text = trailer.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.str(text);
  for (const auto& [tag, payload] : sections) {
    if (tag.size() != 4) throw InvalidArgument("encode_dataset: section tags are four bytes");
    w.tag(tag);
    w.u64(payload.size());
    w.raw(payload);
  }
  return w.take();
}

DecodedContainer decode_container(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_tag("DSTL", "magic");
  const auto version = r.u16("version");
  if (version != kDatasetFormatVersion)
    throw FormatError("unsupported value in field 'version': " + std::to_string(version));

  DecodedContainer out;
  auto& ds = out.dataset;
  const std::uint32_t n = r.u32("num_images");
  ds.num_classes = static_cast<int>(r.u32("num_classes"));
  if (ds.num_classes <= 0) throw FormatError("invalid value in field 'num_classes': must be positive");
  const std::uint32_t channels = r.u32("channels");
  const std::uint32_t height = r.u32("height");
  const std::uint32_t width = r.u32("width");
  if (channels == 0 || height == 0 || width == 0) throw FormatError("invalid value in field 'channels/height/width'");
  ds.image_shape = {channels, height, width};

  r.need(static_cast<std::size_t>(n) * 2, "labels");
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const int label = r.u16("labels");
    if (label >= ds.num_classes)
      throw FormatError("label out of range in field 'labels[" + std::to_string(i) + "]': " + std::to_string(label));
    ds.labels[i] = label;
  }

  const std::size_t per_image = static_cast<std::size_t>(channels) * height * width;
  r.need(static_cast<std::size_t>(n) * per_image * 4, "images");
  ds.images.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<float> px(per_image);
    for (auto& x : px) x = r.f32("images");
    ds.images.emplace_back(ds.image_shape, std::move(px));
  }

  const std::uint32_t trailer_len = r.u32("trailer_length");
  const std::string text = r.str(trailer_len, "trailer");
  nlohmann::json trailer;
  try {
    trailer = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed JSON in field 'trailer': ") + e.what());
  }
  if (!trailer.is_object() || !trailer.contains("class_names") || !trailer["class_names"].is_array())
    throw FormatError("missing field 'trailer.class_names'");
  ds.class_names = trailer["class_names"].get<std::vector<std::string>>();
  if (!ds.class_names.empty() && ds.class_names.size() != static_cast<std::size_t>(ds.num_classes))
    throw FormatError("field 'trailer.class_names' length differs from num_classes");
  ds.provenance = trailer.value("provenance", nlohmann::json::object());

  while (!r.at_end()) {
    std::string tag = r.tag("section_tag");
    const std::uint64_t len = r.u64("section_length");
    r.need(len, "section_payload");
    const auto start = bytes.begin() + static_cast<std::ptrdiff_t>(r.position());
    out.sections[tag] = std::vector<std::uint8_t>(start, start + static_cast<std::ptrdiff_t>(len));
    r.skip(len, "section_payload");
  }
  return out;
}

LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes) { return decode_container(bytes).dataset; }

void write_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  write_file_bytes(path, encode_dataset(ds));
}

LabeledDataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file_bytes(path)); }

void write_pgm(const std::filesystem::path& path, const Tensor& image, std::size_t channel) {
  if (image.rank() != 3 || channel >= image.shape()[0]) throw InvalidArgument("write_pgm: need a (C, H, W) image");
  const std::size_t h = image.shape()[1], w = image.shape()[2];
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << w << " " << h << "\n255\n";
  for (std::size_t i = 0; i < h * w; ++i) {
    const float v = std::clamp(image[channel * h * w + i], 0.0f, 1.0f);
    out.put(static_cast<char>(std::lround(v * 255.0f)));
  }
}

}  // namespace dgd
