#include "dgd/checkpoint.hpp"

#include "dgd/binary_io.hpp"
#include "dgd/numerics.hpp"

namespace dgd {

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  require_finite(ckpt.parameters, "encode_checkpoint: parameters");
  ByteWriter w;
  w.tag("MDLC");
  w.u16(kCheckpointFormatVersion);
  const std::string text = ckpt.descriptor.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.str(text);
  w.u64(ckpt.parameters.size());
  for (float p : ckpt.parameters) w.f32(p);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_tag("MDLC", "magic");
  const auto version = r.u16("version");
  if (version != kCheckpointFormatVersion)
    throw FormatError("unsupported value in field 'version': " + std::to_string(version));
  Checkpoint ckpt;
  const auto len = r.u32("descriptor_length");
  try {
    ckpt.descriptor = nlohmann::json::parse(r.str(len, "descriptor"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed JSON in field 'descriptor': ") + e.what());
  }
  const auto count = r.u64("parameter_count");
  r.need(count * 4, "parameters");
  ckpt.parameters.resize(count);
  for (auto& p : ckpt.parameters) p = r.f32("parameters");
  if (!r.at_end()) throw FormatError("unexpected trailing bytes after field 'parameters'");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

void require_architecture(const Checkpoint& ckpt, const std::string& expected) {
  const auto it = ckpt.descriptor.find("architecture");
  if (it == ckpt.descriptor.end() || !it->is_string() || it->get<std::string>() != expected)
    throw FormatError("field 'architecture' is not \"" + expected + "\"");
}

void append_parameters(Mlp<float>& net, std::vector<float>& out) {
  for (auto block : net.parameters()) out.insert(out.end(), block.begin(), block.end());
}

void load_parameters(Mlp<float>& net, std::span<const float> params, std::size_t* offset) {
  for (auto block : net.parameters()) {
    if (*offset + block.size() > params.size()) throw FormatError("field 'parameters' is shorter than the network");
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(*offset), block.size(), block.begin());
    *offset += block.size();
  }
}

}  // namespace dgd
