#include "dgd/prototypes.hpp"

#include "dgd/binary_io.hpp"
#include "dgd/dataset_io.hpp"
#include "dgd/rng.hpp"

namespace dgd {

PrototypeSet extract_prototypes(const Autoencoder& encoder, const LabeledDataset& ds, int ipc,
                                const KmeansOptions& opts, SeededRng& rng) {
  ds.validate();
  if (ipc < 1) throw InvalidArgument("extract_prototypes: ipc must be >= 1");
  if (ds.image_shape != encoder.image_shape())
    throw InvalidArgument("extract_prototypes: encoder image shape differs from the dataset");
  PrototypeSet out;
  out.num_classes = ds.num_classes;
  out.class_names = ds.class_names;
  out.image_shape = ds.image_shape;
  for (int c = 0; c < ds.num_classes; ++c) {
    const auto idx = ds.indices_of_class(c);
    if (idx.size() < static_cast<std::size_t>(ipc))
      throw InvalidArgument("extract_prototypes: class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                            " samples, fewer than ipc = " + std::to_string(ipc));
    std::vector<Tensor> images;
    images.reserve(idx.size());
    for (auto i : idx) images.push_back(ds.images[i]);
    const Mat<float> z = encoder.encode_batch(images);
    std::vector<Point> points(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      points[i].assign(z.col(static_cast<Eigen::Index>(i)).data(), z.col(static_cast<Eigen::Index>(i)).data() + z.rows());

    SeededRng class_rng = rng.fork({static_cast<std::uint64_t>(c)});
    const auto km = kmeans(points, ipc, opts, class_rng);
    std::vector<int> sizes(ipc, 0);
    for (int a : km.assignments) ++sizes[a];
    for (int k = 0; k < ipc; ++k) {
      Prototype p;
      p.class_id = c;
      p.cluster_index = k;
      p.cluster_size = sizes[k];
      p.latent.assign(km.centroids[k].begin(), km.centroids[k].end());
      out.prototypes.push_back(std::move(p));
    }
  }
  out.provenance = {{"ipc", ipc}, {"restarts", opts.restarts}, {"max_iters", opts.max_iters}, {"seed", rng.seed()}};
  return out;
}

void write_prototypes(const std::filesystem::path& path, const PrototypeSet& set) {
  if (set.prototypes.empty()) throw InvalidArgument("write_prototypes: empty prototype set");
  if (set.image_shape.size() != 3) throw InvalidArgument("write_prototypes: image shape must be (C, H, W)");
  const std::size_t dim = set.prototypes.front().latent.size();
  LabeledDataset ds;
  ds.image_shape = {1, 1, dim};
  ds.num_classes = set.num_classes;
  ds.class_names = set.class_names;
  ds.provenance = set.provenance;
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(set.prototypes.size()));
  w.u32(static_cast<std::uint32_t>(dim));
  for (auto d : set.image_shape) w.u32(static_cast<std::uint32_t>(d));
  for (const auto& p : set.prototypes) {
    if (p.latent.size() != dim) throw InvalidArgument("write_prototypes: latents differ in dimension");
    ds.add(Tensor(ds.image_shape, p.latent), p.class_id);
    w.u32(static_cast<std::uint32_t>(p.class_id));
    w.u32(static_cast<std::uint32_t>(p.cluster_index));
    w.u32(static_cast<std::uint32_t>(p.cluster_size));
    for (float x : p.latent) w.f32(x);
  }
  write_file_bytes(path, encode_dataset(ds, {{"PRTO", w.take()}}));
}

PrototypeSet read_prototypes(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  auto container = decode_container(bytes);
  const auto it = container.sections.find("PRTO");
  if (it == container.sections.end()) throw FormatError("missing section 'PRTO'");
  ByteReader r(it->second);
  PrototypeSet set;
  set.num_classes = container.dataset.num_classes;
  set.class_names = container.dataset.class_names;
  set.provenance = container.dataset.provenance;
  const auto count = r.u32("PRTO.count");
  const auto dim = r.u32("PRTO.dim");
  for (int k = 0; k < 3; ++k) set.image_shape.push_back(r.u32("PRTO.image_shape"));
  if (count != container.dataset.size()) throw FormatError("field 'PRTO.count' disagrees with num_images");
  for (std::uint32_t i = 0; i < count; ++i) {
    Prototype p;
    p.class_id = static_cast<int>(r.u32("PRTO.class_id"));
    p.cluster_index = static_cast<int>(r.u32("PRTO.cluster_index"));
    p.cluster_size = static_cast<int>(r.u32("PRTO.cluster_size"));
    if (p.class_id >= set.num_classes) throw FormatError("field 'PRTO.class_id' out of range");
    r.need(static_cast<std::size_t>(dim) * 4, "PRTO.latent");
    p.latent.resize(dim);
    for (auto& x : p.latent) x = r.f32("PRTO.latent");
    set.prototypes.push_back(std::move(p));
  }
  if (!r.at_end()) throw FormatError("unexpected trailing bytes in section 'PRTO'");
  return set;
}

}  // namespace dgd
