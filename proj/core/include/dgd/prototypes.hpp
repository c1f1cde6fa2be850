#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dgd/autoencoder.hpp"
#include "dgd/data.hpp"
#include "dgd/kmeans.hpp"

namespace dgd {

/// One K-means centroid in latent space, tagged with its class.
struct Prototype {
  int class_id = 0;
  int cluster_index = 0;
  int cluster_size = 0;
  std::vector<float> latent;

  friend bool operator==(const Prototype&, const Prototype&) = default;
};

struct PrototypeSet {
  std::vector<Prototype> prototypes;
  int num_classes = 0;
  std::vector<std::string> class_names;
  Shape image_shape;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Per class: encode every image, cluster into `ipc` groups, emit one
/// prototype per cluster. Ordered by (class_id, cluster_index).
PrototypeSet extract_prototypes(const Autoencoder& encoder, const LabeledDataset& ds, int ipc,
                                const KmeansOptions& opts, SeededRng& rng);

/// Dataset container whose images are the latents (shape 1 x 1 x d) and
/// labels the class ids, plus a "PRTO" section:
///   u32 count | u32 dim | u32 image C, H, W | per prototype:
///   u32 class_id | u32 cluster_index | u32 cluster_size | f32 latent x dim
void write_prototypes(const std::filesystem::path& path, const PrototypeSet& set);
PrototypeSet read_prototypes(const std::filesystem::path& path);

}  // namespace dgd
