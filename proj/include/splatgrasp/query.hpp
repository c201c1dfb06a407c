#pragma once

#include "splatgrasp/camera.hpp"
#include "splatgrasp/convex_hull.hpp"
#include "splatgrasp/efd.hpp"
#include "splatgrasp/gaussian_field.hpp"
#include "splatgrasp/image.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sg {

inline constexpr const char* kCanonicalPhrases[] = {"object", "things", "stuff", "texture"};

struct NamedEmbedding {
  std::string name;
  VecX vector;
};

/// "GGQE": u32 count, u32 d_clip, then per entry u16 name length, UTF-8 name, f32 x d_clip.
void save_embeddings(const std::filesystem::path& path, const std::vector<NamedEmbedding>& entries);
std::vector<NamedEmbedding> load_embeddings(const std::filesystem::path& path);

struct QueryEmbeddings {
  std::string name;
  VecX query;
  std::vector<VecX> canonical;

  /// Throws InvariantViolation unless every vector is unit and sizes agree.
  void validate() const;
  /// Picks `query_name` and the canonical phrases out of an embedding file.
  static QueryEmbeddings from_entries(const std::vector<NamedEmbedding>& entries, const std::string& query_name);
};

/// min_i exp(q) / (exp(q) + exp(c_i)) evaluated stably.
double relevance_score(double query_dot, std::span<const double> canonical_dots);

/// Per-pixel relevance of a rendered latent feature map.
ImageD relevance(const ImageD& feature_map, const Decoder& decoder, const QueryEmbeddings& embeddings);

struct LocalizeOptions {
  double threshold = 0.85;
  bool largest_component = true;
  double min_alpha = 0.5;  // less covered pixels are never selected
};

struct LocalizedView {
  Camera camera;
  ImageD relevance;
  Mask mask;      // relevance >= threshold
  Mask selected;  // largest component of the covered part of mask; these pixels are re-projected
  ImageD depth;   // rendered depth divided by alpha, 0 where alpha < min_alpha
};

struct Localization {
  std::vector<LocalizedView> views;
  std::vector<Vec3> points;  // world points of all masked pixels
  AlignedBox bbox;
  ConvexHull hull;
  bool hull_from_bbox = false;  // the points were degenerate; hull spans the bbox
};

/// Largest 4-connected component of a binary mask (ties go to the component
/// met first in row-major order).
Mask largest_component(const Mask& mask);

Localization localize(const GaussianField& field, std::span<const Camera> cameras, const Decoder& decoder,
                      const QueryEmbeddings& embeddings, const LocalizeOptions& options = {});

/// True iff the first row-major argmax of `relevance` lies inside `gt_mask`.
bool localization_hit(const ImageD& relevance, const Mask& gt_mask);

}  // namespace sg
