#pragma once

#include "splatgrasp/camera.hpp"
#include "splatgrasp/efd.hpp"
#include "splatgrasp/gaussian_field.hpp"
#include "splatgrasp/image.hpp"
#include "splatgrasp/query.hpp"
#include "splatgrasp/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sg {

// ---- image files -------------------------------------------------------

/// 8-bit RGB; values are clamped to [0,1] and rounded.
void write_png_rgb(const std::filesystem::path& path, const ImageD& rgb);
ImageD read_png_rgb(const std::filesystem::path& path);
void write_png_gray16(const std::filesystem::path& path, const Image<std::uint16_t>& img);
Image<std::uint16_t> read_png_gray16(const std::filesystem::path& path);
void write_png_gray8(const std::filesystem::path& path, const Image<std::uint8_t>& img);

/// Metric depth <-> 16-bit millimeters (0 = invalid). `scale` is millimeters per stored unit.
Image<std::uint16_t> depth_to_u16(const ImageD& depth_m, double scale = 1.0);
ImageD depth_from_u16(const Image<std::uint16_t>& raw, double scale = 1.0);
/// Normal map exported as (n + 1) / 2.
ImageD normals_to_rgb(const ImageD& normals);
/// Relevance heatmap colors: red = s, green = 1 - |2s - 1|, blue = 1 - s.
ImageD relevance_colormap(const ImageD& relevance);

/// "GGFM": u32 H, u32 W, u32 d, then f32 values in H x W x d order.
void write_feature_map(const std::filesystem::path& path, const ImageD& features);
ImageD read_feature_map(const std::filesystem::path& path);

/// "GGIF": u32 mask_count, u32 d_clip, then per mask u32 id and f32 x d_clip.
void write_instance_features(const std::filesystem::path& path, const std::map<std::uint16_t, VecX>& features);
std::map<std::uint16_t, VecX> read_instance_features(const std::filesystem::path& path);

// ---- scenes ------------------------------------------------------------

inline constexpr const char* kManifestSchema = "ggs-scene/1";

struct ViewRecord {
  std::string id;
  int width = 0;
  int height = 0;
  Intrinsics intrinsics;
  RigidTransform pose;  // camera to world
  std::string rgb;
  std::string depth;
  std::string instance_map;       // optional
  std::string instance_features;  // optional
  std::string gt_mask;            // optional ground-truth object ids
};

/// Maps a query name in the embedding file to its ground-truth id.
struct QueryRecord {
  std::string name;
  std::uint16_t gt_id = 0;
};

struct SceneManifest {
  std::string frame_id = "robot_base";
  double depth_scale = 1.0;  // millimeters per stored depth unit
  double max_depth = 10.0;   // meters
  std::string embeddings;
  std::vector<ViewRecord> views;
  std::vector<QueryRecord> queries;
};

SceneManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const SceneManifest& manifest);

struct Scene {
  SceneManifest manifest;
  std::vector<TrainingView> views;
  std::vector<IdMap> gt_masks;  // one per view, empty image when absent
  std::vector<NamedEmbedding> embeddings;

  std::vector<CameraView> camera_views() const;
  std::vector<Camera> cameras() const;
};

/// Loads and validates every file the manifest references; paths are
/// relative to the manifest's directory.
Scene load_scene(const std::filesystem::path& manifest_path);
/// Writes all files under `dir` with fixed names plus `dir/scene.json`.
/// Returns the manifest path.
std::filesystem::path write_scene(const std::filesystem::path& dir, const Scene& scene);

// ---- synthetic scenes --------------------------------------------------

enum class ShapeKind { Sphere, Box };

struct SyntheticObject {
  std::string name;
  ShapeKind shape = ShapeKind::Sphere;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Constant(0.05);  // sphere: size.x() is the radius; box: half extents
  double yaw = 0.0;                  // box rotation about world z
  Vec3 color = Vec3::Constant(0.5);
};

struct SyntheticSceneSpec {
  std::vector<SyntheticObject> objects;
  bool table = true;
  bool annotate_table = true;
  double table_half_extent = 0.35;
  Vec3 table_color = Vec3(0.55, 0.5, 0.42);
  Vec3 light_direction = Vec3(0.3, -0.4, 1.0);  // towards the light
  double ambient = 0.45;

  int ring_views = 10;
  int top_views = 2;
  double ring_radius = 0.75;
  double ring_height = 0.55;
  double top_height = 0.8;
  Vec3 target = Vec3(0.0, 0.0, 0.04);
  int width = 96;
  int height = 72;
  double focal = 100.0;

  int d_clip = 512;
  double depth_noise = 0.0;  // meters, Gaussian
  double rgb_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// `count` random spheres and boxes resting on the table, non-overlapping.
SyntheticSceneSpec random_scene_spec(int count, std::uint64_t seed);

/// Ray-cast RGB-D views of the analytic shapes, instance maps, ground-truth
/// masks and orthonormal embeddings (objects, table and canonical phrases).
Scene generate_synthetic(const SyntheticSceneSpec& spec);

// ---- evaluation --------------------------------------------------------

struct QueryEvaluation {
  std::string name;
  int hits = 0;
  int views = 0;  // views where the object is visible
  std::size_t intersection = 0;
  std::size_t union_ = 0;
  double iou = 0.0;
  double latency_s = 0.0;
};

struct EvalReport {
  std::vector<QueryEvaluation> queries;
  double mean_iou = 0.0;
  double hit_rate = 0.0;
  double mean_latency_s = 0.0;
  double max_latency_s = 0.0;
};

struct EvalOptions {
  double threshold = 0.85;
  double min_alpha = 0.5;  // relevance of less covered pixels counts as 0
  int latency_width = 640;
  int latency_height = 480;
  bool measure_latency = true;
};

/// IoU of thresholded relevance vs ground truth pooled over all views, hit
/// rate over views where the object is visible, and wall-clock latency of one
/// render + relevance pass at the latency resolution.
EvalReport evaluate(const GaussianField& field, const Decoder& decoder, const Scene& scene,
                    const EvalOptions& options = {});

}  // namespace sg
