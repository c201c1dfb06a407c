#include "splatgrasp/dataset.hpp"
#include "splatgrasp/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <exception>
#include <fstream>

namespace sg {
namespace {

constexpr double kPoseTolerance = 1e-5;

using nlohmann::json;

class ManifestReader {
 public:
  explicit ManifestReader(std::string file) : file_(std::move(file)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what,
                         ErrorCode code = ErrorCode::ParseError) const {
    throw Error(code, "'" + file_ + "': " + field + ": " + what);
  }

  const json& require(const json& obj, const std::string& key, const std::string& where) const {
    if (!obj.is_object() || !obj.contains(key)) fail(where + key, "missing");
    return obj.at(key);
  }

  double number(const json& obj, const std::string& key, const std::string& where) const {
    const json& v = require(obj, key, where);
    if (!v.is_number()) fail(where + key, "expected a number");
    return v.get<double>();
  }

  int integer(const json& obj, const std::string& key, const std::string& where) const {
    const json& v = require(obj, key, where);
    if (!v.is_number_integer()) fail(where + key, "expected an integer");
    return v.get<int>();
  }

  std::string string(const json& obj, const std::string& key, const std::string& where) const {
    const json& v = require(obj, key, where);
    if (!v.is_string()) fail(where + key, "expected a string");
    return v.get<std::string>();
  }

  std::string optional_string(const json& obj, const std::string& key, const std::string& where) const {
    if (!obj.contains(key) || obj.at(key).is_null()) return {};
    return string(obj, key, where);
  }

 private:
  std::string file_;
};

std::filesystem::path resolve(const std::filesystem::path& root, const std::string& rel) {
  const std::filesystem::path p(rel);
  return p.is_absolute() ? p : root / p;
}

}  // namespace

std::vector<CameraView> Scene::camera_views() const {
  std::vector<CameraView> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(v.view);
  return out;
}

std::vector<Camera> Scene::cameras() const {
  std::vector<Camera> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(v.view.camera);
  return out;
}

SceneManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "file not found: '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "'" + path.string() + "': " + e.what());
  }
  const ManifestReader rd(path.string());
  SceneManifest m;
  if (!doc.is_object()) rd.fail("<root>", "expected an object");
  const std::string schema = rd.string(doc, "schema", "");
  if (schema != kManifestSchema) rd.fail("schema", "unsupported schema '" + schema + "'");
  if (doc.contains("frame_id")) m.frame_id = rd.string(doc, "frame_id", "");
  if (doc.contains("depth_scale")) m.depth_scale = rd.number(doc, "depth_scale", "");
  if (!(m.depth_scale > 0.0)) rd.fail("depth_scale", "must be positive", ErrorCode::InvariantViolation);
  if (doc.contains("max_depth")) m.max_depth = rd.number(doc, "max_depth", "");
  if (!(m.max_depth > 0.0)) rd.fail("max_depth", "must be positive", ErrorCode::InvariantViolation);
  m.embeddings = rd.optional_string(doc, "embeddings", "");

  const json& views = rd.require(doc, "views", "");
  if (!views.is_array() || views.empty()) rd.fail("views", "expected a non-empty array");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const std::string where = "views[" + std::to_string(i) + "].";
    const json& v = views[i];
    ViewRecord r;
    r.id = v.contains("id") ? rd.string(v, "id", where) : std::to_string(i);
    r.width = rd.integer(v, "width", where);
    r.height = rd.integer(v, "height", where);
    if (r.width <= 0 || r.height <= 0) rd.fail(where + "width", "resolution must be positive");
    const json& k = rd.require(v, "intrinsics", where);
    r.intrinsics.fx = rd.number(k, "fx", where + "intrinsics.");
    r.intrinsics.fy = rd.number(k, "fy", where + "intrinsics.");
    r.intrinsics.cx = rd.number(k, "cx", where + "intrinsics.");
    r.intrinsics.cy = rd.number(k, "cy", where + "intrinsics.");
    if (!(r.intrinsics.fx > 0.0)) rd.fail(where + "intrinsics.fx", "must be positive", ErrorCode::BadIntrinsics);
    if (!(r.intrinsics.fy > 0.0)) rd.fail(where + "intrinsics.fy", "must be positive", ErrorCode::BadIntrinsics);
    const json& pose = rd.require(v, "pose", where);
    if (!pose.is_array() || pose.size() != 16) rd.fail(where + "pose", "expected 16 numbers (row-major 4x4)");
    std::array<double, 16> values{};
    for (std::size_t j = 0; j < 16; ++j) {
      if (!pose[j].is_number()) rd.fail(where + "pose", "expected 16 numbers (row-major 4x4)");
      values[j] = pose[j].get<double>();
    }
    r.pose = RigidTransform::from_row_major(values);
    if (!r.pose.is_rigid(kPoseTolerance)) rd.fail(where + "pose", "rotation is not orthonormal", ErrorCode::InvariantViolation);
    r.rgb = rd.string(v, "rgb", where);
    r.depth = rd.string(v, "depth", where);
    r.instance_map = rd.optional_string(v, "instance_map", where);
    r.instance_features = rd.optional_string(v, "instance_features", where);
    if (r.instance_map.empty() != r.instance_features.empty()) {
      rd.fail(where + "instance_features", "instance_map and instance_features go together");
    }
    r.gt_mask = rd.optional_string(v, "gt_mask", where);
    m.views.push_back(std::move(r));
  }
  if (doc.contains("queries")) {
    const json& qs = doc.at("queries");
    if (!qs.is_array()) rd.fail("queries", "expected an array");
    for (std::size_t i = 0; i < qs.size(); ++i) {
      const std::string where = "queries[" + std::to_string(i) + "].";
      QueryRecord q;
      q.name = rd.string(qs[i], "name", where);
      const int id = rd.integer(qs[i], "gt_id", where);
      if (id <= 0 || id > 65535) rd.fail(where + "gt_id", "must lie in [1, 65535]");
      q.gt_id = static_cast<std::uint16_t>(id);
      m.queries.push_back(q);
    }
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const SceneManifest& m) {
  json doc;
  doc["schema"] = kManifestSchema;
  doc["frame_id"] = m.frame_id;
  doc["depth_scale"] = m.depth_scale;
  doc["max_depth"] = m.max_depth;
  if (!m.embeddings.empty()) doc["embeddings"] = m.embeddings;
  doc["views"] = json::array();
  for (const ViewRecord& r : m.views) {
    json v;
    v["id"] = r.id;
    v["width"] = r.width;
    v["height"] = r.height;
    v["intrinsics"] = {{"fx", r.intrinsics.fx}, {"fy", r.intrinsics.fy}, {"cx", r.intrinsics.cx},
                       {"cy", r.intrinsics.cy}};
    const auto pose = r.pose.row_major();
    v["pose"] = std::vector<double>(pose.begin(), pose.end());
    v["rgb"] = r.rgb;
    v["depth"] = r.depth;
    if (!r.instance_map.empty()) v["instance_map"] = r.instance_map;
    if (!r.instance_features.empty()) v["instance_features"] = r.instance_features;
    if (!r.gt_mask.empty()) v["gt_mask"] = r.gt_mask;
    doc["views"].push_back(v);
  }
  if (!m.queries.empty()) {
    doc["queries"] = json::array();
    for (const QueryRecord& q : m.queries) doc["queries"].push_back({{"name", q.name}, {"gt_id", q.gt_id}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

Scene load_scene(const std::filesystem::path& manifest_path) {
  Scene scene;
  scene.manifest = read_manifest(manifest_path);
  const std::filesystem::path root = manifest_path.parent_path();
  const SceneManifest& m = scene.manifest;
  const std::size_t n = m.views.size();
  scene.views.resize(n);
  scene.gt_masks.resize(n);
  std::vector<std::exception_ptr> failures(n);
  auto load_view = [&](std::size_t i) {
    const ViewRecord& r = m.views[i];
    const std::string where = "'" + manifest_path.string() + "': views[" + std::to_string(i) + "]";
    auto check_size = [&](int w, int h, const std::string& field) {
      if (w != r.width || h != r.height) {
        throw Error(ErrorCode::ShapeMismatch, where + "." + field + ": image is " + std::to_string(w) + "x" +
                                                  std::to_string(h) + ", manifest says " + std::to_string(r.width) +
                                                  "x" + std::to_string(r.height));
      }
    };
    TrainingView& tv = scene.views[i];
    tv.view.id = r.id;
    tv.view.camera = Camera{r.width, r.height, r.intrinsics, r.pose};
    tv.view.rgb = read_png_rgb(resolve(root, r.rgb));
    check_size(tv.view.rgb.width(), tv.view.rgb.height(), "rgb");
    const auto raw_depth = read_png_gray16(resolve(root, r.depth));
    check_size(raw_depth.width(), raw_depth.height(), "depth");
    tv.view.depth = depth_from_u16(raw_depth, m.depth_scale);
    try {
      validate_view(tv.view, m.max_depth, kPoseTolerance);
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.what());
    }
    tv.annotations.view_id = r.id;
    if (!r.instance_map.empty()) {
      tv.annotations.instance_map = read_png_gray16(resolve(root, r.instance_map));
      check_size(tv.annotations.instance_map.width(), tv.annotations.instance_map.height(), "instance_map");
      tv.annotations.features = read_instance_features(resolve(root, r.instance_features));
      try {
        tv.annotations.validate();
      } catch (const Error& e) {
        throw Error(e.code(), where + ": " + e.what());
      }
    }
    if (!r.gt_mask.empty()) {
      scene.gt_masks[i] = read_png_gray16(resolve(root, r.gt_mask));
      check_size(scene.gt_masks[i].width(), scene.gt_masks[i].height(), "gt_mask");
    }
  };
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      load_view(static_cast<std::size_t>(i));
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  if (!m.embeddings.empty()) scene.embeddings = load_embeddings(resolve(root, m.embeddings));
  for (std::size_t i = 0; i < m.queries.size(); ++i) {
    const bool found = std::any_of(scene.embeddings.begin(), scene.embeddings.end(),
                                   [&](const NamedEmbedding& e) { return e.name == m.queries[i].name; });
    if (!found) {
      throw Error(ErrorCode::InvariantViolation, "'" + manifest_path.string() + "': queries[" + std::to_string(i) +
                                                     "].name: '" + m.queries[i].name + "' has no embedding");
    }
  }
  return scene;
}

std::filesystem::path write_scene(const std::filesystem::path& dir, const Scene& scene) {
  std::filesystem::create_directories(dir / "views");
  SceneManifest m = scene.manifest;
  if (m.views.size() != scene.views.size()) {
    m.views.assign(scene.views.size(), ViewRecord{});
  }
  for (std::size_t i = 0; i < scene.views.size(); ++i) {
    const TrainingView& tv = scene.views[i];
    ViewRecord& r = m.views[i];
    r.id = tv.view.id.empty() ? std::to_string(i) : tv.view.id;
    r.width = tv.view.camera.width;
    r.height = tv.view.camera.height;
    r.intrinsics = tv.view.camera.intrinsics;
    r.pose = tv.view.camera.pose;
    const std::string stem = "views/" + r.id;
    r.rgb = stem + "_rgb.png";
    r.depth = stem + "_depth.png";
    write_png_rgb(dir / r.rgb, tv.view.rgb);
    write_png_gray16(dir / r.depth, depth_to_u16(tv.view.depth, m.depth_scale));
    r.instance_map.clear();
    r.instance_features.clear();
    if (!tv.annotations.instance_map.empty()) {
      r.instance_map = stem + "_instances.png";
      r.instance_features = stem + "_features.ggif";
      write_png_gray16(dir / r.instance_map, tv.annotations.instance_map);
      write_instance_features(dir / r.instance_features, tv.annotations.features);
    }
    r.gt_mask.clear();
    if (i < scene.gt_masks.size() && !scene.gt_masks[i].empty()) {
      r.gt_mask = stem + "_gt.png";
      write_png_gray16(dir / r.gt_mask, scene.gt_masks[i]);
    }
  }
  m.embeddings.clear();
  if (!scene.embeddings.empty()) {
    m.embeddings = "embeddings.ggqe";
    save_embeddings(dir / m.embeddings, scene.embeddings);
  }
  const auto path = dir / "scene.json";
  write_manifest(path, m);
  return path;
}

}  // namespace sg
