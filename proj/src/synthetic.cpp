#include "splatgrasp/dataset.hpp"
#include "splatgrasp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace sg {
namespace {

struct Hit {
  double t = INFINITY;  // camera-frame z of the hit
  Vec3 normal = Vec3::Zero();
  int object = -1;      // index into spec.objects, -2 for the table
};

Mat3 yaw_matrix(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

void intersect_sphere(const SyntheticObject& s, const Vec3& o, const Vec3& d, int index, Hit& hit) {
  const double r = s.size.x();
  const Vec3 oc = o - s.center;
  const double a = d.squaredNorm();
  const double b = 2.0 * d.dot(oc);
  const double c = oc.squaredNorm() - r * r;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return;
  const double t = (-b - std::sqrt(disc)) / (2.0 * a);
  if (t <= 0.0 || t >= hit.t) return;
  hit.t = t;
  hit.normal = (o + t * d - s.center).normalized();
  hit.object = index;
}

void intersect_box(const SyntheticObject& b, const Vec3& o, const Vec3& d, int index, Hit& hit) {
  const Mat3 r = yaw_matrix(b.yaw);
  const Vec3 lo = r.transpose() * (o - b.center);
  const Vec3 ld = r.transpose() * d;
  double t_enter = -INFINITY, t_exit = INFINITY;
  int axis = -1;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(ld[k]) < 1e-15) {
      if (std::abs(lo[k]) > b.size[k]) return;
      continue;
    }
    double t0 = (-b.size[k] - lo[k]) / ld[k];
    double t1 = (b.size[k] - lo[k]) / ld[k];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_enter) {
      t_enter = t0;
      axis = k;
    }
    t_exit = std::min(t_exit, t1);
  }
  if (axis < 0 || t_enter > t_exit || t_enter <= 0.0 || t_enter >= hit.t) return;
  Vec3 n = Vec3::Zero();
  n[axis] = ld[axis] > 0.0 ? -1.0 : 1.0;
  hit.t = t_enter;
  hit.normal = r * n;
  hit.object = index;
}

void intersect_table(double half, const Vec3& o, const Vec3& d, Hit& hit) {
  if (d.z() >= -1e-15) return;
  const double t = -o.z() / d.z();
  if (t <= 0.0 || t >= hit.t) return;
  const Vec3 p = o + t * d;
  if (std::abs(p.x()) > half || std::abs(p.y()) > half) return;
  hit.t = t;
  hit.normal = Vec3::UnitZ();
  hit.object = -2;
}

Camera make_camera(const SyntheticSceneSpec& spec, const RigidTransform& pose) {
  Camera cam;
  cam.width = spec.width;
  cam.height = spec.height;
  cam.intrinsics = {spec.focal, spec.focal, 0.5 * (spec.width - 1), 0.5 * (spec.height - 1)};
  cam.pose = pose;
  return cam;
}

struct PaletteEntry {
  const char* name;
  Vec3 color;
};

const PaletteEntry kPalette[] = {
    {"red", {0.85, 0.12, 0.1}},    {"green", {0.15, 0.7, 0.2}},    {"blue", {0.12, 0.25, 0.85}},
    {"yellow", {0.9, 0.8, 0.1}},   {"purple", {0.55, 0.2, 0.7}},   {"orange", {0.95, 0.5, 0.08}},
    {"cyan", {0.1, 0.75, 0.8}},    {"white", {0.92, 0.92, 0.9}},
};

}  // namespace

void SyntheticSceneSpec::validate() const {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  if (!(focal > 0.0)) throw Error(ErrorCode::BadIntrinsics, "focal length must be positive");
  if (ring_views < 0 || top_views < 0 || ring_views + top_views < 2) {
    throw Error(ErrorCode::InvalidArgument, "at least two views are required");
  }
  if (objects.empty()) throw Error(ErrorCode::InvalidArgument, "a synthetic scene needs at least one object");
  if (objects.size() >= 65535) throw Error(ErrorCode::InvalidArgument, "too many objects");
  const std::size_t vectors = objects.size() + (table && annotate_table ? 1 : 0) + std::size(kCanonicalPhrases);
  if (d_clip <= 0 || static_cast<std::size_t>(d_clip) < vectors) {
    throw Error(ErrorCode::InvalidArgument, "d_clip must be at least the number of embeddings (" +
                                                std::to_string(vectors) + ")");
  }
  if (depth_noise < 0.0 || rgb_noise < 0.0) throw Error(ErrorCode::InvalidArgument, "noise must be non-negative");
  for (const SyntheticObject& o : objects) {
    if (o.name.empty()) throw Error(ErrorCode::InvalidArgument, "object names must not be empty");
    for (const char* c : kCanonicalPhrases) {
      if (o.name == c) throw Error(ErrorCode::InvalidArgument, "object name '" + o.name + "' is reserved");
    }
    if (o.name == "table") throw Error(ErrorCode::InvalidArgument, "object name 'table' is reserved");
    if (!(o.size.minCoeff() > 0.0)) throw Error(ErrorCode::InvalidArgument, "object '" + o.name + "' has no extent");
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      if (objects[i].name == objects[j].name) {
        throw Error(ErrorCode::InvalidArgument, "duplicate object name '" + objects[i].name + "'");
      }
    }
  }
}

SyntheticSceneSpec random_scene_spec(int count, std::uint64_t seed) {
  if (count <= 0) throw Error(ErrorCode::InvalidArgument, "object count must be positive");
  SyntheticSceneSpec spec;
  spec.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<int> palette(std::size(kPalette));
  for (std::size_t i = 0; i < palette.size(); ++i) palette[i] = static_cast<int>(i);
  std::shuffle(palette.begin(), palette.end(), rng);
  const double area = 0.2;
  std::vector<std::pair<Vec3, double>> footprints;
  for (int k = 0; k < count; ++k) {
    SyntheticObject obj;
    const PaletteEntry& pe = kPalette[palette[k % palette.size()]];
    obj.color = pe.color;
    obj.shape = u01(rng) < 0.5 ? ShapeKind::Sphere : ShapeKind::Box;
    double radius = 0.0;
    if (obj.shape == ShapeKind::Sphere) {
      const double r = 0.03 + 0.02 * u01(rng);
      obj.size = Vec3::Constant(r);
      radius = r;
    } else {
      obj.size = Vec3(0.025 + 0.02 * u01(rng), 0.025 + 0.02 * u01(rng), 0.03 + 0.03 * u01(rng));
      obj.yaw = std::numbers::pi * u01(rng);
      radius = obj.size.head<2>().norm();
    }
    obj.name = std::string(pe.name) + (obj.shape == ShapeKind::Sphere ? "_ball" : "_block");
    if (k >= static_cast<int>(palette.size())) obj.name += "_" + std::to_string(k / palette.size() + 1);
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const Vec3 c(area * (2.0 * u01(rng) - 1.0), area * (2.0 * u01(rng) - 1.0), 0.0);
      placed = std::all_of(footprints.begin(), footprints.end(), [&](const auto& f) {
        return (f.first - c).norm() > f.second + radius + 0.02;
      });
      if (placed) {
        obj.center = c;
        obj.center.z() = obj.size.z();
        footprints.emplace_back(c, radius);
      }
    }
    if (!placed) throw Error(ErrorCode::InvalidArgument, "cannot place " + std::to_string(count) + " objects");
    spec.objects.push_back(obj);
  }
  return spec;
}

Scene generate_synthetic(const SyntheticSceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed ^ 0x5eed5eedULL);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<RigidTransform> poses;
  for (int i = 0; i < spec.ring_views; ++i) {
    const double a = 2.0 * std::numbers::pi * i / spec.ring_views;
    const Vec3 eye(spec.ring_radius * std::cos(a), spec.ring_radius * std::sin(a), spec.ring_height);
    poses.push_back(look_at(eye, spec.target));
  }
  for (int i = 0; i < spec.top_views; ++i) {
    const double a = 2.0 * std::numbers::pi * i / spec.top_views;
    const Vec3 eye = spec.target + Vec3(0.12 * std::cos(a), 0.12 * std::sin(a), spec.top_height);
    poses.push_back(look_at(eye, spec.target, Vec3(std::cos(a), std::sin(a), 0.0)));
  }

  const int k_objects = static_cast<int>(spec.objects.size());
  const bool table_id = spec.table && spec.annotate_table;
  const std::uint16_t table_label = static_cast<std::uint16_t>(k_objects + 1);
  const Vec3 light = spec.light_direction.normalized();

  // Orthonormal embeddings: objects, then the table, then the canonical phrases.
  const int n_vec = k_objects + (table_id ? 1 : 0) + static_cast<int>(std::size(kCanonicalPhrases));
  MatX gauss(spec.d_clip, n_vec);
  for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = normal(rng);
  const MatX q = Eigen::HouseholderQR<MatX>(gauss).householderQ() * MatX::Identity(spec.d_clip, n_vec);
  Scene scene;
  std::map<std::uint16_t, VecX> features;
  for (int k = 0; k < n_vec; ++k) {
    NamedEmbedding e;
    e.vector = q.col(k);
    if (k < k_objects) {
      e.name = spec.objects[k].name;
      features[static_cast<std::uint16_t>(k + 1)] = e.vector;
      scene.manifest.queries.push_back({e.name, static_cast<std::uint16_t>(k + 1)});
    } else if (table_id && k == k_objects) {
      e.name = "table";
      features[table_label] = e.vector;
    } else {
      e.name = kCanonicalPhrases[k - k_objects - (table_id ? 1 : 0)];
    }
    scene.embeddings.push_back(std::move(e));
  }

  for (std::size_t v = 0; v < poses.size(); ++v) {
    TrainingView tv;
    tv.view.id = "view_" + std::to_string(v);
    tv.view.camera = make_camera(spec, poses[v]);
    const Camera& cam = tv.view.camera;
    tv.view.rgb = ImageD(spec.width, spec.height, 3);
    tv.view.depth = ImageD(spec.width, spec.height, 1);
    tv.annotations.view_id = tv.view.id;
    tv.annotations.instance_map = IdMap(spec.width, spec.height, 1);
    tv.annotations.features = features;
    IdMap gt(spec.width, spec.height, 1);
    const Vec3 o = cam.pose.translation;
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const Vec3 d = cam.pose.rotation * Vec3((x - cam.intrinsics.cx) / cam.intrinsics.fx,
                                                (y - cam.intrinsics.cy) / cam.intrinsics.fy, 1.0);
        Hit hit;
        for (int k = 0; k < k_objects; ++k) {
          const SyntheticObject& obj = spec.objects[k];
          if (obj.shape == ShapeKind::Sphere) {
            intersect_sphere(obj, o, d, k, hit);
          } else {
            intersect_box(obj, o, d, k, hit);
          }
        }
        if (spec.table) intersect_table(spec.table_half_extent, o, d, hit);
        if (hit.object == -1) continue;
        const Vec3 base = hit.object >= 0 ? spec.objects[hit.object].color : spec.table_color;
        const double shade = spec.ambient + (1.0 - spec.ambient) * std::max(0.0, hit.normal.dot(light));
        for (int c = 0; c < 3; ++c) {
          double value = base[c] * shade;
          if (spec.rgb_noise > 0.0) value += spec.rgb_noise * normal(rng);
          tv.view.rgb.at(x, y, c) = std::clamp(value, 0.0, 1.0);
        }
        double z = hit.t;
        if (spec.depth_noise > 0.0) z = std::max(1e-3, z + spec.depth_noise * normal(rng));
        tv.view.depth.at(x, y) = z;
        if (hit.object >= 0) {
          tv.annotations.instance_map.at(x, y) = static_cast<std::uint16_t>(hit.object + 1);
          gt.at(x, y) = static_cast<std::uint16_t>(hit.object + 1);
        } else if (table_id) {
          tv.annotations.instance_map.at(x, y) = table_label;
        }
      }
    }
    scene.views.push_back(std::move(tv));
    scene.gt_masks.push_back(std::move(gt));
  }
  scene.manifest.frame_id = "robot_base";
  scene.manifest.depth_scale = 1.0;
  scene.manifest.max_depth = 10.0;
  return scene;
}

}  // namespace sg
