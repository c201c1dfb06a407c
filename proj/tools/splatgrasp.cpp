// Command-line driver: synth -> init -> train -> query -> grasp-filter,
// plus render, update and eval.

#include "splatgrasp/dataset.hpp"
#include "splatgrasp/error.hpp"
#include "splatgrasp/gaussian_field.hpp"
#include "splatgrasp/geometry.hpp"
#include "splatgrasp/grasp.hpp"
#include "splatgrasp/query.hpp"
#include "splatgrasp/rasterizer.hpp"
#include "splatgrasp/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sg;

namespace {

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 json_vec(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ParseError, where + ": expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "file not found: '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "'" + path.string() + "': " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
}

RigidTransform parse_pose(const std::vector<double>& values, const std::string& what) {
  if (values.size() != 16) throw Error(ErrorCode::InvalidArgument, what + " needs 16 numbers (row-major 4x4)");
  std::array<double, 16> m{};
  std::copy(values.begin(), values.end(), m.begin());
  const RigidTransform t = RigidTransform::from_row_major(m);
  if (!t.is_rigid(1e-6)) throw Error(ErrorCode::InvariantViolation, what + " is not a rigid transform");
  return t;
}

/// {"transform": [16 numbers]} or a bare array of 16 numbers.
RigidTransform read_transform(const fs::path& path) {
  const json doc = read_json(path);
  const json& arr = doc.is_object() ? doc.at("transform") : doc;
  try {
    return parse_pose(arr.get<std::vector<double>>(), "'" + path.string() + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "'" + path.string() + "': " + e.what());
  }
}

json localization_json(const Localization& loc, const std::string& query, double threshold,
                       const std::string& frame_id) {
  json doc;
  doc["query"] = query;
  doc["frame_id"] = frame_id;
  doc["threshold"] = threshold;
  doc["point_count"] = loc.points.size();
  if (!loc.bbox.empty()) doc["bbox"] = {{"min", vec_json(loc.bbox.min)}, {"max", vec_json(loc.bbox.max)}};
  doc["hull_from_bbox"] = loc.hull_from_bbox;
  json verts = json::array(), faces = json::array();
  for (const Vec3& v : loc.hull.vertices()) verts.push_back(vec_json(v));
  for (const auto& f : loc.hull.faces()) faces.push_back({f[0], f[1], f[2]});
  doc["hull"] = {{"vertices", verts}, {"faces", faces}};
  return doc;
}

ConvexHull read_hull(const fs::path& path) {
  const json doc = read_json(path);
  try {
    const json& h = doc.at("hull");
    std::vector<Vec3> verts;
    for (const json& v : h.at("vertices")) verts.push_back(json_vec(v, "'" + path.string() + "' hull vertex"));
    std::vector<std::array<int, 3>> faces;
    for (const json& f : h.at("faces")) faces.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});
    if (faces.empty()) throw Error(ErrorCode::InvalidArgument, "'" + path.string() + "': hull is empty");
    return ConvexHull(std::move(verts), std::move(faces));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "'" + path.string() + "': " + e.what());
  }
}

std::vector<int> select_views(const Scene& scene, const std::vector<std::string>& ids) {
  std::vector<int> out;
  for (const std::string& id : ids) {
    int found = -1;
    for (std::size_t i = 0; i < scene.views.size(); ++i) {
      if (scene.views[i].view.id == id) found = static_cast<int>(i);
    }
    if (found < 0) throw Error(ErrorCode::InvalidArgument, "no view with id '" + id + "'");
    out.push_back(found);
  }
  return out;
}

TrainConfig make_config(const std::string& path) {
  return path.empty() ? TrainConfig{} : load_train_config(path);
}

void apply_threads() {
  if (const char* env = std::getenv("SPLATGRASP_THREADS")) {
    const int n = std::atoi(env);
    if (n <= 0) throw Error(ErrorCode::InvalidArgument, "SPLATGRASP_THREADS must be a positive integer");
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-splat feature fields for open-vocabulary grasping"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic tabletop scene");
  std::string synth_out;
  int synth_objects = 3;
  std::uint64_t synth_seed = 0;
  SyntheticSceneSpec synth_spec;
  bool synth_no_table_label = false;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--objects", synth_objects, "Number of random objects")->check(CLI::Range(1, 16));
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--width", synth_spec.width, "Image width");
  synth->add_option("--height", synth_spec.height, "Image height");
  synth->add_option("--focal", synth_spec.focal, "Focal length in pixels");
  synth->add_option("--ring-views", synth_spec.ring_views, "Cameras on the ring");
  synth->add_option("--top-views", synth_spec.top_views, "Top-down cameras");
  synth->add_option("--d-clip", synth_spec.d_clip, "Embedding dimension");
  synth->add_option("--depth-noise", synth_spec.depth_noise, "Depth noise std (m)");
  synth->add_flag("--no-table-annotation", synth_no_table_label, "Leave the table unannotated");

  // init
  auto* init = app.add_subcommand("init", "Initialize a field from the RGB-D views");
  std::string init_scene, init_out;
  InitOptions init_opts;
  init->add_option("--scene", init_scene, "Scene manifest")->required();
  init->add_option("--out", init_out, "Output checkpoint")->required();
  init->add_option("--count", init_opts.target_count, "Target primitive count");
  init->add_option("--latent-dim", init_opts.latent_dim, "Latent feature size");
  init->add_option("--seed", init_opts.seed, "Random seed");

  // train
  auto* trn = app.add_subcommand("train", "Optimize a field against the scene");
  std::string train_scene, train_ckpt, train_out, train_decoder_in, train_decoder_out, train_csv, train_cfg;
  int train_iters = -1;
  std::uint64_t train_seed = 0;
  bool train_seed_set = false;
  trn->add_option("--scene", train_scene, "Scene manifest")->required();
  trn->add_option("--checkpoint", train_ckpt, "Input checkpoint")->required();
  trn->add_option("--out", train_out, "Output checkpoint")->required();
  trn->add_option("--decoder", train_decoder_in, "Initial decoder (default: random)");
  trn->add_option("--decoder-out", train_decoder_out, "Output decoder")->required();
  trn->add_option("--loss-csv", train_csv, "Per-iteration losses");
  trn->add_option("--config", train_cfg, "Training config (key = value)");
  trn->add_option("--iterations", train_iters, "Override the iteration count");
  auto* train_seed_opt = trn->add_option("--seed", train_seed, "Random seed");

  // render
  auto* rnd = app.add_subcommand("render", "Render color, depth, normals and features");
  std::string render_ckpt, render_scene, render_view, render_out;
  std::vector<double> render_pose, render_intr;
  int render_w = 0, render_h = 0;
  rnd->add_option("--checkpoint", render_ckpt, "Checkpoint")->required();
  rnd->add_option("--scene", render_scene, "Scene manifest (camera source)");
  rnd->add_option("--view", render_view, "View id from the scene");
  rnd->add_option("--pose", render_pose, "Camera-to-world pose, 16 numbers row-major")->expected(16)->delimiter(',');
  rnd->add_option("--intrinsics", render_intr, "fx,fy,cx,cy")->expected(4)->delimiter(',');
  rnd->add_option("--width", render_w, "Image width");
  rnd->add_option("--height", render_h, "Image height");
  rnd->add_option("--out", render_out, "Output directory")->required();

  // query
  auto* qry = app.add_subcommand("query", "Localize an object by its embedding name");
  std::string query_ckpt, query_decoder, query_scene, query_name, query_out, query_cloud;
  std::vector<std::string> query_views;
  LocalizeOptions query_opts;
  qry->add_option("--checkpoint", query_ckpt, "Checkpoint")->required();
  qry->add_option("--decoder", query_decoder, "Decoder")->required();
  qry->add_option("--scene", query_scene, "Scene manifest (cameras and embeddings)")->required();
  qry->add_option("--query", query_name, "Embedding name")->required();
  qry->add_option("--threshold", query_opts.threshold, "Relevance threshold")->check(CLI::Range(0.0, 2.0));
  qry->add_option("--views", query_views, "View ids to query (default: all)")->delimiter(',');
  qry->add_option("--out", query_out, "Output directory")->required();
  qry->add_option("--cloud", query_cloud, "Also write the grasp point cloud (PLY)");

  // grasp-filter
  auto* gf = app.add_subcommand("grasp-filter", "Filter grasp proposals by contact normals");
  std::string gf_props, gf_cloud, gf_out;
  double gf_angle_deg = 60.0;
  double gf_radius = 0.005;
  gf->add_option("--proposals", gf_props, "Proposal JSON")->required();
  gf->add_option("--cloud", gf_cloud, "Point cloud with normals (PLY)")->required();
  gf->add_option("--out", gf_out, "Output JSON")->required();
  gf->add_option("--angle-threshold", gf_angle_deg, "Angle-sum threshold in degrees");
  gf->add_option("--radius", gf_radius, "Normal lookup radius (m)");

  // update
  auto* upd = app.add_subcommand("update", "Move a selected object and fine-tune");
  std::string upd_ckpt, upd_scene, upd_hull, upd_transform, upd_out, upd_decoder, upd_decoder_out, upd_cfg;
  std::vector<std::string> upd_views;
  int upd_iters = -1;
  double upd_margin = 0.0;
  std::uint64_t upd_seed = 0;
  upd->add_option("--checkpoint", upd_ckpt, "Checkpoint")->required();
  upd->add_option("--hull", upd_hull, "Localization JSON with the selection hull")->required();
  upd->add_option("--transform", upd_transform, "Transform JSON (16 numbers row-major)")->required();
  upd->add_option("--out", upd_out, "Output checkpoint")->required();
  upd->add_option("--scene", upd_scene, "Scene manifest with the new observations");
  upd->add_option("--views", upd_views, "View ids used for fine-tuning")->delimiter(',');
  upd->add_option("--decoder", upd_decoder, "Decoder");
  upd->add_option("--decoder-out", upd_decoder_out, "Output decoder");
  upd->add_option("--config", upd_cfg, "Training config");
  upd->add_option("--iterations", upd_iters, "Original iteration count (fine-tune runs a tenth)");
  upd->add_option("--margin", upd_margin, "Grow the hull by this many meters");
  upd->add_option("--seed", upd_seed, "Random seed");

  // eval
  auto* evl = app.add_subcommand("eval", "Score queries against ground-truth masks");
  std::string eval_ckpt, eval_decoder, eval_scene, eval_json;
  EvalOptions eval_opts;
  evl->add_option("--checkpoint", eval_ckpt, "Checkpoint")->required();
  evl->add_option("--decoder", eval_decoder, "Decoder")->required();
  evl->add_option("--scene", eval_scene, "Scene manifest with ground truth")->required();
  evl->add_option("--threshold", eval_opts.threshold, "Relevance threshold");
  evl->add_option("--json", eval_json, "Write the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "error InvalidArgument: %s\n", msg.c_str());
    return 2;
  }

  try {
    apply_threads();

    if (*synth) {
      SyntheticSceneSpec spec = random_scene_spec(synth_objects, synth_seed);
      spec.width = synth_spec.width;
      spec.height = synth_spec.height;
      spec.focal = synth_spec.focal;
      spec.ring_views = synth_spec.ring_views;
      spec.top_views = synth_spec.top_views;
      spec.d_clip = synth_spec.d_clip;
      spec.depth_noise = synth_spec.depth_noise;
      spec.annotate_table = !synth_no_table_label;
      const Scene scene = generate_synthetic(spec);
      const fs::path manifest = write_scene(synth_out, scene);
      json layout;
      for (const SyntheticObject& o : spec.objects) {
        layout["objects"].push_back({{"name", o.name},
                                     {"shape", o.shape == ShapeKind::Sphere ? "sphere" : "box"},
                                     {"center", vec_json(o.center)},
                                     {"size", vec_json(o.size)},
                                     {"yaw", o.yaw},
                                     {"color", vec_json(o.color)}});
      }
      layout["ring_views"] = spec.ring_views;
      layout["ring_radius"] = spec.ring_radius;
      layout["ring_height"] = spec.ring_height;
      layout["top_views"] = spec.top_views;
      layout["top_height"] = spec.top_height;
      layout["target"] = vec_json(spec.target);
      layout["seed"] = synth_seed;
      write_json(fs::path(synth_out) / "synthetic_spec.json", layout);
      std::printf("wrote %s (%zu views, %zu objects)\n", manifest.string().c_str(), scene.views.size(),
                  spec.objects.size());
    } else if (*init) {
      const Scene scene = load_scene(init_scene);
      init_opts.max_depth = scene.manifest.max_depth;
      GaussianField field = init_from_rgbd(scene.camera_views(), init_opts);
      field.frame_id = scene.manifest.frame_id;
      save_checkpoint(init_out, field);
      std::printf("wrote %s (%zu primitives)\n", init_out.c_str(), field.size());
    } else if (*trn) {
      const Scene scene = load_scene(train_scene);
      TrainConfig cfg = make_config(train_cfg);
      if (train_iters >= 0) cfg.iterations = train_iters;
      train_seed_set = train_seed_opt->count() > 0;
      if (train_seed_set) cfg.seed = train_seed;
      const GaussianField field = load_checkpoint(train_ckpt);
      Decoder initial;
      if (!train_decoder_in.empty()) initial = load_decoder(train_decoder_in);
      TrainResult res;
      try {
        res = train(field, scene.views, cfg, train_decoder_in.empty() ? nullptr : &initial);
      } catch (const DivergenceError& e) {
        save_checkpoint(train_out, e.last_good().field);
        save_decoder(train_decoder_out, e.last_good().decoder);
        if (!train_csv.empty()) write_loss_csv(train_csv, e.last_good().reports);
        throw;
      }
      save_checkpoint(train_out, res.field);
      save_decoder(train_decoder_out, res.decoder);
      if (!train_csv.empty()) write_loss_csv(train_csv, res.reports);
      const LossReport last = res.reports.empty() ? LossReport{} : res.reports.back();
      std::printf("trained %d iterations, final loss %.6g (rgb %.4g depth %.4g)\n", cfg.effective_iterations(),
                  last.total, last.rgb, last.depth);
    } else if (*rnd) {
      const GaussianField field = load_checkpoint(render_ckpt);
      Camera cam;
      if (!render_view.empty()) {
        if (render_scene.empty()) throw Error(ErrorCode::InvalidArgument, "--view needs --scene");
        const Scene scene = load_scene(render_scene);
        cam = scene.views.at(select_views(scene, {render_view}).front()).view.camera;
      } else {
        if (render_pose.empty() || render_intr.empty() || render_w <= 0 || render_h <= 0) {
          throw Error(ErrorCode::InvalidArgument, "give --view with --scene, or --pose, --intrinsics, --width, --height");
        }
        cam.width = render_w;
        cam.height = render_h;
        cam.intrinsics = {render_intr[0], render_intr[1], render_intr[2], render_intr[3]};
        if (!cam.intrinsics.valid()) throw Error(ErrorCode::BadIntrinsics, "fx and fy must be positive");
        cam.pose = parse_pose(render_pose, "--pose");
      }
      if (render_w > 0 && render_h > 0 && !render_view.empty()) cam = cam.resized(render_w, render_h);
      const RenderOutput out = render_forward(field, cam);
      const fs::path dir(render_out);
      fs::create_directories(dir);
      write_png_rgb(dir / "color.png", out.color);
      ImageD depth(cam.width, cam.height, 1);
      for (std::size_t i = 0; i < depth.storage().size(); ++i) {
        const double a = out.alpha.storage()[i];
        depth.storage()[i] = a >= 0.5 ? out.depth.storage()[i] / a : 0.0;
      }
      write_png_gray16(dir / "depth.png", depth_to_u16(depth));
      write_png_rgb(dir / "normal.png", normals_to_rgb(out.normal));
      if (!out.feature.empty()) write_feature_map(dir / "features.ggfm", out.feature);
      std::printf("rendered %dx%d to %s\n", cam.width, cam.height, dir.string().c_str());
    } else if (*qry) {
      const Scene scene = load_scene(query_scene);
      const GaussianField field = load_checkpoint(query_ckpt);
      const Decoder decoder = load_decoder(query_decoder);
      const QueryEmbeddings emb = QueryEmbeddings::from_entries(scene.embeddings, query_name);
      std::vector<Camera> cams;
      if (query_views.empty()) {
        cams = scene.cameras();
      } else {
        for (int i : select_views(scene, query_views)) cams.push_back(scene.views[i].view.camera);
      }
      const auto t0 = std::chrono::steady_clock::now();
      const Localization loc = localize(field, cams, decoder, emb, query_opts);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const fs::path dir(query_out);
      fs::create_directories(dir);
      for (std::size_t i = 0; i < loc.views.size(); ++i) {
        const std::string id = query_views.empty() ? scene.views[i].view.id : query_views[i];
        write_png_rgb(dir / ("relevance_" + id + ".png"), relevance_colormap(loc.views[i].relevance));
        write_feature_map(dir / ("relevance_" + id + ".ggfm"), loc.views[i].relevance);
        Mask m = loc.views[i].selected;
        for (auto& v : m.storage()) v = v ? 255 : 0;
        write_png_gray8(dir / ("mask_" + id + ".png"), m);
      }
      json doc = localization_json(loc, query_name, query_opts.threshold, field.frame_id);
      doc["latency_s"] = seconds;
      doc["views"] = cams.size();
      write_json(dir / "localization.json", doc);
      if (!query_cloud.empty()) write_ply(query_cloud, build_grasp_cloud(loc, field));
      std::printf("query '%s': %zu points, %.3f s over %zu views (%.3f s per view)\n", query_name.c_str(),
                  loc.points.size(), seconds, cams.size(), seconds / static_cast<double>(cams.size()));
    } else if (*gf) {
      GraspFilterConfig cfg;
      cfg.angle_sum_threshold = gf_angle_deg * std::numbers::pi / 180.0;
      cfg.normal_lookup_radius = gf_radius;
      const std::vector<GraspProposal> proposals = read_proposals(gf_props);
      const PointCloud cloud = read_ply(gf_cloud);
      const GraspSelection sel = select_grasp(proposals, cloud, cfg);
      std::vector<GraspProposal> kept;
      std::vector<GraspEvaluation> evals;
      for (std::size_t i : sel.ranked) {
        kept.push_back(proposals[i]);
        evals.push_back(sel.evaluations[i]);
      }
      write_proposals(gf_out, kept, &evals);
      std::printf("kept %zu of %zu proposals; best is input #%zu (score %.4g)\n", kept.size(), proposals.size(),
                  sel.best, proposals[sel.best].score);
    } else if (*upd) {
      const GaussianField field = load_checkpoint(upd_ckpt);
      ConvexHull hull = read_hull(upd_hull);
      if (upd_margin > 0.0) hull = hull.inflated(upd_margin);
      const RigidTransform motion = read_transform(upd_transform);
      const TransformResult moved = transform_subset(field, hull, motion);
      if (moved.empty_selection) std::fprintf(stderr, "warning: no primitive inside the hull\n");
      TrainConfig cfg = make_config(upd_cfg);
      if (upd_iters >= 0) cfg.iterations = upd_iters;
      cfg.seed = upd_seed;
      cfg.fine_tune = true;
      GaussianField result = moved.field;
      if (cfg.effective_iterations() > 0) {
        if (upd_scene.empty() || upd_decoder.empty()) {
          throw Error(ErrorCode::InvalidArgument, "fine-tuning needs --scene and --decoder");
        }
        const Scene scene = load_scene(upd_scene);
        const Decoder decoder = load_decoder(upd_decoder);
        const std::vector<int> subset = select_views(scene, upd_views);
        TrainResult res = train(moved.field, scene.views, cfg, &decoder, {}, subset);
        result = std::move(res.field);
        if (!upd_decoder_out.empty()) save_decoder(upd_decoder_out, res.decoder);
      }
      save_checkpoint(upd_out, result);
      std::printf("moved %zu primitives, fine-tuned %d iterations\n", moved.moved.size(),
                  cfg.effective_iterations());
    } else if (*evl) {
      const Scene scene = load_scene(eval_scene);
      const GaussianField field = load_checkpoint(eval_ckpt);
      const Decoder decoder = load_decoder(eval_decoder);
      const EvalReport rep = evaluate(field, decoder, scene, eval_opts);
      json doc;
      doc["threshold"] = eval_opts.threshold;
      for (const QueryEvaluation& q : rep.queries) {
        std::printf("%-20s iou %.4f  hits %d/%d  latency %.3f s\n", q.name.c_str(), q.iou, q.hits, q.views,
                    q.latency_s);
        doc["queries"].push_back({{"name", q.name},
                                  {"iou", q.iou},
                                  {"intersection", q.intersection},
                                  {"union", q.union_},
                                  {"hits", q.hits},
                                  {"views", q.views},
                                  {"latency_s", q.latency_s}});
      }
      std::printf("mIoU %.4f  localization accuracy %.4f  mean latency %.3f s (%dx%d)\n", rep.mean_iou,
                  rep.hit_rate, rep.mean_latency_s, eval_opts.latency_width, eval_opts.latency_height);
      doc["mean_iou"] = rep.mean_iou;
      doc["hit_rate"] = rep.hit_rate;
      doc["mean_latency_s"] = rep.mean_latency_s;
      if (!eval_json.empty()) write_json(eval_json, doc);
    }
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "error %s: %s\n", to_string(e.code()), msg.c_str());
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "error IoError: %s\n", msg.c_str());
    return 1;
  }
  return 0;
}
