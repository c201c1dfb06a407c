// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

#include "splatgrasp/dataset.hpp"
#include "splatgrasp/error.hpp"
#include "splatgrasp/grasp.hpp"
#include "splatgrasp/losses.hpp"
#include "splatgrasp/query.hpp"
#include "splatgrasp/rasterizer.hpp"
#include "splatgrasp/trainer.hpp"
#include "support.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>

using namespace sg;
using namespace sg::test;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Settings {
  int train_iterations = 5000;
  std::size_t train_primitives = 5000;
  int localization_scenes = 10;
  int localization_iterations = 2000;
  std::size_t localization_primitives = 3000;
  std::set<int> only;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Logit midpoint between an aligned (dot 1) and an unrelated (dot 0) pixel.
const double kSyntheticThreshold = 1.0 / (1.0 + std::exp(-0.5));

ImageD random_image(std::mt19937_64& rng, int w, int h, int c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  ImageD img(w, h, c);
  for (double& v : img.storage()) v = u(rng);
  return img;
}

Camera orbit(int w, int h, double f, double azimuth, double elevation, double dist = 3.0) {
  const Vec3 eye(dist * std::cos(elevation) * std::cos(azimuth), dist * std::cos(elevation) * std::sin(azimuth),
                 dist * std::sin(elevation));
  return make_camera(w, h, f, look_at(eye, Vec3::Zero()));
}

// ---- 1 -------------------------------------------------------------------

Outcome gradient_correctness() {
  std::mt19937_64 rng(11);
  const int W = 8, H = 8, D = 4, DC = 8;
  GaussianField field;
  Camera cam;
  TrainingView tv;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 500) return {false, "no scene away from compositing thresholds"};
    field = random_field(rng, 10, D, 0.5, 0.12, 0.4, 0.2, 0.9);
    cam = orbit(W, H, 8.0, 0.4 + attempt, 0.5);
    tv.view.camera = cam;
    tv.view.rgb = random_image(rng, W, H, 3, 0.0, 1.0);
    tv.view.depth = random_image(rng, W, H, 1, 2.0, 4.0);
    if (threshold_margin(field, cam) < 0.05) continue;
    // Keep L1 terms away from their kinks.
    const RenderOutput out = render_forward(field, cam);
    double kink = INFINITY;
    for (std::size_t i = 0; i < out.color.storage().size(); ++i) {
      kink = std::min(kink, std::abs(out.color.storage()[i] - tv.view.rgb.storage()[i]));
    }
    for (std::size_t i = 0; i < out.depth.storage().size(); ++i) {
      kink = std::min(kink, std::abs(out.depth.storage()[i] - tv.view.depth.storage()[i]));
    }
    if (kink > 1e-3) break;
  }
  tv.annotations.instance_map = IdMap(W, H, 1);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) tv.annotations.instance_map.at(x, y) = x < W / 2 ? 1 : 2;
  }
  tv.annotations.features[1] = random_unit_vector(rng, DC);
  tv.annotations.features[2] = random_unit_vector(rng, DC);
  NormalMap target;
  target.normals = ImageD(W, H, 3);
  target.valid = Mask(W, H, 1, 1);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const VecX n = random_unit_vector(rng, 3);
      for (int c = 0; c < 3; ++c) target.normals.at(x, y, c) = n[c];
    }
  }
  Decoder dec = Decoder::random(D, 8, DC, 5);
  std::normal_distribution<double> nd(0.0, 0.1);
  for (double& v : dec.b1) v = nd(rng);

  const char* names[] = {"rgb", "depth", "normal", "contrastive", "distill"};
  double worst = 0.0;
  std::string worst_at;
  int checks = 0;
  for (int term = 0; term < 5; ++term) {
    TrainConfig c;
    c.lambda_rgb = term == 0;
    c.lambda_depth = term == 1;
    c.lambda_normal = term == 2;
    c.lambda_contr = term == 3;
    c.lambda_distill = term == 4;
    c.pair_budget = 24;
    c.pixels_per_mask = 6;
    const std::uint64_t pair_seed = 1234;
    const StepGradients step = evaluate_losses(field, dec, tv, &target, c, kMaxShDegree, pair_seed);
    GaussianField probe = field;
    const double h = 1e-5;
    for_each_parameter(probe, [&](const char* group, std::size_t i, int k, double& v) {
      const double saved = v;
      v = saved + h;
      const double up = evaluate_losses(probe, dec, tv, &target, c, kMaxShDegree, pair_seed).report.total;
      v = saved - h;
      const double down = evaluate_losses(probe, dec, tv, &target, c, kMaxShDegree, pair_seed).report.total;
      v = saved;
      const double err = relative_error(gradient_of(step.field, group, i, k), (up - down) / (2 * h));
      ++checks;
      if (err > worst) {
        worst = err;
        worst_at = fmt("%s loss, %s[%zu][%d]", names[term], group, i, k);
      }
    });
  }
  return {worst < 1e-3, fmt("max relative error %.2e over %d partials (worst: %s)", worst, checks, worst_at.c_str())};
}

// ---- 2 -------------------------------------------------------------------

Outcome compositing_oracle() {
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<int> count(1, 50);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> elev(-0.6, 0.9);
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    const GaussianField field = random_field(rng, count(rng), 6);
    const Camera cam = orbit(32, 32, 30.0, angle(rng), elev(rng));
    const RenderOutput a = render_forward(field, cam);
    const RenderOutput b = naive_render(field, cam);
    for (const auto& [x, y] : {std::pair{&a.color, &b.color}, {&a.feature, &b.feature}, {&a.depth, &b.depth},
                               {&a.normal, &b.normal}, {&a.alpha, &b.alpha}}) {
      worst = std::max(worst, max_abs_diff(*x, *y));
    }
  }
  return {worst < 1e-5, fmt("max abs difference %.2e over 100 scenes", worst)};
}

// ---- 3 -------------------------------------------------------------------

Outcome loss_oracles() {
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<int> ids(0, 3);
  double e_contr = 0, e_dist = 0, e_rel = 0, e_depth = 0, e_norm = 0;
  for (int t = 0; t < 100; ++t) {
    const int W = 9, H = 7, D = 5, DC = 12;
    ImageD feat = random_image(rng, W, H, D, -1.0, 1.0);
    ViewAnnotations ann;
    ann.instance_map = IdMap(W, H, 1);
    for (auto& v : ann.instance_map.storage()) v = static_cast<std::uint16_t>(ids(rng));
    for (std::uint16_t id = 1; id <= 3; ++id) ann.features[id] = random_unit_vector(rng, DC);
    const PairSample sample = sample_pairs(ann, 40, 5, 100 + t);
    Decoder dec = Decoder::random(D, 10, DC, 200 + t);
    std::normal_distribution<double> nd(0.0, 0.2);
    for (double& v : dec.b1) v = nd(rng);
    for (double& v : dec.b2) v = nd(rng);
    auto latent = [&](int x, int y) {
      VecX l(D);
      for (int c = 0; c < D; ++c) l[c] = feat.at(x, y, c);
      return l;
    };
    auto decode_direct = [&](const VecX& l) {
      const VecX y = dec.w2 * (dec.w1 * l + dec.b1).cwiseMax(0.0) + dec.b2;
      return VecX(y.norm() > 0 ? VecX(y / y.norm()) : y);
    };

    // Contrastive: 1 - mean over pairs of L(u).L(v).
    double sum = 0.0;
    for (const PixelPair& p : sample.pairs) sum += latent(p.ux, p.uy).dot(latent(p.vx, p.vy));
    const double contr = 1.0 - sum / sample.pairs.size();
    e_contr = std::max(e_contr, std::abs(contrastive_loss(feat, sample).value - contr));

    // Distillation: 1 - mean over pixels of Psi(L).F.
    sum = 0.0;
    for (const SamplePixel& p : sample.pixels) sum += decode_direct(latent(p.x, p.y)).dot(ann.features.at(p.id));
    const double dist = 1.0 - sum / sample.pixels.size();
    e_dist = std::max(e_dist, std::abs(distill_loss(feat, sample, dec, ann).value - dist));

    // Relevance: min over canonical phrases of the pairwise softmax.
    QueryEmbeddings q;
    q.name = "q";
    q.query = random_unit_vector(rng, DC);
    for (int i = 0; i < 4; ++i) q.canonical.push_back(random_unit_vector(rng, DC));
    const ImageD rel = relevance(feat, dec, q);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const VecX yv = decode_direct(latent(x, y));
        double s = INFINITY;
        for (const VecX& c : q.canonical) {
          s = std::min(s, std::exp(yv.dot(q.query)) / (std::exp(yv.dot(q.query)) + std::exp(yv.dot(c))));
        }
        e_rel = std::max(e_rel, std::abs(rel.at(x, y) - s));
      }
    }

    // Depth: mean |D_hat - D| over the m valid pixels.
    const ImageD rendered = random_image(rng, W, H, 1, 0.0, 3.0);
    ImageD observed = random_image(rng, W, H, 1, 0.0, 3.0);
    std::bernoulli_distribution invalid(0.3);
    double dsum = 0.0;
    int m = 0;
    for (std::size_t i = 0; i < observed.storage().size(); ++i) {
      if (invalid(rng) && i != 0) observed.storage()[i] = 0.0;
      if (observed.storage()[i] > 0.0) {
        dsum += std::abs(rendered.storage()[i] - observed.storage()[i]);
        ++m;
      }
    }
    e_depth = std::max(e_depth, std::abs(depth_loss(rendered, observed).value - dsum / m));

    // Normals: mean over valid pixels of |N_hat - N|^2 + 1 - N_hat.N.
    ImageD nr(W, H, 3), nt(W, H, 3);
    Mask valid(W, H, 1);
    double nsum = 0.0;
    int nv = 0;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const VecX a = random_unit_vector(rng, 3), b = random_unit_vector(rng, 3);
        for (int c = 0; c < 3; ++c) nr.at(x, y, c) = a[c], nt.at(x, y, c) = b[c];
        valid.at(x, y) = (x + y) % 3 != 0;
        if (valid.at(x, y)) {
          nsum += (a - b).squaredNorm() + 1.0 - a.dot(b);
          ++nv;
        }
      }
    }
    e_norm = std::max(e_norm, std::abs(normal_loss(nr, nt, valid).value - nsum / nv));
  }
  const double worst = std::max({e_contr, e_dist, e_rel, e_depth, e_norm});
  return {worst < 1e-8, fmt("max abs error: contrastive %.1e, distillation %.1e, relevance %.1e, depth %.1e, "
                            "normal %.1e (100 instances each)",
                            e_contr, e_dist, e_rel, e_depth, e_norm)};
}

// ---- shared trained scene (4, 6, 8, 10) ----------------------------------

struct TrainedScene {
  SyntheticSceneSpec spec;
  Scene scene;
  GaussianField field;
  Decoder decoder;
  OptimizerState optimizer;
  int iterations = 0;
  double train_seconds = 0.0;
};

TrainedScene train_scene(const SyntheticSceneSpec& spec, int iterations, std::size_t primitives, std::uint64_t seed) {
  TrainedScene t;
  t.spec = spec;
  t.scene = generate_synthetic(spec);
  InitOptions io;
  io.target_count = primitives;
  io.latent_dim = 16;
  io.seed = seed;
  const GaussianField init = init_from_rgbd(t.scene.camera_views(), io);
  TrainConfig cfg;
  cfg.iterations = iterations;
  cfg.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r = train(init, t.scene.views, cfg);
  t.train_seconds = seconds_since(t0);
  t.field = std::move(r.field);
  t.decoder = std::move(r.decoder);
  t.optimizer = std::move(r.optimizer);
  t.iterations = iterations;
  return t;
}

double mean_psnr(const GaussianField& field, const Scene& scene, const std::vector<int>& views) {
  double sum = 0.0;
  for (int v : views) sum += psnr(render_forward(field, scene.views[v].view.camera, kColorChannel).color, scene.views[v].view.rgb);
  return sum / views.size();
}

// ---- 4 -------------------------------------------------------------------

Outcome feature_homogenization(const TrainedScene& t) {
  const int objects = static_cast<int>(t.spec.objects.size());
  double cos_sum = 0.0;
  std::size_t cos_n = 0;
  std::vector<VecX> decoded_sum(objects, VecX::Zero(t.decoder.output_dim()));
  for (std::size_t v = 0; v < t.scene.views.size(); ++v) {
    const RenderOutput out = render_forward(t.field, t.scene.views[v].view.camera, kFeatureChannel);
    const IdMap& ids = t.scene.gt_masks[v];
    const int d = out.feature.channels();
    for (int k = 1; k <= objects; ++k) {
      std::vector<VecX> feats;
      VecX mean = VecX::Zero(d);
      for (int y = 0; y < ids.height(); ++y) {
        for (int x = 0; x < ids.width(); ++x) {
          if (ids.at(x, y) != k) continue;
          VecX l(d);
          for (int c = 0; c < d; ++c) l[c] = out.feature.at(x, y, c);
          if (!(l.norm() > 0.0)) continue;
          l.normalize();
          mean += l;
          feats.push_back(l);
          const DecodeResult dr = decode(t.decoder, l);
          if (!dr.degenerate) decoded_sum[k - 1] += dr.embedding;
        }
      }
      if (feats.empty()) continue;
      mean.normalize();
      for (const VecX& l : feats) cos_sum += l.dot(mean);
      cos_n += feats.size();
    }
  }
  const double within = cos_n ? cos_sum / cos_n : 0.0;
  double cross = -1.0;
  for (int a = 0; a < objects; ++a) {
    for (int b = a + 1; b < objects; ++b) {
      cross = std::max(cross, decoded_sum[a].normalized().dot(decoded_sum[b].normalized()));
    }
  }
  return {within > 0.99 && cross < 0.3,
          fmt("within-mask rendered-feature cosine %.4f, max cross-object decoded cosine %.4f (%d views, "
              "%d iterations, trained in %.0f s)",
              within, cross, static_cast<int>(t.scene.views.size()), t.iterations, t.train_seconds)};
}

// ---- 5 -------------------------------------------------------------------

Outcome localization(const Settings& s) {
  std::printf("info  5 the default threshold 0.85 is unreachable with orthogonal embeddings: the best score is "
              "sigmoid(1) = %.4f; using %.4f = sigmoid(0.5)\n",
              1.0 / (1.0 + std::exp(-1.0)), kSyntheticThreshold);
  double iou_sum = 0.0;
  int queries = 0, hits = 0, visible = 0;
  for (int k = 0; k < s.localization_scenes; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const TrainedScene t =
        train_scene(random_scene_spec(3, 100 + k), s.localization_iterations, s.localization_primitives, k);
    EvalOptions eo;
    eo.threshold = kSyntheticThreshold;
    eo.measure_latency = false;
    const EvalReport rep = evaluate(t.field, t.decoder, t.scene, eo);
    std::printf("info  5 scene %d:", k);
    for (const QueryEvaluation& q : rep.queries) {
      std::printf(" %s iou %.3f hits %d/%d;", q.name.c_str(), q.iou, q.hits, q.views);
      iou_sum += q.iou;
      hits += q.hits;
      visible += q.views;
      ++queries;
    }
    std::printf(" %.0f s\n", seconds_since(t0));
    std::fflush(stdout);
  }
  const double miou = iou_sum / queries;
  const double hit_rate = static_cast<double>(hits) / visible;
  return {hit_rate == 1.0 && miou >= 0.80,
          fmt("hit rate %.4f (%d/%d query-views), mIoU %.4f over %d queries in %d scenes", hit_rate, hits, visible,
              miou, queries, s.localization_scenes)};
}

// ---- 6 -------------------------------------------------------------------

Outcome reconstruction(const TrainedScene& t) {
  double psnr_sum = 0.0, err = 0.0;
  std::size_t n = 0;
  for (const TrainingView& tv : t.scene.views) {
    const RenderOutput out = render_forward(t.field, tv.view.camera, kColorChannel | kDepthChannel);
    psnr_sum += psnr(out.color, tv.view.rgb);
    for (std::size_t i = 0; i < out.depth.storage().size(); ++i) {
      const double g = tv.view.depth.storage()[i];
      if (g <= 0.0) continue;
      err += std::abs(out.depth.storage()[i] - g);
      ++n;
    }
  }
  const double p = psnr_sum / t.scene.views.size();
  const double mae_mm = 1000.0 * err / n;
  return {p > 25.0 && mae_mm < 5.0,
          fmt("training-view PSNR %.2f dB, mean valid-pixel depth error %.2f mm (%zu pixels)", p, mae_mm, n)};
}

// ---- 7 -------------------------------------------------------------------

Outcome grasp_filter() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> thr(0.05, 3.0);
  int mismatches = 0;
  for (int t = 0; t < 10000; ++t) {
    GraspProposal p;
    const Vec3 c1(u(rng), u(rng), u(rng));
    const Vec3 c2 = c1 + Vec3(u(rng), u(rng), u(rng)) * 0.1;
    p.contacts = std::array<Vec3, 2>{c1, c2};
    p.width = std::max((c2 - c1).norm(), 1e-3);
    const std::array<Vec3, 2> normals{Vec3(u(rng), u(rng), u(rng)).normalized(), Vec3(u(rng), u(rng), u(rng)).normalized()};
    GraspFilterConfig cfg;
    cfg.angle_sum_threshold = thr(rng);
    // Trigonometric oracle: angle between the contact line and each normal, folded to [0, pi/2].
    const Vec3 g = (c2 - c1).normalized();
    double sum = 0.0;
    for (const Vec3& n : normals) {
      const double a = std::atan2(g.cross(n).norm(), g.dot(n));
      sum += std::min(a, std::numbers::pi - a);
    }
    const bool oracle = sum <= cfg.angle_sum_threshold;
    const double margin = std::abs(sum - cfg.angle_sum_threshold);
    if (margin < 1e-9) continue;  // undecidable at double precision
    if (force_closure_feasible(p, normals, cfg).feasible != oracle) ++mismatches;
  }

  // Runner-up scenario: the top-scoring grasp pinches a face edge-on, the second
  // grasps the opposite faces of a box.
  PointCloud cloud;
  for (int i = -5; i <= 5; ++i) {
    for (int j = -5; j <= 5; ++j) {
      const double a = i * 0.004, b = j * 0.004;
      cloud.points.push_back(Vec3(-0.02, a, b));
      cloud.normals.push_back(Vec3(-1, 0, 0));
      cloud.points.push_back(Vec3(0.02, a, b));
      cloud.normals.push_back(Vec3(1, 0, 0));
    }
  }
  GraspProposal top, runner;
  top.contacts = std::array<Vec3, 2>{Vec3(-0.02, -0.01, 0.0), Vec3(-0.02, 0.01, 0.0)};
  top.width = 0.02;
  top.score = 0.95;
  runner.contacts = std::array<Vec3, 2>{Vec3(-0.02, 0.0, 0.0), Vec3(0.02, 0.0, 0.0)};
  runner.width = 0.04;
  runner.score = 0.80;
  GraspFilterConfig cfg;
  cfg.normal_lookup_radius = 0.005;
  const GraspSelection sel = select_grasp({top, runner}, cloud, cfg);
  const bool runner_up = sel.best == 1 && !sel.evaluations[0].feasible && sel.evaluations[1].feasible;
  return {mismatches == 0 && runner_up,
          fmt("%d mismatches against the oracle on 10000 proposals; runner-up selected: %s", mismatches,
              runner_up ? "yes" : "no")};
}

// ---- 8 -------------------------------------------------------------------

Outcome scene_update(const TrainedScene& t) {
  // Move the first object to a free spot on the table.
  SyntheticSceneSpec moved_spec = t.spec;
  SyntheticObject& obj = moved_spec.objects.front();
  auto footprint = [](const SyntheticObject& o) {
    return o.shape == ShapeKind::Sphere ? o.size.x() : std::hypot(o.size.x(), o.size.y());
  };
  std::optional<Vec3> shift;
  for (int k = 0; k < 16 && !shift; ++k) {
    const double a = k * std::numbers::pi / 8.0;
    const Vec3 d(0.08 * std::cos(a), 0.08 * std::sin(a), 0.0);
    const Vec3 c = obj.center + d;
    if (std::abs(c.x()) + footprint(obj) > 0.3 || std::abs(c.y()) + footprint(obj) > 0.3) continue;
    bool clear = true;
    for (std::size_t j = 1; j < moved_spec.objects.size(); ++j) {
      const SyntheticObject& o = moved_spec.objects[j];
      clear &= (c - o.center).head<2>().norm() > footprint(obj) + footprint(o) + 0.02;
    }
    if (clear) shift = d;
  }
  if (!shift) return {false, "no free spot to move the object to"};
  obj.center += *shift;
  const Scene moved_scene = generate_synthetic(moved_spec);

  // Select the object through the query pipeline.
  const QueryEmbeddings q = QueryEmbeddings::from_entries(t.scene.embeddings, t.spec.objects.front().name);
  LocalizeOptions lo;
  lo.threshold = kSyntheticThreshold;
  const std::vector<Camera> cams = t.scene.cameras();
  const Localization loc = localize(t.field, cams, t.decoder, q, lo);
  // Silhouette pixels score below the threshold, so the lifted hull is a
  // little smaller than the object.
  const ConvexHull selector = loc.hull.inflated(0.02);
  RigidTransform motion;
  motion.translation = *shift;
  const TransformResult tr = transform_subset(t.field, selector, motion);

  const std::vector<int> tune_views{0, 2, 4, 6, 8};
  std::vector<int> held_out;
  for (int v = 0; v < static_cast<int>(t.scene.views.size()); ++v) {
    if (std::find(tune_views.begin(), tune_views.end(), v) == tune_views.end()) held_out.push_back(v);
  }
  TrainConfig cfg;
  cfg.iterations = t.iterations;
  cfg.fine_tune = true;
  cfg.seed = 8;
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult tuned = train(tr.field, moved_scene.views, cfg, &t.decoder, {}, tune_views, &t.optimizer);
  const double tune_s = seconds_since(t0);
  const TrainResult all_views = train(tr.field, moved_scene.views, cfg, &t.decoder, {}, {}, &t.optimizer);

  const double before = mean_psnr(t.field, t.scene, held_out);
  const double moved_only = mean_psnr(tr.field, moved_scene, held_out);
  const double after = mean_psnr(tuned.field, moved_scene, held_out);
  std::printf("info  8 same fine-tune on all %zu views: held-out PSNR %.2f dB; on the 5 tuning views: %.2f dB\n",
              t.scene.views.size(), mean_psnr(all_views.field, moved_scene, held_out),
              mean_psnr(tuned.field, moved_scene, tune_views));

  // Identity motion without fine-tuning must leave the field untouched.
  TrainConfig zero;
  zero.iterations = 0;
  const TransformResult ident = transform_subset(t.field, selector, RigidTransform{});
  const bool noop = train(ident.field, t.scene.views, zero, &t.decoder).field == t.field;

  return {after >= before - 1.0 && noop,
          fmt("held-out PSNR %.2f dB before, %.2f dB after moving %zu primitives, %.2f dB after %d fine-tune "
              "iterations on %zu views (%.0f s); identity no-op bit-exact: %s",
              before, moved_only, tr.moved.size(), after, cfg.effective_iterations(), tune_views.size(), tune_s,
              noop ? "yes" : "no")};
}

// ---- 9 -------------------------------------------------------------------

Outcome update_equivariance() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n;
  std::vector<Vec3> corners;
  for (int k = 0; k < 8; ++k) corners.emplace_back(k & 1 ? 10 : -10, k & 2 ? 10 : -10, k & 4 ? 10 : -10);
  const ConvexHull everything = convex_hull(corners);
  double worst_rot = 0.0, worst_trans = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Camera cam = orbit(48, 36, 40.0, 0.7 * trial, 0.3);
    const bool rotate = trial % 2 == 0;
    // SH coefficients are not rotated with the field, so rotations are checked
    // on view-independent colors and translations on full-degree colors.
    const GaussianField field = random_field(rng, 60, 6, 0.6, 0.05, 0.25, 0.05, 0.95, rotate ? 0 : 3);
    RigidTransform t;
    if (rotate) t.rotation = quat_to_matrix(Vec4(n(rng), n(rng), n(rng), n(rng)).normalized());
    t.translation = Vec3(n(rng), n(rng), n(rng)) * 0.5;
    const GaussianField moved = transform_subset(field, everything, t).field;
    Camera cam2 = cam;
    cam2.pose = t * cam.pose;
    const RenderOutput a = render_forward(field, cam);
    const RenderOutput b = render_forward(moved, cam2);
    ImageD normals_back = b.normal;
    for (int y = 0; y < b.normal.height(); ++y) {
      for (int x = 0; x < b.normal.width(); ++x) {
        const Vec3 nb = t.rotation.transpose() * Vec3(b.normal.at(x, y, 0), b.normal.at(x, y, 1), b.normal.at(x, y, 2));
        for (int c = 0; c < 3; ++c) normals_back.at(x, y, c) = nb[c];
      }
    }
    const double d = std::max({max_abs_diff(a.color, b.color), max_abs_diff(a.feature, b.feature),
                               max_abs_diff(a.depth, b.depth), max_abs_diff(a.alpha, b.alpha),
                               max_abs_diff(a.normal, normals_back)});
    (rotate ? worst_rot : worst_trans) = std::max(rotate ? worst_rot : worst_trans, d);
  }
  return {std::max(worst_rot, worst_trans) < 1e-5,
          fmt("max per-pixel difference %.2e (rigid motions, degree-0 color), %.2e (translations, degree-3 color)",
              worst_rot, worst_trans)};
}

// ---- 10 ------------------------------------------------------------------

Outcome query_latency(const TrainedScene& t) {
  EvalOptions eo;
  eo.threshold = kSyntheticThreshold;
  const EvalReport rep = evaluate(t.field, t.decoder, t.scene, eo);
  return {rep.max_latency_s < 2.0 && rep.max_latency_s > 0.0,
          fmt("per-query latency at %dx%d, one thread: mean %.3f s, max %.3f s (%zu primitives, d_latent %d, "
              "d_clip %d)",
              eo.latency_width, eo.latency_height, rep.mean_latency_s, rep.max_latency_s, t.field.size(),
              t.field.latent_dim(), t.decoder.output_dim())};
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  CLI::App app{"splatgrasp acceptance suite"};
  app.add_option("--iterations", s.train_iterations, "Training iterations for the shared scene");
  app.add_option("--primitives", s.train_primitives, "Initial primitives for the shared scene");
  app.add_option("--scenes", s.localization_scenes, "Scenes for the localization criterion");
  app.add_option("--localization-iterations", s.localization_iterations, "Training iterations per localization scene");
  app.add_option("--localization-primitives", s.localization_primitives, "Initial primitives per localization scene");
  app.add_option("--only", s.only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int id) { return s.only.empty() || s.only.count(id) > 0; };
  std::optional<TrainedScene> shared;
  auto trained = [&]() -> const TrainedScene& {
    if (!shared) shared = train_scene(random_scene_spec(3, 7), s.train_iterations, s.train_primitives, 3);
    return *shared;
  };

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", gradient_correctness},
      {2, "compositing oracle", compositing_oracle},
      {3, "loss formula oracles", loss_oracles},
      {4, "feature homogenization", [&] { return feature_homogenization(trained()); }},
      {5, "localization", [&] { return localization(s); }},
      {6, "reconstruction quality", [&] { return reconstruction(trained()); }},
      {7, "normal-guided grasp filter", grasp_filter},
      {8, "scene update", [&] { return scene_update(trained()); }},
      {9, "update equivariance", update_equivariance},
      {10, "query latency", [&] { return query_latency(trained()); }},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!wanted(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %2d %-28s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
