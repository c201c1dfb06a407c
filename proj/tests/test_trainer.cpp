#include "splatgrasp/dataset.hpp"
#include "splatgrasp/error.hpp"
#include "splatgrasp/losses.hpp"
#include "splatgrasp/trainer.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace sg;
using sg::test::make_camera;
using sg::test::random_field;

namespace {

template <class Fn>
void expect_error(ErrorCode code, Fn&& fn) {
  try {
    fn();
    ADD_FAILURE() << "no exception";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

// A small annotated scene and a field initialized from it.
struct SmallScene {
  Scene scene;
  GaussianField field;

  SmallScene() {
    SyntheticSceneSpec spec = random_scene_spec(2, 4);
    spec.width = 32;
    spec.height = 24;
    spec.focal = 34.0;
    spec.ring_views = 4;
    spec.top_views = 0;
    spec.d_clip = 16;
    scene = generate_synthetic(spec);
    InitOptions io;
    io.target_count = 200;
    io.latent_dim = 4;
    io.seed = 2;
    field = init_from_rgbd(scene.camera_views(), io);
  }
};

TrainConfig small_config(int iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.pair_budget = 64;
  c.decoder_hidden = 16;
  c.seed = 9;
  return c;
}

}  // namespace

TEST(TrainConfig, DefaultsMatchDocumentedWeights) {
  const TrainConfig c;
  EXPECT_EQ(c.lambda_rgb, 1.0);
  EXPECT_EQ(c.lambda_depth, 0.5);
  EXPECT_EQ(c.lambda_normal, 0.05);
  EXPECT_EQ(c.lambda_contr, 0.1);
  EXPECT_EQ(c.lambda_distill, 0.1);
  EXPECT_EQ(c.lr_mean, 1.6e-4);
  EXPECT_EQ(c.lr_sh, 2.5e-3);
  EXPECT_EQ(c.lr_opacity, 5e-2);
  EXPECT_EQ(c.lr_scale, 5e-3);
  EXPECT_EQ(c.lr_rotation, 1e-3);
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, ParsesKeyValueText) {
  const TrainConfig c = parse_train_config(
      "# comment\n"
      "iterations = 42\n"
      "  lambda_depth=0.25   # trailing comment\n"
      "\n"
      "fine_tune = true\n"
      "seed = 18446744073709551615\n");
  EXPECT_EQ(c.iterations, 42);
  EXPECT_EQ(c.lambda_depth, 0.25);
  EXPECT_TRUE(c.fine_tune);
  EXPECT_EQ(c.seed, 18446744073709551615ull);
  EXPECT_EQ(c.effective_iterations(), 5);
}

TEST(TrainConfig, RejectsUnknownKeysAndBadValues) {
  expect_error(ErrorCode::ParseError, [] { parse_train_config("learning_rate = 1\n"); });
  expect_error(ErrorCode::ParseError, [] { parse_train_config("iterations = many\n"); });
  expect_error(ErrorCode::ParseError, [] { parse_train_config("iterations\n"); });
  expect_error(ErrorCode::InvalidArgument, [] { parse_train_config("lambda_rgb = -1\n"); });
  expect_error(ErrorCode::InvalidArgument, [] { parse_train_config("pair_budget = 0\n"); });
  expect_error(ErrorCode::InvalidArgument, [] { parse_train_config("pixels_per_mask = 0\n"); });
  try {
    parse_train_config("iterations = 3\nbogus = 1\n", "cfg.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.txt:2"), std::string::npos) << e.what();
  }
}

TEST(TrainConfig, FileRoundTrip) {
  TrainConfig c;
  c.iterations = 77;
  c.lr_latent = 0.0123;
  c.lambda_normal = 0.0;
  c.fine_tune = true;
  c.prune = true;
  c.seed = 5;
  const auto path = std::filesystem::temp_directory_path() / "sg_test_train.cfg";
  save_train_config(path, c);
  const TrainConfig back = load_train_config(path);
  EXPECT_EQ(back.iterations, 77);
  EXPECT_EQ(back.lr_latent, 0.0123);
  EXPECT_EQ(back.lambda_normal, 0.0);
  EXPECT_TRUE(back.fine_tune);
  EXPECT_TRUE(back.prune);
  EXPECT_EQ(back.seed, 5u);
  std::filesystem::remove(path);
  expect_error(ErrorCode::MissingFile, [&] { load_train_config(path); });
}

TEST(Train, ZeroIterationsIsANoOp) {
  SmallScene s;
  const TrainResult r = train(s.field, s.scene.views, small_config(0));
  EXPECT_EQ(r.field, s.field);
  EXPECT_TRUE(r.reports.empty());
}

TEST(Train, DepthOnlyLossDecreases) {
  std::mt19937_64 rng(1);
  GaussianField f = random_field(rng, 10, 4, 0.5, 0.1, 0.3, 0.2, 0.6, 0);
  TrainingView tv;
  tv.view.camera = make_camera(24, 18, 22.0, look_at(Vec3(0, -3, 0.5), Vec3::Zero()));
  tv.view.rgb = ImageD(24, 18, 3, 0.5);
  tv.view.depth = ImageD(24, 18, 1, 3.0);
  tv.annotations.instance_map = IdMap(24, 18, 1);
  TrainConfig c = small_config(50);
  c.lambda_rgb = c.lambda_normal = c.lambda_contr = c.lambda_distill = 0.0;
  const std::vector<TrainingView> views{tv};
  const TrainResult r = train(f, views, c);
  ASSERT_EQ(r.reports.size(), 50u);
  int non_monotone = 0;
  for (std::size_t i = 1; i < r.reports.size(); ++i) non_monotone += r.reports[i].depth >= r.reports[i - 1].depth;
  EXPECT_LE(non_monotone, 5);
  EXPECT_LT(r.reports.back().depth, r.reports.front().depth);
}

TEST(Train, ReportsAreWeightedSumsAndDeterministic) {
  SmallScene s;
  const TrainConfig c = small_config(12);
  const TrainResult a = train(s.field, s.scene.views, c);
  const TrainResult b = train(s.field, s.scene.views, c);
  ASSERT_EQ(a.reports.size(), 12u);
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    const LossReport& r = a.reports[i];
    EXPECT_EQ(r.iteration, static_cast<int>(i));
    EXPECT_TRUE(std::isfinite(r.total));
    EXPECT_GE(r.total, 0.0);
    for (double t : {r.rgb, r.depth, r.normal, r.contrastive, r.distill}) EXPECT_GE(t, 0.0);
    const double sum = c.lambda_rgb * r.rgb + c.lambda_depth * r.depth + c.lambda_normal * r.normal +
                       c.lambda_contr * r.contrastive + c.lambda_distill * r.distill;
    EXPECT_NEAR(r.total, sum, 1e-9);
    EXPECT_GT(r.valid_pixels, 0u);

    const LossReport& o = b.reports[i];
    EXPECT_EQ(r.view, o.view);
    EXPECT_EQ(r.rgb, o.rgb);
    EXPECT_EQ(r.depth, o.depth);
    EXPECT_EQ(r.normal, o.normal);
    EXPECT_EQ(r.contrastive, o.contrastive);
    EXPECT_EQ(r.distill, o.distill);
    EXPECT_EQ(r.total, o.total);
  }
  EXPECT_EQ(a.field, b.field);
  EXPECT_EQ(a.decoder, b.decoder);
}

TEST(Train, KeepsPrimitiveInvariants) {
  SmallScene s;
  const TrainResult r = train(s.field, s.scene.views, small_config(10));
  ASSERT_EQ(r.field.size(), s.field.size());
  for (const auto& g : r.field.primitives) {
    EXPECT_NEAR(g.rotation.norm(), 1.0, 1e-6);
    EXPECT_NEAR(g.latent.norm(), 1.0, 1e-6);
    EXPECT_TRUE((g.scale.array() > 0.0).all());
    EXPECT_GT(g.opacity, 0.0);
    EXPECT_LT(g.opacity, 1.0);
  }
}

TEST(Train, FineTuneRunsATenthOfTheIterations) {
  SmallScene s;
  TrainConfig c = small_config(25);
  c.fine_tune = true;
  EXPECT_EQ(train(s.field, s.scene.views, c).reports.size(), 3u);
}

TEST(Train, ReturnsOptimizerStateShapedLikeTheField) {
  SmallScene s;
  const TrainResult r = train(s.field, s.scene.views, small_config(5));
  const std::size_t n = r.field.size();
  EXPECT_EQ(r.optimizer.steps, 5);
  ASSERT_EQ(r.optimizer.blocks.size(), std::size(OptimizerState::kBlockNames));
  const std::size_t sizes[] = {3 * n, 4 * n, 3 * n, n, 3 * kShCoeffCount * n, 4 * n};
  for (int b = 0; b < 6; ++b) {
    EXPECT_EQ(r.optimizer.blocks[b].m.size(), sizes[b]) << OptimizerState::kBlockNames[b];
    EXPECT_EQ(r.optimizer.blocks[b].v.size(), sizes[b]) << OptimizerState::kBlockNames[b];
  }
  EXPECT_EQ(r.optimizer.blocks[6].m.size(), static_cast<std::size_t>(r.decoder.w1.size()));
  EXPECT_TRUE(train(s.field, s.scene.views, small_config(0)).optimizer.blocks.empty());
}

TEST(Train, ResumesFromOptimizerState) {
  SmallScene s;
  const TrainResult first = train(s.field, s.scene.views, small_config(5));
  const TrainResult resumed =
      train(first.field, s.scene.views, small_config(3), &first.decoder, {}, {}, &first.optimizer);
  EXPECT_EQ(resumed.optimizer.steps, 8);
  const TrainResult fresh = train(first.field, s.scene.views, small_config(3), &first.decoder);
  EXPECT_EQ(fresh.optimizer.steps, 3);
  EXPECT_NE(resumed.field, fresh.field);

  GaussianField smaller = first.field;
  smaller.primitives.pop_back();
  expect_error(ErrorCode::ShapeMismatch,
               [&] { train(smaller, s.scene.views, small_config(1), &first.decoder, {}, {}, &first.optimizer); });
}

TEST(Train, ViewSubsetRestrictsSampling) {
  SmallScene s;
  const std::vector<int> subset{1, 3};
  const TrainResult r = train(s.field, s.scene.views, small_config(10), nullptr, {}, subset);
  for (const LossReport& rep : r.reports) EXPECT_TRUE(rep.view == 1 || rep.view == 3);
  const std::vector<int> bad{7};
  expect_error(ErrorCode::InvalidArgument, [&] { train(s.field, s.scene.views, small_config(1), nullptr, {}, bad); });
}

TEST(Train, NonFiniteLossRaisesDivergenceWithLastGoodState) {
  SmallScene s;
  std::vector<TrainingView> views{s.scene.views.front()};
  views[0].view.rgb.at(3, 3, 0) = std::nan("");
  try {
    train(s.field, views, small_config(5));
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergenceDetected);
    EXPECT_TRUE(e.last_good().reports.empty());
    EXPECT_EQ(e.last_good().field.size(), s.field.size());
  }
}

TEST(TrainProperty, ContrastiveGradientReachesExactlyTheSampledFootprint) {
  std::mt19937_64 rng(2);
  // Low opacities keep transmittance above the stop level, so every splat
  // within its cutoff contributes.
  const GaussianField f = random_field(rng, 20, 4, 0.7, 0.05, 0.15, 0.05, 0.3, 0);
  TrainingView tv;
  tv.view.camera = make_camera(32, 24, 30.0, look_at(Vec3(0, -3, 0.3), Vec3::Zero()));
  tv.view.rgb = ImageD(32, 24, 3, 0.5);
  tv.view.depth = ImageD(32, 24, 1, 3.0);
  tv.annotations.instance_map = IdMap(32, 24, 1);
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 15; ++x) tv.annotations.instance_map.at(x, y) = 1;
    for (int x = 17; x < 32; ++x) tv.annotations.instance_map.at(x, y) = 2;
  }
  tv.annotations.features[1] = VecX::Unit(8, 0);
  tv.annotations.features[2] = VecX::Unit(8, 1);

  TrainConfig c = small_config(1);
  c.lambda_rgb = c.lambda_depth = c.lambda_normal = c.lambda_distill = 0.0;
  c.pair_budget = 6;
  const Decoder dec = Decoder::random(4, 8, 8, 1);
  const std::uint64_t pair_seed = 77;
  const StepGradients step = evaluate_losses(f, dec, tv, nullptr, c, 0, pair_seed);

  // Pixels with a non-zero feature gradient: pair ends whose partner is covered.
  const RenderOutput out = render_forward(f, tv.view.camera, kFeatureChannel);
  auto covered = [&](int x, int y) {
    for (int k = 0; k < 4; ++k) {
      if (out.feature.at(x, y, k) != 0.0) return true;
    }
    return false;
  };
  std::vector<Vec2> active;
  const PairSample sample = sample_pairs(tv.annotations, c.pair_budget, c.pixels_per_mask, pair_seed);
  ASSERT_EQ(sample.pairs.size(), 6u);
  for (const PixelPair& p : sample.pairs) {
    if (covered(p.vx, p.vy)) active.emplace_back(p.ux, p.uy);
    if (covered(p.ux, p.uy)) active.emplace_back(p.vx, p.vy);
  }

  const RasterSettings st;
  int reached = 0, untouched = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto proj = sg::test::oracle_project(f.primitives[i], tv.view.camera, st.cov2d_inflation, st.near_plane);
    bool touches = false;
    for (const Vec2& px : active) {
      if (!proj.visible) break;
      const Vec2 d = px - proj.mean;
      const double maha = d.dot(proj.cov.inverse() * d);
      touches |= maha <= st.sigma_cutoff * st.sigma_cutoff && f.primitives[i].opacity * std::exp(-0.5 * maha) >= st.min_alpha;
    }
    double norm = 0.0;
    for (int k = 0; k < 4; ++k) norm += std::abs(step.field.latent[i * 4 + k]);
    if (touches) {
      EXPECT_GT(norm, 0.0) << "primitive " << i;
      ++reached;
    } else {
      EXPECT_EQ(norm, 0.0) << "primitive " << i;
      ++untouched;
    }
  }
  EXPECT_GT(reached, 0);
  EXPECT_GT(untouched, 0);
}
