#pragma once

#include "splatgrasp/camera.hpp"
#include "splatgrasp/efd.hpp"
#include "splatgrasp/error.hpp"
#include "splatgrasp/gaussian_field.hpp"
#include "splatgrasp/geometry.hpp"
#include "splatgrasp/rasterizer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace sg {

struct TrainConfig {
  int iterations = 3000;

  double lr_mean = 1.6e-4;
  double lr_mean_final = 1.6e-6;  // exponential decay target at the last iteration
  double lr_sh = 2.5e-3;          // degree 0; higher degrees use lr_sh / 20
  double lr_opacity = 5e-2;       // on logit(opacity)
  double lr_scale = 5e-3;         // on log(scale)
  double lr_rotation = 1e-3;
  double lr_latent = 1e-2;
  double lr_decoder = 1e-3;

  double lambda_rgb = 1.0;
  double lambda_depth = 0.5;
  double lambda_normal = 0.05;
  double lambda_contr = 0.1;
  double lambda_distill = 0.1;

  int pair_budget = 4096;     // n
  int pixels_per_mask = 8;    // p
  std::uint64_t seed = 0;
  bool fine_tune = false;

  int max_sh_degree = 3;
  int sh_degree_interval = 1000;
  int tile_size = 16;
  int decoder_hidden = 128;
  bool normalize_decoder_output = true;
  bool prune = false;
  double prune_opacity = 0.005;
  int prune_interval = 500;

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;
  /// Iterations actually run: ceil(iterations / 10) in fine-tune mode.
  int effective_iterations() const;
};

/// `key = value` lines, `#` comments; keys are the TrainConfig field names.
TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const std::filesystem::path& path, const TrainConfig& config);
TrainConfig parse_train_config(const std::string& text, const std::string& source = "<string>");

struct LossReport {
  int iteration = 0;
  int view = 0;
  double rgb = 0.0;
  double depth = 0.0;
  double normal = 0.0;
  double contrastive = 0.0;
  double distill = 0.0;
  double total = 0.0;
  std::size_t valid_pixels = 0;  // m
};

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossReport>& reports);

struct TrainingView {
  CameraView view;
  ViewAnnotations annotations;
};

struct AdamMoments {
  std::vector<double> m, v;
};

/// Adam moments per parameter block, indexed like the field and decoder they
/// were trained with. Empty after a zero-iteration run.
struct OptimizerState {
  static constexpr const char* kBlockNames[] = {"mean", "rotation", "log_scale", "opacity_logit", "sh",
                                                "latent", "w1",      "b1",        "w2",            "b2"};
  int steps = 0;
  std::vector<AdamMoments> blocks;
};

struct TrainResult {
  GaussianField field;
  Decoder decoder;
  std::vector<LossReport> reports;
  OptimizerState optimizer;
};

/// Raised when the total loss turns non-finite. Carries the state after the
/// last finite iteration.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, TrainResult last_good)
      : Error(ErrorCode::DivergenceDetected, message), last_good_(std::move(last_good)) {}
  const TrainResult& last_good() const { return last_good_; }

 private:
  TrainResult last_good_;
};

using TrainCallback = std::function<void(const LossReport&)>;

/// Fits `field` (and the decoder) to the views. Without `decoder` a fresh one
/// is drawn from the config seed. `view_subset`, when non-empty, restricts
/// sampling to those view indices. `resume` continues Adam from an earlier
/// run on the same primitives.
TrainResult train(const GaussianField& field, std::span<const TrainingView> views, const TrainConfig& config,
                  const Decoder* decoder = nullptr, const TrainCallback& callback = {},
                  std::span<const int> view_subset = {}, const OptimizerState* resume = nullptr);

struct StepGradients {
  LossReport report;
  FieldGradients field;
  DecoderGradients decoder;
};

/// Renders one view, evaluates the five weighted losses and back-propagates
/// them to the field and decoder. `normal_target` may be null to skip the
/// normal term. `pair_seed` drives the pixel sampling.
StepGradients evaluate_losses(const GaussianField& field, const Decoder& decoder, const TrainingView& view,
                              const NormalMap* normal_target, const TrainConfig& config, int sh_degree,
                              std::uint64_t pair_seed);

}  // namespace sg
