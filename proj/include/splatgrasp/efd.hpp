#pragma once

#include "splatgrasp/common.hpp"
#include "splatgrasp/image.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace sg {

/// Instance masks of one view and the embedding of every mask.
struct ViewAnnotations {
  std::string view_id;
  IdMap instance_map;                      // 0 = unannotated
  std::map<std::uint16_t, VecX> features;  // id -> unit d_clip vector

  int feature_dim() const { return features.empty() ? 0 : static_cast<int>(features.begin()->second.size()); }
  /// Throws InvariantViolation on missing ids, non-unit or mixed-size vectors.
  void validate() const;
};

struct PixelPair {
  int ux = 0, uy = 0;
  int vx = 0, vy = 0;
  std::uint16_t id = 0;
};

struct SamplePixel {
  int x = 0, y = 0;
  std::uint16_t id = 0;
};

struct PairSample {
  std::vector<PixelPair> pairs;
  std::vector<SamplePixel> pixels;
};

/// Largest-remainder apportionment of `total` over `weights`. Ties in the
/// fractional part go to the larger weight, then to the lower index.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& weights, std::size_t total);

/// n pairs split over masks with >= 2 pixels in proportion to area, plus
/// p distillation pixels per mask (with replacement when the mask is smaller).
PairSample sample_pairs(const ViewAnnotations& annotations, std::size_t n, std::size_t p, std::uint64_t seed);

struct FeatureLoss {
  double value = 0.0;
  ImageD grad;  // d(loss) / d(feature map)
};

/// 1 - mean over pairs of L(u) . L(v).
FeatureLoss contrastive_loss(const ImageD& feature_map, const PairSample& sample);

/// Two-layer perceptron mapping latent features to the embedding space.
struct Decoder {
  MatX w1;  // hidden x d_latent
  VecX b1;
  MatX w2;  // d_clip x hidden
  VecX b2;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int output_dim() const { return static_cast<int>(w2.rows()); }

  static Decoder random(int d_latent, int hidden, int d_clip, std::uint64_t seed);
  static Decoder zeros(int d_latent, int hidden, int d_clip);

  bool operator==(const Decoder& other) const;
};

struct DecodeResult {
  VecX embedding;  // unit, or zero when degenerate
  bool degenerate = false;
};

/// layer1 -> ReLU -> layer2 -> L2 normalization.
DecodeResult decode(const Decoder& decoder, const VecX& latent);
/// layer1 -> ReLU -> layer2 without the normalization.
VecX decode_raw(const Decoder& decoder, const VecX& latent);

struct DecoderGradients {
  MatX w1;
  VecX b1;
  MatX w2;
  VecX b2;

  explicit DecoderGradients(const Decoder& shape);
  DecoderGradients() = default;
};

struct DistillLoss {
  double value = 0.0;
  ImageD grad;                // d(loss) / d(feature map)
  DecoderGradients decoder;   // d(loss) / d(decoder parameters)
};

/// 1 - mean over sampled pixels of Psi(L) . F. With `normalize` the decoder
/// output is L2-normalized before the dot product.
DistillLoss distill_loss(const ImageD& feature_map, const PairSample& sample, const Decoder& decoder,
                         const ViewAnnotations& annotations, bool normalize = true);

/// Little-endian "GGDC": u32 d_latent, u32 hidden, u32 d_clip, then w1, b1, w2,
/// b2 as f32 in row-major order.
void save_decoder(const std::filesystem::path& path, const Decoder& decoder);
Decoder load_decoder(const std::filesystem::path& path);

}  // namespace sg
