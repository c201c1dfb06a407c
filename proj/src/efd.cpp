#include "splatgrasp/efd.hpp"
#include "splatgrasp/error.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sg {

void ViewAnnotations::validate() const {
  const std::string where = "annotations of view '" + view_id + "'";
  int dim = -1;
  for (const auto& [id, f] : features) {
    if (dim < 0) dim = static_cast<int>(f.size());
    if (f.size() != dim) throw Error(ErrorCode::InvariantViolation, where + ": mixed feature sizes");
    if (std::abs(f.norm() - 1.0) > 1e-6) {
      throw Error(ErrorCode::InvariantViolation, where + ": feature of id " + std::to_string(id) + " is not unit");
    }
  }
  for (std::uint16_t id : instance_map.values()) {
    if (id != 0 && !features.count(id)) {
      throw Error(ErrorCode::InvariantViolation, where + ": id " + std::to_string(id) + " has no feature");
    }
  }
}

std::vector<std::size_t> apportion(const std::vector<std::size_t>& weights, std::size_t total) {
  const std::size_t sum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  std::vector<std::size_t> out(weights.size(), 0);
  if (sum == 0) return out;
  std::vector<std::size_t> remainder(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    // Exact integer arithmetic: quota = total * w / sum.
    const unsigned __int128 num = static_cast<unsigned __int128>(total) * weights[i];
    out[i] = static_cast<std::size_t>(num / sum);
    remainder[i] = static_cast<std::size_t>(num % sum);
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    return weights[a] > weights[b];
  });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[order[k % order.size()]];
  return out;
}

PairSample sample_pairs(const ViewAnnotations& annotations, std::size_t n, std::size_t p, std::uint64_t seed) {
  const IdMap& map = annotations.instance_map;
  std::map<std::uint16_t, std::vector<std::pair<int, int>>> pixels;
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (const std::uint16_t id = map.at(x, y)) pixels[id].push_back({x, y});
    }
  }
  std::vector<std::uint16_t> eligible;
  std::vector<std::size_t> areas;
  for (const auto& [id, px] : pixels) {
    if (px.size() >= 2) {
      eligible.push_back(id);
      areas.push_back(px.size());
    }
  }
  if (eligible.empty()) {
    throw Error(ErrorCode::NoMasks, "view '" + annotations.view_id + "' has no mask with at least 2 pixels");
  }
  if (n < eligible.size()) {
    throw Error(ErrorCode::InvalidArgument, "pair budget is smaller than the number of masks");
  }

  std::mt19937_64 rng(seed);
  PairSample out;
  const std::vector<std::size_t> counts = apportion(areas, n);
  out.pairs.reserve(n);
  for (std::size_t m = 0; m < eligible.size(); ++m) {
    const auto& px = pixels[eligible[m]];
    std::uniform_int_distribution<std::size_t> pick(0, px.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_other(0, px.size() - 2);
    for (std::size_t k = 0; k < counts[m]; ++k) {
      const std::size_t a = pick(rng);
      std::size_t b = pick_other(rng);
      if (b >= a) ++b;
      out.pairs.push_back({px[a].first, px[a].second, px[b].first, px[b].second, eligible[m]});
    }
  }
  for (const auto& [id, px] : pixels) {
    if (px.size() >= p) {
      std::vector<std::size_t> idx(px.size());
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t k = 0; k < p; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
        std::swap(idx[k], idx[pick(rng)]);
        out.pixels.push_back({px[idx[k]].first, px[idx[k]].second, id});
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, px.size() - 1);
      for (std::size_t k = 0; k < p; ++k) {
        const auto& q = px[pick(rng)];
        out.pixels.push_back({q.first, q.second, id});
      }
    }
  }
  return out;
}

FeatureLoss contrastive_loss(const ImageD& feature_map, const PairSample& sample) {
  FeatureLoss out;
  out.grad = ImageD(feature_map.width(), feature_map.height(), feature_map.channels());
  if (sample.pairs.empty()) return out;
  const int d = feature_map.channels();
  const double inv = 1.0 / sample.pairs.size();
  double sum = 0.0;
  for (const PixelPair& pr : sample.pairs) {
    const double* a = feature_map.pixel(pr.ux, pr.uy);
    const double* b = feature_map.pixel(pr.vx, pr.vy);
    double* ga = out.grad.pixel(pr.ux, pr.uy);
    double* gb = out.grad.pixel(pr.vx, pr.vy);
    for (int c = 0; c < d; ++c) {
      sum += a[c] * b[c];
      ga[c] -= inv * b[c];
      gb[c] -= inv * a[c];
    }
  }
  out.value = 1.0 - sum * inv;
  return out;
}

Decoder Decoder::random(int d_latent, int hidden, int d_clip, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&](MatX& m, int rows, int cols) {
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / cols));
    m.resize(rows, cols);
    for (int j = 0; j < cols; ++j) {
      for (int i = 0; i < rows; ++i) m(i, j) = n(rng);
    }
  };
  Decoder dec;
  fill(dec.w1, hidden, d_latent);
  dec.b1 = VecX::Zero(hidden);
  fill(dec.w2, d_clip, hidden);
  dec.b2 = VecX::Zero(d_clip);
  return dec;
}

Decoder Decoder::zeros(int d_latent, int hidden, int d_clip) {
  return {MatX::Zero(hidden, d_latent), VecX::Zero(hidden), MatX::Zero(d_clip, hidden), VecX::Zero(d_clip)};
}

bool Decoder::operator==(const Decoder& other) const {
  return w1.rows() == other.w1.rows() && w1.cols() == other.w1.cols() && w2.rows() == other.w2.rows() &&
         w1 == other.w1 && b1 == other.b1 && w2 == other.w2 && b2 == other.b2;
}

VecX decode_raw(const Decoder& decoder, const VecX& latent) {
  if (latent.size() != decoder.input_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "decoder input size differs from the latent size");
  }
  const VecX h = (decoder.w1 * latent + decoder.b1).cwiseMax(0.0);
  return decoder.w2 * h + decoder.b2;
}

DecodeResult decode(const Decoder& decoder, const VecX& latent) {
  DecodeResult r;
  r.embedding = decode_raw(decoder, latent);
  const double norm = r.embedding.norm();
  if (!(norm > 0.0)) {
    r.degenerate = true;
    r.embedding.setZero();
  } else {
    r.embedding /= norm;
  }
  return r;
}

DecoderGradients::DecoderGradients(const Decoder& shape)
    : w1(MatX::Zero(shape.w1.rows(), shape.w1.cols())),
      b1(VecX::Zero(shape.b1.size())),
      w2(MatX::Zero(shape.w2.rows(), shape.w2.cols())),
      b2(VecX::Zero(shape.b2.size())) {}

DistillLoss distill_loss(const ImageD& feature_map, const PairSample& sample, const Decoder& decoder,
                         const ViewAnnotations& annotations, bool normalize) {
  DistillLoss out;
  out.grad = ImageD(feature_map.width(), feature_map.height(), feature_map.channels());
  out.decoder = DecoderGradients(decoder);
  if (sample.pixels.empty()) return out;
  const int d = feature_map.channels();
  const double inv = 1.0 / sample.pixels.size();
  double sum = 0.0;
  VecX latent(d);
  for (const SamplePixel& px : sample.pixels) {
    const auto it = annotations.features.find(px.id);
    if (it == annotations.features.end()) {
      throw Error(ErrorCode::MissingTargetFeature,
                  "view '" + annotations.view_id + "': no target feature for mask " + std::to_string(px.id));
    }
    const VecX& target = it->second;
    for (int c = 0; c < d; ++c) latent[c] = feature_map.at(px.x, px.y, c);
    const VecX pre = decoder.w1 * latent + decoder.b1;
    const VecX h = pre.cwiseMax(0.0);
    const VecX y = decoder.w2 * h + decoder.b2;

    VecX dy;  // d(loss)/dy for this pixel
    if (normalize) {
      const double norm = y.norm();
      if (!(norm > 0.0)) continue;  // degenerate output: zero similarity and no gradient
      const VecX yn = y / norm;
      const double dot = yn.dot(target);
      sum += dot;
      dy = -inv * (target - yn * dot) / norm;
    } else {
      sum += y.dot(target);
      dy = -inv * target;
    }
    out.decoder.w2.noalias() += dy * h.transpose();
    out.decoder.b2 += dy;
    VecX dh = decoder.w2.transpose() * dy;
    for (int k = 0; k < dh.size(); ++k) {
      if (pre[k] <= 0.0) dh[k] = 0.0;
    }
    out.decoder.w1.noalias() += dh * latent.transpose();
    out.decoder.b1 += dh;
    const VecX dl = decoder.w1.transpose() * dh;
    double* g = out.grad.pixel(px.x, px.y);
    for (int c = 0; c < d; ++c) g[c] += dl[c];
  }
  out.value = 1.0 - sum * inv;
  return out;
}

void save_decoder(const std::filesystem::path& path, const Decoder& decoder) {
  detail::BinaryWriter w(path);
  w.magic("GGDC");
  w.u32(decoder.input_dim());
  w.u32(decoder.hidden_dim());
  w.u32(decoder.output_dim());
  auto mat = [&](const MatX& m) {
    for (int i = 0; i < m.rows(); ++i) {
      for (int j = 0; j < m.cols(); ++j) w.f32(m(i, j));
    }
  };
  mat(decoder.w1);
  for (double v : decoder.b1) w.f32(v);
  mat(decoder.w2);
  for (double v : decoder.b2) w.f32(v);
  w.finish();
}

Decoder load_decoder(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("GGDC");
  const int d = static_cast<int>(r.u32());
  const int h = static_cast<int>(r.u32());
  const int c = static_cast<int>(r.u32());
  if (d <= 0 || h <= 0 || c <= 0 || d > 4096 || h > 65536 || c > 65536) {
    throw Error(ErrorCode::ParseError, "'" + path.string() + "': implausible decoder dimensions");
  }
  Decoder dec = Decoder::zeros(d, h, c);
  auto mat = [&](MatX& m) {
    for (int i = 0; i < m.rows(); ++i) {
      for (int j = 0; j < m.cols(); ++j) m(i, j) = r.f32();
    }
  };
  mat(dec.w1);
  for (double& v : dec.b1) v = r.f32();
  mat(dec.w2);
  for (double& v : dec.b2) v = r.f32();
  if (!r.at_end()) throw Error(ErrorCode::ParseError, "'" + path.string() + "': trailing bytes");
  return dec;
}

}  // namespace sg
