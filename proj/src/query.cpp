#include "splatgrasp/query.hpp"
#include "splatgrasp/error.hpp"
#include "splatgrasp/geometry.hpp"
#include "splatgrasp/rasterizer.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <cmath>

namespace sg {

void save_embeddings(const std::filesystem::path& path, const std::vector<NamedEmbedding>& entries) {
  const int dim = entries.empty() ? 0 : static_cast<int>(entries.front().vector.size());
  detail::BinaryWriter w(path);
  w.magic("GGQE");
  w.u32(static_cast<std::uint32_t>(entries.size()));
  w.u32(dim);
  for (const NamedEmbedding& e : entries) {
    if (e.vector.size() != dim) throw Error(ErrorCode::InvalidArgument, "embeddings differ in size");
    if (e.name.size() > 0xffff) throw Error(ErrorCode::InvalidArgument, "embedding name too long");
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    for (double v : e.vector) w.f32(v);
  }
  w.finish();
}

std::vector<NamedEmbedding> load_embeddings(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("GGQE");
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  if (dim > (1u << 16)) throw Error(ErrorCode::ParseError, "'" + path.string() + "': implausible d_clip");
  std::vector<NamedEmbedding> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedEmbedding e;
    e.name = r.bytes(r.u16());
    e.vector.resize(dim);
    for (double& v : e.vector) v = r.f32();
    out.push_back(std::move(e));
  }
  if (!r.at_end()) throw Error(ErrorCode::ParseError, "'" + path.string() + "': trailing bytes");
  return out;
}

void QueryEmbeddings::validate() const {
  if (canonical.empty()) throw Error(ErrorCode::InvariantViolation, "no canonical embeddings");
  auto check = [&](const VecX& v, const std::string& what) {
    if (v.size() != query.size()) throw Error(ErrorCode::InvariantViolation, what + " differs in size");
    if (std::abs(v.norm() - 1.0) > 1e-6) throw Error(ErrorCode::InvariantViolation, what + " is not unit");
  };
  check(query, "query embedding '" + name + "'");
  for (const VecX& c : canonical) check(c, "canonical embedding");
}

QueryEmbeddings QueryEmbeddings::from_entries(const std::vector<NamedEmbedding>& entries,
                                              const std::string& query_name) {
  QueryEmbeddings q;
  q.name = query_name;
  bool found = false;
  for (const NamedEmbedding& e : entries) {
    if (e.name == query_name) {
      q.query = e.vector;
      found = true;
    }
  }
  if (!found) throw Error(ErrorCode::InvalidArgument, "no embedding named '" + query_name + "'");
  for (const char* phrase : kCanonicalPhrases) {
    for (const NamedEmbedding& e : entries) {
      if (e.name == phrase) q.canonical.push_back(e.vector);
    }
  }
  q.validate();
  return q;
}

double relevance_score(double query_dot, std::span<const double> canonical_dots) {
  // Each pairwise softmax is sigmoid(q - c); the minimum pairs with the largest c.
  const double c = *std::max_element(canonical_dots.begin(), canonical_dots.end());
  const double x = query_dot - c;
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ImageD relevance(const ImageD& feature_map, const Decoder& decoder, const QueryEmbeddings& embeddings) {
  embeddings.validate();
  if (feature_map.channels() != decoder.input_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "feature map depth differs from the decoder input size");
  }
  if (embeddings.query.size() != decoder.output_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "embedding size differs from the decoder output size");
  }
  const int d = decoder.input_dim();
  const int hidden = decoder.hidden_dim();
  const int nc = static_cast<int>(embeddings.canonical.size());

  // y = W2 h + b2. Dot products with the targets reduce to hidden-space
  // projections, and |y|^2 = |R h + Q^T b2|^2 + |b2 - Q Q^T b2|^2 with W2 = Q R.
  MatX targets(decoder.output_dim(), nc + 1);
  targets.col(0) = embeddings.query;
  for (int i = 0; i < nc; ++i) targets.col(i + 1) = embeddings.canonical[i];
  const MatX proj = targets.transpose() * decoder.w2;  // (nc+1) x hidden
  const VecX proj_bias = targets.transpose() * decoder.b2;

  Eigen::HouseholderQR<MatX> qr(decoder.w2);
  const int rank_rows = std::min<int>(hidden, decoder.output_dim());
  const MatX r_full = qr.matrixQR().topRows(rank_rows);
  const VecX qtb = (qr.householderQ().transpose() * decoder.b2).head(rank_rows);
  const double residual = std::max(0.0, decoder.b2.squaredNorm() - qtb.squaredNorm());

  const std::size_t count = feature_map.pixel_count();
  ImageD out(feature_map.width(), feature_map.height(), 1);
  constexpr std::size_t kChunk = 4096;
  const Eigen::Map<const MatX> latents(feature_map.values().data(), d, static_cast<Eigen::Index>(count));
  std::vector<double> cdots(nc);
  for (std::size_t start = 0; start < count; start += kChunk) {
    const Eigen::Index n = static_cast<Eigen::Index>(std::min(kChunk, count - start));
    MatX h = decoder.w1 * latents.middleCols(static_cast<Eigen::Index>(start), n);
    h.colwise() += decoder.b1;
    h = h.cwiseMax(0.0);
    MatX dots = proj * h;
    dots.colwise() += proj_bias;
    MatX z = r_full.triangularView<Eigen::Upper>() * h;
    z.colwise() += qtb;
    const Eigen::RowVectorXd norms = (z.colwise().squaredNorm().array() + residual).sqrt();
    for (Eigen::Index j = 0; j < n; ++j) {
      const double inv = norms[j] > 0.0 ? 1.0 / norms[j] : 0.0;
      for (int i = 0; i < nc; ++i) cdots[i] = dots(i + 1, j) * inv;
      out.values()[start + j] = relevance_score(dots(0, j) * inv, cdots);
    }
  }
  return out;
}

Mask largest_component(const Mask& mask) {
  const int w = mask.width(), h = mask.height();
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<std::size_t> sizes;
  std::vector<int> stack;
  for (int start = 0; start < w * h; ++start) {
    if (!mask.values()[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t size = 0;
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++size;
      const int x = p % w, y = p / w;
      const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& q : nbr) {
        if (q[0] < 0 || q[0] >= w || q[1] < 0 || q[1] >= h) continue;
        const int qi = q[1] * w + q[0];
        if (mask.values()[qi] && label[qi] < 0) {
          label[qi] = id;
          stack.push_back(qi);
        }
      }
    }
    sizes.push_back(size);
  }
  Mask out(w, h, 1);
  if (sizes.empty()) return out;
  const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < label.size(); ++i) out.values()[i] = label[i] == best;
  return out;
}

Localization localize(const GaussianField& field, std::span<const Camera> cameras, const Decoder& decoder,
                      const QueryEmbeddings& embeddings, const LocalizeOptions& options) {
  if (cameras.empty()) throw Error(ErrorCode::InvalidArgument, "localize needs at least one view");
  Localization loc;
  bool any = false;
  for (const Camera& cam : cameras) {
    const RenderOutput r = render_forward(field, cam, kFeatureChannel | kDepthChannel);
    LocalizedView v;
    v.camera = cam;
    v.relevance = r.feature.empty() ? ImageD(cam.width, cam.height, 1, 0.5) : relevance(r.feature, decoder, embeddings);
    v.mask = Mask(cam.width, cam.height, 1);
    Mask covered_mask(cam.width, cam.height, 1);
    for (std::size_t i = 0; i < v.mask.values().size(); ++i) {
      v.mask.values()[i] = v.relevance.values()[i] >= options.threshold;
      covered_mask.values()[i] = v.mask.values()[i] && r.alpha.values()[i] >= options.min_alpha;
      any |= v.mask.values()[i] != 0;
    }
    v.selected = options.largest_component ? largest_component(covered_mask) : covered_mask;
    v.depth = ImageD(cam.width, cam.height, 1);
    for (std::size_t i = 0; i < v.depth.values().size(); ++i) {
      const double a = r.alpha.values()[i];
      if (a >= options.min_alpha) v.depth.values()[i] = r.depth.values()[i] / a;
    }
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        if (v.selected.at(x, y) && v.depth.at(x, y) > 0.0) loc.points.push_back(cam.unproject_world(x, y, v.depth.at(x, y)));
      }
    }
    loc.views.push_back(std::move(v));
  }
  if (!any) throw Error(ErrorCode::EmptyQueryResult, "no pixel reaches the relevance threshold");
  for (const Vec3& p : loc.points) loc.bbox.extend(p);
  if (loc.points.empty()) return loc;
  try {
    loc.hull = convex_hull(loc.points);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateInput) throw;
    // Flat or tiny selections: use the bbox grown by 1 mm as the hull.
    std::vector<Vec3> corners;
    const Vec3 lo = loc.bbox.min - Vec3::Constant(1e-3), hi = loc.bbox.max + Vec3::Constant(1e-3);
    for (int k = 0; k < 8; ++k) corners.emplace_back(k & 1 ? hi.x() : lo.x(), k & 2 ? hi.y() : lo.y(), k & 4 ? hi.z() : lo.z());
    loc.hull = convex_hull(corners);
    loc.hull_from_bbox = true;
    loc.bbox.extend(lo);
    loc.bbox.extend(hi);
  }
  return loc;
}

bool localization_hit(const ImageD& relevance, const Mask& gt_mask) {
  if (relevance.width() != gt_mask.width() || relevance.height() != gt_mask.height()) {
    throw Error(ErrorCode::ShapeMismatch, "relevance and ground-truth mask differ in size");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < relevance.pixel_count(); ++i) {
    if (relevance.values()[i] > relevance.values()[best]) best = i;
  }
  return gt_mask.values()[best] != 0;
}

}  // namespace sg
