#include "splatgrasp/trainer.hpp"
#include "splatgrasp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <sstream>

namespace sg {
namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEpsilon = 1e-15;

/// Adam moments for one flat parameter block.
class AdamBlock {
 public:
  void resize(std::size_t n) {
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
  }

  /// `lr_of(i)` gives the step size of element i.
  template <typename LrFn>
  void step(double* params, const double* grads, int t, LrFn&& lr_of) {
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i] * grads[i];
      params[i] -= lr_of(i) * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEpsilon);
    }
  }

  void export_to(AdamMoments& out) {
    out.m = std::move(m_);
    out.v = std::move(v_);
  }

  void import_from(const AdamMoments& in, const char* name) {
    if (in.m.size() != m_.size() || in.v.size() != v_.size()) {
      throw Error(ErrorCode::ShapeMismatch, std::string("optimizer state '") + name + "' does not match the field");
    }
    m_ = in.m;
    v_ = in.v;
  }

  void keep(const std::vector<bool>& alive, std::size_t stride) {
    std::size_t w = 0;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (!alive[i]) continue;
      for (std::size_t k = 0; k < stride; ++k) {
        m_[w * stride + k] = m_[i * stride + k];
        v_[w * stride + k] = v_[i * stride + k];
      }
      ++w;
    }
    m_.resize(w * stride);
    v_.resize(w * stride);
  }

 private:
  std::vector<double> m_, v_;
};

double logit(double p) {
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Unconstrained optimizer view of the field.
struct RawParams {
  std::size_t count = 0;
  int dim = 0;
  std::vector<double> mean, rotation, log_scale, opacity_logit, sh, latent;

  void load(const GaussianField& f) {
    count = f.size();
    dim = f.latent_dim();
    mean.resize(3 * count);
    rotation.resize(4 * count);
    log_scale.resize(3 * count);
    opacity_logit.resize(count);
    sh.resize(3 * kShCoeffCount * count);
    latent.resize(count * dim);
    for (std::size_t i = 0; i < count; ++i) {
      const GaussianPrimitive& g = f.primitives[i];
      for (int k = 0; k < 3; ++k) {
        mean[3 * i + k] = g.mean[k];
        log_scale[3 * i + k] = std::log(g.scale[k]);
      }
      for (int k = 0; k < 4; ++k) rotation[4 * i + k] = g.rotation[k];
      opacity_logit[i] = logit(g.opacity);
      for (int k = 0; k < kShCoeffCount; ++k) {
        for (int c = 0; c < 3; ++c) sh[(i * kShCoeffCount + k) * 3 + c] = g.sh[k][c];
      }
      for (int k = 0; k < dim; ++k) latent[i * dim + k] = g.latent[k];
    }
  }

  void store(GaussianField& f) const {
    f.primitives.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      GaussianPrimitive& g = f.primitives[i];
      for (int k = 0; k < 3; ++k) {
        g.mean[k] = mean[3 * i + k];
        g.scale[k] = std::exp(log_scale[3 * i + k]);
      }
      for (int k = 0; k < 4; ++k) g.rotation[k] = rotation[4 * i + k];
      g.opacity = sigmoid(opacity_logit[i]);
      for (int k = 0; k < kShCoeffCount; ++k) {
        for (int c = 0; c < 3; ++c) g.sh[k][c] = sh[(i * kShCoeffCount + k) * 3 + c];
      }
      g.latent.resize(dim);
      for (int k = 0; k < dim; ++k) g.latent[k] = latent[i * dim + k];
    }
  }

  void renormalize() {
    for (std::size_t i = 0; i < count; ++i) {
      Eigen::Map<Vec4> q(&rotation[4 * i]);
      const double qn = q.norm();
      if (qn > 0.0) {
        q /= qn;
      } else {
        q = Vec4(1, 0, 0, 0);
      }
      if (dim > 0) {
        Eigen::Map<VecX> l(&latent[i * dim], dim);
        const double ln = l.norm();
        if (ln > 0.0) l /= ln;
      }
    }
  }
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

bool has_masks(const ViewAnnotations& ann) {
  if (ann.instance_map.empty()) return false;
  std::map<std::uint16_t, int> area;
  for (std::uint16_t id : ann.instance_map.values()) {
    if (id && ++area[id] >= 2) return true;
  }
  return false;
}

void add_scaled(ImageD& dst, const ImageD& src, double scale) {
  if (dst.empty()) {
    dst = ImageD(src.width(), src.height(), src.channels());
  }
  for (std::size_t i = 0; i < src.values().size(); ++i) dst.values()[i] += scale * src.values()[i];
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, "train config: " + what); };
  if (iterations < 0) fail("iterations must be >= 0");
  for (double w : {lambda_rgb, lambda_depth, lambda_normal, lambda_contr, lambda_distill}) {
    if (!(w >= 0.0)) fail("loss weights must be >= 0");
  }
  for (double lr : {lr_mean, lr_mean_final, lr_sh, lr_opacity, lr_scale, lr_rotation, lr_latent, lr_decoder}) {
    if (!(lr >= 0.0)) fail("learning rates must be >= 0");
  }
  if (lr_mean > 0.0 && !(lr_mean_final > 0.0)) fail("lr_mean_final must be positive");
  if (pair_budget < 1) fail("pair_budget must be >= 1");
  if (pixels_per_mask < 1) fail("pixels_per_mask must be >= 1");
  if (max_sh_degree < 0 || max_sh_degree > kMaxShDegree) fail("max_sh_degree must be in [0, 3]");
  if (sh_degree_interval < 1) fail("sh_degree_interval must be >= 1");
  if (tile_size != 8 && tile_size != 16 && tile_size != 32) fail("tile_size must be 8, 16 or 32");
  if (decoder_hidden < 1) fail("decoder_hidden must be >= 1");
  if (prune_interval < 1) fail("prune_interval must be >= 1");
}

int TrainConfig::effective_iterations() const { return fine_tune ? (iterations + 9) / 10 : iterations; }

TrainConfig parse_train_config(const std::string& text, const std::string& source) {
  TrainConfig c;
  std::map<std::string, std::function<void(const std::string&)>> setters;
  auto num = [&](double& dst) { return [&dst](const std::string& v) { dst = std::stod(v); }; };
  auto integer = [&](int& dst) { return [&dst](const std::string& v) { dst = std::stoi(v); }; };
  auto flag = [&](bool& dst) {
    return [&dst](const std::string& v) {
      if (v == "true" || v == "1") {
        dst = true;
      } else if (v == "false" || v == "0") {
        dst = false;
      } else {
        throw std::invalid_argument("expected true or false");
      }
    };
  };
  setters["iterations"] = integer(c.iterations);
  setters["lr_mean"] = num(c.lr_mean);
  setters["lr_mean_final"] = num(c.lr_mean_final);
  setters["lr_sh"] = num(c.lr_sh);
  setters["lr_opacity"] = num(c.lr_opacity);
  setters["lr_scale"] = num(c.lr_scale);
  setters["lr_rotation"] = num(c.lr_rotation);
  setters["lr_latent"] = num(c.lr_latent);
  setters["lr_decoder"] = num(c.lr_decoder);
  setters["lambda_rgb"] = num(c.lambda_rgb);
  setters["lambda_depth"] = num(c.lambda_depth);
  setters["lambda_normal"] = num(c.lambda_normal);
  setters["lambda_contr"] = num(c.lambda_contr);
  setters["lambda_distill"] = num(c.lambda_distill);
  setters["pair_budget"] = integer(c.pair_budget);
  setters["pixels_per_mask"] = integer(c.pixels_per_mask);
  setters["seed"] = [&c](const std::string& v) { c.seed = std::stoull(v); };
  setters["fine_tune"] = flag(c.fine_tune);
  setters["max_sh_degree"] = integer(c.max_sh_degree);
  setters["sh_degree_interval"] = integer(c.sh_degree_interval);
  setters["tile_size"] = integer(c.tile_size);
  setters["decoder_hidden"] = integer(c.decoder_hidden);
  setters["normalize_decoder_output"] = flag(c.normalize_decoder_output);
  setters["prune"] = flag(c.prune);
  setters["prune_opacity"] = num(c.prune_opacity);
  setters["prune_interval"] = integer(c.prune_interval);

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw Error(ErrorCode::ParseError, where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorCode::ParseError, where + ": unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, where + ": bad value '" + value + "' for '" + key + "'");
    }
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "file not found: '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), path.string());
}

void save_train_config(const std::filesystem::path& path, const TrainConfig& c) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out << std::setprecision(17) << std::boolalpha;
  out << "iterations = " << c.iterations << "\n"
      << "lr_mean = " << c.lr_mean << "\nlr_mean_final = " << c.lr_mean_final << "\nlr_sh = " << c.lr_sh
      << "\nlr_opacity = " << c.lr_opacity << "\nlr_scale = " << c.lr_scale << "\nlr_rotation = " << c.lr_rotation
      << "\nlr_latent = " << c.lr_latent << "\nlr_decoder = " << c.lr_decoder << "\n"
      << "lambda_rgb = " << c.lambda_rgb << "\nlambda_depth = " << c.lambda_depth
      << "\nlambda_normal = " << c.lambda_normal << "\nlambda_contr = " << c.lambda_contr
      << "\nlambda_distill = " << c.lambda_distill << "\n"
      << "pair_budget = " << c.pair_budget << "\npixels_per_mask = " << c.pixels_per_mask << "\nseed = " << c.seed
      << "\nfine_tune = " << c.fine_tune << "\nmax_sh_degree = " << c.max_sh_degree
      << "\nsh_degree_interval = " << c.sh_degree_interval << "\ntile_size = " << c.tile_size
      << "\ndecoder_hidden = " << c.decoder_hidden << "\nnormalize_decoder_output = " << c.normalize_decoder_output
      << "\nprune = " << c.prune << "\nprune_opacity = " << c.prune_opacity
      << "\nprune_interval = " << c.prune_interval << "\n";
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossReport>& reports) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out << "iteration,view,rgb,depth,normal,contrastive,distill,total,valid_pixels\n" << std::setprecision(10);
  for (const LossReport& r : reports) {
    out << r.iteration << ',' << r.view << ',' << r.rgb << ',' << r.depth << ',' << r.normal << ','
        << r.contrastive << ',' << r.distill << ',' << r.total << ',' << r.valid_pixels << '\n';
  }
}

StepGradients evaluate_losses(const GaussianField& field, const Decoder& decoder, const TrainingView& tv,
                              const NormalMap* normal_target, const TrainConfig& config, int sh_degree,
                              std::uint64_t pair_seed) {
  RasterSettings st;
  st.tile_size = config.tile_size;
  st.sh_degree = sh_degree;
  const SplatCache cache = project(field, tv.view.camera, st);
  const RenderOutput out = rasterize(cache, field, kAllChannels);

  StepGradients step;
  step.decoder = DecoderGradients(decoder);
  LossReport& rep = step.report;
  RenderGradients grads;

  if (config.lambda_rgb > 0.0) {
    const LossResult r = photometric_loss(out.color, tv.view.rgb);
    rep.rgb = r.value;
    add_scaled(grads.color, r.grad, config.lambda_rgb);
  }
  if (config.lambda_depth > 0.0) {
    try {
      const LossResult r = depth_loss(out.depth, tv.view.depth);
      rep.depth = r.value;
      rep.valid_pixels = r.count;
      add_scaled(grads.depth, r.grad, config.lambda_depth);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoValidPixels) throw;
    }
  }
  if (config.lambda_normal > 0.0 && normal_target) {
    const LossResult r = normal_loss(out.normal, normal_target->normals, normal_target->valid);
    rep.normal = r.value;
    add_scaled(grads.normal, r.grad, config.lambda_normal);
  }
  const bool features = out.feature.channels() > 0 && has_masks(tv.annotations);
  if (features && (config.lambda_contr > 0.0 || config.lambda_distill > 0.0)) {
    const PairSample sample = sample_pairs(tv.annotations, config.pair_budget, config.pixels_per_mask, pair_seed);
    if (config.lambda_contr > 0.0) {
      const FeatureLoss r = contrastive_loss(out.feature, sample);
      rep.contrastive = r.value;
      add_scaled(grads.feature, r.grad, config.lambda_contr);
    }
    if (config.lambda_distill > 0.0) {
      DistillLoss r = distill_loss(out.feature, sample, decoder, tv.annotations, config.normalize_decoder_output);
      rep.distill = r.value;
      add_scaled(grads.feature, r.grad, config.lambda_distill);
      step.decoder.w1 = config.lambda_distill * r.decoder.w1;
      step.decoder.b1 = config.lambda_distill * r.decoder.b1;
      step.decoder.w2 = config.lambda_distill * r.decoder.w2;
      step.decoder.b2 = config.lambda_distill * r.decoder.b2;
    }
  }
  rep.total = config.lambda_rgb * rep.rgb + config.lambda_depth * rep.depth + config.lambda_normal * rep.normal +
              config.lambda_contr * rep.contrastive + config.lambda_distill * rep.distill;
  step.field = render_backward(cache, field, grads);
  return step;
}

TrainResult train(const GaussianField& initial, std::span<const TrainingView> views, const TrainConfig& config,
                  const Decoder* decoder_in, const TrainCallback& callback, std::span<const int> view_subset,
                  const OptimizerState* resume) {
  config.validate();
  TrainResult result;
  result.field = initial;
  const int d_clip = [&] {
    for (const TrainingView& v : views) {
      if (v.annotations.feature_dim() > 0) return v.annotations.feature_dim();
    }
    return 0;
  }();
  if (decoder_in) {
    result.decoder = *decoder_in;
  } else {
    result.decoder =
        Decoder::random(initial.latent_dim(), config.decoder_hidden, std::max(d_clip, 1), mix_seed(config.seed, 1));
  }
  const int total_iters = config.effective_iterations();
  if (total_iters == 0) return result;
  if (views.empty()) throw Error(ErrorCode::InvalidArgument, "training needs at least one view");
  if (initial.empty()) throw Error(ErrorCode::InvalidArgument, "training needs a non-empty field");

  std::vector<int> pool;
  if (view_subset.empty()) {
    for (int i = 0; i < static_cast<int>(views.size()); ++i) pool.push_back(i);
  } else {
    for (int i : view_subset) {
      if (i < 0 || i >= static_cast<int>(views.size())) throw Error(ErrorCode::InvalidArgument, "view index out of range");
      pool.push_back(i);
    }
  }

  std::vector<std::optional<NormalMap>> normal_targets(views.size());
  if (config.lambda_normal > 0.0) {
    for (int i : pool) {
      try {
        normal_targets[i] = normals_from_depth(views[i].view.depth, views[i].view.camera);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoValidNeighborhood) throw;
      }
    }
  }

  RawParams raw;
  raw.load(initial);
  raw.renormalize();
  raw.store(result.field);

  AdamBlock a_mean, a_rot, a_scale, a_opacity, a_sh, a_latent, a_w1, a_b1, a_w2, a_b2;
  auto size_blocks = [&] {
    a_mean.resize(raw.mean.size());
    a_rot.resize(raw.rotation.size());
    a_scale.resize(raw.log_scale.size());
    a_opacity.resize(raw.opacity_logit.size());
    a_sh.resize(raw.sh.size());
    a_latent.resize(raw.latent.size());
  };
  size_blocks();
  Decoder& dec = result.decoder;
  a_w1.resize(dec.w1.size());
  a_b1.resize(dec.b1.size());
  a_w2.resize(dec.w2.size());
  a_b2.resize(dec.b2.size());
  AdamBlock* blocks[] = {&a_mean, &a_rot, &a_scale, &a_opacity, &a_sh, &a_latent, &a_w1, &a_b1, &a_w2, &a_b2};
  int t0 = 0;
  if (resume) {
    if (resume->blocks.size() != std::size(blocks)) throw Error(ErrorCode::ShapeMismatch, "malformed optimizer state");
    for (std::size_t b = 0; b < std::size(blocks); ++b) {
      blocks[b]->import_from(resume->blocks[b], OptimizerState::kBlockNames[b]);
    }
    t0 = resume->steps;
  }

  std::mt19937_64 view_rng(mix_seed(config.seed, 2));
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const int start_degree = config.fine_tune ? config.max_sh_degree : 0;
  std::vector<double> g_mean, g_rot, g_scale, g_opacity, g_sh, g_latent;

  for (int it = 0; it < total_iters; ++it) {
    const int view_index = pool[pick(view_rng)];
    const int degree = std::min(config.max_sh_degree, start_degree + it / config.sh_degree_interval);
    const TrainingView& tv = views[view_index];
    const NormalMap* nt = normal_targets[view_index] ? &*normal_targets[view_index] : nullptr;
    StepGradients step =
        evaluate_losses(result.field, dec, tv, nt, config, degree, mix_seed(config.seed, 1000 + it));
    step.report.iteration = it;
    step.report.view = view_index;
    if (!std::isfinite(step.report.total)) {
      throw DivergenceError("non-finite loss at iteration " + std::to_string(it), result);
    }

    // Chain into the unconstrained parameters.
    const std::size_t n = raw.count;
    const int dim = raw.dim;
    g_mean.assign(3 * n, 0.0);
    g_rot.assign(4 * n, 0.0);
    g_scale.assign(3 * n, 0.0);
    g_opacity.assign(n, 0.0);
    g_sh.assign(raw.sh.size(), 0.0);
    g_latent.assign(raw.latent.size(), 0.0);
    const FieldGradients& fg = step.field;
    for (std::size_t i = 0; i < n; ++i) {
      const GaussianPrimitive& g = result.field.primitives[i];
      for (int k = 0; k < 3; ++k) {
        g_mean[3 * i + k] = fg.mean[i][k];
        g_scale[3 * i + k] = fg.scale[i][k] * g.scale[k];
      }
      for (int k = 0; k < 4; ++k) g_rot[4 * i + k] = fg.rotation[i][k];
      g_opacity[i] = fg.opacity[i] * g.opacity * (1.0 - g.opacity);
      for (int k = 0; k < kShCoeffCount; ++k) {
        for (int c = 0; c < 3; ++c) g_sh[(i * kShCoeffCount + k) * 3 + c] = fg.sh[i][k][c];
      }
      for (int k = 0; k < dim; ++k) g_latent[i * dim + k] = fg.latent[i * dim + k];
    }

    const int t = t0 + it + 1;
    const double frac = total_iters > 1 ? static_cast<double>(it) / (total_iters - 1) : 1.0;
    const double lr_mean =
        config.fine_tune || config.lr_mean == 0.0
            ? config.lr_mean_final
            : std::exp(std::log(config.lr_mean) * (1.0 - frac) + std::log(config.lr_mean_final) * frac);
    a_mean.step(raw.mean.data(), g_mean.data(), t, [&](std::size_t) { return lr_mean; });
    a_rot.step(raw.rotation.data(), g_rot.data(), t, [&](std::size_t) { return config.lr_rotation; });
    a_scale.step(raw.log_scale.data(), g_scale.data(), t, [&](std::size_t) { return config.lr_scale; });
    a_opacity.step(raw.opacity_logit.data(), g_opacity.data(), t, [&](std::size_t) { return config.lr_opacity; });
    a_sh.step(raw.sh.data(), g_sh.data(), t, [&](std::size_t i) {
      return (i / 3) % kShCoeffCount == 0 ? config.lr_sh : config.lr_sh / 20.0;
    });
    a_latent.step(raw.latent.data(), g_latent.data(), t, [&](std::size_t) { return config.lr_latent; });
    if (config.lambda_distill > 0.0) {
      const auto lr = [&](std::size_t) { return config.lr_decoder; };
      a_w1.step(dec.w1.data(), step.decoder.w1.data(), t, lr);
      a_b1.step(dec.b1.data(), step.decoder.b1.data(), t, lr);
      a_w2.step(dec.w2.data(), step.decoder.w2.data(), t, lr);
      a_b2.step(dec.b2.data(), step.decoder.b2.data(), t, lr);
    }
    raw.renormalize();

    if (config.prune && (it + 1) % config.prune_interval == 0) {
      std::vector<bool> alive(raw.count);
      std::size_t survivors = 0;
      for (std::size_t i = 0; i < raw.count; ++i) {
        alive[i] = sigmoid(raw.opacity_logit[i]) >= config.prune_opacity;
        survivors += alive[i];
      }
      if (survivors > 0 && survivors < raw.count) {
        auto compact = [&](std::vector<double>& v, std::size_t stride) {
          std::size_t w = 0;
          for (std::size_t i = 0; i < alive.size(); ++i) {
            if (!alive[i]) continue;
            for (std::size_t k = 0; k < stride; ++k) v[w * stride + k] = v[i * stride + k];
            ++w;
          }
          v.resize(w * stride);
        };
        compact(raw.mean, 3);
        compact(raw.rotation, 4);
        compact(raw.log_scale, 3);
        compact(raw.opacity_logit, 1);
        compact(raw.sh, 3 * kShCoeffCount);
        compact(raw.latent, raw.dim);
        a_mean.keep(alive, 3);
        a_rot.keep(alive, 4);
        a_scale.keep(alive, 3);
        a_opacity.keep(alive, 1);
        a_sh.keep(alive, 3 * kShCoeffCount);
        a_latent.keep(alive, raw.dim);
        raw.count = survivors;
      }
    }
    raw.store(result.field);
    result.reports.push_back(step.report);
    if (callback) callback(step.report);
  }
  result.optimizer.steps = t0 + total_iters;
  result.optimizer.blocks.resize(std::size(blocks));
  for (std::size_t b = 0; b < std::size(blocks); ++b) blocks[b]->export_to(result.optimizer.blocks[b]);
  return result;
}

}  // namespace sg
