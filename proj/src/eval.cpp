#include "splatgrasp/dataset.hpp"
#include "splatgrasp/error.hpp"
#include "splatgrasp/rasterizer.hpp"

#include <algorithm>
#include <chrono>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sg {

EvalReport evaluate(const GaussianField& field, const Decoder& decoder, const Scene& scene,
                    const EvalOptions& options) {
  if (scene.manifest.queries.empty()) throw Error(ErrorCode::InvalidArgument, "scene has no evaluation queries");
  if (scene.views.empty()) throw Error(ErrorCode::InvalidArgument, "scene has no views");
  std::vector<RenderOutput> renders;
  renders.reserve(scene.views.size());
  for (const TrainingView& tv : scene.views) {
    renders.push_back(render_forward(field, tv.view.camera, kFeatureChannel));
  }

  EvalReport report;
  for (const QueryRecord& q : scene.manifest.queries) {
    const QueryEmbeddings emb = QueryEmbeddings::from_entries(scene.embeddings, q.name);
    QueryEvaluation ev;
    ev.name = q.name;
    for (std::size_t v = 0; v < scene.views.size(); ++v) {
      const IdMap& gt_ids = scene.gt_masks.at(v);
      if (gt_ids.empty()) continue;
      ImageD rel = relevance(renders[v].feature, decoder, emb);
      for (std::size_t i = 0; i < rel.storage().size(); ++i) {
        if (renders[v].alpha.storage()[i] < options.min_alpha) rel.storage()[i] = 0.0;
      }
      Mask gt(gt_ids.width(), gt_ids.height(), 1);
      bool visible = false;
      for (std::size_t i = 0; i < gt.storage().size(); ++i) {
        const bool in = gt_ids.storage()[i] == q.gt_id;
        gt.storage()[i] = in;
        visible |= in;
        const bool predicted = rel.storage()[i] >= options.threshold;
        ev.intersection += in && predicted;
        ev.union_ += in || predicted;
      }
      if (visible) {
        ++ev.views;
        ev.hits += localization_hit(rel, gt);
      }
    }
    ev.iou = ev.union_ ? static_cast<double>(ev.intersection) / ev.union_ : 0.0;

    if (options.measure_latency) {
      const Camera cam = scene.views.front().view.camera.resized(options.latency_width, options.latency_height);
#ifdef _OPENMP
      const int threads = omp_get_max_threads();
      omp_set_num_threads(1);
#endif
      const auto t0 = std::chrono::steady_clock::now();
      const ImageD f = render_forward(field, cam, kFeatureChannel).feature;
      const ImageD rel = relevance(f, decoder, emb);
      const auto t1 = std::chrono::steady_clock::now();
#ifdef _OPENMP
      omp_set_num_threads(threads);
#endif
      ev.latency_s = std::chrono::duration<double>(t1 - t0).count();
      (void)rel;
    }
    report.queries.push_back(ev);
  }

  int hits = 0, visible = 0;
  for (const QueryEvaluation& ev : report.queries) {
    report.mean_iou += ev.iou;
    hits += ev.hits;
    visible += ev.views;
    report.mean_latency_s += ev.latency_s;
    report.max_latency_s = std::max(report.max_latency_s, ev.latency_s);
  }
  report.mean_iou /= static_cast<double>(report.queries.size());
  report.mean_latency_s /= static_cast<double>(report.queries.size());
  report.hit_rate = visible ? static_cast<double>(hits) / visible : 0.0;
  return report;
}

}  // namespace sg
