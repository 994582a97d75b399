#include "fis/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "fis/common.hpp"
#include "fis/tensor_utils.hpp"

namespace fis {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string threshold_key(double tau) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", tau);
  return buf;
}

// Pair-level regions shared by every metric, precomputed per detection/GT.
struct Regions {
  double score = 1.0;
  BinaryMask object, shadow, merged;
  AABB object_box, shadow_box, merged_box;
  std::int64_t object_area = 0, shadow_area = 0;
};

Regions regions_from_gt(const ShadowObjectInstance& gt) {
  Regions r;
  r.object = gt.object_mask;
  r.shadow = gt.shadow_mask;
  r.merged = mask_union(r.object, r.shadow);
  r.object_box = mask_to_aabb(r.object);
  r.shadow_box = mask_to_aabb(r.shadow);
  r.merged_box = mask_to_aabb(r.merged);
  r.object_area = r.object.area();
  r.shadow_area = r.shadow.area();
  return r;
}

Regions regions_from_detection(const Detection& det) {
  Regions r;
  r.score = det.score;
  r.object = threshold_mask(det.object_mask);
  r.shadow = threshold_mask(det.shadow_mask);
  r.merged = mask_union(r.object, r.shadow);
  r.object_box = mask_to_aabb(r.object);
  r.shadow_box = mask_to_aabb(r.shadow);
  r.merged_box = mask_to_aabb(r.merged);
  r.object_area = r.object.area();
  r.shadow_area = r.shadow.area();
  return r;
}

// Detections in score-descending order (ties by original index).
std::vector<int> score_order(const std::vector<Regions>& dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dets[a].score > dets[b].score; });
  return order;
}

struct ScoredFlag {
  double score = 0.0;
  int image = 0;
  int index = 0;
  bool tp = false;
};

double ap_from_flags(std::int64_t gt_count, std::vector<ScoredFlag> flags) {
  std::stable_sort(flags.begin(), flags.end(), [](const ScoredFlag& a, const ScoredFlag& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });
  std::vector<char> tp(flags.size());
  for (std::size_t i = 0; i < flags.size(); ++i) tp[i] = flags[i].tp ? 1 : 0;
  return ap_from_scored_matches(gt_count, tp);
}

}  // namespace

std::vector<double> EvalConfig::default_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(0.5 + 0.05 * i);
  return out;
}

void EvalConfig::validate() const {
  FIS_CHECK(!iou_thresholds.empty(), "need at least one IoU threshold");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    FIS_CHECK(iou_thresholds[i] > 0.0 && iou_thresholds[i] <= 1.0,
              "IoU thresholds must be in (0,1]");
    if (i > 0) {
      FIS_CHECK(iou_thresholds[i] > iou_thresholds[i - 1],
                "IoU thresholds must be strictly increasing");
    }
  }
  FIS_CHECK(score_threshold >= 0.0 && score_threshold <= 1.0, "score threshold must be in [0,1]");
  FIS_CHECK(max_detections >= 1, "max_detections must be positive");
  FIS_CHECK(small_area > 0 && medium_area > small_area, "invalid size buckets");
  FIS_CHECK(soap_require_object || soap_require_shadow || soap_require_union,
            "SOAP needs at least one IoU test enabled");
}

double ap_from_scored_matches(std::int64_t gt_count, const std::vector<char>& is_tp_by_score_desc) {
  if (gt_count == 0) {
    return is_tp_by_score_desc.empty() ? kNan : 0.0;
  }
  std::vector<double> precision, recall;
  std::int64_t tp = 0, fp = 0;
  for (char flag : is_tp_by_score_desc) {
    flag ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / gt_count);
  }
  // Precision envelope: monotone non-increasing interpolation.
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  std::size_t idx = 0;
  for (int r = 0; r <= 100; ++r) {
    const double target = r / 100.0;
    while (idx < recall.size() && recall[idx] < target - 1e-12) ++idx;
    sum += idx < precision.size() ? precision[idx] : 0.0;
  }
  return sum / 101.0;
}

std::vector<Detection> postprocess(const LayerPrediction& pred, const torch::Tensor& offset_map,
                                   int grid_h, int grid_w, int padded_h, int padded_w, int out_h,
                                   int out_w, const EvalConfig& config) {
  config.validate();
  torch::NoGradGuard no_grad;
  const auto n = pred.class_logits.size(0);
  auto scores_t = torch::sigmoid(pred.class_logits).to(torch::kFloat64).contiguous();
  const double* scores = scores_t.data_ptr<double>();

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });

  std::vector<Detection> detections;
  for (int qi : order) {
    if (scores[qi] < config.score_threshold) break;
    if (static_cast<int>(detections.size()) >= config.max_detections) break;

    const auto upsample_crop = [&](const torch::Tensor& logits_row) {
      auto grid = logits_row.view({1, grid_h, grid_w});
      auto up = resize_bilinear_chw(grid, padded_h, padded_w);
      auto cropped = up.index({0, torch::indexing::Slice(0, out_h),
                               torch::indexing::Slice(0, out_w)});
      return tensor_to_prob_mask(torch::sigmoid(cropped));
    };

    Detection det;
    det.score = scores[qi];
    det.object_mask = upsample_crop(pred.object_mask_logits[qi]);
    det.shadow_mask = upsample_crop(pred.shadow_mask_logits[qi]);

    const ProbMask grid_probs = tensor_to_prob_mask(
        torch::sigmoid(pred.object_mask_logits[qi]).view({grid_h, grid_w}));
    auto center = predicted_shadow_center(grid_probs, offset_map).to(torch::kFloat64);
    // Normalized padded-image coordinates -> normalized output coordinates
    // (padding is bottom/right, so pixel positions are unchanged).
    det.predicted_shadow_center =
        Point2{center[0].item<double>() * padded_w / out_w,
               center[1].item<double>() * padded_h / out_h};
    detections.push_back(std::move(det));
  }
  return detections;
}

namespace {

struct PairIous {
  double object = 0.0, shadow = 0.0, merged = 0.0;
};

PairIous pair_ious(const Regions& det, const Regions& gt, ApVariant variant) {
  PairIous ious;
  if (variant == ApVariant::kSegm) {
    ious.object = mask_iou(det.object, gt.object);
    ious.shadow = mask_iou(det.shadow, gt.shadow);
    ious.merged = mask_iou(det.merged, gt.merged);
  } else {
    ious.object = box_iou(det.object_box, gt.object_box);
    ious.shadow = box_iou(det.shadow_box, gt.shadow_box);
    ious.merged = box_iou(det.merged_box, gt.merged_box);
  }
  return ious;
}

using RegionsPerImage = std::vector<std::vector<Regions>>;

double pooled_pair_ap(const RegionsPerImage& dets, const RegionsPerImage& gts,
                      const EvalConfig& config, ApVariant variant,
                      const std::function<bool(const PairIous&, double)>& passes,
                      const std::function<double(const PairIous&)>& quality,
                      std::map<std::string, double>* per_threshold) {
  // IoU triples once per (image, det, gt); thresholds reuse them.
  std::vector<std::vector<std::vector<PairIous>>> ious(dets.size());
  std::int64_t total_gts = 0;
  for (std::size_t img = 0; img < dets.size(); ++img) {
    total_gts += static_cast<std::int64_t>(gts[img].size());
    ious[img].resize(dets[img].size());
    for (std::size_t d = 0; d < dets[img].size(); ++d) {
      for (const Regions& gt : gts[img]) {
        ious[img][d].push_back(pair_ious(dets[img][d], gt, variant));
      }
    }
  }

  double ap_sum = 0.0;
  int ap_count = 0;
  for (double tau : config.iou_thresholds) {
    std::vector<ScoredFlag> flags;
    for (std::size_t img = 0; img < dets.size(); ++img) {
      std::vector<char> gt_matched(gts[img].size(), 0);
      for (int d : score_order(dets[img])) {
        int best = -1;
        double best_quality = -1.0;
        for (std::size_t g = 0; g < gts[img].size(); ++g) {
          if (gt_matched[g]) continue;
          const PairIous& pi = ious[img][d][g];
          if (!passes(pi, tau)) continue;
          if (quality(pi) > best_quality) {
            best_quality = quality(pi);
            best = static_cast<int>(g);
          }
        }
        ScoredFlag flag;
        flag.score = dets[img][d].score;
        flag.image = static_cast<int>(img);
        flag.index = d;
        flag.tp = best >= 0;
        if (best >= 0) gt_matched[best] = 1;
        flags.push_back(flag);
      }
    }
    const double ap = ap_from_flags(total_gts, std::move(flags));
    if (per_threshold != nullptr) (*per_threshold)[threshold_key(tau)] = ap;
    if (!std::isnan(ap)) {
      ap_sum += ap;
      ++ap_count;
    }
  }
  return ap_count > 0 ? ap_sum / ap_count : kNan;
}

RegionsPerImage detection_regions(const std::vector<std::vector<Detection>>& detections) {
  RegionsPerImage out(detections.size());
  for (std::size_t img = 0; img < detections.size(); ++img) {
    for (const Detection& det : detections[img]) out[img].push_back(regions_from_detection(det));
  }
  return out;
}

RegionsPerImage gt_regions(const std::vector<std::vector<ShadowObjectInstance>>& gts) {
  RegionsPerImage out(gts.size());
  for (std::size_t img = 0; img < gts.size(); ++img) {
    for (const ShadowObjectInstance& gt : gts[img]) out[img].push_back(regions_from_gt(gt));
  }
  return out;
}

}  // namespace

double soap(const std::vector<std::vector<Detection>>& detections,
            const std::vector<std::vector<ShadowObjectInstance>>& gts, const EvalConfig& config,
            ApVariant variant, std::map<std::string, double>* per_threshold) {
  config.validate();
  FIS_CHECK(detections.size() == gts.size(), "detections/GTs image count mismatch");
  const auto passes = [&](const PairIous& pi, double tau) {
    if (config.soap_require_object && pi.object < tau) return false;
    if (config.soap_require_shadow && pi.shadow < tau) return false;
    if (config.soap_require_union && pi.merged < tau) return false;
    return true;
  };
  const auto quality = [&](const PairIous& pi) {
    double q = 1.0;
    if (config.soap_require_object) q = std::min(q, pi.object);
    if (config.soap_require_shadow) q = std::min(q, pi.shadow);
    if (config.soap_require_union) q = std::min(q, pi.merged);
    return q;
  };
  return pooled_pair_ap(detection_regions(detections), gt_regions(gts), config, variant, passes,
                        quality, per_threshold);
}

double association_ap(const std::vector<std::vector<Detection>>& detections,
                      const std::vector<std::vector<ShadowObjectInstance>>& gts,
                      const EvalConfig& config, ApVariant variant,
                      std::map<std::string, double>* per_threshold) {
  config.validate();
  FIS_CHECK(detections.size() == gts.size(), "detections/GTs image count mismatch");
  const auto passes = [](const PairIous& pi, double tau) { return pi.merged >= tau; };
  const auto quality = [](const PairIous& pi) { return pi.merged; };
  return pooled_pair_ap(detection_regions(detections), gt_regions(gts), config, variant, passes,
                        quality, per_threshold);
}

namespace {

enum class SizeBucket { kAll, kSmall, kMedium, kLarge };

SizeBucket bucket_of(double area, const EvalConfig& config) {
  if (area < config.small_area) return SizeBucket::kSmall;
  if (area < config.medium_area) return SizeBucket::kMedium;
  return SizeBucket::kLarge;
}

// COCO-style single-category AP with ignore semantics: out-of-bucket GTs are
// ignored, detections matching them are dropped from scoring, and unmatched
// detections count as FPs only when their own area lies in the bucket.
double category_ap(const RegionsPerImage& dets, const RegionsPerImage& gts, bool use_shadow,
                   const EvalConfig& config, ApVariant variant, SizeBucket bucket, double tau,
                   std::int64_t* gt_total_out) {
  const auto mask_of = [&](const Regions& r) -> const BinaryMask& {
    return use_shadow ? r.shadow : r.object;
  };
  const auto box_of = [&](const Regions& r) -> const AABB& {
    return use_shadow ? r.shadow_box : r.object_box;
  };
  const auto area_of = [&](const Regions& r) {
    return static_cast<double>(use_shadow ? r.shadow_area : r.object_area);
  };

  std::vector<ScoredFlag> flags;
  std::int64_t gt_total = 0;
  for (std::size_t img = 0; img < dets.size(); ++img) {
    // Ignored GTs (outside the bucket) sort last.
    std::vector<int> gt_order;
    std::vector<char> gt_ignored;
    for (std::size_t g = 0; g < gts[img].size(); ++g) {
      const bool ignored = bucket != SizeBucket::kAll &&
                           bucket_of(area_of(gts[img][g]), config) != bucket;
      gt_ignored.push_back(ignored ? 1 : 0);
      if (!ignored) ++gt_total;
    }
    for (std::size_t g = 0; g < gts[img].size(); ++g) {
      if (!gt_ignored[g]) gt_order.push_back(static_cast<int>(g));
    }
    for (std::size_t g = 0; g < gts[img].size(); ++g) {
      if (gt_ignored[g]) gt_order.push_back(static_cast<int>(g));
    }

    std::vector<char> gt_matched(gts[img].size(), 0);
    for (int d : score_order(dets[img])) {
      int best = -1;
      double best_iou = tau;
      for (int g : gt_order) {
        if (gt_matched[g]) continue;
        if (best >= 0 && !gt_ignored[best] && gt_ignored[g]) break;
        const double iou = variant == ApVariant::kSegm
                               ? mask_iou(mask_of(dets[img][d]), mask_of(gts[img][g]))
                               : box_iou(box_of(dets[img][d]), box_of(gts[img][g]));
        if (iou < best_iou) continue;
        best_iou = iou;
        best = g;
      }
      if (best >= 0) {
        gt_matched[best] = 1;
        if (gt_ignored[best]) continue;  // detection ignored
        ScoredFlag flag{dets[img][d].score, static_cast<int>(img), d, true};
        flags.push_back(flag);
      } else {
        if (bucket != SizeBucket::kAll &&
            bucket_of(area_of(dets[img][d]), config) != bucket) {
          continue;  // unmatched detection outside the bucket is ignored
        }
        ScoredFlag flag{dets[img][d].score, static_cast<int>(img), d, false};
        flags.push_back(flag);
      }
    }
  }
  if (gt_total_out != nullptr) *gt_total_out = gt_total;
  return ap_from_flags(gt_total, std::move(flags));
}

std::optional<double> instance_bucket_ap(const RegionsPerImage& dets, const RegionsPerImage& gts,
                                         const EvalConfig& config, ApVariant variant,
                                         SizeBucket bucket,
                                         std::map<std::string, double>* per_threshold) {
  double sum = 0.0;
  int count = 0;
  for (double tau : config.iou_thresholds) {
    double cat_sum = 0.0;
    int cat_count = 0;
    for (const bool use_shadow : {false, true}) {
      std::int64_t gt_total = 0;
      const double ap = category_ap(dets, gts, use_shadow, config, variant, bucket, tau, &gt_total);
      if (!std::isnan(ap)) {
        cat_sum += ap;
        ++cat_count;
      }
    }
    if (cat_count == 0) continue;  // no GTs and no detections at this threshold
    const double ap = cat_sum / cat_count;
    if (per_threshold != nullptr && bucket == SizeBucket::kAll) {
      (*per_threshold)[threshold_key(tau)] = ap;
    }
    sum += ap;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

}  // namespace

InstanceApResult instance_ap(const std::vector<std::vector<Detection>>& detections,
                             const std::vector<std::vector<ShadowObjectInstance>>& gts,
                             const EvalConfig& config, ApVariant variant,
                             std::map<std::string, double>* per_threshold) {
  config.validate();
  FIS_CHECK(detections.size() == gts.size(), "detections/GTs image count mismatch");
  const RegionsPerImage det_regions = detection_regions(detections);
  const RegionsPerImage gt_regs = gt_regions(gts);

  InstanceApResult result;
  result.overall =
      instance_bucket_ap(det_regions, gt_regs, config, variant, SizeBucket::kAll, per_threshold)
          .value_or(kNan);
  result.small = instance_bucket_ap(det_regions, gt_regs, config, variant, SizeBucket::kSmall, nullptr);
  result.medium =
      instance_bucket_ap(det_regions, gt_regs, config, variant, SizeBucket::kMedium, nullptr);
  result.large = instance_bucket_ap(det_regions, gt_regs, config, variant, SizeBucket::kLarge, nullptr);
  return result;
}

MetricReport evaluate_detections(const std::vector<std::vector<Detection>>& detections,
                                 const std::vector<std::vector<ShadowObjectInstance>>& gts,
                                 const EvalConfig& config) {
  MetricReport report;
  report.soap_segm = soap(detections, gts, config, ApVariant::kSegm,
                          &report.per_threshold["soap_segm"]);
  report.soap_bbox = soap(detections, gts, config, ApVariant::kBbox,
                          &report.per_threshold["soap_bbox"]);
  report.assoc_ap_segm = association_ap(detections, gts, config, ApVariant::kSegm,
                                        &report.per_threshold["assoc_ap_segm"]);
  report.assoc_ap_bbox = association_ap(detections, gts, config, ApVariant::kBbox,
                                        &report.per_threshold["assoc_ap_bbox"]);
  const InstanceApResult segm = instance_ap(detections, gts, config, ApVariant::kSegm,
                                            &report.per_threshold["inst_ap_segm"]);
  const InstanceApResult bbox = instance_ap(detections, gts, config, ApVariant::kBbox,
                                            &report.per_threshold["inst_ap_bbox"]);
  report.inst_ap_segm = segm.overall;
  report.inst_ap_bbox = bbox.overall;
  report.inst_ap_segm_small = segm.small;
  report.inst_ap_segm_medium = segm.medium;
  report.inst_ap_segm_large = segm.large;
  report.inst_ap_bbox_small = bbox.small;
  report.inst_ap_bbox_medium = bbox.medium;
  report.inst_ap_bbox_large = bbox.large;
  return report;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["soap_segm"] = soap_segm;
  j["soap_bbox"] = soap_bbox;
  j["assoc_ap_segm"] = assoc_ap_segm;
  j["assoc_ap_bbox"] = assoc_ap_bbox;
  j["inst_ap_segm"] = inst_ap_segm;
  j["inst_ap_bbox"] = inst_ap_bbox;
  const auto opt = [](const std::optional<double>& v) {
    return v.has_value() ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  j["inst_ap_segm_small"] = opt(inst_ap_segm_small);
  j["inst_ap_segm_medium"] = opt(inst_ap_segm_medium);
  j["inst_ap_segm_large"] = opt(inst_ap_segm_large);
  j["inst_ap_bbox_small"] = opt(inst_ap_bbox_small);
  j["inst_ap_bbox_medium"] = opt(inst_ap_bbox_medium);
  j["inst_ap_bbox_large"] = opt(inst_ap_bbox_large);
  j["per_threshold"] = per_threshold;
  return j;
}

std::string MetricReport::table_row() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "SOAP_segm %.3f  SOAP_bbox %.3f  Assoc.AP_segm %.3f  Assoc.AP_bbox %.3f  "
                "Inst.AP_segm %.3f  Inst.AP_bbox %.3f",
                soap_segm, soap_bbox, assoc_ap_segm, assoc_ap_bbox, inst_ap_segm, inst_ap_bbox);
  return buf;
}

FpsReport measure_fps(const std::function<void(const ImageSample&)>& run,
                      const std::vector<ImageSample>& samples, int warmup) {
  FIS_CHECK(!samples.empty(), "cannot measure fps on an empty sample list");
  for (int i = 0; i < warmup; ++i) {
    run(samples[i % samples.size()]);
  }
  std::vector<double> seconds;
  seconds.reserve(samples.size());
  for (const ImageSample& sample : samples) {
    const auto start = std::chrono::steady_clock::now();
    run(sample);
    const auto stop = std::chrono::steady_clock::now();
    seconds.push_back(std::chrono::duration<double>(stop - start).count());
  }
  FpsReport report;
  report.mean_seconds =
      std::accumulate(seconds.begin(), seconds.end(), 0.0) / seconds.size();
  double var = 0.0;
  for (double s : seconds) var += (s - report.mean_seconds) * (s - report.mean_seconds);
  report.std_seconds = std::sqrt(var / seconds.size());
  report.fps = report.mean_seconds > 0 ? 1.0 / report.mean_seconds : 0.0;
  return report;
}

}  // namespace fis
