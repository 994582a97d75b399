#pragma once

#include <torch/torch.h>

#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fis/dataset.hpp"
#include "fis/decoder.hpp"

namespace fis {

enum class ApVariant { kSegm, kBbox };

struct EvalConfig {
  std::vector<double> iou_thresholds = default_thresholds();
  double score_threshold = 0.3;
  int max_detections = 20;
  // Size buckets by GT mask pixel area: S < 32², M < 96², else L.
  double small_area = 32.0 * 32.0;
  double medium_area = 96.0 * 96.0;
  // SOAP true-positive rule toggles (all three IoU tests by default).
  bool soap_require_object = true;
  bool soap_require_shadow = true;
  bool soap_require_union = true;

  static std::vector<double> default_thresholds();
  void validate() const;
};

struct InstanceApResult {
  double overall = 0.0;
  std::optional<double> small;
  std::optional<double> medium;
  std::optional<double> large;
};

struct MetricReport {
  double soap_segm = 0.0;
  double soap_bbox = 0.0;
  double assoc_ap_segm = 0.0;
  double assoc_ap_bbox = 0.0;
  double inst_ap_segm = 0.0;
  double inst_ap_bbox = 0.0;
  std::optional<double> inst_ap_segm_small, inst_ap_segm_medium, inst_ap_segm_large;
  std::optional<double> inst_ap_bbox_small, inst_ap_bbox_medium, inst_ap_bbox_large;
  std::map<std::string, std::map<std::string, double>> per_threshold;

  nlohmann::json to_json() const;
  std::string table_row() const;
};

// Scores ≥ the threshold survive, at most max_detections by descending score
// (ties broken by query index ascending), masks upsampled bilinearly from the
// pixel-feature grid to (padded_h, padded_w) and cropped to (out_h, out_w).
// No NMS. Shadow centers come from the offset map.
std::vector<Detection> postprocess(const LayerPrediction& pred, const torch::Tensor& offset_map,
                                   int grid_h, int grid_w, int padded_h, int padded_w, int out_h,
                                   int out_w, const EvalConfig& config);

// 101-point interpolated AP with the precision envelope, from TP/FP flags
// ordered by descending score. Zero GTs: 0 when predictions exist, NaN
// (excluded from averaging) when none.
double ap_from_scored_matches(std::int64_t gt_count, const std::vector<char>& is_tp_by_score_desc);

// SOAP: a detection is TP w.r.t. a GT pair at threshold τ iff the object,
// shadow, and union IoUs (as enabled in the config) all reach τ. Greedy match
// by descending score; mean AP over the config thresholds.
double soap(const std::vector<std::vector<Detection>>& detections,
            const std::vector<std::vector<ShadowObjectInstance>>& gts, const EvalConfig& config,
            ApVariant variant, std::map<std::string, double>* per_threshold = nullptr);

// AP over the union region (pixelwise OR) of each shadow-object pair.
double association_ap(const std::vector<std::vector<Detection>>& detections,
                      const std::vector<std::vector<ShadowObjectInstance>>& gts,
                      const EvalConfig& config, ApVariant variant,
                      std::map<std::string, double>* per_threshold = nullptr);

// Per-category AP over {object, shadow} instances, averaged over the two
// categories, plus the S/M/L breakdown bucketed by GT mask pixel area.
InstanceApResult instance_ap(const std::vector<std::vector<Detection>>& detections,
                             const std::vector<std::vector<ShadowObjectInstance>>& gts,
                             const EvalConfig& config, ApVariant variant,
                             std::map<std::string, double>* per_threshold = nullptr);

MetricReport evaluate_detections(const std::vector<std::vector<Detection>>& detections,
                                 const std::vector<std::vector<ShadowObjectInstance>>& gts,
                                 const EvalConfig& config);

struct FpsReport {
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
  double fps = 0.0;
};

// Wall-clock timing of `run` over the samples; the first `warmup` invocations
// are excluded from the statistics.
FpsReport measure_fps(const std::function<void(const ImageSample&)>& run,
                      const std::vector<ImageSample>& samples, int warmup = 5);

}  // namespace fis
