#pragma once

#include <torch/torch.h>

#include <vector>

#include "fis/dataset.hpp"
#include "fis/matcher.hpp"
#include "fis/model.hpp"
#include "fis/rng.hpp"

namespace fis {

// Probabilities are clamped to [kProbClamp, 1-kProbClamp] before every log.
inline constexpr double kProbClamp = 1e-7;

struct LossWeights {
  double lambda_cls_q = 20.0;
  double lambda_cls = 2.0;
  double lambda_ce = 5.0;
  double lambda_dice = 5.0;
  double lambda_d = 0.1;
  double beta = 0.5;
  double alpha = 50.0;
  int gate_epoch = 75;

  void validate() const;
};

// K sampled points with the data every mask-loss term needs: normalized
// coordinates, nearest-pixel target labels, bilinear predicted probabilities
// (differentiable), and inside-AABB flags against the GT mask's box.
struct PointSample {
  torch::Tensor coords;       // [K,2] float64
  torch::Tensor labels;       // [K]
  torch::Tensor probs;        // [K]
  torch::Tensor inside_aabb;  // [K] bool
};

struct PointSampleStrategy {
  // Fraction of K kept from the 3K oversampled candidates whose predicted
  // probability is closest to 0.5; the remainder is drawn uniformly afresh.
  double importance_fraction = 0.75;
  int oversample = 3;

  static PointSampleStrategy pure_uniform() { return PointSampleStrategy{0.0, 1}; }
};

// Nearest-pixel lookup of a normalized point in a binary mask.
double nearest_pixel_label(const BinaryMask& mask, double x, double y);
// Whether the pixel a normalized point falls in lies inside the box.
bool point_inside_aabb(const AABB& box, double x, double y, int height, int width);

PointSample sample_points(const torch::Tensor& pred_logits_hw, const BinaryMask& gt_mask,
                          int k_points, const PointSampleStrategy& strategy, Rng& rng);

// Eq. 2: mean over points of w_i · BCE, where w_i = alpha for a point outside
// the GT AABB predicted positive (p > 0.5) with label 0 once epoch >= the
// gate, and 1 otherwise.
torch::Tensor box_aware_ce(const PointSample& points, const LossWeights& weights, int epoch);

// 1 − (2Σpy + 1)/(Σp + Σy + 1).
torch::Tensor dice_loss(const torch::Tensor& probs, const torch::Tensor& labels);

// Eq. 1 applied per coordinate and summed over (x, y), averaged over matched
// queries, scaled by λ_d. Zero when no queries matched.
torch::Tensor shadow_direction_loss(const std::vector<torch::Tensor>& predicted_centers,
                                    const std::vector<Point2>& gt_centers,
                                    const LossWeights& weights);

// Eq. 4: λ_cls-q · BCE of the activation map against a target map that is 1
// exactly at the cell holding each GT object centroid.
torch::Tensor instance_activation_loss(const torch::Tensor& activation_logits_hw,
                                       const std::vector<ShadowObjectInstance>& gts,
                                       const LossWeights& weights);

// BCE of the pair-vs-background logits against the matched set, over all N.
torch::Tensor classification_loss(const torch::Tensor& class_logits, const Assignment& assignment);

// ---------------------------------------------------------------------------
// Total-loss planning. Discrete choices (per-layer assignments, sampled point
// coordinates, the GT attention override, detached mask centroids) are frozen
// in a plan so the loss can be re-evaluated under perturbed parameters with
// the same stop-gradient semantics as the backward pass.

struct StreamPlan {
  int query_index = 0;
  int gt_index = 0;
  torch::Tensor coords;   // [K,2] float64
  torch::Tensor labels;   // [K]
  torch::Tensor inside;   // [K] bool
};

struct LayerPlan {
  Assignment assignment;
  std::vector<StreamPlan> object_streams;
  std::vector<StreamPlan> shadow_streams;
};

struct DirectionPlan {
  std::vector<int> query_indices;
  std::vector<Point2> centers;                // detached object-mask centroids
  std::vector<std::pair<int, int>> cells;     // nearest offset-map cell (row, col)
  std::vector<Point2> gt_centers;             // GT shadow-mask centroids
};

struct LossPlan {
  std::vector<LayerPlan> main_layers;  // Γ+1 plans, aligned with predictions
  std::vector<LayerPlan> gt_layers;    // Γ plans for decoder layers 1..Γ
  GtAttnOverride gt_override;
  DirectionPlan direction;
  int grid_h = 0;
  int grid_w = 0;
};

struct TotalLoss {
  torch::Tensor total;
  torch::Tensor l_ia_q;
  torch::Tensor l_pred;
  torch::Tensor l_pred_gt;
  torch::Tensor l_d;
};

// Phase 1: per-layer matching and point sampling for the main pass, plus the
// GT attention override and the shadow-direction plan from the last layer.
LossPlan plan_main_losses(const ModelOutputs& outputs,
                          const std::vector<ShadowObjectInstance>& gts,
                          const LossWeights& weights, int k_points,
                          const PointSampleStrategy& strategy, Rng& rng);

// Phase 2 (after the GT mask-guided forward): matching and point sampling for
// the GT-pass layers 1..Γ.
void plan_gt_losses(LossPlan& plan, const DecoderState& gt_state,
                    const std::vector<ShadowObjectInstance>& gts, const LossWeights& weights,
                    int k_points, const PointSampleStrategy& strategy, Rng& rng);

// Eq. 5 for one pass: Σ_layers λ_ce(L_o_ce + L_s_ce) + λ_dice(L_o_dice +
// L_s_dice) + λ_cls·L_cls, with each ce/dice term averaged over matched pairs.
torch::Tensor prediction_loss(const std::vector<LayerPrediction>& predictions,
                              const std::vector<LayerPlan>& plans,
                              const std::vector<ShadowObjectInstance>& gts,
                              const LossWeights& weights, int epoch, int grid_h, int grid_w);

// Eq. 3 under a frozen plan.
TotalLoss compute_total_loss(const ModelOutputs& outputs, const DecoderState& gt_state,
                             const LossPlan& plan, const std::vector<ShadowObjectInstance>& gts,
                             const LossWeights& weights, int epoch);

// Convenience wrapper used by the trainer: plans, runs the GT-guided pass,
// and evaluates Eq. 3.
TotalLoss total_loss(FisModelImpl& model, const ModelOutputs& outputs,
                     const std::vector<ShadowObjectInstance>& gts, const LossWeights& weights,
                     int epoch, int k_points, Rng& rng,
                     const PointSampleStrategy& strategy = PointSampleStrategy{});

}  // namespace fis
