#include "fis/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fis/common.hpp"
#include "fis/logging.hpp"
#include "fis/tensor_utils.hpp"

namespace fis {

void LossWeights::validate() const {
  FIS_CHECK(lambda_cls_q >= 0 && lambda_cls >= 0 && lambda_ce >= 0 && lambda_dice >= 0 &&
                lambda_d >= 0,
            "loss weights must be nonnegative");
  FIS_CHECK(beta > 0, "beta must be positive");
  FIS_CHECK(alpha >= 0, "alpha must be nonnegative");
  FIS_CHECK(gate_epoch >= 0, "gate epoch must be nonnegative");
}

double nearest_pixel_label(const BinaryMask& mask, double x, double y) {
  const int col = std::clamp(static_cast<int>(std::floor(x * mask.width)), 0, mask.width - 1);
  const int row = std::clamp(static_cast<int>(std::floor(y * mask.height)), 0, mask.height - 1);
  return mask.at(row, col) != 0 ? 1.0 : 0.0;
}

bool point_inside_aabb(const AABB& box, double x, double y, int height, int width) {
  const int col = std::clamp(static_cast<int>(std::floor(x * width)), 0, width - 1);
  const int row = std::clamp(static_cast<int>(std::floor(y * height)), 0, height - 1);
  return box.contains(col, row);
}

namespace {

torch::Tensor coords_tensor(const std::vector<double>& flat_xy) {
  return torch::tensor(flat_xy, torch::kFloat64).view({static_cast<std::int64_t>(flat_xy.size()) / 2, 2});
}

torch::Tensor clamp_probs(const torch::Tensor& probs) {
  return probs.clamp(kProbClamp, 1.0 - kProbClamp);
}

torch::Tensor bce_terms(const torch::Tensor& probs, const torch::Tensor& labels) {
  auto p = clamp_probs(probs);
  auto y = labels.to(p.dtype());
  return -(y * p.log() + (1.0 - y) * (1.0 - p).log());
}

}  // namespace

PointSample sample_points(const torch::Tensor& pred_logits_hw, const BinaryMask& gt_mask,
                          int k_points, const PointSampleStrategy& strategy, Rng& rng) {
  FIS_CHECK(k_points >= 1, "k_points must be at least 1");
  FIS_CHECK(pred_logits_hw.dim() == 2, "prediction logits must be [h,w]");

  const int keep = std::min(
      k_points, static_cast<int>(std::ceil(strategy.importance_fraction * k_points)));
  std::vector<double> flat;

  if (keep > 0) {
    const int candidates = std::max(keep, strategy.oversample * k_points);
    std::vector<double> cand(static_cast<std::size_t>(candidates) * 2);
    for (std::size_t i = 0; i < cand.size(); ++i) cand[i] = rng.uniform();
    torch::Tensor uncertainty;
    {
      torch::NoGradGuard no_grad;
      auto probs = torch::sigmoid(sample_grid_bilinear(pred_logits_hw, coords_tensor(cand)));
      uncertainty = (probs.to(torch::kFloat64) - 0.5).abs();
    }
    // Stable ranking: ties keep draw order, so a uniform-logit prediction
    // reduces to uniform sampling.
    std::vector<int> order(candidates);
    for (int i = 0; i < candidates; ++i) order[i] = i;
    const double* u = uncertainty.data_ptr<double>();
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return u[a] < u[b]; });
    for (int i = 0; i < keep; ++i) {
      flat.push_back(cand[2 * order[i]]);
      flat.push_back(cand[2 * order[i] + 1]);
    }
  }
  for (int i = keep; i < k_points; ++i) {
    flat.push_back(rng.uniform());
    flat.push_back(rng.uniform());
  }

  PointSample sample;
  sample.coords = coords_tensor(flat);
  const AABB box = mask_to_aabb(gt_mask);
  std::vector<double> labels(k_points);
  std::vector<std::uint8_t> inside(k_points);
  for (int i = 0; i < k_points; ++i) {
    labels[i] = nearest_pixel_label(gt_mask, flat[2 * i], flat[2 * i + 1]);
    inside[i] = point_inside_aabb(box, flat[2 * i], flat[2 * i + 1], gt_mask.height, gt_mask.width)
                    ? 1
                    : 0;
  }
  sample.labels = torch::tensor(labels, torch::kFloat64).to(pred_logits_hw.dtype());
  sample.inside_aabb = torch::tensor(inside, torch::TensorOptions(torch::kUInt8)).to(torch::kBool);
  sample.probs = torch::sigmoid(sample_grid_bilinear(pred_logits_hw, sample.coords));
  return sample;
}

torch::Tensor box_aware_ce(const PointSample& points, const LossWeights& weights, int epoch) {
  auto terms = bce_terms(points.probs, points.labels);
  if (epoch >= weights.gate_epoch) {
    auto deviant = points.inside_aabb.logical_not() & (points.labels < 0.5) &
                   (points.probs.detach() > 0.5);
    auto w = torch::where(deviant, torch::full_like(terms, weights.alpha),
                          torch::ones_like(terms));
    terms = terms * w;
  }
  return terms.mean();
}

torch::Tensor dice_loss(const torch::Tensor& probs, const torch::Tensor& labels) {
  auto y = labels.to(probs.dtype());
  auto inter = (probs * y).sum();
  return 1.0 - (2.0 * inter + 1.0) / (probs.sum() + y.sum() + 1.0);
}

torch::Tensor shadow_direction_loss(const std::vector<torch::Tensor>& predicted_centers,
                                    const std::vector<Point2>& gt_centers,
                                    const LossWeights& weights) {
  FIS_CHECK(predicted_centers.size() == gt_centers.size(),
            "predicted/GT center count mismatch");
  if (predicted_centers.empty()) {
    return torch::zeros({}, torch::kFloat64);
  }
  torch::Tensor sum;
  for (std::size_t i = 0; i < predicted_centers.size(); ++i) {
    auto target = torch::tensor({gt_centers[i].x, gt_centers[i].y},
                                predicted_centers[i].options().requires_grad(false));
    auto diff = (predicted_centers[i] - target).abs();
    auto term = torch::where(diff < weights.beta, 0.5 * diff * diff / weights.beta,
                             diff - 0.5 * weights.beta)
                    .sum();
    sum = i == 0 ? term : sum + term;
  }
  return weights.lambda_d * sum / static_cast<double>(predicted_centers.size());
}

torch::Tensor instance_activation_loss(const torch::Tensor& activation_logits_hw,
                                       const std::vector<ShadowObjectInstance>& gts,
                                       const LossWeights& weights) {
  FIS_CHECK(activation_logits_hw.dim() == 2, "activation logits must be [h,w]");
  const int h = static_cast<int>(activation_logits_hw.size(0));
  const int w = static_cast<int>(activation_logits_hw.size(1));
  auto target = torch::zeros({h, w}, activation_logits_hw.options().requires_grad(false));
  for (const ShadowObjectInstance& gt : gts) {
    const Point2 c = mask_centroid(gt.object_mask);
    const int col = std::clamp(static_cast<int>(std::floor(c.x * w)), 0, w - 1);
    const int row = std::clamp(static_cast<int>(std::floor(c.y * h)), 0, h - 1);
    if (target[row][col].item<double>() > 0.5) {
      log(LogLevel::kDebug, str_cat("two GT centroids share activation cell (", row, ",", col,
                                    "); keeping a single positive"));
    }
    target[row][col] = 1.0;
  }
  auto probs = torch::sigmoid(activation_logits_hw);
  return weights.lambda_cls_q * bce_terms(probs, target).mean();
}

torch::Tensor classification_loss(const torch::Tensor& class_logits, const Assignment& assignment) {
  auto target = torch::zeros_like(class_logits);
  for (const auto& [q, g] : assignment.pairs) {
    (void)g;
    target[q] = 1.0;
  }
  return bce_terms(torch::sigmoid(class_logits), target).mean();
}

namespace {

StreamPlan make_stream_plan(int query_index, int gt_index, const torch::Tensor& logits_row,
                            const BinaryMask& gt_mask, int k_points,
                            const PointSampleStrategy& strategy, Rng& rng, int grid_h, int grid_w) {
  PointSample sample = sample_points(logits_row.view({grid_h, grid_w}), gt_mask, k_points,
                                     strategy, rng);
  StreamPlan plan;
  plan.query_index = query_index;
  plan.gt_index = gt_index;
  plan.coords = sample.coords;
  plan.labels = sample.labels;
  plan.inside = sample.inside_aabb;
  return plan;
}

LayerPlan plan_layer(const LayerPrediction& pred, const std::vector<ShadowObjectInstance>& gts,
                     const LossWeights& weights, int k_points, const PointSampleStrategy& strategy,
                     Rng& rng, int grid_h, int grid_w) {
  LayerPlan plan;
  SharedPoints matcher_points = draw_matcher_points(gts, k_points, rng,
                                                    pred.object_mask_logits.scalar_type());
  plan.assignment = match(pred, gts, weights, matcher_points, grid_h, grid_w);
  for (const auto& [q, g] : plan.assignment.pairs) {
    plan.object_streams.push_back(make_stream_plan(q, g, pred.object_mask_logits[q],
                                                   gts[g].object_mask, k_points, strategy, rng,
                                                   grid_h, grid_w));
    plan.shadow_streams.push_back(make_stream_plan(q, g, pred.shadow_mask_logits[q],
                                                   gts[g].shadow_mask, k_points, strategy, rng,
                                                   grid_h, grid_w));
  }
  return plan;
}

// Downsamples a full-resolution GT mask to the pixel-feature grid with
// any-coverage semantics.
torch::Tensor mask_to_grid_row(const BinaryMask& mask, int grid_h, int grid_w) {
  auto full = mask_to_tensor(mask, torch::kFloat32).unsqueeze(0).unsqueeze(0);
  auto pooled = std::get<0>(torch::adaptive_max_pool2d(full, {grid_h, grid_w}));
  return (pooled.squeeze(0).squeeze(0) > 0.5).reshape({-1});
}

PointSample probe_stream(const torch::Tensor& logits_row, const StreamPlan& plan, int grid_h,
                         int grid_w) {
  PointSample sample;
  sample.coords = plan.coords;
  sample.labels = plan.labels;
  sample.inside_aabb = plan.inside;
  sample.probs = torch::sigmoid(
      sample_grid_bilinear(logits_row.view({grid_h, grid_w}), plan.coords));
  return sample;
}

}  // namespace

LossPlan plan_main_losses(const ModelOutputs& outputs,
                          const std::vector<ShadowObjectInstance>& gts,
                          const LossWeights& weights, int k_points,
                          const PointSampleStrategy& strategy, Rng& rng) {
  LossPlan plan;
  plan.grid_h = outputs.grid_h;
  plan.grid_w = outputs.grid_w;
  for (const LayerPrediction& pred : outputs.state.predictions) {
    plan.main_layers.push_back(plan_layer(pred, gts, weights, k_points, strategy, rng,
                                          plan.grid_h, plan.grid_w));
  }

  // The GT attention override and the shadow-direction targets both derive
  // from the last layer's assignment.
  const Assignment& last = plan.main_layers.back().assignment;
  const LayerPrediction& last_pred = outputs.state.predictions.back();
  const auto n = last_pred.object_mask_logits.size(0);
  const auto l = static_cast<std::int64_t>(plan.grid_h) * plan.grid_w;
  auto object_rows = torch::zeros({n, l}, torch::kBool);
  auto shadow_rows = torch::zeros({n, l}, torch::kBool);
  auto enabled = torch::zeros({n}, torch::kBool);
  for (const auto& [q, g] : last.pairs) {
    object_rows[q] = mask_to_grid_row(gts[g].object_mask, plan.grid_h, plan.grid_w);
    shadow_rows[q] = mask_to_grid_row(gts[g].shadow_mask, plan.grid_h, plan.grid_w);
    enabled[q] = true;
  }
  plan.gt_override = GtAttnOverride{object_rows, shadow_rows, enabled};

  for (const auto& [q, g] : last.pairs) {
    const ProbMask object_probs = tensor_to_prob_mask(
        torch::sigmoid(last_pred.object_mask_logits[q].detach()).view({plan.grid_h, plan.grid_w}));
    const Point2 center = mask_centroid(object_probs);
    plan.direction.query_indices.push_back(q);
    plan.direction.centers.push_back(center);
    plan.direction.cells.push_back(offset_cell_for_center(center, plan.grid_h, plan.grid_w));
    plan.direction.gt_centers.push_back(mask_centroid(gts[g].shadow_mask));
  }
  return plan;
}

void plan_gt_losses(LossPlan& plan, const DecoderState& gt_state,
                    const std::vector<ShadowObjectInstance>& gts, const LossWeights& weights,
                    int k_points, const PointSampleStrategy& strategy, Rng& rng) {
  plan.gt_layers.clear();
  // The zeroth-layer loss is skipped for the GT-guided pass.
  for (std::size_t i = 1; i < gt_state.predictions.size(); ++i) {
    plan.gt_layers.push_back(plan_layer(gt_state.predictions[i], gts, weights, k_points, strategy,
                                        rng, plan.grid_h, plan.grid_w));
  }
}

torch::Tensor prediction_loss(const std::vector<LayerPrediction>& predictions,
                              const std::vector<LayerPlan>& plans,
                              const std::vector<ShadowObjectInstance>& gts,
                              const LossWeights& weights, int epoch, int grid_h, int grid_w) {
  (void)gts;
  FIS_CHECK(predictions.size() == plans.size(), "prediction/plan count mismatch");
  torch::Tensor total;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const LayerPrediction& pred = predictions[i];
    const LayerPlan& plan = plans[i];

    auto layer_loss = weights.lambda_cls * classification_loss(pred.class_logits, plan.assignment);
    if (!plan.object_streams.empty()) {
      torch::Tensor ce_sum, dice_sum;
      for (std::size_t s = 0; s < plan.object_streams.size(); ++s) {
        const StreamPlan& obj = plan.object_streams[s];
        const StreamPlan& shad = plan.shadow_streams[s];
        PointSample obj_points = probe_stream(pred.object_mask_logits[obj.query_index], obj,
                                              grid_h, grid_w);
        PointSample shad_points = probe_stream(pred.shadow_mask_logits[shad.query_index], shad,
                                               grid_h, grid_w);
        auto ce = box_aware_ce(obj_points, weights, epoch) +
                  box_aware_ce(shad_points, weights, epoch);
        auto dice = dice_loss(obj_points.probs, obj_points.labels) +
                    dice_loss(shad_points.probs, shad_points.labels);
        ce_sum = s == 0 ? ce : ce_sum + ce;
        dice_sum = s == 0 ? dice : dice_sum + dice;
      }
      const double count = static_cast<double>(plan.object_streams.size());
      layer_loss = layer_loss + weights.lambda_ce * ce_sum / count +
                   weights.lambda_dice * dice_sum / count;
    }
    total = i == 0 ? layer_loss : total + layer_loss;
  }
  return total;
}

TotalLoss compute_total_loss(const ModelOutputs& outputs, const DecoderState& gt_state,
                             const LossPlan& plan, const std::vector<ShadowObjectInstance>& gts,
                             const LossWeights& weights, int epoch) {
  TotalLoss result;
  result.l_ia_q = instance_activation_loss(outputs.activation_logits, gts, weights);
  result.l_pred = prediction_loss(outputs.state.predictions, plan.main_layers, gts, weights, epoch,
                                  plan.grid_h, plan.grid_w);

  std::vector<LayerPrediction> gt_preds(gt_state.predictions.begin() + 1,
                                        gt_state.predictions.end());
  result.l_pred_gt = prediction_loss(gt_preds, plan.gt_layers, gts, weights, epoch, plan.grid_h,
                                     plan.grid_w);

  std::vector<torch::Tensor> centers;
  for (std::size_t i = 0; i < plan.direction.query_indices.size(); ++i) {
    const auto [row, col] = plan.direction.cells[i];
    auto v = outputs.offset_map.index({torch::indexing::Slice(), row, col});
    auto c = torch::tensor({plan.direction.centers[i].x, plan.direction.centers[i].y},
                           outputs.offset_map.options().requires_grad(false));
    centers.push_back(c + v);
  }
  result.l_d = shadow_direction_loss(centers, plan.direction.gt_centers, weights);
  if (result.l_d.scalar_type() != result.l_pred.scalar_type()) {
    result.l_d = result.l_d.to(result.l_pred.scalar_type());
  }

  result.total = result.l_ia_q + result.l_pred + result.l_pred_gt + result.l_d;
  return result;
}

TotalLoss total_loss(FisModelImpl& model, const ModelOutputs& outputs,
                     const std::vector<ShadowObjectInstance>& gts, const LossWeights& weights,
                     int epoch, int k_points, Rng& rng, const PointSampleStrategy& strategy) {
  LossPlan plan = plan_main_losses(outputs, gts, weights, k_points, strategy, rng);
  DecoderState gt_state = model.forward_decoder(outputs, &plan.gt_override);
  plan_gt_losses(plan, gt_state, gts, weights, k_points, strategy, rng);
  return compute_total_loss(outputs, gt_state, plan, gts, weights, epoch);
}

}  // namespace fis
