#pragma once

#include <torch/torch.h>

#include <vector>

#include "fis/dataset.hpp"
#include "fis/decoder.hpp"
#include "fis/rng.hpp"

namespace fis {

struct LossWeights;

// Bipartite query↔ground-truth assignment. Unmatched queries are background.
struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (query_index, gt_index), sorted by query index

  int gt_for_query(int query) const {
    for (const auto& [q, g] : pairs) {
      if (q == query) return g;
    }
    return -1;
  }
  bool operator==(const Assignment& other) const = default;
};

// Minimum-cost assignment covering min(rows, cols) pairs; O(n^3) potentials
// method. Deterministic for identical inputs.
Assignment hungarian_min_cost(const std::vector<std::vector<double>>& cost);

double assignment_cost(const std::vector<std::vector<double>>& cost, const Assignment& assignment);

// One shared point set per matcher call: every query's predicted mask and
// every GT object mask are evaluated at the same K uniform points.
struct SharedPoints {
  torch::Tensor coords;                   // [K,2] float64, normalized
  std::vector<torch::Tensor> gt_labels;   // per GT: [K] object-mask labels
};

SharedPoints draw_matcher_points(const std::vector<ShadowObjectInstance>& gts, int k_points,
                                 Rng& rng, torch::Dtype dtype);

// Hungarian matching on object masks only: cost(q, g) =
//   λ_cls · (−p_pair(q)) + λ_ce · BCE(object logits vs GT object mask over the
//   shared points, unweighted) + λ_dice · Dice(same points).
// Shadow masks contribute nothing.
Assignment match(const LayerPrediction& pred, const std::vector<ShadowObjectInstance>& gts,
                 const LossWeights& weights, const SharedPoints& points, int grid_h, int grid_w);

}  // namespace fis
