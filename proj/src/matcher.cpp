#include "fis/matcher.hpp"

#include <algorithm>
#include <limits>

#include "fis/common.hpp"
#include "fis/losses.hpp"
#include "fis/tensor_utils.hpp"

namespace fis {

namespace {

// Jonker-Volgenant style shortest augmenting paths with potentials; rows must
// not outnumber columns (callers transpose when they do).
std::vector<int> solve_rows_leq_cols(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(a[0].size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_for_row(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) col_for_row[p[j] - 1] = j - 1;
  }
  return col_for_row;
}

}  // namespace

Assignment hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
  Assignment out;
  if (cost.empty() || cost[0].empty()) return out;
  const int rows = static_cast<int>(cost.size());
  const int cols = static_cast<int>(cost[0].size());
  for (const auto& row : cost) {
    FIS_CHECK(static_cast<int>(row.size()) == cols, "ragged cost matrix");
  }

  if (rows <= cols) {
    const std::vector<int> col_for_row = solve_rows_leq_cols(cost);
    for (int r = 0; r < rows; ++r) out.pairs.emplace_back(r, col_for_row[r]);
  } else {
    std::vector<std::vector<double>> t(cols, std::vector<double>(rows));
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) t[c][r] = cost[r][c];
    }
    const std::vector<int> row_for_col = solve_rows_leq_cols(t);
    for (int c = 0; c < cols; ++c) out.pairs.emplace_back(row_for_col[c], c);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

double assignment_cost(const std::vector<std::vector<double>>& cost, const Assignment& assignment) {
  double total = 0.0;
  for (const auto& [q, g] : assignment.pairs) total += cost[q][g];
  return total;
}

SharedPoints draw_matcher_points(const std::vector<ShadowObjectInstance>& gts, int k_points,
                                 Rng& rng, torch::Dtype dtype) {
  FIS_CHECK(k_points >= 1, "need at least one matcher point");
  SharedPoints out;
  std::vector<double> coords(static_cast<std::size_t>(k_points) * 2);
  for (int i = 0; i < k_points; ++i) {
    coords[2 * i] = rng.uniform();
    coords[2 * i + 1] = rng.uniform();
  }
  out.coords = torch::tensor(coords, torch::kFloat64).view({k_points, 2});
  for (const ShadowObjectInstance& gt : gts) {
    std::vector<double> labels(k_points);
    for (int i = 0; i < k_points; ++i) {
      labels[i] = nearest_pixel_label(gt.object_mask, coords[2 * i], coords[2 * i + 1]);
    }
    out.gt_labels.push_back(torch::tensor(labels, torch::kFloat64).to(dtype));
  }
  return out;
}

Assignment match(const LayerPrediction& pred, const std::vector<ShadowObjectInstance>& gts,
                 const LossWeights& weights, const SharedPoints& points, int grid_h, int grid_w) {
  if (gts.empty()) return Assignment{};
  torch::NoGradGuard no_grad;

  const auto n = pred.object_mask_logits.size(0);
  const auto k = points.coords.size(0);
  auto logits_grids = pred.object_mask_logits.view({n, grid_h, grid_w});
  auto probs = torch::sigmoid(sample_grids_bilinear(logits_grids, points.coords));  // [N,K]
  probs = probs.clamp(kProbClamp, 1.0 - kProbClamp);
  auto pair_scores = torch::sigmoid(pred.class_logits);  // [N]

  std::vector<std::vector<double>> cost(n, std::vector<double>(gts.size(), 0.0));
  for (std::size_t g = 0; g < gts.size(); ++g) {
    auto y = points.gt_labels[g].to(probs.dtype()).unsqueeze(0);  // [1,K]
    auto bce = -(y * probs.log() + (1.0 - y) * (1.0 - probs).log()).mean(1);  // [N]
    auto inter = (probs * y).sum(1);
    auto dice = 1.0 - (2.0 * inter + 1.0) / (probs.sum(1) + y.sum() + 1.0);
    auto col = weights.lambda_cls * (-pair_scores) + weights.lambda_ce * bce +
               weights.lambda_dice * dice;
    auto col_cpu = col.to(torch::kFloat64).contiguous();
    const double* data = col_cpu.data_ptr<double>();
    for (std::int64_t q = 0; q < n; ++q) cost[q][g] = data[q];
  }
  (void)k;
  return hungarian_min_cost(cost);
}

}  // namespace fis
