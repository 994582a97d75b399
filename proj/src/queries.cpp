#include "fis/queries.hpp"

#include <algorithm>

#include "fis/common.hpp"
#include "fis/tensor_utils.hpp"

namespace fis {

QueryProposerImpl::QueryProposerImpl(int channels, int n_activation_in, int n_auxiliary_in)
    : n_activation(n_activation_in), n_auxiliary(n_auxiliary_in) {
  FIS_CHECK(n_activation >= 1, "need at least one activation query");
  FIS_CHECK(n_auxiliary >= 0, "auxiliary query count must be nonnegative");
  head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 1, 1)));
  if (n_auxiliary > 0) {
    auxiliary_embeddings =
        register_parameter("auxiliary_embeddings", torch::randn({n_auxiliary, channels}) * 0.02);
    auxiliary_positions = register_parameter("auxiliary_positions", torch::zeros({n_auxiliary, 2}));
  }
}

torch::Tensor QueryProposerImpl::activation_logits(const torch::Tensor& e4) {
  FIS_CHECK(e4.dim() == 3, "expected [C,h,w] feature map");
  return head->forward(e4.unsqueeze(0)).squeeze(0).squeeze(0);
}

std::vector<std::int64_t> QueryProposerImpl::select_cells(const torch::Tensor& probs_hw,
                                                          int n_activation) {
  FIS_CHECK(probs_hw.dim() == 2, "expected [h,w] activation map");
  const int h = static_cast<int>(probs_hw.size(0));
  const int w = static_cast<int>(probs_hw.size(1));
  FIS_CHECK(n_activation <= h * w, "n_activation ", n_activation, " exceeds cell count ", h * w);

  auto probs = probs_hw.detach().to(torch::kFloat64).contiguous();
  const double* p = probs.data_ptr<double>();
  const auto at = [&](int r, int c) { return p[r * w + c]; };

  std::vector<std::int64_t> maxima;
  std::vector<std::int64_t> rest;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      bool is_max = true;
      for (int dr = -1; dr <= 1 && is_max; ++dr) {
        for (int dc = -1; dc <= 1 && is_max; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          if (at(rr, cc) > at(r, c)) is_max = false;
        }
      }
      (is_max ? maxima : rest).push_back(static_cast<std::int64_t>(r) * w + c);
    }
  }

  const auto by_prob_then_index = [&](std::int64_t a, std::int64_t b) {
    if (p[a] != p[b]) return p[a] > p[b];
    return a < b;
  };
  std::sort(maxima.begin(), maxima.end(), by_prob_then_index);
  std::sort(rest.begin(), rest.end(), by_prob_then_index);

  std::vector<std::int64_t> selected;
  selected.reserve(n_activation);
  for (std::int64_t idx : maxima) {
    if (static_cast<int>(selected.size()) == n_activation) break;
    selected.push_back(idx);
  }
  for (std::int64_t idx : rest) {
    if (static_cast<int>(selected.size()) == n_activation) break;
    selected.push_back(idx);
  }
  return selected;
}

QuerySet QueryProposerImpl::propose(const torch::Tensor& e4,
                                    const torch::Tensor& activation_probs_hw) {
  FIS_CHECK(e4.dim() == 3, "expected [C,h,w] feature map");
  const int h = static_cast<int>(e4.size(1));
  const int w = static_cast<int>(e4.size(2));
  FIS_CHECK(activation_probs_hw.size(0) == h && activation_probs_hw.size(1) == w,
            "activation map does not match E4 spatial shape");

  QuerySet out;
  out.n_activation = n_activation;
  out.n_auxiliary = n_auxiliary;
  out.selected_cells = select_cells(activation_probs_hw, n_activation);

  auto flat = flatten_features(e4);  // [h*w, C]
  auto index = torch::tensor(out.selected_cells, torch::TensorOptions(torch::kInt64));
  auto ia_embeddings = flat.index_select(0, index);

  auto centers = grid_cell_centers(h, w, e4.options());
  auto ia_positions = centers.index_select(0, index);

  if (n_auxiliary > 0) {
    out.embeddings = torch::cat({ia_embeddings, auxiliary_embeddings.to(e4.dtype())}, 0);
    out.positions =
        torch::cat({ia_positions, torch::sigmoid(auxiliary_positions.to(e4.dtype()))}, 0);
  } else {
    out.embeddings = ia_embeddings;
    out.positions = ia_positions;
  }
  return out;
}

}  // namespace fis
