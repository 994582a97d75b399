#pragma once

#include <torch/torch.h>

#include <vector>

namespace fis {

// The N = n_activation + n_auxiliary queries entering the decoder.
struct QuerySet {
  torch::Tensor embeddings;               // [N,C]
  torch::Tensor positions;                // [N,2] normalized [0,1]
  std::vector<std::int64_t> selected_cells;  // row-major E4 cells of the IA queries
  int n_activation = 0;
  int n_auxiliary = 0;

  std::int64_t total() const { return n_activation + n_auxiliary; }
};

// Instance-activation query proposer: a 1x1 classification head on E4 scores
// every cell for pair-ness, and the top cells (3x3 local maxima first, ranked
// by probability with row-major tie-break) contribute their embeddings as
// queries. Auxiliary queries are learnable embeddings with learned positions.
class QueryProposerImpl : public torch::nn::Module {
 public:
  QueryProposerImpl(int channels, int n_activation, int n_auxiliary);

  torch::Tensor activation_logits(const torch::Tensor& e4);  // [h,w]

  // Pure selection rule, exposed for the brute-force oracle tests: cells that
  // are 3x3 local maxima (ties broken by row-major index), then the best
  // remaining cells if fewer than n_activation maxima exist.
  static std::vector<std::int64_t> select_cells(const torch::Tensor& probs_hw, int n_activation);

  QuerySet propose(const torch::Tensor& e4, const torch::Tensor& activation_probs_hw);

  int n_activation;
  int n_auxiliary;
  torch::nn::Conv2d head{nullptr};
  torch::Tensor auxiliary_embeddings;  // [n_auxiliary, C] parameter
  torch::Tensor auxiliary_positions;   // [n_auxiliary, 2] parameter, sigmoid-squashed
};
TORCH_MODULE(QueryProposer);

}  // namespace fis
