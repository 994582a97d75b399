#pragma once

#include <torch/torch.h>

#include <array>
#include <vector>

namespace fis {

struct ExtractorConfig {
  int channel_count = 256;
  std::array<int, 3> stage_depths = {2, 2, 2};
  // Pyramid pooling grid sizes applied to the deepest map; empty disables the
  // pooling block (used by tests that need exact translation equivariance).
  std::vector<int> ppm_pool_sizes = {1, 2, 3, 6};

  void validate() const;
};

// Multi-scale pixel features at strides 8/16/32, all with `channel_count`
// channels, shaped [C,h,w].
struct FeatureMaps {
  torch::Tensor e3;
  torch::Tensor e4;
  torch::Tensor e5;
};

// Strided convolutional backbone plus a PPM-FPN style pixel decoder. The
// trunk produces C3/C4/C5 at strides 8/16/32 with widths C/2C/4C; 1x1
// projections bring each to C channels, the pooling block enriches the
// deepest map, and top-down upsample-and-add fusion with 3x3 output
// convolutions yields E5, E4, E3.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  explicit FeatureExtractorImpl(const ExtractorConfig& config);

  // image: [3,H,W] with H, W multiples of 32 (see pad_to_multiple).
  FeatureMaps forward(const torch::Tensor& image);

  ExtractorConfig config;

  torch::nn::Sequential stem{nullptr};
  torch::nn::Sequential stage3{nullptr};
  torch::nn::Sequential stage4{nullptr};
  torch::nn::Sequential stage5{nullptr};
  torch::nn::Conv2d proj3{nullptr};
  torch::nn::Conv2d proj4{nullptr};
  torch::nn::Conv2d proj5{nullptr};
  torch::nn::ModuleList ppm_branches;
  torch::nn::Sequential ppm_fuse{nullptr};
  torch::nn::Sequential out3{nullptr};
  torch::nn::Sequential out4{nullptr};
  torch::nn::Sequential out5{nullptr};
};
TORCH_MODULE(FeatureExtractor);

}  // namespace fis
