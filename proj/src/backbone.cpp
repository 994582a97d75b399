#include "fis/backbone.hpp"

#include "fis/common.hpp"

namespace fis {

namespace F = torch::nn::functional;

void ExtractorConfig::validate() const {
  FIS_CHECK(channel_count >= 8, "channel_count must be at least 8, got ", channel_count);
  FIS_CHECK(channel_count % 4 == 0, "channel_count must be divisible by 4, got ", channel_count);
  for (int depth : stage_depths) {
    FIS_CHECK(depth >= 1, "stage depths must be positive");
  }
  for (int g : ppm_pool_sizes) {
    FIS_CHECK(g >= 1, "ppm pool sizes must be positive");
  }
}

namespace {

int group_count(int width) {
  for (int g = 8; g > 1; --g) {
    if (width % g == 0) return g;
  }
  return 1;
}

torch::nn::Sequential conv_block(int in, int out, int stride) {
  return torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)),
      torch::nn::GroupNorm(torch::nn::GroupNormOptions(group_count(out), out)),
      torch::nn::ReLU());
}

torch::nn::Sequential stage(int in, int out, int depth) {
  torch::nn::Sequential seq;
  seq->extend(*conv_block(in, out, 2));
  for (int i = 1; i < depth; ++i) {
    seq->extend(*conv_block(out, out, 1));
  }
  return seq;
}

torch::nn::Sequential output_conv(int channels) {
  return torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)),
      torch::nn::GroupNorm(torch::nn::GroupNormOptions(group_count(channels), channels)));
}

}  // namespace

FeatureExtractorImpl::FeatureExtractorImpl(const ExtractorConfig& cfg) : config(cfg) {
  config.validate();
  const int c = config.channel_count;
  const int w_stem = std::max(8, c / 2);
  const int w3 = c;
  const int w4 = 2 * c;
  const int w5 = 4 * c;

  torch::nn::Sequential stem_seq;
  stem_seq->extend(*conv_block(3, w_stem, 2));
  stem_seq->extend(*conv_block(w_stem, w_stem, 2));
  stem = register_module("stem", stem_seq);
  stage3 = register_module("stage3", stage(w_stem, w3, config.stage_depths[0]));
  stage4 = register_module("stage4", stage(w3, w4, config.stage_depths[1]));
  stage5 = register_module("stage5", stage(w4, w5, config.stage_depths[2]));

  proj3 = register_module("proj3", torch::nn::Conv2d(torch::nn::Conv2dOptions(w3, c, 1)));
  proj4 = register_module("proj4", torch::nn::Conv2d(torch::nn::Conv2dOptions(w4, c, 1)));
  proj5 = register_module("proj5", torch::nn::Conv2d(torch::nn::Conv2dOptions(w5, c, 1)));

  ppm_branches = register_module("ppm_branches", torch::nn::ModuleList());
  if (!config.ppm_pool_sizes.empty()) {
    const int branch_c = std::max(1, c / static_cast<int>(config.ppm_pool_sizes.size()));
    for (std::size_t i = 0; i < config.ppm_pool_sizes.size(); ++i) {
      ppm_branches->push_back(torch::nn::Sequential(
          torch::nn::Conv2d(torch::nn::Conv2dOptions(c, branch_c, 1)), torch::nn::ReLU()));
    }
    const int cat_c = c + branch_c * static_cast<int>(config.ppm_pool_sizes.size());
    ppm_fuse = register_module(
        "ppm_fuse",
        torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(cat_c, c, 1)),
                              torch::nn::GroupNorm(torch::nn::GroupNormOptions(group_count(c), c)),
                              torch::nn::ReLU()));
  }

  out3 = register_module("out3", output_conv(c));
  out4 = register_module("out4", output_conv(c));
  out5 = register_module("out5", output_conv(c));
}

FeatureMaps FeatureExtractorImpl::forward(const torch::Tensor& image) {
  FIS_CHECK(image.dim() == 3 && image.size(0) == 3, "expected [3,H,W] image tensor");
  const auto h = image.size(1);
  const auto w = image.size(2);
  FIS_CHECK(h % 32 == 0 && w % 32 == 0, "input size ", h, "x", w,
            " must be a multiple of 32; pad first (pad_to_multiple)");

  auto x = image.unsqueeze(0);
  auto trunk = stem->forward(x);
  auto c3 = stage3->forward(trunk);
  auto c4 = stage4->forward(c3);
  auto c5 = stage5->forward(c4);

  auto p3 = proj3->forward(c3);
  auto p4 = proj4->forward(c4);
  auto p5 = proj5->forward(c5);

  auto t5 = p5;
  if (!config.ppm_pool_sizes.empty()) {
    std::vector<torch::Tensor> cat_inputs{p5};
    const std::vector<std::int64_t> p5_size{p5.size(2), p5.size(3)};
    for (std::size_t i = 0; i < config.ppm_pool_sizes.size(); ++i) {
      const int g = config.ppm_pool_sizes[i];
      auto pooled = F::adaptive_avg_pool2d(
          p5, F::AdaptiveAvgPool2dFuncOptions(std::vector<std::int64_t>{g, g}));
      auto branch = ppm_branches[i]->as<torch::nn::Sequential>()->forward(pooled);
      cat_inputs.push_back(F::interpolate(branch, F::InterpolateFuncOptions()
                                                      .size(p5_size)
                                                      .mode(torch::kBilinear)
                                                      .align_corners(false)));
    }
    t5 = ppm_fuse->forward(torch::cat(cat_inputs, 1));
  }

  const auto up2 = [](const torch::Tensor& t) {
    return F::interpolate(t, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
  };
  auto t4 = up2(t5) + p4;
  auto t3 = up2(t4) + p3;

  FeatureMaps maps;
  maps.e5 = out5->forward(t5).squeeze(0);
  maps.e4 = out4->forward(t4).squeeze(0);
  maps.e3 = out3->forward(t3).squeeze(0);
  return maps;
}

}  // namespace fis
