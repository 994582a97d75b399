#pragma once

#include <torch/torch.h>

#include "fis/backbone.hpp"
#include "fis/decoder.hpp"
#include "fis/queries.hpp"

namespace fis {

struct ModelConfig {
  ExtractorConfig extractor;
  int decoder_layers = 1;  // Γ in FIS-DΓ
  int n_activation = 20;
  int n_auxiliary = 4;

  // 8 heads at 256 channels, scaled proportionally, minimum one head.
  int attention_heads() const { return std::max(1, extractor.channel_count * 8 / 256); }
  int ffn_dim() const { return 4 * extractor.channel_count; }
  void validate() const;
};

struct ModelOutputs {
  FeatureMaps features;
  torch::Tensor activation_logits;  // [h4,w4]
  QuerySet queries;
  torch::Tensor query_pos_embed;  // [N,C]
  torch::Tensor pixel_pos_embed;  // [L,C]
  DecoderState state;
  torch::Tensor offset_map;  // [2,h3,w3]
  int grid_h = 0;            // E3 rows (h3)
  int grid_w = 0;            // E3 cols (w3)
};

class FisModelImpl : public torch::nn::Module {
 public:
  explicit FisModelImpl(const ModelConfig& config);

  // image: [3,H,W], H and W multiples of 32.
  ModelOutputs forward(const torch::Tensor& image);

  // Reruns the association layers from the cached decoder inputs of a forward
  // pass, used for the GT mask-guided training pass.
  DecoderState forward_decoder(const ModelOutputs& base, const GtAttnOverride* gt_override,
                               DecoderTrace* trace = nullptr);

  torch::Dtype parameter_dtype() const;

  ModelConfig config;
  FeatureExtractor extractor{nullptr};
  QueryProposer proposer{nullptr};
  AssociationDecoder decoder{nullptr};
  torch::nn::Conv2d offset_head{nullptr};
};
TORCH_MODULE(FisModel);

}  // namespace fis
