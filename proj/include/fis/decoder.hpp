#pragma once

#include <torch/torch.h>

#include <optional>
#include <vector>

#include "fis/geometry.hpp"

namespace fis {

// Per-layer output of the decoder heads. layer_index 0 is the prediction made
// from the IA-guided queries before any decoder layer runs.
struct LayerPrediction {
  torch::Tensor object_mask_logits;  // [N,L]
  torch::Tensor shadow_mask_logits;  // [N,L]
  torch::Tensor class_logits;        // [N] single pair-vs-background logit
  int layer_index = 0;
};

// Ground-truth attention override for the GT mask-guided training pass. Rows
// with row_enabled true replace both derived attention masks; the others keep
// the predicted-mask attention of a normal forward.
struct GtAttnOverride {
  torch::Tensor object_masks;  // [N,L] bool
  torch::Tensor shadow_masks;  // [N,L] bool
  torch::Tensor row_enabled;   // [N] bool
};

struct DecoderState {
  torch::Tensor queries;        // [N,C]
  torch::Tensor object_pixels;  // [L,C]
  torch::Tensor shadow_pixels;  // [L,C]
  std::vector<LayerPrediction> predictions;  // Γ+1 entries after a full forward
};

// Optional instrumentation captured during a decoder forward.
struct DecoderTrace {
  std::vector<torch::Tensor> queries_after_first_step;
  std::vector<torch::Tensor> shadow_pixels_after_first_step;
};

// Multi-head scaled dot-product attention with an optional boolean mask.
// Mask row r marks the keys query r may attend to; rows whose mask is
// entirely false fall back to unmasked attention. An all-true mask takes the
// exact unmasked code path (bitwise-identical outputs).
class MaskedAttentionImpl : public torch::nn::Module {
 public:
  MaskedAttentionImpl(int channels, int heads);

  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key,
                        const torch::Tensor& value,
                        const std::optional<torch::Tensor>& mask = std::nullopt);

  int heads;
  torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};
};
TORCH_MODULE(MaskedAttention);

// One dual-path update: pixel features first attend to the queries (cross
// attention + feedforward), then the queries are updated through masked
// attention over the refreshed pixels, self-attention, and feedforward, with
// residual connections and layer norm around every sublayer. Positional
// embeddings are added to the attention inputs at every sublayer.
class DualPathDecoderImpl : public torch::nn::Module {
 public:
  DualPathDecoderImpl(int channels, int heads, int ffn_dim);

  struct Result {
    torch::Tensor queries;
    torch::Tensor pixels;
  };
  Result forward(const torch::Tensor& queries, const torch::Tensor& pixels,
                 const torch::Tensor& query_pos, const torch::Tensor& pixel_pos,
                 const std::optional<torch::Tensor>& attn_mask);

  MaskedAttention pixel_cross{nullptr}, query_cross{nullptr}, query_self{nullptr};
  torch::nn::Sequential pixel_ffn{nullptr}, query_ffn{nullptr};
  torch::nn::LayerNorm norm_pixel_attn{nullptr}, norm_pixel_ffn{nullptr}, norm_query_attn{nullptr},
      norm_query_self{nullptr}, norm_query_ffn{nullptr};
};
TORCH_MODULE(DualPathDecoder);

// Shared prediction heads: a three-layer MLP turns queries into mask
// embeddings, separate linear projections turn object/shadow pixel features
// into mask features, and mask logits are their inner products. A linear head
// on the queries gives the pair-vs-background logit.
class PredictHeadsImpl : public torch::nn::Module {
 public:
  explicit PredictHeadsImpl(int channels);

  LayerPrediction forward(const torch::Tensor& queries, const torch::Tensor& object_pixels,
                          const torch::Tensor& shadow_pixels, int layer_index);

  torch::Tensor mask_embeddings(const torch::Tensor& queries);

  torch::nn::Sequential mask_mlp{nullptr};
  torch::nn::Linear object_proj{nullptr}, shadow_proj{nullptr}, class_head{nullptr};
};
TORCH_MODULE(PredictHeads);

// One association transformer decoder layer: two dual-path decoders in
// sequence, the first aggregating object pixel features into the queries and
// the second aggregating shadow pixel features.
class AssociationLayerImpl : public torch::nn::Module {
 public:
  AssociationLayerImpl(int channels, int heads, int ffn_dim);

  DualPathDecoder object_path{nullptr}, shadow_path{nullptr};
};
TORCH_MODULE(AssociationLayer);

// Γ stacked association layers with shared prediction heads. Attention masks
// derive from the previous layer's predicted masks thresholded at probability
// 0.5; the GT override replaces them row-wise when supplied.
class AssociationDecoderImpl : public torch::nn::Module {
 public:
  AssociationDecoderImpl(int channels, int attn_heads, int ffn_dim, int num_layers);

  DecoderState forward(const torch::Tensor& queries, const torch::Tensor& object_pixels,
                       const torch::Tensor& shadow_pixels, const torch::Tensor& query_pos,
                       const torch::Tensor& pixel_pos, const GtAttnOverride* gt_override = nullptr,
                       DecoderTrace* trace = nullptr);

  int num_layers;
  torch::nn::ModuleList layers;
  PredictHeads heads{nullptr};
};
TORCH_MODULE(AssociationDecoder);

// Boolean attention mask from predicted mask logits: probability > 0.5.
torch::Tensor attention_mask_from_logits(const torch::Tensor& mask_logits);

// θ^p = centroid of the query's object mask (treated as a constant) plus the
// offset vector at the nearest offset-map cell; the gradient flows only
// through the offset lookup.
torch::Tensor predicted_shadow_center(const ProbMask& object_mask, const torch::Tensor& offset_map);

// The nearest-cell index used by predicted_shadow_center, exposed for the
// exhaustive nearest-cell oracle test. Returns (row, col).
std::pair<int, int> offset_cell_for_center(const Point2& center, int height, int width);

}  // namespace fis
