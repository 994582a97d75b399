#include "fis/decoder.hpp"

#include <cmath>

#include "fis/common.hpp"

namespace fis {

MaskedAttentionImpl::MaskedAttentionImpl(int channels, int heads_in) : heads(heads_in) {
  FIS_CHECK(heads >= 1 && channels % heads == 0, "channels ", channels,
            " not divisible by head count ", heads);
  q_proj = register_module("q_proj", torch::nn::Linear(channels, channels));
  k_proj = register_module("k_proj", torch::nn::Linear(channels, channels));
  v_proj = register_module("v_proj", torch::nn::Linear(channels, channels));
  out_proj = register_module("out_proj", torch::nn::Linear(channels, channels));
}

torch::Tensor MaskedAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& key,
                                           const torch::Tensor& value,
                                           const std::optional<torch::Tensor>& mask) {
  const auto nq = query.size(0);
  const auto nk = key.size(0);
  const auto c = query.size(1);
  const auto d = c / heads;

  auto q = q_proj->forward(query).view({nq, heads, d}).transpose(0, 1);  // [H,Nq,D]
  auto k = k_proj->forward(key).view({nk, heads, d}).transpose(0, 1);
  auto v = v_proj->forward(value).view({nk, heads, d}).transpose(0, 1);

  auto scores = torch::matmul(q, k.transpose(1, 2)) / std::sqrt(static_cast<double>(d));

  if (mask.has_value()) {
    FIS_CHECK(mask->dim() == 2 && mask->size(0) == nq && mask->size(1) == nk,
              "attention mask must be [", nq, ",", nk, "], got ", mask->size(0), "x",
              mask->size(1));
    auto m = mask->to(torch::kBool);
    // Rows with no attendable key fall back to unmasked attention.
    auto row_any = m.any(1);
    auto effective = m | row_any.logical_not().unsqueeze(1);
    if (!effective.all().item<bool>()) {
      scores = scores.masked_fill(effective.logical_not().unsqueeze(0),
                                  -std::numeric_limits<double>::infinity());
    }
  }

  auto attn = torch::softmax(scores, -1);
  auto out = torch::matmul(attn, v).transpose(0, 1).reshape({nq, c});
  return out_proj->forward(out);
}

namespace {

torch::nn::Sequential make_ffn(int channels, int ffn_dim) {
  return torch::nn::Sequential(torch::nn::Linear(channels, ffn_dim), torch::nn::ReLU(),
                               torch::nn::Linear(ffn_dim, channels));
}

}  // namespace

DualPathDecoderImpl::DualPathDecoderImpl(int channels, int heads, int ffn_dim) {
  pixel_cross = register_module("pixel_cross", MaskedAttention(channels, heads));
  query_cross = register_module("query_cross", MaskedAttention(channels, heads));
  query_self = register_module("query_self", MaskedAttention(channels, heads));
  pixel_ffn = register_module("pixel_ffn", make_ffn(channels, ffn_dim));
  query_ffn = register_module("query_ffn", make_ffn(channels, ffn_dim));
  norm_pixel_attn = register_module("norm_pixel_attn", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
  norm_pixel_ffn = register_module("norm_pixel_ffn", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
  norm_query_attn = register_module("norm_query_attn", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
  norm_query_self = register_module("norm_query_self", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
  norm_query_ffn = register_module("norm_query_ffn", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
}

DualPathDecoderImpl::Result DualPathDecoderImpl::forward(
    const torch::Tensor& queries, const torch::Tensor& pixels, const torch::Tensor& query_pos,
    const torch::Tensor& pixel_pos, const std::optional<torch::Tensor>& attn_mask) {
  // Pixel update first: pixels attend to the queries, then feedforward.
  auto x = norm_pixel_attn->forward(
      pixels + pixel_cross->forward(pixels + pixel_pos, queries + query_pos, queries));
  x = norm_pixel_ffn->forward(x + pixel_ffn->forward(x));

  // Query update: masked attention over the refreshed pixels, self-attention,
  // feedforward.
  auto q = norm_query_attn->forward(
      queries + query_cross->forward(queries + query_pos, x + pixel_pos, x, attn_mask));
  q = norm_query_self->forward(q + query_self->forward(q + query_pos, q + query_pos, q));
  q = norm_query_ffn->forward(q + query_ffn->forward(q));
  return Result{q, x};
}

PredictHeadsImpl::PredictHeadsImpl(int channels) {
  mask_mlp = register_module(
      "mask_mlp", torch::nn::Sequential(torch::nn::Linear(channels, channels), torch::nn::ReLU(),
                                        torch::nn::Linear(channels, channels), torch::nn::ReLU(),
                                        torch::nn::Linear(channels, channels)));
  object_proj = register_module("object_proj", torch::nn::Linear(channels, channels));
  shadow_proj = register_module("shadow_proj", torch::nn::Linear(channels, channels));
  class_head = register_module("class_head", torch::nn::Linear(channels, 1));
}

torch::Tensor PredictHeadsImpl::mask_embeddings(const torch::Tensor& queries) {
  return mask_mlp->forward(queries);
}

LayerPrediction PredictHeadsImpl::forward(const torch::Tensor& queries,
                                          const torch::Tensor& object_pixels,
                                          const torch::Tensor& shadow_pixels, int layer_index) {
  auto emb = mask_embeddings(queries);  // [N,C]
  LayerPrediction pred;
  pred.object_mask_logits = torch::matmul(emb, object_proj->forward(object_pixels).transpose(0, 1));
  pred.shadow_mask_logits = torch::matmul(emb, shadow_proj->forward(shadow_pixels).transpose(0, 1));
  pred.class_logits = class_head->forward(queries).squeeze(1);
  pred.layer_index = layer_index;
  return pred;
}

AssociationLayerImpl::AssociationLayerImpl(int channels, int heads, int ffn_dim) {
  object_path = register_module("object_path", DualPathDecoder(channels, heads, ffn_dim));
  shadow_path = register_module("shadow_path", DualPathDecoder(channels, heads, ffn_dim));
}

AssociationDecoderImpl::AssociationDecoderImpl(int channels, int attn_heads, int ffn_dim,
                                               int num_layers_in)
    : num_layers(num_layers_in) {
  FIS_CHECK(num_layers >= 1, "decoder needs at least one association layer");
  layers = register_module("layers", torch::nn::ModuleList());
  for (int i = 0; i < num_layers; ++i) {
    layers->push_back(AssociationLayer(channels, attn_heads, ffn_dim));
  }
  heads = register_module("heads", PredictHeads(channels));
}

torch::Tensor attention_mask_from_logits(const torch::Tensor& mask_logits) {
  return mask_logits.detach() > 0.0;  // sigmoid(x) > 0.5 iff x > 0
}

DecoderState AssociationDecoderImpl::forward(const torch::Tensor& queries,
                                             const torch::Tensor& object_pixels,
                                             const torch::Tensor& shadow_pixels,
                                             const torch::Tensor& query_pos,
                                             const torch::Tensor& pixel_pos,
                                             const GtAttnOverride* gt_override,
                                             DecoderTrace* trace) {
  DecoderState state;
  state.queries = queries;
  state.object_pixels = object_pixels;
  state.shadow_pixels = shadow_pixels;
  state.predictions.push_back(heads->forward(queries, object_pixels, shadow_pixels, 0));

  const auto apply_override = [&](torch::Tensor derived, const torch::Tensor& override_rows) {
    auto enabled = gt_override->row_enabled.to(torch::kBool).unsqueeze(1);
    return torch::where(enabled, override_rows.to(torch::kBool), derived);
  };

  for (int i = 0; i < num_layers; ++i) {
    const LayerPrediction& prev = state.predictions.back();
    auto object_mask = attention_mask_from_logits(prev.object_mask_logits);
    auto shadow_mask = attention_mask_from_logits(prev.shadow_mask_logits);
    if (gt_override != nullptr) {
      object_mask = apply_override(object_mask, gt_override->object_masks);
      shadow_mask = apply_override(shadow_mask, gt_override->shadow_masks);
    }

    auto* layer = layers[i]->as<AssociationLayerImpl>();
    auto first = layer->object_path->forward(state.queries, state.object_pixels, query_pos,
                                             pixel_pos, object_mask);
    state.queries = first.queries;
    state.object_pixels = first.pixels;
    if (trace != nullptr) {
      trace->queries_after_first_step.push_back(state.queries);
      trace->shadow_pixels_after_first_step.push_back(state.shadow_pixels);
    }
    auto second = layer->shadow_path->forward(state.queries, state.shadow_pixels, query_pos,
                                              pixel_pos, shadow_mask);
    state.queries = second.queries;
    state.shadow_pixels = second.pixels;

    state.predictions.push_back(
        heads->forward(state.queries, state.object_pixels, state.shadow_pixels, i + 1));
  }
  return state;
}

std::pair<int, int> offset_cell_for_center(const Point2& center, int height, int width) {
  const int col = std::clamp(static_cast<int>(std::floor(center.x * width)), 0, width - 1);
  const int row = std::clamp(static_cast<int>(std::floor(center.y * height)), 0, height - 1);
  return {row, col};
}

torch::Tensor predicted_shadow_center(const ProbMask& object_mask, const torch::Tensor& offset_map) {
  FIS_CHECK(offset_map.dim() == 3 && offset_map.size(0) == 2, "offset map must be [2,h,w]");
  FIS_CHECK(object_mask.height == offset_map.size(1) && object_mask.width == offset_map.size(2),
            "object mask must live on the offset-map grid");
  const Point2 c = mask_centroid(object_mask);
  const auto [row, col] = offset_cell_for_center(c, object_mask.height, object_mask.width);
  auto v = offset_map.index({torch::indexing::Slice(), row, col});  // [2]
  auto center = torch::tensor({c.x, c.y}, offset_map.options().requires_grad(false));
  return center + v;
}

}  // namespace fis
