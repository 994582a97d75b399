#include "fis/model.hpp"

#include "fis/common.hpp"
#include "fis/tensor_utils.hpp"

namespace fis {

void ModelConfig::validate() const {
  extractor.validate();
  FIS_CHECK(decoder_layers >= 1, "decoder_layers must be at least 1");
  FIS_CHECK(n_activation >= 1, "n_activation must be at least 1");
  FIS_CHECK(n_auxiliary >= 0, "n_auxiliary must be nonnegative");
}

FisModelImpl::FisModelImpl(const ModelConfig& cfg) : config(cfg) {
  config.validate();
  const int c = config.extractor.channel_count;
  extractor = register_module("extractor", FeatureExtractor(config.extractor));
  proposer = register_module("proposer", QueryProposer(c, config.n_activation, config.n_auxiliary));
  decoder = register_module(
      "decoder", AssociationDecoder(c, config.attention_heads(), config.ffn_dim(),
                                    config.decoder_layers));
  offset_head = register_module(
      "offset_head", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 2, 3).padding(1)));
}

torch::Dtype FisModelImpl::parameter_dtype() const {
  return parameters().front().scalar_type();
}

ModelOutputs FisModelImpl::forward(const torch::Tensor& image) {
  ModelOutputs out;
  auto input = image.to(parameter_dtype());
  out.features = extractor->forward(input);

  out.activation_logits = proposer->activation_logits(out.features.e4);
  out.queries = proposer->propose(out.features.e4, torch::sigmoid(out.activation_logits.detach()));

  out.grid_h = static_cast<int>(out.features.e3.size(1));
  out.grid_w = static_cast<int>(out.features.e3.size(2));
  const int c = config.extractor.channel_count;
  out.query_pos_embed = sinusoidal_embedding(out.queries.positions, c);
  out.pixel_pos_embed = sinusoidal_embedding(
      grid_cell_centers(out.grid_h, out.grid_w, out.features.e3.options()), c);

  // Object and shadow pixel features start as two copies of flattened E3 and
  // diverge on their separate decoder paths.
  auto pixels = flatten_features(out.features.e3);
  out.state = decoder->forward(out.queries.embeddings, pixels, pixels.clone(),
                               out.query_pos_embed, out.pixel_pos_embed);

  out.offset_map = offset_head->forward(out.features.e3.unsqueeze(0)).squeeze(0);
  return out;
}

DecoderState FisModelImpl::forward_decoder(const ModelOutputs& base,
                                           const GtAttnOverride* gt_override, DecoderTrace* trace) {
  auto pixels = flatten_features(base.features.e3);
  return decoder->forward(base.queries.embeddings, pixels, pixels.clone(), base.query_pos_embed,
                          base.pixel_pos_embed, gt_override, trace);
}

}  // namespace fis
