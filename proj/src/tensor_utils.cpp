#include "fis/tensor_utils.hpp"

#include "fis/common.hpp"

namespace fis {

namespace F = torch::nn::functional;

torch::Tensor image_to_tensor(const Image& image, torch::Dtype dtype) {
  FIS_CHECK(image.height > 0 && image.width > 0, "empty image");
  auto hwc = torch::from_blob(const_cast<float*>(image.values.data()),
                              {image.height, image.width, 3}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).to(dtype).contiguous();
}

Image tensor_to_image(const torch::Tensor& chw) {
  FIS_CHECK(chw.dim() == 3 && chw.size(0) == 3, "expected [3,H,W] tensor");
  auto hwc = chw.detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
  Image image = Image::zeros(static_cast<int>(chw.size(1)), static_cast<int>(chw.size(2)));
  std::memcpy(image.values.data(), hwc.data_ptr<float>(), image.values.size() * sizeof(float));
  return image;
}

torch::Tensor mask_to_tensor(const BinaryMask& mask, torch::Dtype dtype) {
  auto u8 = torch::from_blob(const_cast<std::uint8_t*>(mask.values.data()),
                             {mask.height, mask.width}, torch::kUInt8);
  return u8.to(dtype).contiguous();
}

ProbMask tensor_to_prob_mask(const torch::Tensor& hw) {
  FIS_CHECK(hw.dim() == 2, "expected [H,W] tensor");
  auto f = hw.detach().to(torch::kFloat32).contiguous();
  ProbMask mask = ProbMask::zeros(static_cast<int>(hw.size(0)), static_cast<int>(hw.size(1)));
  std::memcpy(mask.values.data(), f.data_ptr<float>(), mask.values.size() * sizeof(float));
  return mask;
}

BinaryMask tensor_to_binary_mask(const torch::Tensor& hw, double threshold) {
  return threshold_mask(tensor_to_prob_mask(hw), threshold);
}

torch::Tensor pad_to_multiple(const torch::Tensor& chw, int multiple) {
  FIS_CHECK(chw.dim() == 3, "expected [C,H,W] tensor");
  const auto h = chw.size(1);
  const auto w = chw.size(2);
  const auto pad_h = (multiple - h % multiple) % multiple;
  const auto pad_w = (multiple - w % multiple) % multiple;
  if (pad_h == 0 && pad_w == 0) return chw;
  return F::pad(chw.unsqueeze(0), F::PadFuncOptions({0, pad_w, 0, pad_h})).squeeze(0);
}

torch::Tensor grid_cell_centers(int height, int width, const torch::TensorOptions& options) {
  auto cols = torch::arange(width, options).add(0.5).div(width);
  auto rows = torch::arange(height, options).add(0.5).div(height);
  auto grid_y = rows.view({height, 1}).expand({height, width});
  auto grid_x = cols.view({1, width}).expand({height, width});
  return torch::stack({grid_x.reshape(-1), grid_y.reshape(-1)}, 1);
}

torch::Tensor sinusoidal_embedding(const torch::Tensor& positions, int channels) {
  FIS_CHECK(positions.dim() == 2 && positions.size(1) == 2, "positions must be [N,2]");
  FIS_CHECK(channels % 4 == 0, "embedding channels must be divisible by 4, got ", channels);
  const int half = channels / 2;
  auto options = positions.options();
  auto dim_t = torch::arange(half, options);
  dim_t = torch::pow(10000.0, 2.0 * torch::floor(dim_t / 2.0) / half);
  const double two_pi = 6.283185307179586;
  auto scaled_x = positions.select(1, 0).unsqueeze(1) * two_pi / dim_t;  // [N, half]
  auto scaled_y = positions.select(1, 1).unsqueeze(1) * two_pi / dim_t;
  const auto encode = [&](const torch::Tensor& scaled) {
    auto sin = scaled.index({torch::indexing::Slice(), torch::indexing::Slice(0, torch::indexing::None, 2)}).sin();
    auto cos = scaled.index({torch::indexing::Slice(), torch::indexing::Slice(1, torch::indexing::None, 2)}).cos();
    return torch::stack({sin, cos}, 2).flatten(1);  // interleave sin/cos
  };
  return torch::cat({encode(scaled_x), encode(scaled_y)}, 1);
}

torch::Tensor flatten_features(const torch::Tensor& chw) {
  FIS_CHECK(chw.dim() == 3, "expected [C,h,w] tensor");
  return chw.flatten(1).transpose(0, 1).contiguous();  // [h*w, C], row-major cells
}

torch::Tensor unflatten_features(const torch::Tensor& lc, int height, int width) {
  FIS_CHECK(lc.dim() == 2, "expected [L,C] tensor");
  FIS_CHECK(lc.size(0) == static_cast<std::int64_t>(height) * width, "L does not equal h*w");
  return lc.transpose(0, 1).reshape({lc.size(1), height, width}).contiguous();
}

torch::Tensor sample_grid_bilinear(const torch::Tensor& grid_hw, const torch::Tensor& coords) {
  return sample_grids_bilinear(grid_hw.unsqueeze(0), coords).squeeze(0);
}

torch::Tensor sample_grids_bilinear(const torch::Tensor& grids_nhw, const torch::Tensor& coords) {
  FIS_CHECK(grids_nhw.dim() == 3, "expected [n,h,w] grids");
  FIS_CHECK(coords.dim() == 2 && coords.size(1) == 2, "expected [K,2] coords");
  const auto n = grids_nhw.size(0);
  const auto k = coords.size(0);
  auto input = grids_nhw.unsqueeze(1);  // [n,1,h,w]
  // grid_sample with align_corners=false matches the pixel-center convention:
  // normalized coordinate c maps to sample position c*2-1.
  auto grid = (coords.to(grids_nhw.dtype()) * 2.0 - 1.0).view({1, 1, k, 2}).expand({n, 1, k, 2});
  auto sampled = F::grid_sample(input, grid, F::GridSampleFuncOptions()
                                                 .mode(torch::kBilinear)
                                                 .padding_mode(torch::kZeros)
                                                 .align_corners(false));
  return sampled.view({n, k});
}

torch::Tensor resize_bilinear_chw(const torch::Tensor& chw, int height, int width) {
  FIS_CHECK(chw.dim() == 3, "expected [C,H,W] tensor");
  if (chw.size(1) == height && chw.size(2) == width) return chw;
  return F::interpolate(chw.unsqueeze(0), F::InterpolateFuncOptions()
                                              .size(std::vector<std::int64_t>{height, width})
                                              .mode(torch::kBilinear)
                                              .align_corners(false))
      .squeeze(0);
}

}  // namespace fis
