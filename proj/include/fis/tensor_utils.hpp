#pragma once

#include <torch/torch.h>

#include "fis/dataset.hpp"
#include "fis/geometry.hpp"

namespace fis {

torch::Tensor image_to_tensor(const Image& image, torch::Dtype dtype = torch::kFloat32);  // [3,H,W]
Image tensor_to_image(const torch::Tensor& chw);

torch::Tensor mask_to_tensor(const BinaryMask& mask, torch::Dtype dtype = torch::kFloat32);  // [H,W]
ProbMask tensor_to_prob_mask(const torch::Tensor& hw);
BinaryMask tensor_to_binary_mask(const torch::Tensor& hw, double threshold = 0.5);

// Zero-pads bottom/right so both spatial dims become multiples of `multiple`.
torch::Tensor pad_to_multiple(const torch::Tensor& chw, int multiple);

// Row-major [h*w, 2] grid of normalized pixel-center coordinates (x, y).
torch::Tensor grid_cell_centers(int height, int width, const torch::TensorOptions& options);

// Sinusoidal embedding of [N,2] normalized positions into `channels` dims
// (DETR family: half the channels for x, half for y). channels % 4 == 0.
torch::Tensor sinusoidal_embedding(const torch::Tensor& positions, int channels);

// Row-major flatten of [C,h,w] into [h*w, C] and its inverse.
torch::Tensor flatten_features(const torch::Tensor& chw);
torch::Tensor unflatten_features(const torch::Tensor& lc, int height, int width);

// Bilinear sample of a [h,w] grid at [K,2] normalized (x,y) points under the
// pixel-center convention ((col+0.5)/w, (row+0.5)/h); values outside blend
// with zeros. Differentiable w.r.t. the grid.
torch::Tensor sample_grid_bilinear(const torch::Tensor& grid_hw, const torch::Tensor& coords);
// Batched variant: [n,h,w] sampled at shared [K,2] points -> [n,K].
torch::Tensor sample_grids_bilinear(const torch::Tensor& grids_nhw, const torch::Tensor& coords);

torch::Tensor resize_bilinear_chw(const torch::Tensor& chw, int height, int width);

}  // namespace fis
