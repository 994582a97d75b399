#include "fis/inference.hpp"

#include <algorithm>
#include <cmath>

#include "fis/common.hpp"
#include "fis/tensor_utils.hpp"

namespace fis {

Image resize_image(const Image& image, const ResizeRule& rule) {
  FIS_CHECK(rule.shorter_edge >= 1 && rule.max_length >= rule.shorter_edge, "invalid resize rule");
  const double shorter = std::min(image.height, image.width);
  const double longer = std::max(image.height, image.width);
  double scale = rule.shorter_edge / shorter;
  if (longer * scale > rule.max_length) scale = rule.max_length / longer;
  const int new_h = std::max(1, static_cast<int>(std::round(image.height * scale)));
  const int new_w = std::max(1, static_cast<int>(std::round(image.width * scale)));
  if (new_h == image.height && new_w == image.width) return image;
  auto t = image_to_tensor(image, torch::kFloat32);
  return tensor_to_image(resize_bilinear_chw(t, new_h, new_w));
}

std::vector<Detection> run_inference(FisModelImpl& model, const Image& image,
                                     const EvalConfig& config,
                                     const std::optional<ResizeRule>& resize) {
  torch::NoGradGuard no_grad;
  model.eval();
  const Image working = resize.has_value() ? resize_image(image, *resize) : image;
  auto tensor = image_to_tensor(working, torch::kFloat32);
  auto padded = pad_to_multiple(tensor, 32);
  const int padded_h = static_cast<int>(padded.size(1));
  const int padded_w = static_cast<int>(padded.size(2));

  ModelOutputs outputs = model.forward(padded);
  std::vector<Detection> detections =
      postprocess(outputs.state.predictions.back(), outputs.offset_map, outputs.grid_h,
                  outputs.grid_w, padded_h, padded_w, working.height, working.width, config);

  if (working.height != image.height || working.width != image.width) {
    for (Detection& det : detections) {
      const auto to_full = [&](const ProbMask& mask) {
        auto t = torch::from_blob(const_cast<float*>(mask.values.data()),
                                  {1, mask.height, mask.width}, torch::kFloat32);
        return tensor_to_prob_mask(
            resize_bilinear_chw(t.clone(), image.height, image.width).squeeze(0));
      };
      det.object_mask = to_full(det.object_mask);
      det.shadow_mask = to_full(det.shadow_mask);
      // Normalized coordinates survive the resize unchanged.
    }
  }
  model.train();
  return detections;
}

std::vector<std::vector<Detection>> run_inference_dataset(
    FisModelImpl& model, const std::vector<ImageSample>& samples, const EvalConfig& config,
    const std::optional<ResizeRule>& resize) {
  std::vector<std::vector<Detection>> out;
  out.reserve(samples.size());
  for (const ImageSample& sample : samples) {
    out.push_back(run_inference(model, sample.image, config, resize));
  }
  return out;
}

std::vector<Detection> detections_from_gt(const std::vector<ShadowObjectInstance>& instances) {
  std::vector<Detection> out;
  for (const ShadowObjectInstance& instance : instances) {
    Detection det;
    det.score = 1.0;
    det.object_mask = ProbMask::zeros(instance.object_mask.height, instance.object_mask.width);
    det.shadow_mask = ProbMask::zeros(instance.shadow_mask.height, instance.shadow_mask.width);
    for (std::size_t i = 0; i < instance.object_mask.values.size(); ++i) {
      det.object_mask.values[i] = instance.object_mask.values[i] ? 1.0f : 0.0f;
      det.shadow_mask.values[i] = instance.shadow_mask.values[i] ? 1.0f : 0.0f;
    }
    det.predicted_shadow_center = mask_centroid(instance.shadow_mask);
    out.push_back(std::move(det));
  }
  return out;
}

namespace {

struct Rgb {
  float r, g, b;
};

Rgb pair_color(std::size_t index) {
  // Golden-ratio hue walk keeps neighboring pairs distinguishable.
  const double h = std::fmod(0.12 + index * 0.61803398875, 1.0);
  const double s = 0.85;
  const double v = 0.95;
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1)      { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else             { r = c; b = x; }
  const double m = v - c;
  return Rgb{static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

void blend_pixel(Image& image, int row, int col, const Rgb& color, float alpha) {
  for (int ch = 0; ch < 3; ++ch) {
    const float base = image.at(row, col, ch);
    const float tint = ch == 0 ? color.r : ch == 1 ? color.g : color.b;
    image.set(row, col, ch, base * (1.0f - alpha) + tint * alpha);
  }
}

void draw_line(Image& image, Point2 from, Point2 to, const Rgb& color) {
  int x0 = std::clamp(static_cast<int>(from.x * image.width), 0, image.width - 1);
  int y0 = std::clamp(static_cast<int>(from.y * image.height), 0, image.height - 1);
  const int x1 = std::clamp(static_cast<int>(to.x * image.width), 0, image.width - 1);
  const int y1 = std::clamp(static_cast<int>(to.y * image.height), 0, image.height - 1);
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    blend_pixel(image, y0, x0, color, 1.0f);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

Image render_overlay(const Image& image, const std::vector<Detection>& detections) {
  Image out = image;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Detection& det = detections[i];
    const Rgb color = pair_color(i);
    const Rgb shadow_color{color.r * 0.4f, color.g * 0.4f, color.b * 0.4f};
    const BinaryMask object = threshold_mask(det.object_mask);
    const BinaryMask shadow = threshold_mask(det.shadow_mask);
    FIS_CHECK(object.height == out.height && object.width == out.width,
              "detection mask size does not match the image");
    for (int r = 0; r < out.height; ++r) {
      for (int c = 0; c < out.width; ++c) {
        if (shadow.at(r, c) != 0) blend_pixel(out, r, c, shadow_color, 0.5f);
        if (object.at(r, c) != 0) blend_pixel(out, r, c, color, 0.5f);
      }
    }
    if (det.predicted_shadow_center.has_value() && !object.empty_mask()) {
      draw_line(out, mask_centroid(object), *det.predicted_shadow_center, color);
    }
  }
  return out;
}

}  // namespace fis
