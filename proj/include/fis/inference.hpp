#pragma once

#include <optional>
#include <vector>

#include "fis/metrics.hpp"
#include "fis/model.hpp"

namespace fis {

// Shorter-edge / max-length resize rule (e.g. 800/1333 or 640/853).
struct ResizeRule {
  int shorter_edge = 800;
  int max_length = 1333;
};

Image resize_image(const Image& image, const ResizeRule& rule);

// Full pipeline for one image: optional resize, pad to /32, forward,
// postprocess, masks restored to the original resolution.
std::vector<Detection> run_inference(FisModelImpl& model, const Image& image,
                                     const EvalConfig& config,
                                     const std::optional<ResizeRule>& resize = std::nullopt);

std::vector<std::vector<Detection>> run_inference_dataset(
    FisModelImpl& model, const std::vector<ImageSample>& samples, const EvalConfig& config,
    const std::optional<ResizeRule>& resize = std::nullopt);

// GT pairs reinterpreted as perfect detections (score 1.0); the oracle input
// for metric sanity checks.
std::vector<Detection> detections_from_gt(const std::vector<ShadowObjectInstance>& instances);

// Object masks, shadow masks, and a line from each object centroid to its
// predicted shadow center, one hue per pair, composited over the image.
Image render_overlay(const Image& image, const std::vector<Detection>& detections);

}  // namespace fis
