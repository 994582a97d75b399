#pragma once

#include <cstdint>
#include <vector>

#include "fis/dataset.hpp"

namespace fis {

struct SceneConfig {
  int height = 128;
  int width = 128;
  int min_pairs = 1;
  int max_pairs = 4;
  // Light direction is sampled per scene from this angle range (radians).
  double light_angle_min = 0.0;
  double light_angle_max = 6.283185307179586;
  // Object size in pixels (largest extent from the shape center).
  double min_radius = 12.0;
  double max_radius = 26.0;
  // Shadow displacement along the light direction, as a multiple of the
  // object radius, and the stretch applied along that direction.
  double min_shadow_offset = 0.7;
  double max_shadow_offset = 1.4;
  double min_shadow_stretch = 1.05;
  double max_shadow_stretch = 1.5;
  // Masks below these pixel areas are rejected and regenerated.
  int min_object_area = 40;
  int min_shadow_area = 30;
  int max_attempts = 400;
};

// Deterministic procedural scene: filled random ellipses/convex polygons whose
// shadows are the object silhouette stretched and translated along the scene
// light direction. Objects occlude shadows; occluded pixels are removed from
// the shadow masks, and instances whose shadow would become empty (or
// degenerate) are regenerated. Pure function of (seed, config).
ImageSample generate_synthetic_scene(std::uint64_t seed, const SceneConfig& config);

// The per-scene light direction used by generate_synthetic_scene for this
// seed (unit vector). Exposed so tests can check shadow geometry against the
// construction.
Point2 scene_light_direction(std::uint64_t seed, const SceneConfig& config);

std::vector<ImageSample> generate_dataset(std::uint64_t seed, int count, const SceneConfig& config);

}  // namespace fis
