#pragma once

#include <cstdint>
#include <vector>

namespace fis {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Dense boolean mask, row-major.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;  // 0 or 1

  static BinaryMask zeros(int height, int width);

  std::uint8_t at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
  void set(int row, int col, std::uint8_t v) { values[static_cast<std::size_t>(row) * width + col] = v; }
  std::int64_t area() const;
  bool empty_mask() const { return area() == 0; }

  bool operator==(const BinaryMask& other) const = default;
};

// Dense probability mask, row-major, values in [0,1].
struct ProbMask {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  static ProbMask zeros(int height, int width);
  float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

// Axis-aligned bounding box in pixel indices, inclusive bounds. The empty box
// is the designated value with x_max < x_min; it contains nothing.
struct AABB {
  int x_min = 0;
  int y_min = 0;
  int x_max = -1;
  int y_max = -1;

  static AABB empty() { return AABB{0, 0, -1, -1}; }
  bool is_empty() const { return x_max < x_min || y_max < y_min; }
  bool contains(int col, int row) const {
    return !is_empty() && col >= x_min && col <= x_max && row >= y_min && row <= y_max;
  }
  std::int64_t area() const {
    if (is_empty()) return 0;
    return static_cast<std::int64_t>(x_max - x_min + 1) * (y_max - y_min + 1);
  }

  bool operator==(const AABB& other) const = default;
};

// |a ∩ b| / |a ∪ b|; 0 when both masks are empty. Throws on dimension mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

// IoU of two boxes under the inclusive-pixel convention; empty boxes contain
// nothing and give 0.
double box_iou(const AABB& a, const AABB& b);

// Tightest box containing all 1-pixels; AABB::empty() for an empty mask.
AABB mask_to_aabb(const BinaryMask& mask);
// AABB of pixels with probability > threshold.
AABB mask_to_aabb(const ProbMask& mask, double threshold = 0.5);

// Centroid in normalized [0,1] coordinates using pixel centers
// ((col+0.5)/W, (row+0.5)/H). BinaryMask: unweighted mean of 1-pixels.
// ProbMask: probability-weighted mean over pixels with p > 0.5. If nothing
// survives, the argmax pixel's center is returned (row-major first argmax).
Point2 mask_centroid(const BinaryMask& mask);
Point2 mask_centroid(const ProbMask& mask);

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b);
// a with every 1-pixel of b cleared.
BinaryMask mask_subtract(const BinaryMask& a, const BinaryMask& b);
bool masks_intersect(const BinaryMask& a, const BinaryMask& b);

BinaryMask threshold_mask(const ProbMask& probs, double threshold = 0.5);

// Column-major run-length encoding of alternating 0/1 runs, starting with the
// 0-run (a mask whose first column-major pixel is 1 starts with a 0-length
// 0-run).
std::vector<std::uint32_t> rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(int height, int width, const std::vector<std::uint32_t>& counts);

}  // namespace fis
