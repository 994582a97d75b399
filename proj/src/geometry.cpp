#include "fis/geometry.hpp"

#include <algorithm>
#include <numeric>

#include "fis/common.hpp"

namespace fis {

BinaryMask BinaryMask::zeros(int height, int width) {
  FIS_CHECK(height > 0 && width > 0, "mask dimensions must be positive, got ", height, "x", width);
  BinaryMask m;
  m.height = height;
  m.width = width;
  m.values.assign(static_cast<std::size_t>(height) * width, 0);
  return m;
}

std::int64_t BinaryMask::area() const {
  return std::accumulate(values.begin(), values.end(), std::int64_t{0});
}

ProbMask ProbMask::zeros(int height, int width) {
  FIS_CHECK(height > 0 && width > 0, "mask dimensions must be positive, got ", height, "x", width);
  ProbMask m;
  m.height = height;
  m.width = width;
  m.values.assign(static_cast<std::size_t>(height) * width, 0.0f);
  return m;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  FIS_CHECK(a.height == b.height && a.width == b.width, "mask_iou dimension mismatch: ", a.height,
            "x", a.width, " vs ", b.height, "x", b.width);
  std::int64_t inter = 0;
  std::int64_t uni = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool va = a.values[i] != 0;
    const bool vb = b.values[i] != 0;
    inter += (va && vb) ? 1 : 0;
    uni += (va || vb) ? 1 : 0;
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double box_iou(const AABB& a, const AABB& b) {
  if (a.is_empty() || b.is_empty()) return 0.0;
  const int ix_min = std::max(a.x_min, b.x_min);
  const int iy_min = std::max(a.y_min, b.y_min);
  const int ix_max = std::min(a.x_max, b.x_max);
  const int iy_max = std::min(a.y_max, b.y_max);
  if (ix_max < ix_min || iy_max < iy_min) return 0.0;
  const std::int64_t inter = static_cast<std::int64_t>(ix_max - ix_min + 1) * (iy_max - iy_min + 1);
  const std::int64_t uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

AABB mask_to_aabb(const BinaryMask& mask) {
  AABB box = AABB::empty();
  bool any = false;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (mask.at(r, c) == 0) continue;
      if (!any) {
        box = AABB{c, r, c, r};
        any = true;
      } else {
        box.x_min = std::min(box.x_min, c);
        box.y_min = std::min(box.y_min, r);
        box.x_max = std::max(box.x_max, c);
        box.y_max = std::max(box.y_max, r);
      }
    }
  }
  return box;
}

AABB mask_to_aabb(const ProbMask& mask, double threshold) {
  AABB box = AABB::empty();
  bool any = false;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (mask.at(r, c) <= threshold) continue;
      if (!any) {
        box = AABB{c, r, c, r};
        any = true;
      } else {
        box.x_min = std::min(box.x_min, c);
        box.y_min = std::min(box.y_min, r);
        box.x_max = std::max(box.x_max, c);
        box.y_max = std::max(box.y_max, r);
      }
    }
  }
  return box;
}

namespace {

Point2 pixel_center(int row, int col, int height, int width) {
  return Point2{(col + 0.5) / width, (row + 0.5) / height};
}

}  // namespace

Point2 mask_centroid(const BinaryMask& mask) {
  double sum_x = 0.0;
  double sum_y = 0.0;
  std::int64_t count = 0;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (mask.at(r, c) == 0) continue;
      const Point2 p = pixel_center(r, c, mask.height, mask.width);
      sum_x += p.x;
      sum_y += p.y;
      ++count;
    }
  }
  if (count == 0) return pixel_center(0, 0, mask.height, mask.width);
  return Point2{sum_x / count, sum_y / count};
}

Point2 mask_centroid(const ProbMask& mask) {
  double sum_x = 0.0;
  double sum_y = 0.0;
  double sum_w = 0.0;
  float best = -1.0f;
  int best_row = 0;
  int best_col = 0;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      const float p = mask.at(r, c);
      if (p > best) {
        best = p;
        best_row = r;
        best_col = c;
      }
      if (p <= 0.5f) continue;
      const Point2 center = pixel_center(r, c, mask.height, mask.width);
      sum_x += center.x * p;
      sum_y += center.y * p;
      sum_w += p;
    }
  }
  if (sum_w <= 0.0) return pixel_center(best_row, best_col, mask.height, mask.width);
  return Point2{sum_x / sum_w, sum_y / sum_w};
}

namespace {

BinaryMask combine(const BinaryMask& a, const BinaryMask& b, bool(op)(bool, bool)) {
  FIS_CHECK(a.height == b.height && a.width == b.width, "mask dimension mismatch: ", a.height, "x",
            a.width, " vs ", b.height, "x", b.width);
  BinaryMask out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = op(a.values[i] != 0, b.values[i] != 0) ? 1 : 0;
  }
  return out;
}

}  // namespace

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](bool x, bool y) { return x || y; });
}

BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](bool x, bool y) { return x && y; });
}

BinaryMask mask_subtract(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](bool x, bool y) { return x && !y; });
}

bool masks_intersect(const BinaryMask& a, const BinaryMask& b) {
  FIS_CHECK(a.height == b.height && a.width == b.width, "mask dimension mismatch");
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.values[i] != 0 && b.values[i] != 0) return true;
  }
  return false;
}

BinaryMask threshold_mask(const ProbMask& probs, double threshold) {
  BinaryMask out = BinaryMask::zeros(probs.height, probs.width);
  for (std::size_t i = 0; i < probs.values.size(); ++i) {
    out.values[i] = probs.values[i] > threshold ? 1 : 0;
  }
  return out;
}

std::vector<std::uint32_t> rle_encode(const BinaryMask& mask) {
  std::vector<std::uint32_t> counts;
  std::uint8_t current = 0;  // runs alternate starting with the 0-run
  std::uint32_t run = 0;
  for (int c = 0; c < mask.width; ++c) {
    for (int r = 0; r < mask.height; ++r) {
      const std::uint8_t v = mask.at(r, c) != 0 ? 1 : 0;
      if (v == current) {
        ++run;
      } else {
        counts.push_back(run);
        current = v;
        run = 1;
      }
    }
  }
  counts.push_back(run);
  return counts;
}

BinaryMask rle_decode(int height, int width, const std::vector<std::uint32_t>& counts) {
  BinaryMask mask = BinaryMask::zeros(height, width);
  const std::uint64_t total = static_cast<std::uint64_t>(height) * width;
  std::uint64_t index = 0;
  std::uint8_t value = 0;
  for (std::uint32_t count : counts) {
    for (std::uint32_t i = 0; i < count; ++i) {
      FIS_CHECK(index < total, "RLE counts overflow mask of size ", height, "x", width);
      const int col = static_cast<int>(index / height);
      const int row = static_cast<int>(index % height);
      mask.set(row, col, value);
      ++index;
    }
    value = value ? 0 : 1;
  }
  FIS_CHECK(index == total, "RLE counts cover ", index, " pixels, expected ", total);
  return mask;
}

}  // namespace fis
