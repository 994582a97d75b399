#include "fis/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "fis/common.hpp"
#include "fis/rng.hpp"

namespace fis {

namespace {

struct Mat2 {
  // row-major 2x2
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

  Point2 apply(Point2 p) const { return Point2{a * p.x + b * p.y, c * p.x + d * p.y}; }
  Mat2 mul(const Mat2& o) const {
    return Mat2{a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }
  Mat2 inverse() const {
    const double det = a * d - b * c;
    FIS_CHECK(std::abs(det) > 1e-12, "singular shape matrix");
    return Mat2{d / det, -b / det, -c / det, a / det};
  }
};

// A convex region: either the image of the unit disk under p = center + B·u,
// or a convex polygon. Both families are closed under affine maps, so the
// shadow of a shape is again a shape and can be rasterized exactly.
struct Shape {
  bool is_ellipse = true;
  Point2 center;
  Mat2 disk_map;                  // ellipse only
  std::vector<Point2> vertices;   // polygon only, counter-clockwise

  bool contains(double x, double y) const {
    if (is_ellipse) {
      const Mat2 inv = disk_map.inverse();
      const Point2 u = inv.apply(Point2{x - center.x, y - center.y});
      return u.x * u.x + u.y * u.y <= 1.0;
    }
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2& p0 = vertices[i];
      const Point2& p1 = vertices[(i + 1) % n];
      const double cross = (p1.x - p0.x) * (y - p0.y) - (p1.y - p0.y) * (x - p0.x);
      if (cross < 0.0) return false;
    }
    return true;
  }

  Shape affine(const Mat2& m, Point2 t) const {
    Shape out = *this;
    if (is_ellipse) {
      out.center = Point2{m.apply(center).x + t.x, m.apply(center).y + t.y};
      out.disk_map = m.mul(disk_map);
    } else {
      for (std::size_t i = 0; i < out.vertices.size(); ++i) {
        const Point2 v = m.apply(vertices[i]);
        out.vertices[i] = Point2{v.x + t.x, v.y + t.y};
      }
      // An affine map may flip orientation; restore counter-clockwise order.
      double twice_area = 0.0;
      const std::size_t n = out.vertices.size();
      for (std::size_t i = 0; i < n; ++i) {
        const Point2& p0 = out.vertices[i];
        const Point2& p1 = out.vertices[(i + 1) % n];
        twice_area += p0.x * p1.y - p1.x * p0.y;
      }
      if (twice_area < 0.0) std::reverse(out.vertices.begin(), out.vertices.end());
    }
    return out;
  }

  BinaryMask rasterize(int height, int width) const {
    BinaryMask mask = BinaryMask::zeros(height, width);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        if (contains(c + 0.5, r + 0.5)) mask.set(r, c, 1);
      }
    }
    return mask;
  }
};

std::vector<Point2> convex_hull(std::vector<Point2> points) {
  std::sort(points.begin(), points.end(), [](const Point2& a, const Point2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  const auto cross = [](const Point2& o, const Point2& a, const Point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<Point2> hull(2 * points.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
    hull[k++] = points[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = points.size() - 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);
  std::reverse(hull.begin(), hull.end());  // counter-clockwise
  return hull;
}

Shape sample_object_shape(Rng& rng, const SceneConfig& cfg) {
  Shape shape;
  const double radius = rng.uniform(cfg.min_radius, cfg.max_radius);
  const double margin = radius + 2.0;
  const double cx = rng.uniform(margin, std::max(margin + 1.0, cfg.width - margin));
  const double cy = rng.uniform(margin, std::max(margin + 1.0, cfg.height - margin));
  shape.center = Point2{cx, cy};
  if (rng.bernoulli(0.5)) {
    shape.is_ellipse = true;
    const double minor = radius * rng.uniform(0.45, 0.95);
    const double phi = rng.uniform(0.0, 3.141592653589793);
    const Mat2 rot{std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi)};
    const Mat2 axes{radius, 0.0, 0.0, minor};
    shape.disk_map = rot.mul(axes);
  } else {
    shape.is_ellipse = false;
    const int n = static_cast<int>(rng.uniform_int(6, 10));
    std::vector<Point2> points;
    points.reserve(n);
    for (int i = 0; i < n; ++i) {
      const double ang = rng.uniform(0.0, 6.283185307179586);
      const double rad = radius * rng.uniform(0.45, 1.0);
      points.push_back(Point2{cx + rad * std::cos(ang), cy + rad * std::sin(ang)});
    }
    shape.vertices = convex_hull(points);
    if (shape.vertices.size() < 3) shape.is_ellipse = true, shape.disk_map = Mat2{radius, 0, 0, radius};
  }
  return shape;
}

double shape_radius(const Shape& shape) {
  if (shape.is_ellipse) {
    // Largest extent of the disk image: spectral norm of disk_map, bounded by
    // the Frobenius norm, which is good enough to place shadows.
    return std::sqrt(shape.disk_map.a * shape.disk_map.a + shape.disk_map.b * shape.disk_map.b +
                     shape.disk_map.c * shape.disk_map.c + shape.disk_map.d * shape.disk_map.d) /
           std::sqrt(2.0);
  }
  double cx = 0.0, cy = 0.0;
  for (const Point2& v : shape.vertices) {
    cx += v.x;
    cy += v.y;
  }
  cx /= shape.vertices.size();
  cy /= shape.vertices.size();
  double best = 0.0;
  for (const Point2& v : shape.vertices) {
    best = std::max(best, std::hypot(v.x - cx, v.y - cy));
  }
  return best;
}

struct Candidate {
  Shape object_shape;
  Shape shadow_shape;
  BinaryMask object_raster;
  BinaryMask shadow_raster;  // before occlusion
};

struct Rgb {
  float r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
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

void validate_config(const SceneConfig& cfg) {
  FIS_CHECK(cfg.height > 0 && cfg.width > 0, "scene size must be positive, got ", cfg.height, "x",
            cfg.width);
  FIS_CHECK(cfg.min_pairs >= 1 && cfg.max_pairs >= cfg.min_pairs, "empty pair range [",
            cfg.min_pairs, ", ", cfg.max_pairs, "]");
  FIS_CHECK(cfg.max_radius >= cfg.min_radius && cfg.min_radius > 0, "invalid radius range");
}

Point2 light_direction(Rng& rng, const SceneConfig& cfg) {
  const double angle = rng.uniform(cfg.light_angle_min, cfg.light_angle_max);
  return Point2{std::cos(angle), std::sin(angle)};
}

}  // namespace

Point2 scene_light_direction(std::uint64_t seed, const SceneConfig& config) {
  validate_config(config);
  Rng rng(Rng::derive({seed, 0x5ce11eull}));
  return light_direction(rng, config);
}

ImageSample generate_synthetic_scene(std::uint64_t seed, const SceneConfig& cfg) {
  validate_config(cfg);
  Rng rng(Rng::derive({seed, 0x5ce11eull}));
  const Point2 light = light_direction(rng, cfg);

  const int n_pairs = static_cast<int>(rng.uniform_int(cfg.min_pairs, cfg.max_pairs));
  std::vector<Candidate> placed;

  const auto occluded_shadows = [&](const std::vector<Candidate>& all) {
    BinaryMask objects = BinaryMask::zeros(cfg.height, cfg.width);
    for (const Candidate& cand : all) objects = mask_union(objects, cand.object_raster);
    std::vector<BinaryMask> shadows;
    shadows.reserve(all.size());
    for (const Candidate& cand : all) shadows.push_back(mask_subtract(cand.shadow_raster, objects));
    return shadows;
  };

  const auto shadow_ok = [&](const BinaryMask& shadow, const BinaryMask& object) {
    if (shadow.area() < cfg.min_shadow_area) return false;
    const Point2 sc = mask_centroid(shadow);
    const Point2 oc = mask_centroid(object);
    const double dot = (sc.x - oc.x) * light.x + (sc.y - oc.y) * light.y;
    return dot > 1e-3;
  };

  for (int i = 0; i < n_pairs; ++i) {
    bool accepted = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !accepted; ++attempt) {
      Candidate cand;
      cand.object_shape = sample_object_shape(rng, cfg);
      cand.object_raster = cand.object_shape.rasterize(cfg.height, cfg.width);
      if (cand.object_raster.area() < cfg.min_object_area) continue;
      bool overlaps = false;
      for (const Candidate& other : placed) {
        if (masks_intersect(cand.object_raster, other.object_raster)) {
          overlaps = true;
          break;
        }
      }
      if (overlaps) continue;

      const double radius = shape_radius(cand.object_shape);
      const double offset = radius * rng.uniform(cfg.min_shadow_offset, cfg.max_shadow_offset);
      const double stretch = rng.uniform(cfg.min_shadow_stretch, cfg.max_shadow_stretch);
      // Stretch along the light direction, then move the center down-light.
      const Mat2 m{1.0 + (stretch - 1.0) * light.x * light.x, (stretch - 1.0) * light.x * light.y,
                   (stretch - 1.0) * light.x * light.y, 1.0 + (stretch - 1.0) * light.y * light.y};
      const Point2 mc = m.apply(cand.object_shape.center);
      const Point2 t{cand.object_shape.center.x + light.x * offset - mc.x,
                     cand.object_shape.center.y + light.y * offset - mc.y};
      cand.shadow_shape = cand.object_shape.affine(m, t);
      cand.shadow_raster = cand.shadow_shape.rasterize(cfg.height, cfg.width);
      if (cand.shadow_raster.area() < cfg.min_shadow_area) continue;

      std::vector<Candidate> trial = placed;
      trial.push_back(cand);
      const std::vector<BinaryMask> shadows = occluded_shadows(trial);
      bool all_ok = true;
      for (std::size_t k = 0; k < trial.size(); ++k) {
        if (!shadow_ok(shadows[k], trial[k].object_raster)) {
          all_ok = false;
          break;
        }
      }
      if (!all_ok) continue;
      placed.push_back(std::move(cand));
      accepted = true;
    }
    FIS_CHECK(accepted, "could not place shadow-object pair ", i + 1, " of ", n_pairs,
              " after ", cfg.max_attempts, " attempts (seed ", seed, ")");
  }

  const std::vector<BinaryMask> shadows = occluded_shadows(placed);

  // Render: pastel background, darkened shadow regions, solid objects on top.
  ImageSample sample;
  sample.source_id = str_cat("synthetic-", seed);
  sample.image = Image::zeros(cfg.height, cfg.width);
  const float bg[3] = {static_cast<float>(rng.uniform(0.70, 0.92)),
                       static_cast<float>(rng.uniform(0.70, 0.92)),
                       static_cast<float>(rng.uniform(0.70, 0.92))};
  std::vector<Rgb> colors;
  for (std::size_t k = 0; k < placed.size(); ++k) {
    colors.push_back(hsv_to_rgb(rng.uniform(), rng.uniform(0.45, 0.85), rng.uniform(0.40, 0.90)));
  }

  BinaryMask shadow_any = BinaryMask::zeros(cfg.height, cfg.width);
  for (const BinaryMask& s : shadows) shadow_any = mask_union(shadow_any, s);

  for (int r = 0; r < cfg.height; ++r) {
    for (int c = 0; c < cfg.width; ++c) {
      float px[3] = {bg[0], bg[1], bg[2]};
      if (shadow_any.at(r, c) != 0) {
        px[0] *= 0.45f;
        px[1] *= 0.45f;
        px[2] *= 0.45f;
      }
      for (std::size_t k = 0; k < placed.size(); ++k) {
        if (placed[k].object_raster.at(r, c) != 0) {
          px[0] = colors[k].r;
          px[1] = colors[k].g;
          px[2] = colors[k].b;
          break;  // objects never overlap
        }
      }
      for (int ch = 0; ch < 3; ++ch) sample.image.set(r, c, ch, px[ch]);
    }
  }

  for (std::size_t k = 0; k < placed.size(); ++k) {
    ShadowObjectInstance instance;
    instance.object_mask = placed[k].object_raster;
    instance.shadow_mask = shadows[k];
    instance.pair_id = static_cast<int>(k) + 1;
    sample.instances.push_back(std::move(instance));
  }
  return sample;
}

std::vector<ImageSample> generate_dataset(std::uint64_t seed, int count, const SceneConfig& config) {
  FIS_CHECK(count >= 0, "dataset count must be nonnegative");
  std::vector<ImageSample> samples;
  samples.reserve(count);
  for (int i = 0; i < count; ++i) {
    samples.push_back(generate_synthetic_scene(Rng::derive({seed, static_cast<std::uint64_t>(i)}),
                                               config));
  }
  return samples;
}

}  // namespace fis
