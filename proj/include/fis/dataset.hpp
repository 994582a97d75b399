#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fis/geometry.hpp"

namespace fis {

// One ground-truth pair: an object mask and the shadow it casts, joined by an
// association identity unique within the image.
struct ShadowObjectInstance {
  BinaryMask object_mask;
  BinaryMask shadow_mask;
  int pair_id = 0;
};

// H×W×3 image with channel values in [0,1], row-major, interleaved RGB.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  static Image zeros(int height, int width);
  float at(int row, int col, int channel) const {
    return values[(static_cast<std::size_t>(row) * width + col) * 3 + channel];
  }
  void set(int row, int col, int channel, float v) {
    values[(static_cast<std::size_t>(row) * width + col) * 3 + channel] = v;
  }
};

struct ImageSample {
  Image image;
  std::vector<ShadowObjectInstance> instances;
  std::string source_id;
};

// Scored prediction for one query: paired object/shadow probability masks at
// image resolution plus an optional predicted shadow center in normalized
// coordinates.
struct Detection {
  double score = 0.0;
  ProbMask object_mask;
  ProbMask shadow_mask;
  std::optional<Point2> predicted_shadow_center;
};

Image rgb8_to_image(const struct Rgb8Image& raw);
struct Rgb8Image image_to_rgb8(const Image& image);

// Reads an annotation JSON file (see save_annotations for the schema) plus the
// PNG images it references, joining object and shadow records on their
// association_id. Throws on missing files, schema violations (naming the
// offending key) and unpaired association ids (naming the image and the id).
std::vector<ImageSample> load_annotations(const std::string& path);

// Writes PNGs plus one annotation JSON into `directory`. The JSON schema is
//   {"images": [{"id", "file_name", "height", "width"}],
//    "annotations": [{"id", "image_id", "category": "object"|"shadow",
//                     "segmentation": {"size": [h, w], "counts": [...]},
//                     "association_id"}]}
// with counts holding the column-major RLE of alternating 0/1 run lengths
// starting with the 0-run. Returns the annotation file path.
std::string save_annotations(const std::vector<ImageSample>& samples, const std::string& directory,
                             const std::string& annotation_file_name = "annotations.json");

// Detections serialized in the annotation schema extended with a "score"
// field; probability masks are stored thresholded at 0.5.
void save_detections(const std::vector<std::vector<Detection>>& detections_per_image,
                     const std::vector<std::string>& image_names, int height, int width,
                     const std::string& path);

}  // namespace fis
