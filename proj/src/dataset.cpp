#include "fis/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "fis/common.hpp"
#include "fis/png_io.hpp"

namespace fis {

namespace fs = std::filesystem;
using nlohmann::json;

Image Image::zeros(int height, int width) {
  FIS_CHECK(height > 0 && width > 0, "image dimensions must be positive, got ", height, "x", width);
  Image img;
  img.height = height;
  img.width = width;
  img.values.assign(static_cast<std::size_t>(height) * width * 3, 0.0f);
  return img;
}

Image rgb8_to_image(const Rgb8Image& raw) {
  Image img = Image::zeros(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
    img.values[i] = static_cast<float>(raw.pixels[i]) / 255.0f;
  }
  return img;
}

Rgb8Image image_to_rgb8(const Image& image) {
  Rgb8Image raw;
  raw.height = image.height;
  raw.width = image.width;
  raw.pixels.resize(image.values.size());
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const float v = std::clamp(image.values[i], 0.0f, 1.0f);
    raw.pixels[i] = static_cast<std::uint8_t>(v * 255.0f + 0.5f);
  }
  return raw;
}

namespace {

// Rejects JSON objects with keys outside `allowed`, naming the stray key.
void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  FIS_CHECK(obj.is_object(), where, " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    FIS_CHECK(allowed.count(key) != 0, "unknown key \"", key, "\" in ", where);
  }
}

const json& require_key(const json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  FIS_CHECK(it != obj.end(), "missing key \"", key, "\" in ", where);
  return *it;
}

json mask_to_segmentation(const BinaryMask& mask) {
  json seg;
  seg["size"] = json::array({mask.height, mask.width});
  seg["counts"] = rle_encode(mask);
  return seg;
}

BinaryMask segmentation_to_mask(const json& seg, const std::string& where) {
  check_keys(seg, {"size", "counts"}, where);
  const json& size = require_key(seg, "size", where);
  FIS_CHECK(size.is_array() && size.size() == 2, "\"size\" in ", where, " must be [height, width]");
  const int h = size[0].get<int>();
  const int w = size[1].get<int>();
  const auto counts = require_key(seg, "counts", where).get<std::vector<std::uint32_t>>();
  return rle_decode(h, w, counts);
}

}  // namespace

std::vector<ImageSample> load_annotations(const std::string& path) {
  FIS_CHECK(fs::exists(path), "annotation file not found: ", path);
  std::ifstream in(path);
  FIS_CHECK(in.good(), "cannot read annotation file: ", path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    fail("invalid JSON in ", path, ": ", e.what());
  }

  check_keys(root, {"images", "annotations"}, "annotation file");
  const json& images = require_key(root, "images", "annotation file");
  const json& annotations = require_key(root, "annotations", "annotation file");
  FIS_CHECK(images.is_array(), "\"images\" must be an array");
  FIS_CHECK(annotations.is_array(), "\"annotations\" must be an array");

  const fs::path base_dir = fs::path(path).parent_path();

  struct PendingImage {
    std::string file_name;
    int height = 0;
    int width = 0;
    // association_id -> (object mask?, shadow mask?)
    std::map<int, std::pair<std::optional<BinaryMask>, std::optional<BinaryMask>>> pairs;
  };
  std::map<int, PendingImage> by_id;
  std::vector<int> image_order;

  for (const json& entry : images) {
    check_keys(entry, {"id", "file_name", "height", "width"}, "images entry");
    const int id = require_key(entry, "id", "images entry").get<int>();
    FIS_CHECK(by_id.count(id) == 0, "duplicate image id ", id);
    PendingImage pending;
    pending.file_name = require_key(entry, "file_name", "images entry").get<std::string>();
    pending.height = require_key(entry, "height", "images entry").get<int>();
    pending.width = require_key(entry, "width", "images entry").get<int>();
    FIS_CHECK(pending.height > 0 && pending.width > 0, "non-positive size for image id ", id);
    by_id.emplace(id, std::move(pending));
    image_order.push_back(id);
  }

  std::set<int> seen_annotation_ids;
  for (const json& entry : annotations) {
    check_keys(entry, {"id", "image_id", "category", "segmentation", "association_id"},
               "annotations entry");
    const int ann_id = require_key(entry, "id", "annotations entry").get<int>();
    FIS_CHECK(seen_annotation_ids.insert(ann_id).second, "duplicate annotation id ", ann_id);
    const int image_id = require_key(entry, "image_id", "annotations entry").get<int>();
    auto img_it = by_id.find(image_id);
    FIS_CHECK(img_it != by_id.end(), "annotation ", ann_id, " references unknown image_id ",
              image_id);
    const std::string category = require_key(entry, "category", "annotations entry").get<std::string>();
    FIS_CHECK(category == "object" || category == "shadow", "annotation ", ann_id,
              " has invalid category \"", category, "\"");
    const int assoc = require_key(entry, "association_id", "annotations entry").get<int>();
    BinaryMask mask = segmentation_to_mask(require_key(entry, "segmentation", "annotations entry"),
                                           "segmentation of annotation " + std::to_string(ann_id));
    FIS_CHECK(mask.height == img_it->second.height && mask.width == img_it->second.width,
              "annotation ", ann_id, " mask size ", mask.height, "x", mask.width,
              " does not match image ", image_id);

    auto& slot = img_it->second.pairs[assoc];
    if (category == "object") {
      FIS_CHECK(!slot.first.has_value(), "image ", img_it->second.file_name,
                ": duplicate object for association id ", assoc);
      slot.first = std::move(mask);
    } else {
      FIS_CHECK(!slot.second.has_value(), "image ", img_it->second.file_name,
                ": duplicate shadow for association id ", assoc);
      slot.second = std::move(mask);
    }
  }

  std::vector<ImageSample> samples;
  samples.reserve(image_order.size());
  for (int id : image_order) {
    PendingImage& pending = by_id.at(id);
    ImageSample sample;
    sample.source_id = pending.file_name;
    const fs::path image_path = base_dir / pending.file_name;
    FIS_CHECK(fs::exists(image_path), "image file not found: ", image_path.string());
    sample.image = rgb8_to_image(read_png_rgb8(image_path.string()));
    FIS_CHECK(sample.image.height == pending.height && sample.image.width == pending.width,
              "PNG size of ", pending.file_name, " does not match the annotation entry");

    for (auto& [assoc, slot] : pending.pairs) {
      FIS_CHECK(slot.first.has_value(), "image ", pending.file_name,
                ": shadow with association id ", assoc, " has no object partner");
      FIS_CHECK(slot.second.has_value(), "image ", pending.file_name,
                ": object with association id ", assoc, " has no shadow partner");
      ShadowObjectInstance instance;
      instance.object_mask = std::move(*slot.first);
      instance.shadow_mask = std::move(*slot.second);
      instance.pair_id = assoc;
      FIS_CHECK(!instance.object_mask.empty_mask(), "image ", pending.file_name,
                ": empty object mask for association id ", assoc);
      FIS_CHECK(!instance.shadow_mask.empty_mask(), "image ", pending.file_name,
                ": empty shadow mask for association id ", assoc);
      sample.instances.push_back(std::move(instance));
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::string save_annotations(const std::vector<ImageSample>& samples, const std::string& directory,
                             const std::string& annotation_file_name) {
  fs::create_directories(directory);
  json root;
  root["images"] = json::array();
  root["annotations"] = json::array();

  int next_annotation_id = 1;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ImageSample& sample = samples[i];
    char file_name[32];
    std::snprintf(file_name, sizeof(file_name), "img_%06zu.png", i);
    write_png_rgb8((fs::path(directory) / file_name).string(), image_to_rgb8(sample.image));

    json image_entry;
    image_entry["id"] = static_cast<int>(i) + 1;
    image_entry["file_name"] = file_name;
    image_entry["height"] = sample.image.height;
    image_entry["width"] = sample.image.width;
    root["images"].push_back(std::move(image_entry));

    for (const ShadowObjectInstance& instance : sample.instances) {
      for (const bool is_object : {true, false}) {
        json ann;
        ann["id"] = next_annotation_id++;
        ann["image_id"] = static_cast<int>(i) + 1;
        ann["category"] = is_object ? "object" : "shadow";
        ann["segmentation"] =
            mask_to_segmentation(is_object ? instance.object_mask : instance.shadow_mask);
        ann["association_id"] = instance.pair_id;
        root["annotations"].push_back(std::move(ann));
      }
    }
  }

  const std::string out_path = (fs::path(directory) / annotation_file_name).string();
  std::ofstream out(out_path);
  FIS_CHECK(out.good(), "cannot write annotation file: ", out_path);
  out << root.dump(2) << "\n";
  return out_path;
}

void save_detections(const std::vector<std::vector<Detection>>& detections_per_image,
                     const std::vector<std::string>& image_names, int height, int width,
                     const std::string& path) {
  FIS_CHECK(detections_per_image.size() == image_names.size(),
            "detections/image name count mismatch");
  json root;
  root["images"] = json::array();
  root["annotations"] = json::array();
  int next_annotation_id = 1;
  for (std::size_t i = 0; i < detections_per_image.size(); ++i) {
    json image_entry;
    image_entry["id"] = static_cast<int>(i) + 1;
    image_entry["file_name"] = image_names[i];
    image_entry["height"] = height;
    image_entry["width"] = width;
    root["images"].push_back(std::move(image_entry));

    int assoc = 1;
    for (const Detection& det : detections_per_image[i]) {
      const BinaryMask object_mask = threshold_mask(det.object_mask);
      const BinaryMask shadow_mask = threshold_mask(det.shadow_mask);
      for (const bool is_object : {true, false}) {
        json ann;
        ann["id"] = next_annotation_id++;
        ann["image_id"] = static_cast<int>(i) + 1;
        ann["category"] = is_object ? "object" : "shadow";
        ann["segmentation"] = mask_to_segmentation(is_object ? object_mask : shadow_mask);
        ann["association_id"] = assoc;
        ann["score"] = det.score;
        root["annotations"].push_back(std::move(ann));
      }
      ++assoc;
    }
  }
  std::ofstream out(path);
  FIS_CHECK(out.good(), "cannot write detections file: ", path);
  out << root.dump(2) << "\n";
}

}  // namespace fis
