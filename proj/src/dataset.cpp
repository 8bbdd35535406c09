#include "skeyspot/dataset.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <unordered_set>

#include "skeyspot/error.hpp"
#include "skeyspot/io.hpp"
#include "skeyspot/rng.hpp"

namespace skeyspot {

using json = nlohmann::ordered_json;

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: return "none";
  }
  return "none";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  if (text == "none" || text.empty()) return Split::none;
  throw Error(ErrorCode::MalformedAnnotation, "unknown split tag '" + std::string(text) + "'");
}

const ImageRecord* DatasetManifest::find(std::string_view image_id) const noexcept {
  for (const auto& img : images) {
    if (img.image_id == image_id) return &img;
  }
  return nullptr;
}

void DatasetManifest::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& img : images) {
    if (img.image_id.empty()) throw Error(ErrorCode::MalformedAnnotation, "image with empty id");
    if (!ids.insert(img.image_id).second) {
      throw Error(ErrorCode::MalformedAnnotation, "duplicate image id '" + img.image_id + "'");
    }
    if (img.width <= 0 || img.height <= 0) {
      throw Error(ErrorCode::MalformedAnnotation, "image '" + img.image_id + "' has non-positive size");
    }
    for (const auto& gt : img.ground_truth) {
      registry.at(gt.class_id);
      const auto& b = gt.box;
      if (!b.valid() || b.x_min < 0 || b.y_min < 0 || b.x_max > img.width || b.y_max > img.height) {
        throw Error(ErrorCode::MalformedAnnotation, "box outside image '" + img.image_id + "'");
      }
    }
  }
}

// ---------------------------------------------------------------------------

std::string write_manifest_json(const DatasetManifest& manifest) {
  json doc;
  doc["version"] = manifest.registry.version();
  json reg = json::array();
  for (const auto& c : manifest.registry.classes()) {
    reg.push_back({{"id", c.class_id}, {"name", c.name}, {"slug", c.slug}});
  }
  doc["registry"] = std::move(reg);
  json images = json::array();
  for (const auto& img : manifest.images) {
    json j;
    j["id"] = img.image_id;
    j["path"] = img.path;
    j["width"] = img.width;
    j["height"] = img.height;
    j["split"] = to_string(img.split);
    json boxes = json::array();
    for (const auto& gt : img.ground_truth) {
      boxes.push_back({{"class_id", gt.class_id},
                       {"x_min", gt.box.x_min},
                       {"y_min", gt.box.y_min},
                       {"x_max", gt.box.x_max},
                       {"y_max", gt.box.y_max}});
    }
    j["boxes"] = std::move(boxes);
    if (img.provenance) {
      j["provenance"] = {{"source_id", img.provenance->source_id},
                         {"transform", img.provenance->transform},
                         {"seed", img.provenance->seed}};
    }
    images.push_back(std::move(j));
  }
  doc["images"] = std::move(images);
  return doc.dump(2) + "\n";
}

DatasetManifest parse_manifest_json(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedAnnotation, std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    DatasetManifest m;
    const std::string version = doc.value("version", std::string("custom"));
    if (doc.contains("registry")) {
      std::vector<ServiceKeyClass> classes;
      for (const auto& c : doc.at("registry")) {
        classes.push_back({c.at("id").get<int>(), c.at("name").get<std::string>(),
                           c.value("slug", std::string())});
      }
      m.registry = ClassRegistry(std::move(classes), version);
    }
    for (const auto& j : doc.at("images")) {
      ImageRecord img;
      img.image_id = j.at("id").get<std::string>();
      img.path = j.value("path", std::string());
      img.width = j.at("width").get<int>();
      img.height = j.at("height").get<int>();
      img.split = parse_split(j.value("split", std::string("none")));
      if (img.width <= 0 || img.height <= 0) {
        throw Error(ErrorCode::MalformedAnnotation, "image '" + img.image_id + "' has non-positive size");
      }
      for (const auto& b : j.value("boxes", json::array())) {
        const int cls = b.at("class_id").get<int>();
        m.registry.at(cls);
        const BoundingBox raw{b.at("x_min").get<double>(), b.at("y_min").get<double>(),
                              b.at("x_max").get<double>(), b.at("y_max").get<double>()};
        if (!raw.valid()) {
          throw Error(ErrorCode::MalformedAnnotation, "invalid box in image '" + img.image_id + "'");
        }
        if (auto clipped = clip_box(raw, img.width, img.height)) {
          img.ground_truth.push_back({cls, *clipped});
        }
      }
      if (j.contains("provenance")) {
        const auto& p = j.at("provenance");
        img.provenance = Provenance{p.at("source_id").get<std::string>(),
                                    p.at("transform").get<std::string>(),
                                    p.at("seed").get<std::uint64_t>()};
      }
      m.images.push_back(std::move(img));
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedAnnotation, std::string("manifest field error: ") + e.what());
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest_json(read_file(path));
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  write_file(path, write_manifest_json(manifest));
}

// ---------------------------------------------------------------------------

DatasetStats dataset_stats(const DatasetManifest& manifest) {
  DatasetStats stats;
  stats.classes.resize(manifest.registry.size());
  for (std::size_t i = 0; i < stats.classes.size(); ++i) stats.classes[i].class_id = static_cast<int>(i);
  for (const auto& img : manifest.images) {
    const auto s = static_cast<std::size_t>(img.split);
    ++stats.images_by_split[s];
    for (const auto& gt : img.ground_truth) {
      auto& row = stats.classes.at(static_cast<std::size_t>(gt.class_id));
      ++row.by_split[s];
      ++row.total;
      ++stats.instances_by_split[s];
      ++stats.total_instances;
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------

std::vector<FoldSpec> kfold_split(const DatasetManifest& manifest, int k, double val_fraction,
                                  std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "kfold_split: k must be >= 2");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "kfold_split: val_fraction must be in (0,1)");
  }
  std::vector<std::string> pool;
  for (const auto& img : manifest.images) {
    if (img.split != Split::test) pool.push_back(img.image_id);
  }
  const std::size_t n = pool.size();
  const auto uk = static_cast<std::size_t>(k);
  if (n < uk) {
    throw Error(ErrorCode::InsufficientImages, "kfold_split: " + std::to_string(n) +
                                                   " non-test images for k=" + std::to_string(k));
  }

  std::vector<std::string> shuffled = pool;
  Rng rng(seed);
  rng.shuffle(shuffled);

  auto block_start = [&](std::size_t i) { return i * n / uk; };
  const bool partition = std::abs(val_fraction - 1.0 / k) < 1e-9;
  std::size_t window = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  window = std::clamp<std::size_t>(window, 1, n - 1);

  std::vector<FoldSpec> folds;
  for (std::size_t i = 0; i < uk; ++i) {
    std::set<std::string> val;
    if (partition) {
      for (std::size_t p = block_start(i); p < block_start(i + 1); ++p) val.insert(shuffled[p]);
    } else {
      for (std::size_t p = 0; p < window; ++p) val.insert(shuffled[(block_start(i) + p) % n]);
    }
    FoldSpec fold;
    fold.fold_index = static_cast<int>(i);
    fold.seed = seed;
    for (const auto& id : pool) (val.count(id) ? fold.val : fold.train).push_back(id);
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::string write_folds_json(const std::vector<FoldSpec>& folds) {
  json arr = json::array();
  for (const auto& f : folds) {
    arr.push_back({{"fold_index", f.fold_index}, {"seed", f.seed}, {"train", f.train}, {"val", f.val}});
  }
  return arr.dump(2) + "\n";
}

std::vector<FoldSpec> parse_folds_json(std::string_view json_text) {
  try {
    std::vector<FoldSpec> out;
    for (const auto& j : json::parse(json_text)) {
      FoldSpec f;
      f.fold_index = j.at("fold_index").get<int>();
      f.seed = j.value("seed", std::uint64_t{0});
      f.train = j.at("train").get<std::vector<std::string>>();
      f.val = j.at("val").get<std::vector<std::string>>();
      out.push_back(std::move(f));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedAnnotation, std::string("folds JSON: ") + e.what());
  }
}

}  // namespace skeyspot
