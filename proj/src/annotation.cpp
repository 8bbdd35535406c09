#include "skeyspot/annotation.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "skeyspot/io.hpp"

namespace skeyspot {

namespace pt = boost::property_tree;
using json = nlohmann::ordered_json;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_number(std::string_view text, double& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

double require_number(const pt::ptree& node, const std::string& key, const std::string& where) {
  auto child = node.get_optional<std::string>(key);
  double v = 0.0;
  if (!child || !parse_number(*child, v)) {
    throw Error(ErrorCode::MalformedAnnotation, where + ": missing or non-numeric <" + key + ">");
  }
  return v;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string stem_of(const std::string& filename) {
  return std::filesystem::path(filename).stem().string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Pascal VOC

VocParseResult parse_voc(std::string_view xml_text, const ClassRegistry& registry) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml_text)};
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::ptree_error& e) {
    throw Error(ErrorCode::MalformedAnnotation, std::string("VOC XML parse error: ") + e.what());
  }
  auto root = tree.get_child_optional("annotation");
  if (!root) throw Error(ErrorCode::MalformedAnnotation, "VOC: missing <annotation> root");

  VocParseResult result;
  ImageRecord& rec = result.record;
  rec.path = root->get<std::string>("filename", "");
  if (rec.path.empty()) rec.path = root->get<std::string>("path", "");
  if (rec.path.empty()) throw Error(ErrorCode::MalformedAnnotation, "VOC: missing <filename>");
  rec.image_id = stem_of(rec.path);

  auto size = root->get_child_optional("size");
  if (!size) throw Error(ErrorCode::MalformedAnnotation, "VOC: missing <size>");
  const double w = require_number(*size, "width", "VOC <size>");
  const double h = require_number(*size, "height", "VOC <size>");
  if (w <= 0 || h <= 0 || w != std::trunc(w) || h != std::trunc(h)) {
    throw Error(ErrorCode::MalformedAnnotation, "VOC: image size must be positive integers");
  }
  rec.width = static_cast<int>(w);
  rec.height = static_cast<int>(h);

  int index = 0;
  for (const auto& [tag, obj] : *root) {
    if (tag != "object") continue;
    const std::string where = "VOC object #" + std::to_string(index++);
    const std::string name = obj.get<std::string>("name", "");
    if (name.empty()) throw Error(ErrorCode::MalformedAnnotation, where + ": missing <name>");
    auto bnd = obj.get_child_optional("bndbox");
    if (!bnd) throw Error(ErrorCode::MalformedAnnotation, where + ": missing <bndbox>");
    const double xmin = require_number(*bnd, "xmin", where);
    const double ymin = require_number(*bnd, "ymin", where);
    const double xmax = require_number(*bnd, "xmax", where);
    const double ymax = require_number(*bnd, "ymax", where);

    const auto cls = registry.find(name);
    if (!cls) {
      result.issues.push_back({ErrorCode::UnknownClass, where + ": unknown class '" + name + "'"});
      continue;
    }
    const BoundingBox raw{xmin - 1.0, ymin - 1.0, xmax, ymax};
    if (!raw.valid()) {
      throw Error(ErrorCode::MalformedAnnotation, where + ": min exceeds max");
    }
    auto clipped = clip_box(raw, rec.width, rec.height);
    if (!clipped) {
      result.issues.push_back({ErrorCode::MalformedAnnotation, where + ": box has no area inside the image"});
      continue;
    }
    rec.ground_truth.push_back({*cls, *clipped});
  }
  return result;
}

std::string write_voc(const ImageRecord& record, const ClassRegistry& registry) {
  std::ostringstream out;
  out << "<annotation>\n"
      << "\t<folder></folder>\n"
      << "\t<filename>" << xml_escape(record.path) << "</filename>\n"
      << "\t<size>\n"
      << "\t\t<width>" << record.width << "</width>\n"
      << "\t\t<height>" << record.height << "</height>\n"
      << "\t\t<depth>3</depth>\n"
      << "\t</size>\n"
      << "\t<segmented>0</segmented>\n";
  for (const auto& gt : record.ground_truth) {
    out << "\t<object>\n"
        << "\t\t<name>" << xml_escape(registry.at(gt.class_id).name) << "</name>\n"
        << "\t\t<pose>Unspecified</pose>\n"
        << "\t\t<truncated>0</truncated>\n"
        << "\t\t<difficult>0</difficult>\n"
        << "\t\t<bndbox>\n"
        << "\t\t\t<xmin>" << format_number(gt.box.x_min + 1.0) << "</xmin>\n"
        << "\t\t\t<ymin>" << format_number(gt.box.y_min + 1.0) << "</ymin>\n"
        << "\t\t\t<xmax>" << format_number(gt.box.x_max) << "</xmax>\n"
        << "\t\t\t<ymax>" << format_number(gt.box.y_max) << "</ymax>\n"
        << "\t\t</bndbox>\n"
        << "\t</object>\n";
  }
  out << "</annotation>\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// YOLO

YoloParseResult parse_yolo(std::string_view text, const ClassRegistry& registry, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "parse_yolo: image size must be positive");
  YoloParseResult result;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "YOLO line " + std::to_string(line_no);

    std::vector<std::string_view> fields;
    while (!line.empty()) {
      const auto sp = line.find_first_of(" \t");
      fields.push_back(line.substr(0, sp));
      line = sp == std::string_view::npos ? std::string_view{} : trim(line.substr(sp));
    }
    if (fields.size() != 5) {
      throw Error(ErrorCode::MalformedAnnotation, where + ": expected 5 fields, got " + std::to_string(fields.size()));
    }
    int cls = 0;
    {
      auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), cls);
      if (ec != std::errc() || ptr != fields[0].data() + fields[0].size()) {
        throw Error(ErrorCode::MalformedAnnotation, where + ": non-integer class id");
      }
    }
    double v[4];
    for (int i = 0; i < 4; ++i) {
      if (!parse_number(fields[static_cast<std::size_t>(i) + 1], v[i])) {
        throw Error(ErrorCode::MalformedAnnotation, where + ": non-numeric value");
      }
    }
    if (!registry.contains(cls)) {
      throw Error(ErrorCode::OutOfRangeClass, where + ": class id " + std::to_string(cls) + " outside [0," +
                                                  std::to_string(static_cast<int>(registry.size()) - 1) + "]");
    }
    if (v[2] < 0 || v[3] < 0) throw Error(ErrorCode::MalformedAnnotation, where + ": negative size");
    const double cx = v[0] * width, cy = v[1] * height;
    const double hw = 0.5 * v[2] * width, hh = 0.5 * v[3] * height;
    const BoundingBox raw{cx - hw, cy - hh, cx + hw, cy + hh};
    if (auto clipped = clip_box(raw, width, height)) {
      result.boxes.push_back({cls, *clipped});
    } else {
      result.issues.push_back({ErrorCode::MalformedAnnotation, where + ": zero-area box dropped"});
    }
  }
  return result;
}

std::string write_yolo(std::span<const GroundTruthBox> boxes, int width, int height) {
  std::string out;
  for (const auto& gt : boxes) {
    const auto& b = gt.box;
    out += std::to_string(gt.class_id);
    for (double v : {(b.x_min + b.x_max) / 2.0 / width, (b.y_min + b.y_max) / 2.0 / height,
                     b.width() / width, b.height() / height}) {
      out += ' ';
      out += format_number(v);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// COCO

std::string write_coco(const DatasetManifest& manifest) {
  json doc;
  doc["info"] = {{"version", manifest.registry.version()}};
  json images = json::array();
  json annotations = json::array();
  long long ann_id = 1;
  long long img_id = 1;
  for (const auto& img : manifest.images) {
    images.push_back({{"id", img_id},
                      {"file_name", img.path},
                      {"width", img.width},
                      {"height", img.height},
                      {"image_key", img.image_id},
                      {"split", to_string(img.split)}});
    for (const auto& gt : img.ground_truth) {
      const auto& b = gt.box;
      annotations.push_back({{"id", ann_id++},
                             {"image_id", img_id},
                             {"category_id", gt.class_id},
                             {"bbox", {b.x_min, b.y_min, b.width(), b.height()}},
                             {"area", box_area(b)},
                             {"iscrowd", 0}});
    }
    ++img_id;
  }
  json categories = json::array();
  for (const auto& c : manifest.registry.classes()) {
    categories.push_back({{"id", c.class_id}, {"name", c.name}});
  }
  doc["images"] = std::move(images);
  doc["annotations"] = std::move(annotations);
  doc["categories"] = std::move(categories);
  return doc.dump(2) + "\n";
}

DatasetManifest parse_coco(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedAnnotation, std::string("COCO is not valid JSON: ") + e.what());
  }
  try {
    std::map<long long, std::string> cats;
    for (const auto& c : doc.at("categories")) {
      if (!cats.emplace(c.at("id").get<long long>(), c.at("name").get<std::string>()).second) {
        throw Error(ErrorCode::MalformedAnnotation, "COCO: duplicate category id");
      }
    }
    std::map<long long, int> cat_to_class;
    std::vector<ServiceKeyClass> classes;
    for (const auto& [id, name] : cats) {
      const int cls = static_cast<int>(classes.size());
      cat_to_class[id] = cls;
      classes.push_back({cls, name, slugify(name)});
    }
    std::string version = "coco";
    if (doc.contains("info") && doc["info"].contains("version")) version = doc["info"]["version"].get<std::string>();

    DatasetManifest m{ClassRegistry(std::move(classes), version), {}};
    std::map<long long, std::size_t> image_index;
    for (const auto& j : doc.at("images")) {
      ImageRecord img;
      img.path = j.at("file_name").get<std::string>();
      img.image_id = j.contains("image_key") ? j["image_key"].get<std::string>() : stem_of(img.path);
      img.width = j.at("width").get<int>();
      img.height = j.at("height").get<int>();
      img.split = parse_split(j.value("split", std::string("none")));
      if (!image_index.emplace(j.at("id").get<long long>(), m.images.size()).second) {
        throw Error(ErrorCode::MalformedAnnotation, "COCO: duplicate image id");
      }
      m.images.push_back(std::move(img));
    }
    for (const auto& a : doc.at("annotations")) {
      const auto img_it = image_index.find(a.at("image_id").get<long long>());
      if (img_it == image_index.end()) {
        throw Error(ErrorCode::MalformedAnnotation, "COCO: annotation references unknown image id");
      }
      const auto cat = a.at("category_id").get<long long>();
      const auto cls_it = cat_to_class.find(cat);
      if (cls_it == cat_to_class.end()) {
        throw Error(ErrorCode::UnknownClass, "COCO: unknown category id " + std::to_string(cat));
      }
      const auto& bbox = a.at("bbox");
      if (!bbox.is_array() || bbox.size() != 4) throw Error(ErrorCode::MalformedAnnotation, "COCO: bbox must have 4 numbers");
      const double x = bbox[0].get<double>(), y = bbox[1].get<double>();
      const double w = bbox[2].get<double>(), h = bbox[3].get<double>();
      if (w < 0 || h < 0) throw Error(ErrorCode::MalformedAnnotation, "COCO: negative bbox size");
      auto& img = m.images[img_it->second];
      if (auto clipped = clip_box({x, y, x + w, y + h}, img.width, img.height)) {
        img.ground_truth.push_back({cls_it->second, *clipped});
      }
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedAnnotation, std::string("COCO field error: ") + e.what());
  }
}

}  // namespace skeyspot
