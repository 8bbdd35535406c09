#include "skeyspot/predictions.hpp"

#include <nlohmann/json.hpp>

#include "skeyspot/io.hpp"

namespace skeyspot {

using json = nlohmann::ordered_json;

namespace {

std::optional<ErrorCode> code_from_string(std::string_view s) {
  for (int c = 0; c <= static_cast<int>(ErrorCode::JobNotDone); ++c) {
    if (to_string(static_cast<ErrorCode>(c)) == s) return static_cast<ErrorCode>(c);
  }
  return std::nullopt;
}

ImagePredictions parse_one(const json& j, const ClassRegistry& registry) {
  ImagePredictions p;
  p.image_id = j.at("image_id").get<std::string>();
  if (j.contains("error")) {
    const auto& e = j["error"];
    p.error = code_from_string(e.value("code", std::string())).value_or(ErrorCode::InvalidArgument);
    p.error_message = e.value("message", std::string());
    return p;
  }
  for (const auto& d : j.at("detections")) {
    Detection det;
    det.class_id = d.at("class_id").get<int>();
    registry.at(det.class_id);
    det.confidence = d.at("confidence").get<double>();
    const auto& box = d.at("box");
    if (!box.is_array() || box.size() != 4) throw Error(ErrorCode::MalformedAnnotation, "detection box must have 4 numbers");
    det.box = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(), box[3].get<double>()};
    if (!det.box.valid()) throw Error(ErrorCode::MalformedAnnotation, "invalid detection box in '" + p.image_id + "'");
    if (!(det.confidence >= 0.0 && det.confidence <= 1.0)) {
      throw Error(ErrorCode::MalformedAnnotation, "detection confidence outside [0,1] in '" + p.image_id + "'");
    }
    p.detections.push_back(det);
  }
  return p;
}

}  // namespace

std::string write_predictions_json(std::span<const ImagePredictions> predictions, const ClassRegistry& registry) {
  json arr = json::array();
  for (const auto& p : predictions) {
    json j;
    j["image_id"] = p.image_id;
    if (p.error) {
      j["error"] = {{"code", to_string(*p.error)}, {"message", p.error_message}};
    } else {
      json dets = json::array();
      for (const auto& d : p.detections) {
        dets.push_back({{"class_id", d.class_id},
                        {"name", registry.at(d.class_id).name},
                        {"confidence", d.confidence},
                        {"box", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}}});
      }
      j["detections"] = std::move(dets);
    }
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::vector<ImagePredictions> parse_predictions_json(std::string_view json_text, const ClassRegistry& registry) {
  try {
    const json doc = json::parse(json_text);
    std::vector<ImagePredictions> out;
    if (doc.is_array()) {
      for (const auto& j : doc) out.push_back(parse_one(j, registry));
    } else {
      out.push_back(parse_one(doc, registry));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedAnnotation, std::string("predictions JSON: ") + e.what());
  }
}

std::string csv_field(std::string_view value) {
  if (value.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string write_predictions_csv(std::span<const ImagePredictions> predictions, const ClassRegistry& registry) {
  std::string out = "image_id,class_id,name,confidence,x_min,y_min,x_max,y_max\n";
  for (const auto& p : predictions) {
    for (const auto& d : p.detections) {
      out += csv_field(p.image_id) + ',' + std::to_string(d.class_id) + ',' + csv_field(registry.at(d.class_id).name) +
             ',' + format_number(d.confidence) + ',' + format_number(d.box.x_min) + ',' + format_number(d.box.y_min) +
             ',' + format_number(d.box.x_max) + ',' + format_number(d.box.y_max) + '\n';
    }
  }
  return out;
}

}  // namespace skeyspot
