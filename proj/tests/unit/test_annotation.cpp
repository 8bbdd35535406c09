#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "skeyspot/annotation.hpp"

using namespace skeyspot;

namespace {

const char* kVoc = R"(<annotation>
  <folder>plans</folder>
  <filename>plan_001.png</filename>
  <size><width>200</width><height>100</height><depth>3</depth></size>
  <object>
    <name>Radiator</name>
    <bndbox><xmin>11</xmin><ymin>21</ymin><xmax>50</xmax><ymax>40</ymax></bndbox>
  </object>
  <object>
    <name>Flux Capacitor</name>
    <bndbox><xmin>1</xmin><ymin>1</ymin><xmax>5</xmax><ymax>5</ymax></bndbox>
  </object>
  <object>
    <name>light switch</name>
    <bndbox><xmin>190</xmin><ymin>90</ymin><xmax>260</xmax><ymax>130</ymax></bndbox>
  </object>
</annotation>)";

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("VOC parse converts 1-based inclusive coordinates") {
  const auto r = parse_voc(kVoc, ClassRegistry::delp());
  CHECK(r.record.image_id == "plan_001");
  CHECK(r.record.width == 200);
  CHECK(r.record.height == 100);
  REQUIRE(r.record.ground_truth.size() == 2);
  CHECK(r.record.ground_truth[0] == GroundTruthBox{23, {10, 20, 50, 40}});
  // clipped to the image
  CHECK(r.record.ground_truth[1] == GroundTruthBox{15, {189, 89, 200, 100}});
  REQUIRE(r.issues.size() == 1);
  CHECK(r.issues[0].code == ErrorCode::UnknownClass);
}

TEST_CASE("VOC malformed input") {
  const auto& reg = ClassRegistry::delp();
  CHECK(code_of([&] { parse_voc("<annotation><filename>a.png</filename></annotation>", reg); }) ==
        ErrorCode::MalformedAnnotation);
  CHECK(code_of([&] { parse_voc("<annotation", reg); }) == ErrorCode::MalformedAnnotation);
  CHECK(code_of([&] {
          parse_voc("<annotation><filename>a.png</filename><size><width>10</width><height>10</height></size>"
                    "<object><name>Radiator</name><bndbox><xmin>x</xmin><ymin>1</ymin><xmax>2</xmax>"
                    "<ymax>2</ymax></bndbox></object></annotation>",
                    reg);
        }) == ErrorCode::MalformedAnnotation);
}

TEST_CASE("VOC round trip") {
  gen::Source s(21);
  const auto& reg = ClassRegistry::delp();
  for (int t = 0; t < 50; ++t) {
    auto m = gen::manifest(s, 1, 8, {0, 6, 15, 23, 27, 33});
    auto rec = m.images[0];
    // VOC stores integer pixels
    for (auto& g : rec.ground_truth) {
      g.box = {std::floor(g.box.x_min), std::floor(g.box.y_min), std::ceil(g.box.x_max), std::ceil(g.box.y_max)};
    }
    rec.split = Split::none;
    const auto back = parse_voc(write_voc(rec, reg), reg);
    CHECK(back.issues.empty());
    CHECK(back.record.ground_truth == rec.ground_truth);
    CHECK(back.record.width == rec.width);
    CHECK(back.record.image_id == rec.image_id);
  }
}

TEST_CASE("YOLO parse fixtures") {
  const auto& reg = ClassRegistry::delp();
  const auto r = parse_yolo("6 0.5 0.5 0.1 0.2\n\n", reg, 1000, 500);
  REQUIRE(r.boxes.size() == 1);
  CHECK(r.boxes[0] == GroundTruthBox{6, {450, 200, 550, 300}});
  CHECK(code_of([&] { parse_yolo("34 0.5 0.5 0.1 0.2", reg, 1000, 500); }) == ErrorCode::OutOfRangeClass);
  CHECK(code_of([&] { parse_yolo("6 0.5 0.5 0.1", reg, 1000, 500); }) == ErrorCode::MalformedAnnotation);
  CHECK(code_of([&] { parse_yolo("6 0.5 zz 0.1 0.2", reg, 1000, 500); }) == ErrorCode::MalformedAnnotation);
  const auto degenerate = parse_yolo("6 0.5 0.5 0 0.2", reg, 1000, 500);
  CHECK(degenerate.boxes.empty());
  CHECK(degenerate.issues.size() == 1);
}

TEST_CASE("YOLO round trip within float tolerance") {
  gen::Source s(22);
  const auto& reg = ClassRegistry::delp();
  for (int t = 0; t < 50; ++t) {
    const auto m = gen::manifest(s, 1, 8, {1, 2, 9, 30});
    const auto& rec = m.images[0];
    const auto back = parse_yolo(write_yolo(rec.ground_truth, rec.width, rec.height), reg, rec.width, rec.height);
    REQUIRE(back.boxes.size() == rec.ground_truth.size());
    for (std::size_t i = 0; i < back.boxes.size(); ++i) {
      CHECK(back.boxes[i].class_id == rec.ground_truth[i].class_id);
      CHECK(back.boxes[i].box.x_min == doctest::Approx(rec.ground_truth[i].box.x_min).epsilon(1e-9));
      CHECK(back.boxes[i].box.y_max == doctest::Approx(rec.ground_truth[i].box.y_max).epsilon(1e-9));
    }
  }
}

TEST_CASE("COCO bbox is x, y, w, h") {
  DatasetManifest m;
  m.images.push_back({"p1", "p1.png", 200, 100, Split::train, {{6, {10, 20, 50, 40}}}, std::nullopt});
  const auto text = write_coco(m);
  const auto doc = nlohmann::json::parse(text);
  CHECK(doc["annotations"][0]["bbox"] == nlohmann::json::array({10, 20, 40, 20}));
  CHECK(doc["annotations"][0]["category_id"] == 6);
  CHECK(doc["categories"].size() == 34);
}

TEST_CASE("COCO round trip is lossless") {
  gen::Source s(23);
  for (int t = 0; t < 20; ++t) {
    const auto m = gen::manifest(s, 6, 6, {0, 5, 6, 17, 33});
    const auto back = parse_coco(write_coco(m));
    CHECK(back == m);
  }
}

TEST_CASE("COCO errors") {
  CHECK(code_of([] { parse_coco("{"); }) == ErrorCode::MalformedAnnotation);
  CHECK(code_of([] {
          parse_coco(R"({"images":[{"id":1,"file_name":"a.png","width":10,"height":10}],
                         "annotations":[{"id":1,"image_id":1,"category_id":9,"bbox":[0,0,1,1]}],
                         "categories":[{"id":0,"name":"x"}]})");
        }) == ErrorCode::UnknownClass);
  CHECK(code_of([] {
          parse_coco(R"({"images":[],"annotations":[{"id":1,"image_id":4,"category_id":0,"bbox":[0,0,1,1]}],
                         "categories":[{"id":0,"name":"x"}]})");
        }) == ErrorCode::MalformedAnnotation);
}

TEST_CASE("empty inputs") {
  const auto& reg = ClassRegistry::delp();
  const auto r = parse_voc("<annotation><filename>x.png</filename><size><width>5</width><height>5</height></size>"
                           "</annotation>",
                           reg);
  CHECK(r.record.ground_truth.empty());
  const auto origin = parse_yolo("0 0 0 0 0", reg, 100, 100);
  CHECK(origin.boxes.empty());
  CHECK(origin.issues.size() == 1);
  const auto doc = nlohmann::json::parse(write_coco(DatasetManifest{}));
  CHECK(doc["images"].empty());
  CHECK(doc["annotations"].empty());
  CHECK(doc["categories"].size() == 34);
}
