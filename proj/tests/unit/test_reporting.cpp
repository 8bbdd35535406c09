#include <doctest.h>

#include <cmath>
#include <set>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "generators.hpp"
#include "oracles.hpp"
#include "skeyspot/error.hpp"
#include "skeyspot/io.hpp"
#include "skeyspot/reporting.hpp"
#include "skeyspot/zip.hpp"

using namespace skeyspot;

namespace {

// Textbook HSV to RGB on [0,1].
std::array<double, 3> hsv(double h, double s, double v) {
  const double c = v * s, hp = h / 60.0, x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1)), m = v - c;
  std::array<double, 3> rgb{};
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  for (auto& e : rgb) e = (e + m) * 255;
  return rgb;
}

std::vector<ImagePredictions> sample_predictions() {
  return {{"plan_a", {{{10, 10, 60, 40}, 6, 0.91}, {{70, 10, 120, 40}, 6, 0.8}, {{10, 50, 40, 90}, 23, 0.66}}, {}, {}},
          {"plan_b", {{{5, 5, 30, 30}, 15, 0.5}}, {}, {}},
          {"broken", {}, ErrorCode::ImageDecodeError, "bad bytes"}};
}

}  // namespace

TEST_CASE("palette") {
  const auto c17 = class_color(17);
  CHECK(std::abs(c17.r - 34) <= 1);  // hue 180: cyan family
  CHECK(std::abs(c17.g - 230) <= 1);
  CHECK(c17.g == c17.b);
  for (int id = 0; id < 34; ++id) {
    const auto c = class_color(id);
    const auto ref = hsv(id * 360.0 / 34, kPaletteSaturation, kPaletteValue);
    CHECK(std::abs(c.r - ref[0]) <= 0.5 + 1e-9);
    CHECK(std::abs(c.g - ref[1]) <= 0.5 + 1e-9);
    CHECK(std::abs(c.b - ref[2]) <= 0.5 + 1e-9);
  }
  CHECK(to_hex({255, 0, 16}) == "#ff0010");
  CHECK_THROWS_AS(class_color(34), Error);
}

TEST_CASE("render draws only visible classes") {
  const cv::Mat img(120, 200, CV_8UC3, cv::Scalar(255, 255, 255));
  const auto preds = sample_predictions();
  const auto& reg = ClassRegistry::delp();
  const auto all = render_annotations(img, preds[0].detections, reg);
  CHECK(all.size() == img.size());
  CHECK(cv::norm(all, img, cv::NORM_INF) > 0);
  const auto c6 = class_color(6);
  CHECK(all.at<cv::Vec3b>(25, 10) == cv::Vec3b(c6.b, c6.g, c6.r));  // left edge of the first box

  RenderOptions none;
  none.visible_classes = std::set<int>{};
  CHECK(cv::norm(render_annotations(img, preds[0].detections, reg, none), img, cv::NORM_INF) == 0);
  RenderOptions only23;
  only23.visible_classes = std::set<int>{23};
  const auto some = render_annotations(img, preds[0].detections, reg, only23);
  CHECK(some.at<cv::Vec3b>(25, 10) == cv::Vec3b(255, 255, 255));
  CHECK(cv::norm(some, img, cv::NORM_INF) > 0);
  CHECK(render_annotations(cv::Mat(50, 50, CV_8UC1, cv::Scalar(9)), {}, reg).channels() == 3);
}

TEST_CASE("summary and costs") {
  const auto& reg = ClassRegistry::delp();
  const auto preds = sample_predictions();
  const auto sum = summarize(preds);
  REQUIRE(sum.images.size() == 2);
  CHECK(sum.images[0].counts.at(6) == 2);
  CHECK(sum.rollup.at(6) == 2);
  CHECK(sum.total == 4);
  CHECK(summary_to_csv(sum, reg) ==
        "image_id,class_id,class_name,count\nplan_a,6,Double Socket,2\nplan_a,23,Radiator,1\n"
        "plan_b,15,Light Switch,1\n");

  const RateCard rates({{6, Money::parse("12.50")}, {23, Money::parse("80")}});
  const auto costs = cost_breakdown(sum, rates);
  CHECK(costs.grand_total.to_string() == "105.00");
  CHECK(costs.images[0].subtotal.to_string() == "105.00");
  CHECK(costs.count == 4);
  const auto csv = costs_to_csv(costs, reg);
  CHECK(csv.find("plan_a,6,Double Socket,2,12.50,25.00\n") != std::string::npos);
  CHECK(csv.find("plan_b,15,Light Switch,1,,\n") != std::string::npos);
  CHECK(csv.find("plan_b,SUBTOTAL,,1,,0.00\n") != std::string::npos);
  CHECK(csv.ends_with("GRAND_TOTAL,,,4,,105.00\n"));
  CHECK(oracle::decimal_total({{2, "12.50"}, {1, "80.00"}}) == "105.00");
  const auto j = nlohmann::json::parse(costs_to_json(costs, reg));
  CHECK(j["grand_total"] == "105.00");
}

TEST_CASE("zip writer output parses with the reference reader") {
  std::vector<ZipEntry> entries{{"a.txt", "hello"}, {"dir/b.bin", std::string(70000, '\x07')}, {"empty", ""}};
  const auto bytes = write_zip(entries);
  const auto files = oracle::read_stored_zip(bytes);
  REQUIRE(files.has_value());
  REQUIRE(files->size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK((*files)[i].name == entries[i].name);
    CHECK((*files)[i].data == entries[i].data);
    CHECK((*files)[i].crc == oracle::crc32_reference(entries[i].data));
    CHECK((*files)[i].dos_date == 0x21);
  }
  CHECK(write_zip(entries) == bytes);
  std::vector<ZipEntry> dup{{"a", "1"}, {"a", "2"}};
  CHECK_THROWS_AS(write_zip(dup), Error);
  CHECK(oracle::crc32_reference("123456789") == 0xCBF43926u);
}

TEST_CASE("sha256 matches the reference") {
  CHECK(oracle::sha256_reference("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  for (const std::string& s : std::vector<std::string>{"", "abc", std::string(1000, 'x'), std::string(55, 'q'), std::string(64, 'z')}) {
    CHECK(sha256_hex(s) == oracle::sha256_reference(s));
  }
}

TEST_CASE("report bundle contents") {
  const auto& reg = ClassRegistry::delp();
  const auto preds = sample_predictions();
  std::vector<SourceImage> images{{"plan_a", cv::Mat(100, 140, CV_8UC3, cv::Scalar(250, 250, 250))},
                                  {"plan_b", cv::Mat(60, 60, CV_8UC3, cv::Scalar(250, 250, 250))}};
  const RateCard rates({{6, Money::parse("12.50")}});
  const auto zip = build_report(images, preds, reg, rates);
  const auto files = oracle::read_stored_zip(zip);
  REQUIRE(files.has_value());
  std::vector<std::string> names;
  for (const auto& f : *files) names.push_back(f.name);
  CHECK(names == std::vector<std::string>{"annotated/plan_a.png", "annotated/plan_b.png", "costs.csv",
                                          "detections.json", "summary.csv", "summary.json", "MANIFEST.json"});
  const auto manifest = nlohmann::json::parse(files->back().data);
  REQUIRE(manifest["files"].size() == files->size() - 1);
  for (std::size_t i = 0; i + 1 < files->size(); ++i) {
    CHECK(manifest["files"][i]["name"] == (*files)[i].name);
    CHECK(manifest["files"][i]["bytes"] == (*files)[i].data.size());
    CHECK(manifest["files"][i]["sha256"] == oracle::sha256_reference((*files)[i].data));
  }
  const auto& png = (*files)[0].data;
  const cv::Mat decoded = cv::imdecode(std::vector<uchar>(png.begin(), png.end()), cv::IMREAD_COLOR);
  CHECK(decoded.cols == 140);
  CHECK(build_report(images, preds, reg, rates) == zip);

  const auto no_costs = oracle::read_stored_zip(build_report(images, preds, reg, std::nullopt));
  REQUIRE(no_costs.has_value());
  CHECK(no_costs->size() == 6);
  CHECK_THROWS_AS(build_report({}, preds, reg, std::nullopt), Error);
}

TEST_CASE("palette anchors and injectivity") {
  const auto c0 = class_color(0);
  CHECK(c0.r > c0.g);
  CHECK(c0.g == c0.b);  // hue 0: red channel dominant
  std::set<std::string> hexes;
  for (int i = 0; i < 34; ++i) hexes.insert(to_hex(class_color(i)));
  CHECK(hexes.size() == 34);
}

TEST_CASE("render no-op and determinism") {
  const cv::Mat img(80, 90, CV_8UC3, cv::Scalar(10, 200, 30));
  const auto& reg = ClassRegistry::delp();
  CHECK(cv::norm(render_annotations(img, {}, reg), img, cv::NORM_INF) == 0);
  const auto dets = sample_predictions()[0].detections;
  CHECK(encode_png(render_annotations(img, dets, reg)) == encode_png(render_annotations(img, dets, reg)));
}

TEST_CASE("summary examples and recount") {
  std::vector<ImagePredictions> preds{{"x", {{{0, 0, 1, 1}, 6, 0.9}, {{0, 0, 1, 1}, 6, 0.9}, {{0, 0, 1, 1}, 6, 0.9},
                                             {{0, 0, 1, 1}, 15, 0.5}}, {}, {}}};
  const auto s = summarize(preds);
  CHECK(s.images[0].counts == std::map<int, std::size_t>{{6, 3}, {15, 1}});
  CHECK(s.total == 4);
  const std::vector<ImagePredictions> silent{{"a", {}, {}, {}}, {"b", {}, {}, {}}};
  CHECK(summarize(silent).total == 0);
  CHECK(summarize(silent).rollup.empty());

  gen::Source src(91);
  for (int t = 0; t < 100; ++t) {
    std::vector<ImagePredictions> ps;
    for (int i = src.integer(0, 6); i > 0; --i) ps.push_back({"im" + std::to_string(i), gen::detections(src, 20, 34), {}, {}});
    const auto sum = summarize(ps);
    std::map<int, std::size_t> recount;
    std::size_t total = 0;
    for (const auto& img : sum.images)
      for (const auto& [c, n] : img.counts) recount[c] += n, total += n;
    CHECK(recount == sum.rollup);
    CHECK(total == sum.total);

    std::map<int, Money> card;
    std::map<int, std::string> text;
    for (int c = 0; c < 34; ++c) {
      if (!src.chance(0.5)) continue;
      text[c] = std::to_string(src.integer(0, 2000)) + "." + std::to_string(src.integer(10, 99));
      card[c] = Money::parse(text[c]);
    }
    const auto costs = cost_breakdown(sum, RateCard(card));
    std::vector<std::pair<std::uint64_t, std::string>> pairs;
    for (const auto& [c, n] : sum.rollup)
      if (text.count(c)) pairs.emplace_back(n, text[c]);
    CHECK(costs.grand_total.to_string() == oracle::decimal_total(pairs));
  }
  std::map<int, Money> zero;
  for (int c = 0; c < 34; ++c) zero[c] = Money();
  CHECK(cost_breakdown(s, RateCard(zero)).grand_total.to_string() == "0.00");
}
