#include <doctest.h>

#include <algorithm>
#include <array>
#include <numeric>
#include <set>

#include "generators.hpp"
#include "skeyspot/dataset.hpp"
#include "skeyspot/error.hpp"

using namespace skeyspot;

namespace {

// Published per-class frequencies: {train, test}, service ids 0..33.
constexpr std::array<std::array<int, 2>, 34> kFrequencies = {{
    {14, 4},  {73, 18}, {48, 24}, {23, 0},  {42, 10}, {13, 4},  {348, 121}, {16, 5}, {32, 10},
    {5, 0},   {31, 14}, {15, 4},  {9, 5},   {17, 4},  {6, 1},   {218, 78},  {282, 87}, {151, 46},
    {42, 17}, {13, 6},  {14, 5},  {19, 4},  {34, 10}, {162, 67}, {14, 0},   {33, 9},   {33, 10},
    {2, 6},   {34, 13}, {3, 2},   {9, 0},   {78, 5},  {11, 0},  {12, 5},
}};

// Dealt round-robin: 40 train images, 13 test images.
DatasetManifest frequency_fixture() {
  DatasetManifest m;
  for (int i = 0; i < 40; ++i) m.images.push_back({"train" + std::to_string(i), "", 4000, 3000, Split::train, {}, {}});
  for (int i = 0; i < 13; ++i) m.images.push_back({"test" + std::to_string(i), "", 4000, 3000, Split::test, {}, {}});
  int slot = 0;
  for (int cls = 0; cls < 34; ++cls) {
    for (int split = 0; split < 2; ++split) {
      const int images = split == 0 ? 40 : 13, offset = split == 0 ? 0 : 40;
      for (int k = 0; k < kFrequencies[cls][split]; ++k, ++slot) {
        auto& img = m.images[static_cast<std::size_t>(offset + slot % images)];
        const double x = 10.0 * (slot % 300), y = 10.0 * (slot / 300);
        img.ground_truth.push_back({cls, {x, y, x + 8, y + 8}});
      }
    }
  }
  return m;
}

}  // namespace

TEST_CASE("split names") {
  CHECK(parse_split("train") == Split::train);
  CHECK(to_string(Split::test) == "test");
  CHECK_THROWS_AS(parse_split("holdout"), Error);
}

TEST_CASE("stats reproduce the published class frequencies") {
  const auto m = frequency_fixture();
  m.validate();
  const auto st = dataset_stats(m);
  REQUIRE(st.classes.size() == 34);
  for (int cls = 0; cls < 34; ++cls) {
    CHECK(st.classes[cls].by_split[static_cast<int>(Split::train)] == kFrequencies[cls][0]);
    CHECK(st.classes[cls].by_split[static_cast<int>(Split::test)] == kFrequencies[cls][1]);
  }
  CHECK(st.images_by_split[static_cast<int>(Split::test)] == 13);
  // The test column sums to 594 (1856 train + 594 test = 2450 instances),
  // four short of the 598 quoted alongside the overall results.
  CHECK(st.instances_by_split[static_cast<int>(Split::train)] == 1856);
  CHECK(st.instances_by_split[static_cast<int>(Split::test)] == 594);
  CHECK(st.total_instances == 2450);
  std::vector<int> absent;
  for (const auto& c : st.classes) {
    if (c.by_split[static_cast<int>(Split::test)] == 0) absent.push_back(c.class_id);
  }
  CHECK(absent == std::vector<int>{3, 9, 24, 30, 32});
}

TEST_CASE("manifest JSON round trip") {
  gen::Source s(31);
  for (int t = 0; t < 20; ++t) {
    auto m = gen::manifest(s, 8, 6, {0, 6, 23, 33});
    m.images[0].provenance = Provenance{"img1", "flip", 77};
    CHECK(parse_manifest_json(write_manifest_json(m)) == m);
  }
}

TEST_CASE("manifest validation") {
  DatasetManifest m;
  m.images.push_back({"a", "", 10, 10, Split::train, {}, {}});
  m.images.push_back({"a", "", 10, 10, Split::train, {}, {}});
  CHECK_THROWS_AS(m.validate(), Error);
  m.images[1].image_id = "b";
  m.images[1].ground_truth.push_back({40, {0, 0, 1, 1}});
  try {
    m.validate();
    FAIL("expected OutOfRangeClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutOfRangeClass);
  }
  CHECK_THROWS_AS(parse_manifest_json("[1,"), Error);
  // out-of-image boxes are clipped on load
  const auto loaded = parse_manifest_json(
      R"({"images":[{"id":"x","width":10,"height":10,"boxes":[{"class_id":1,"x_min":5,"y_min":5,"x_max":20,"y_max":8}]}]})");
  CHECK(loaded.images[0].ground_truth[0].box == BoundingBox{5, 5, 10, 8});
}

TEST_CASE("k-fold of 32 images into 5 folds") {
  DatasetManifest m;
  for (int i = 0; i < 32; ++i) m.images.push_back({"i" + std::to_string(i), "", 10, 10, Split::train, {}, {}});
  m.images.push_back({"held", "", 10, 10, Split::test, {}, {}});
  const auto folds = kfold_split(m, 5, 0.2, 42);
  REQUIRE(folds.size() == 5);
  std::multiset<std::string> all_val;
  for (const auto& f : folds) {
    CHECK((f.val.size() == 6 || f.val.size() == 7));
    CHECK(f.train.size() + f.val.size() == 32);
    all_val.insert(f.val.begin(), f.val.end());
    CHECK(std::find(f.val.begin(), f.val.end(), "held") == f.val.end());
    CHECK(std::find(f.train.begin(), f.train.end(), "held") == f.train.end());
  }
  CHECK(all_val.size() == 32);
  CHECK(std::set<std::string>(all_val.begin(), all_val.end()).size() == 32);
  CHECK(write_folds_json(kfold_split(m, 5, 0.2, 42)) == write_folds_json(folds));
  CHECK(kfold_split(m, 5, 0.2, 43) != folds);
  CHECK(parse_folds_json(write_folds_json(folds)) == folds);
}

TEST_CASE("k-fold properties") {
  gen::Source s(32);
  for (int t = 0; t < 100; ++t) {
    const int k = s.integer(2, 8);
    const int n = s.integer(k, 60);
    const double vf = s.chance(0.5) ? 1.0 / k : s.real(0.05, 0.6);
    DatasetManifest m;
    for (int i = 0; i < n; ++i) m.images.push_back({"i" + std::to_string(i), "", 10, 10, Split::train, {}, {}});
    const auto folds = kfold_split(m, k, vf, s.next());
    for (const auto& f : folds) {
      std::set<std::string> tr(f.train.begin(), f.train.end()), va(f.val.begin(), f.val.end());
      CHECK(tr.size() + va.size() == static_cast<std::size_t>(n));
      for (const auto& id : va) CHECK(tr.count(id) == 0);
      CHECK_FALSE(va.empty());
      CHECK_FALSE(tr.empty());
    }
  }
}

TEST_CASE("k-fold errors") {
  DatasetManifest m;
  for (int i = 0; i < 3; ++i) m.images.push_back({"i" + std::to_string(i), "", 10, 10, Split::train, {}, {}});
  try {
    kfold_split(m, 5, 0.2, 0);
    FAIL("expected InsufficientImages");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientImages);
  }
  CHECK_THROWS_AS(kfold_split(m, 1, 0.2, 0), Error);
  CHECK_THROWS_AS(kfold_split(m, 2, 1.0, 0), Error);
}

TEST_CASE("empty manifest statistics") {
  const auto st = dataset_stats(DatasetManifest{});
  REQUIRE(st.classes.size() == 34);
  for (const auto& c : st.classes) CHECK(c.total == 0);
  CHECK(st.total_instances == 0);
}

TEST_CASE("ten images into five folds of two") {
  DatasetManifest m;
  for (int i = 0; i < 10; ++i) m.images.push_back({"i" + std::to_string(i), "", 10, 10, Split::val, {}, {}});
  std::set<std::string> seen;
  for (const auto& f : kfold_split(m, 5, 0.2, 3)) {
    CHECK(f.val.size() == 2);
    seen.insert(f.val.begin(), f.val.end());
  }
  CHECK(seen.size() == 10);
}
