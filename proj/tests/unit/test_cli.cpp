#include <doctest.h>

#include <filesystem>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "process.hpp"
#include "skeyspot/dataset.hpp"
#include "skeyspot/io.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;
using proc::quote;

namespace {

const std::string kCli = SKEYSPOT_CLI;

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / ("skeyspot_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string p(const std::string& rel) const { return quote((dir / rel).string()); }
};

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(proc::run(kCli, "").exit_code == 2);
  CHECK(proc::run(kCli, "bogus").exit_code == 2);
  CHECK(proc::run(kCli, "infer --conf 3 a b").exit_code == 2);
  CHECK(proc::run(kCli, "--help").exit_code == 0);
}

TEST_CASE("domain errors exit with 1 and a JSON error") {
  Workspace ws("errors");
  const auto r = proc::run(kCli, "stats " + ws.p("missing.json"));
  CHECK(r.exit_code == 1);
  const auto err = json::parse(r.err);
  CHECK(err["error"]["code"] == "IoError");
  skeyspot::write_file(ws.dir / "bad.json", "{\"images\": 3}");
  CHECK(json::parse(proc::run(kCli, "stats " + ws.p("bad.json")).err)["error"]["code"] == "MalformedAnnotation");
}

TEST_CASE("stats and split") {
  Workspace ws("stats");
  const auto m = fixture::write_plans(ws.dir, 12, 1);
  const auto table = proc::run(kCli, "stats " + ws.p("manifest.json"));
  REQUIRE(table.exit_code == 0);
  CHECK(table.out.find("Double Socket") != std::string::npos);
  const auto js = proc::run(kCli, "stats --format json " + ws.p("manifest.json"));
  const auto doc = json::parse(js.out);
  CHECK(doc["images"]["test"] == 3);
  const auto st = skeyspot::dataset_stats(m);
  CHECK(doc["total_instances"] == st.total_instances);

  const auto a = proc::run(kCli, "split " + ws.p("manifest.json") + " --k 3 --seed 7");
  const auto b = proc::run(kCli, "split " + ws.p("manifest.json") + " --k 3 --seed 7 --out " + ws.p("folds.json"));
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  CHECK(a.out == skeyspot::read_file(ws.dir / "folds.json"));
  CHECK(json::parse(a.out).size() == 3);
  const auto too_many = proc::run(kCli, "split " + ws.p("manifest.json") + " --k 20");
  CHECK(too_many.exit_code == 1);
  CHECK(json::parse(too_many.err)["error"]["code"] == "InsufficientImages");
}

TEST_CASE("infer, eval and report through the ground-truth stub") {
  Workspace ws("pipeline");
  fixture::write_plans(ws.dir, 8, 2);
  const auto infer = proc::run(kCli, "infer --adapter gt-stub " + ws.p("manifest.json") + " " + ws.p("images") +
                                         " --out " + ws.p("preds.json"));
  REQUIRE(infer.exit_code == 0);
  const auto eval = proc::run(kCli, "eval " + ws.p("preds.json") + " " + ws.p("manifest.json"));
  REQUIRE(eval.exit_code == 0);
  const auto report = json::parse(eval.out);
  CHECK(report["mAP50"] == 1.0);
  CHECK(report["mAP50_95"] == 1.0);
  const auto test_only = json::parse(proc::run(kCli, "eval --split test " + ws.p("preds.json") + " " + ws.p("manifest.json")).out);
  CHECK(test_only["image_count"] == 2);

  const auto csv = proc::run(kCli, "infer --adapter gt-stub --format csv " + ws.p("manifest.json") + " " +
                                       ws.p("images/plan_0.png"));
  CHECK(csv.out.rfind("image_id,class_id,name,confidence,x_min,y_min,x_max,y_max\n", 0) == 0);

  skeyspot::write_file(ws.dir / "rates.json", R"({"6": "12.50", "Radiator": 80})");
  const auto rep = proc::run(kCli, "report " + ws.p("preds.json") + " " + ws.p("images") + " --rates " +
                                       ws.p("rates.json") + " --out " + ws.p("bundle.zip"));
  REQUIRE(rep.exit_code == 0);
  const auto files = oracle::read_stored_zip(skeyspot::read_file(ws.dir / "bundle.zip"));
  REQUIRE(files.has_value());
  CHECK(files->size() == 8 + 5);

  skeyspot::write_file(ws.dir / "neg.json", R"({"6": -1})");
  const auto neg = proc::run(kCli, "report " + ws.p("preds.json") + " " + ws.p("images") + " --rates " +
                                       ws.p("neg.json") + " --out " + ws.p("x.zip"));
  CHECK(neg.exit_code == 1);
  CHECK(json::parse(neg.err)["error"]["code"] == "NegativeRate");
}

TEST_CASE("fold evaluation") {
  Workspace ws("folds");
  const auto m = fixture::write_plans(ws.dir, 10, 3);
  REQUIRE(proc::run(kCli, "split " + ws.p("manifest.json") + " --k 2 --val-frac 0.5 --out " + ws.p("folds.json")).exit_code == 0);
  const auto folds = skeyspot::parse_folds_json(skeyspot::read_file(ws.dir / "folds.json"));
  // perfect predictions per fold
  json per_fold = json::array();
  for (const auto& f : folds) {
    json arr = json::array();
    for (const auto& id : f.val) {
      json dets = json::array();
      for (const auto& g : m.find(id)->ground_truth) {
        dets.push_back({{"class_id", g.class_id}, {"confidence", 0.9}, {"box", {g.box.x_min, g.box.y_min, g.box.x_max, g.box.y_max}}});
      }
      arr.push_back({{"image_id", id}, {"detections", dets}});
    }
    per_fold.push_back(arr);
  }
  skeyspot::write_file(ws.dir / "fold_preds.json", per_fold.dump());
  const auto r = proc::run(kCli, "eval " + ws.p("fold_preds.json") + " " + ws.p("manifest.json") + " --folds " +
                                     ws.p("folds.json"));
  REQUIRE(r.exit_code == 0);
  CHECK(json::parse(r.out)["mAP50"] == 1.0);
}

TEST_CASE("augment writes derived images next to the new manifest") {
  Workspace ws("augment");
  fixture::write_plans(ws.dir, 4, 4);
  const auto r = proc::run(kCli, "augment " + ws.p("manifest.json") + " --seed 3 --out " + ws.p("out/aug.json"));
  REQUIRE(r.exit_code == 0);
  const auto aug = skeyspot::load_manifest(ws.dir / "out/aug.json");
  CHECK(aug.images.size() == 4 + 3 * 4);
  for (const auto& img : aug.images) CHECK(fs::exists(ws.dir / "out" / img.path));
}
