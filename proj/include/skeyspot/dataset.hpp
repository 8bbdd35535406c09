#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skeyspot/geometry.hpp"
#include "skeyspot/registry.hpp"

namespace skeyspot {

enum class Split { train, val, test, none };

std::string_view to_string(Split split) noexcept;
/// Throws MalformedAnnotation on anything but train/val/test/none.
Split parse_split(std::string_view text);

struct GroundTruthBox {
  int class_id = 0;
  BoundingBox box;

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

/// Where an augmented record came from.
struct Provenance {
  std::string source_id;
  std::string transform;
  std::uint64_t seed = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ImageRecord {
  std::string image_id;
  std::string path;  // relative to the manifest's directory
  int width = 0;
  int height = 0;
  Split split = Split::none;
  std::vector<GroundTruthBox> ground_truth;
  std::optional<Provenance> provenance;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DatasetManifest {
  ClassRegistry registry = ClassRegistry::delp();
  std::vector<ImageRecord> images;

  /// nullptr when absent.
  const ImageRecord* find(std::string_view image_id) const noexcept;

  /// Checks unique image ids, positive sizes, resolvable classes and
  /// in-bounds boxes. Throws MalformedAnnotation / OutOfRangeClass.
  void validate() const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// {version, registry:[{id,name,slug}], images:[{id,path,width,height,split,boxes:[...]}]}
std::string write_manifest_json(const DatasetManifest& manifest);
/// Boxes are clipped to their image on load; boxes that clip to nothing are
/// dropped. Throws MalformedAnnotation / OutOfRangeClass.
DatasetManifest parse_manifest_json(std::string_view json_text);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Statistics

struct ClassFrequency {
  int class_id = 0;
  std::array<std::size_t, 4> by_split{};  // indexed by Split
  std::size_t total = 0;
};

struct DatasetStats {
  std::vector<ClassFrequency> classes;      // one row per registry class
  std::array<std::size_t, 4> images_by_split{};
  std::array<std::size_t, 4> instances_by_split{};
  std::size_t total_instances = 0;
};

DatasetStats dataset_stats(const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Folds

struct FoldSpec {
  int fold_index = 0;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::uint64_t seed = 0;

  friend bool operator==(const FoldSpec&, const FoldSpec&) = default;
};

/// Image-level k-fold split of the non-test images.
///
/// The non-test ids are shuffled with `seed`. When `val_fraction` is 1/k the
/// shuffled order is cut into k contiguous blocks (sizes differ by at most
/// one) and block i is fold i's validation set, so the validation sets
/// partition the non-test images. Otherwise each fold takes
/// round(val_fraction * n) consecutive ids starting at block i's offset,
/// wrapping around. Id lists keep manifest order.
///
/// Throws InvalidArgument (k < 2, val_fraction outside (0,1)) and
/// InsufficientImages (fewer than k non-test images).
std::vector<FoldSpec> kfold_split(const DatasetManifest& manifest, int k, double val_fraction,
                                  std::uint64_t seed);

std::string write_folds_json(const std::vector<FoldSpec>& folds);
/// Throws MalformedAnnotation.
std::vector<FoldSpec> parse_folds_json(std::string_view json_text);

}  // namespace skeyspot
