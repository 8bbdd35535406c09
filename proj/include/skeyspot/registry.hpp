#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skeyspot {

struct ServiceKeyClass {
  int class_id = 0;
  std::string name;
  std::string slug;

  friend bool operator==(const ServiceKeyClass&, const ServiceKeyClass&) = default;
};

/// Lowercase identifier: runs of non-alphanumerics collapse to one '_'.
/// "TV - Satellite Multisocket" -> "tv_satellite_multisocket".
std::string slugify(std::string_view name);

/// Ordered catalog of service-key classes. Class ids are the positions
/// 0..size()-1, so a class id doubles as an index into the model's class
/// logits.
class ClassRegistry {
 public:
  /// Throws InvalidArgument if ids are not 0..n-1 in order or names collide
  /// case-insensitively.
  ClassRegistry(std::vector<ServiceKeyClass> classes, std::string version);

  /// The 34 DELP service keys, ids 0-33.
  static const ClassRegistry& delp();

  std::size_t size() const noexcept { return classes_.size(); }
  const std::string& version() const noexcept { return version_; }
  const std::vector<ServiceKeyClass>& classes() const noexcept { return classes_; }

  bool contains(int class_id) const noexcept;
  /// Throws OutOfRangeClass.
  const ServiceKeyClass& at(int class_id) const;
  /// Case-insensitive match on display name or slug.
  std::optional<int> find(std::string_view name) const;

  friend bool operator==(const ClassRegistry&, const ClassRegistry&) = default;

 private:
  std::vector<ServiceKeyClass> classes_;
  std::string version_;
};

}  // namespace skeyspot
