#include "skeyspot/registry.hpp"

#include <array>
#include <cctype>
#include <set>

#include "skeyspot/error.hpp"

namespace skeyspot {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Service ID order of the published per-class results table.
constexpr std::array<std::string_view, 34> kDelpNames = {
    "BT Entry Point",
    "Cat 6 Data Socket",
    "Ceiling Fan With Light Switch",
    "Ceiling Fan With Boost Switch",
    "Co-Ax TV Socket",
    "Consumer Unit",
    "Double Socket",
    "Electric Meter Box",
    "External Wall Light",
    "Fused Spur",
    "Full Height Tiling",
    "Gas Meter Box",
    "Grid Switch",
    "Hob Switch",
    "Internal Wall Light",
    "Light Switch",
    "Low Energy Downlighter",
    "Low Energy Pendant Light",
    "Mains Wired Smoke Detector",
    "Outside Socket",
    "Outside Tap",
    "Oven Switch",
    "Programmable Room Thermostat",
    "Radiator",
    "Recirculating Extractor Fan",
    "Shaver Socket",
    "Single Socket",
    "TV - Satellite Multisocket",
    "Telephone Socket",
    "Track Light",
    "Twin LED Strip Light",
    "USB Double Socket",
    "Underfloor Heating Manifold",
    "Water Entry Position",
};

}  // namespace

std::string slugify(std::string_view name) {
  std::string out;
  bool pending_sep = false;
  for (char c : name) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      if (pending_sep && !out.empty()) out.push_back('_');
      pending_sep = false;
      out.push_back(static_cast<char>(std::tolower(uc)));
    } else {
      pending_sep = true;
    }
  }
  return out;
}

ClassRegistry::ClassRegistry(std::vector<ServiceKeyClass> classes, std::string version)
    : classes_(std::move(classes)), version_(std::move(version)) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    auto& c = classes_[i];
    if (c.class_id != static_cast<int>(i)) {
      throw Error(ErrorCode::InvalidArgument,
                  "registry class ids must be 0..n-1 in order; got " + std::to_string(c.class_id) +
                      " at position " + std::to_string(i));
    }
    if (c.name.empty()) throw Error(ErrorCode::InvalidArgument, "registry class name is empty");
    if (c.slug.empty()) c.slug = slugify(c.name);
    if (!seen.insert(lower(c.name)).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate registry class name: " + c.name);
    }
  }
}

const ClassRegistry& ClassRegistry::delp() {
  static const ClassRegistry registry = [] {
    std::vector<ServiceKeyClass> classes;
    for (std::size_t i = 0; i < kDelpNames.size(); ++i) {
      classes.push_back({static_cast<int>(i), std::string(kDelpNames[i]), slugify(kDelpNames[i])});
    }
    return ClassRegistry(std::move(classes), "delp-34");
  }();
  return registry;
}

bool ClassRegistry::contains(int class_id) const noexcept {
  return class_id >= 0 && static_cast<std::size_t>(class_id) < classes_.size();
}

const ServiceKeyClass& ClassRegistry::at(int class_id) const {
  if (!contains(class_id)) {
    throw Error(ErrorCode::OutOfRangeClass,
                "class id " + std::to_string(class_id) + " outside [0," +
                    std::to_string(static_cast<int>(classes_.size()) - 1) + "]");
  }
  return classes_[static_cast<std::size_t>(class_id)];
}

std::optional<int> ClassRegistry::find(std::string_view name) const {
  const std::string needle = lower(name);
  for (const auto& c : classes_) {
    if (lower(c.name) == needle || c.slug == needle) return c.class_id;
  }
  return std::nullopt;
}

}  // namespace skeyspot
