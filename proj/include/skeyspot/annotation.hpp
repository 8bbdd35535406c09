#pragma once

// Annotation interchange: LabelImg Pascal-VOC XML, YOLO txt and a COCO
// detection subset. All three convert to and from the internal half-open
// pixel boxes.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skeyspot/dataset.hpp"
#include "skeyspot/error.hpp"

namespace skeyspot {

/// Non-fatal problem found while parsing; the offending item was skipped.
struct AnnotationIssue {
  ErrorCode code;
  std::string message;
};

struct VocParseResult {
  ImageRecord record;
  std::vector<AnnotationIssue> issues;
};

/// VOC coordinates are 1-based inclusive pixels: xmin=11..xmax=50 covers the
/// half-open range [10,50). Objects with unknown names are reported as
/// UnknownClass issues and skipped; boxes that clip to nothing are reported
/// and skipped. A missing <size> or malformed <object> throws
/// MalformedAnnotation. The image id is the file stem of <filename>.
VocParseResult parse_voc(std::string_view xml_text, const ClassRegistry& registry);
std::string write_voc(const ImageRecord& record, const ClassRegistry& registry);

struct YoloParseResult {
  std::vector<GroundTruthBox> boxes;
  std::vector<AnnotationIssue> issues;  // dropped degenerate boxes
};

/// One "class_id cx cy w h" line per box, normalized to the image size.
/// Throws MalformedAnnotation (field count, non-numeric) and OutOfRangeClass.
YoloParseResult parse_yolo(std::string_view text, const ClassRegistry& registry, int width, int height);
std::string write_yolo(std::span<const GroundTruthBox> boxes, int width, int height);

/// COCO subset. Category ids are the registry class ids; image ids and
/// annotation ids are assigned sequentially from 1. Two optional image keys,
/// "image_key" and "split", carry the manifest's image id and split tag so
/// the round trip is lossless.
std::string write_coco(const DatasetManifest& manifest);
/// Categories become the registry (re-indexed by ascending category id).
/// Annotations referencing unknown categories throw UnknownClass; unknown
/// image ids throw MalformedAnnotation.
DatasetManifest parse_coco(std::string_view json_text);

}  // namespace skeyspot
