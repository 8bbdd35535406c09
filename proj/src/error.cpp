#include "skeyspot/error.hpp"

namespace skeyspot {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedAnnotation: return "MalformedAnnotation";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::OutOfRangeClass: return "OutOfRangeClass";
    case ErrorCode::InsufficientImages: return "InsufficientImages";
    case ErrorCode::UndefinedAP: return "UndefinedAP";
    case ErrorCode::UnknownImageId: return "UnknownImageId";
    case ErrorCode::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::MismatchedReports: return "MismatchedReports";
    case ErrorCode::ModelLoadError: return "ModelLoadError";
    case ErrorCode::ClassCountMismatch: return "ClassCountMismatch";
    case ErrorCode::ImageDecodeError: return "ImageDecodeError";
    case ErrorCode::AdapterShapeError: return "AdapterShapeError";
    case ErrorCode::NegativeRate: return "NegativeRate";
    case ErrorCode::EmptyReport: return "EmptyReport";
    case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
    case ErrorCode::NoValidImages: return "NoValidImages";
    case ErrorCode::UnknownJob: return "UnknownJob";
    case ErrorCode::JobNotDone: return "JobNotDone";
  }
  return "Unknown";
}

}  // namespace skeyspot
