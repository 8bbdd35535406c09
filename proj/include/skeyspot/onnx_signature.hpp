#pragma once

// Reads the first graph input's declared tensor type straight from the ONNX
// protobuf, without a protobuf runtime.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skeyspot {

struct OnnxInputSignature {
  std::string name;
  int elem_type = 0;               // TensorProto.DataType; 1 = float32
  std::vector<std::int64_t> dims;  // -1 for symbolic or unset dimensions
};

/// First graph input that is not also an initializer. nullopt when the
/// bytes do not contain a graph with a tensor-typed input. Never throws on
/// malformed input.
std::optional<OnnxInputSignature> read_onnx_input_signature(std::string_view model_bytes);

}  // namespace skeyspot
