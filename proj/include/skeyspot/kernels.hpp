#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP implementation and a
// plain serial one; the serial versions are the reference the tests and the
// benchmarks compare against. Both must produce bit-identical results.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "skeyspot/geometry.hpp"

namespace skeyspot {

enum class Exec { serial, parallel };

namespace kernels {

/// Row-major |a| x |b| IoU matrix.
std::vector<double> iou_matrix(std::span<const BoundingBox> a, std::span<const BoundingBox> b,
                               Exec exec = Exec::parallel);

/// out[i] = clamp(round(in[i] * factor), 0, 255). `out` must be as long as `in`.
void scale_u8(std::span<const std::uint8_t> in, std::span<std::uint8_t> out, double factor,
              Exec exec = Exec::parallel);

/// Interleaved 8-bit BGR (rows x cols x 3, tightly packed) to planar RGB
/// float in [0,1], i.e. the NCHW layout of a single-image tensor.
void bgr_to_planar_rgb(std::span<const std::uint8_t> bgr, std::size_t rows, std::size_t cols,
                       std::span<float> planar, Exec exec = Exec::parallel);

}  // namespace kernels
}  // namespace skeyspot
