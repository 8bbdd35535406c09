#include "skeyspot/kernels.hpp"

#include <cmath>

#include "skeyspot/error.hpp"

namespace skeyspot::kernels {

std::vector<double> iou_matrix(std::span<const BoundingBox> a, std::span<const BoundingBox> b,
                               Exec exec) {
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(a.size());
  const std::size_t cols = b.size();
  std::vector<double> out(a.size() * cols);
  if (exec == Exec::serial) {
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = iou(a[i], b[j]);
    }
    return out;
  }
#pragma omp parallel for schedule(static) if (rows * static_cast<std::ptrdiff_t>(cols) > 4096)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = iou(a[i], b[j]);
  }
  return out;
}

namespace {

inline std::uint8_t scale_one(std::uint8_t v, double factor) {
  const double s = std::round(static_cast<double>(v) * factor);
  if (s <= 0.0) return 0;
  if (s >= 255.0) return 255;
  return static_cast<std::uint8_t>(s);
}

}  // namespace

void scale_u8(std::span<const std::uint8_t> in, std::span<std::uint8_t> out, double factor,
              Exec exec) {
  if (out.size() != in.size()) throw Error(ErrorCode::InvalidArgument, "scale_u8: size mismatch");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());
  if (exec == Exec::serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = scale_one(in[i], factor);
    return;
  }
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = scale_one(in[i], factor);
}

void bgr_to_planar_rgb(std::span<const std::uint8_t> bgr, std::size_t rows, std::size_t cols,
                       std::span<float> planar, Exec exec) {
  const std::size_t plane = rows * cols;
  if (bgr.size() != plane * 3 || planar.size() != plane * 3) {
    throw Error(ErrorCode::InvalidArgument, "bgr_to_planar_rgb: size mismatch");
  }
  constexpr float kInv = 1.0f / 255.0f;
  float* r = planar.data();
  float* g = r + plane;
  float* b = g + plane;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(plane);
  if (exec == Exec::serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      b[i] = bgr[3 * i] * kInv;
      g[i] = bgr[3 * i + 1] * kInv;
      r[i] = bgr[3 * i + 2] * kInv;
    }
    return;
  }
#pragma omp parallel for schedule(static) if (n > 16384)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    b[i] = bgr[3 * i] * kInv;
    g[i] = bgr[3 * i + 1] * kInv;
    r[i] = bgr[3 * i + 2] * kInv;
  }
}

}  // namespace skeyspot::kernels
