#pragma once

// Axis-aligned boxes and the search-crop coordinate mapping. Convention used
// repo-wide: x runs along columns, y along rows, origin at the top left.

#include <algorithm>
#include <cmath>

#include "vltrack/tensor.hpp"

namespace vltrack {

struct Box {
  double x = 0.0, y = 0.0;  // top-left, pixels
  double w = 0.0, h = 0.0;  // extents, pixels

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return w * h; }

  bool operator==(const Box&) const = default;
};

// Invertible mapping between a square crop and source-frame coordinates.
// Crop coordinate u maps to source center + (u - out/2) * scale.
struct CropParams {
  double center_x = 0.0, center_y = 0.0;  // crop center in source pixels
  double scale = 1.0;                     // source pixels per crop pixel
  long out = 0;                           // crop side in pixels

  static CropParams identity(long out_size) {
    return {out_size / 2.0, out_size / 2.0, 1.0, out_size};
  }

  double source_x(double u) const { return center_x + (u - out / 2.0) * scale; }
  double source_y(double v) const { return center_y + (v - out / 2.0) * scale; }
  double crop_x(double sx) const { return (sx - center_x) / scale + out / 2.0; }
  double crop_y(double sy) const { return (sy - center_y) / scale + out / 2.0; }

  Box to_source(const Box& b) const {
    return {source_x(b.x), source_y(b.y), b.w * scale, b.h * scale};
  }
  Box to_crop(const Box& b) const {
    return {crop_x(b.x), crop_y(b.y), b.w / scale, b.h / scale};
  }
};

// Intersection over union; zero for disjoint boxes.
inline double iou(const Box& a, const Box& b) {
  check(a.w > 0 && a.h > 0 && b.w > 0 && b.h > 0, "iou: extents must be positive");
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

// IoU minus the enclosure-excess ratio; equals IoU when the smallest
// enclosing box is exactly the union.
inline double giou(const Box& a, const Box& b) {
  check(a.w > 0 && a.h > 0 && b.w > 0 && b.h > 0, "giou: extents must be positive");
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  const double ex = std::max(a.x + a.w, b.x + b.w) - std::min(a.x, b.x);
  const double ey = std::max(a.y + a.h, b.y + b.h) - std::min(a.y, b.y);
  const double enclosure = ex * ey;
  return inter / uni - (enclosure - uni) / enclosure;
}

}  // namespace vltrack
