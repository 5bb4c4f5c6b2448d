#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "uavtrack/common.hpp"

namespace uavtrack {

/// Grayscale image, row-major, one byte per pixel.
struct RasterFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RasterFrame() = default;
  RasterFrame(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }

  bool operator==(const RasterFrame&) const = default;
};

struct PreprocessLayout {
  int content_width = 0;
  int content_height = 0;
  int pad_top = 0;
  int pad_bottom = 0;
};

/// Letterbox geometry for scaling a landscape frame to target x target.
inline PreprocessLayout preprocess_layout(int width, int height, int target) {
  if (width <= 0 || height <= 0 || target <= 0) throw Error("preprocess: non-positive dimensions");
  if (height > width) throw Error("unsupported aspect");
  const double factor = static_cast<double>(target) / width;
  PreprocessLayout l;
  l.content_width = target;
  l.content_height = std::clamp(static_cast<int>(std::lround(height * factor)), 1, target);
  const int pad = target - l.content_height;
  l.pad_top = pad / 2;
  l.pad_bottom = pad - l.pad_top;
  return l;
}

/// Scales by target/width with area averaging and zero-pads rows top and
/// bottom (the odd row goes to the bottom).
inline RasterFrame preprocess_frame(const RasterFrame& frame, int target) {
  const PreprocessLayout l = preprocess_layout(frame.width, frame.height, target);
  RasterFrame out(target, target);
  const double sx = static_cast<double>(frame.width) / l.content_width;
  const double sy = static_cast<double>(frame.height) / l.content_height;
  for (int r = 0; r < l.content_height; ++r) {
    const double y0 = r * sy, y1 = (r + 1) * sy;
    const int ry0 = static_cast<int>(std::floor(y0));
    const int ry1 = std::min(frame.height, static_cast<int>(std::ceil(y1)));
    for (int c = 0; c < l.content_width; ++c) {
      const double x0 = c * sx, x1 = (c + 1) * sx;
      const int cx0 = static_cast<int>(std::floor(x0));
      const int cx1 = std::min(frame.width, static_cast<int>(std::ceil(x1)));
      double acc = 0.0, area = 0.0;
      for (int yy = ry0; yy < ry1; ++yy) {
        const double wy = std::min<double>(yy + 1, y1) - std::max<double>(yy, y0);
        if (wy <= 0.0) continue;
        for (int xx = cx0; xx < cx1; ++xx) {
          const double wx = std::min<double>(xx + 1, x1) - std::max<double>(xx, x0);
          if (wx <= 0.0) continue;
          acc += wx * wy * frame.at(yy, xx);
          area += wx * wy;
        }
      }
      const double v = area > 0.0 ? acc / area : 0.0;
      out.at(r + l.pad_top, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

}  // namespace uavtrack
