#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "sofa/error.hpp"
#include "sofa/frame.hpp"

namespace sofa {

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  long long area() const { return static_cast<long long>(w) * h; }
  bool empty() const { return w <= 0 || h <= 0; }
  bool contains(int px, int py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

inline double iou(const Rect& a, const Rect& b) {
  const int ix = std::max(0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.area() + b.area()) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Summed-area tables of pixel values and squared pixel values. Entry (x,y)
/// holds the sum over all pixels strictly above and left of (x,y).
class IntegralImage {
public:
  IntegralImage() = default;

  explicit IntegralImage(const GrayFrame& frame)
      : width_(frame.width), height_(frame.height),
        sum_(static_cast<std::size_t>(width_ + 1) * (height_ + 1), 0),
        sq_(sum_.size(), 0) {
    const std::size_t stride = static_cast<std::size_t>(width_) + 1;
    for (int y = 0; y < height_; ++y) {
      std::int64_t row = 0, row_sq = 0;
      const std::uint8_t* px = frame.row(y);
      for (int x = 0; x < width_; ++x) {
        const std::int64_t v = px[x];
        row += v;
        row_sq += v * v;
        sum_[(y + 1) * stride + x + 1] = sum_[y * stride + x + 1] + row;
        sq_[(y + 1) * stride + x + 1] = sq_[y * stride + x + 1] + row_sq;
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }

  std::int64_t table(int x, int y) const {
    return sum_[static_cast<std::size_t>(y) * (width_ + 1) + x];
  }

  /// Sum of pixels in r via four lookups.
  std::int64_t rect_sum(const Rect& r) const {
    check(r);
    return lookup(sum_, r);
  }
  std::int64_t rect_sq_sum(const Rect& r) const {
    check(r);
    return lookup(sq_, r);
  }

  // Unchecked variants for the scan loop, where bounds are established once
  // per window.
  std::int64_t rect_sum_unchecked(const Rect& r) const { return lookup(sum_, r); }
  std::int64_t rect_sq_sum_unchecked(const Rect& r) const { return lookup(sq_, r); }

private:
  void check(const Rect& r) const {
    if (r.x < 0 || r.y < 0 || r.w < 0 || r.h < 0 || r.right() > width_ || r.bottom() > height_)
      throw OutOfBounds("face-detect", "rect outside integral image");
  }

  std::int64_t lookup(const std::vector<std::int64_t>& t, const Rect& r) const {
    const std::size_t stride = static_cast<std::size_t>(width_) + 1;
    const std::size_t top = static_cast<std::size_t>(r.y) * stride;
    const std::size_t bot = static_cast<std::size_t>(r.bottom()) * stride;
    return t[bot + r.right()] - t[bot + r.x] - t[top + r.right()] + t[top + r.x];
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::int64_t> sum_;
  std::vector<std::int64_t> sq_;
};

inline IntegralImage integral_image(const GrayFrame& frame) { return IntegralImage(frame); }

inline std::int64_t rect_sum(const IntegralImage& ii, const Rect& r) { return ii.rect_sum(r); }

}  // namespace sofa
