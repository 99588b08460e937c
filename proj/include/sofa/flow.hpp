#pragma once

// Block-matching optic flow on a fixed grid of square blocks, plus the
// nearest-neighbour smoothing pass applied before event detection.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <vector>

#include "sofa/error.hpp"
#include "sofa/frame.hpp"

namespace sofa {

struct FlowParams {
  int block_size = 8;
  int grid_cols = 40;
  int grid_rows = 30;
  int search_radius = 4;

  int frame_width() const { return block_size * grid_cols; }
  int frame_height() const { return block_size * grid_rows; }

  void validate() const {
    if (block_size < 1 || grid_cols < 1 || grid_rows < 1)
      throw ValidationError("optic-flow", "block_size and grid dimensions must be positive");
    if (search_radius < 1) throw ValidationError("optic-flow", "search_radius must be >= 1");
  }
};

template <typename T>
struct BasicFlowVector {
  T dx{};
  T dy{};  // positive = image-down
  friend bool operator==(const BasicFlowVector&, const BasicFlowVector&) = default;
};

template <typename T>
struct BasicFlowField {
  FlowParams params;
  std::vector<BasicFlowVector<T>> vectors;  // grid_rows x grid_cols, row-major
  std::int64_t frame_no = 0;

  BasicFlowField() = default;
  explicit BasicFlowField(const FlowParams& p, std::int64_t no = 0)
      : params(p),
        vectors(static_cast<std::size_t>(p.grid_rows) * p.grid_cols),
        frame_no(no) {}

  int cols() const { return params.grid_cols; }
  int rows() const { return params.grid_rows; }
  BasicFlowVector<T>& at(int col, int row) {
    return vectors[static_cast<std::size_t>(row) * params.grid_cols + col];
  }
  const BasicFlowVector<T>& at(int col, int row) const {
    return vectors[static_cast<std::size_t>(row) * params.grid_cols + col];
  }
};

/// Raw block-matching output: integer pixel displacements.
using FlowVector = BasicFlowVector<int>;
using FlowField = BasicFlowField<int>;
/// Smoothed field: real-valued components.
using SmoothFlowVector = BasicFlowVector<double>;
using SmoothFlowField = BasicFlowField<double>;

struct PixelPoint {
  int x = 0;
  int y = 0;
};

/// L1 block cost between prev at `origin` and curr at `origin + d`.
inline std::uint32_t sad(const GrayFrame& prev, const GrayFrame& curr, PixelPoint origin,
                         FlowVector d, int block_size = 8) {
  const int cx = origin.x + d.dx;
  const int cy = origin.y + d.dy;
  auto inside = [block_size](const GrayFrame& f, int x, int y) {
    return x >= 0 && y >= 0 && x + block_size <= f.width && y + block_size <= f.height;
  };
  if (!inside(prev, origin.x, origin.y) || !inside(curr, cx, cy))
    throw OutOfBounds("optic-flow", "sad block exits the frame");
  std::uint32_t acc = 0;
  for (int y = 0; y < block_size; ++y) {
    const std::uint8_t* a = prev.row(origin.y + y) + origin.x;
    const std::uint8_t* b = curr.row(cy + y) + cx;
    for (int x = 0; x < block_size; ++x)
      acc += static_cast<std::uint32_t>(std::abs(int{a[x]} - int{b[x]}));
  }
  return acc;
}

namespace detail {

// Candidate displacements in tie-break priority: smaller dx^2+dy^2 first,
// then raster order (dy, then dx ascending).
inline std::vector<FlowVector> search_order(int radius) {
  std::vector<FlowVector> order;
  order.reserve(static_cast<std::size_t>(2 * radius + 1) * (2 * radius + 1));
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) order.push_back({dx, dy});
  std::stable_sort(order.begin(), order.end(), [](FlowVector a, FlowVector b) {
    return a.dx * a.dx + a.dy * a.dy < b.dx * b.dx + b.dy * b.dy;
  });
  return order;
}

// SAD with early exit once the partial sum reaches `bound`.
inline std::uint32_t sad_bounded(const std::uint8_t* a, const std::uint8_t* b, int stride,
                                 int block_size, std::uint32_t bound) {
  std::uint32_t acc = 0;
  for (int y = 0; y < block_size; ++y) {
    const std::uint8_t* ra = a + static_cast<std::ptrdiff_t>(y) * stride;
    const std::uint8_t* rb = b + static_cast<std::ptrdiff_t>(y) * stride;
    for (int x = 0; x < block_size; ++x)
      acc += static_cast<std::uint32_t>(std::abs(int{ra[x]} - int{rb[x]}));
    if (acc >= bound) return acc;
  }
  return acc;
}

}  // namespace detail

/// Dense flow from prev to curr: each vector is where the block moved.
inline FlowField compute_flow(const GrayFrame& prev, const GrayFrame& curr,
                              const FlowParams& params) {
  params.validate();
  if (prev.width != curr.width || prev.height != curr.height ||
      prev.width != params.frame_width() || prev.height != params.frame_height())
    throw DimensionMismatch("optic-flow", "frame dimensions do not match the flow grid");

  const int bs = params.block_size;
  const int w = curr.width, h = curr.height;
  const auto order = detail::search_order(params.search_radius);
  FlowField field(params, curr.frame_no);

  for (int row = 0; row < params.grid_rows; ++row) {
    for (int col = 0; col < params.grid_cols; ++col) {
      const int ox = col * bs, oy = row * bs;
      const std::uint8_t* block = prev.row(oy) + ox;
      std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
      FlowVector best_d{};
      for (const FlowVector d : order) {
        const int cx = ox + d.dx, cy = oy + d.dy;
        if (cx < 0 || cy < 0 || cx + bs > w || cy + bs > h) continue;
        // Only a strictly smaller cost may displace an earlier candidate.
        const std::uint32_t cost = detail::sad_bounded(block, curr.row(cy) + cx, w, bs, best);
        if (cost < best) {
          best = cost;
          best_d = d;
          if (best == 0) break;
        }
      }
      field.at(col, row) = best_d;
    }
  }
  return field;
}

/// 3x3 box average, normalized over the in-grid neighbours at edges.
template <typename T>
SmoothFlowField smooth(const BasicFlowField<T>& field) {
  SmoothFlowField out(field.params, field.frame_no);
  const int cols = field.cols(), rows = field.rows();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double sx = 0.0, sy = 0.0;
      int n = 0;
      for (int rr = std::max(0, r - 1); rr <= std::min(rows - 1, r + 1); ++rr) {
        for (int cc = std::max(0, c - 1); cc <= std::min(cols - 1, c + 1); ++cc) {
          sx += static_cast<double>(field.at(cc, rr).dx);
          sy += static_cast<double>(field.at(cc, rr).dy);
          ++n;
        }
      }
      out.at(c, r) = {sx / n, sy / n};
    }
  }
  return out;
}

/// Debug dump: one "row col dx dy" line per cell.
template <typename T>
void dump_flow(std::ostream& os, const BasicFlowField<T>& field) {
  for (int r = 0; r < field.rows(); ++r)
    for (int c = 0; c < field.cols(); ++c)
      os << r << ' ' << c << ' ' << field.at(c, r).dx << ' ' << field.at(c, r).dy << '\n';
}

}  // namespace sofa
