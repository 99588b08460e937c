#pragma once

// Face localization: multi-scale cascade scan with neighbour grouping, and a
// static detector that replays fixed or sidecar rectangles.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sofa/cascade.hpp"
#include "sofa/error.hpp"
#include "sofa/frame.hpp"
#include "sofa/integral_image.hpp"

namespace sofa {

struct FaceROI {
  Rect rect;
  std::int64_t frame_no = 0;

  int width() const { return rect.w; }
  friend bool operator==(const FaceROI&, const FaceROI&) = default;
};

struct ScanParams {
  double scale_factor = 1.25;
  int min_face_width = 80;
  double shift_step = 0.05;  // fraction of the window width, at least 1 px
  int min_neighbors = 3;
  double group_iou = 0.3;

  void validate() const {
    if (!(scale_factor > 1.0)) throw ValidationError("face-detect", "scale_factor must be > 1");
    if (min_face_width <= 0) throw ValidationError("face-detect", "min_face_width must be > 0");
    if (!(shift_step > 0)) throw ValidationError("face-detect", "shift_step must be > 0");
    if (min_neighbors < 1) throw ValidationError("face-detect", "min_neighbors must be >= 1");
  }
};

namespace detail {

// Single-linkage clusters over IoU >= threshold; returns cluster id per rect.
inline std::vector<std::size_t> cluster_rects(const std::vector<Rect>& rects, double threshold) {
  std::vector<std::size_t> parent(rects.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < rects.size(); ++i)
    for (std::size_t j = i + 1; j < rects.size(); ++j)
      if (iou(rects[i], rects[j]) >= threshold) {
        const auto a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
  std::vector<std::size_t> id(rects.size());
  for (std::size_t i = 0; i < rects.size(); ++i) id[i] = find(i);
  return id;
}

}  // namespace detail

/// Multi-scale cascade detector. Scaled feature tables are cached per window
/// size, so one instance should be reused across frames.
class CascadeDetector {
public:
  CascadeDetector(std::shared_ptr<const Cascade> cascade, ScanParams scan)
      : cascade_(std::move(cascade)), scan_(scan) {
    scan_.validate();
    cascade_->validate();
  }

  /// All accepted windows, scanned smallest scale first, raster order.
  std::vector<Rect> scan_windows(const GrayFrame& frame) {
    const IntegralImage ii(frame);
    std::vector<Rect> hits;
    const double aspect = static_cast<double>(cascade_->base_height) / cascade_->base_width;
    for (double ww = scan_.min_face_width;; ww *= scan_.scale_factor) {
      const int w = round_half_up(ww);
      const int h = round_half_up(w * aspect);
      if (w > frame.width || h > frame.height) break;
      const auto& scaled = scaled_for(w, h);
      const int step = std::max(1, round_half_up(scan_.shift_step * w));
      for (int y = 0; y + h <= frame.height; y += step)
        for (int x = 0; x + w <= frame.width; x += step)
          if (scaled.accepts(ii, x, y)) hits.push_back({x, y, w, h});
    }
    return hits;
  }

  std::optional<FaceROI> detect(const GrayFrame& frame) {
    const auto hits = scan_windows(frame);
    if (hits.empty()) return std::nullopt;
    const auto ids = detail::cluster_rects(hits, scan_.group_iou);

    struct Acc {
      long long x = 0, y = 0, w = 0, h = 0;
      int n = 0;
    };
    std::vector<Acc> acc(hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
      auto& a = acc[ids[i]];
      a.x += hits[i].x;
      a.y += hits[i].y;
      a.w += hits[i].w;
      a.h += hits[i].h;
      ++a.n;
    }
    std::optional<Rect> best;
    for (const auto& a : acc) {
      if (a.n < scan_.min_neighbors) continue;
      const auto avg = [&](long long v) { return round_half_up(static_cast<double>(v) / a.n); };
      const Rect r{avg(a.x), avg(a.y), avg(a.w), avg(a.h)};
      if (!best || r.w > best->w) best = r;
    }
    if (!best || best->w < scan_.min_face_width) return std::nullopt;
    return FaceROI{*best, frame.frame_no};
  }

  const ScanParams& scan() const { return scan_; }

private:
  const ScaledCascade& scaled_for(int w, int h) {
    for (const auto& s : cache_)
      if (s->window_width() == w && s->window_height() == h) return *s;
    cache_.push_back(std::make_unique<ScaledCascade>(*cascade_, w, h));
    return *cache_.back();
  }

  std::shared_ptr<const Cascade> cascade_;
  ScanParams scan_;
  std::vector<std::unique_ptr<ScaledCascade>> cache_;
};

inline std::optional<FaceROI> detect(const GrayFrame& frame, const Cascade& cascade,
                                     const ScanParams& scan) {
  CascadeDetector det(std::make_shared<const Cascade>(cascade), scan);
  return det.detect(frame);
}

/// Replays a fixed rect, or one rect per frame from a sidecar list.
class StaticDetector {
public:
  explicit StaticDetector(Rect fixed) : fixed_(fixed) {}
  explicit StaticDetector(std::vector<Rect> per_frame) : sidecar_(std::move(per_frame)) {}

  FaceROI detect(const GrayFrame& frame) const {
    Rect r;
    if (fixed_) {
      r = *fixed_;
    } else {
      if (frame.frame_no < 0 || static_cast<std::size_t>(frame.frame_no) >= sidecar_.size())
        throw SidecarExhausted("face-detect", "no sidecar rect for frame " +
                                                  std::to_string(frame.frame_no));
      r = sidecar_[static_cast<std::size_t>(frame.frame_no)];
    }
    if (r.x < 0 || r.y < 0 || r.w < 0 || r.h < 0 || r.right() > frame.width ||
        r.bottom() > frame.height)
      throw OutOfBounds("face-detect", "static ROI outside frame");
    return {r, frame.frame_no};
  }

private:
  std::optional<Rect> fixed_;
  std::vector<Rect> sidecar_;
};

inline StaticDetector static_detector(Rect fixed) { return StaticDetector(fixed); }
inline StaticDetector static_detector(std::vector<Rect> sidecar) {
  return StaticDetector(std::move(sidecar));
}

/// Sidecar file: one "x y w h" line per frame; '#' starts a comment.
inline std::vector<Rect> read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("face-detect", "cannot open sidecar " + path.string());
  std::vector<Rect> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    Rect r;
    if (!(ss >> r.x)) continue;
    if (!(ss >> r.y >> r.w >> r.h))
      throw FormatError("face-detect", "bad sidecar line: " + line);
    out.push_back(r);
  }
  return out;
}

}  // namespace sofa
