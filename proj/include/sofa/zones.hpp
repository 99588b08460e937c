#pragma once

// Seven facial zones at fixed fractions of the face rectangle, grid-cell
// labelling, and the per-zone salient motion measure.

#include <array>
#include <cmath>
#include <optional>
#include <string_view>

#include "sofa/cascade.hpp"
#include "sofa/detect.hpp"
#include "sofa/flow.hpp"

namespace sofa {

enum class ZoneLabel { BrowL, BrowR, EyeL, EyeR, CheekL, CheekR, Mouth };
enum class ZoneGroup { Brow, Eye, Cheek, Mouth };

inline constexpr std::array<ZoneLabel, 7> kAllZones = {
    ZoneLabel::BrowL,  ZoneLabel::BrowR,  ZoneLabel::EyeL, ZoneLabel::EyeR,
    ZoneLabel::CheekL, ZoneLabel::CheekR, ZoneLabel::Mouth};

constexpr ZoneGroup group_of(ZoneLabel l) {
  switch (l) {
    case ZoneLabel::BrowL:
    case ZoneLabel::BrowR: return ZoneGroup::Brow;
    case ZoneLabel::EyeL:
    case ZoneLabel::EyeR: return ZoneGroup::Eye;
    case ZoneLabel::CheekL:
    case ZoneLabel::CheekR: return ZoneGroup::Cheek;
    case ZoneLabel::Mouth: return ZoneGroup::Mouth;
  }
  return ZoneGroup::Mouth;
}

constexpr std::string_view to_string(ZoneLabel l) {
  constexpr std::array<std::string_view, 7> names = {"BrowL",  "BrowR",  "EyeL", "EyeR",
                                                     "CheekL", "CheekR", "Mouth"};
  return names[static_cast<std::size_t>(l)];
}

constexpr std::string_view to_string(ZoneGroup g) {
  constexpr std::array<std::string_view, 4> names = {"brow", "eye", "cheek", "mouth"};
  return names[static_cast<std::size_t>(g)];
}

inline std::optional<ZoneGroup> group_from_string(std::string_view s) {
  for (auto g : {ZoneGroup::Brow, ZoneGroup::Eye, ZoneGroup::Cheek, ZoneGroup::Mouth})
    if (to_string(g) == s) return g;
  return std::nullopt;
}

inline std::optional<ZoneLabel> label_from_string(std::string_view s) {
  for (auto l : kAllZones)
    if (to_string(l) == s) return l;
  return std::nullopt;
}

/// Zone rectangle as fractions [x0,x1) x [y0,y1) of the face rectangle.
struct ZoneFraction {
  double x0, y0, x1, y1;
};

struct ZoneGeometry {
  // Indexed by ZoneLabel. Image-left is "L".
  std::array<ZoneFraction, 7> fractions = {{
      {0.08, 0.18, 0.50, 0.32},  // BrowL
      {0.50, 0.18, 0.92, 0.32},  // BrowR
      {0.08, 0.32, 0.50, 0.48},  // EyeL
      {0.50, 0.32, 0.92, 0.48},  // EyeR
      {0.08, 0.48, 0.50, 0.80},  // CheekL
      {0.50, 0.48, 0.92, 0.80},  // CheekR
      {0.30, 0.62, 0.70, 0.88},  // Mouth
  }};
  bool eyes_use_magnitude = false;

  ZoneFraction& operator[](ZoneLabel l) { return fractions[static_cast<std::size_t>(l)]; }
  const ZoneFraction& operator[](ZoneLabel l) const {
    return fractions[static_cast<std::size_t>(l)];
  }
};

struct Zone {
  ZoneLabel label;
  Rect rect;
  ZoneGroup group() const { return group_of(label); }
};

struct ZoneLayout {
  FaceROI roi;
  std::array<Zone, 7> zones;

  const Zone& operator[](ZoneLabel l) const { return zones[static_cast<std::size_t>(l)]; }
};

/// Origin and size are each rounded half-up from their fractional values.
inline ZoneLayout compute_zones(const FaceROI& roi, const ZoneGeometry& geo = {}) {
  ZoneLayout layout{roi, {}};
  const double w = roi.rect.w, h = roi.rect.h;
  for (auto l : kAllZones) {
    const auto& f = geo[l];
    Rect r{roi.rect.x + round_half_up(f.x0 * w), roi.rect.y + round_half_up(f.y0 * h),
           round_half_up((f.x1 - f.x0) * w), round_half_up((f.y1 - f.y0) * h)};
    layout.zones[static_cast<std::size_t>(l)] = {l, r};
  }
  return layout;
}

/// Grid cell -> zone label by its centre pixel; Mouth takes precedence.
inline std::optional<ZoneLabel> classify_point(const ZoneLayout& layout, int col, int row,
                                               int block_size = 8) {
  const int px = col * block_size + block_size / 2;
  const int py = row * block_size + block_size / 2;
  if (layout[ZoneLabel::Mouth].rect.contains(px, py)) return ZoneLabel::Mouth;
  for (auto l : kAllZones) {
    if (l == ZoneLabel::Mouth) continue;
    if (layout[l].rect.contains(px, py)) return l;
  }
  return std::nullopt;
}

/// Brows (and eyes unless configured otherwise) react to vertical motion only.
inline double salient_value(ZoneGroup group, SmoothFlowVector v, bool eyes_use_magnitude = false) {
  switch (group) {
    case ZoneGroup::Brow: return std::abs(v.dy);
    case ZoneGroup::Eye: return eyes_use_magnitude ? std::hypot(v.dx, v.dy) : std::abs(v.dy);
    case ZoneGroup::Cheek:
    case ZoneGroup::Mouth: return std::hypot(v.dx, v.dy);
  }
  return 0.0;
}

}  // namespace sofa
