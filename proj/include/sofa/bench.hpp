#pragma once

// Throughput harness for the vision stage (detection + flow + smoothing +
// zones + event rule) over a sequence of frames.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <random>
#include <vector>

#include "sofa/pipeline.hpp"

namespace sofa {

struct BenchResult {
  std::size_t frames = 0;
  double mean_ms = 0.0;
  double max_ms = 0.0;
  std::size_t frames_with_face = 0;
  std::size_t note_ons = 0;
};

inline BenchResult bench_vision(VisionPipeline& vision, const std::vector<GrayFrame>& frames) {
  BenchResult r;
  double total = 0.0;
  for (const auto& f : frames) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = vision.process(f);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    total += ms;
    r.max_ms = std::max(r.max_ms, ms);
    r.frames_with_face += out.roi.has_value();
    r.note_ons += static_cast<std::size_t>(std::count_if(
        out.events.begin(), out.events.end(), [](const MidiEvent& e) { return e.kind == NoteKind::On; }));
    ++r.frames;
  }
  r.mean_ms = r.frames ? total / static_cast<double>(r.frames) : 0.0;
  return r;
}

/// Synthetic input: `base` jittered by a small deterministic walk with a
/// little sensor noise, so flow, detection and events all do real work.
inline std::vector<GrayFrame> jittered_sequence(const GrayFrame& base, std::size_t count,
                                                std::uint32_t seed = 1) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> step(-1, 1), noise(-3, 3);
  std::vector<GrayFrame> out;
  out.reserve(count);
  int ox = 0, oy = 0;
  for (std::size_t i = 0; i < count; ++i) {
    ox = std::clamp(ox + step(rng), -3, 3);
    oy = std::clamp(oy + step(rng), -3, 3);
    GrayFrame f(base.width, base.height, 0, static_cast<std::int64_t>(i));
    for (int y = 0; y < base.height; ++y)
      for (int x = 0; x < base.width; ++x) {
        const int sx = std::clamp(x - ox, 0, base.width - 1);
        const int sy = std::clamp(y - oy, 0, base.height - 1);
        f.at(x, y) = static_cast<std::uint8_t>(std::clamp(int{base.at(sx, sy)} + noise(rng), 0, 255));
      }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace sofa
