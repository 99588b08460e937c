#pragma once

// Test-only helpers: independent reference implementations used as oracles,
// synthetic inputs, and a small SMF reader.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "sofa/sofa.hpp"

namespace sofa_test {

using namespace sofa;

#ifndef SOFA_TEST_DATA
#define SOFA_TEST_DATA "tests/data"
#endif

inline std::filesystem::path test_data() { return SOFA_TEST_DATA; }

/// Fresh scratch directory, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sofa_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline GrayFrame random_frame(std::mt19937& rng, int w = 320, int h = 240, std::int64_t no = 0) {
  GrayFrame f(w, h, 0, no);
  std::uniform_int_distribution<int> px(0, 255);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(px(rng));
  return f;
}

/// Textured frame: noise blurred over 2x2 so neighbouring pixels correlate a
/// little, like a real image, but still highly distinctive per block.
inline GrayFrame texture_frame(std::mt19937& rng, int w = 320, int h = 240) {
  const GrayFrame n = random_frame(rng, w + 1, h + 1);
  GrayFrame f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      f.at(x, y) = static_cast<std::uint8_t>(
          (n.at(x, y) + n.at(x + 1, y) + n.at(x, y + 1) + n.at(x + 1, y + 1) + 2) / 4);
  return f;
}

/// Circular shift: out(x, y) = in(x - dx, y - dy).
inline GrayFrame shifted(const GrayFrame& in, int dx, int dy) {
  GrayFrame out(in.width, in.height, 0, in.frame_no + 1);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      out.at(x, y) = in.at(((x - dx) % in.width + in.width) % in.width,
                           ((y - dy) % in.height + in.height) % in.height);
  return out;
}

// ---------------------------------------------------------------------------
// Flow oracle: plain exhaustive search, every candidate fully summed, winner
// chosen by (cost, dx^2+dy^2, dy, dx) lexicographic minimum.

inline FlowField naive_flow(const GrayFrame& prev, const GrayFrame& curr, const FlowParams& p) {
  FlowField out(p, curr.frame_no);
  const int b = p.block_size, r = p.search_radius;
  for (int row = 0; row < p.grid_rows; ++row)
    for (int col = 0; col < p.grid_cols; ++col) {
      const int ox = col * b, oy = row * b;
      bool have = false;
      std::tuple<long, int, int, int> best{};
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          if (ox + dx < 0 || oy + dy < 0 || ox + dx + b > curr.width || oy + dy + b > curr.height)
            continue;
          long cost = 0;
          for (int y = 0; y < b; ++y)
            for (int x = 0; x < b; ++x)
              cost += std::labs(long{prev.at(ox + x, oy + y)} - long{curr.at(ox + dx + x, oy + dy + y)});
          const std::tuple<long, int, int, int> key{cost, dx * dx + dy * dy, dy, dx};
          if (!have || key < best) {
            best = key;
            have = true;
          }
        }
      out.at(col, row) = {std::get<3>(best), std::get<2>(best)};
    }
  return out;
}

// ---------------------------------------------------------------------------
// Cascade oracle: spreadsheet-style evaluation straight from pixel loops.

inline long long naive_sum(const GrayFrame& f, int x, int y, int w, int h) {
  long long s = 0;
  for (int yy = y; yy < y + h; ++yy)
    for (int xx = x; xx < x + w; ++xx) s += f.at(xx, yy);
  return s;
}

inline bool reference_accepts(const GrayFrame& f, const Cascade& c, int wx, int wy, int ww, int wh) {
  const double n = static_cast<double>(ww) * wh;
  double mean = 0.0;
  for (int y = wy; y < wy + wh; ++y)
    for (int x = wx; x < wx + ww; ++x) mean += f.at(x, y);
  mean /= n;
  double var = 0.0;
  for (int y = wy; y < wy + wh; ++y)
    for (int x = wx; x < wx + ww; ++x) var += (f.at(x, y) - mean) * (f.at(x, y) - mean);
  var /= n;
  const double sd = std::max(1.0, std::sqrt(var));
  const double sx = static_cast<double>(ww) / c.base_width, sy = static_cast<double>(wh) / c.base_height;
  auto rnd = [](double v) { return static_cast<int>(std::floor(v + 0.5)); };

  for (const auto& stage : c.stages) {
    double total = 0.0;
    for (const auto& wc : stage.weak) {
      double value = 0.0;
      for (const auto& r : wc.rects)
        value += r.weight * static_cast<double>(naive_sum(f, wx + rnd(r.x * sx), wy + rnd(r.y * sy),
                                                          rnd(r.w * sx), rnd(r.h * sy)));
      value /= n * sd;
      total += value >= wc.node_threshold ? wc.pass_value : wc.fail_value;
    }
    if (total < stage.threshold) return false;
  }
  return true;
}

/// Two stages of classic two- and three-rect features on a 24x24 window.
inline Cascade two_stage_cascade() {
  Cascade c;
  c.base_width = c.base_height = 24;
  Stage s1;
  s1.threshold = 0.4;
  // top half bright vs bottom half
  s1.weak.push_back({{{0, 0, 24, 12, 1.0}, {0, 12, 24, 12, -1.0}}, 0.02, 0.6, -0.2});
  // left vs right
  s1.weak.push_back({{{0, 0, 12, 24, -1.0}, {12, 0, 12, 24, 1.0}}, -0.05, 0.5, 0.0});
  Stage s2;
  s2.threshold = 0.3;
  // centre band vs whole
  s2.weak.push_back({{{0, 6, 24, 18, -1.0}, {0, 12, 24, 6, 3.0}}, 0.01, 0.7, 0.1});
  s2.weak.push_back({{{4, 4, 16, 16, 1.0}}, 0.5, 0.2, -0.3});
  c.stages = {s1, s2};
  return c;
}

inline Cascade constant_cascade(double stage_threshold) {
  Cascade c;
  c.base_width = c.base_height = 24;
  Stage s;
  s.threshold = stage_threshold;
  s.weak.push_back({{{0, 0, 24, 24, 1.0}}, -1e9, 1.0, 0.0});
  c.stages = {s};
  return c;
}

// ---------------------------------------------------------------------------
// SMF reader (format 0, no running status needed for our files but handled).

struct SmfEvent {
  std::int64_t tick = 0;
  std::uint8_t status = 0;
  std::vector<std::uint8_t> data;  // channel data bytes, or meta payload
  std::uint8_t meta_type = 0;      // for status 0xFF
};

struct SmfFile {
  int format = -1;
  int tracks = 0;
  int division = 0;
  std::vector<SmfEvent> events;
};

inline SmfFile parse_smf(const std::vector<std::uint8_t>& b) {
  SmfFile out;
  std::size_t p = 0;
  auto need = [&](std::size_t n) {
    if (p + n > b.size()) throw std::runtime_error("smf: truncated");
  };
  auto be = [&](int n) {
    need(static_cast<std::size_t>(n));
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | b[p++];
    return v;
  };
  auto vlq = [&] {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      need(1);
      const auto c = b[p++];
      v = (v << 7) | (c & 0x7F);
      if (!(c & 0x80)) return v;
    }
    throw std::runtime_error("smf: vlq too long");
  };
  need(4);
  if (std::string(b.begin(), b.begin() + 4) != "MThd") throw std::runtime_error("smf: no MThd");
  p = 4;
  if (be(4) != 6) throw std::runtime_error("smf: header length");
  out.format = static_cast<int>(be(2));
  out.tracks = static_cast<int>(be(2));
  out.division = static_cast<int>(be(2));
  need(4);
  if (std::string(b.begin() + p, b.begin() + p + 4) != "MTrk") throw std::runtime_error("smf: no MTrk");
  p += 4;
  const std::size_t len = be(4);
  const std::size_t end = p + len;
  if (end != b.size()) throw std::runtime_error("smf: track length mismatch");
  std::int64_t tick = 0;
  std::uint8_t running = 0;
  while (p < end) {
    tick += vlq();
    need(1);
    SmfEvent e;
    e.tick = tick;
    std::uint8_t st = b[p];
    if (st & 0x80) ++p;
    else st = running;
    e.status = st;
    if (st == 0xFF) {
      need(1);
      e.meta_type = b[p++];
      const auto len = vlq();
      need(len);
      e.data.assign(b.begin() + p, b.begin() + p + len);
      p += len;
    } else {
      running = st;
      const int n = (st & 0xF0) == 0xC0 || (st & 0xF0) == 0xD0 ? 1 : 2;
      need(static_cast<std::size_t>(n));
      e.data.assign(b.begin() + p, b.begin() + p + n);
      p += static_cast<std::size_t>(n);
    }
    out.events.push_back(std::move(e));
  }
  return out;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// Crafted offline sequence: a uniform frame with a small textured patch inside
// the mouth zone of a fixed face rect. The patch jumps 2 px right at frame 10
// and is otherwise still.

inline constexpr Rect kCraftedRoi{100, 60, 120, 160};

inline GrayFrame crafted_frame(int frame_no) {
  GrayFrame f(320, 240, 128, frame_no);
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> px(0, 100);
  const int shift = frame_no >= 10 ? 2 : 0;
  for (int y = 184; y < 200; ++y)
    for (int x = 152; x < 168; ++x) f.at(x + shift, y) = static_cast<std::uint8_t>(px(rng));
  return f;
}

inline void write_crafted_sequence(const std::filesystem::path& dir, int frames = 30) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < frames; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03d.pgm", i);
    write_pgm(dir / name, crafted_frame(i));
  }
}

/// Session config for the crafted sequence with bundled samples.
inline SessionConfig crafted_config(const std::filesystem::path& dir) {
  SessionConfig cfg;
  cfg.source.kind = PgmDirSpec{dir};
  cfg.detector.kind = DetectorConfig::Kind::Static;
  cfg.detector.static_roi = kCraftedRoi;
  return cfg;
}

/// Hand-traced SMF for the crafted sequence at 15 fps: one note on channel 7,
/// pitch 52, velocity 30, at frame 10 (tick 640); off at frame 14 (tick 896).
inline const std::vector<std::uint8_t>& crafted_golden_smf() {
  static const std::vector<std::uint8_t> bytes = {
      'M', 'T', 'h', 'd', 0x00, 0x00, 0x00, 0x06, 0x00, 0x00, 0x00, 0x01, 0x01, 0xE0,  // fmt 0, 480
      'M', 'T', 'r', 'k', 0x00, 0x00, 0x00, 0x1F,                                      // 31 bytes
      0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20,                                        // tempo 500000
      0x00, 0xFF, 0x01, 0x06, 'f', 'p', 's', '=', '1', '5',                            // text
      0x85, 0x00, 0x96, 0x34, 0x1E,                                                    // +640 on
      0x82, 0x00, 0x86, 0x34, 0x00,                                                    // +256 off
      0x00, 0xFF, 0x2F, 0x00};
  return bytes;
}

}  // namespace sofa_test
