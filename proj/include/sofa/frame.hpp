#pragma once

// Frame acquisition: grayscale frames from numbered-PGM directories, Y4M
// files, or (through an injected grabber) a camera.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "sofa/error.hpp"

namespace sofa {

inline constexpr int kDefaultWidth = 320;
inline constexpr int kDefaultHeight = 240;

struct GrayFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
  std::int64_t frame_no = 0;

  GrayFrame() = default;
  GrayFrame(int w, int h, std::uint8_t fill = 0, std::int64_t no = 0)
      : width(w), height(h),
        pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill),
        frame_no(no) {}

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  const std::uint8_t* row(int y) const {
    return pixels.data() + static_cast<std::size_t>(y) * width;
  }
  bool valid() const {
    return width >= 0 && height >= 0 &&
           pixels.size() == static_cast<std::size_t>(width) * height;
  }
};

/// BT.601 luma, rounded to nearest.
constexpr std::uint8_t to_gray(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  // Integer form of round(0.299r + 0.587g + 0.114b): weights in 1/1000.
  const int acc = 299 * r + 587 * g + 114 * b;
  const int v = (acc + 500) / 1000;
  return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

/// Nearest-neighbour resample of a packed RGB image to a gray frame.
inline GrayFrame rgb_to_gray_resized(std::span<const std::uint8_t> rgb, int src_w,
                                     int src_h, int dst_w = kDefaultWidth,
                                     int dst_h = kDefaultHeight) {
  if (rgb.size() < static_cast<std::size_t>(src_w) * src_h * 3)
    throw FormatError("frame-io", "rgb buffer smaller than stated dimensions");
  GrayFrame out(dst_w, dst_h);
  for (int y = 0; y < dst_h; ++y) {
    const int sy = std::min(src_h - 1, static_cast<int>((static_cast<long>(y) * src_h) / dst_h));
    for (int x = 0; x < dst_w; ++x) {
      const int sx = std::min(src_w - 1, static_cast<int>((static_cast<long>(x) * src_w) / dst_w));
      const auto* p = rgb.data() + (static_cast<std::size_t>(sy) * src_w + sx) * 3;
      out.at(x, y) = to_gray(p[0], p[1], p[2]);
    }
  }
  return out;
}

inline GrayFrame resize_nearest(const GrayFrame& src, int dst_w, int dst_h) {
  if (src.width == dst_w && src.height == dst_h) return src;
  GrayFrame out(dst_w, dst_h, 0, src.frame_no);
  for (int y = 0; y < dst_h; ++y) {
    const int sy = static_cast<int>((static_cast<long>(y) * src.height) / dst_h);
    for (int x = 0; x < dst_w; ++x) {
      const int sx = static_cast<int>((static_cast<long>(x) * src.width) / dst_w);
      out.at(x, y) = src.at(sx, sy);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PGM

namespace detail {

inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string discard;
      std::getline(in, discard);
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_pnm_int(std::istream& in, const std::string& what) {
  skip_pnm_space(in);
  int v = -1;
  if (!(in >> v) || v < 0) throw FormatError("frame-io", "bad PGM header field: " + what);
  return v;
}

}  // namespace detail

/// Reads a binary (P5) PGM with maxval 255.
inline GrayFrame read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SourceUnavailable("frame-io", "cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5')
    throw FormatError("frame-io", path.string() + ": not a binary PGM (P5)");
  const int w = detail::read_pnm_int(in, "width");
  const int h = detail::read_pnm_int(in, "height");
  const int maxval = detail::read_pnm_int(in, "maxval");
  if (maxval != 255) throw FormatError("frame-io", path.string() + ": maxval must be 255");
  in.get();  // single whitespace before raster
  GrayFrame f(w, h);
  in.read(reinterpret_cast<char*>(f.pixels.data()),
          static_cast<std::streamsize>(f.pixels.size()));
  if (!in) throw FormatError("frame-io", path.string() + ": truncated raster");
  return f;
}

inline void write_pgm(const std::filesystem::path& path, const GrayFrame& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("frame-io", "cannot write " + path.string());
  out << "P5\n" << f.width << ' ' << f.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(f.pixels.data()),
            static_cast<std::streamsize>(f.pixels.size()));
  if (!out) throw IoError("frame-io", "short write to " + path.string());
}

// ---------------------------------------------------------------------------
// Sources

struct CameraSpec {
  int index = 0;
};
struct Y4mSpec {
  std::filesystem::path path;
};
struct PgmDirSpec {
  std::filesystem::path path;
};

struct SourceSpec {
  std::variant<CameraSpec, Y4mSpec, PgmDirSpec> kind = CameraSpec{};
  double target_fps = 15.0;
  bool throttle = false;  // wall-clock pacing (live mode with file sources)
};

class FrameSource {
public:
  virtual ~FrameSource() = default;
  /// Next frame, or nullopt at end of stream.
  virtual std::optional<GrayFrame> next() = 0;
};

namespace detail {

// Paces a source to a target rate against the steady clock.
class Pacer {
public:
  explicit Pacer(double fps) : period_(std::chrono::duration<double>(1.0 / fps)) {}
  void wait() {
    const auto now = std::chrono::steady_clock::now();
    if (!started_) {
      started_ = true;
      next_ = now;
    }
    if (next_ > now) std::this_thread::sleep_until(next_);
    next_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period_);
  }

private:
  std::chrono::duration<double> period_;
  std::chrono::steady_clock::time_point next_{};
  bool started_ = false;
};

}  // namespace detail

class PgmDirSource final : public FrameSource {
public:
  PgmDirSource(const std::filesystem::path& dir, std::optional<double> pace_fps = {}) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
      throw SourceUnavailable("frame-io", "not a directory: " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".pgm")
        files_.push_back(entry.path());
    }
    if (files_.empty())
      throw SourceUnavailable("frame-io", "no .pgm files in " + dir.string());
    std::sort(files_.begin(), files_.end());
    if (pace_fps) pacer_.emplace(*pace_fps);
  }

  std::optional<GrayFrame> next() override {
    if (pos_ >= files_.size()) return std::nullopt;
    if (pacer_) pacer_->wait();
    GrayFrame f = read_pgm(files_[pos_]);
    f.frame_no = static_cast<std::int64_t>(pos_++);
    return f;
  }

  std::size_t size() const { return files_.size(); }

private:
  std::vector<std::filesystem::path> files_;
  std::size_t pos_ = 0;
  std::optional<detail::Pacer> pacer_;
};

/// YUV4MPEG2 reader; frames carry the luma plane only.
class Y4mSource final : public FrameSource {
public:
  explicit Y4mSource(const std::filesystem::path& path, std::optional<double> pace_fps = {})
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw SourceUnavailable("frame-io", "cannot open " + path.string());
    std::string header;
    std::getline(in_, header);
    if (header.rfind("YUV4MPEG2", 0) != 0)
      throw FormatError("frame-io", path.string() + ": missing YUV4MPEG2 signature");
    std::string chroma = "420";
    std::size_t pos = 9;
    while (pos < header.size()) {
      while (pos < header.size() && header[pos] == ' ') ++pos;
      const std::size_t end = std::min(header.find(' ', pos), header.size());
      if (end > pos) {
        const std::string tok = header.substr(pos, end - pos);
        try {
          switch (tok[0]) {
            case 'W': width_ = std::stoi(tok.substr(1)); break;
            case 'H': height_ = std::stoi(tok.substr(1)); break;
            case 'C': chroma = tok.substr(1); break;
            default: break;
          }
        } catch (const std::exception&) {
          throw FormatError("frame-io", path.string() + ": bad header token " + tok);
        }
      }
      pos = end;
    }
    if (width_ <= 0 || height_ <= 0)
      throw FormatError("frame-io", path.string() + ": missing W/H in header");
    const std::size_t luma = static_cast<std::size_t>(width_) * height_;
    const std::size_t cw = (static_cast<std::size_t>(width_) + 1) / 2;
    const std::size_t ch = (static_cast<std::size_t>(height_) + 1) / 2;
    if (chroma.rfind("420", 0) == 0) {
      chroma_bytes_ = 2 * cw * ch;
    } else if (chroma.rfind("422", 0) == 0) {
      chroma_bytes_ = 2 * cw * static_cast<std::size_t>(height_);
    } else if (chroma.rfind("444", 0) == 0) {
      chroma_bytes_ = 2 * luma;
    } else if (chroma.rfind("mono", 0) == 0) {
      chroma_bytes_ = 0;
    } else {
      throw FormatError("frame-io", path.string() + ": unsupported colourspace C" + chroma);
    }
    if (pace_fps) pacer_.emplace(*pace_fps);
  }

  std::optional<GrayFrame> next() override {
    std::string marker;
    if (!std::getline(in_, marker)) return std::nullopt;
    if (marker.rfind("FRAME", 0) != 0)
      throw FormatError("frame-io", path_.string() + ": expected FRAME marker");
    if (pacer_) pacer_->wait();
    GrayFrame f(width_, height_, 0, next_no_);
    in_.read(reinterpret_cast<char*>(f.pixels.data()),
             static_cast<std::streamsize>(f.pixels.size()));
    if (!in_) throw FormatError("frame-io", path_.string() + ": truncated frame");
    in_.ignore(static_cast<std::streamsize>(chroma_bytes_));
    ++next_no_;
    return f;
  }

  int width() const { return width_; }
  int height() const { return height_; }

private:
  std::ifstream in_;
  std::filesystem::path path_;
  int width_ = 0;
  int height_ = 0;
  std::size_t chroma_bytes_ = 0;
  std::int64_t next_no_ = 0;
  std::optional<detail::Pacer> pacer_;
};

/// Writes gray frames as a 4:2:0 Y4M with neutral chroma.
inline void write_y4m(const std::filesystem::path& path, std::span<const GrayFrame> frames,
                      int fps = 15) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("frame-io", "cannot write " + path.string());
  if (frames.empty()) throw IoError("frame-io", "no frames to write");
  const int w = frames[0].width, h = frames[0].height;
  out << "YUV4MPEG2 W" << w << " H" << h << " F" << fps << ":1 Ip A1:1 C420\n";
  const std::vector<char> chroma(2 * ((w + 1) / 2) * ((h + 1) / 2), static_cast<char>(128));
  for (const auto& f : frames) {
    out << "FRAME\n";
    out.write(reinterpret_cast<const char*>(f.pixels.data()),
              static_cast<std::streamsize>(f.pixels.size()));
    out.write(chroma.data(), static_cast<std::streamsize>(chroma.size()));
  }
}

/// A camera grabber returns packed RGB frames; nullopt ends the stream.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
};
using CameraGrabber = std::function<std::optional<RgbImage>()>;

/// Wraps a platform grabber; normalizes frames to 320x240 gray.
class CameraSource final : public FrameSource {
public:
  explicit CameraSource(CameraGrabber grab) : grab_(std::move(grab)) {}

  std::optional<GrayFrame> next() override {
    auto img = grab_();
    if (!img) return std::nullopt;
    GrayFrame f = rgb_to_gray_resized(img->rgb, img->width, img->height);
    f.frame_no = next_no_++;
    return f;
  }

private:
  CameraGrabber grab_;
  std::int64_t next_no_ = 0;
};

/// Factory hook for the camera kind; set by the application when a capture
/// backend is compiled in.
inline std::function<CameraGrabber(int index, double fps)>& camera_backend() {
  static std::function<CameraGrabber(int, double)> backend;
  return backend;
}

/// Opens a source. File sources are paced to target_fps only when
/// spec.throttle is set.
inline std::unique_ptr<FrameSource> open_source(const SourceSpec& spec) {
  if (!(spec.target_fps > 0)) throw SourceUnavailable("frame-io", "target_fps must be > 0");
  const std::optional<double> pace =
      spec.throttle ? std::optional<double>(spec.target_fps) : std::nullopt;
  return std::visit(
      [&](const auto& k) -> std::unique_ptr<FrameSource> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, PgmDirSpec>) {
          return std::make_unique<PgmDirSource>(k.path, pace);
        } else if constexpr (std::is_same_v<K, Y4mSpec>) {
          return std::make_unique<Y4mSource>(k.path, pace);
        } else {
          if (!camera_backend())
            throw SourceUnavailable("frame-io", "no camera backend compiled in");
          return std::make_unique<CameraSource>(camera_backend()(k.index, spec.target_fps));
        }
      },
      spec.kind);
}

}  // namespace sofa
