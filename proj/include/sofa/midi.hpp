#pragma once

// MIDI 1.0 channel-voice encoding, Standard MIDI File (format 0) output, and
// the sink contract shared by file and live port outputs.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "sofa/error.hpp"
#include "sofa/events.hpp"

namespace sofa {

using WireMessage = std::array<std::uint8_t, 3>;

inline WireMessage encode(const MidiEvent& e) {
  if (e.channel < 1 || e.channel > 16) throw RangeError("midi-io", "channel must be 1..16");
  if (e.pitch < 0 || e.pitch > 127) throw RangeError("midi-io", "pitch must be 0..127");
  if (e.velocity < 0 || e.velocity > 127) throw RangeError("midi-io", "velocity must be 0..127");
  const auto ch = static_cast<std::uint8_t>(e.channel - 1);
  if (e.kind == NoteKind::On)
    return {static_cast<std::uint8_t>(0x90 | ch), static_cast<std::uint8_t>(e.pitch),
            static_cast<std::uint8_t>(e.velocity)};
  return {static_cast<std::uint8_t>(0x80 | ch), static_cast<std::uint8_t>(e.pitch), 0};
}

// ---------------------------------------------------------------------------
// Standard MIDI File

inline constexpr int kSmfDivision = 480;         // ticks per quarter note
inline constexpr int kSmfTempo = 500000;         // microseconds per quarter note
inline constexpr int kSmfTicksPerSecond = 960;   // follows from the two above

inline std::int64_t frame_to_tick(std::int64_t frame, double fps) {
  return std::llround(static_cast<double>(frame) / fps * kSmfTicksPerSecond);
}

namespace detail {

inline void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::array<std::uint8_t, 5> buf{};
  int n = 0;
  buf[n++] = static_cast<std::uint8_t>(v & 0x7F);
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>(0x80 | (v & 0x7F));
  while (n) out.push_back(buf[--n]);
}

inline void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::string format_fps(double fps) {
  std::ostringstream ss;
  ss.imbue(std::locale::classic());
  ss << "fps=" << fps;
  return ss.str();
}

}  // namespace detail

/// Serialized type-0 file: tempo and an "fps=<n>" text meta-event at tick 0,
/// then the events, then end-of-track.
inline std::vector<std::uint8_t> smf_bytes(const std::vector<MidiEvent>& events, double fps) {
  if (!(fps > 0)) throw RangeError("midi-io", "fps must be > 0");
  std::vector<std::uint8_t> track;
  // Tempo
  track.insert(track.end(), {0x00, 0xFF, 0x51, 0x03});
  detail::put_be(track, kSmfTempo, 3);
  // Text
  const std::string text = detail::format_fps(fps);
  track.insert(track.end(), {0x00, 0xFF, 0x01});
  detail::put_vlq(track, static_cast<std::uint32_t>(text.size()));
  track.insert(track.end(), text.begin(), text.end());

  std::int64_t last_tick = 0;
  for (const auto& e : events) {
    const std::int64_t tick = frame_to_tick(e.frame_no, fps);
    if (tick < last_tick) throw RangeError("midi-io", "events must be sorted by frame");
    const auto msg = encode(e);
    detail::put_vlq(track, static_cast<std::uint32_t>(tick - last_tick));
    track.insert(track.end(), msg.begin(), msg.end());
    last_tick = tick;
  }
  track.insert(track.end(), {0x00, 0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> file{'M', 'T', 'h', 'd'};
  detail::put_be(file, 6, 4);
  detail::put_be(file, 0, 2);  // format 0
  detail::put_be(file, 1, 2);  // one track
  detail::put_be(file, kSmfDivision, 2);
  file.insert(file.end(), {'M', 'T', 'r', 'k'});
  detail::put_be(file, static_cast<std::uint32_t>(track.size()), 4);
  file.insert(file.end(), track.begin(), track.end());
  return file;
}

inline void write_smf(const std::vector<MidiEvent>& events, double fps,
                      const std::filesystem::path& path) {
  const auto bytes = smf_bytes(events, fps);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("midi-io", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("midi-io", "short write to " + path.string());
}

// ---------------------------------------------------------------------------
// Sinks

class MidiSink {
public:
  virtual ~MidiSink() = default;
  virtual void send(const MidiEvent& e) = 0;
  virtual void close() {}
};

/// Collects events and writes a Standard MIDI File on close.
class SmfSink final : public MidiSink {
public:
  SmfSink(std::filesystem::path path, double fps) : path_(std::move(path)), fps_(fps) {}
  ~SmfSink() override {
    try {
      close();
    } catch (...) {
    }
  }

  void send(const MidiEvent& e) override {
    encode(e);  // range check now rather than at close
    events_.push_back(e);
  }
  void close() override {
    if (closed_) return;
    closed_ = true;
    std::stable_sort(events_.begin(), events_.end(),
                     [](const MidiEvent& a, const MidiEvent& b) { return a.frame_no < b.frame_no; });
    write_smf(events_, fps_, path_);
  }
  const std::vector<MidiEvent>& events() const { return events_; }

private:
  std::filesystem::path path_;
  double fps_;
  std::vector<MidiEvent> events_;
  bool closed_ = false;
};

/// In-memory sink, used by tests and the offline session.
class CollectingSink final : public MidiSink {
public:
  void send(const MidiEvent& e) override { events.push_back(e); }
  std::vector<MidiEvent> events;
};

// ---------------------------------------------------------------------------
// Live ports. A port is a byte endpoint that receives encoded messages. Raw
// MIDI device nodes (/dev/snd/midiC*D*, /dev/midi*) and FIFOs are opened as
// files; loopback ports live in-process and are registered by name.

struct TimestampedBytes {
  std::chrono::steady_clock::time_point time;
  WireMessage bytes;
};

class LoopbackPort {
public:
  void deliver(const TimestampedBytes& m) {
    std::lock_guard lock(mutex_);
    received_.push_back(m);
  }
  std::vector<TimestampedBytes> received() const {
    std::lock_guard lock(mutex_);
    return received_;
  }

private:
  mutable std::mutex mutex_;
  std::vector<TimestampedBytes> received_;
};

class PortRegistry {
public:
  static PortRegistry& instance() {
    static PortRegistry r;
    return r;
  }

  std::shared_ptr<LoopbackPort> create_loopback(const std::string& name) {
    std::lock_guard lock(mutex_);
    auto& slot = loopbacks_[name];
    if (!slot) slot = std::make_shared<LoopbackPort>();
    return slot;
  }
  void remove_loopback(const std::string& name) {
    std::lock_guard lock(mutex_);
    loopbacks_.erase(name);
  }
  std::shared_ptr<LoopbackPort> find_loopback(const std::string& name) const {
    std::lock_guard lock(mutex_);
    const auto it = loopbacks_.find(name);
    return it == loopbacks_.end() ? nullptr : it->second;
  }

  /// Port names in index order: loopbacks first (sorted), then device nodes.
  std::vector<std::string> list() const {
    std::vector<std::string> names;
    {
      std::lock_guard lock(mutex_);
      for (const auto& [name, port] : loopbacks_) names.push_back(name);
    }
    std::vector<std::string> devices;
    std::error_code ec;
    for (const auto* dir : {"/dev/snd", "/dev"}) {
      if (!std::filesystem::is_directory(dir, ec)) continue;
      for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
        const auto fname = entry.path().filename().string();
        if (fname.rfind("midi", 0) == 0) devices.push_back(entry.path().string());
      }
    }
    std::sort(devices.begin(), devices.end());
    names.insert(names.end(), devices.begin(), devices.end());
    return names;
  }

private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<LoopbackPort>> loopbacks_;
};

/// Writes encoded messages to a port in call order, stamping each with a
/// monotonic timestamp.
class PortSink final : public MidiSink {
public:
  const std::vector<std::chrono::steady_clock::time_point>& sent_times() const { return times_; }

  void send(const MidiEvent& e) override {
    const auto bytes = encode(e);
    auto now = std::chrono::steady_clock::now();
    if (!times_.empty() && now < times_.back()) now = times_.back();
    times_.push_back(now);
    if (loopback_) {
      loopback_->deliver({now, bytes});
    } else {
      out_.write(reinterpret_cast<const char*>(bytes.data()), 3);
      out_.flush();
      if (!out_) throw IoError("midi-io", "write to MIDI port failed");
    }
  }
  void close() override {
    if (out_.is_open()) out_.close();
  }

private:
  friend std::unique_ptr<PortSink> open_port(const std::string&);
  PortSink() = default;

  std::shared_ptr<LoopbackPort> loopback_;
  std::ofstream out_;
  std::vector<std::chrono::steady_clock::time_point> times_;
};

/// Opens a port by name, by path to a device node or FIFO, or by decimal
/// index into PortRegistry::list().
inline std::unique_ptr<PortSink> open_port(const std::string& name_or_index) {
  auto& reg = PortRegistry::instance();
  std::string name = name_or_index;
  if (!name.empty() && std::all_of(name.begin(), name.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    const auto ports = reg.list();
    const auto idx = std::stoul(name);
    if (idx >= ports.size()) throw PortUnavailable("midi-io", "no MIDI port with index " + name);
    name = ports[idx];
  }
  std::unique_ptr<PortSink> sink(new PortSink());
  if (auto lb = reg.find_loopback(name)) {
    sink->loopback_ = std::move(lb);
    return sink;
  }
  std::error_code ec;
  const auto status = std::filesystem::status(name, ec);
  if (ec || !(std::filesystem::is_character_file(status) || std::filesystem::is_fifo(status)))
    throw PortUnavailable("midi-io", "no MIDI port named " + name);
  sink->out_.open(name, std::ios::binary | std::ios::app);
  if (!sink->out_) throw PortUnavailable("midi-io", "cannot open MIDI port " + name);
  return sink;
}

}  // namespace sofa
