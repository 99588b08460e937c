#pragma once

// Turns a smoothed, zone-labelled flow field into MIDI note events and the
// overlay annotations shown to the performer.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sofa/error.hpp"
#include "sofa/flow.hpp"
#include "sofa/zones.hpp"

namespace sofa {

enum class Scale { MinorPentatonic, MajorPentatonic };

inline std::vector<int> scale_offsets(Scale s) {
  switch (s) {
    case Scale::MinorPentatonic: return {0, 3, 5, 7, 10};
    case Scale::MajorPentatonic: return {0, 2, 4, 7, 9};
  }
  return {0, 3, 5, 7, 10};
}

struct EventConfig {
  double threshold = 1.0;  // px/frame, compared against salient_value
  int top_k = 8;
  int note_off_frames = 4;
  int min_face_width = 80;
  int pitch_low = 40;
  int pitch_high = 112;
  bool midi_enabled = true;
  Scale scale = Scale::MinorPentatonic;
  bool eyes_use_magnitude = false;

  void validate() const {
    if (top_k < 1) throw ValidationError("event-engine", "top_k must be >= 1");
    if (note_off_frames < 1) throw ValidationError("event-engine", "note_off_frames must be >= 1");
    if (pitch_low < 0 || pitch_high > 127 || pitch_low >= pitch_high)
      throw ValidationError("event-engine", "need 0 <= pitch_low < pitch_high <= 127");
    if (!(threshold >= 0)) throw ValidationError("event-engine", "threshold must be >= 0");
  }
};

enum class NoteKind { On, Off };

struct MidiEvent {
  NoteKind kind = NoteKind::On;
  int channel = 1;   // 1..16
  int pitch = 60;
  int velocity = 0;  // 0 for note-off
  std::int64_t frame_no = 0;

  friend bool operator==(const MidiEvent&, const MidiEvent&) = default;
};

inline MidiEvent note_on(int channel, int pitch, int velocity, std::int64_t frame) {
  return {NoteKind::On, channel, pitch, velocity, frame};
}
inline MidiEvent note_off(int channel, int pitch, std::int64_t frame) {
  return {NoteKind::Off, channel, pitch, 0, frame};
}

/// Event log line: "frame kind channel pitch velocity".
inline std::ostream& operator<<(std::ostream& os, const MidiEvent& e) {
  return os << e.frame_no << ' ' << (e.kind == NoteKind::On ? "on" : "off") << ' ' << e.channel
            << ' ' << e.pitch << ' ' << e.velocity;
}

struct OverlaySegment {
  int x = 0, y = 0;  // cell centre, pixels
  double dx = 0, dy = 0;
};

struct OverlayTrigger {
  int x = 0, y = 0;
  ZoneGroup group = ZoneGroup::Mouth;
  int ttl_frames = 0;
};

struct OverlayFrame {
  std::int64_t frame_no = 0;
  std::vector<OverlaySegment> segments;
  std::vector<OverlayTrigger> triggers;
};

struct PendingOff {
  std::int64_t due_frame;
  int channel;
  int pitch;
};

struct EngineState {
  std::vector<PendingOff> pending;  // in scheduling order
};

struct StepResult {
  std::vector<MidiEvent> events;
  OverlayFrame overlay;
};

/// Scale member at or below the linearly interpolated pitch for `row`
/// (row 0 = top of frame = pitch_high).
inline int pitch_for_grid_row(int row, const EventConfig& cfg, int grid_rows = 30) {
  const int span = grid_rows - 1;
  if (row < 0 || row > span) throw RangeError("event-engine", "grid row out of range");
  // Exact floor of low + (high-low)*(span-row)/span.
  const int c = span == 0 ? cfg.pitch_high
                          : cfg.pitch_low + ((cfg.pitch_high - cfg.pitch_low) * (span - row)) / span;
  const auto offsets = scale_offsets(cfg.scale);
  int best = cfg.pitch_low;
  for (int octave = 0; cfg.pitch_low + 12 * octave <= c; ++octave)
    for (int o : offsets) {
      const int p = cfg.pitch_low + 12 * octave + o;
      if (p <= c) best = std::max(best, p);
    }
  return best;
}

inline int velocity_for(double salient, int search_radius) {
  const double full = search_radius * std::sqrt(2.0);
  const long v = std::lround(127.0 * salient / full);
  return static_cast<int>(std::clamp(v, 1L, 127L));
}

constexpr int channel_for(ZoneLabel l) { return static_cast<int>(l) + 1; }

/// Per-frame event rule. Due note-offs are always emitted; note-ons only
/// when a large-enough face is present and MIDI is enabled.
inline StepResult step(const SmoothFlowField& field, const std::optional<ZoneLayout>& layout,
                       EngineState& state, const EventConfig& cfg) {
  StepResult out;
  const std::int64_t frame = field.frame_no;
  out.overlay.frame_no = frame;

  auto& pending = state.pending;
  for (auto it = pending.begin(); it != pending.end();) {
    if (it->due_frame <= frame) {
      out.events.push_back(note_off(it->channel, it->pitch, frame));
      it = pending.erase(it);
    } else {
      ++it;
    }
  }

  if (!layout) return out;

  struct Candidate {
    int col, row;
    ZoneLabel label;
    double value;
  };
  std::vector<Candidate> cands;
  const int bs = field.params.block_size;
  for (int row = 0; row < field.rows(); ++row) {
    for (int col = 0; col < field.cols(); ++col) {
      const auto label = classify_point(*layout, col, row, bs);
      if (!label) continue;
      const auto v = field.at(col, row);
      const double value = salient_value(group_of(*label), v, cfg.eyes_use_magnitude);
      if (value > cfg.threshold) {
        cands.push_back({col, row, *label, value});
        out.overlay.segments.push_back({col * bs + bs / 2, row * bs + bs / 2, v.dx, v.dy});
      }
    }
  }

  const bool gate_open = cfg.midi_enabled && layout->roi.rect.w >= cfg.min_face_width;
  if (!gate_open) return out;

  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) { return a.value > b.value; });
  if (cands.size() > static_cast<std::size_t>(cfg.top_k)) cands.resize(cfg.top_k);

  for (const auto& c : cands) {
    out.overlay.triggers.push_back(
        {c.col * bs + bs / 2, c.row * bs + bs / 2, group_of(c.label), cfg.note_off_frames});
    const int ch = channel_for(c.label);
    const int pitch = pitch_for_grid_row(c.row, cfg, field.rows());
    // Candidates arrive in descending value order, so the first of a
    // (channel, pitch) pair carries the highest velocity.
    const bool duplicate = std::any_of(out.events.begin(), out.events.end(), [&](const MidiEvent& e) {
      return e.kind == NoteKind::On && e.channel == ch && e.pitch == pitch;
    });
    const bool sounding = std::any_of(pending.begin(), pending.end(), [&](const PendingOff& p) {
      return p.channel == ch && p.pitch == pitch;
    });
    if (duplicate || sounding) continue;
    out.events.push_back(note_on(ch, pitch, velocity_for(c.value, field.params.search_radius), frame));
    pending.push_back({frame + cfg.note_off_frames, ch, pitch});
  }
  return out;
}

/// Emits every pending note-off at its due frame.
inline std::vector<MidiEvent> flush(EngineState& state) {
  std::vector<MidiEvent> out;
  auto pending = std::move(state.pending);
  state.pending.clear();
  std::stable_sort(pending.begin(), pending.end(),
                   [](const PendingOff& a, const PendingOff& b) { return a.due_frame < b.due_frame; });
  for (const auto& p : pending) out.push_back(note_off(p.channel, p.pitch, p.due_frame));
  return out;
}

}  // namespace sofa
