#pragma once

// Session configuration and its JSON file form. Every tunable constant of the
// pipeline is a named field with a default; see README.md for the schema.

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sofa/control.hpp"
#include "sofa/detect.hpp"
#include "sofa/error.hpp"
#include "sofa/events.hpp"
#include "sofa/flow.hpp"
#include "sofa/frame.hpp"
#include "sofa/synth.hpp"
#include "sofa/zones.hpp"

#ifndef SOFA_DATA_DIR
#define SOFA_DATA_DIR "data"
#endif

namespace sofa {

inline std::filesystem::path data_dir() { return SOFA_DATA_DIR; }

struct DetectorConfig {
  enum class Kind { Cascade, Static } kind = Kind::Cascade;
  std::filesystem::path cascade_path = data_dir() / "cascades" / "frontalface_default.json";
  ScanParams scan;
  std::optional<Rect> static_roi;
  std::optional<std::filesystem::path> sidecar;
};

struct ScriptedControl {
  std::int64_t frame_no = 0;
  ControlMessage control;
};

struct OutputConfig {
  std::optional<std::filesystem::path> smf;
  std::optional<std::string> midi_port;
  std::optional<std::filesystem::path> wav;
  std::optional<std::string> audio;  // live audio device spec, e.g. "raw:<path>"
};

struct SessionConfig {
  SourceSpec source;
  DetectorConfig detector;
  FlowParams flow;
  ZoneGeometry zones;
  EventConfig events;
  SynthConfig synth;
  std::array<std::filesystem::path, kNumGroups> sample_paths = {
      data_dir() / "samples" / "brow.wav", data_dir() / "samples" / "eye.wav",
      data_dir() / "samples" / "cheek.wav", data_dir() / "samples" / "mouth.wav"};
  OutputConfig output;
  std::optional<int> serve_port;
  double render_tail_s = 1.0;
  std::vector<ScriptedControl> script;  // offline mode only

  void validate() const {
    flow.validate();
    if (flow.frame_width() != kDefaultWidth || flow.frame_height() != kDefaultHeight)
      throw ValidationError("session", "flow grid must tile the 320x240 frame exactly");
    if (!(source.target_fps > 0)) throw ValidationError("session", "fps must be > 0");
    events.validate();
    synth.validate();
    if (detector.kind == DetectorConfig::Kind::Cascade) detector.scan.validate();
    if (detector.kind == DetectorConfig::Kind::Static && !detector.static_roi && !detector.sidecar)
      throw ValidationError("session", "static detector needs a roi or a sidecar");
    if (serve_port && (*serve_port < 0 || *serve_port > 65535))
      throw ValidationError("session", "serve_port out of range");
    if (!(render_tail_s >= 0)) throw ValidationError("session", "render_tail_s must be >= 0");
  }
};

/// Parses "x,y,w,h".
inline Rect parse_rect(const std::string& text) {
  Rect r;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream ss(text);
  if (!(ss >> r.x >> c1 >> r.y >> c2 >> r.w >> c3 >> r.h) || c1 != ',' || c2 != ',' || c3 != ',' ||
      r.w < 0 || r.h < 0)
    throw ValidationError("session", "expected x,y,w,h but got '" + text + "'");
  return r;
}

/// Parses "y4m:<path>", "pgm:<dir>" or "camera:<index>".
inline void set_input(SourceSpec& spec, const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "y4m") spec.kind = Y4mSpec{arg};
  else if (kind == "pgm") spec.kind = PgmDirSpec{arg};
  else if (kind == "camera") spec.kind = CameraSpec{arg.empty() ? 0 : std::stoi(arg)};
  else throw ValidationError("session", "input must be y4m:<path>, pgm:<dir> or camera:<n>");
}

/// Parses "smf:<path>" or "port:<name>".
inline void set_midi_out(OutputConfig& out, const std::string& text) {
  if (text.rfind("smf:", 0) == 0) out.smf = text.substr(4);
  else if (text.rfind("port:", 0) == 0) out.midi_port = text.substr(5);
  else throw ValidationError("session", "midi-out must be smf:<path> or port:<name>");
}

inline void set_render(OutputConfig& out, const std::string& text) {
  if (text.rfind("wav:", 0) != 0) throw ValidationError("session", "render must be wav:<path>");
  out.wav = text.substr(4);
}

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Reads a config object; relative paths resolve against `base_dir`. The
/// result is not validated, so command-line overrides can still be applied.
inline SessionConfig config_from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base_dir = {}) {
  SessionConfig cfg;
  using detail::read_opt;
  try {
    if (j.contains("source")) {
      const auto& s = j["source"];
      const auto kind = s.value("kind", std::string("camera"));
      if (kind == "camera") cfg.source.kind = CameraSpec{s.value("index", 0)};
      else if (kind == "y4m") cfg.source.kind = Y4mSpec{detail::resolve(base_dir, s.at("path").get<std::string>())};
      else if (kind == "pgm_dir") cfg.source.kind = PgmDirSpec{detail::resolve(base_dir, s.at("path").get<std::string>())};
      else throw ValidationError("session", "unknown source kind '" + kind + "'");
      read_opt(s, "fps", cfg.source.target_fps);
    }
    if (j.contains("detector")) {
      const auto& d = j["detector"];
      const auto kind = d.value("kind", std::string("cascade"));
      if (kind == "cascade") {
        cfg.detector.kind = DetectorConfig::Kind::Cascade;
        if (d.contains("cascade"))
          cfg.detector.cascade_path = detail::resolve(base_dir, d["cascade"].get<std::string>());
      } else if (kind == "static") {
        cfg.detector.kind = DetectorConfig::Kind::Static;
        if (d.contains("roi")) {
          const auto v = d["roi"].get<std::vector<int>>();
          if (v.size() != 4) throw ValidationError("session", "detector.roi needs [x,y,w,h]");
          cfg.detector.static_roi = Rect{v[0], v[1], v[2], v[3]};
        }
        if (d.contains("sidecar"))
          cfg.detector.sidecar = detail::resolve(base_dir, d["sidecar"].get<std::string>());
      } else {
        throw ValidationError("session", "unknown detector kind '" + kind + "'");
      }
      auto& sp = cfg.detector.scan;
      read_opt(d, "scale_factor", sp.scale_factor);
      read_opt(d, "min_face_width", sp.min_face_width);
      read_opt(d, "shift_step", sp.shift_step);
      read_opt(d, "min_neighbors", sp.min_neighbors);
      read_opt(d, "group_iou", sp.group_iou);
    }
    if (j.contains("flow")) {
      const auto& f = j["flow"];
      read_opt(f, "block_size", cfg.flow.block_size);
      read_opt(f, "grid_cols", cfg.flow.grid_cols);
      read_opt(f, "grid_rows", cfg.flow.grid_rows);
      read_opt(f, "search_radius", cfg.flow.search_radius);
    }
    if (j.contains("zones")) {
      const auto& z = j["zones"];
      read_opt(z, "eyes_use_magnitude", cfg.zones.eyes_use_magnitude);
      if (z.contains("fractions")) {
        for (const auto& [key, val] : z["fractions"].items()) {
          const auto l = label_from_string(key);
          if (!l) throw ValidationError("session", "unknown zone '" + key + "'");
          const auto v = val.get<std::vector<double>>();
          if (v.size() != 4) throw ValidationError("session", "zone fraction needs [x0,y0,x1,y1]");
          cfg.zones[*l] = {v[0], v[1], v[2], v[3]};
        }
      }
    }
    cfg.events.eyes_use_magnitude = cfg.zones.eyes_use_magnitude;
    if (j.contains("events")) {
      const auto& e = j["events"];
      read_opt(e, "threshold", cfg.events.threshold);
      read_opt(e, "top_k", cfg.events.top_k);
      read_opt(e, "note_off_frames", cfg.events.note_off_frames);
      read_opt(e, "min_face_width", cfg.events.min_face_width);
      read_opt(e, "pitch_low", cfg.events.pitch_low);
      read_opt(e, "pitch_high", cfg.events.pitch_high);
      read_opt(e, "midi_enabled", cfg.events.midi_enabled);
      if (e.contains("scale")) {
        const auto s = e["scale"].get<std::string>();
        if (s == "minor_pentatonic") cfg.events.scale = Scale::MinorPentatonic;
        else if (s == "major_pentatonic") cfg.events.scale = Scale::MajorPentatonic;
        else throw ValidationError("session", "unknown scale '" + s + "'");
      }
    }
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      auto& sc = cfg.synth;
      read_opt(s, "sample_rate", sc.sample_rate);
      read_opt(s, "max_voices", sc.max_voices);
      read_opt(s, "reference_pitch", sc.reference_pitch);
      read_opt(s, "fixed_rate", sc.fixed_rate);
      if (s.contains("adsr")) {
        const auto& a = s["adsr"];
        read_opt(a, "attack_s", sc.adsr.attack_s);
        read_opt(a, "decay_s", sc.adsr.decay_s);
        read_opt(a, "sustain", sc.adsr.sustain);
        read_opt(a, "release_s", sc.adsr.release_s);
      }
      if (s.contains("delay")) {
        const auto& d = s["delay"];
        read_opt(d, "time_s", sc.delay.time_s);
        read_opt(d, "feedback", sc.delay.feedback);
        read_opt(d, "lpf_cutoff_hz", sc.delay.lpf_cutoff_hz);
        read_opt(d, "lpf_enabled", sc.delay.lpf_enabled);
        read_opt(d, "mix", sc.delay.mix);
        if (d.contains("enabled"))
          for (const auto& [key, val] : d["enabled"].items()) {
            const auto g = group_from_string(key);
            if (!g) throw ValidationError("session", "unknown sample group '" + key + "'");
            sc.delay.enabled[static_cast<std::size_t>(*g)] = val.get<bool>();
          }
      }
      if (s.contains("strips"))
        for (const auto& js : s["strips"]) {
          const int ch = js.at("channel").get<int>();
          if (ch < 1 || ch > kNumStrips) throw ValidationError("session", "strip channel must be 1..7");
          auto& strip = sc.strips[static_cast<std::size_t>(ch - 1)];
          read_opt(js, "pan", strip.pan);
          read_opt(js, "vol_l", strip.vol_l);
          read_opt(js, "vol_r", strip.vol_r);
        }
      if (s.contains("samples"))
        for (const auto& [key, val] : s["samples"].items()) {
          const auto g = group_from_string(key);
          if (!g) throw ValidationError("session", "unknown sample group '" + key + "'");
          cfg.sample_paths[static_cast<std::size_t>(*g)] = detail::resolve(base_dir, val.get<std::string>());
        }
    }
    if (j.contains("output")) {
      const auto& o = j["output"];
      if (o.contains("midi")) set_midi_out(cfg.output, o["midi"].get<std::string>());
      if (o.contains("render")) set_render(cfg.output, o["render"].get<std::string>());
      if (o.contains("audio")) cfg.output.audio = o["audio"].get<std::string>();
    }
    if (j.contains("serve_port") && !j["serve_port"].is_null()) cfg.serve_port = j["serve_port"].get<int>();
    read_opt(j, "render_tail_s", cfg.render_tail_s);
    if (j.contains("script"))
      for (const auto& item : j["script"])
        cfg.script.push_back({item.at("frame").get<std::int64_t>(), control_from_json(item.at("control"))});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("session", std::string("config: ") + e.what());
  }
  return cfg;
}

inline SessionConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("session", "cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("session", path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

}  // namespace sofa
