#pragma once

// Performer control messages: parsing and validation of the JSON text form
// ({"v":1,"type":...}) exchanged with the UI.

#include <optional>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "sofa/error.hpp"
#include "sofa/synth.hpp"
#include "sofa/zones.hpp"

namespace sofa {

inline constexpr int kProtocolVersion = 1;

struct ToggleMidi {};
struct Mute {
  std::optional<bool> muted;  // empty toggles
};
struct SetVolume {
  int channel = 1;
  double left = 1.0;
  double right = 1.0;
};
/// Partial update; absent fields keep their current value.
struct SetDelay {
  std::optional<double> time_s, feedback, lpf_cutoff_hz, mix;
  std::optional<bool> lpf_enabled;
  std::array<std::optional<bool>, kNumGroups> enabled{};
};
struct SetAdsr {
  std::optional<double> attack_s, decay_s, sustain, release_s;
};
struct LoadSample {
  ZoneGroup group = ZoneGroup::Brow;
  std::string path;
};
struct SetThreshold {
  double value = 1.0;
};

using ControlMessage =
    std::variant<ToggleMidi, Mute, SetVolume, SetDelay, SetAdsr, LoadSample, SetThreshold>;

inline std::string control_name(const ControlMessage& m) {
  static constexpr const char* names[] = {"toggle_midi", "mute",          "set_volume",
                                          "set_delay",   "set_adsr",      "load_sample",
                                          "set_threshold"};
  return names[m.index()];
}

/// True when the control is applied on the vision stage rather than audio.
inline bool is_vision_control(const ControlMessage& m) {
  return std::holds_alternative<ToggleMidi>(m) || std::holds_alternative<SetThreshold>(m);
}

inline constexpr double kMaxStripVolume = 2.0;

namespace detail {

inline double number_in(const nlohmann::json& j, const char* key, double lo, double hi) {
  if (!j.contains(key) || !j[key].is_number())
    throw ValidationError("session", std::string("missing numeric field '") + key + "'");
  const double v = j[key].get<double>();
  if (!(v >= lo && v <= hi))
    throw ValidationError("session", std::string("field '") + key + "' out of range [" +
                                         std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return v;
}

inline std::optional<double> opt_number_in(const nlohmann::json& j, const char* key, double lo,
                                           double hi) {
  if (!j.contains(key)) return std::nullopt;
  return number_in(j, key, lo, hi);
}

inline std::optional<bool> opt_bool(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  if (!j[key].is_boolean()) throw ValidationError("session", std::string("field '") + key + "' must be boolean");
  return j[key].get<bool>();
}

}  // namespace detail

/// Builds and validates a control from its JSON object form.
inline ControlMessage control_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("session", "control must be a JSON object");
  if (j.contains("v") && (!j["v"].is_number_integer() || j["v"].get<int>() != kProtocolVersion))
    throw ValidationError("session", "unsupported protocol version");
  if (!j.contains("type") || !j["type"].is_string())
    throw ValidationError("session", "control needs a string 'type'");
  const auto type = j["type"].get<std::string>();

  if (type == "toggle_midi") return ToggleMidi{};
  if (type == "mute") return Mute{detail::opt_bool(j, "muted")};
  if (type == "set_volume") {
    const double ch = detail::number_in(j, "channel", 1, kNumStrips);
    if (ch != static_cast<int>(ch)) throw ValidationError("session", "channel must be an integer");
    return SetVolume{static_cast<int>(ch), detail::number_in(j, "left", 0, kMaxStripVolume),
                     detail::number_in(j, "right", 0, kMaxStripVolume)};
  }
  if (type == "set_delay") {
    SetDelay d;
    d.time_s = detail::opt_number_in(j, "time_s", 0.0, 2.0);
    d.feedback = detail::opt_number_in(j, "feedback", 0.0, 0.95);
    d.lpf_cutoff_hz = detail::opt_number_in(j, "lpf_cutoff_hz", 1.0, 22050.0);
    d.mix = detail::opt_number_in(j, "mix", 0.0, 1.0);
    d.lpf_enabled = detail::opt_bool(j, "lpf_enabled");
    if (j.contains("enabled")) {
      if (!j["enabled"].is_object()) throw ValidationError("session", "'enabled' must map group -> bool");
      for (const auto& [key, val] : j["enabled"].items()) {
        const auto g = group_from_string(key);
        if (!g) throw ValidationError("session", "unknown sample group '" + key + "'");
        if (!val.is_boolean()) throw ValidationError("session", "'enabled' values must be boolean");
        d.enabled[static_cast<std::size_t>(*g)] = val.get<bool>();
      }
    }
    return d;
  }
  if (type == "set_adsr") {
    SetAdsr a;
    a.attack_s = detail::opt_number_in(j, "attack_s", 0.0, 10.0);
    a.decay_s = detail::opt_number_in(j, "decay_s", 0.0, 10.0);
    a.sustain = detail::opt_number_in(j, "sustain", 0.0, 1.0);
    a.release_s = detail::opt_number_in(j, "release_s", 0.0, 10.0);
    return a;
  }
  if (type == "load_sample") {
    if (!j.contains("group") || !j["group"].is_string())
      throw ValidationError("session", "load_sample needs a 'group'");
    const auto g = group_from_string(j["group"].get<std::string>());
    if (!g) throw ValidationError("session", "unknown sample group");
    if (!j.contains("path") || !j["path"].is_string() || j["path"].get<std::string>().empty())
      throw ValidationError("session", "load_sample needs a 'path'");
    return LoadSample{*g, j["path"].get<std::string>()};
  }
  if (type == "set_threshold") return SetThreshold{detail::number_in(j, "value", 0.0, 1e6)};
  throw ValidationError("session", "unknown control type '" + type + "'");
}

inline ControlMessage parse_control(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("session", std::string("malformed control: ") + e.what());
  }
  return control_from_json(j);
}

inline DelayParams merged(DelayParams p, const SetDelay& d) {
  if (d.time_s) p.time_s = *d.time_s;
  if (d.feedback) p.feedback = *d.feedback;
  if (d.lpf_cutoff_hz) p.lpf_cutoff_hz = *d.lpf_cutoff_hz;
  if (d.mix) p.mix = *d.mix;
  if (d.lpf_enabled) p.lpf_enabled = *d.lpf_enabled;
  for (std::size_t g = 0; g < kNumGroups; ++g)
    if (d.enabled[g]) p.enabled[g] = *d.enabled[g];
  return p;
}

inline AdsrParams merged(AdsrParams p, const SetAdsr& a) {
  if (a.attack_s) p.attack_s = *a.attack_s;
  if (a.decay_s) p.decay_s = *a.decay_s;
  if (a.sustain) p.sustain = *a.sustain;
  if (a.release_s) p.release_s = *a.release_s;
  return p;
}

}  // namespace sofa
