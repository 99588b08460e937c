#pragma once

// The vision stage: detection, flow, smoothing, zone labelling and the event
// rule for one frame at a time.

#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "sofa/cascade.hpp"
#include "sofa/config.hpp"
#include "sofa/detect.hpp"
#include "sofa/events.hpp"
#include "sofa/flow.hpp"
#include "sofa/zones.hpp"

namespace sofa {

struct VisionOutput {
  GrayFrame frame;
  std::optional<FaceROI> roi;
  std::vector<MidiEvent> events;
  OverlayFrame overlay;
};

class VisionPipeline {
public:
  explicit VisionPipeline(const SessionConfig& cfg)
      : flow_(cfg.flow), geometry_(cfg.zones), events_(cfg.events) {
    if (cfg.detector.kind == DetectorConfig::Kind::Cascade) {
      auto cascade = std::make_shared<const Cascade>(load_cascade(cfg.detector.cascade_path));
      detector_.emplace<CascadeDetector>(std::move(cascade), cfg.detector.scan);
    } else if (cfg.detector.static_roi) {
      detector_.emplace<StaticDetector>(*cfg.detector.static_roi);
    } else {
      detector_.emplace<StaticDetector>(read_sidecar(*cfg.detector.sidecar));
    }
    events_.eyes_use_magnitude = geometry_.eyes_use_magnitude;
  }

  VisionPipeline(std::shared_ptr<const Cascade> cascade, const ScanParams& scan,
                 const FlowParams& flow, const ZoneGeometry& geo, const EventConfig& ev)
      : flow_(flow), geometry_(geo), events_(ev) {
    detector_.emplace<CascadeDetector>(std::move(cascade), scan);
  }

  VisionOutput process(GrayFrame frame) {
    if (frame.width != flow_.frame_width() || frame.height != flow_.frame_height())
      frame = resize_nearest(frame, flow_.frame_width(), flow_.frame_height());

    VisionOutput out;
    out.roi = std::visit(
        [&](auto& d) -> std::optional<FaceROI> {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, std::monostate>) return std::nullopt;
          else return d.detect(frame);
        },
        detector_);

    SmoothFlowField smoothed(flow_, frame.frame_no);
    if (prev_) smoothed = smooth(compute_flow(*prev_, frame, flow_));
    std::optional<ZoneLayout> layout;
    if (out.roi) layout = compute_zones(*out.roi, geometry_);

    auto result = step(smoothed, layout, state_, events_);
    out.events = std::move(result.events);
    out.overlay = std::move(result.overlay);
    prev_ = frame;
    out.frame = std::move(frame);
    return out;
  }

  /// Pending note-offs at their due frames; call once at end of stream.
  std::vector<MidiEvent> flush() { return sofa::flush(state_); }

  EventConfig& event_config() { return events_; }
  const EventConfig& event_config() const { return events_; }
  const EngineState& engine_state() const { return state_; }

private:
  FlowParams flow_;
  ZoneGeometry geometry_;
  EventConfig events_;
  std::variant<std::monostate, CascadeDetector, StaticDetector> detector_;
  std::optional<GrayFrame> prev_;
  EngineState state_;
};

}  // namespace sofa
