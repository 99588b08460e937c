#pragma once

// Session orchestration. Offline mode runs the whole pipeline synchronously
// and deterministically. Live mode runs three stages (vision, audio, service)
// on their own threads, connected only by SPSC queues of immutable messages.

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sofa/config.hpp"
#include "sofa/control.hpp"
#include "sofa/midi.hpp"
#include "sofa/pipeline.hpp"
#include "sofa/spsc_queue.hpp"
#include "sofa/synth.hpp"
#include "sofa/wav.hpp"

namespace sofa {

/// Event at frame f plays at sample round(f / fps * rate).
inline std::int64_t frame_to_sample(std::int64_t frame, double fps, int rate) {
  return std::llround(static_cast<double>(frame) / fps * rate);
}

inline SampleTable load_samples(const SessionConfig& cfg) {
  SampleTable table;
  for (std::size_t g = 0; g < kNumGroups; ++g)
    table[g] = std::make_shared<const Sample>(
        load_sample(cfg.sample_paths[g], static_cast<ZoneGroup>(g), cfg.synth.sample_rate));
  return table;
}

inline void apply_vision_control(EventConfig& ev, const ControlMessage& msg) {
  if (std::holds_alternative<ToggleMidi>(msg)) ev.midi_enabled = !ev.midi_enabled;
  else if (const auto* t = std::get_if<SetThreshold>(&msg)) ev.threshold = t->value;
}

/// Applies an audio-stage control. LoadSample must already be resolved to a
/// Sample by the caller (loading never happens on the audio stage).
inline void apply_audio_control(Synth& synth, const ControlMessage& msg) {
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Mute>) synth.set_muted(m.muted ? *m.muted : !synth.muted());
        else if constexpr (std::is_same_v<M, SetVolume>) synth.set_volume(m.channel, m.left, m.right);
        else if constexpr (std::is_same_v<M, SetDelay>) synth.set_delay(merged(synth.config().delay, m));
        else if constexpr (std::is_same_v<M, SetAdsr>) synth.set_adsr(merged(synth.config().adsr, m));
      },
      msg);
}

inline void write_event_log(const std::filesystem::path& path, const std::vector<MidiEvent>& events) {
  std::ofstream out(path);
  if (!out) throw IoError("session", "cannot write " + path.string());
  for (const auto& e : events) out << e << '\n';
}

// ---------------------------------------------------------------------------
// Offline

struct OfflineResult {
  std::vector<MidiEvent> events;  // in emission order, trailing offs flushed
  std::int64_t frames = 0;
  std::optional<StereoBuffer> audio;
};

struct OfflineOptions {
  bool render_audio = false;  // also implied by cfg.output.wav
  std::optional<std::filesystem::path> event_log;
};

inline OfflineResult run_offline(SessionConfig cfg, const OfflineOptions& opts = {}) {
  cfg.source.throttle = false;
  cfg.validate();
  VisionPipeline vision(cfg);
  auto source = open_source(cfg.source);

  // Scripted controls, split by the stage that applies them.
  std::vector<ScriptedControl> vision_script, audio_script;
  for (const auto& s : cfg.script)
    (is_vision_control(s.control) ? vision_script : audio_script).push_back(s);
  std::stable_sort(audio_script.begin(), audio_script.end(),
                   [](const auto& a, const auto& b) { return a.frame_no < b.frame_no; });

  OfflineResult result;
  while (auto frame = source->next()) {
    for (const auto& s : vision_script)
      if (s.frame_no == frame->frame_no) apply_vision_control(vision.event_config(), s.control);
    auto out = vision.process(std::move(*frame));
    result.events.insert(result.events.end(), out.events.begin(), out.events.end());
    ++result.frames;
  }
  const auto tail = vision.flush();
  result.events.insert(result.events.end(), tail.begin(), tail.end());

  if (cfg.output.smf) {
    SmfSink sink(*cfg.output.smf, cfg.source.target_fps);
    for (const auto& e : result.events) sink.send(e);
    sink.close();
  }
  if (cfg.output.midi_port) {
    auto port = open_port(*cfg.output.midi_port);
    for (const auto& e : result.events) port->send(e);
    port->close();
  }
  if (opts.event_log) write_event_log(*opts.event_log, result.events);

  if (opts.render_audio || cfg.output.wav) {
    const int rate = cfg.synth.sample_rate;
    const double fps = cfg.source.target_fps;
    Synth synth(cfg.synth, load_samples(cfg));
    std::int64_t last_frame = result.frames;
    for (const auto& e : result.events) {
      synth.schedule(e, frame_to_sample(e.frame_no, fps, rate));
      last_frame = std::max(last_frame, e.frame_no + 1);
    }
    const auto total = static_cast<std::size_t>(frame_to_sample(last_frame, fps, rate) +
                                                std::llround(cfg.render_tail_s * rate));
    StereoBuffer audio{std::vector<float>(total), std::vector<float>(total)};
    std::size_t next_ctl = 0;
    for (std::size_t pos = 0; pos < total; pos += kBlockFrames) {
      while (next_ctl < audio_script.size() &&
             frame_to_sample(audio_script[next_ctl].frame_no, fps, rate) <= static_cast<std::int64_t>(pos)) {
        const auto& msg = audio_script[next_ctl++].control;
        if (const auto* ls = std::get_if<LoadSample>(&msg))
          synth.set_sample(ls->group, std::make_shared<const Sample>(load_sample(ls->path, ls->group, rate)));
        else
          apply_audio_control(synth, msg);
      }
      const std::size_t n = std::min<std::size_t>(kBlockFrames, total - pos);
      synth.render(std::span(audio.left).subspan(pos, n), std::span(audio.right).subspan(pos, n), n);
    }
    if (cfg.output.wav) write_wav(*cfg.output.wav, to_pcm(audio, rate));
    result.audio = std::move(audio);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Live

/// Destination for rendered blocks in live mode.
class AudioOut {
public:
  virtual ~AudioOut() = default;
  virtual void write(std::span<const float> left, std::span<const float> right) = 0;
  virtual void close() {}
};

class NullAudioOut final : public AudioOut {
public:
  void write(std::span<const float>, std::span<const float>) override {}
};

/// Interleaved signed 16-bit little-endian stereo to a file or FIFO
/// (e.g. piped into `aplay -f cd`).
class RawPcmOut final : public AudioOut {
public:
  explicit RawPcmOut(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("synth", "cannot open audio output " + path.string());
  }
  void write(std::span<const float> left, std::span<const float> right) override {
    buf_.resize(2 * left.size());
    for (std::size_t i = 0; i < left.size(); ++i) {
      buf_[2 * i] = to_pcm16(left[i]);
      buf_[2 * i + 1] = to_pcm16(right[i]);
    }
    out_.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(2 * buf_.size()));
    out_.flush();
  }

private:
  std::ofstream out_;
  std::vector<std::int16_t> buf_;
};

/// Keeps everything written; used for live-mode WAV capture and in tests.
class MemoryAudioOut final : public AudioOut {
public:
  void write(std::span<const float> left, std::span<const float> right) override {
    std::lock_guard lock(mutex_);
    buffer_.left.insert(buffer_.left.end(), left.begin(), left.end());
    buffer_.right.insert(buffer_.right.end(), right.begin(), right.end());
  }
  StereoBuffer buffer() const {
    std::lock_guard lock(mutex_);
    return buffer_;
  }

private:
  mutable std::mutex mutex_;
  StereoBuffer buffer_;
};

inline std::unique_ptr<AudioOut> open_audio_out(const std::optional<std::string>& spec) {
  if (!spec || *spec == "null") return std::make_unique<NullAudioOut>();
  if (spec->rfind("raw:", 0) == 0) return std::make_unique<RawPcmOut>(spec->substr(4));
  throw ValidationError("session", "audio output must be null or raw:<path>");
}

struct StatusSnapshot {
  bool midi_enabled = true;
  bool muted = false;
  double fps = 0.0;
  std::int64_t frame_no = -1;
  std::uint64_t underruns = 0;

  nlohmann::json to_json() const {
    return {{"v", kProtocolVersion}, {"type", "status"},     {"midi_enabled", midi_enabled},
            {"muted", muted},        {"fps", fps},           {"frame_no", frame_no},
            {"underruns", underruns}};
  }
};

/// Per-frame message from the vision stage to the service stage.
struct FrameMessage {
  std::shared_ptr<const GrayFrame> frame;
  OverlayFrame overlay;
  bool face = false;
  bool midi_enabled = true;
  double fps = 0.0;
};

inline std::string base64_encode(std::span<const std::uint8_t> data) {
  static constexpr char alphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < data.size(); i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += alphabet[v & 63];
  }
  if (i < data.size()) {
    std::uint32_t v = data[i] << 16;
    if (i + 1 < data.size()) v |= data[i + 1] << 8;
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += i + 1 < data.size() ? alphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline nlohmann::json overlay_to_json(const OverlayFrame& o) {
  nlohmann::json segs = nlohmann::json::array(), trig = nlohmann::json::array();
  for (const auto& s : o.segments) segs.push_back({{"x", s.x}, {"y", s.y}, {"dx", s.dx}, {"dy", s.dy}});
  for (const auto& t : o.triggers)
    trig.push_back({{"x", t.x}, {"y", t.y}, {"group", to_string(t.group)}, {"ttl", t.ttl_frames}});
  return {{"frame_no", o.frame_no}, {"segments", segs}, {"triggers", trig}};
}

inline std::string frame_message_json(const FrameMessage& m, const StatusSnapshot& status) {
  nlohmann::json j{{"v", kProtocolVersion},
                   {"type", "frame"},
                   {"frame_no", m.frame->frame_no},
                   {"width", m.frame->width},
                   {"height", m.frame->height},
                   {"pixels", base64_encode(m.frame->pixels)},
                   {"face", m.face},
                   {"overlay", overlay_to_json(m.overlay)},
                   {"status", status.to_json()}};
  return j.dump();
}

/// Transport used by the service stage; implemented by the WebSocket server.
class UiEndpoint {
public:
  virtual ~UiEndpoint() = default;
  /// Lossy: may be dropped per client under backpressure.
  virtual void broadcast_frame(std::string text) = 0;
  /// Lossless.
  virtual void broadcast_status(std::string text) = 0;
};

struct LiveStats {
  std::int64_t frames = 0;
  std::uint64_t underruns = 0;
  std::uint64_t blocks = 0;
  std::uint64_t dropped_overlays = 0;
  double fps = 0.0;
};

class LiveSession {
public:
  struct Options {
    std::unique_ptr<AudioOut> audio;  // defaults from cfg.output.audio
    int latency_blocks = 2;           // device buffer depth for underrun accounting
  };

  explicit LiveSession(SessionConfig cfg) : LiveSession(std::move(cfg), Options{nullptr, 2}) {}

  LiveSession(SessionConfig cfg, Options opts)
      : cfg_(std::move(cfg)), audio_out_(std::move(opts.audio)), latency_blocks_(opts.latency_blocks) {
    cfg_.source.throttle = true;
    cfg_.validate();
    vision_ = std::make_unique<VisionPipeline>(cfg_);
    synth_ = std::make_unique<Synth>(cfg_.synth, load_samples(cfg_));
    if (!audio_out_) audio_out_ = open_audio_out(cfg_.output.audio);
    if (cfg_.output.wav) recorder_ = std::make_unique<MemoryAudioOut>();
    if (cfg_.output.midi_port) midi_ = open_port(*cfg_.output.midi_port);
    else if (cfg_.output.smf) midi_ = std::make_unique<SmfSink>(*cfg_.output.smf, cfg_.source.target_fps);
    status_.midi_enabled = cfg_.events.midi_enabled;
  }

  ~LiveSession() {
    request_stop();
    join();
  }

  void set_endpoint(UiEndpoint* ep) { endpoint_ = ep; }

  void start() {
    source_ = open_source(cfg_.source);
    vision_thread_ = std::thread([this] { vision_loop(); });
    audio_thread_ = std::thread([this] { audio_loop(); });
    service_thread_ = std::thread([this] { service_loop(); });
  }

  void request_stop() { stop_.store(true); }

  /// Waits for all stages to finish (end of a file source, or a stop request).
  void join() {
    for (auto* t : {&vision_thread_, &audio_thread_, &service_thread_})
      if (t->joinable()) t->join();
  }

  bool finished() const { return service_done_.load(); }

  /// Service-stage entry point: validates, resolves sample loads, and routes
  /// the control to the stage that owns the parameter. Single caller thread.
  void apply_control(const ControlMessage& msg) {
    if (const auto* ls = std::get_if<LoadSample>(&msg)) {
      auto s = std::make_shared<const Sample>(load_sample(ls->path, ls->group, cfg_.synth.sample_rate));
      push_blocking(audio_q_, AudioMsg{InstallSample{ls->group, std::move(s)}});
      return;
    }
    if (const auto* sd = std::get_if<SetDelay>(&msg)) merged(DelayParams{}, *sd).validate();
    if (const auto* sa = std::get_if<SetAdsr>(&msg)) merged(AdsrParams{}, *sa).validate();
    if (is_vision_control(msg)) push_blocking(vision_ctl_q_, msg);
    else push_blocking(audio_q_, AudioMsg{msg});
  }

  /// Handles a control in text form and returns the JSON reply.
  std::string handle_control_text(const std::string& text) {
    try {
      const auto msg = parse_control(text);
      apply_control(msg);
      return nlohmann::json{{"v", kProtocolVersion}, {"type", "ack"}, {"control", control_name(msg)}}.dump();
    } catch (const Error& e) {
      return nlohmann::json{{"v", kProtocolVersion}, {"type", "error"}, {"module", e.module()},
                            {"message", e.what()}}
          .dump();
    }
  }

  StatusSnapshot status() const {
    std::lock_guard lock(status_mutex_);
    return status_;
  }

  LiveStats stats() const {
    LiveStats s;
    s.frames = frames_.load();
    s.underruns = underruns_.load();
    s.blocks = blocks_.load();
    s.dropped_overlays = dropped_overlays_.load();
    s.fps = fps_.load();
    return s;
  }

  std::vector<MidiEvent> midi_events() const {
    std::lock_guard lock(events_mutex_);
    return sent_events_;
  }

  /// Optional observer on the service stage, called for every frame message.
  void on_frame(std::function<void(const FrameMessage&)> fn) { frame_observer_ = std::move(fn); }

private:
  struct TimedEvent {
    MidiEvent event;
  };
  struct InstallSample {
    ZoneGroup group;
    std::shared_ptr<const Sample> sample;
  };
  struct EndOfStream {};
  using AudioMsg = std::variant<std::monostate, TimedEvent, ControlMessage, InstallSample, EndOfStream>;

  struct AudioReport {
    bool muted = false;
    std::shared_ptr<const Sample> retired;  // released on the service stage
  };

  template <typename Q, typename T>
  void push_blocking(Q& q, T&& v) {
    while (!q.try_push(std::forward<T>(v))) std::this_thread::sleep_for(std::chrono::microseconds(200));
  }

  void vision_loop() {
    auto window_start = std::chrono::steady_clock::now();
    int window_frames = 0;
    try {
      while (!stop_.load()) {
        while (auto c = vision_ctl_q_.try_pop()) apply_vision_control(vision_->event_config(), *c);
        auto frame = source_->next();
        if (!frame) break;
        auto out = vision_->process(std::move(*frame));
        for (const auto& e : out.events) emit(e);
        ++frames_;
        ++window_frames;
        const auto now = std::chrono::steady_clock::now();
        const double secs = std::chrono::duration<double>(now - window_start).count();
        if (secs >= 1.0 || (window_frames >= 2 && fps_.load() == 0.0)) {
          fps_.store(window_frames / secs);
          window_start = now;
          window_frames = 0;
        }
        FrameMessage msg{std::make_shared<const GrayFrame>(std::move(out.frame)), std::move(out.overlay),
                         out.roi.has_value(), vision_->event_config().midi_enabled, fps_.load()};
        if (!overlay_q_.try_push(std::move(msg))) ++dropped_overlays_;
      }
    } catch (const Error& e) {
      report_error(e);
    }
    for (const auto& e : vision_->flush()) emit(e);
    if (midi_) {
      try {
        midi_->close();
      } catch (const Error& e) {
        report_error(e);
      }
    }
    push_blocking(audio_q_, AudioMsg{EndOfStream{}});
    vision_done_.store(true);
  }

  void emit(const MidiEvent& e) {
    if (midi_) midi_->send(e);
    {
      std::lock_guard lock(events_mutex_);
      sent_events_.push_back(e);
    }
    push_blocking(audio_q_, AudioMsg{TimedEvent{e}});
  }

  void audio_loop() {
    using clock = std::chrono::steady_clock;
    const int rate = cfg_.synth.sample_rate;
    const auto period = std::chrono::duration<double>(static_cast<double>(kBlockFrames) / rate);
    const std::int64_t frame_samples = std::llround(rate / cfg_.source.target_fps);
    std::vector<float> left(kBlockFrames), right(kBlockFrames);
    bool ending = false;
    std::int64_t end_at = 0;
    std::uint64_t block = 0;
    const auto t0 = clock::now();
    for (;;) {
      while (auto m = audio_q_.try_pop()) {
        std::visit(
            [&](auto& v) {
              using V = std::decay_t<decltype(v)>;
              if constexpr (std::is_same_v<V, TimedEvent>) {
                const std::int64_t now = synth_->now();
                const std::int64_t at =
                    std::clamp(frame_to_sample(v.event.frame_no, cfg_.source.target_fps, rate), now,
                               now + frame_samples);
                synth_->schedule(v.event, at);
              } else if constexpr (std::is_same_v<V, ControlMessage>) {
                apply_audio_control(*synth_, v);
                report_q_.try_push(AudioReport{synth_->muted(), nullptr});
              } else if constexpr (std::is_same_v<V, InstallSample>) {
                auto old = synth_->set_sample(v.group, std::move(v.sample));
                report_q_.try_push(AudioReport{synth_->muted(), std::move(old)});
              } else if constexpr (std::is_same_v<V, EndOfStream>) {
                ending = true;
                end_at = synth_->now() + static_cast<std::int64_t>(cfg_.render_tail_s * rate);
              }
            },
            *m);
      }
      if (ending && synth_->scheduled_count() == 0 && synth_->now() >= end_at) break;

      synth_->render(left, right, kBlockFrames);
      audio_out_->write(left, right);
      if (recorder_) recorder_->write(left, right);
      ++blocks_;
      ++block;
      // The device needs block k by t0 + (k - latency) periods.
      const auto deadline = t0 + std::chrono::duration_cast<clock::duration>(
                                     period * static_cast<double>(block + latency_blocks_ - 1));
      if (clock::now() > deadline) ++underruns_;
      std::this_thread::sleep_until(t0 + std::chrono::duration_cast<clock::duration>(
                                             period * static_cast<double>(block)));
    }
    audio_out_->close();
    if (recorder_ && cfg_.output.wav) {
      try {
        write_wav(*cfg_.output.wav, to_pcm(recorder_->buffer(), rate));
      } catch (const Error& e) {
        report_error(e);
      }
    }
    audio_done_.store(true);
  }

  void service_loop() {
    for (;;) {
      bool changed = false;
      while (auto r = report_q_.try_pop()) {
        std::lock_guard lock(status_mutex_);
        if (status_.muted != r->muted) changed = true;
        status_.muted = r->muted;
      }
      while (auto m = overlay_q_.try_pop()) {
        StatusSnapshot snap;
        {
          std::lock_guard lock(status_mutex_);
          if (status_.midi_enabled != m->midi_enabled) changed = true;
          status_.midi_enabled = m->midi_enabled;
          status_.fps = m->fps;
          status_.frame_no = m->frame->frame_no;
          status_.underruns = underruns_.load();
          snap = status_;
        }
        if (frame_observer_) frame_observer_(*m);
        if (changed && endpoint_) {
          endpoint_->broadcast_status(snap.to_json().dump());
          changed = false;
        }
        if (endpoint_) endpoint_->broadcast_frame(frame_message_json(*m, snap));
      }
      if (changed && endpoint_) {
        endpoint_->broadcast_status(status().to_json().dump());
      }
      if (vision_done_.load() && audio_done_.load() && overlay_q_.empty()) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    service_done_.store(true);
  }

  void report_error(const Error& e) {
    std::lock_guard lock(events_mutex_);
    errors_.push_back(e.module() + ": " + e.what());
  }

public:
  std::vector<std::string> errors() const {
    std::lock_guard lock(events_mutex_);
    return errors_;
  }

private:
  SessionConfig cfg_;
  std::unique_ptr<AudioOut> audio_out_;
  int latency_blocks_;
  std::unique_ptr<MemoryAudioOut> recorder_;
  std::unique_ptr<MidiSink> midi_;
  std::unique_ptr<VisionPipeline> vision_;  // vision stage
  std::unique_ptr<Synth> synth_;            // audio stage
  std::unique_ptr<FrameSource> source_;
  UiEndpoint* endpoint_ = nullptr;
  std::function<void(const FrameMessage&)> frame_observer_;

  SpscQueue<ControlMessage> vision_ctl_q_{64};
  SpscQueue<AudioMsg> audio_q_{4096};
  SpscQueue<FrameMessage> overlay_q_{4};
  SpscQueue<AudioReport> report_q_{64};

  std::thread vision_thread_, audio_thread_, service_thread_;
  std::atomic<bool> stop_{false};
  std::atomic<bool> vision_done_{false}, audio_done_{false}, service_done_{false};
  std::atomic<std::int64_t> frames_{0};
  std::atomic<std::uint64_t> underruns_{0}, blocks_{0}, dropped_overlays_{0};
  std::atomic<double> fps_{0.0};

  mutable std::mutex status_mutex_;  // service-stage status mirror
  StatusSnapshot status_;
  mutable std::mutex events_mutex_;
  std::vector<MidiEvent> sent_events_;
  std::vector<std::string> errors_;
};

}  // namespace sofa
