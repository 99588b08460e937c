#pragma once

// Seven polyphonic sample players (one per MIDI channel) sharing four
// zone-group samples, a global ADSR, constant-power pan, per-strip L/R volume,
// and a per-group switchable feedback delay whose feedback path is low-pass
// filtered.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sofa/error.hpp"
#include "sofa/events.hpp"
#include "sofa/wav.hpp"
#include "sofa/zones.hpp"

namespace sofa {

inline constexpr int kEngineRate = 44100;
inline constexpr int kBlockFrames = 256;
inline constexpr int kNumGroups = 4;
inline constexpr int kNumStrips = 7;

struct Sample {
  ZoneGroup group = ZoneGroup::Brow;
  std::vector<float> frames;  // mono, peak-normalized
  std::string source_path;
};

using SampleTable = std::array<std::shared_ptr<const Sample>, kNumGroups>;

inline void normalize_peak(std::vector<float>& frames) {
  float peak = 0.0f;
  for (float v : frames) peak = std::max(peak, std::abs(v));
  if (peak > 0.0f)
    for (float& v : frames) v /= peak;
}

/// Loads a 16-bit PCM WAV at the engine rate; stereo is averaged to mono.
inline Sample load_sample(const std::filesystem::path& path, ZoneGroup group,
                          int engine_rate = kEngineRate) {
  const PcmData pcm = read_wav(path);
  if (pcm.sample_rate != engine_rate)
    throw FormatError("synth", path.string() + ": sample rate " + std::to_string(pcm.sample_rate) +
                                   " differs from engine rate " + std::to_string(engine_rate));
  Sample s{group, {}, path.string()};
  const std::size_t n = pcm.frames();
  if (n == 0) throw FormatError("synth", path.string() + ": no audio frames");
  s.frames.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (pcm.channels == 1) {
      s.frames[i] = pcm.samples[i] / 32768.0f;
    } else {
      const int sum = pcm.samples[2 * i] + pcm.samples[2 * i + 1];
      s.frames[i] = static_cast<float>(sum) / 65536.0f;
    }
  }
  normalize_peak(s.frames);
  return s;
}

// ---------------------------------------------------------------------------
// Envelope

struct AdsrParams {
  double attack_s = 0.005;
  double decay_s = 0.05;
  double sustain = 0.7;
  double release_s = 0.1;

  void validate() const {
    if (!(attack_s >= 0 && decay_s >= 0 && release_s >= 0))
      throw ValidationError("synth", "ADSR times must be >= 0");
    if (!(sustain >= 0 && sustain <= 1)) throw ValidationError("synth", "sustain must be in [0,1]");
  }
};

namespace detail {

inline double adsr_held(double t, const AdsrParams& p) {
  if (t < p.attack_s) return t / p.attack_s;
  const double td = t - p.attack_s;
  if (td < p.decay_s) return 1.0 - (1.0 - p.sustain) * (td / p.decay_s);
  return p.sustain;
}

}  // namespace detail

/// Linear ADSR. `t_since_off` is empty while the key is held; once released
/// the level falls from its value at release time to 0 over release_s.
inline double adsr_gain(double t_since_on, std::optional<double> t_since_off, const AdsrParams& p) {
  if (!t_since_off) return detail::adsr_held(t_since_on, p);
  const double level = detail::adsr_held(std::max(0.0, t_since_on - *t_since_off), p);
  if (*t_since_off >= p.release_s) return 0.0;
  return level * (1.0 - *t_since_off / p.release_s);
}

// ---------------------------------------------------------------------------
// Delay

struct DelayParams {
  double time_s = 0.5;
  double feedback = 0.5;
  double lpf_cutoff_hz = 2000.0;
  bool lpf_enabled = true;
  double mix = 0.5;
  std::array<bool, kNumGroups> enabled{};  // indexed by ZoneGroup

  void validate() const {
    if (!(time_s >= 0 && time_s <= 2)) throw ValidationError("synth", "delay time must be in [0,2] s");
    if (!(feedback >= 0 && feedback <= 0.95))
      throw ValidationError("synth", "delay feedback must be in [0,0.95]");
    if (!(mix >= 0 && mix <= 1)) throw ValidationError("synth", "delay mix must be in [0,1]");
    if (!(lpf_cutoff_hz > 0)) throw ValidationError("synth", "delay LPF cutoff must be > 0");
  }
};

/// Feedback delay: w[n] = x[n] + g*LPF(w[n-D]), y[n] = x[n] + mix*g*LPF(w[n-D]).
/// The k-th echo of an impulse therefore has amplitude g^k (LPF bypassed).
class DelayLine {
public:
  explicit DelayLine(int sample_rate = kEngineRate, double max_time_s = 2.0)
      : rate_(sample_rate),
        buf_(static_cast<std::size_t>(std::llround(max_time_s * sample_rate)) + 1, 0.0) {}

  void set_params(const DelayParams& p) {
    delay_ = std::clamp<long>(std::lround(p.time_s * rate_), 1L, static_cast<long>(buf_.size()) - 1);
    feedback_ = p.feedback;
    mix_ = p.mix;
    lpf_ = p.lpf_enabled;
    coeff_ = std::exp(-2.0 * std::numbers::pi * p.lpf_cutoff_hz / rate_);
  }

  void clear() {
    std::fill(buf_.begin(), buf_.end(), 0.0);
    lp_state_ = 0.0;
  }

  double process(double x) {
    const std::size_t n = buf_.size();
    const std::size_t read = (write_ + n - static_cast<std::size_t>(delay_)) % n;
    double tap = buf_[read];
    if (lpf_) tap = lp_state_ = (1.0 - coeff_) * tap + coeff_ * lp_state_;
    const double wet = feedback_ * tap;
    buf_[write_] = x + wet;
    write_ = (write_ + 1) % n;
    return x + mix_ * wet;
  }

  long delay_samples() const { return delay_; }

private:
  int rate_;
  std::vector<double> buf_;
  std::size_t write_ = 0;
  long delay_ = 1;
  double feedback_ = 0.0;
  double mix_ = 0.0;
  bool lpf_ = true;
  double coeff_ = 0.0;
  double lp_state_ = 0.0;
};

// ---------------------------------------------------------------------------
// Strips and voices

struct ChannelStrip {
  int channel = 1;
  ZoneGroup group = ZoneGroup::Brow;
  double pan = 0.0;  // -1 (left) .. 1 (right)
  double vol_l = 1.0;
  double vol_r = 1.0;
};

/// Constant-power pan law: theta = (pan+1)*pi/4, l = cos, r = sin.
inline std::pair<double, double> pan_gains(double pan) {
  const double theta = (std::clamp(pan, -1.0, 1.0) + 1.0) * std::numbers::pi / 4.0;
  return {std::cos(theta), std::sin(theta)};
}

/// Default topographic strips: left-side zones pan left, right-side zones
/// right, mouth centred.
inline std::array<ChannelStrip, kNumStrips> default_strips() {
  std::array<ChannelStrip, kNumStrips> strips;
  for (auto l : kAllZones) {
    double pan = 0.0;
    switch (l) {
      case ZoneLabel::BrowL:
      case ZoneLabel::EyeL:
      case ZoneLabel::CheekL: pan = -0.6; break;
      case ZoneLabel::BrowR:
      case ZoneLabel::EyeR:
      case ZoneLabel::CheekR: pan = 0.6; break;
      case ZoneLabel::Mouth: pan = 0.0; break;
    }
    strips[static_cast<std::size_t>(l)] = {channel_for(l), group_of(l), pan, 1.0, 1.0};
  }
  return strips;
}

struct SynthConfig {
  int sample_rate = kEngineRate;
  int max_voices = 16;  // per strip
  int reference_pitch = 64;
  bool fixed_rate = false;
  AdsrParams adsr;
  DelayParams delay;
  std::array<ChannelStrip, kNumStrips> strips = default_strips();

  void validate() const {
    if (sample_rate <= 0) throw ValidationError("synth", "sample_rate must be > 0");
    if (max_voices < 1) throw ValidationError("synth", "max_voices must be >= 1");
    adsr.validate();
    delay.validate();
    for (std::size_t i = 0; i < strips.size(); ++i)
      if (strips[i].channel != static_cast<int>(i) + 1)
        throw ValidationError("synth", "strip channels must be 1..7 in order");
  }
};

struct Voice {
  std::shared_ptr<const Sample> sample;
  int pitch = 0;
  double rate = 1.0;
  double playhead = 0.0;
  double velocity_gain = 0.0;
  std::uint64_t order = 0;  // allocation sequence; smallest is oldest
  std::int64_t age = 0;     // samples since note-on
  std::optional<std::int64_t> released_at;  // age at note-off
  bool done = false;
};

struct StereoBuffer {
  std::vector<float> left;
  std::vector<float> right;
};

class Synth {
public:
  explicit Synth(SynthConfig cfg, SampleTable samples = {})
      : cfg_(std::move(cfg)), samples_(std::move(samples)) {
    cfg_.validate();
    delays_.reserve(2 * kNumGroups);
    for (int i = 0; i < 2 * kNumGroups; ++i) delays_.emplace_back(cfg_.sample_rate);
    apply_delay_params();
    for (auto& v : voices_) v.reserve(static_cast<std::size_t>(cfg_.max_voices));
  }

  const SynthConfig& config() const { return cfg_; }
  std::int64_t now() const { return now_; }

  /// Playback rate for a MIDI pitch relative to the reference pitch.
  double rate_for(int pitch) const {
    return cfg_.fixed_rate ? 1.0 : std::exp2((pitch - cfg_.reference_pitch) / 12.0);
  }

  void note_on(const MidiEvent& e) {
    if (e.channel < 1 || e.channel > kNumStrips) return;
    auto& voices = voices_[static_cast<std::size_t>(e.channel - 1)];
    std::erase_if(voices, [](const Voice& v) { return v.done; });
    if (voices.size() >= static_cast<std::size_t>(cfg_.max_voices)) {
      const auto oldest = std::min_element(voices.begin(), voices.end(),
                                           [](const Voice& a, const Voice& b) { return a.order < b.order; });
      voices.erase(oldest);
    }
    Voice v;
    v.sample = samples_[static_cast<std::size_t>(cfg_.strips[static_cast<std::size_t>(e.channel - 1)].group)];
    v.pitch = e.pitch;
    v.rate = rate_for(e.pitch);
    v.velocity_gain = e.velocity / 127.0;
    v.order = next_order_++;
    voices.push_back(std::move(v));
  }

  void note_off(const MidiEvent& e) {
    if (e.channel < 1 || e.channel > kNumStrips) return;
    for (auto& v : voices_[static_cast<std::size_t>(e.channel - 1)])
      if (v.pitch == e.pitch && !v.released_at && !v.done) v.released_at = v.age;
  }

  void handle(const MidiEvent& e) {
    if (e.kind == NoteKind::On) note_on(e);
    else note_off(e);
  }

  /// Queues an event for sample-accurate application at absolute sample time
  /// `at` (clamped to now). Events at equal times keep their queue order.
  void schedule(const MidiEvent& e, std::int64_t at) {
    at = std::max(at, now_);
    const auto pos = std::upper_bound(scheduled_.begin(), scheduled_.end(), at,
                                      [](std::int64_t t, const Scheduled& s) { return t < s.at; });
    scheduled_.insert(pos, {at, e});
  }
  std::size_t scheduled_count() const { return scheduled_.size(); }

  std::size_t active_voices(int channel) const {
    const auto& vs = voices_[static_cast<std::size_t>(channel - 1)];
    return static_cast<std::size_t>(std::count_if(vs.begin(), vs.end(), [](const Voice& v) { return !v.done; }));
  }
  std::size_t active_voices() const {
    std::size_t n = 0;
    for (int ch = 1; ch <= kNumStrips; ++ch) n += active_voices(ch);
    return n;
  }
  const std::vector<Voice>& voices(int channel) const {
    return voices_[static_cast<std::size_t>(channel - 1)];
  }

  // Parameter setters; the session calls these only between blocks.
  void set_muted(bool m) { muted_ = m; }
  bool muted() const { return muted_; }
  void set_volume(int channel, double l, double r) {
    if (channel < 1 || channel > kNumStrips) throw ValidationError("synth", "channel must be 1..7");
    if (!(l >= 0 && r >= 0)) throw ValidationError("synth", "volumes must be >= 0");
    auto& s = cfg_.strips[static_cast<std::size_t>(channel - 1)];
    s.vol_l = l;
    s.vol_r = r;
  }
  void set_adsr(const AdsrParams& p) {
    p.validate();
    cfg_.adsr = p;
  }
  void set_delay(const DelayParams& p) {
    p.validate();
    for (int g = 0; g < kNumGroups; ++g)
      if (p.enabled[static_cast<std::size_t>(g)] && !cfg_.delay.enabled[static_cast<std::size_t>(g)]) {
        delays_[static_cast<std::size_t>(2 * g)].clear();
        delays_[static_cast<std::size_t>(2 * g + 1)].clear();
      }
    cfg_.delay = p;
    apply_delay_params();
  }
  /// Installs a new sample for a group and returns the previous one.
  std::shared_ptr<const Sample> set_sample(ZoneGroup g, std::shared_ptr<const Sample> s) {
    auto& slot = samples_[static_cast<std::size_t>(g)];
    std::swap(slot, s);
    return s;
  }
  const SampleTable& samples() const { return samples_; }

  /// Renders `frames` stereo frames into the given spans (which must hold at
  /// least that many), applying scheduled events at their exact sample times.
  void render(std::span<float> left, std::span<float> right, std::size_t frames) {
    std::size_t done = 0;
    while (done < frames) {
      while (!scheduled_.empty() && scheduled_.front().at <= now_) {
        handle(scheduled_.front().event);
        scheduled_.erase(scheduled_.begin());
      }
      std::size_t span = frames - done;
      if (!scheduled_.empty())
        span = std::min<std::size_t>(span, static_cast<std::size_t>(scheduled_.front().at - now_));
      render_span(left.subspan(done, span), right.subspan(done, span));
      done += span;
      now_ += static_cast<std::int64_t>(span);
    }
  }

  StereoBuffer render(std::size_t frames) {
    StereoBuffer out{std::vector<float>(frames), std::vector<float>(frames)};
    render(out.left, out.right, frames);
    return out;
  }

private:
  struct Scheduled {
    std::int64_t at;
    MidiEvent event;
  };

  void apply_delay_params() {
    for (auto& d : delays_) d.set_params(cfg_.delay);
  }

  void render_span(std::span<float> left, std::span<float> right) {
    const std::size_t n = left.size();
    for (auto& b : bus_) b.assign(n, 0.0);
    const double inv_rate = 1.0 / cfg_.sample_rate;

    for (std::size_t s = 0; s < voices_.size(); ++s) {
      const auto& strip = cfg_.strips[s];
      const auto [pl, pr] = pan_gains(strip.pan);
      const double gl = pl * strip.vol_l, gr = pr * strip.vol_r;
      auto& bus_l = bus_[2 * static_cast<std::size_t>(strip.group)];
      auto& bus_r = bus_[2 * static_cast<std::size_t>(strip.group) + 1];
      for (auto& v : voices_[s]) {
        if (v.done) continue;
        const std::vector<float>* data = v.sample ? &v.sample->frames : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
          std::optional<double> t_off;
          if (v.released_at) t_off = static_cast<double>(v.age - *v.released_at) * inv_rate;
          const double env = adsr_gain(static_cast<double>(v.age) * inv_rate, t_off, cfg_.adsr);
          if (v.released_at && env <= 0.0) {
            v.done = true;
            break;
          }
          const auto idx = static_cast<std::size_t>(v.playhead);
          if (!data || idx >= data->size()) {
            v.done = true;
            break;
          }
          const double frac = v.playhead - static_cast<double>(idx);
          const double a = (*data)[idx];
          const double b = idx + 1 < data->size() ? (*data)[idx + 1] : 0.0;
          const double x = (a + (b - a) * frac) * env * v.velocity_gain;
          bus_l[i] += x * gl;
          bus_r[i] += x * gr;
          v.playhead += v.rate;
          ++v.age;
        }
      }
      std::erase_if(voices_[s], [](const Voice& v) { return v.done; });
    }

    for (std::size_t i = 0; i < n; ++i) {
      double l = 0.0, r = 0.0;
      for (std::size_t g = 0; g < kNumGroups; ++g) {
        double bl = bus_[2 * g][i], br = bus_[2 * g + 1][i];
        if (cfg_.delay.enabled[g]) {
          bl = delays_[2 * g].process(bl);
          br = delays_[2 * g + 1].process(br);
        }
        l += bl;
        r += br;
      }
      left[i] = muted_ ? 0.0f : static_cast<float>(l);
      right[i] = muted_ ? 0.0f : static_cast<float>(r);
    }
  }

  SynthConfig cfg_;
  SampleTable samples_;
  std::array<std::vector<Voice>, kNumStrips> voices_;
  std::vector<DelayLine> delays_;  // [2*group + side]
  std::array<std::vector<double>, 2 * kNumGroups> bus_;
  std::vector<Scheduled> scheduled_;
  std::int64_t now_ = 0;
  std::uint64_t next_order_ = 0;
  bool muted_ = false;
};

/// Renders to interleaved 16-bit stereo.
inline PcmData to_pcm(const StereoBuffer& buf, int sample_rate = kEngineRate) {
  PcmData pcm{sample_rate, 2, {}};
  pcm.samples.resize(2 * buf.left.size());
  for (std::size_t i = 0; i < buf.left.size(); ++i) {
    pcm.samples[2 * i] = to_pcm16(buf.left[i]);
    pcm.samples[2 * i + 1] = to_pcm16(buf.right[i]);
  }
  return pcm;
}

}  // namespace sofa
