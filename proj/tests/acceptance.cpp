// Acceptance run: one PASS/FAIL line per check, exit status 1 if any fails.
// Tolerances are fixed here, not taken from the command line.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <map>

#include "support.hpp"

using namespace sofa;
using namespace sofa_test;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 -------------------------------------------------------------------------
Outcome flow_oracle() {
  constexpr double kLimitS = 30.0;
  std::mt19937 rng(101);
  std::uniform_int_distribution<int> shift(-5, 5), pos(0, 320 * 240 - 1);
  int identical = 0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 100; ++i) {
    const auto prev = random_frame(rng, 320, 240, 0);
    GrayFrame curr;
    if (i % 2) {
      curr = random_frame(rng, 320, 240, 1);
    } else {
      // a displaced copy with sensor-like flips, so the best match is not trivial
      curr = shifted(i % 4 ? texture_frame(rng) : prev, shift(rng), shift(rng));
      for (int k = 0; k < 3000; ++k) curr.pixels[pos(rng)] ^= 0x11;
    }
    identical += compute_flow(prev, curr, FlowParams{}).vectors == naive_flow(prev, curr, FlowParams{}).vectors;
  }
  const double secs = seconds_since(t0);
  return {identical == 100 && secs < kLimitS,
          fmt("%d/100 pairs identical to naive exhaustive search, %.1f s (limit %.0f s)", identical, secs, kLimitS)};
}

// 2 -------------------------------------------------------------------------
Outcome known_shift() {
  std::mt19937 rng(202);
  const auto prev = texture_frame(rng);
  const auto curr = shifted(prev, 2, 1);
  const auto field = compute_flow(prev, curr, FlowParams{});
  int hits = 0, total = 0;
  for (int r = 1; r < field.rows() - 1; ++r)
    for (int c = 1; c < field.cols() - 1; ++c) {
      ++total;
      hits += field.at(c, r) == FlowVector{2, 1};
    }
  const double frac = static_cast<double>(hits) / total;
  return {frac >= 0.95, fmt("%d/%d interior cells report (2,1) = %.1f%% (need >= 95%%)", hits, total, 100 * frac)};
}

// 3 -------------------------------------------------------------------------
Outcome throughput() {
  constexpr double kBudgetMs = 66.0;
  const auto base = read_pgm(data_dir() / "bench" / "face.pgm");
  const auto frames = jittered_sequence(base, 300);
  ScanParams scan;
  scan.min_face_width = 80;
  EventConfig ev;
  ev.min_face_width = 80;
  VisionPipeline vision(std::make_shared<const Cascade>(load_cascade(data_dir() / "cascades" / "frontalface_default.json")),
                        scan, FlowParams{}, ZoneGeometry{}, ev);
  const auto r = bench_vision(vision, frames);
  return {r.frames == 300 && r.mean_ms < kBudgetMs && r.frames_with_face > 0,
          fmt("mean %.2f ms/frame over %zu frames, max %.2f ms, face in %zu frames (budget %.0f ms)", r.mean_ms,
              r.frames, r.max_ms, r.frames_with_face, kBudgetMs)};
}

// 4 -------------------------------------------------------------------------
std::set<int> pentatonic_set(int low, int high) {
  std::set<int> s;
  for (int p = low; p <= high; ++p) {
    const int o = (p - low) % 12;
    if (o == 0 || o == 3 || o == 5 || o == 7 || o == 10) s.insert(p);
  }
  return s;
}

Outcome event_rules() {
  const EventConfig base;
  const auto scale = pentatonic_set(base.pitch_low, base.pitch_high);
  std::mt19937 rng(404);
  std::uniform_real_distribution<double> comp(-4.0, 4.0), u01(0, 1);
  std::uniform_int_distribution<int> roi_w(40, 240);

  std::vector<std::string> failures;
  auto fail = [&](const std::string& what) {
    if (failures.size() < 5) failures.push_back(what);
  };
  if (pitch_for_grid_row(29, base) != 40) fail("bottom row pitch");
  if (pitch_for_grid_row(0, base) != 112) fail("top row pitch");

  long fields = 0, ons = 0, gated_fields = 0;
  constexpr int kSequences = 1000, kFramesPerSeq = 10;
  for (int s = 0; s < kSequences; ++s) {
    EngineState st;
    EventConfig cfg = base;
    std::map<std::pair<int, int>, std::int64_t> open;  // (ch, pitch) -> on frame
    const std::int64_t start = s * 100;
    for (int k = 0; k < kFramesPerSeq; ++k) {
      const std::int64_t frame = start + k;
      SmoothFlowField f(FlowParams{}, frame);
      const double density = u01(rng);
      for (auto& v : f.vectors)
        if (u01(rng) < density) v = {comp(rng), comp(rng)};

      std::optional<ZoneLayout> layout;
      const double face_roll = u01(rng);
      if (face_roll >= 0.15) {
        const int w = roi_w(rng);
        std::uniform_int_distribution<int> xs(0, 320 - w), ys(0, std::max(0, 240 - w));
        layout = compute_zones(FaceROI{{xs(rng), ys(rng), w, std::min(w, 240)}, 0});
      }
      cfg.midi_enabled = u01(rng) >= 0.15;
      const bool gated = !layout || layout->roi.rect.w < cfg.min_face_width || !cfg.midi_enabled;
      gated_fields += gated;

      const auto res = step(f, layout, st, cfg);
      ++fields;
      int frame_ons = 0;
      for (const auto& e : res.events) {
        if (e.frame_no != frame) fail("event stamped with wrong frame");
        if (e.channel < 1 || e.channel > 7) fail("channel outside 1..7");
        if (e.kind == NoteKind::On) {
          ++frame_ons;
          if (!scale.count(e.pitch)) fail(fmt("pitch %d not in scale", e.pitch));
          if (open.count({e.channel, e.pitch})) fail("second on before off");
          open[{e.channel, e.pitch}] = frame;
        } else {
          const auto it = open.find({e.channel, e.pitch});
          if (it == open.end()) fail("off without on");
          else {
            if (frame - it->second != 4) fail(fmt("off %lld frames after on", static_cast<long long>(frame - it->second)));
            open.erase(it);
          }
        }
      }
      if (frame_ons > 8) fail(fmt("%d note-ons in one frame", frame_ons));
      if (gated && frame_ons) fail("note-on while gated");
      ons += frame_ons;
    }
    for (const auto& e : flush(st)) {
      const auto it = open.find({e.channel, e.pitch});
      if (it == open.end()) fail("flushed off without on");
      else {
        if (e.frame_no - it->second != 4) fail("flushed off not 4 frames after on");
        open.erase(it);
      }
    }
    if (!open.empty()) fail("note left hanging");
  }
  std::string detail = fmt("%ld fields (%ld gated), %ld note-ons checked", fields, gated_fields, ons);
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty() && fields >= 10000 && ons > 0 && gated_fields > 0, detail};
}

// 5 -------------------------------------------------------------------------
Outcome offline_determinism() {
  TempDir dir("accept_offline");
  write_crafted_sequence(dir / "frames");
  std::vector<std::vector<std::uint8_t>> files;
  for (int run = 0; run < 2; ++run) {
    auto cfg = crafted_config(dir / "frames");
    cfg.output.smf = dir / ("run" + std::to_string(run) + ".mid");
    run_offline(cfg);
    files.push_back(read_bytes(*cfg.output.smf));
  }
  const bool same = files[0] == files[1];
  const bool golden = files[0] == crafted_golden_smf();
  return {same && golden, fmt("two runs %s, golden %s (%zu bytes)", same ? "identical" : "differ",
                              golden ? "matches" : "differs", files[0].size())};
}

// 6 -------------------------------------------------------------------------
Outcome integral_and_cascade() {
  std::mt19937 rng(606);
  const auto f = random_frame(rng);
  const auto ii = integral_image(f);
  std::uniform_int_distribution<int> xs(0, 320), ys(0, 240);
  int exact = 0;
  for (int i = 0; i < 1000; ++i) {
    int x0 = xs(rng), x1 = xs(rng), y0 = ys(rng), y1 = ys(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    exact += ii.rect_sum({x0, y0, x1 - x0, y1 - y0}) == naive_sum(f, x0, y0, x1 - x0, y1 - y0);
  }
  const auto cascade = two_stage_cascade();
  int agree = 0, accepted = 0;
  for (int i = 0; i < 100; ++i) {
    const auto frame = i % 2 ? random_frame(rng) : texture_frame(rng);
    const auto fii = integral_image(frame);
    std::uniform_int_distribution<int> scale(1, 4);
    const int s = 24 * scale(rng);
    std::uniform_int_distribution<int> wx(0, 320 - s), wy(0, 240 - s);
    const int x = wx(rng), y = wy(rng);
    const bool got = eval_window(fii, cascade, {x, y, s, s});
    agree += got == reference_accepts(frame, cascade, x, y, s, s);
    accepted += got;
  }
  return {exact == 1000 && agree == 100,
          fmt("rect_sum exact on %d/1000 rects; cascade agrees on %d/100 windows (%d accepted)", exact, agree,
              accepted)};
}

// 7 -------------------------------------------------------------------------
SampleTable bundled_samples() {
  SampleTable t;
  const char* names[] = {"brow.wav", "eye.wav", "cheek.wav", "mouth.wav"};
  for (int g = 0; g < kNumGroups; ++g)
    t[static_cast<std::size_t>(g)] =
        std::make_shared<const Sample>(load_sample(data_dir() / "samples" / names[g], static_cast<ZoneGroup>(g)));
  return t;
}

Outcome dsp() {
  std::vector<std::string> notes;
  bool ok = true;

  // impulse response, LPF bypassed
  {
    constexpr double kTol = 1e-6;
    DelayParams p;
    p.time_s = 0.25;
    p.feedback = 0.7;
    p.mix = 1.0;
    p.lpf_enabled = false;
    DelayLine d(kEngineRate);
    d.set_params(p);
    const long D = std::lround(p.time_s * kEngineRate);
    double worst = 0;
    for (long n = 0; n < 6 * D; ++n) {
      const double y = d.process(n == 0 ? 1.0 : 0.0);
      double want = n == 0 ? 1.0 : 0.0;
      if (n > 0 && n % D == 0) want = std::pow(p.feedback, static_cast<double>(n / D));
      worst = std::max(worst, std::abs(y - want));
    }
    ok &= worst <= kTol;
    notes.push_back(fmt("impulse max err %.2g (tol 1e-6)", worst));
  }

  // bounded output under 60 s of random events with maximum feedback
  {
    SynthConfig cfg;
    cfg.delay.feedback = 0.95;
    cfg.delay.mix = 1.0;
    cfg.delay.time_s = 0.3;
    cfg.delay.enabled = {true, true, true, true};
    Synth synth(cfg, bundled_samples());
    std::mt19937 rng(707);
    std::uniform_int_distribution<int> ch(1, 7), pitch(40, 112), vel(1, 127);
    std::uniform_int_distribution<std::int64_t> at(0, 60LL * kEngineRate);
    std::vector<std::pair<std::int64_t, MidiEvent>> evs;
    for (int i = 0; i < 3000; ++i) {
      const auto t = at(rng);
      const int c = ch(rng), p = pitch(rng);
      evs.push_back({t, note_on(c, p, vel(rng), 0)});
      evs.push_back({t + 4 * kEngineRate / 15, note_off(c, p, 0)});
    }
    std::stable_sort(evs.begin(), evs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [t, e] : evs) synth.schedule(e, t);
    // Each side: at most 16 voices per strip, 7 strips, unit sample peak and
    // unit gains; the delay can add at most mix*g/(1-g) of its input.
    const double bound = 16.0 * 7.0 * (1.0 + 0.95 / 0.05);
    double peak = 0;
    bool finite = true;
    for (std::int64_t done = 0; done < 60LL * kEngineRate; done += kBlockFrames) {
      const auto b = synth.render(kBlockFrames);
      for (std::size_t i = 0; i < b.left.size(); ++i) {
        finite &= std::isfinite(b.left[i]) && std::isfinite(b.right[i]);
        peak = std::max({peak, std::abs(double(b.left[i])), std::abs(double(b.right[i]))});
      }
    }
    const bool bounded = finite && peak <= bound;
    ok &= bounded;
    notes.push_back(fmt("60 s fuzz peak %.2f (bound %.0f)%s", peak, bound, finite ? "" : " NON-FINITE"));
  }

  // block-size invariance
  {
    auto render = [](std::size_t chunk) {
      SynthConfig cfg;
      cfg.delay.enabled = {true, false, true, false};
      cfg.delay.time_s = 0.07;
      Synth synth(cfg, bundled_samples());
      std::mt19937 rng(708);
      std::uniform_int_distribution<int> ch(1, 7), pitch(40, 112), vel(1, 127), at(0, 3 * kEngineRate);
      for (int i = 0; i < 80; ++i) {
        const int c = ch(rng), p = pitch(rng), t = at(rng);
        synth.schedule(note_on(c, p, vel(rng), 0), t);
        synth.schedule(note_off(c, p, 0), t + 12000);
      }
      const std::size_t total = 4 * kEngineRate;
      StereoBuffer out{std::vector<float>(total), std::vector<float>(total)};
      for (std::size_t pos = 0; pos < total; pos += chunk) {
        const std::size_t n = std::min(chunk, total - pos);
        synth.render(std::span(out.left).subspan(pos, n), std::span(out.right).subspan(pos, n), n);
      }
      return out;
    };
    const auto whole = render(4 * kEngineRate);
    const auto chunked = render(kBlockFrames);
    const bool same = whole.left == chunked.left && whole.right == chunked.right;
    ok &= same;
    notes.push_back(same ? "256-frame chunks sample-exact" : "chunked render differs");
  }

  // ADSR landmarks, on the function and in rendered output. A power-of-two
  // rate keeps sample times exact.
  {
    const AdsrParams p{0.0078125, 0.015625, 0.625, 0.03125};
    bool exact = adsr_gain(0, std::nullopt, p) == 0.0 && adsr_gain(p.attack_s, std::nullopt, p) == 1.0 &&
                 adsr_gain(p.attack_s + p.decay_s, std::nullopt, p) == p.sustain &&
                 adsr_gain(0.5, std::nullopt, p) == p.sustain;
    SynthConfig cfg;
    cfg.sample_rate = 32768;
    cfg.adsr = p;
    cfg.strips[0].pan = -1.0;  // left gain exactly 1
    SampleTable t;
    for (int g = 0; g < kNumGroups; ++g)
      t[static_cast<std::size_t>(g)] =
          std::make_shared<const Sample>(Sample{static_cast<ZoneGroup>(g), std::vector<float>(32768, 1.0f), "unit"});
    Synth synth(cfg, t);
    synth.note_on(note_on(1, 64, 127, 0));
    const auto out = synth.render(4096);
    exact &= out.left[0] == 0.0f && out.left[256] == 1.0f && out.left[768] == 0.625f && out.left[4095] == 0.625f;
    ok &= exact;
    notes.push_back(exact ? "ADSR 0/1/sustain exact" : "ADSR landmarks off");
  }

  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
  return {ok, detail};
}

// 8 -------------------------------------------------------------------------
Outcome smoothing() {
  FlowField constant(FlowParams{});
  for (auto& v : constant.vectors) v = {-3, 2};
  bool fixed = true;
  for (const auto& v : smooth(constant).vectors) fixed &= v.dx == -3.0 && v.dy == 2.0;

  std::mt19937 rng(808);
  std::uniform_int_distribution<int> comp(-4, 4);
  double worst = 1.0, sum = 0.0;
  for (int t = 0; t < 100; ++t) {
    FlowField f(FlowParams{});
    for (auto& v : f.vectors) v = {comp(rng), comp(rng)};
    const auto s = smooth(f);
    auto variance = [](const auto& vs) {
      double m = 0, q = 0;
      for (const auto& v : vs) m += v.dx + v.dy;
      m /= 2.0 * vs.size();
      for (const auto& v : vs) q += (v.dx - m) * (v.dx - m) + (v.dy - m) * (v.dy - m);
      return q / (2.0 * vs.size());
    };
    const double reduction = 1.0 - variance(s.vectors) / variance(f.vectors);
    worst = std::min(worst, reduction);
    sum += reduction;
  }
  return {fixed && worst >= 0.5, fmt("constant field %s; variance reduction mean %.1f%%, min %.1f%% (need >= 50%%)",
                                     fixed ? "unchanged" : "CHANGED", 100 * sum / 100.0, 100 * worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks = {
      {"flow matches naive search", flow_oracle},
      {"known shift recovered", known_shift},
      {"vision stage throughput", throughput},
      {"event rules under fuzz", event_rules},
      {"offline determinism", offline_determinism},
      {"integral image and cascade", integral_and_cascade},
      {"delay, bounds, blocks, envelope", dsp},
      {"flow smoothing", smoothing},
  };
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (i + 1) << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << checks[i].first << ": " << o.detail
              << std::endl;
  }
  return failed ? 1 : 0;
}
