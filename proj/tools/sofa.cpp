// sofa: facial-motion-to-sound engine command line.
//
//   sofa run --config <path> [--live|--offline] [--input ...] [--midi-out ...]
//            [--render wav:...] [--serve <port>] [--static-roi x,y,w,h]
//   sofa cascade import <xml> -o <native.json>
//   sofa bench flow [--frames N] [--input ...]
//   sofa ports

#include <atomic>
#include <csignal>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "sofa/sofa.hpp"
#include "sofa/server.hpp"

#ifdef SOFA_HAVE_OPENCV
#include <opencv2/core.hpp>
#include <opencv2/videoio.hpp>
#endif

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted.store(true); }

#ifdef SOFA_HAVE_OPENCV
void install_camera_backend() {
  sofa::camera_backend() = [](int index, double fps) -> sofa::CameraGrabber {
    auto cap = std::make_shared<cv::VideoCapture>(index);
    if (!cap->isOpened())
      throw sofa::SourceUnavailable("frame-io", "cannot open camera " + std::to_string(index));
    cap->set(cv::CAP_PROP_FRAME_WIDTH, sofa::kDefaultWidth);
    cap->set(cv::CAP_PROP_FRAME_HEIGHT, sofa::kDefaultHeight);
    cap->set(cv::CAP_PROP_FPS, fps);
    return [cap]() -> std::optional<sofa::RgbImage> {
      cv::Mat bgr;
      if (!cap->read(bgr) || bgr.empty() || bgr.type() != CV_8UC3) return std::nullopt;
      sofa::RgbImage img{bgr.cols, bgr.rows, std::vector<std::uint8_t>(bgr.total() * 3)};
      for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<std::uint8_t>(y);
        for (int x = 0; x < bgr.cols; ++x) {
          auto* px = img.rgb.data() + (static_cast<std::size_t>(y) * bgr.cols + x) * 3;
          px[0] = row[3 * x + 2];
          px[1] = row[3 * x + 1];
          px[2] = row[3 * x];
        }
      }
      return img;
    };
  };
}
#endif

struct RunArgs {
  std::string config;
  bool live = false;
  bool offline = false;
  std::string input, midi_out, render, static_roi, events, audio_out;
  std::optional<int> serve;
};

int cmd_run(const RunArgs& a) {
  sofa::SessionConfig cfg = sofa::load_config(a.config);
  if (!a.input.empty()) sofa::set_input(cfg.source, a.input);
  if (!a.midi_out.empty()) sofa::set_midi_out(cfg.output, a.midi_out);
  if (!a.render.empty()) sofa::set_render(cfg.output, a.render);
  if (!a.audio_out.empty()) cfg.output.audio = a.audio_out;
  if (!a.static_roi.empty()) {
    cfg.detector.kind = sofa::DetectorConfig::Kind::Static;
    cfg.detector.static_roi = sofa::parse_rect(a.static_roi);
  }
  if (a.serve) cfg.serve_port = *a.serve;

  const bool offline = a.offline || (!a.live && !std::holds_alternative<sofa::CameraSpec>(cfg.source.kind));
  if (offline) {
    sofa::OfflineOptions opts;
    if (!a.events.empty()) opts.event_log = a.events;
    const auto result = sofa::run_offline(cfg, opts);
    std::size_t ons = 0;
    for (const auto& e : result.events) ons += e.kind == sofa::NoteKind::On;
    std::cout << "frames " << result.frames << ", note-ons " << ons << ", events " << result.events.size()
              << '\n';
    return 0;
  }

  sofa::LiveSession session(cfg);
  std::unique_ptr<sofa::UiServer> server;
  if (cfg.serve_port) {
    server = std::make_unique<sofa::UiServer>(
        static_cast<unsigned short>(*cfg.serve_port),
        [&session](const std::string& text) { return session.handle_control_text(text); },
        [&session] { return session.status().to_json().dump(); });
    session.set_endpoint(server.get());
    std::cout << "serving UI protocol on ws://127.0.0.1:" << server->port() << '\n';
  }
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  session.start();
  while (!session.finished()) {
    if (g_interrupted.load()) session.request_stop();
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  session.join();
  if (server) server->stop();
  const auto stats = session.stats();
  std::cout << "frames " << stats.frames << ", fps " << stats.fps << ", audio blocks " << stats.blocks
            << ", underruns " << stats.underruns << ", dropped overlays " << stats.dropped_overlays << '\n';
  for (const auto& err : session.errors()) std::cerr << err << '\n';
  return session.errors().empty() ? 0 : 1;
}

int cmd_cascade_import(const std::string& xml, const std::string& out) {
  const auto cascade = sofa::import_opencv_cascade(std::filesystem::path(xml));
  sofa::save_cascade(out, cascade);
  std::size_t weak = 0;
  for (const auto& s : cascade.stages) weak += s.weak.size();
  std::cout << "imported " << cascade.stages.size() << " stages, " << weak << " classifiers, window "
            << cascade.base_width << "x" << cascade.base_height << '\n';
  return 0;
}

int cmd_bench_flow(int frames, const std::string& input, const std::string& cascade_path, int min_face) {
  std::vector<sofa::GrayFrame> seq;
  if (input.empty()) {
    const auto base = sofa::read_pgm(sofa::data_dir() / "bench" / "face.pgm");
    seq = sofa::jittered_sequence(base, static_cast<std::size_t>(frames));
  } else {
    sofa::SourceSpec spec;
    sofa::set_input(spec, input);
    auto src = sofa::open_source(spec);
    while (seq.size() < static_cast<std::size_t>(frames)) {
      auto f = src->next();
      if (!f) break;
      seq.push_back(std::move(*f));
    }
  }
  sofa::ScanParams scan;
  scan.min_face_width = min_face;
  sofa::EventConfig ev;
  ev.min_face_width = min_face;
  sofa::VisionPipeline vision(std::make_shared<const sofa::Cascade>(sofa::load_cascade(cascade_path)), scan,
                              sofa::FlowParams{}, sofa::ZoneGeometry{}, ev);
  const auto r = sofa::bench_vision(vision, seq);
  std::cout << "frames " << r.frames << "\n"
            << "mean_ms_per_frame " << r.mean_ms << "\n"
            << "max_ms_per_frame " << r.max_ms << "\n"
            << "frames_with_face " << r.frames_with_face << "\n"
            << "note_ons " << r.note_ons << "\n"
            << "budget_ms " << 1000.0 / 15.0 << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef SOFA_HAVE_OPENCV
  install_camera_backend();
#endif
  CLI::App app{"sofa: facial motion to MIDI and audio"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a session");
  run_cmd->add_option("--config", run.config, "Session config (JSON)")->required();
  auto* live_flag = run_cmd->add_flag("--live", run.live, "Real-time three-stage pipeline");
  run_cmd->add_flag("--offline", run.offline, "Deterministic synchronous run over a file source")
      ->excludes(live_flag);
  run_cmd->add_option("--input", run.input, "y4m:<path> | pgm:<dir> | camera:<index>");
  run_cmd->add_option("--midi-out", run.midi_out, "smf:<path> | port:<name-or-index>");
  run_cmd->add_option("--render", run.render, "wav:<path>");
  run_cmd->add_option("--audio-out", run.audio_out, "Live audio: null | raw:<path> (s16le stereo 44.1 kHz)");
  run_cmd->add_option("--serve", run.serve, "Serve the UI protocol on this port");
  run_cmd->add_option("--static-roi", run.static_roi, "Fixed face rectangle x,y,w,h");
  run_cmd->add_option("--events", run.events, "Write the event log (offline)");

  auto* cascade_cmd = app.add_subcommand("cascade", "Cascade file utilities");
  cascade_cmd->require_subcommand(1);
  std::string xml, native;
  auto* import_cmd = cascade_cmd->add_subcommand("import", "Convert an OpenCV haarcascade XML");
  import_cmd->add_option("xml", xml, "Input XML")->required();
  import_cmd->add_option("-o,--output", native, "Output native cascade (JSON)")->required();

  auto* bench_cmd = app.add_subcommand("bench", "Throughput harnesses");
  bench_cmd->require_subcommand(1);
  int bench_frames = 300, bench_min_face = 80;
  std::string bench_input, bench_cascade = (sofa::data_dir() / "cascades" / "frontalface_default.json").string();
  auto* flow_cmd = bench_cmd->add_subcommand("flow", "Vision stage ms/frame");
  flow_cmd->add_option("--frames", bench_frames, "Frame count")->capture_default_str();
  flow_cmd->add_option("--input", bench_input, "y4m:<path> | pgm:<dir> (default: synthetic face sequence)");
  flow_cmd->add_option("--cascade", bench_cascade, "Native cascade file")->capture_default_str();
  flow_cmd->add_option("--min-face", bench_min_face, "Minimum face width")->capture_default_str();

  auto* ports_cmd = app.add_subcommand("ports", "List MIDI output ports");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(run);
    if (import_cmd->parsed()) return cmd_cascade_import(xml, native);
    if (flow_cmd->parsed()) return cmd_bench_flow(bench_frames, bench_input, bench_cascade, bench_min_face);
    if (ports_cmd->parsed()) {
      const auto ports = sofa::PortRegistry::instance().list();
      for (std::size_t i = 0; i < ports.size(); ++i) std::cout << i << ' ' << ports[i] << '\n';
      return 0;
    }
  } catch (const sofa::Error& e) {
    std::cerr << e.module() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
