#pragma once

// Boosted attentional cascade of Haar-like rectangle features: native JSON
// persistence, an importer for OpenCV's haarcascade XML, and per-window
// evaluation against an integral image.
//
// Evaluation rule for a window of area N and pixel std-dev sd (floored at 1):
//   value = sum_i(weight_i * rect_sum(rect_i)) / (N * sd)
//   weak  = value >= node_threshold ? pass : fail
//   stage passes iff sum(weak) >= stage threshold
// Feature rects scale with the window by round-half-up on x, y, w, h. When a
// feature is zero-mean in the base window, the first rect's weight is
// re-derived after scaling so the scaled feature stays zero-mean.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "sofa/error.hpp"
#include "sofa/integral_image.hpp"

namespace sofa {

struct WeightedRect {
  int x = 0, y = 0, w = 0, h = 0;
  double weight = 0.0;
};

struct WeakClassifier {
  std::vector<WeightedRect> rects;  // 1-3 rects in base-window coords
  double node_threshold = 0.0;
  double pass_value = 0.0;
  double fail_value = 0.0;
};

struct Stage {
  double threshold = 0.0;
  std::vector<WeakClassifier> weak;
};

struct Cascade {
  int base_width = 24;
  int base_height = 24;
  std::vector<Stage> stages;

  void validate() const {
    if (base_width <= 0 || base_height <= 0)
      throw FormatError("face-detect", "cascade base window must be positive");
    if (stages.empty()) throw FormatError("face-detect", "cascade has no stages");
    for (const auto& s : stages) {
      if (s.weak.empty()) throw FormatError("face-detect", "cascade stage has no classifiers");
      for (const auto& wc : s.weak) {
        if (wc.rects.empty() || wc.rects.size() > 3)
          throw FormatError("face-detect", "weak classifier needs 1-3 rects");
        for (const auto& r : wc.rects) {
          if (r.x < 0 || r.y < 0 || r.w < 0 || r.h < 0 || r.x + r.w > base_width ||
              r.y + r.h > base_height)
            throw FormatError("face-detect", "feature rect outside base window");
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Native JSON format

inline nlohmann::json cascade_to_json(const Cascade& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : c.stages) {
    nlohmann::json weak = nlohmann::json::array();
    for (const auto& wc : s.weak) {
      nlohmann::json rects = nlohmann::json::array();
      for (const auto& r : wc.rects)
        rects.push_back({{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}, {"weight", r.weight}});
      weak.push_back({{"rects", rects},
                      {"node_threshold", wc.node_threshold},
                      {"pass", wc.pass_value},
                      {"fail", wc.fail_value}});
    }
    stages.push_back({{"threshold", s.threshold}, {"weak", weak}});
  }
  return {{"base_window", {{"width", c.base_width}, {"height", c.base_height}}},
          {"stages", stages}};
}

inline Cascade cascade_from_json(const nlohmann::json& j) {
  Cascade c;
  try {
    c.base_width = j.at("base_window").at("width").get<int>();
    c.base_height = j.at("base_window").at("height").get<int>();
    for (const auto& js : j.at("stages")) {
      Stage s;
      s.threshold = js.at("threshold").get<double>();
      for (const auto& jw : js.at("weak")) {
        WeakClassifier wc;
        for (const auto& jr : jw.at("rects"))
          wc.rects.push_back({jr.at("x").get<int>(), jr.at("y").get<int>(), jr.at("w").get<int>(),
                              jr.at("h").get<int>(), jr.at("weight").get<double>()});
        wc.node_threshold = jw.at("node_threshold").get<double>();
        wc.pass_value = jw.at("pass").get<double>();
        wc.fail_value = jw.at("fail").get<double>();
        s.weak.push_back(std::move(wc));
      }
      c.stages.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("face-detect", std::string("bad cascade JSON: ") + e.what());
  }
  c.validate();
  return c;
}

inline Cascade load_cascade(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("face-detect", "cannot open cascade " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("face-detect", path.string() + ": " + e.what());
  }
  return cascade_from_json(j);
}

inline void save_cascade(const std::filesystem::path& path, const Cascade& c) {
  std::ofstream out(path);
  if (!out) throw IoError("face-detect", "cannot write cascade " + path.string());
  out << cascade_to_json(c).dump() << '\n';
}

// ---------------------------------------------------------------------------
// OpenCV haarcascade XML import (stump-based BOOST/HAAR cascades)

namespace detail {

template <typename T>
std::vector<T> parse_numbers(const std::string& text, const std::string& what) {
  std::istringstream ss(text);
  std::vector<T> out;
  T v{};
  while (ss >> v) out.push_back(v);
  if (!ss.eof()) throw FormatError("face-detect", "non-numeric " + what + ": " + text);
  return out;
}

}  // namespace detail

inline Cascade import_opencv_cascade(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw FormatError("face-detect", std::string("cascade XML: ") + e.what());
  }
  const auto root = tree.get_child_optional("opencv_storage");
  if (!root) throw FormatError("face-detect", "cascade XML: missing opencv_storage");
  const auto node = root->get_child_optional("cascade");
  if (!node)
    throw FormatError("face-detect", "cascade XML: only the new-style <cascade> layout is supported");

  const std::string stage_type = node->get<std::string>("stageType", "BOOST");
  const std::string feature_type = node->get<std::string>("featureType", "HAAR");
  if (stage_type != "BOOST" || feature_type != "HAAR")
    throw FormatError("face-detect", "cascade XML: need BOOST stages with HAAR features");

  Cascade c;
  c.base_width = node->get<int>("width", 0);
  c.base_height = node->get<int>("height", 0);

  std::vector<std::vector<WeightedRect>> features;
  for (const auto& [key, f] : node->get_child("features", pt::ptree{})) {
    if (f.get<int>("tilted", 0) != 0)
      throw FormatError("face-detect", "cascade XML: tilted features are not supported");
    std::vector<WeightedRect> rects;
    for (const auto& [rk, r] : f.get_child("rects", pt::ptree{})) {
      const auto v = detail::parse_numbers<double>(r.get_value<std::string>(), "rect");
      if (v.size() != 5) throw FormatError("face-detect", "cascade XML: rect needs 5 numbers");
      rects.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]),
                       static_cast<int>(v[3]), v[4]});
    }
    features.push_back(std::move(rects));
  }

  for (const auto& [sk, s] : node->get_child("stages", pt::ptree{})) {
    Stage stage;
    stage.threshold = s.get<double>("stageThreshold");
    for (const auto& [wk, w] : s.get_child("weakClassifiers", pt::ptree{})) {
      const auto nodes = detail::parse_numbers<double>(w.get<std::string>("internalNodes"), "internalNodes");
      const auto leaves = detail::parse_numbers<double>(w.get<std::string>("leafValues"), "leafValues");
      if (nodes.size() != 4 || leaves.size() != 2)
        throw FormatError("face-detect", "cascade XML: only stump classifiers are supported");
      const auto idx = static_cast<std::size_t>(nodes[2]);
      if (nodes[2] < 0 || idx >= features.size())
        throw FormatError("face-detect", "cascade XML: feature index out of range");
      // OpenCV takes the left leaf when value < threshold.
      stage.weak.push_back({features[idx], nodes[3], leaves[1], leaves[0]});
    }
    c.stages.push_back(std::move(stage));
  }
  c.validate();
  return c;
}

inline Cascade import_opencv_cascade(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("face-detect", "cannot open " + path.string());
  return import_opencv_cascade(in);
}

// ---------------------------------------------------------------------------
// Evaluation

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

/// A cascade with feature rects resolved for one window size.
class ScaledCascade {
public:
  struct Feature {
    std::vector<WeightedRect> rects;  // window-relative
    double node_threshold;
    double pass_value;
    double fail_value;
  };
  struct ScaledStage {
    double threshold;
    std::vector<Feature> features;
  };

  ScaledCascade(const Cascade& c, int window_w, int window_h)
      : window_w_(window_w), window_h_(window_h) {
    const double sx = static_cast<double>(window_w) / c.base_width;
    const double sy = static_cast<double>(window_h) / c.base_height;
    stages_.reserve(c.stages.size());
    for (const auto& s : c.stages) {
      ScaledStage out{s.threshold, {}};
      out.features.reserve(s.weak.size());
      for (const auto& wc : s.weak) {
        Feature f{{}, wc.node_threshold, wc.pass_value, wc.fail_value};
        double base_balance = 0.0;
        for (const auto& r : wc.rects) {
          base_balance += r.weight * static_cast<double>(r.w) * r.h;
          f.rects.push_back({round_half_up(r.x * sx), round_half_up(r.y * sy),
                             round_half_up(r.w * sx), round_half_up(r.h * sy), r.weight});
        }
        const double area0 = static_cast<double>(f.rects[0].w) * f.rects[0].h;
        if (f.rects.size() > 1 && base_balance == 0.0 && area0 > 0) {
          double rest = 0.0;
          for (std::size_t i = 1; i < f.rects.size(); ++i)
            rest += f.rects[i].weight * static_cast<double>(f.rects[i].w) * f.rects[i].h;
          f.rects[0].weight = -rest / area0;
        }
        out.features.push_back(std::move(f));
      }
      stages_.push_back(std::move(out));
    }
  }

  int window_width() const { return window_w_; }
  int window_height() const { return window_h_; }
  const std::vector<ScaledStage>& stages() const { return stages_; }

  /// Caller guarantees the window lies inside the image.
  bool accepts(const IntegralImage& ii, int wx, int wy) const {
    const Rect win{wx, wy, window_w_, window_h_};
    const std::int64_t n = win.area();
    if (n <= 0) return false;
    const std::int64_t s = ii.rect_sum_unchecked(win);
    const std::int64_t sq = ii.rect_sq_sum_unchecked(win);
    const double var = static_cast<double>(n * sq - s * s) / (static_cast<double>(n) * n);
    const double sd = std::max(1.0, var > 0 ? std::sqrt(var) : 0.0);
    const double norm = 1.0 / (static_cast<double>(n) * sd);

    for (const auto& stage : stages_) {
      double stage_sum = 0.0;
      for (const auto& f : stage.features) {
        double v = 0.0;
        for (const auto& r : f.rects)
          v += r.weight * static_cast<double>(
                              ii.rect_sum_unchecked({wx + r.x, wy + r.y, r.w, r.h}));
        stage_sum += (v * norm >= f.node_threshold) ? f.pass_value : f.fail_value;
      }
      if (stage_sum < stage.threshold) return false;
    }
    return true;
  }

private:
  int window_w_;
  int window_h_;
  std::vector<ScaledStage> stages_;
};

inline bool eval_window(const IntegralImage& ii, const Cascade& cascade, const Rect& window) {
  if (window.x < 0 || window.y < 0 || window.right() > ii.width() || window.bottom() > ii.height())
    throw OutOfBounds("face-detect", "window outside image");
  return ScaledCascade(cascade, window.w, window.h).accepts(ii, window.x, window.y);
}

}  // namespace sofa
