#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace sofa;
using namespace sofa_test;

TEST(IntegralImage, SinglePixel) {
  GrayFrame f(1, 1, 7);
  const auto ii = integral_image(f);
  EXPECT_EQ(rect_sum(ii, {0, 0, 1, 1}), 7);
  EXPECT_EQ(ii.table(0, 0), 0);
  EXPECT_EQ(ii.table(1, 1), 7);
}

TEST(IntegralImage, UniformOnes) {
  const auto ii = integral_image(GrayFrame(320, 240, 1));
  EXPECT_EQ(rect_sum(ii, {0, 0, 320, 240}), 320 * 240);
  EXPECT_EQ(rect_sum(ii, {17, 3, 40, 9}), 360);
  EXPECT_EQ(rect_sum(ii, {5, 5, 0, 10}), 0);
}

TEST(IntegralImage, TableEntryIsSumAboveLeft) {
  std::mt19937 rng(1);
  const auto f = random_frame(rng, 13, 9);
  const auto ii = integral_image(f);
  for (int y = 0; y <= 9; ++y)
    for (int x = 0; x <= 13; ++x) EXPECT_EQ(ii.table(x, y), naive_sum(f, 0, 0, x, y));
}

TEST(IntegralImage, RandomRectsMatchNaiveSum) {
  std::mt19937 rng(2);
  const auto f = random_frame(rng);
  const auto ii = integral_image(f);
  std::uniform_int_distribution<int> xs(0, 320), ys(0, 240);
  for (int i = 0; i < 1000; ++i) {
    int x0 = xs(rng), x1 = xs(rng), y0 = ys(rng), y1 = ys(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    EXPECT_EQ(ii.rect_sum({x0, y0, x1 - x0, y1 - y0}), naive_sum(f, x0, y0, x1 - x0, y1 - y0));
  }
}

TEST(IntegralImage, OutOfBounds) {
  const auto ii = integral_image(GrayFrame(10, 10));
  EXPECT_THROW(ii.rect_sum({-1, 0, 2, 2}), OutOfBounds);
  EXPECT_THROW(ii.rect_sum({5, 5, 6, 1}), OutOfBounds);
  EXPECT_THROW(ii.rect_sum({0, 0, -1, 1}), OutOfBounds);
}

TEST(Cascade, JsonRoundTrip) {
  const auto c = two_stage_cascade();
  const auto back = cascade_from_json(cascade_to_json(c));
  ASSERT_EQ(back.stages.size(), 2u);
  EXPECT_EQ(back.stages[1].weak[0].rects[1].weight, 3.0);
  EXPECT_EQ(back.stages[0].weak[1].node_threshold, -0.05);
  EXPECT_EQ(cascade_to_json(back), cascade_to_json(c));
}

TEST(Cascade, JsonFileRoundTripAndErrors) {
  TempDir dir("casc");
  save_cascade(dir / "c.json", two_stage_cascade());
  EXPECT_EQ(cascade_to_json(load_cascade(dir / "c.json")), cascade_to_json(two_stage_cascade()));
  std::ofstream(dir / "bad.json") << "{\"base_window\":{\"width\":24}}";
  EXPECT_THROW(load_cascade(dir / "bad.json"), FormatError);
  std::ofstream(dir / "junk.json") << "not json";
  EXPECT_THROW(load_cascade(dir / "junk.json"), FormatError);
  EXPECT_THROW(load_cascade(dir / "none.json"), IoError);
}

TEST(Cascade, ValidateRejectsRectOutsideWindow) {
  auto c = two_stage_cascade();
  c.stages[0].weak[0].rects[0].w = 25;
  EXPECT_THROW(c.validate(), FormatError);
  c = two_stage_cascade();
  c.stages.clear();
  EXPECT_THROW(c.validate(), FormatError);
}

namespace {

const char* kTinyXml = R"(<?xml version="1.0"?>
<opencv_storage>
<cascade>
  <stageType>BOOST</stageType>
  <featureType>HAAR</featureType>
  <height>24</height>
  <width>24</width>
  <stageNum>1</stageNum>
  <stages>
    <_>
      <maxWeakCount>2</maxWeakCount>
      <stageThreshold>-0.5</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 1 0.25</internalNodes>
          <leafValues>-0.75 0.5</leafValues></_>
        <_>
          <internalNodes>0 -1 0 -1.5e-02</internalNodes>
          <leafValues>0.125 -0.25</leafValues></_></weakClassifiers></_></stages>
  <features>
    <_>
      <rects>
        <_>0 0 24 12 -1.</_>
        <_>0 12 24 6 2.</_></rects></_>
    <_>
      <rects>
        <_>2 3 4 5 -1.</_>
        <_>2 3 2 5 2.</_></rects>
      <tilted>0</tilted></_></features></cascade>
</opencv_storage>
)";

}  // namespace

TEST(CascadeImport, TinyXmlMapsLeavesAndFeatures) {
  std::istringstream in(kTinyXml);
  const auto c = import_opencv_cascade(in);
  EXPECT_EQ(c.base_width, 24);
  ASSERT_EQ(c.stages.size(), 1u);
  EXPECT_EQ(c.stages[0].threshold, -0.5);
  ASSERT_EQ(c.stages[0].weak.size(), 2u);
  const auto& w0 = c.stages[0].weak[0];
  EXPECT_EQ(w0.node_threshold, 0.25);
  EXPECT_EQ(w0.pass_value, 0.5);   // right leaf: value >= threshold
  EXPECT_EQ(w0.fail_value, -0.75);
  ASSERT_EQ(w0.rects.size(), 2u);
  EXPECT_EQ(w0.rects[0].x, 2);
  EXPECT_EQ(w0.rects[0].h, 5);
  EXPECT_EQ(c.stages[0].weak[1].rects[1].weight, 2.0);
  EXPECT_EQ(c.stages[0].weak[1].node_threshold, -0.015);
}

TEST(CascadeImport, RejectsTiltedAndTrees) {
  std::string tilted = kTinyXml;
  tilted.replace(tilted.find("<tilted>0"), 9, "<tilted>1");
  std::istringstream a(tilted);
  EXPECT_THROW(import_opencv_cascade(a), FormatError);

  std::string tree = kTinyXml;
  tree.replace(tree.find("0 -1 1 0.25"), 11, "1 2 1 0.25 0 -1 0 0.5");
  std::istringstream b(tree);
  EXPECT_THROW(import_opencv_cascade(b), FormatError);

  std::istringstream c("<opencv_storage><nope/></opencv_storage>");
  EXPECT_THROW(import_opencv_cascade(c), FormatError);
  std::istringstream d("<<<");
  EXPECT_THROW(import_opencv_cascade(d), FormatError);
}

TEST(CascadeImport, BundledFrontalFaceMatchesConvertedFile) {
  const auto xml = import_opencv_cascade(data_dir() / "cascades" / "haarcascade_frontalface_default.xml");
  EXPECT_EQ(xml.stages.size(), 25u);
  std::size_t weak = 0;
  for (const auto& s : xml.stages) weak += s.weak.size();
  EXPECT_EQ(weak, 2913u);
  const auto native = load_cascade(data_dir() / "cascades" / "frontalface_default.json");
  EXPECT_EQ(cascade_to_json(native), cascade_to_json(xml));
}

TEST(EvalWindow, AlwaysPassAndAlwaysFail) {
  std::mt19937 rng(3);
  const auto f = random_frame(rng);
  const auto ii = integral_image(f);
  const auto pass = constant_cascade(0.5), fail = constant_cascade(1.5);
  std::uniform_int_distribution<int> xs(0, 200), ys(0, 120), ws(24, 100);
  for (int i = 0; i < 50; ++i) {
    const Rect w{xs(rng), ys(rng), ws(rng), 0};
    const Rect win{w.x, w.y, w.w, w.w};
    EXPECT_TRUE(eval_window(ii, pass, win));
    EXPECT_FALSE(eval_window(ii, fail, win));
  }
  EXPECT_THROW(eval_window(ii, pass, {300, 0, 24, 24}), OutOfBounds);
}

TEST(EvalWindow, MatchesScalarReference) {
  std::mt19937 rng(4);
  const auto cascade = two_stage_cascade();
  int accepted = 0;
  for (int i = 0; i < 200; ++i) {
    const auto f = i % 2 ? random_frame(rng) : texture_frame(rng);
    const auto ii = integral_image(f);
    std::uniform_int_distribution<int> scale(1, 4);
    const int s = 24 * scale(rng);
    std::uniform_int_distribution<int> xs(0, 320 - s), ys(0, 240 - s);
    const int x = xs(rng), y = ys(rng);
    const bool got = eval_window(ii, cascade, {x, y, s, s});
    EXPECT_EQ(got, reference_accepts(f, cascade, x, y, s, s)) << x << ' ' << y << ' ' << s;
    accepted += got;
  }
  // both outcomes exercised
  EXPECT_GT(accepted, 0);
  EXPECT_LT(accepted, 200);
}

TEST(EvalWindow, InvariantToAddingAConstant) {
  std::mt19937 rng(5);
  const auto cascade = two_stage_cascade();
  for (int i = 0; i < 100; ++i) {
    GrayFrame f = random_frame(rng, 48, 48);
    for (auto& p : f.pixels) p = static_cast<std::uint8_t>(p / 2);
    GrayFrame g = f;
    for (auto& p : g.pixels) p = static_cast<std::uint8_t>(p + 60);
    EXPECT_EQ(eval_window(integral_image(f), cascade, {0, 0, 48, 48}),
              eval_window(integral_image(g), cascade, {0, 0, 48, 48}));
  }
}

TEST(ScaledCascade, RoundsHalfUpAndKeepsZeroMeanFeaturesBalanced) {
  Cascade c;
  c.base_width = c.base_height = 24;
  c.stages = {{0.0, {{{{1, 1, 3, 6, -1.0}, {1, 1, 3, 3, 2.0}}, 0.0, 1.0, 0.0}}}};
  const ScaledCascade s(c, 30, 30);  // scale 1.25
  const auto& r = s.stages()[0].features[0].rects;
  // 1*1.25 = 1.25 -> 1; 3*1.25 = 3.75 -> 4; 6*1.25 = 7.5 -> 8
  EXPECT_EQ(r[0].x, 1);
  EXPECT_EQ(r[0].w, 4);
  EXPECT_EQ(r[0].h, 8);
  EXPECT_EQ(r[1].h, 4);
  const double balance = r[0].weight * r[0].w * r[0].h + r[1].weight * r[1].w * r[1].h;
  EXPECT_NEAR(balance, 0.0, 1e-12);
  EXPECT_EQ(round_half_up(2.5), 3);
  EXPECT_EQ(round_half_up(-2.5), -2);
}

TEST(Detect, AlwaysPassGivesLargestClusterAverage) {
  GrayFrame f(320, 240, 90);
  ScanParams scan;
  const auto roi = detect(f, constant_cascade(0.5), scan);
  ASSERT_TRUE(roi);
  EXPECT_GE(roi->rect.w, 80);
  EXPECT_EQ(roi->rect.w, roi->rect.h);
  EXPECT_LE(roi->rect.right(), 320);
  EXPECT_LE(roi->rect.bottom(), 240);
  EXPECT_FALSE(detect(f, constant_cascade(1.5), scan));
}

TEST(Detect, MinFaceWiderThanFrameFindsNothing) {
  ScanParams scan;
  scan.min_face_width = 321;
  EXPECT_FALSE(detect(GrayFrame(320, 240, 90), constant_cascade(0.5), scan));
}

TEST(Detect, SparseHitsBelowMinNeighboursAreDropped) {
  const std::vector<Rect> rects = {{0, 0, 10, 10}, {1, 0, 10, 10}, {100, 100, 10, 10}};
  const auto ids = detail::cluster_rects(rects, 0.3);
  EXPECT_EQ(ids[0], ids[1]);
  EXPECT_NE(ids[0], ids[2]);
}

TEST(Detect, FindsAnnotatedFaceWithBundledCascade) {
  const auto frame = read_pgm(test_data() / "face.pgm");
  std::ifstream ann(test_data() / "face_roi.txt");
  Rect truth;
  ann >> truth.x >> truth.y >> truth.w >> truth.h;
  ASSERT_GT(truth.w, 0);
  const auto cascade = load_cascade(data_dir() / "cascades" / "frontalface_default.json");
  const auto roi = detect(frame, cascade, ScanParams{});
  ASSERT_TRUE(roi);
  EXPECT_GE(iou(roi->rect, truth), 0.5) << roi->rect.x << ' ' << roi->rect.y << ' ' << roi->rect.w;
  // deterministic
  EXPECT_EQ(detect(frame, cascade, ScanParams{}), roi);
}

TEST(Detect, BlankFrameHasNoFace) {
  const auto cascade = load_cascade(data_dir() / "cascades" / "frontalface_default.json");
  EXPECT_FALSE(detect(GrayFrame(320, 240, 128), cascade, ScanParams{}));
}

TEST(StaticDetector, FixedRect) {
  const auto det = static_detector(Rect{100, 50, 120, 160});
  for (int i = 0; i < 5; ++i)
    EXPECT_EQ(det.detect(GrayFrame(320, 240, 0, i)).rect, (Rect{100, 50, 120, 160}));
  EXPECT_THROW(static_detector(Rect{250, 0, 100, 10}).detect(GrayFrame(320, 240)), OutOfBounds);
}

TEST(StaticDetector, SidecarPerFrameAndExhaustion) {
  const std::vector<Rect> rects = {{0, 0, 90, 90}, {1, 1, 90, 90}, {2, 2, 90, 90}};
  const auto three = static_detector(rects);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(three.detect(GrayFrame(320, 240, 0, i)).rect, rects[i]);
  const auto two = static_detector(std::vector<Rect>(rects.begin(), rects.begin() + 2));
  EXPECT_NO_THROW(two.detect(GrayFrame(320, 240, 0, 1)));
  EXPECT_THROW(two.detect(GrayFrame(320, 240, 0, 2)), SidecarExhausted);
}

TEST(StaticDetector, ReadSidecar) {
  TempDir dir("side");
  std::ofstream(dir / "s.txt") << "# x y w h\n1 2 3 4\n\n5 6 7 8  # trailing\n";
  const auto r = read_sidecar(dir / "s.txt");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1], (Rect{5, 6, 7, 8}));
  std::ofstream(dir / "bad.txt") << "1 2 3\n";
  EXPECT_THROW(read_sidecar(dir / "bad.txt"), FormatError);
}
