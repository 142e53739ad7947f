#include <cmath>
#include <stdexcept>
#include <limits>
#include <cstdio>
#include <fstream>

#include "deepmot/datasets.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace deepmot;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  os << content;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("motchallenge parsing keeps the documented rows") {
  TempFile f("mot_gt.txt");
  write_file(f.path,
             "1,2,10,20,30,40,1,1,1.0\n"
             "1,3,50,60,30,40,0,1,1.0\n"   // conf 0: dropped for gt
             "2,2,11,21,30,40,1,7,1.0\n"   // class 7: dropped for gt
             "2,4,1,2,3,4,1,1,0.5\n");
  TrackFile gt = load_motchallenge(f.path, MotKind::gt);
  REQUIRE(gt.frame_count() == 2);
  REQUIRE(gt.frame(1).size() == 1);
  CHECK(gt.frame(1)[0].id == 2);
  CHECK(gt.frame(1)[0].box == Box{10, 20, 30, 40});
  REQUIRE(gt.frame(2).size() == 1);
  CHECK(gt.frame(2)[0].id == 4);

  TrackFile det = load_motchallenge(f.path, MotKind::det);
  CHECK(det.frame(1).size() == 2);  // det keeps every row
}

TEST_CASE("motchallenge accepts 7/10-column layouts and det id -1") {
  TempFile f("mot_layouts.txt");
  write_file(f.path,
             "1,-1,5,6,7,8,0.9\n"
             "1,9,1,2,3,4,1,-1,-1,-1\n");  // 10-column x,y,z layout
  TrackFile det = load_motchallenge(f.path, MotKind::det);
  CHECK(det.frame(1).size() == 2);
  TrackFile gt = load_motchallenge(f.path, MotKind::gt);
  REQUIRE(gt.frame(1).size() == 1);  // 10-col has no class column; conf=1 kept
  CHECK(gt.frame(1)[0].id == 9);
}

TEST_CASE("motchallenge reports malformed lines with their number") {
  TempFile f("mot_bad.txt");
  write_file(f.path, "1,2,10,20,30,40,1\nbogus,line\n");
  try {
    load_motchallenge(f.path, MotKind::det);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }

  TempFile g("mot_nonnum.txt");
  write_file(g.path, "1,2,abc,20,30,40,1\n");
  CHECK_THROWS_AS(load_motchallenge(g.path, MotKind::det), std::runtime_error);

  TempFile h("mot_dup.txt");
  write_file(h.path, "1,2,1,2,3,4,1\n1,2,5,6,7,8,1\n");
  CHECK_THROWS_AS(load_motchallenge(h.path, MotKind::det), std::runtime_error);
}

TEST_CASE("track files round-trip through save/load") {
  TempFile f("mot_rt.txt");
  write_file(f.path,
             "1,1,10.5,20.25,30,40,1,1,1\n"
             "1,2,50,60,30,40,1,1,1\n"
             "3,1,11,21,30,40,1,1,1\n");
  TrackFile a = load_motchallenge(f.path, MotKind::gt);
  TempFile g("mot_rt2.txt");
  save_motchallenge(a, g.path);
  TrackFile b = load_motchallenge(g.path, MotKind::gt);
  REQUIRE(a.frame_count() == b.frame_count());
  for (std::size_t fr = 1; fr <= a.frame_count(); ++fr) {
    REQUIRE(a.frame(fr).size() == b.frame(fr).size());
    for (std::size_t i = 0; i < a.frame(fr).size(); ++i) {
      CHECK(a.frame(fr)[i].id == b.frame(fr)[i].id);
      CHECK(a.frame(fr)[i].box == b.frame(fr)[i].box);
    }
  }
}

TEST_CASE("augmentation limits") {
  Tensor d = Tensor::from_rows({{0.3, 0.8}, {0.6, 0.1}});
  Tensor all = augment_distance_matrix(d, 0.0);  // everything > 0 prohibited
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == 1.0);
  Tensor none = augment_distance_matrix(d, 1.0);
  CHECK(none == d);
}

TEST_CASE("generated labels are exact thresholded optima") {
  auto pairs = gen_matrix_pairs(100, 2, 6, PairMode::mixed, 424242);
  REQUIRE(pairs.size() == 100);
  const double tau = std::nextafter(1.0, 0.0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CAPTURE(i);
    CHECK(is_valid_assignment(pairs[i].a_star));
    Assignment brute = oracles::brute_solve_thresholded(pairs[i].d, tau);
    CHECK(pairs[i].a_star == brute.matrix());
    for (std::size_t j = 0; j < pairs[i].d.size(); ++j) {
      CHECK(pairs[i].d[j] >= 0.0);
      CHECK(pairs[i].d[j] <= 1.0);
    }
  }
}

TEST_CASE("pair generation is reproducible") {
  auto a = gen_matrix_pairs(20, 2, 8, PairMode::mixed, 77);
  auto b = gen_matrix_pairs(20, 2, 8, PairMode::mixed, 77);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].d == b[i].d);
    CHECK(a[i].a_star == b[i].a_star);
  }
}

TEST_CASE("noise-free scenes detect exactly the ground truth") {
  SyntheticSceneConfig cfg;
  cfg.det_scale_min = cfg.det_scale_max = 1.0;
  cfg.det_offset_max = 0.0;
  cfg.drop_prob = 0.0;
  cfg.clutter_rate = 0.0;
  cfg.length = 10;
  cfg.seed = 9;
  Scene s = gen_synthetic_sequence(cfg);
  REQUIRE(s.gt.frame_count() == 10);
  for (std::size_t f = 1; f <= 10; ++f) {
    REQUIRE(s.detections.frame(f).size() == s.gt.frame(f).size());
    for (std::size_t i = 0; i < s.gt.frame(f).size(); ++i)
      CHECK(s.detections.frame(f)[i].box == s.gt.frame(f)[i].box);
  }
}

TEST_CASE("drop probability one empties the detections") {
  SyntheticSceneConfig cfg;
  cfg.drop_prob = 1.0;
  cfg.clutter_rate = 0.0;
  cfg.length = 5;
  Scene s = gen_synthetic_sequence(cfg);
  for (std::size_t f = 1; f <= 5; ++f) CHECK(s.detections.frame(f).empty());
}

TEST_CASE("detection offsets stay within the configured bound") {
  SyntheticSceneConfig cfg;
  cfg.det_scale_min = cfg.det_scale_max = 1.0;  // isolate the offset term
  cfg.det_offset_max = 0.25;
  cfg.drop_prob = 0.0;
  cfg.clutter_rate = 0.0;
  cfg.length = 400;
  cfg.max_objects = 8;
  cfg.min_objects = 8;
  cfg.seed = 11;
  Scene s = gen_synthetic_sequence(cfg);
  std::size_t checked = 0;
  for (std::size_t f = 1; f <= cfg.length; ++f) {
    const auto& gts = s.gt.frame(f);
    const auto& dets = s.detections.frame(f);
    REQUIRE(gts.size() == dets.size());
    for (std::size_t i = 0; i < gts.size(); ++i) {
      const double dx = std::fabs(dets[i].box.center_x() - gts[i].box.center_x());
      const double dy = std::fabs(dets[i].box.center_y() - gts[i].box.center_y());
      CHECK(dx <= 0.25 * gts[i].box.width + 1e-9);
      CHECK(dy <= 0.25 * gts[i].box.height + 1e-9);
      ++checked;
    }
  }
  CHECK(checked >= 3000);
}

TEST_CASE("scene generation is reproducible") {
  SyntheticSceneConfig cfg;
  cfg.seed = 33;
  Scene a = gen_synthetic_sequence(cfg);
  Scene b = gen_synthetic_sequence(cfg);
  REQUIRE(a.gt.frame_count() == b.gt.frame_count());
  for (std::size_t f = 1; f <= a.gt.frame_count(); ++f) {
    REQUIRE(a.gt.frame(f).size() == b.gt.frame(f).size());
    for (std::size_t i = 0; i < a.gt.frame(f).size(); ++i)
      CHECK(a.gt.frame(f)[i].box == b.gt.frame(f)[i].box);
  }
}

TEST_CASE("pair files round-trip bit exactly") {
  auto pairs = gen_matrix_pairs(60, 1, 7, PairMode::uniform, 5150);
  TempFile f("pairs_rt.txt");
  save_pairs(f.path, pairs);
  auto loaded = load_pairs(f.path);
  REQUIRE(loaded.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(loaded[i].d == pairs[i].d);
    CHECK(loaded[i].a_star == pairs[i].a_star);
  }

  // Single 1x1 record.
  std::vector<MatrixPair> one;
  one.push_back({Tensor::from_rows({{0.123456789012345}}), Tensor::from_rows({{1.0}})});
  TempFile g("pairs_one.txt");
  save_pairs(g.path, one);
  auto loaded_one = load_pairs(g.path);
  REQUIRE(loaded_one.size() == 1);
  CHECK(loaded_one[0].d == one[0].d);
}

TEST_CASE("truncated pair records name the failing record") {
  TempFile f("pairs_bad.txt");
  write_file(f.path,
             "1 1\n0.5\n1\n\n"
             "2 2\n0.1 0.2\n0.3 0.4\n1 0\n");  // missing second label row
  try {
    load_pairs(f.path);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("record 2") != std::string::npos);
  }
}
