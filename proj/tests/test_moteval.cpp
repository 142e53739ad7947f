#include <stdexcept>
#include <limits>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "deepmot/loss.hpp"
#include "deepmot/moteval.hpp"
#include "deepmot/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace deepmot;

namespace {

const FrameDims kDims{640, 480};

TrackFile make_track_file(std::size_t frames) {
  TrackFile tf;
  tf.dims = kDims;
  tf.ensure_frames(frames);
  return tf;
}

void put(TrackFile& tf, std::size_t frame, std::int64_t id, Box box) {
  tf.frame(frame).push_back({id, box});
}

Box at(double x, double y) { return {x, y, 30, 40}; }

}  // namespace

TEST_CASE("perfect tracking scores perfectly") {
  TrackFile gt = make_track_file(4);
  for (std::size_t f = 1; f <= 4; ++f) {
    put(gt, f, 1, at(10.0 * f, 50));
    put(gt, f, 2, at(300, 20.0 * f));
  }
  TrackFile pred = gt;
  EvalOptions opts;
  MetricsReport r = evaluate_tracking(gt, pred, opts);
  CHECK(r.mota == 1.0);
  CHECK(r.motp_dist == 0.0);
  CHECK(r.motp_pct == 1.0);
  CHECK(r.fp == 0);
  CHECK(r.fn == 0);
  CHECK(r.ids == 0);
  CHECK(r.tp == 8);
  CHECK(r.idf1 == 1.0);
  CHECK(r.mt == 1.0);
  CHECK(r.ml == 0.0);
}

TEST_CASE("pure misses follow the MOTA formula") {
  // 10 ground-truth boxes in total; the prediction misses 2.
  TrackFile gt = make_track_file(5);
  TrackFile pred = make_track_file(5);
  for (std::size_t f = 1; f <= 5; ++f) {
    put(gt, f, 1, at(100, 100));
    put(gt, f, 2, at(400, 200));
    put(pred, f, 11, at(100, 100));
    if (f <= 3) put(pred, f, 12, at(400, 200));
  }
  MetricsReport r = clearmot(gt, pred, {});
  CHECK(r.fn == 2);
  CHECK(r.fp == 0);
  CHECK(r.ids == 0);
  CHECK(r.mota == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("identity swaps are counted per the hand simulation") {
  // Two far-apart objects, three frames.
  const Box a = at(100, 100), b = at(500, 300);
  EvalOptions opts;

  SUBCASE("both predictions swap partners at frame 2: two switches") {
    TrackFile gt = make_track_file(3);
    TrackFile pred = make_track_file(3);
    for (std::size_t f = 1; f <= 3; ++f) {
      put(gt, f, 1, a);
      put(gt, f, 2, b);
    }
    put(pred, 1, 11, a);
    put(pred, 1, 12, b);
    // Frame 2: 11 jumps onto object 2, 12 onto object 1. Carried-over pairs
    // exceed tau, so both re-match to the other identity: IDS = 2.
    put(pred, 2, 11, b);
    put(pred, 2, 12, a);
    put(pred, 3, 11, b);
    put(pred, 3, 12, a);
    MetricsReport r = clearmot(gt, pred, opts);
    CHECK(r.ids == 2);
    CHECK(r.tp == 6);
    CHECK(r.fp == 0);
    CHECK(r.fn == 0);
    CHECK(r.mota == doctest::Approx(1.0 - 2.0 / 6.0).epsilon(1e-12));
  }

  SUBCASE("one prediction re-matches elsewhere: a single switch") {
    TrackFile gt = make_track_file(3);
    TrackFile pred = make_track_file(3);
    for (std::size_t f = 1; f <= 3; ++f) {
      put(gt, f, 1, a);
      put(gt, f, 2, b);
    }
    put(pred, 1, 11, a);
    put(pred, 1, 12, b);
    // Frame 2: track 12 disappears; track 11 jumps onto object 2. Object 2's
    // last match was 12, so one switch; object 1 is missed.
    put(pred, 2, 11, b);
    put(pred, 3, 11, b);
    MetricsReport r = clearmot(gt, pred, opts);
    CHECK(r.ids == 1);
    CHECK(r.fn == 2);   // object 1 unmatched at frames 2 and 3
    CHECK(r.fp == 0);
    CHECK(r.tp == 4);
  }
}

TEST_CASE("count identities hold on random scenes") {
  Rng rng(701);
  for (int trial = 0; trial < 10; ++trial) {
    TrackFile gt = make_track_file(6);
    TrackFile pred = make_track_file(6);
    std::size_t gt_total = 0, pred_total = 0;
    for (std::size_t f = 1; f <= 6; ++f) {
      const std::size_t n_gt = 1 + rng.index(4);
      for (std::size_t i = 0; i < n_gt; ++i) {
        put(gt, f, static_cast<std::int64_t>(i + 1),
            at(rng.uniform(0, 600), rng.uniform(0, 440)));
        ++gt_total;
      }
      const std::size_t n_pred = rng.index(5);
      for (std::size_t i = 0; i < n_pred; ++i) {
        put(pred, f, static_cast<std::int64_t>(i + 50),
            at(rng.uniform(0, 600), rng.uniform(0, 440)));
        ++pred_total;
      }
    }
    MetricsReport r = clearmot(gt, pred, {});
    CHECK(r.tp + r.fn == static_cast<long long>(gt_total));
    CHECK(r.tp + r.fp == static_cast<long long>(pred_total));
    CHECK(r.mota <= 1.0);
  }
}

TEST_CASE("a fixed relabeling never produces switches") {
  Rng rng(709);
  TrackFile gt = make_track_file(8);
  for (std::size_t f = 1; f <= 8; ++f)
    for (std::int64_t id = 1; id <= 3; ++id)
      put(gt, f, id, at(100.0 * static_cast<double>(id) + 2.0 * f, 60.0 * id));
  TrackFile pred = gt;
  for (auto& frame : pred.frames)
    for (auto& tb : frame) tb.id += 1000;
  MetricsReport r = clearmot(gt, pred, {});
  CHECK(r.ids == 0);
  CHECK(r.mota == 1.0);
}

TEST_CASE("idf1 matches the exhaustive trajectory oracle") {
  EvalOptions opts;

  // Identity swap at the midpoint.
  const Box a = at(100, 100), b = at(500, 300);
  TrackFile gt = make_track_file(4);
  TrackFile pred = make_track_file(4);
  for (std::size_t f = 1; f <= 4; ++f) {
    put(gt, f, 1, a);
    put(gt, f, 2, b);
    put(pred, f, 11, f <= 2 ? a : b);
    put(pred, f, 12, f <= 2 ? b : a);
  }
  const double got = idf1(gt, pred, opts);
  CHECK(got == doctest::Approx(oracles::brute_idf1(gt, pred, opts.tau, false))
                   .epsilon(1e-12));
  CHECK(got == doctest::Approx(0.5).epsilon(1e-12));

  // Empty predictions.
  TrackFile none = make_track_file(4);
  CHECK(idf1(gt, none, opts) == 0.0);

  // Random small instances against the oracle.
  Rng rng(719);
  for (int trial = 0; trial < 10; ++trial) {
    TrackFile g2 = make_track_file(5);
    TrackFile p2 = make_track_file(5);
    for (std::size_t f = 1; f <= 5; ++f) {
      for (std::int64_t id = 1; id <= 3; ++id)
        if (rng.uniform() < 0.8)
          put(g2, f, id, at(rng.uniform(0, 600), rng.uniform(0, 440)));
      for (std::int64_t id = 21; id <= 24; ++id)
        if (rng.uniform() < 0.6)
          put(p2, f, id, at(rng.uniform(0, 600), rng.uniform(0, 440)));
    }
    CHECK(idf1(g2, p2, opts) ==
          doctest::Approx(oracles::brute_idf1(g2, p2, opts.tau, false)).epsilon(1e-12));
  }
}

TEST_CASE("mostly tracked / mostly lost boundaries") {
  EvalOptions opts;
  TrackFile gt = make_track_file(4);
  TrackFile pred = make_track_file(4);
  for (std::size_t f = 1; f <= 4; ++f) put(gt, f, 1, at(100, 100));
  // Covered exactly half the life span: neither MT nor ML.
  put(pred, 1, 9, at(100, 100));
  put(pred, 2, 9, at(100, 100));
  MtMl half = mt_ml(gt, pred, opts);
  CHECK(half.mt == 0.0);
  CHECK(half.ml == 0.0);

  MtMl perfect = mt_ml(gt, gt, opts);
  CHECK(perfect.mt == 1.0);
  CHECK(perfect.ml == 0.0);

  TrackFile none = make_track_file(4);
  MtMl lost = mt_ml(gt, none, opts);
  CHECK(lost.mt == 0.0);
  CHECK(lost.ml == 1.0);
}

TEST_CASE("dmotp equals one minus the matched-distance mean on shared masks") {
  Rng rng(727);
  LossConfig lcfg;
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1 + rng.index(4), m = 1 + rng.index(4);
    TrackFile gt = make_track_file(1);
    TrackFile pred = make_track_file(1);
    std::vector<Box> preds, gts;
    for (std::size_t i = 0; i < m; ++i) {
      Box b = at(rng.uniform(0, 600), rng.uniform(0, 440));
      put(gt, 1, static_cast<std::int64_t>(i + 1), b);
      gts.push_back(b);
    }
    for (std::size_t i = 0; i < n; ++i) {
      Box b = at(rng.uniform(0, 600), rng.uniform(0, 440));
      put(pred, 1, static_cast<std::int64_t>(i + 100), b);
      preds.push_back(b);
    }
    MetricsReport r = clearmot(gt, pred, {});
    Tensor d = distance_matrix(preds, gts, kDims);
    std::vector<std::int64_t> tids(n), gids(m);
    for (std::size_t i = 0; i < n; ++i) tids[i] = static_cast<std::int64_t>(i);
    for (std::size_t i = 0; i < m; ++i) gids[i] = static_cast<std::int64_t>(i);
    TpMask mask = tp_mask(d, tids, gids, lcfg);
    CHECK(std::fabs(dmotp(d, mask.mask) - (1.0 - r.motp_dist)) < 1e-12);
  }
}

TEST_CASE("frame range mismatches are rejected") {
  TrackFile gt = make_track_file(3);
  TrackFile pred = make_track_file(4);
  CHECK_THROWS_AS(clearmot(gt, pred, {}), std::invalid_argument);
  CHECK_THROWS_AS(idf1(gt, pred, {}), std::invalid_argument);
}

TEST_CASE("report serialization carries the fixed columns") {
  MetricsReport r;
  r.mota = 0.5;
  r.fp = 3;
  r.distance_mode = "combined";
  r.tau = 0.5;
  const std::string path = "report_test.csv";
  write_report_csv(path, r);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "MOTA,MOTP_dist,MOTP_pct,IDF1,MT,ML,FP,FN,IDS,TP");
  std::string row;
  std::getline(is, row);
  CHECK(row.substr(0, 4) == "0.5,");
  is.close();
  std::remove(path.c_str());
  CHECK(report_pretty(r).find("MOTA") != std::string::npos);
}
