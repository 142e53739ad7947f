// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavy criteria share artifacts (the desk-trained DHN feeds the
// end-to-end tracker run). All seeds are fixed.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include "deepmot/common.hpp"
#include "deepmot/datasets.hpp"
#include "deepmot/dhn.hpp"
#include "deepmot/graph.hpp"
#include "deepmot/hungarian.hpp"
#include "deepmot/loss.hpp"
#include "deepmot/moteval.hpp"
#include "deepmot/rng.hpp"
#include "deepmot/toytracker.hpp"
#include "oracles.hpp"

using namespace deepmot;

namespace {

struct Outcome {
  bool pass = false;
  std::string details;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_matrix(std::size_t n, std::size_t m, Rng& rng) {
  Tensor d(n, m);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = rng.uniform();
  return d;
}

// --- criterion 1 -----------------------------------------------------------

Outcome criterion1() {
  Rng rng(10001);
  std::size_t checked = 0;
  for (std::size_t n = 1; n <= 6; ++n)
    for (std::size_t m = 1; m <= 6; ++m)
      for (int trial = 0; trial < 1000; ++trial) {
        Tensor d = random_matrix(n, m, rng);
        Assignment fast = solve(d);
        Assignment brute = oracles::brute_solve(d);
        if (fast.cost(d) != brute.cost(d) || fast.row_to_col != brute.row_to_col)
          return {false, detail::cat("solve mismatch at ", n, "x", m, " trial ", trial)};
        const double tau = rng.uniform(0.1, 0.9);
        Assignment ft = solve_thresholded(d, tau);
        Assignment bt = oracles::brute_solve_thresholded(d, tau);
        if (ft.match_count() != bt.match_count() || ft.cost(d) != bt.cost(d) ||
            ft.row_to_col != bt.row_to_col)
          return {false, detail::cat("solve_thresholded mismatch at ", n, "x", m,
                                     " trial ", trial)};
        ++checked;
      }
  return {true, detail::cat(checked, " matrices per solver, exact cost and "
                                     "assignment equality")};
}

// --- criterion 2 -----------------------------------------------------------

Outcome criterion2() {
  // (a) primitives, 50 seeded instances each.
  Rng rng(20002);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = 2 + rng.index(3), c = 2 + rng.index(3);
    Tensor x(r, c), other(r, c), w(r, c);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.uniform(0.2, 1.5);
      other[i] = rng.uniform(0.4, 1.3);
      w[i] = rng.uniform(-1.0, 1.0);
    }
    auto weighted = [&](Graph& g, NodeId y) { return g.sum(g.mul_mask(y, w)); };
    std::vector<std::function<NodeId(Graph&, NodeId)>> builds = {
        [&](Graph& g, NodeId v) { return weighted(g, g.add(v, g.constant(other))); },
        [&](Graph& g, NodeId v) { return weighted(g, g.mul(v, g.constant(other))); },
        [&](Graph& g, NodeId v) { return weighted(g, g.div(v, g.constant(other))); },
        [&](Graph& g, NodeId v) {
          return weighted(g, g.matmul(g.matmul(v, g.transpose(g.constant(other))),
                                      g.constant(Tensor::full(r, c, 0.3))));
        },
        [&](Graph& g, NodeId v) { return weighted(g, g.sigmoid(v)); },
        [&](Graph& g, NodeId v) { return weighted(g, g.tanh(v)); },
        [&](Graph& g, NodeId v) { return weighted(g, g.log(v)); },
        [&](Graph& g, NodeId v) { return weighted(g, g.sqrt(v)); },
        [&](Graph& g, NodeId v) { return weighted(g, g.softmax_rows(v)); },
        [&](Graph& g, NodeId v) { return weighted(g, g.softmax_cols(v)); },
        [&](Graph& g, NodeId v) { return weighted(g, g.min_ew(v, g.constant(other))); },
        [&](Graph& g, NodeId v) { return weighted(g, g.max_ew(v, g.constant(other))); },
        [&](Graph& g, NodeId v) { return g.masked_l1(v, w); },
        [&](Graph& g, NodeId v) { return weighted(g, g.transpose(g.transpose(v))); },
    };
    for (std::size_t bi = 0; bi < builds.size(); ++bi) {
      const double err = finite_diff_check(builds[bi], x, 1e-5);
      if (err >= 1e-4)
        return {false, detail::cat("primitive ", bi, " rel err ", err,
                                   " at trial ", trial)};
    }
  }

  // (b) focal o dhn_forward, all variants, 50 instances each; all D
  // coordinates plus a seeded subsample of parameter coordinates.
  const DhnVariant variants[] = {DhnVariant::seq_gru, DhnVariant::seq_lstm,
                                 DhnVariant::paral_gru, DhnVariant::paral_lstm,
                                 DhnVariant::conv1d};
  for (DhnVariant v : variants) {
    Rng vr(3000 + static_cast<std::uint64_t>(v));
    for (int trial = 0; trial < 50; ++trial) {
      DhnConfig cfg;
      cfg.variant = v;
      cfg.hidden = 2 + vr.index(5);  // h <= 6
      cfg.head_widths = {8, 4, 1};
      DhnParams params = init_dhn(cfg, 40000 + static_cast<std::uint64_t>(trial));
      const std::size_t lo = v == DhnVariant::conv1d ? 2 : 1;
      const std::size_t n = lo + vr.index(4 - lo + 1);
      const std::size_t m = lo + vr.index(4 - lo + 1);
      Tensor d = random_matrix(n, m, vr);
      Tensor label = oracles::brute_solve(d).matrix();
      std::vector<Tensor> leaves;
      leaves.push_back(d);
      for (const auto& [name, t] : params.tensors) leaves.push_back(t);
      const double err = finite_diff_check_multi(
          [&](Graph& g, const std::vector<NodeId>& ids) {
            std::vector<std::pair<std::string, NodeId>> named;
            for (std::size_t i = 0; i < params.tensors.size(); ++i)
              named.emplace_back(params.tensors[i].first, ids[i + 1]);
            NodeId out = dhn_forward_with_nodes(g, ids[0], cfg, named);
            return focal_loss_node(g, out, label, 2.0);
          },
          leaves, 1e-5, 6, 50000 + static_cast<std::uint64_t>(trial));
      if (err >= 1e-4)
        return {false, detail::cat("focal/dhn ", variant_name(v), " trial ", trial,
                                   " rel err ", err)};
    }
  }

  // (c) boxes -> D -> DHN -> loss, 50 instances, rel tol 1e-3.
  {
    DhnConfig cfg;
    cfg.variant = DhnVariant::seq_gru;
    cfg.hidden = 4;
    cfg.head_widths = {8, 4, 1};
    DhnParams dhn = init_dhn(cfg, 60000);
    LossConfig lcfg;
    FrameDims dims{640, 480};
    Rng cr(70000);
    for (int trial = 0; trial < 50; ++trial) {
      // Tracks near their objects: the matched-distance term stays active,
      // which keeps the gradient scale resolvable by central differences.
      std::vector<Box> objects = {{cr.uniform(60, 200), cr.uniform(60, 200),
                                   cr.uniform(30, 60), cr.uniform(30, 60)},
                                  {cr.uniform(320, 480), cr.uniform(220, 360),
                                   cr.uniform(30, 60), cr.uniform(30, 60)}};
      std::vector<Box> tracks;
      for (const Box& o : objects)
        tracks.push_back({o.left + cr.uniform(-8, 8), o.top + cr.uniform(-8, 8),
                          o.width * cr.uniform(0.9, 1.1),
                          o.height * cr.uniform(0.9, 1.1)});
      std::vector<std::int64_t> tids = {1, 2}, gids = {10, 20};
      // Masks are constants in differentiation; freeze them at the base point.
      TpMask curr = tp_mask(distance_matrix(tracks, objects, dims), tids, gids, lcfg);
      TpMask padded = pad_prev_mask(curr, curr);
      const double err = finite_diff_check(
          [&](Graph& g, NodeId track_node) {
            NodeId objs = g.constant(boxes_to_tensor(objects));
            NodeId d = distance_matrix_node(g, track_node, objs, dims);
            std::vector<std::pair<std::string, NodeId>> named;
            for (const auto& [name, t] : dhn.tensors)
              named.emplace_back(name, g.constant(t));
            NodeId a = dhn_forward_with_nodes(g, d, cfg, named);
            return deepmot_frame_loss_node(g, d, a, curr, padded.mask, 2, lcfg).loss;
          },
          boxes_to_tensor(tracks), 1e-5);
      if (err >= 1e-3)
        return {false, detail::cat("full chain trial ", trial, " rel err ", err)};
    }
  }
  return {true, "primitives, focal(dhn) for all 5 variants, and the full box "
                "chain match central differences"};
}

// --- criterion 3 -----------------------------------------------------------

Outcome criterion3() {
  Rng rng(30003);
  const FrameDims dims{640, 480};
  LossConfig lcfg;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(5), m = 1 + rng.index(5);
    std::vector<Box> preds, gts;
    TrackFile gt_tf, pred_tf;
    gt_tf.dims = pred_tf.dims = dims;
    gt_tf.ensure_frames(1);
    pred_tf.ensure_frames(1);
    for (std::size_t i = 0; i < m; ++i) {
      Box b{rng.uniform(0, 600), rng.uniform(0, 440), 30, 40};
      gts.push_back(b);
      gt_tf.frame(1).push_back({static_cast<std::int64_t>(i + 1), b});
    }
    for (std::size_t i = 0; i < n; ++i) {
      Box b{rng.uniform(0, 600), rng.uniform(0, 440), 30, 40};
      preds.push_back(b);
      pred_tf.frame(1).push_back({static_cast<std::int64_t>(i + 100), b});
    }
    MetricsReport r = clearmot(gt_tf, pred_tf, {});
    Tensor d = distance_matrix(preds, gts, dims);
    std::vector<std::int64_t> tids(n), gids(m);
    for (std::size_t i = 0; i < n; ++i) tids[i] = static_cast<std::int64_t>(i);
    for (std::size_t i = 0; i < m; ++i) gids[i] = static_cast<std::int64_t>(i);
    TpMask mask = tp_mask(d, tids, gids, lcfg);
    if (std::fabs(dmotp(d, mask.mask) - (1.0 - r.motp_dist)) > 1e-12)
      return {false, detail::cat("dmotp/clearmot gap at trial ", trial)};
  }

  LossConfig sharp;
  sharp.sharpen = 50.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(6), m = 1 + rng.index(6);
    Tensor a(n, m);
    std::vector<char> used(m, 0);
    double zero_rows = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t c = rng.index(m);
      if (!used[c] && rng.uniform() < 0.7) {
        a.at(r, c) = 1.0;
        used[c] = 1;
      } else {
        zero_rows += 1.0;
      }
    }
    SoftCounts counts = soft_counts(a, sharp);
    if (std::fabs(counts.fp_soft - zero_rows) > 0.05 * static_cast<double>(n))
      return {false, detail::cat("sharpening limit violated at trial ", trial)};
  }
  return {true, "dmotp == 1 - matched-distance mean (1e-12, 100 frames); "
                "sharpened fp_soft within 0.05*N of the hard count"};
}

// --- criterion 4 -----------------------------------------------------------

struct DeskTraining {
  DhnParams seq_params{};
  double seq_wa = 0.0;
  double conv_wa = 0.0;
  std::size_t seq_epochs = 0;
  std::size_t conv_epochs = 0;
  bool ready = false;
};

Outcome criterion4(DeskTraining& out) {
  auto train_pairs = gen_matrix_pairs(20000, 2, 12, PairMode::mixed, 8101);
  auto test_pairs = gen_matrix_pairs(2000, 2, 12, PairMode::mixed, 8202);

  TrainConfig tcfg;
  tcfg.epochs = 6;  // within the allowed 20; both variants use the same budget
  tcfg.seed = 8303;
  tcfg.wa_stop = 0.87;

  DhnConfig seq_cfg;
  seq_cfg.variant = DhnVariant::seq_gru;
  seq_cfg.hidden = 64;
  DhnConfig conv_cfg;
  conv_cfg.variant = DhnVariant::conv1d;
  conv_cfg.hidden = 64;  // unused by conv kernels

  TrainCurves seq_curves, conv_curves;
  DhnParams conv_params;
  // The two variants train concurrently on the two cores; each stream is
  // independently seeded so the pairing stays deterministic.
  auto conv_future = std::async(std::launch::async, [&] {
    return train_dhn(train_pairs, test_pairs, conv_cfg, tcfg, &conv_curves);
  });
  out.seq_params = train_dhn(train_pairs, test_pairs, seq_cfg, tcfg, &seq_curves);
  conv_params = conv_future.get();

  out.seq_wa = seq_curves.test_wa.empty() ? 0.0 : seq_curves.test_wa.back();
  out.conv_wa = conv_curves.test_wa.empty() ? 0.0 : conv_curves.test_wa.back();
  out.seq_epochs = seq_curves.test_wa.size();
  out.conv_epochs = conv_curves.test_wa.size();
  out.ready = true;

  std::ostringstream det;
  det << "seq_gru WA " << out.seq_wa << " after " << out.seq_epochs
      << " epoch(s), conv1d WA " << out.conv_wa << " after " << out.conv_epochs
      << " epoch(s)";
  if (out.seq_wa < 0.85) return {false, det.str() + " (target 0.85 missed)"};
  if (!(out.seq_wa > out.conv_wa))
    return {false, det.str() + " (ordering vs conv1d violated)"};
  return {true, det.str()};
}

// --- criterion 5 -----------------------------------------------------------

Outcome criterion5() {
  const FrameDims dims{640, 480};
  auto file = [&](std::size_t frames) {
    TrackFile tf;
    tf.dims = dims;
    tf.ensure_frames(frames);
    return tf;
  };
  const Box a{100, 100, 30, 40}, b{500, 300, 30, 40}, c{20, 380, 30, 40};

  // 1. Perfect.
  {
    TrackFile gt = file(3);
    for (std::size_t f = 1; f <= 3; ++f) {
      gt.frame(f).push_back({1, a});
      gt.frame(f).push_back({2, b});
    }
    MetricsReport r = clearmot(gt, gt, {});
    if (!(r.mota == 1.0 && r.fp == 0 && r.fn == 0 && r.ids == 0 && r.tp == 6))
      return {false, "perfect scenario"};
  }
  // 2. Pure miss: 10 gt boxes, 2 missed -> MOTA 0.8.
  {
    TrackFile gt = file(5), pred = file(5);
    for (std::size_t f = 1; f <= 5; ++f) {
      gt.frame(f).push_back({1, a});
      gt.frame(f).push_back({2, b});
      pred.frame(f).push_back({11, a});
      if (f <= 3) pred.frame(f).push_back({12, b});
    }
    MetricsReport r = clearmot(gt, pred, {});
    if (!(r.fn == 2 && r.fp == 0 && r.ids == 0 && r.tp == 8 && r.mota == 0.8))
      return {false, "pure-miss scenario"};
  }
  // 3. Pure FP: a clutter track adds 3 false positives -> MOTA 0.5.
  {
    TrackFile gt = file(3), pred = file(3);
    for (std::size_t f = 1; f <= 3; ++f) {
      gt.frame(f).push_back({1, a});
      gt.frame(f).push_back({2, b});
      pred.frame(f).push_back({11, a});
      pred.frame(f).push_back({12, b});
      pred.frame(f).push_back({13, c});
    }
    MetricsReport r = clearmot(gt, pred, {});
    if (!(r.fp == 3 && r.fn == 0 && r.ids == 0 && r.tp == 6 && r.mota == 0.5))
      return {false, "pure-FP scenario"};
  }
  // 4. Single swap: one track jumps to the other object while its partner
  //    disappears -> exactly one identity switch (hand table: TP 4, FN 2).
  {
    TrackFile gt = file(3), pred = file(3);
    for (std::size_t f = 1; f <= 3; ++f) {
      gt.frame(f).push_back({1, a});
      gt.frame(f).push_back({2, b});
    }
    pred.frame(1).push_back({11, a});
    pred.frame(1).push_back({12, b});
    pred.frame(2).push_back({11, b});
    pred.frame(3).push_back({11, b});
    MetricsReport r = clearmot(gt, pred, {});
    if (!(r.ids == 1 && r.fn == 2 && r.fp == 0 && r.tp == 4))
      return {false, "single-swap scenario"};
  }
  // 5. Occlusion-rebirth: the object vanishes for two frames while its track
  //    keeps outputting (2 FP); on rebirth the identity is unchanged (0 IDS).
  {
    TrackFile gt = file(6), pred = file(6);
    for (std::size_t f = 1; f <= 6; ++f) {
      if (f != 3 && f != 4) gt.frame(f).push_back({1, a});
      pred.frame(f).push_back({11, a});
    }
    MetricsReport r = clearmot(gt, pred, {});
    if (!(r.tp == 4 && r.fp == 2 && r.fn == 0 && r.ids == 0 && r.mota == 0.5))
      return {false, "occlusion-rebirth scenario"};
  }
  // idf1 equals the exhaustive oracle on random files with <= 6 trajectories.
  {
    Rng rng(50005);
    for (int trial = 0; trial < 20; ++trial) {
      TrackFile gt = file(5), pred = file(5);
      for (std::size_t f = 1; f <= 5; ++f) {
        for (std::int64_t id = 1; id <= 1 + static_cast<std::int64_t>(rng.index(5)); ++id)
          if (rng.uniform() < 0.8)
            gt.frame(f).push_back(
                {id, {rng.uniform(0, 600), rng.uniform(0, 440), 30, 40}});
        for (std::int64_t id = 21; id <= 21 + static_cast<std::int64_t>(rng.index(5)); ++id)
          if (rng.uniform() < 0.7)
            pred.frame(f).push_back(
                {id, {rng.uniform(0, 600), rng.uniform(0, 440), 30, 40}});
      }
      const double fast = idf1(gt, pred, {});
      const double brute = oracles::brute_idf1(gt, pred, 0.5, false);
      if (std::fabs(fast - brute) > 1e-12)
        return {false, detail::cat("idf1 oracle mismatch at trial ", trial)};
    }
  }
  return {true, "five scripted CLEAR-MOT tables exact; idf1 equals the "
                "exhaustive oracle"};
}

// --- criterion 6 -----------------------------------------------------------

Outcome criterion6(const DeskTraining& desk) {
  if (!desk.ready) return {false, "skipped: criterion 4 artifacts unavailable"};

  // Scenes where tracking is learnable and the identity baseline decays:
  // few objects, brisk motion, tight detections.
  SyntheticSceneConfig base;
  base.length = 30;
  base.min_objects = 3;
  base.max_objects = 4;
  base.min_velocity = 8.0;
  base.max_velocity = 16.0;
  base.det_offset_max = 0.03;
  base.det_scale_min = 0.97;
  base.det_scale_max = 1.03;
  base.drop_prob = 0.02;
  base.clutter_rate = 0.1;

  std::vector<Scene> train_scenes;
  for (std::uint64_t s = 0; s < 12; ++s) {
    SyntheticSceneConfig cfg = base;
    cfg.seed = 600 + s;
    train_scenes.push_back(gen_synthetic_sequence(cfg));
  }

  TrackerTrainConfig tcfg;
  tcfg.steps = 20000;
  tcfg.lr = 1e-4;
  tcfg.seed = 61;
  TrackerTrainResult trained = train_tracker(train_scenes, desk.seq_params, tcfg);
  if (trained.aborted_non_finite) return {false, "training diverged"};

  auto window = [&](std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += trained.losses[i];
    return s / static_cast<double>(to - from);
  };
  const std::size_t w = 100;
  const double first = window(0, w);
  const double last = window(trained.losses.size() - w, trained.losses.size());
  const double drop = (first - last) / first;

  ManagementConfig mgmt;
  double mota_trained = 0.0, mota_baseline = 0.0;
  TrackerParams baseline = TrackerParams::zeros(tcfg.hidden);
  for (std::uint64_t s = 0; s < 20; ++s) {
    SyntheticSceneConfig cfg = base;
    cfg.seed = 9000 + s;  // held out from the training seeds
    Scene scene = gen_synthetic_sequence(cfg);
    TrackFile out_t = run_tracker(scene.detections, trained.params, mgmt);
    TrackFile out_b = run_tracker(scene.detections, baseline, mgmt);
    mota_trained += clearmot(scene.gt, out_t, {}).mota;
    mota_baseline += clearmot(scene.gt, out_b, {}).mota;
  }
  mota_trained /= 20.0;
  mota_baseline /= 20.0;

  std::ostringstream det;
  det << "mean MOTA trained " << mota_trained << " vs baseline " << mota_baseline
      << "; smoothed loss drop " << 100.0 * drop << "%";
  if (!(mota_trained > mota_baseline)) return {false, det.str()};
  if (!(drop >= 0.30)) return {false, det.str()};
  return {true, det.str()};
}

// --- criterion 7 -----------------------------------------------------------

Outcome criterion7() {
  namespace fs = std::filesystem;
  fs::create_directories("acceptance_out");

  // NTF1 byte-exact round trip.
  {
    DhnConfig cfg;
    cfg.variant = DhnVariant::seq_lstm;
    cfg.hidden = 5;
    cfg.head_widths = {6, 1};
    DhnParams p = init_dhn(cfg, 321);
    const std::string p1 = "acceptance_out/rt1.ntf1", p2 = "acceptance_out/rt2.ntf1";
    save_dhn(p, p1);
    save_dhn(load_dhn(p1), p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), {});
    std::string b2((std::istreambuf_iterator<char>(f2)), {});
    if (b1.empty() || b1 != b2) return {false, "NTF1 round trip not byte-exact"};
  }
  // Pair text round trip.
  {
    auto pairs = gen_matrix_pairs(1000, 1, 8, PairMode::mixed, 70707);
    const std::string path = "acceptance_out/pairs_rt.txt";
    save_pairs(path, pairs);
    auto loaded = load_pairs(path);
    if (loaded.size() != pairs.size()) return {false, "pair file record count"};
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (!(loaded[i].d == pairs[i].d) || !(loaded[i].a_star == pairs[i].a_star))
        return {false, detail::cat("pair record ", i, " not bit-exact")};
  }
  // Parser accepts both gt layouts, rejects malformed lines with numbers.
  {
    const std::string p9 = "acceptance_out/gt9.txt", p10 = "acceptance_out/gt10.txt";
    {
      std::ofstream os(p9);
      os << "1,2,10,20,30,40,1,1,1.0\n2,2,11,21,30,40,1,1,0.7\n";
    }
    {
      std::ofstream os(p10);
      os << "1,2,10,20,30,40,1,-1,-1,-1\n2,2,11,21,30,40,1,-1,-1,-1\n";
    }
    if (load_motchallenge(p9, MotKind::gt).total_boxes() != 2)
      return {false, "9-column gt layout"};
    if (load_motchallenge(p10, MotKind::gt).total_boxes() != 2)
      return {false, "10-column gt layout"};
    const std::string bad = "acceptance_out/gt_bad.txt";
    {
      std::ofstream os(bad);
      os << "1,2,10,20,30,40,1,1,1.0\n1,3,oops,20,30,40,1,1,1\n";
    }
    try {
      load_motchallenge(bad, MotKind::gt);
      return {false, "malformed line was accepted"};
    } catch (const std::runtime_error& e) {
      if (std::string(e.what()).find(":2:") == std::string::npos)
        return {false, "parse error does not name the line"};
    }
  }
  return {true, "NTF1 and pair files bit-exact; parser accepts 9/10-column gt "
                "and names malformed lines"};
}

// --- criterion 8 -----------------------------------------------------------

Outcome criterion8() {
  // A quickly desk-trained small model keeps the 2,990-matrix study within
  // budget on this hardware; the CLI runs the same study for any checkpoint.
  auto train_pairs = gen_matrix_pairs(3000, 2, 12, PairMode::mixed, 8801);
  auto test_pairs = gen_matrix_pairs(300, 2, 12, PairMode::mixed, 8802);
  DhnConfig cfg;
  cfg.variant = DhnVariant::seq_gru;
  cfg.hidden = 16;
  cfg.head_widths = {32, 16, 1};
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.seed = 8803;
  DhnParams params = train_dhn(train_pairs, test_pairs, cfg, tcfg);

  auto rows = size_study(params, 2, 300, 10, 8804, 2);
  if (rows.size() != 299) return {false, detail::cat("row count ", rows.size())};
  for (const auto& r : rows)
    if (!(r.wa >= 0.0 && r.wa <= 1.0))
      return {false, detail::cat("WA out of range at size ", r.size)};
  const std::string path = "acceptance_out/size_study.csv";
  std::filesystem::create_directories("acceptance_out");
  write_size_study_csv(path, rows);
  std::ifstream is(path);
  std::size_t lines = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++lines;
  if (lines != 299) return {false, detail::cat("csv line count ", lines)};
  return {true, detail::cat("2,990 matrices evaluated; csv has 299 rows, WA in "
                            "[0,1]; small-size WA ",
                            rows[0].wa, ", size-300 WA ", rows.back().wa)};
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<Outcome()> run;
  };
  DeskTraining desk;
  std::vector<Entry> entries = {
      {"1 hungarian exactness vs brute force", [] { return criterion1(); }},
      {"2 gradient correctness (primitives, dhn variants, full chain)",
       [] { return criterion2(); }},
      {"3 soft/hard consistency (dmotp identity, sharpening limit)",
       [] { return criterion3(); }},
      {"4 desk-scale DHN training (seq_gru >= 0.85 and > conv1d)",
       [&] { return criterion4(desk); }},
      {"5 metric hand-cases and idf1 oracle", [] { return criterion5(); }},
      {"6 end-to-end training effect on synthetic scenes",
       [&] { return criterion6(desk); }},
      {"7 format fidelity (NTF1, pair text, MOTChallenge parser)",
       [] { return criterion7(); }},
      {"8 size study csv (sizes 2-300, 10 each)", [] { return criterion8(); }},
  };

  bool all_pass = true;
  for (auto& e : entries) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = e.run();
    } catch (const std::exception& ex) {
      o = {false, detail::cat("exception: ", ex.what())};
    }
    all_pass = all_pass && o.pass;
    std::printf("[%s] criterion %s (%.1fs) - %s\n", o.pass ? "PASS" : "FAIL",
                e.name, seconds_since(t0), o.details.c_str());
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
