#include "deepmot/toytracker.hpp"

#include <algorithm>
#include <cmath>

#include "deepmot/checkpoint.hpp"
#include "deepmot/common.hpp"
#include "deepmot/hungarian.hpp"
#include "deepmot/optim.hpp"
#include "deepmot/rng.hpp"

namespace deepmot {

TrackerParams TrackerParams::zeros(std::size_t hidden) {
  TrackerParams p;
  p.w1 = Tensor(hidden, 8);
  p.b1 = Tensor(hidden, 1);
  p.w2 = Tensor(4, hidden);
  p.b2 = Tensor(4, 1);
  return p;
}

TrackerParams TrackerParams::init(std::size_t hidden, std::uint64_t seed, double scale) {
  // Rich random features in the first layer; the output layer starts at
  // `scale` (near zero = near the identity tracker) so training can only
  // move away from the baseline through a well-formed readout gradient.
  Rng rng(seed);
  TrackerParams p = zeros(hidden);
  const double b1 = 1.0 / std::sqrt(8.0);
  for (std::size_t i = 0; i < p.w1.size(); ++i) p.w1[i] = rng.uniform(-b1, b1);
  for (std::size_t i = 0; i < p.b1.size(); ++i) p.b1[i] = rng.uniform(-b1, b1);
  for (std::size_t i = 0; i < p.w2.size(); ++i) p.w2[i] = rng.uniform(-scale, scale);
  for (std::size_t i = 0; i < p.b2.size(); ++i) p.b2[i] = rng.uniform(-scale, scale);
  return p;
}

void save_tracker(const TrackerParams& params, const std::string& path) {
  NamedTensors bundle;
  bundle.config = detail::cat("kind=tracker;hidden=", params.hidden());
  bundle.tensors = {{"w1", params.w1}, {"b1", params.b1},
                    {"w2", params.w2}, {"b2", params.b2}};
  save_ntf1(path, bundle);
}

TrackerParams load_tracker(const std::string& path) {
  NamedTensors bundle = load_ntf1(path);
  auto kv = parse_kv(bundle.config);
  if (kv_get(kv, "kind") != "tracker")
    detail::fail_runtime(detail::cat(path, ": not a tracker checkpoint"));
  TrackerParams p;
  auto take = [&](const char* name) {
    const Tensor* t = bundle.find(name);
    if (!t) detail::fail_runtime(detail::cat(path, ": missing tensor ", name));
    return *t;
  };
  p.w1 = take("w1");
  p.b1 = take("b1");
  p.w2 = take("w2");
  p.b2 = take("b2");
  return p;
}

Tensor tracker_features(const std::vector<Box>& prev_boxes,
                        const std::vector<Box>& detections, const FrameDims& dims) {
  detail::check(dims.width > 0 && dims.height > 0, "tracker: bad frame dims");
  Tensor feats(prev_boxes.size(), 8);
  for (std::size_t i = 0; i < prev_boxes.size(); ++i) {
    const Box& prev = prev_boxes[i];
    Box best = prev;  // fallback when no detections exist
    double best_iou = -1.0;
    for (const Box& det : detections) {
      const double v = iou(prev, det);
      if (v > best_iou) {
        best_iou = v;
        best = det;
      }
    }
    const Box* boxes[2] = {&prev, &best};
    for (int b = 0; b < 2; ++b) {
      feats.at(i, static_cast<std::size_t>(4 * b + 0)) = boxes[b]->left / dims.width;
      feats.at(i, static_cast<std::size_t>(4 * b + 1)) = boxes[b]->top / dims.height;
      feats.at(i, static_cast<std::size_t>(4 * b + 2)) = boxes[b]->width / dims.width;
      feats.at(i, static_cast<std::size_t>(4 * b + 3)) = boxes[b]->height / dims.height;
    }
  }
  return feats;
}

TrackerNodes tracker_step_node(Graph& g, const TrackerParams& params,
                               const Tensor& prev_boxes, const Tensor& features,
                               bool trainable) {
  detail::check(prev_boxes.cols() == 4 && features.cols() == 8 &&
                    prev_boxes.rows() == features.rows(),
                "tracker_step: bad input shapes");
  const std::size_t n = prev_boxes.rows();
  TrackerNodes out;
  NodeId w1 = trainable ? g.leaf(params.w1) : g.constant(params.w1);
  NodeId b1 = trainable ? g.leaf(params.b1) : g.constant(params.b1);
  NodeId w2 = trainable ? g.leaf(params.w2) : g.constant(params.w2);
  NodeId b2 = trainable ? g.leaf(params.b2) : g.constant(params.b2);
  if (trainable) out.param_nodes = {w1, b1, w2, b2};

  NodeId x = g.constant(features);
  NodeId h = g.tanh(g.add_rowvec(g.matmul(x, g.transpose(w1)), g.transpose(b1)));
  // Fixed output gain: features are frame-normalized while corrections act in
  // box-size units, roughly a tenfold scale gap the optimizer would otherwise
  // have to bridge through the weights alone.
  NodeId corr = g.affine(
      g.add_rowvec(g.matmul(h, g.transpose(w2)), g.transpose(b2)), 100.0, 0.0);

  // Scale corrections by box size: dl by w, dt by h, dw by w, dh by h.
  NodeId prev = g.constant(prev_boxes);
  Tensor size_scale(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    size_scale.at(i, 0) = prev_boxes.at(i, 2);
    size_scale.at(i, 1) = prev_boxes.at(i, 3);
    size_scale.at(i, 2) = prev_boxes.at(i, 2);
    size_scale.at(i, 3) = prev_boxes.at(i, 3);
  }
  NodeId moved = g.add(prev, g.mul_mask(corr, size_scale));
  // Floor widths/heights at 1 px so downstream geometry stays valid.
  Tensor lo(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    lo.at(i, 0) = -1e12;
    lo.at(i, 1) = -1e12;
    lo.at(i, 2) = 1.0;
    lo.at(i, 3) = 1.0;
  }
  out.prediction = g.max_ew(moved, g.constant(lo));
  return out;
}

std::vector<Box> tracker_step(const std::vector<Box>& prev_boxes,
                              const std::vector<Box>& detections,
                              const TrackerParams& params, const FrameDims& dims) {
  if (prev_boxes.empty()) return {};
  Graph g;
  Tensor feats = tracker_features(prev_boxes, detections, dims);
  TrackerNodes nodes =
      tracker_step_node(g, params, boxes_to_tensor(prev_boxes), feats, false);
  const Tensor& pred = g.value(nodes.prediction);
  if (!pred.all_finite()) detail::fail_runtime("tracker_step: non-finite prediction");
  return tensor_to_boxes(pred);
}

TrackerTrainResult train_tracker(const std::vector<Scene>& scenes,
                                 const DhnParams& dhn,
                                 const TrackerTrainConfig& cfg) {
  detail::check(!scenes.empty(), "train_tracker: no scenes");
  detail::check(cfg.steps >= 1, "train_tracker: steps must be >= 1");
  Rng rng(cfg.seed);
  TrackerTrainResult result;
  result.params = TrackerParams::init(cfg.hidden, cfg.seed ^ 0xA076'1D64'78BD'642FULL, cfg.init_scale);
  Adam opt;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    // Draw order per step: scene index, frame index, then per ground-truth
    // box the init perturbation (scale, x offset, y offset).
    const Scene& scene = scenes[rng.index(scenes.size())];
    const std::size_t frames = scene.gt.frame_count();
    if (frames < 2) continue;
    const auto t = static_cast<std::size_t>(rng.integer(1, static_cast<long long>(frames - 1)));
    const auto& gt_now = scene.gt.frame(t);
    const auto& gt_next = scene.gt.frame(t + 1);
    if (gt_now.empty() || gt_next.empty()) {
      result.losses.push_back(result.losses.empty() ? 0.0 : result.losses.back());
      continue;
    }

    std::vector<Box> init_boxes;
    std::vector<std::int64_t> track_ids;
    for (const auto& tb : gt_now) {
      // Same perturbation family as detection noise: centre-preserving
      // rescale in [0.8, 1.2], offsets up to 0.25 of the box size.
      const double s = rng.uniform(0.8, 1.2);
      const double ox = tb.box.width * rng.uniform(-0.25, 0.25);
      const double oy = tb.box.height * rng.uniform(-0.25, 0.25);
      const double w = tb.box.width * s, h = tb.box.height * s;
      init_boxes.push_back({tb.box.center_x() - w / 2.0 + ox,
                            tb.box.center_y() - h / 2.0 + oy, w, h});
      track_ids.push_back(tb.id);
    }
    std::vector<Box> dets;
    for (const auto& tb : scene.detections.frame(t + 1)) dets.push_back(tb.box);
    std::vector<Box> gt_boxes;
    std::vector<std::int64_t> gt_ids;
    for (const auto& tb : gt_next) {
      gt_boxes.push_back(tb.box);
      gt_ids.push_back(tb.id);
    }

    TrackerParams snapshot = result.params;
    try {
      Graph g(cfg.precision);
      Tensor feats = tracker_features(init_boxes, dets, scene.gt.dims);
      TrackerNodes step_nodes = tracker_step_node(
          g, result.params, boxes_to_tensor(init_boxes), feats, true);
      NodeId objects = g.constant(boxes_to_tensor(gt_boxes));
      NodeId d = distance_matrix_node(g, step_nodes.prediction, objects, scene.gt.dims);
      NodeId a_soft = dhn_forward_node(g, d, dhn, false).output;

      // Previous-frame correspondences from the (constant) init positions.
      Tensor d_prev = distance_matrix(init_boxes,
                                      [&] {
                                        std::vector<Box> b;
                                        for (const auto& tb : gt_now) b.push_back(tb.box);
                                        return b;
                                      }(),
                                      scene.gt.dims);
      std::vector<std::int64_t> now_ids;
      for (const auto& tb : gt_now) now_ids.push_back(tb.id);
      TpMask prev = tp_mask(d_prev, track_ids, now_ids, cfg.loss);
      TpMask curr = tp_mask(g.value(d), track_ids, gt_ids, cfg.loss);
      TpMask padded = pad_prev_mask(prev, curr);

      FrameLossNodes loss = deepmot_frame_loss_node(g, d, a_soft, curr, padded.mask,
                                                    gt_boxes.size(), cfg.loss);
      result.losses.push_back(g.value(loss.loss).item());
      g.backward(loss.loss);
      std::vector<Tensor*> ps = {&result.params.w1, &result.params.b1,
                                 &result.params.w2, &result.params.b2};
      std::vector<const Tensor*> gs;
      for (NodeId id : step_nodes.param_nodes) gs.push_back(&g.grad(id));
      opt.step(cfg.lr, ps, gs, cfg.precision);
    } catch (const std::runtime_error&) {
      result.params = snapshot;
      result.aborted_non_finite = true;
      break;
    }
  }
  return result;
}

namespace {

struct LiveTrack {
  std::int64_t id;
  Box box;
  std::size_t invisible = 0;
};

struct BirthChain {
  Box box;
  std::size_t streak = 0;
};

}  // namespace

TrackFile run_tracker(const TrackFile& detections, const TrackerParams& params,
                      const ManagementConfig& mgmt) {
  detail::check(mgmt.birth_frames >= 1 && mgmt.death_patience >= 1,
                "run_tracker: counts must be >= 1");
  detail::check(mgmt.birth_iou >= 0.0 && mgmt.birth_iou <= 1.0 &&
                    mgmt.refine_iou >= 0.0 && mgmt.refine_iou <= 1.0,
                "run_tracker: thresholds must be in [0,1]");
  TrackFile out;
  out.dims = detections.dims;
  out.ensure_frames(detections.frame_count());

  std::vector<LiveTrack> tracks;
  std::vector<BirthChain> chains;
  std::int64_t next_id = 1;

  for (std::size_t f = 1; f <= detections.frame_count(); ++f) {
    std::vector<Box> dets;
    for (const auto& tb : detections.frame(f)) dets.push_back(tb.box);

    // Predict all live tracks.
    std::vector<Box> prev_boxes;
    for (const auto& t : tracks) prev_boxes.push_back(t.box);
    std::vector<Box> preds =
        tracker_step(prev_boxes, dets, params, detections.dims);

    // Associate predictions with detections (IoU >= birth_iou via the
    // thresholded solver on the Jaccard distance).
    std::vector<char> det_used(dets.size(), 0);
    std::vector<std::ptrdiff_t> match(tracks.size(), -1);
    if (!tracks.empty() && !dets.empty()) {
      Tensor d(preds.size(), dets.size());
      for (std::size_t r = 0; r < preds.size(); ++r)
        for (std::size_t c = 0; c < dets.size(); ++c)
          d.at(r, c) = 1.0 - iou(preds[r], dets[c]);
      Assignment a = solve_thresholded(d, 1.0 - mgmt.birth_iou);
      for (std::size_t r = 0; r < preds.size(); ++r) {
        if (a.row_to_col[r] < 0) continue;
        match[r] = a.row_to_col[r];
        det_used[static_cast<std::size_t>(a.row_to_col[r])] = 1;
      }
    }

    std::vector<LiveTrack> survivors;
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      LiveTrack t = tracks[i];
      if (match[i] >= 0) {
        const Box& det = dets[static_cast<std::size_t>(match[i])];
        Box output = preds[i];
        if (iou(preds[i], det) > mgmt.refine_iou) {
          output = {(preds[i].left + det.left) / 2.0, (preds[i].top + det.top) / 2.0,
                    (preds[i].width + det.width) / 2.0,
                    (preds[i].height + det.height) / 2.0};
        }
        t.box = output;
        t.invisible = 0;
        out.frame(f).push_back({t.id, output});
        survivors.push_back(t);
      } else {
        t.box = preds.empty() ? t.box : preds[i];  // coast, no output
        t.invisible += 1;
        if (t.invisible < mgmt.death_patience) survivors.push_back(t);
      }
    }
    tracks = std::move(survivors);

    // Birth bookkeeping on unclaimed detections: extend chains greedily by
    // best IoU; a chain reaching birth_frames becomes a track immediately.
    std::vector<BirthChain> next_chains;
    std::vector<char> det_in_chain(dets.size(), 0);
    for (const auto& chain : chains) {
      double best = -1.0;
      std::ptrdiff_t best_j = -1;
      for (std::size_t j = 0; j < dets.size(); ++j) {
        if (det_used[j] || det_in_chain[j]) continue;
        const double v = iou(chain.box, dets[j]);
        if (v > best) {
          best = v;
          best_j = static_cast<std::ptrdiff_t>(j);
        }
      }
      if (best_j < 0 || best < mgmt.birth_iou) continue;  // chain dies
      det_in_chain[static_cast<std::size_t>(best_j)] = 1;
      BirthChain grown{dets[static_cast<std::size_t>(best_j)], chain.streak + 1};
      if (grown.streak >= mgmt.birth_frames) {
        LiveTrack t{next_id++, grown.box, 0};
        out.frame(f).push_back({t.id, t.box});
        tracks.push_back(t);
      } else {
        next_chains.push_back(grown);
      }
    }
    for (std::size_t j = 0; j < dets.size(); ++j)
      if (!det_used[j] && !det_in_chain[j]) next_chains.push_back({dets[j], 1});
    chains = std::move(next_chains);
  }
  return out;
}

}  // namespace deepmot
