#pragma once

#include <cstdint>
#include <vector>

#include "deepmot/datasets.hpp"
#include "deepmot/dhn.hpp"
#include "deepmot/graph.hpp"
#include "deepmot/loss.hpp"
#include "deepmot/track_file.hpp"

namespace deepmot {

// Two-layer perceptron mapping an 8-feature vector (previous box and its
// best-overlapping detection, both normalized by frame size) to a 4-vector
// box correction scaled by the box size. The output carries a fixed gain of
// 100: features live in frame-normalized units while corrections act in
// box-size units, and the gain lets the readout reach correction scale at
// the small tracker learning rate. Zero parameters give the identity
// (constant-position) tracker.
struct TrackerParams {
  Tensor w1;  // hidden x 8
  Tensor b1;  // hidden x 1
  Tensor w2;  // 4 x hidden
  Tensor b2;  // 4 x 1

  std::size_t hidden() const { return w1.rows(); }

  static TrackerParams zeros(std::size_t hidden = 32);
  // Random first layer (uniform 1/sqrt(8) bound), output layer uniform in
  // (-scale, scale): a small scale starts near the identity tracker while the
  // hidden features already carry signal.
  static TrackerParams init(std::size_t hidden, std::uint64_t seed, double scale = 0.001);
};

void save_tracker(const TrackerParams& params, const std::string& path);
TrackerParams load_tracker(const std::string& path);

struct ManagementConfig {
  std::size_t birth_frames = 3;
  double birth_iou = 0.3;
  double refine_iou = 0.6;
  std::size_t death_patience = 60;  // K
};

// Feature rows for each previous box: the box and its best-IoU detection
// (the box itself when there are no detections), normalized by frame dims.
Tensor tracker_features(const std::vector<Box>& prev_boxes,
                        const std::vector<Box>& detections, const FrameDims& dims);

// Differentiable prediction: previous box plus the perceptron correction
// scaled by box size; widths/heights are floored at 1 pixel.
struct TrackerNodes {
  NodeId prediction;              // N x 4
  std::vector<NodeId> param_nodes;  // w1, b1, w2, b2 when trainable
};
TrackerNodes tracker_step_node(Graph& g, const TrackerParams& params,
                               const Tensor& prev_boxes, const Tensor& features,
                               bool trainable);

std::vector<Box> tracker_step(const std::vector<Box>& prev_boxes,
                              const std::vector<Box>& detections,
                              const TrackerParams& params, const FrameDims& dims);

struct TrackerTrainConfig {
  std::size_t steps = 4000;
  double lr = 1e-4;  // Adam
  std::uint64_t seed = 5;
  std::size_t hidden = 32;
  double init_scale = 0.001;  // near-identity start
  LossConfig loss;
  Precision precision = Precision::f64;
};

struct TrackerTrainResult {
  TrackerParams params;
  std::vector<double> losses;  // one per step
  bool aborted_non_finite = false;
};

// Fig.-4 style loop on synthetic scenes: sample a consecutive frame pair,
// initialize tracks from perturbed ground truth at t, predict t+1, build D,
// run the frozen DHN, backpropagate the DeepMOT loss into the tracker only.
TrackerTrainResult train_tracker(const std::vector<Scene>& scenes,
                                 const DhnParams& dhn,
                                 const TrackerTrainConfig& cfg);

// Track management around the regressor: birth after birth_frames consecutive
// detections with pairwise IoU >= birth_iou; detection-track association at
// IoU >= birth_iou; refinement averages prediction and detection above
// refine_iou; unverified tracks coast invisibly and die after death_patience
// frames. Output identities are stable positive integers.
TrackFile run_tracker(const TrackFile& detections, const TrackerParams& params,
                      const ManagementConfig& mgmt);

}  // namespace deepmot
