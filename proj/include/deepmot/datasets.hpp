#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepmot/hungarian.hpp"
#include "deepmot/tensor.hpp"
#include "deepmot/track_file.hpp"

namespace deepmot {

enum class MotKind { gt, det };

// MOTChallenge CSV: frame,id,left,top,width,height,conf[,class,visibility |
// ,x,y,z], frames 1-based. gt keeps rows with conf = 1 and, when a class
// column exists (8/9 columns), class = 1; det keeps everything and allows
// id = -1. Malformed lines raise std::runtime_error naming the line number.
// dims with zero extent are inferred from the content.
TrackFile load_motchallenge(const std::string& path, MotKind kind,
                            FrameDims dims = {0.0, 0.0});
// Writes frame,id,left,top,width,height,1,1,1 rows (conf/class/visibility).
void save_motchallenge(const TrackFile& tf, const std::string& path);

struct MatrixPair {
  Tensor d;       // distance matrix, entries in [0, 1]
  Tensor a_star;  // binary assignment label
};

// Entries strictly greater than u are replaced by 1.0 (the ceiling of the
// normalized distance range), discouraging those assignments.
Tensor augment_distance_matrix(const Tensor& d, double u);

enum class PairMode { uniform, tracking_like, mixed };

// Seeded matrix-pair generation. Per pair: draw a matrix (uniform [0,1)
// entries, or a distance matrix of noisy detections vs. ground-truth boxes in
// tracking-like mode), augment with a threshold u ~ U(0,1), and label with
// the thresholded exact solver so prohibited (=1.0) entries never match.
// mixed alternates uniform / tracking-like per index.
std::vector<MatrixPair> gen_matrix_pairs(std::size_t count, std::size_t min_size,
                                         std::size_t max_size, PairMode mode,
                                         std::uint64_t seed);

struct SyntheticSceneConfig {
  FrameDims dims{640.0, 480.0};
  std::size_t min_objects = 3;
  std::size_t max_objects = 8;
  double min_velocity = 2.0;
  double max_velocity = 10.0;
  double min_box_w = 30.0;
  double max_box_w = 80.0;
  double min_box_h = 40.0;
  double max_box_h = 100.0;
  double position_jitter = 0.5;  // per-frame uniform wobble, pixels
  double det_scale_min = 0.8;
  double det_scale_max = 1.2;
  double det_offset_max = 0.25;  // offset bound as a fraction of box size
  double drop_prob = 0.05;
  double clutter_rate = 0.2;  // expected false detections per frame
  std::size_t length = 30;
  std::uint64_t seed = 1;
};

struct Scene {
  TrackFile gt;
  TrackFile detections;
};

// Constant-velocity objects with jitter, clamped to the frame; detections
// are centre-preserving rescales (det_scale range) with per-axis offsets up
// to det_offset_max of the box size, plus drops and clutter. Deterministic
// for a fixed config; the draw order is documented in the implementation.
Scene gen_synthetic_sequence(const SyntheticSceneConfig& cfg);

// Text dataset format, one record per pair:
//   "N M\n", N lines of M full-precision distances, N lines of M label bits,
//   one blank line. Bit-exact round-trip.
void save_pairs(const std::string& path, const std::vector<MatrixPair>& pairs);
std::vector<MatrixPair> load_pairs(const std::string& path);

}  // namespace deepmot
