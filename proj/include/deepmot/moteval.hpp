#pragma once

#include <string>

#include "deepmot/track_file.hpp"

namespace deepmot {

enum class MatchDistance {
  combined,  // (normalized center distance + Jaccard) / 2
  jaccard    // 1 - IoU
};

struct EvalOptions {
  double tau = 0.5;
  MatchDistance distance = MatchDistance::combined;
};

struct MetricsReport {
  double mota = 0.0;
  double motp_dist = 0.0;  // mean matched distance, lower is better
  double motp_pct = 0.0;   // 1 - motp_dist, the paper's table convention
  double idf1 = 0.0;
  double mt = 0.0;
  double ml = 0.0;
  long long fp = 0;
  long long fn = 0;
  long long ids = 0;
  long long tp = 0;
  std::string distance_mode;
  double tau = 0.0;
};

// CLEAR-MOT over the full sequence. Correspondences persist from the previous
// frame while still within tau; the rest are re-matched with the thresholded
// exact solver. An identity switch is counted when a ground-truth object's
// matched track differs from its last known match. Frame counts must agree.
MetricsReport clearmot(const TrackFile& gt, const TrackFile& pred,
                       const EvalOptions& opts);

// Identity-F1 under a global trajectory matching that maximizes the number of
// identity-consistent detections (pair cost |gt| + |pred| - 2*coloc).
double idf1(const TrackFile& gt, const TrackFile& pred, const EvalOptions& opts);

// Mostly-tracked / mostly-lost fractions: coverage > 0.8 / < 0.2 of a
// ground-truth trajectory's frames, using the clearmot matching.
struct MtMl {
  double mt = 0.0;
  double ml = 0.0;
};
MtMl mt_ml(const TrackFile& gt, const TrackFile& pred, const EvalOptions& opts);

// clearmot + idf1 + mt_ml in one report.
MetricsReport evaluate_tracking(const TrackFile& gt, const TrackFile& pred,
                                const EvalOptions& opts);

// Fixed column order: MOTA,MOTP_dist,MOTP_pct,IDF1,MT,ML,FP,FN,IDS,TP.
void write_report_csv(const std::string& path, const MetricsReport& report);
std::string report_pretty(const MetricsReport& report);

}  // namespace deepmot
