#pragma once

#include <vector>

#include "deepmot/dhn.hpp"
#include "deepmot/hungarian.hpp"
#include "deepmot/track_file.hpp"

// Reference implementations used only by tests and `deepmot selftest`.
// They share nothing with the production solvers beyond the public types, so
// agreement between the two is meaningful evidence.
namespace deepmot::oracles {

// Exhaustive minimum-cost assignment with exactly min(N, M) matches and the
// documented tie-break (per-row matched column, unmatched = M, lexicographic).
// Feasible only for small matrices (N, M <= ~7).
Assignment brute_solve(const Tensor& d);

// Exhaustive search over all partial matchings: maximize feasible matches
// (d <= tau), then minimize cost, then the same tie-break.
Assignment brute_solve_thresholded(const Tensor& d, double tau);

// Exhaustive trajectory matching: maximizes identity-consistent detections
// over all injective gt->pred trajectory maps (<= ~6 per side).
double brute_idf1(const TrackFile& gt, const TrackFile& pred, double tau,
                  bool jaccard_distance);

// Independent WA/MA/SA counting over (soft prediction, label) pairs.
DhnEvalResult brute_eval_counts(const std::vector<Tensor>& preds,
                                const std::vector<Tensor>& labels, bool row_mode);

}  // namespace deepmot::oracles
