#include "deepmot/moteval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "deepmot/common.hpp"
#include "deepmot/hungarian.hpp"

namespace deepmot {

namespace {

double match_distance(const Box& a, const Box& b, const FrameDims& dims,
                      MatchDistance mode) {
  if (mode == MatchDistance::jaccard) return 1.0 - iou(a, b);
  return pair_distance(a, b, dims);
}

struct TrajectoryStats {
  std::size_t present = 0;
  std::size_t matched = 0;
};

struct ClearMotDetail {
  MetricsReport report;
  std::map<std::int64_t, TrajectoryStats> trajectories;
};

ClearMotDetail run_clearmot(const TrackFile& gt, const TrackFile& pred,
                            const EvalOptions& opts) {
  detail::check(opts.tau > 0.0 && opts.tau <= 1.0, "clearmot: tau must be in (0,1]");
  detail::check(gt.frame_count() == pred.frame_count(),
                "clearmot: mismatched frame ranges");
  const FrameDims dims = gt.dims;

  ClearMotDetail out;
  long long tp = 0, fp = 0, fn = 0, ids = 0;
  double dist_sum = 0.0;
  std::size_t total_gt = 0;
  std::map<std::int64_t, std::int64_t> active;      // gt id -> track id, previous frame
  std::map<std::int64_t, std::int64_t> last_match;  // gt id -> last matched track id

  for (std::size_t f = 1; f <= gt.frame_count(); ++f) {
    const auto& gts = gt.frame(f);
    const auto& preds = pred.frame(f);
    total_gt += gts.size();
    for (const auto& g : gts) out.trajectories[g.id].present++;

    std::map<std::int64_t, std::size_t> gt_pos, pred_pos;
    for (std::size_t i = 0; i < gts.size(); ++i) gt_pos[gts[i].id] = i;
    for (std::size_t i = 0; i < preds.size(); ++i) pred_pos[preds[i].id] = i;

    std::vector<char> gt_used(gts.size(), 0), pred_used(preds.size(), 0);
    std::size_t matches = 0;

    // Keep previous-frame correspondences still within tau.
    std::map<std::int64_t, std::int64_t> next_active;
    for (const auto& [gid, tid] : active) {
      auto gi = gt_pos.find(gid);
      auto pi = pred_pos.find(tid);
      if (gi == gt_pos.end() || pi == pred_pos.end()) continue;
      const double d = match_distance(preds[pi->second].box, gts[gi->second].box,
                                      dims, opts.distance);
      if (d > opts.tau) continue;
      gt_used[gi->second] = 1;
      pred_used[pi->second] = 1;
      next_active[gid] = tid;
      ++matches;
      ++tp;
      dist_sum += d;
      out.trajectories[gid].matched++;
    }

    // Re-match the rest with the thresholded solver.
    std::vector<std::size_t> free_gt, free_pred;
    for (std::size_t i = 0; i < gts.size(); ++i)
      if (!gt_used[i]) free_gt.push_back(i);
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (!pred_used[i]) free_pred.push_back(i);
    if (!free_gt.empty() && !free_pred.empty()) {
      Tensor d(free_pred.size(), free_gt.size());
      for (std::size_t r = 0; r < free_pred.size(); ++r)
        for (std::size_t c = 0; c < free_gt.size(); ++c)
          d.at(r, c) = match_distance(preds[free_pred[r]].box, gts[free_gt[c]].box,
                                      dims, opts.distance);
      Assignment a = solve_thresholded(d, opts.tau);
      for (std::size_t r = 0; r < free_pred.size(); ++r) {
        if (a.row_to_col[r] < 0) continue;
        const std::size_t c = static_cast<std::size_t>(a.row_to_col[r]);
        const std::int64_t gid = gts[free_gt[c]].id;
        const std::int64_t tid = preds[free_pred[r]].id;
        ++matches;
        ++tp;
        dist_sum += d.at(r, c);
        out.trajectories[gid].matched++;
        auto lm = last_match.find(gid);
        if (lm != last_match.end() && lm->second != tid) ++ids;
        last_match[gid] = tid;
        next_active[gid] = tid;
      }
    }
    // Carried-over matches keep their identity; record them too.
    for (const auto& [gid, tid] : next_active) last_match[gid] = tid;

    fp += static_cast<long long>(preds.size() - matches);
    fn += static_cast<long long>(gts.size() - matches);
    active = std::move(next_active);
  }

  MetricsReport& r = out.report;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.ids = ids;
  const long long errors = fp + fn + ids;
  if (total_gt > 0)
    r.mota = 1.0 - static_cast<double>(errors) / static_cast<double>(total_gt);
  else
    r.mota = errors == 0 ? 1.0 : 1.0 - static_cast<double>(errors);
  r.motp_dist = tp > 0 ? dist_sum / static_cast<double>(tp) : 0.0;
  r.motp_pct = 1.0 - r.motp_dist;
  r.distance_mode = opts.distance == MatchDistance::combined ? "combined" : "jaccard";
  r.tau = opts.tau;
  return out;
}

}  // namespace

MetricsReport clearmot(const TrackFile& gt, const TrackFile& pred,
                       const EvalOptions& opts) {
  return run_clearmot(gt, pred, opts).report;
}

double idf1(const TrackFile& gt, const TrackFile& pred, const EvalOptions& opts) {
  detail::check(gt.frame_count() == pred.frame_count(),
                "idf1: mismatched frame ranges");
  struct Traj {
    std::map<std::size_t, Box> boxes;  // frame -> box
  };
  std::map<std::int64_t, Traj> gt_traj, pred_traj;
  for (std::size_t f = 1; f <= gt.frame_count(); ++f) {
    for (const auto& g : gt.frame(f)) gt_traj[g.id].boxes[f] = g.box;
    for (const auto& p : pred.frame(f)) pred_traj[p.id].boxes[f] = p.box;
  }
  const std::size_t total_gt = gt.total_boxes();
  const std::size_t total_pred = pred.total_boxes();
  if (total_gt == 0 && total_pred == 0) return 1.0;  // identical empty files
  if (gt_traj.empty() || pred_traj.empty()) return 0.0;

  std::vector<const Traj*> gs, ps;
  for (const auto& [id, t] : gt_traj) gs.push_back(&t);
  for (const auto& [id, t] : pred_traj) ps.push_back(&t);
  const std::size_t ng = gs.size(), np = ps.size();

  Tensor coloc(ng, np);
  for (std::size_t i = 0; i < ng; ++i)
    for (std::size_t j = 0; j < np; ++j) {
      double n = 0.0;
      for (const auto& [f, gb] : gs[i]->boxes) {
        auto it = ps[j]->boxes.find(f);
        if (it != ps[j]->boxes.end() &&
            match_distance(it->second, gb, gt.dims, opts.distance) <= opts.tau)
          n += 1.0;
      }
      coloc.at(i, j) = n;
    }

  // Square matching problem with per-trajectory dummy slots, so leaving a
  // trajectory unmatched costs its full length.
  const std::size_t k = ng + np;
  const double big = static_cast<double>(total_gt + total_pred) + 1.0;
  Tensor cost(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) cost.at(i, j) = big;
  for (std::size_t i = 0; i < ng; ++i) {
    const double len_g = static_cast<double>(gs[i]->boxes.size());
    for (std::size_t j = 0; j < np; ++j) {
      const double len_p = static_cast<double>(ps[j]->boxes.size());
      cost.at(i, j) = len_g + len_p - 2.0 * coloc.at(i, j);
    }
    cost.at(i, np + i) = len_g;  // gt i unmatched
  }
  for (std::size_t j = 0; j < np; ++j)
    cost.at(ng + j, j) = static_cast<double>(ps[j]->boxes.size());  // pred j unmatched
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = 0; j < ng; ++j) cost.at(ng + i, np + j) = 0.0;

  Assignment a = solve(cost);
  double idtp = 0.0;
  for (std::size_t i = 0; i < ng; ++i) {
    const auto c = a.row_to_col[i];
    if (c >= 0 && static_cast<std::size_t>(c) < np)
      idtp += coloc.at(i, static_cast<std::size_t>(c));
  }
  // IDFP = total_pred - IDTP, IDFN = total_gt - IDTP.
  return 2.0 * idtp / static_cast<double>(total_gt + total_pred);
}

MtMl mt_ml(const TrackFile& gt, const TrackFile& pred, const EvalOptions& opts) {
  ClearMotDetail detail_run = run_clearmot(gt, pred, opts);
  MtMl out;
  if (detail_run.trajectories.empty()) return out;
  std::size_t mt = 0, ml = 0;
  for (const auto& [id, stats] : detail_run.trajectories) {
    const double coverage = stats.present > 0
                                ? static_cast<double>(stats.matched) /
                                      static_cast<double>(stats.present)
                                : 0.0;
    if (coverage > 0.8) ++mt;
    if (coverage < 0.2) ++ml;
  }
  const double total = static_cast<double>(detail_run.trajectories.size());
  out.mt = static_cast<double>(mt) / total;
  out.ml = static_cast<double>(ml) / total;
  return out;
}

MetricsReport evaluate_tracking(const TrackFile& gt, const TrackFile& pred,
                                const EvalOptions& opts) {
  ClearMotDetail detail_run = run_clearmot(gt, pred, opts);
  MetricsReport r = detail_run.report;
  r.idf1 = idf1(gt, pred, opts);
  MtMl m = mt_ml(gt, pred, opts);
  r.mt = m.mt;
  r.ml = m.ml;
  return r;
}

void write_report_csv(const std::string& path, const MetricsReport& r) {
  std::ofstream os(path);
  if (!os) detail::fail_runtime(detail::cat("cannot open ", path, " for writing"));
  os << "MOTA,MOTP_dist,MOTP_pct,IDF1,MT,ML,FP,FN,IDS,TP\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%lld,%lld,%lld,%lld\n",
                r.mota, r.motp_dist, r.motp_pct, r.idf1, r.mt, r.ml, r.fp, r.fn,
                r.ids, r.tp);
  os << buf;
  if (!os) detail::fail_runtime(detail::cat("write failed for ", path));
}

std::string report_pretty(const MetricsReport& r) {
  std::ostringstream os;
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "MOTA      %8.4f\nMOTP_dist %8.4f\nMOTP_pct  %8.4f\nIDF1      %8.4f\n"
                "MT        %8.4f\nML        %8.4f\nFP        %8lld\nFN        %8lld\n"
                "IDS       %8lld\nTP        %8lld\n",
                r.mota, r.motp_dist, r.motp_pct, r.idf1, r.mt, r.ml, r.fp, r.fn,
                r.ids, r.tp);
  os << buf << "distance  " << r.distance_mode << "  tau " << r.tau << "\n";
  return os.str();
}

}  // namespace deepmot
