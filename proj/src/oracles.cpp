#include "oracles.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "deepmot/common.hpp"

namespace deepmot::oracles {

namespace {

struct SearchState {
  const Tensor* d = nullptr;
  double tau = 0.0;
  bool thresholded = false;
  std::size_t n = 0, m = 0, want = 0;

  std::vector<std::ptrdiff_t> current;
  std::vector<char> col_used;

  bool have_best = false;
  std::size_t best_count = 0;
  double best_cost = 0.0;
  std::vector<std::ptrdiff_t> best;

  bool feasible(std::size_t r, std::size_t c) const {
    return !thresholded || d->at(r, c) <= tau;
  }

  // Lexicographic key: matched column per row, unmatched rows count as m.
  static bool key_less(const std::vector<std::ptrdiff_t>& a,
                       const std::vector<std::ptrdiff_t>& b, std::size_t m) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::ptrdiff_t ka = a[i] < 0 ? static_cast<std::ptrdiff_t>(m) : a[i];
      const std::ptrdiff_t kb = b[i] < 0 ? static_cast<std::ptrdiff_t>(m) : b[i];
      if (ka != kb) return ka < kb;
    }
    return false;
  }

  void consider() {
    std::size_t count = 0;
    double cost = 0.0;
    for (std::size_t r = 0; r < n; ++r)
      if (current[r] >= 0) {
        ++count;
        cost += d->at(r, static_cast<std::size_t>(current[r]));
      }
    if (!thresholded && count != want) return;
    bool better = false;
    if (!have_best) {
      better = true;
    } else if (thresholded && count != best_count) {
      better = count > best_count;
    } else if (cost != best_cost) {
      better = cost < best_cost;
    } else {
      better = key_less(current, best, m);
    }
    if (better) {
      have_best = true;
      best_count = count;
      best_cost = cost;
      best = current;
    }
  }

  void recurse(std::size_t r) {
    if (r == n) {
      consider();
      return;
    }
    for (std::size_t c = 0; c < m; ++c) {
      if (col_used[c] || !feasible(r, c)) continue;
      col_used[c] = 1;
      current[r] = static_cast<std::ptrdiff_t>(c);
      recurse(r + 1);
      col_used[c] = 0;
    }
    current[r] = -1;
    recurse(r + 1);
  }
};

Assignment to_assignment(const SearchState& s) {
  Assignment a;
  a.rows = s.n;
  a.cols = s.m;
  a.row_to_col = s.best;
  a.col_to_row.assign(s.m, -1);
  for (std::size_t r = 0; r < s.n; ++r)
    if (s.best[r] >= 0) a.col_to_row[static_cast<std::size_t>(s.best[r])] =
        static_cast<std::ptrdiff_t>(r);
  return a;
}

}  // namespace

Assignment brute_solve(const Tensor& d) {
  detail::check(d.rows() >= 1 && d.cols() >= 1, "brute_solve: empty matrix");
  SearchState s;
  s.d = &d;
  s.n = d.rows();
  s.m = d.cols();
  s.want = std::min(s.n, s.m);
  s.current.assign(s.n, -1);
  s.col_used.assign(s.m, 0);
  s.recurse(0);
  return to_assignment(s);
}

Assignment brute_solve_thresholded(const Tensor& d, double tau) {
  detail::check(d.rows() >= 1 && d.cols() >= 1, "brute_solve_thresholded: empty");
  SearchState s;
  s.d = &d;
  s.tau = tau;
  s.thresholded = true;
  s.n = d.rows();
  s.m = d.cols();
  s.current.assign(s.n, -1);
  s.col_used.assign(s.m, 0);
  s.recurse(0);
  return to_assignment(s);
}

namespace {

double traj_distance(const Box& a, const Box& b, const FrameDims& dims, bool jaccard) {
  return jaccard ? 1.0 - iou(a, b) : pair_distance(a, b, dims);
}

}  // namespace

double brute_idf1(const TrackFile& gt, const TrackFile& pred, double tau,
                  bool jaccard_distance) {
  std::map<std::int64_t, std::map<std::size_t, Box>> gtraj, ptraj;
  for (std::size_t f = 1; f <= gt.frame_count(); ++f)
    for (const auto& tb : gt.frame(f)) gtraj[tb.id][f] = tb.box;
  for (std::size_t f = 1; f <= pred.frame_count(); ++f)
    for (const auto& tb : pred.frame(f)) ptraj[tb.id][f] = tb.box;
  const std::size_t total = gt.total_boxes() + pred.total_boxes();
  if (total == 0) return 1.0;
  if (gtraj.empty() || ptraj.empty()) return 0.0;

  std::vector<const std::map<std::size_t, Box>*> gs, ps;
  for (const auto& [id, t] : gtraj) gs.push_back(&t);
  for (const auto& [id, t] : ptraj) ps.push_back(&t);

  Tensor coloc(gs.size(), ps.size());
  for (std::size_t i = 0; i < gs.size(); ++i)
    for (std::size_t j = 0; j < ps.size(); ++j) {
      double c = 0.0;
      for (const auto& [f, gb] : *gs[i]) {
        auto it = ps[j]->find(f);
        if (it != ps[j]->end() &&
            traj_distance(it->second, gb, gt.dims, jaccard_distance) <= tau)
          c += 1.0;
      }
      coloc.at(i, j) = c;
    }

  // Enumerate all injective partial maps gt -> pred, maximizing sum coloc.
  double best = 0.0;
  std::vector<char> used(ps.size(), 0);
  std::function<void(std::size_t, double)> rec = [&](std::size_t i, double acc) {
    if (i == gs.size()) {
      best = std::max(best, acc);
      return;
    }
    rec(i + 1, acc);
    for (std::size_t j = 0; j < ps.size(); ++j) {
      if (used[j]) continue;
      used[j] = 1;
      rec(i + 1, acc + coloc.at(i, j));
      used[j] = 0;
    }
  };
  rec(0, 0.0);
  return 2.0 * best / static_cast<double>(total);
}

DhnEvalResult brute_eval_counts(const std::vector<Tensor>& preds,
                                const std::vector<Tensor>& labels, bool row_mode) {
  detail::check(preds.size() == labels.size() && !preds.empty(),
                "brute_eval_counts: bad inputs");
  double n1 = 0, n0 = 0, c1 = 0, c0 = 0;
  std::size_t ma = 0, sa = 0, lines = 0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const Tensor& soft = preds[k];
    const Tensor& label = labels[k];
    Tensor hard(soft.rows(), soft.cols());
    if (row_mode) {
      for (std::size_t r = 0; r < soft.rows(); ++r) {
        std::size_t arg = 0;
        for (std::size_t c = 0; c < soft.cols(); ++c)
          if (soft.at(r, c) > soft.at(r, arg)) arg = c;
        if (soft.at(r, arg) > 0.5) hard.at(r, arg) = 1.0;
      }
    } else {
      for (std::size_t c = 0; c < soft.cols(); ++c) {
        std::size_t arg = 0;
        for (std::size_t r = 0; r < soft.rows(); ++r)
          if (soft.at(r, c) > soft.at(arg, c)) arg = r;
        if (soft.at(arg, c) > 0.5) hard.at(arg, c) = 1.0;
      }
    }
    for (std::size_t i = 0; i < label.size(); ++i) {
      if (label[i] == 1.0) {
        n1 += 1;
        c1 += hard[i] == 1.0;
      } else {
        n0 += 1;
        c0 += hard[i] == 0.0;
      }
    }
    const std::size_t outer = row_mode ? label.cols() : label.rows();
    const std::size_t inner = row_mode ? label.rows() : label.cols();
    for (std::size_t o = 0; o < outer; ++o) {
      std::size_t pred_ones = 0, label_ones = 0;
      for (std::size_t i = 0; i < inner; ++i) {
        const double pv = row_mode ? hard.at(i, o) : hard.at(o, i);
        const double lv = row_mode ? label.at(i, o) : label.at(o, i);
        pred_ones += pv == 1.0;
        label_ones += lv == 1.0;
      }
      ++lines;
      sa += pred_ones > 1;
      ma += (pred_ones > 0) != (label_ones > 0);
    }
  }
  DhnEvalResult r;
  const double w0 = n1 / (n0 + n1);
  const double w1 = 1.0 - w0;
  r.wa = (w1 * c1 + w0 * c0) / (w1 * n1 + w0 * n0);
  r.ma_pct = 100.0 * static_cast<double>(ma) / static_cast<double>(lines);
  r.sa_pct = 100.0 * static_cast<double>(sa) / static_cast<double>(lines);
  return r;
}

}  // namespace deepmot::oracles
