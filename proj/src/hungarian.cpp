#include "deepmot/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "deepmot/common.hpp"

namespace deepmot {

Tensor Assignment::matrix() const {
  Tensor m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    if (row_to_col[r] >= 0) m.at(r, static_cast<std::size_t>(row_to_col[r])) = 1.0;
  return m;
}

std::size_t Assignment::match_count() const {
  std::size_t n = 0;
  for (auto c : row_to_col)
    if (c >= 0) ++n;
  return n;
}

double Assignment::cost(const Tensor& d) const {
  double s = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    if (row_to_col[r] >= 0) s += d.at(r, static_cast<std::size_t>(row_to_col[r]));
  return s;
}

bool is_valid_assignment(const Tensor& m) {
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] != 0.0 && m[i] != 1.0) return false;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) s += m.at(r, c);
    if (s > 1.0) return false;
  }
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) s += m.at(r, c);
    if (s > 1.0) return false;
  }
  return true;
}

Assignment assignment_from_matrix(const Tensor& m) {
  detail::check(is_valid_assignment(m),
                "assignment_from_matrix: not a valid binary assignment");
  Assignment a;
  a.rows = m.rows();
  a.cols = m.cols();
  a.row_to_col.assign(a.rows, -1);
  a.col_to_row.assign(a.cols, -1);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t c = 0; c < a.cols; ++c)
      if (m.at(r, c) == 1.0) {
        a.row_to_col[r] = static_cast<std::ptrdiff_t>(c);
        a.col_to_row[c] = static_cast<std::ptrdiff_t>(r);
      }
  return a;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// O(n^3) shortest-augmenting-path assignment on a square matrix with row/col
// potentials (the classic Kuhn-Munkres/Jonker-Volgenant potentials form).
// Outputs the row -> col solution and the final dual potentials; on exit
// cost(i,j) - u[i] - v[j] >= 0 for all pairs (up to rounding) with equality
// on matched pairs.
void jv_square(const std::vector<double>& cost, int n, std::vector<int>& rowsol,
               std::vector<double>& u_out, std::vector<double>& v_out) {
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j)
        if (!used[j]) {
          double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  rowsol.assign(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j]) rowsol[p[j] - 1] = j - 1;
  u_out.assign(n, 0.0);
  v_out.assign(n, 0.0);
  for (int i = 1; i <= n; ++i) u_out[i - 1] = u[i];
  for (int j = 1; j <= n; ++j) v_out[j - 1] = v[j];
}

// Augmenting-path feasibility: can every listed row be matched into columns
// allowed by its candidate list, avoiding banned columns?
class KuhnMatcher {
 public:
  KuhnMatcher(int k, const std::vector<std::vector<int>>* lists)
      : lists_(lists), owner_(k, -1), seen_(k, 0), stamp_(0) {}

  // rows: indices into *lists_; banned: columns unavailable.
  bool match_all(const std::vector<int>& rows, const std::vector<char>& banned) {
    std::fill(owner_.begin(), owner_.end(), -1);
    banned_ = &banned;
    for (int r : rows) {
      ++stamp_;
      if (!augment(r)) return false;
    }
    return true;
  }

  const std::vector<int>& owners() const { return owner_; }

 private:
  bool augment(int row) {
    for (int c : (*lists_)[static_cast<std::size_t>(row)]) {
      if ((*banned_)[static_cast<std::size_t>(c)] || seen_[static_cast<std::size_t>(c)] == stamp_)
        continue;
      seen_[static_cast<std::size_t>(c)] = stamp_;
      if (owner_[static_cast<std::size_t>(c)] < 0 || augment(owner_[static_cast<std::size_t>(c)])) {
        owner_[static_cast<std::size_t>(c)] = row;
        return true;
      }
    }
    return false;
  }

  const std::vector<std::vector<int>>* lists_;
  const std::vector<char>* banned_;
  std::vector<int> owner_;
  std::vector<int> seen_;
  int stamp_;
};

struct CoreResult {
  std::vector<int> row_to_col;  // padded square solution, -1 impossible
};

// Solves the padded square problem and, when the optimum is not unique,
// re-picks among the optimal matchings so that the per-row matched real
// feasible column vector (unmatched = M) is lexicographically smallest.
// `feasible` marks real pairs allowed to appear in the output.
CoreResult solve_core(const Tensor& d, const std::vector<char>& feasible) {
  const std::size_t n = d.rows(), m = d.cols();
  const std::size_t k = std::max(n, m);
  double max_abs = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c)
      if (feasible[r * m + c]) max_abs = std::max(max_abs, std::fabs(d.at(r, c)));
  // Infeasible pairs get a cost that dwarfs any achievable feasible total, so
  // the solver maximizes feasible cardinality first; padding sits above that.
  const double prohibited = 2.0 * static_cast<double>(n) * static_cast<double>(m) * max_abs + 1.0;
  const double pad = prohibited + 1.0;

  std::vector<double> cost(k * k, pad);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c)
      cost[r * k + c] = feasible[r * m + c] ? d.at(r, c) : prohibited;

  std::vector<int> rowsol;
  std::vector<double> u, v;
  jv_square(cost, static_cast<int>(k), rowsol, u, v);

  auto tight = [&](std::size_t r, std::size_t c) {
    const double entry = cost[r * k + c];
    const double red = entry - u[r] - v[c];
    const double tol =
        1e-9 * (1.0 + std::fabs(entry) + std::fabs(u[r]) + std::fabs(v[c]));
    return red <= tol;
  };

  std::vector<std::vector<int>> tight_cols(k);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < k; ++c)
      if (tight(r, c)) tight_cols[r].push_back(static_cast<int>(c));

  // Alternative optima exist iff the tight graph has an alternating cycle:
  // directed edges matched-col -> other tight col of the same row.
  bool ambiguous = false;
  {
    std::vector<std::vector<int>> adj(k);
    for (std::size_t r = 0; r < k; ++r) {
      int mc = rowsol[r];
      for (int c : tight_cols[r])
        if (c != mc) adj[static_cast<std::size_t>(mc)].push_back(c);
    }
    std::vector<char> color(k, 0);  // 0 new, 1 on stack, 2 done
    std::vector<std::pair<int, std::size_t>> stack;
    for (std::size_t s = 0; s < k && !ambiguous; ++s) {
      if (color[s]) continue;
      stack.push_back({static_cast<int>(s), 0});
      color[s] = 1;
      while (!stack.empty() && !ambiguous) {
        auto& [node, next] = stack.back();
        if (next < adj[static_cast<std::size_t>(node)].size()) {
          int to = adj[static_cast<std::size_t>(node)][next++];
          if (color[static_cast<std::size_t>(to)] == 1)
            ambiguous = true;
          else if (color[static_cast<std::size_t>(to)] == 0) {
            color[static_cast<std::size_t>(to)] = 1;
            stack.push_back({to, 0});
          }
        } else {
          color[static_cast<std::size_t>(node)] = 2;
          stack.pop_back();
        }
      }
    }
  }

  CoreResult out;
  if (!ambiguous) {
    out.row_to_col = rowsol;
    return out;
  }

  // Lexicographic repair. Split each real row's tight columns into
  // "key" columns (real + feasible, preferred ascending) and "void" columns
  // (prohibited or padding, equivalent to unmatched in the output key).
  std::vector<std::vector<int>> key_cols(k), void_cols(k);
  for (std::size_t r = 0; r < k; ++r) {
    for (int c : tight_cols[r]) {
      const bool in_key = r < n && static_cast<std::size_t>(c) < m &&
                          feasible[r * m + static_cast<std::size_t>(c)];
      (in_key ? key_cols[r] : void_cols[r]).push_back(c);
    }
  }

  std::vector<char> used(k, 0);
  std::vector<int> fixed(k, -1);
  std::vector<int> flexible;  // rows committed to a void column, choice deferred

  // Feasibility of the remaining system: flexible rows restricted to their
  // void lists, rows after `next_row` (and padding rows) free over all tight
  // columns.
  auto system_ok = [&](std::size_t next_row, const std::vector<char>& banned) {
    std::vector<int> rows;
    std::vector<std::vector<int>> lists(k);
    for (int fr : flexible) lists[static_cast<std::size_t>(fr)] = void_cols[static_cast<std::size_t>(fr)];
    for (std::size_t r = next_row; r < k; ++r) lists[r] = tight_cols[r];
    for (int fr : flexible) rows.push_back(fr);
    for (std::size_t r = next_row; r < k; ++r) rows.push_back(static_cast<int>(r));
    KuhnMatcher local(static_cast<int>(k), &lists);
    return local.match_all(rows, banned);
  };

  for (std::size_t r = 0; r < n; ++r) {
    bool committed = false;
    for (int c : key_cols[r]) {
      if (used[static_cast<std::size_t>(c)]) continue;
      std::vector<char> banned = used;
      banned[static_cast<std::size_t>(c)] = 1;
      if (system_ok(r + 1, banned)) {
        fixed[r] = c;
        used[static_cast<std::size_t>(c)] = 1;
        committed = true;
        break;
      }
    }
    if (!committed) flexible.push_back(static_cast<int>(r));
  }

  // Concretize deferred rows and padding rows in one final matching.
  {
    std::vector<int> rows;
    std::vector<std::vector<int>> lists(k);
    for (int fr : flexible) {
      lists[static_cast<std::size_t>(fr)] = void_cols[static_cast<std::size_t>(fr)];
      rows.push_back(fr);
    }
    for (std::size_t r = n; r < k; ++r) {
      lists[r] = tight_cols[r];
      rows.push_back(static_cast<int>(r));
    }
    KuhnMatcher local(static_cast<int>(k), &lists);
    bool ok = local.match_all(rows, used);
    if (!ok) {
      // Tolerance misjudged a tie; the JV solution is still optimal.
      out.row_to_col = rowsol;
      return out;
    }
    const std::vector<int>& owners = local.owners();
    for (std::size_t c = 0; c < k; ++c)
      if (owners[c] >= 0) fixed[static_cast<std::size_t>(owners[c])] = static_cast<int>(c);
  }
  out.row_to_col = fixed;
  return out;
}

Assignment strip(const Tensor& d, const std::vector<char>& feasible,
                 const std::vector<int>& square_sol) {
  const std::size_t n = d.rows(), m = d.cols();
  Assignment a;
  a.rows = n;
  a.cols = m;
  a.row_to_col.assign(n, -1);
  a.col_to_row.assign(m, -1);
  for (std::size_t r = 0; r < n; ++r) {
    int c = square_sol[r];
    if (c >= 0 && static_cast<std::size_t>(c) < m && feasible[r * m + static_cast<std::size_t>(c)]) {
      a.row_to_col[r] = c;
      a.col_to_row[static_cast<std::size_t>(c)] = static_cast<std::ptrdiff_t>(r);
    }
  }
  return a;
}

void check_input(const Tensor& d) {
  detail::check(d.rows() >= 1 && d.cols() >= 1, "hungarian: empty matrix");
  if (!d.all_finite()) detail::fail_runtime("hungarian: non-finite cost entry");
}

}  // namespace

Assignment solve(const Tensor& d) {
  check_input(d);
  std::vector<char> feasible(d.size(), 1);
  return strip(d, feasible, solve_core(d, feasible).row_to_col);
}

Assignment solve_thresholded(const Tensor& d, double tau) {
  check_input(d);
  detail::check(tau > 0.0, "solve_thresholded: tau must be positive");
  std::vector<char> feasible(d.size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) feasible[i] = d[i] <= tau ? 1 : 0;
  return strip(d, feasible, solve_core(d, feasible).row_to_col);
}

}  // namespace deepmot
