#include "setalign/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace setalign {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::OneToOne: return "one_to_one";
    case Strategy::OneToMany: return "one_to_many";
    case Strategy::MaxScore: return "max_score";
    case Strategy::MaxSize: return "max_size";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  std::string key(name);
  std::replace(key.begin(), key.end(), '-', '_');
  for (Strategy s : kAllStrategies) {
    if (key == to_string(s)) return s;
  }
  throw std::invalid_argument("unknown strategy '" + std::string(name) +
                              "' (expected one-to-one, one-to-many, max-score or max-size)");
}

CostMatrix::CostMatrix(Matrix costs) : costs_(std::move(costs)) {
  if (costs_.rows() < 1 || costs_.cols() < 1) {
    throw std::invalid_argument("cost matrix needs at least one word and one region");
  }
  for (Eigen::Index i = 0; i < costs_.rows(); ++i) {
    for (Eigen::Index k = 0; k < costs_.cols(); ++k) {
      if (!std::isfinite(costs_(i, k))) {
        std::ostringstream msg;
        msg << "cost entry (" << i << ", " << k << ") is not finite";
        throw std::invalid_argument(msg.str());
      }
    }
  }
}

CostMatrix CostMatrix::from_similarity(const SimilarityMatrix& similarity) {
  return CostMatrix(-similarity.scores());
}

namespace {

struct Solution {
  std::vector<int> row_to_col;  // -1 when the row is left unmatched
  Vector row_dual;
  Vector col_dual;
};

// Shortest augmenting path Hungarian for rows <= cols. Potentials satisfy
// c(i,k) - u(i) - v(k) >= 0 with v <= 0, and v(k) = 0 on unmatched columns,
// so (u, v) is an optimal dual of the rectangular problem.
Solution solve_wide(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
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
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Solution s;
  s.row_to_col.assign(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) s.row_to_col[p[j] - 1] = j - 1;
  }
  s.row_dual = Eigen::Map<const Vector>(u.data() + 1, n);
  s.col_dual = Eigen::Map<const Vector>(v.data() + 1, m);
  return s;
}

Solution solve(const Matrix& a) {
  if (a.rows() <= a.cols()) return solve_wide(a);
  const Solution t = solve_wide(a.transpose());
  Solution s;
  s.row_to_col.assign(static_cast<std::size_t>(a.rows()), -1);
  for (std::size_t k = 0; k < t.row_to_col.size(); ++k) {
    s.row_to_col[static_cast<std::size_t>(t.row_to_col[k])] = static_cast<int>(k);
  }
  s.row_dual = t.col_dual;
  s.col_dual = t.row_dual;
  return s;
}

double assignment_cost(const Matrix& a, const std::vector<int>& row_to_col) {
  double total = 0.0;
  for (std::size_t i = 0; i < row_to_col.size(); ++i) {
    if (row_to_col[i] >= 0) total += a(static_cast<Eigen::Index>(i), row_to_col[i]);
  }
  return total;
}

// Optimal cost of rows [first_row, n) against the columns not in `used`,
// matching min(rows, cols) pairs. Fills `tail` with the per-row columns.
double solve_tail(const Matrix& a, int first_row, const std::vector<char>& used,
                  std::vector<int>& tail) {
  const int n = static_cast<int>(a.rows());
  std::vector<int> cols;
  for (int k = 0; k < a.cols(); ++k) {
    if (!used[k]) cols.push_back(k);
  }
  const int rows = n - first_row;
  tail.assign(rows, -1);
  if (rows == 0 || cols.empty()) return 0.0;
  Matrix sub(rows, static_cast<Eigen::Index>(cols.size()));
  for (int r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      sub(r, static_cast<Eigen::Index>(c)) = a(first_row + r, cols[c]);
    }
  }
  const Solution s = solve(sub);
  for (int r = 0; r < rows; ++r) {
    if (s.row_to_col[r] >= 0) tail[r] = cols[s.row_to_col[r]];
  }
  return assignment_cost(sub, s.row_to_col);
}

Assignment make_assignment(std::vector<MatchedPair> pairs, Strategy strategy) {
  std::sort(pairs.begin(), pairs.end(), [](const MatchedPair& x, const MatchedPair& y) {
    return x.word != y.word ? x.word < y.word : x.region < y.region;
  });
  Assignment out;
  out.strategy = strategy;
  for (const MatchedPair& p : pairs) out.total_score += p.score;
  out.pairs = std::move(pairs);
  return out;
}

double log_sum_exp(const double* values, int count) {
  double hi = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) hi = std::max(hi, values[i]);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (int i = 0; i < count; ++i) acc += std::exp(values[i] - hi);
  return hi + std::log(acc);
}

}  // namespace

Assignment hungarian_match(const CostMatrix& cost) {
  const Matrix& a = cost.costs();
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const int pairs_needed = std::min(n, m);

  const Solution base = solve(a);
  const double optimum = assignment_cost(a, base.row_to_col);
  const double tol = 1e-9 * std::max(1.0, a.cwiseAbs().maxCoeff()) * pairs_needed;

  // Lexicographic refinement: walk words in order and, for each, look for a
  // smaller region that still admits an optimal completion. Only edges with
  // zero reduced cost under the optimal dual can appear in an optimal
  // matching, which keeps the number of re-solves small.
  std::vector<int> current = base.row_to_col;
  std::vector<char> used(static_cast<std::size_t>(m), 0);
  double prefix_cost = 0.0;
  int prefix_pairs = 0;
  std::vector<int> tail;
  for (int i = 0; i < n; ++i) {
    const int limit = current[i] >= 0 ? current[i] : m;
    for (int k = 0; k < limit; ++k) {
      if (used[k]) continue;
      const double reduced = a(i, k) - base.row_dual(i) - base.col_dual(k);
      if (reduced > tol) continue;
      const int rows_left = n - i - 1;
      const int cols_left = m - prefix_pairs - 1;
      if (std::min(rows_left, cols_left) != pairs_needed - prefix_pairs - 1) continue;
      used[k] = 1;
      const double tail_cost = solve_tail(a, i + 1, used, tail);
      used[k] = 0;
      if (prefix_cost + a(i, k) + tail_cost <= optimum + tol) {
        current[i] = k;
        std::copy(tail.begin(), tail.end(), current.begin() + i + 1);
        break;
      }
    }
    if (current[i] >= 0) {
      used[current[i]] = 1;
      prefix_cost += a(i, current[i]);
      ++prefix_pairs;
    }
  }

  std::vector<MatchedPair> pairs;
  for (int i = 0; i < n; ++i) {
    if (current[i] >= 0) pairs.push_back({i, current[i], -a(i, current[i])});
  }
  return make_assignment(std::move(pairs), Strategy::OneToOne);
}

TransportPlan sinkhorn_plan(const CostMatrix& cost, const SinkhornOptions& options) {
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("sinkhorn epsilon must be > 0");
  if (options.max_iters < 1) throw std::invalid_argument("sinkhorn max_iters must be >= 1");
  if (!(options.tol >= 0.0)) throw std::invalid_argument("sinkhorn tol must be >= 0");

  const Matrix& c = cost.costs();
  const int n = static_cast<int>(c.rows());
  const int m = static_cast<int>(c.cols());
  const double eps = options.epsilon;
  const double row_mass = 1.0 / n;
  const double col_mass = 1.0 / m;
  const double log_row_mass = -std::log(static_cast<double>(n));
  const double log_col_mass = -std::log(static_cast<double>(m));

  // Dual potentials; plan(i,k) = exp((f_i + g_k - c_ik) / eps).
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  std::vector<double> scratch(static_cast<std::size_t>(std::max(n, m)));

  TransportPlan out;
  out.epsilon = eps;
  out.plan.resize(n, m);
  for (int it = 1; it <= options.max_iters; ++it) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < m; ++k) scratch[k] = (g(k) - c(i, k)) / eps;
      f(i) = eps * (log_row_mass - log_sum_exp(scratch.data(), m));
    }
    for (int k = 0; k < m; ++k) {
      for (int i = 0; i < n; ++i) scratch[i] = (f(i) - c(i, k)) / eps;
      g(k) = eps * (log_col_mass - log_sum_exp(scratch.data(), n));
    }
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < m; ++k) out.plan(i, k) = std::exp((f(i) + g(k) - c(i, k)) / eps);
    }
    out.row_residual = (out.plan.rowwise().sum().array() - row_mass).abs().maxCoeff();
    out.col_residual = (out.plan.colwise().sum().array() - col_mass).abs().maxCoeff();
    out.iterations_run = it;
    if (out.row_residual < options.tol && out.col_residual < options.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

Assignment plan_to_pairs(const TransportPlan& plan, const SimilarityMatrix& similarity,
                         double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (plan.plan.rows() != similarity.words() || plan.plan.cols() != similarity.regions()) {
    std::ostringstream msg;
    msg << "plan is " << plan.plan.rows() << "x" << plan.plan.cols() << " but similarity is "
        << similarity.words() << "x" << similarity.regions();
    throw std::invalid_argument(msg.str());
  }
  std::vector<MatchedPair> pairs;
  for (Eigen::Index i = 0; i < plan.plan.rows(); ++i) {
    const double threshold = tau * plan.plan.row(i).maxCoeff();
    for (Eigen::Index k = 0; k < plan.plan.cols(); ++k) {
      if (plan.plan(i, k) >= threshold) {
        pairs.push_back({static_cast<int>(i), static_cast<int>(k), similarity(i, k)});
      }
    }
  }
  return make_assignment(std::move(pairs), Strategy::OneToMany);
}

Assignment max_score_match(const SimilarityMatrix& similarity) {
  std::vector<MatchedPair> pairs;
  for (Eigen::Index i = 0; i < similarity.words(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < similarity.regions(); ++k) {
      if (similarity(i, k) > similarity(i, best)) best = k;
    }
    pairs.push_back({static_cast<int>(i), static_cast<int>(best), similarity(i, best)});
  }
  return make_assignment(std::move(pairs), Strategy::MaxScore);
}

Assignment max_size_match(const WordSet& words, const RegionSet& regions,
                          const SimilarityMatrix& similarity) {
  if (!regions.boxes()) {
    throw std::invalid_argument("max-size matching requires region boxes, but none were given");
  }
  if (similarity.words() != words.size() || similarity.regions() != regions.size()) {
    throw std::invalid_argument("similarity shape does not match the word and region sets");
  }
  const std::vector<Box>& boxes = *regions.boxes();
  std::size_t largest = 0;
  for (std::size_t k = 1; k < boxes.size(); ++k) {
    if (boxes[k].area() > boxes[largest].area()) largest = k;
  }
  const auto region = static_cast<Eigen::Index>(largest);
  std::vector<MatchedPair> pairs;
  for (Eigen::Index i = 0; i < words.size(); ++i) {
    pairs.push_back({static_cast<int>(i), static_cast<int>(region), similarity(i, region)});
  }
  return make_assignment(std::move(pairs), Strategy::MaxSize);
}

Assignment match(Strategy strategy, const WordSet& words, const RegionSet& regions,
                 const SimilarityMatrix& similarity, const MatchOptions& options) {
  switch (strategy) {
    case Strategy::OneToOne: {
      Assignment a = hungarian_match(CostMatrix::from_similarity(similarity));
      // Report similarity scores rather than negated costs.
      a.total_score = 0.0;
      for (MatchedPair& p : a.pairs) {
        p.score = similarity(p.word, p.region);
        a.total_score += p.score;
      }
      return a;
    }
    case Strategy::OneToMany:
      return plan_to_pairs(sinkhorn_plan(CostMatrix::from_similarity(similarity), options.sinkhorn),
                           similarity, options.tau);
    case Strategy::MaxScore:
      return max_score_match(similarity);
    case Strategy::MaxSize:
      return max_size_match(words, regions, similarity);
  }
  throw std::invalid_argument("unknown strategy");
}

}  // namespace setalign
