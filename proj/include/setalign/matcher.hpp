#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "setalign/similarity.hpp"

namespace setalign {

enum class Strategy { OneToOne, OneToMany, MaxScore, MaxSize };

/// Tag used in JSON output: one_to_one, one_to_many, max_score, max_size.
std::string_view to_string(Strategy s);
/// Accepts both the underscore and the dashed spelling (one-to-one).
Strategy parse_strategy(std::string_view name);

inline constexpr Strategy kAllStrategies[] = {Strategy::OneToOne, Strategy::OneToMany,
                                              Strategy::MaxScore, Strategy::MaxSize};

struct MatchedPair {
  int word = 0;
  int region = 0;
  double score = 0.0;

  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

/// Word -> region matching. Pairs are sorted by (word, region) and
/// total_score is the sum of pair scores in that order.
struct Assignment {
  std::vector<MatchedPair> pairs;
  Strategy strategy = Strategy::OneToOne;
  double total_score = 0.0;
};

/// Matching costs, d_ik = -s_ik. Rows are words (workers), columns are
/// regions (jobs).
class CostMatrix {
 public:
  /// Throws std::invalid_argument naming the first non-finite entry.
  explicit CostMatrix(Matrix costs);
  static CostMatrix from_similarity(const SimilarityMatrix& similarity);

  const Matrix& costs() const { return costs_; }
  Eigen::Index words() const { return costs_.rows(); }
  Eigen::Index regions() const { return costs_.cols(); }

 private:
  Matrix costs_;
};

/// Entropic transport plan between uniform word and region marginals.
struct TransportPlan {
  Matrix plan;
  double epsilon = 0.0;
  int iterations_run = 0;
  bool converged = false;
  double row_residual = 0.0;  ///< max_i |sum_k plan(i,k) - 1/|W||
  double col_residual = 0.0;  ///< max_k |sum_i plan(i,k) - 1/m|
};

struct SinkhornOptions {
  double epsilon = 0.1;
  int max_iters = 200;
  double tol = 1e-6;
};

/// Minimum-cost one-to-one matching of min(|W|, m) pairs. Among optimal
/// matchings the lexicographically smallest (word, region) pair list is
/// returned. Pair scores are the negated costs, so total_score is minus the
/// total cost.
Assignment hungarian_match(const CostMatrix& cost);

/// Log-domain Sinkhorn iterations. Non-convergence is reported through
/// `converged` rather than thrown.
TransportPlan sinkhorn_plan(const CostMatrix& cost, const SinkhornOptions& options = {});

/// Hard pairs from a soft plan: word i keeps every region whose plan mass
/// reaches tau times the largest mass in row i. Scores come from
/// `similarity`.
Assignment plan_to_pairs(const TransportPlan& plan, const SimilarityMatrix& similarity,
                         double tau = 0.5);

/// Every word takes its highest-scoring region; ties go to the lowest index.
Assignment max_score_match(const SimilarityMatrix& similarity);

/// Every word takes the region with the largest box area.
Assignment max_size_match(const WordSet& words, const RegionSet& regions,
                          const SimilarityMatrix& similarity);

struct MatchOptions {
  SinkhornOptions sinkhorn;
  double tau = 0.5;
};

/// Dispatch on strategy; `similarity` must be compute_similarity(words, regions).
Assignment match(Strategy strategy, const WordSet& words, const RegionSet& regions,
                 const SimilarityMatrix& similarity, const MatchOptions& options = {});

}  // namespace setalign
