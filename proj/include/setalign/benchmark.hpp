#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "setalign/loss.hpp"
#include "setalign/matcher.hpp"
#include "setalign/similarity.hpp"

namespace setalign {

/// Synthetic scenes with a planted word -> region alignment.
struct GeneratorConfig {
  int num_scenes = 200;
  int num_words = 20;
  int num_regions = 100;
  int dim = 64;
  double noise_sigma = 0.1;
  int concept_pool_size = 500;
  double duplicate_instance_prob = 0.0;
  std::uint64_t seed = 7;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

/// One image-caption pair. Region order is shuffled; gt_assignment[i] is the
/// region planted for word i. Distractors are regions with no word: noisy
/// copies of out-of-caption concepts, plus extra instances of caption
/// concepts when duplicates are enabled.
struct PlantedScene {
  WordSet words;
  RegionSet regions;
  std::vector<int> gt_assignment;
  std::vector<int> distractor_indices;
  std::vector<int> region_concepts;  ///< concept id behind each region
};

std::vector<PlantedScene> generate_scenes(const GeneratorConfig& config);

/// Micro-averaged recovery of the planted pairs for one strategy.
struct StrategyRecovery {
  Strategy strategy = Strategy::OneToOne;
  std::size_t predicted_pairs = 0;
  std::size_t correct_pairs = 0;
  std::size_t gt_pairs = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mean_similarity = 0.0;
};

struct RecoveryReport {
  std::size_t scenes = 0;
  std::vector<StrategyRecovery> strategies;

  const StrategyRecovery& at(Strategy s) const;
  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
};

struct EvaluationOptions {
  bool normalize = false;
  MatchOptions match;
  int threads = 0;  ///< 0 picks the hardware concurrency
};

/// Pair counts of one assignment against a planted alignment.
struct PairCounts {
  std::size_t predicted = 0;
  std::size_t correct = 0;
  std::size_t truth = 0;
};
PairCounts count_recovered(const Assignment& assignment, std::span<const int> gt_assignment);

/// precision, recall and their harmonic mean (0 when both are 0).
StrategyRecovery recovery_from_counts(Strategy strategy, const PairCounts& counts,
                                      double similarity_sum);

RecoveryReport evaluate_strategies(const std::vector<PlantedScene>& scenes,
                                   std::span<const Strategy> strategies,
                                   const EvaluationOptions& options = {});

/// Applies one fixed orthogonal map to every region feature: a rotation by
/// `angle_radians` in each of dim/2 disjoint coordinate planes chosen from
/// `seed`. Words are untouched.
Matrix corrupting_rotation(int dim, double angle_radians, std::uint64_t seed);
std::vector<PlantedScene> rotate_regions(const std::vector<PlantedScene>& scenes,
                                         const Matrix& rotation);

struct TrainConfig {
  int epochs = 50;
  double step_size = 1e-3;
  Strategy strategy = Strategy::OneToOne;
  LossOptions loss;
  int batch_size = 4;
  MatchOptions match;
  /// Training stops with DivergenceError when the loss stops being finite
  /// or exceeds this multiple of the initial loss.
  double divergence_ratio = 100.0;

  void validate() const;
};

struct TrainEpoch {
  int epoch = 0;
  double loss = 0.0;
  std::size_t pairs = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct TrainingTrace {
  Strategy strategy = Strategy::OneToOne;
  std::vector<TrainEpoch> epochs;
  Matrix projection;

  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, double loss);
  int epoch() const { return epoch_; }
  double loss() const { return loss_; }

 private:
  int epoch_;
  double loss_;
};

/// Learns a d x d projection P (identity at start) applied to region
/// features, s_ik = w_i . (P r_k). Every epoch re-matches with the current
/// P, evaluates region_word_loss over batches of `batch_size` consecutive
/// scenes and takes one full-batch gradient step. Entry 0 of the trace is
/// the measurement before any update.
TrainingTrace train_toy(const std::vector<PlantedScene>& scenes, const TrainConfig& config);

/// Shortest round-trip decimal form, used for CSV cells.
std::string format_number(double value);

}  // namespace setalign
