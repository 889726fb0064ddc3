#include "setalign/benchmark.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace setalign {

namespace {

constexpr double kImageWidth = 640.0;
constexpr double kImageHeight = 480.0;

Vector random_unit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (;;) {
    for (int j = 0; j < dim; ++j) v(j) = normal(rng);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

// First `count` entries of a seeded partial Fisher-Yates shuffle of `pool`.
std::vector<int> sample_without_replacement(std::vector<int> pool, int count,
                                            std::mt19937_64& rng) {
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> side(16.0, 320.0);
  const double w = side(rng);
  const double h = side(rng);
  std::uniform_real_distribution<double> ux(0.0, kImageWidth - w);
  std::uniform_real_distribution<double> uy(0.0, kImageHeight - h);
  const double x1 = ux(rng);
  const double y1 = uy(rng);
  return {x1, y1, x1 + w, y1 + h};
}

std::string concept_token(int concept_id) {
  std::ostringstream out;
  out << "concept_" << concept_id;
  return out.str();
}

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (num_scenes < 1) fail("num_scenes", "must be >= 1");
  if (num_words < 1) fail("num_words", "must be >= 1");
  if (num_regions < num_words) fail("num_regions", "must be >= num_words");
  if (dim < 2) fail("dim", "must be >= 2");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma", "must be >= 0");
  if (concept_pool_size < num_words) fail("concept_pool_size", "must be >= num_words");
  if (!(duplicate_instance_prob >= 0.0 && duplicate_instance_prob <= 1.0)) {
    fail("duplicate_instance_prob", "must lie in [0, 1]");
  }
}

nlohmann::ordered_json GeneratorConfig::to_json() const {
  nlohmann::ordered_json j;
  j["num_scenes"] = num_scenes;
  j["num_words"] = num_words;
  j["num_regions"] = num_regions;
  j["dim"] = dim;
  j["noise_sigma"] = noise_sigma;
  j["concept_pool_size"] = concept_pool_size;
  j["duplicate_instance_prob"] = duplicate_instance_prob;
  j["seed"] = seed;
  return j;
}

std::vector<PlantedScene> generate_scenes(const GeneratorConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const int dim = config.dim;

  Matrix concepts(config.concept_pool_size, dim);
  for (int c = 0; c < config.concept_pool_size; ++c) concepts.row(c) = random_unit(dim, rng);

  std::vector<int> all_concepts(static_cast<std::size_t>(config.concept_pool_size));
  std::iota(all_concepts.begin(), all_concepts.end(), 0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution duplicate(config.duplicate_instance_prob);

  std::vector<PlantedScene> scenes;
  scenes.reserve(static_cast<std::size_t>(config.num_scenes));
  for (int s = 0; s < config.num_scenes; ++s) {
    const int n_words = config.num_words;
    const int n_regions = config.num_regions;
    const int n_extra = n_regions - n_words;

    std::vector<int> caption = sample_without_replacement(all_concepts, n_words, rng);

    // Region slots before shuffling: slot i < n_words holds word i's instance.
    std::vector<int> slot_concept(caption);
    std::vector<int> duplicates;
    for (int i = 0; i < n_words && static_cast<int>(duplicates.size()) < n_extra; ++i) {
      if (duplicate(rng)) duplicates.push_back(caption[static_cast<std::size_t>(i)]);
    }
    slot_concept.insert(slot_concept.end(), duplicates.begin(), duplicates.end());

    std::vector<int> outside;
    for (int c : all_concepts) {
      if (std::find(caption.begin(), caption.end(), c) == caption.end()) outside.push_back(c);
    }
    const int n_distractors = n_extra - static_cast<int>(duplicates.size());
    if (n_distractors <= static_cast<int>(outside.size())) {
      for (int c : sample_without_replacement(outside, n_distractors, rng)) slot_concept.push_back(c);
    } else if (!outside.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, outside.size() - 1);
      for (int d = 0; d < n_distractors; ++d) slot_concept.push_back(outside[pick(rng)]);
    } else {
      // Every pool concept is in the caption; fall back to extra instances.
      std::uniform_int_distribution<std::size_t> pick(0, caption.size() - 1);
      for (int d = 0; d < n_distractors; ++d) slot_concept.push_back(caption[pick(rng)]);
    }

    // Shuffle region order; position[slot] is the region index.
    std::vector<int> position(static_cast<std::size_t>(n_regions));
    std::iota(position.begin(), position.end(), 0);
    std::shuffle(position.begin(), position.end(), rng);

    Matrix features(n_regions, dim);
    std::vector<int> region_concepts(static_cast<std::size_t>(n_regions));
    for (int slot = 0; slot < n_regions; ++slot) {
      const int k = position[static_cast<std::size_t>(slot)];
      const int c = slot_concept[static_cast<std::size_t>(slot)];
      region_concepts[static_cast<std::size_t>(k)] = c;
      if (config.noise_sigma == 0.0) {
        features.row(k) = concepts.row(c);
        continue;
      }
      Eigen::RowVectorXd v = concepts.row(c);
      for (int j = 0; j < dim; ++j) v(j) += config.noise_sigma * noise(rng);
      const double norm = v.norm();
      features.row(k) = norm > 0.0 ? Eigen::RowVectorXd(v / norm) : Eigen::RowVectorXd(v);
    }

    std::vector<Box> boxes;
    for (int k = 0; k < n_regions; ++k) boxes.push_back(random_box(rng));
    std::vector<int> gt(static_cast<std::size_t>(n_words));
    for (int i = 0; i < n_words; ++i) gt[static_cast<std::size_t>(i)] = position[static_cast<std::size_t>(i)];
    std::vector<int> distractors;
    for (int slot = n_words; slot < n_regions; ++slot) {
      distractors.push_back(position[static_cast<std::size_t>(slot)]);
    }
    std::sort(distractors.begin(), distractors.end());

    // The largest box never belongs to a planted region when a distractor
    // can take it, so size-based matching fails visibly.
    if (!distractors.empty()) {
      std::size_t largest = 0;
      for (std::size_t k = 1; k < boxes.size(); ++k) {
        if (boxes[k].area() > boxes[largest].area()) largest = k;
      }
      if (std::find(gt.begin(), gt.end(), static_cast<int>(largest)) != gt.end()) {
        std::uniform_int_distribution<std::size_t> pick(0, distractors.size() - 1);
        std::swap(boxes[largest], boxes[static_cast<std::size_t>(distractors[pick(rng)])]);
      }
    }

    Matrix embeddings(n_words, dim);
    std::vector<std::string> tokens;
    for (int i = 0; i < n_words; ++i) {
      embeddings.row(i) = concepts.row(caption[static_cast<std::size_t>(i)]);
      tokens.push_back(concept_token(caption[static_cast<std::size_t>(i)]));
    }
    const std::string id = "scene_" + std::to_string(s);
    scenes.push_back(PlantedScene{WordSet(std::move(embeddings), std::move(tokens), id),
                                  RegionSet(std::move(features), std::move(boxes), id),
                                  std::move(gt), std::move(distractors),
                                  std::move(region_concepts)});
  }
  return scenes;
}

const StrategyRecovery& RecoveryReport::at(Strategy s) const {
  for (const StrategyRecovery& r : strategies) {
    if (r.strategy == s) return r;
  }
  throw std::out_of_range("strategy not in report: " + std::string(to_string(s)));
}

nlohmann::ordered_json RecoveryReport::to_json() const {
  nlohmann::ordered_json j;
  j["scenes"] = scenes;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const StrategyRecovery& r : strategies) {
    nlohmann::ordered_json e;
    e["strategy"] = std::string(to_string(r.strategy));
    e["precision"] = r.precision;
    e["recall"] = r.recall;
    e["f1"] = r.f1;
    e["mean_similarity"] = r.mean_similarity;
    e["predicted_pairs"] = r.predicted_pairs;
    e["correct_pairs"] = r.correct_pairs;
    e["gt_pairs"] = r.gt_pairs;
    list.push_back(std::move(e));
  }
  j["strategies"] = std::move(list);
  return j;
}

std::string RecoveryReport::to_csv() const {
  std::ostringstream out;
  out << "strategy,precision,recall,f1,mean_similarity,predicted_pairs,correct_pairs,gt_pairs\n";
  for (const StrategyRecovery& r : strategies) {
    out << to_string(r.strategy) << ',' << format_number(r.precision) << ','
        << format_number(r.recall) << ',' << format_number(r.f1) << ','
        << format_number(r.mean_similarity) << ',' << r.predicted_pairs << ',' << r.correct_pairs
        << ',' << r.gt_pairs << '\n';
  }
  return out.str();
}

PairCounts count_recovered(const Assignment& assignment, std::span<const int> gt_assignment) {
  PairCounts counts;
  counts.predicted = assignment.pairs.size();
  for (int k : gt_assignment) counts.truth += k >= 0 ? 1 : 0;
  for (const MatchedPair& p : assignment.pairs) {
    if (p.word >= 0 && static_cast<std::size_t>(p.word) < gt_assignment.size() &&
        gt_assignment[static_cast<std::size_t>(p.word)] == p.region) {
      ++counts.correct;
    }
  }
  return counts;
}

StrategyRecovery recovery_from_counts(Strategy strategy, const PairCounts& counts,
                                      double similarity_sum) {
  StrategyRecovery r;
  r.strategy = strategy;
  r.predicted_pairs = counts.predicted;
  r.correct_pairs = counts.correct;
  r.gt_pairs = counts.truth;
  r.precision = counts.predicted ? static_cast<double>(counts.correct) / counts.predicted : 0.0;
  r.recall = counts.truth ? static_cast<double>(counts.correct) / counts.truth : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  r.mean_similarity = counts.predicted ? similarity_sum / counts.predicted : 0.0;
  return r;
}

RecoveryReport evaluate_strategies(const std::vector<PlantedScene>& scenes,
                                   std::span<const Strategy> strategies,
                                   const EvaluationOptions& options) {
  if (scenes.empty()) throw std::invalid_argument("no scenes to evaluate");
  for (Strategy s : strategies) {
    if (s != Strategy::MaxSize) continue;
    for (const PlantedScene& scene : scenes) {
      if (!scene.regions.boxes()) {
        throw std::invalid_argument("max_size requested but scene " + scene.regions.image_id() +
                                    " has no boxes");
      }
    }
  }

  struct SceneResult {
    PairCounts counts;
    double similarity_sum = 0.0;
  };
  const std::size_t n_strategies = strategies.size();
  std::vector<std::vector<SceneResult>> per_scene(scenes.size(),
                                                  std::vector<SceneResult>(n_strategies));
  parallel_for(scenes.size(), options.threads, [&](std::size_t idx) {
    const PlantedScene& scene = scenes[idx];
    const SimilarityMatrix sim = compute_similarity(scene.words, scene.regions, options.normalize);
    for (std::size_t s = 0; s < n_strategies; ++s) {
      const Assignment a = match(strategies[s], scene.words, scene.regions, sim, options.match);
      per_scene[idx][s].counts = count_recovered(a, scene.gt_assignment);
      per_scene[idx][s].similarity_sum = a.total_score;
    }
  });

  RecoveryReport report;
  report.scenes = scenes.size();
  for (std::size_t s = 0; s < n_strategies; ++s) {
    PairCounts total;
    double similarity_sum = 0.0;
    for (const auto& scene_results : per_scene) {
      total.predicted += scene_results[s].counts.predicted;
      total.correct += scene_results[s].counts.correct;
      total.truth += scene_results[s].counts.truth;
      similarity_sum += scene_results[s].similarity_sum;
    }
    report.strategies.push_back(recovery_from_counts(strategies[s], total, similarity_sum));
  }
  return report;
}

Matrix corrupting_rotation(int dim, double angle_radians, std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("rotation needs dim >= 2");
  std::mt19937_64 rng(seed);
  std::vector<int> axes(static_cast<std::size_t>(dim));
  std::iota(axes.begin(), axes.end(), 0);
  std::shuffle(axes.begin(), axes.end(), rng);
  Matrix q = Matrix::Identity(dim, dim);
  const double c = std::cos(angle_radians);
  const double s = std::sin(angle_radians);
  for (int p = 0; p + 1 < dim; p += 2) {
    const int a = axes[static_cast<std::size_t>(p)];
    const int b = axes[static_cast<std::size_t>(p + 1)];
    q(a, a) = c;
    q(a, b) = -s;
    q(b, a) = s;
    q(b, b) = c;
  }
  return q;
}

std::vector<PlantedScene> rotate_regions(const std::vector<PlantedScene>& scenes,
                                         const Matrix& rotation) {
  std::vector<PlantedScene> out;
  out.reserve(scenes.size());
  for (const PlantedScene& scene : scenes) {
    Matrix rotated = scene.regions.features() * rotation.transpose();
    out.push_back(PlantedScene{scene.words,
                               RegionSet(std::move(rotated), scene.regions.boxes(),
                                         scene.regions.image_id()),
                               scene.gt_assignment, scene.distractor_indices,
                               scene.region_concepts});
  }
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) fail("step_size", "must be > 0");
  if (!(loss.temperature > 0.0)) fail("temperature", "must be > 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(divergence_ratio > 1.0)) fail("divergence_ratio", "must be > 1");
}

DivergenceError::DivergenceError(int epoch, double loss)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                         " (loss " + format_number(loss) + ")"),
      epoch_(epoch),
      loss_(loss) {}

namespace {

struct Measurement {
  double loss = 0.0;
  PairCounts counts;
  Matrix grad_projection;
};

Measurement measure(const std::vector<PlantedScene>& scenes, const Matrix& projection,
                    const TrainConfig& config) {
  const Eigen::Index dim = projection.rows();
  Measurement m;
  m.grad_projection = Matrix::Zero(dim, dim);
  for (std::size_t start = 0; start < scenes.size();
       start += static_cast<std::size_t>(config.batch_size)) {
    const std::size_t stop =
        std::min(scenes.size(), start + static_cast<std::size_t>(config.batch_size));
    std::vector<LossItem> items;
    for (std::size_t b = start; b < stop; ++b) {
      const PlantedScene& scene = scenes[b];
      RegionSet projected(scene.regions.features() * projection.transpose(), scene.regions.boxes(),
                          scene.regions.image_id());
      SimilarityMatrix sim = compute_similarity(scene.words, projected);
      Assignment a = match(config.strategy, scene.words, projected, sim, config.match);
      const PairCounts c = count_recovered(a, scene.gt_assignment);
      m.counts.predicted += c.predicted;
      m.counts.correct += c.correct;
      m.counts.truth += c.truth;
      items.emplace_back(scene.words, std::move(projected), std::move(a), std::move(sim));
    }
    LossBatch batch(std::move(items));
    bool any_pairs = false;
    for (const LossItem& item : batch.items()) any_pairs = any_pairs || !item.assignment.pairs.empty();
    if (!any_pairs) continue;
    const LossOutput out = backprop_to_embeddings(region_word_loss(batch, config.loss), batch);
    m.loss += out.value;
    // Projected rows are r P^T, so dL/dP = G^T R over the original features.
    for (std::size_t b = start; b < stop; ++b) {
      m.grad_projection +=
          out.grad_region_features[b - start].transpose() * scenes[b].regions.features();
    }
  }
  return m;
}

}  // namespace

TrainingTrace train_toy(const std::vector<PlantedScene>& scenes, const TrainConfig& config) {
  config.validate();
  if (scenes.empty()) throw std::invalid_argument("no scenes to train on");
  const Eigen::Index dim = scenes.front().regions.dim();

  TrainingTrace trace;
  trace.strategy = config.strategy;
  Matrix projection = Matrix::Identity(dim, dim);

  auto record = [&](int epoch, const Measurement& m) {
    const StrategyRecovery r = recovery_from_counts(config.strategy, m.counts, 0.0);
    trace.epochs.push_back({epoch, m.loss, m.counts.predicted, r.precision, r.recall, r.f1});
  };

  Measurement current = measure(scenes, projection, config);
  if (!std::isfinite(current.loss)) throw DivergenceError(0, current.loss);
  const double initial_loss = current.loss;
  record(0, current);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    projection -= config.step_size * current.grad_projection;
    if (!projection.allFinite()) throw DivergenceError(epoch, std::nan(""));
    current = measure(scenes, projection, config);
    if (!std::isfinite(current.loss) || current.loss > config.divergence_ratio * initial_loss) {
      throw DivergenceError(epoch, current.loss);
    }
    record(epoch, current);
  }
  trace.projection = std::move(projection);
  return trace;
}

nlohmann::ordered_json TrainingTrace::to_json() const {
  nlohmann::ordered_json j;
  j["strategy"] = std::string(to_string(strategy));
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const TrainEpoch& e : epochs) {
    nlohmann::ordered_json r;
    r["epoch"] = e.epoch;
    r["loss"] = e.loss;
    r["pairs"] = e.pairs;
    r["precision"] = e.precision;
    r["recall"] = e.recall;
    r["f1"] = e.f1;
    rows.push_back(std::move(r));
  }
  j["epochs"] = std::move(rows);
  return j;
}

std::string TrainingTrace::to_csv() const {
  std::ostringstream out;
  out << "epoch,loss,pairs,precision,recall,f1\n";
  for (const TrainEpoch& e : epochs) {
    out << e.epoch << ',' << format_number(e.loss) << ',' << e.pairs << ','
        << format_number(e.precision) << ',' << format_number(e.recall) << ','
        << format_number(e.f1) << '\n';
  }
  return out.str();
}

std::string format_number(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

}  // namespace setalign
