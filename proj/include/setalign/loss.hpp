#pragma once

#include <vector>

#include "setalign/matcher.hpp"
#include "setalign/similarity.hpp"

namespace setalign {

enum class Reduction { Sum, Mean };

struct LossOptions {
  double temperature = 1.0;
  Reduction reduction = Reduction::Sum;
};

/// One image-caption pair with its matching. `similarity` must equal
/// dot_scores(words, regions, normalize) for the batch's normalize flag,
/// otherwise backprop_to_embeddings computes gradients of a different
/// function.
struct LossItem {
  LossItem(WordSet words, RegionSet regions, Assignment assignment, SimilarityMatrix similarity);

  WordSet words;
  RegionSet regions;
  Assignment assignment;
  SimilarityMatrix similarity;
};

class LossBatch {
 public:
  LossBatch(std::vector<LossItem> items, bool normalize = false);

  /// Computes each item's similarity from its embeddings.
  static LossBatch from_matches(std::vector<WordSet> words, std::vector<RegionSet> regions,
                                std::vector<Assignment> assignments, bool normalize = false);

  const std::vector<LossItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool normalize() const { return normalize_; }

 private:
  std::vector<LossItem> items_;
  bool normalize_ = false;
};

/// Loss value plus gradients.
///
/// For region_word_loss, grad_scores[b] is |W_b| x m_b (own-caption scores)
/// and grad_cross_scores[b][c] is |W_c| x m_b, the gradient with respect to
/// the scores of caption c's words against item b's regions (empty when
/// c == b). Embedding gradients are filled by backprop_to_embeddings.
///
/// For image_text_loss there is a single item: grad_scores[0](b, c) is the
/// gradient with respect to image b against caption c, grad_region_features[0]
/// holds image-feature gradients and grad_word_embeddings[0] caption-feature
/// gradients.
struct LossOutput {
  double value = 0.0;
  std::vector<Matrix> grad_scores;
  std::vector<std::vector<Matrix>> grad_cross_scores;
  std::vector<Matrix> grad_word_embeddings;
  std::vector<Matrix> grad_region_features;
  int positive_terms = 0;
  int negative_terms = 0;
};

/// Binary cross-entropy over matched pairs. Each matched (i, k) contributes
/// -log sigma(s_ik / T) plus -log(1 - sigma(s_jk / T)) for every word j of
/// the other captions in the batch whose token differs from word i's token.
/// Regions without a matched word contribute nothing.
LossOutput region_word_loss(const LossBatch& batch, const LossOptions& options = {});

/// Whole image vs whole caption: image b's own caption is the positive,
/// every other caption in the batch a negative. Rows of both matrices are
/// batch entries.
LossOutput image_text_loss(const Matrix& image_features, const Matrix& caption_features,
                           const LossOptions& options = {});

/// Chain rule through S = W R^T (and through row normalization when the
/// batch uses it). Returns a copy of `loss` with embedding gradients filled.
LossOutput backprop_to_embeddings(const LossOutput& loss, const LossBatch& batch);

/// Numerically stable -log sigma(x) and sigma(x).
double neg_log_sigmoid(double x);
double sigmoid(double x);

}  // namespace setalign
