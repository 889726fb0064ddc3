#include "setalign/loss.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace setalign {

double neg_log_sigmoid(double x) {
  // -log sigma(x) = log(1 + e^-x), evaluated without overflow.
  return std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LossItem::LossItem(WordSet words_, RegionSet regions_, Assignment assignment_,
                   SimilarityMatrix similarity_)
    : words(std::move(words_)),
      regions(std::move(regions_)),
      assignment(std::move(assignment_)),
      similarity(std::move(similarity_)) {
  if (similarity.words() != words.size() || similarity.regions() != regions.size()) {
    throw std::invalid_argument("similarity shape does not match the word and region sets");
  }
  for (const MatchedPair& p : assignment.pairs) {
    if (p.word < 0 || p.word >= words.size() || p.region < 0 || p.region >= regions.size()) {
      std::ostringstream msg;
      msg << "assignment pair (" << p.word << ", " << p.region << ") is out of range for "
          << words.size() << " words and " << regions.size() << " regions";
      throw std::invalid_argument(msg.str());
    }
  }
}

LossBatch::LossBatch(std::vector<LossItem> items, bool normalize)
    : items_(std::move(items)), normalize_(normalize) {
  if (items_.empty()) throw std::invalid_argument("loss batch needs at least one item");
  const Eigen::Index d = items_.front().words.dim();
  for (const LossItem& item : items_) {
    if (item.words.dim() != d || item.regions.dim() != d) {
      throw std::invalid_argument("all embeddings in a loss batch must share one dimension");
    }
  }
}

LossBatch LossBatch::from_matches(std::vector<WordSet> words, std::vector<RegionSet> regions,
                                  std::vector<Assignment> assignments, bool normalize) {
  if (words.size() != regions.size() || words.size() != assignments.size()) {
    throw std::invalid_argument("words, regions and assignments must have equal batch length");
  }
  std::vector<LossItem> items;
  items.reserve(words.size());
  for (std::size_t b = 0; b < words.size(); ++b) {
    SimilarityMatrix s = compute_similarity(words[b], regions[b], normalize);
    items.emplace_back(std::move(words[b]), std::move(regions[b]), std::move(assignments[b]),
                       std::move(s));
  }
  return LossBatch(std::move(items), normalize);
}

namespace {

void apply_reduction(LossOutput& out, Reduction reduction, int count) {
  if (reduction != Reduction::Mean || count == 0) return;
  const double scale = 1.0 / count;
  out.value *= scale;
  for (Matrix& g : out.grad_scores) g *= scale;
  for (auto& row : out.grad_cross_scores) {
    for (Matrix& g : row) g *= scale;
  }
  for (Matrix& g : out.grad_word_embeddings) g *= scale;
  for (Matrix& g : out.grad_region_features) g *= scale;
}

// Gradient with respect to the raw rows given the gradient with respect to
// the normalized rows: (I - u u^T) g / |x| with u = x / |x|.
Matrix through_normalization(const Matrix& raw, const Matrix& grad_normalized) {
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    const double norm = raw.row(r).norm();
    if (norm == 0.0) {
      out.row(r).setZero();
      continue;
    }
    const Eigen::RowVectorXd unit = raw.row(r) / norm;
    const Eigen::RowVectorXd g = grad_normalized.row(r);
    out.row(r) = (g - g.dot(unit) * unit) / norm;
  }
  return out;
}

}  // namespace

LossOutput region_word_loss(const LossBatch& batch, const LossOptions& options) {
  if (!(options.temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  const double inv_t = 1.0 / options.temperature;
  const auto& items = batch.items();
  const std::size_t n = items.size();

  bool any_pairs = false;
  for (const LossItem& item : items) any_pairs = any_pairs || !item.assignment.pairs.empty();
  if (!any_pairs) throw std::invalid_argument("no matched pairs in the batch; nothing to optimize");

  LossOutput out;
  out.grad_scores.resize(n);
  out.grad_cross_scores.assign(n, std::vector<Matrix>(n));
  for (std::size_t b = 0; b < n; ++b) {
    out.grad_scores[b] = Matrix::Zero(items[b].words.size(), items[b].regions.size());
  }

  for (std::size_t b = 0; b < n; ++b) {
    const LossItem& item = items[b];
    // Scores of other captions' words against this item's regions.
    std::vector<Matrix> cross(n);
    for (std::size_t c = 0; c < n; ++c) {
      if (c == b) continue;
      cross[c] = dot_scores(items[c].words.embeddings(), item.regions.features(), batch.normalize());
      if (!cross[c].allFinite()) {
        throw std::invalid_argument("non-finite cross-caption score in loss batch");
      }
      out.grad_cross_scores[b][c] = Matrix::Zero(items[c].words.size(), item.regions.size());
    }

    for (const MatchedPair& p : item.assignment.pairs) {
      const double s = item.similarity(p.word, p.region) * inv_t;
      out.value += neg_log_sigmoid(s);
      out.grad_scores[b](p.word, p.region) -= (1.0 - sigmoid(s)) * inv_t;
      ++out.positive_terms;

      const std::string& token = item.words.tokens()[static_cast<std::size_t>(p.word)];
      for (std::size_t c = 0; c < n; ++c) {
        if (c == b) continue;
        const auto& other_tokens = items[c].words.tokens();
        for (Eigen::Index j = 0; j < items[c].words.size(); ++j) {
          if (other_tokens[static_cast<std::size_t>(j)] == token) continue;
          const double sn = cross[c](j, p.region) * inv_t;
          out.value += neg_log_sigmoid(-sn);
          out.grad_cross_scores[b][c](j, p.region) += sigmoid(sn) * inv_t;
          ++out.negative_terms;
        }
      }
    }
  }
  apply_reduction(out, options.reduction, out.positive_terms);
  return out;
}

LossOutput image_text_loss(const Matrix& image_features, const Matrix& caption_features,
                           const LossOptions& options) {
  if (!(options.temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (image_features.rows() != caption_features.rows()) {
    std::ostringstream msg;
    msg << "image batch has " << image_features.rows() << " entries but caption batch has "
        << caption_features.rows();
    throw std::invalid_argument(msg.str());
  }
  if (image_features.rows() < 1) throw std::invalid_argument("image-text batch must not be empty");
  const double inv_t = 1.0 / options.temperature;
  // scores(b, c) = image b . caption c
  const Matrix scores = dot_scores(image_features, caption_features);
  if (!scores.allFinite()) throw std::invalid_argument("non-finite image-text score");

  const Eigen::Index batch = scores.rows();
  LossOutput out;
  Matrix grad = Matrix::Zero(batch, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index c = 0; c < batch; ++c) {
      const double s = scores(b, c) * inv_t;
      if (b == c) {
        out.value += neg_log_sigmoid(s);
        grad(b, c) = -(1.0 - sigmoid(s)) * inv_t;
        ++out.positive_terms;
      } else {
        out.value += neg_log_sigmoid(-s);
        grad(b, c) = sigmoid(s) * inv_t;
        ++out.negative_terms;
      }
    }
  }
  out.grad_region_features.push_back(grad * caption_features);
  out.grad_word_embeddings.push_back(grad.transpose() * image_features);
  out.grad_scores.push_back(std::move(grad));
  apply_reduction(out, options.reduction, static_cast<int>(batch));
  return out;
}

LossOutput backprop_to_embeddings(const LossOutput& loss, const LossBatch& batch) {
  const auto& items = batch.items();
  const std::size_t n = items.size();
  if (loss.grad_scores.size() != n) {
    throw std::invalid_argument("loss output does not belong to this batch");
  }

  std::vector<Matrix> words(n), regions(n);
  for (std::size_t b = 0; b < n; ++b) {
    words[b] = batch.normalize() ? normalize_rows(items[b].words.embeddings())
                                 : items[b].words.embeddings();
    regions[b] = batch.normalize() ? normalize_rows(items[b].regions.features())
                                   : items[b].regions.features();
  }

  LossOutput out = loss;
  out.grad_word_embeddings.assign(n, Matrix());
  out.grad_region_features.assign(n, Matrix());
  for (std::size_t b = 0; b < n; ++b) {
    out.grad_word_embeddings[b] = Matrix::Zero(words[b].rows(), words[b].cols());
    out.grad_region_features[b] = Matrix::Zero(regions[b].rows(), regions[b].cols());
  }
  for (std::size_t b = 0; b < n; ++b) {
    const Matrix& g = loss.grad_scores[b];
    out.grad_word_embeddings[b] += g * regions[b];
    out.grad_region_features[b] += g.transpose() * words[b];
    if (loss.grad_cross_scores.size() != n) continue;
    for (std::size_t c = 0; c < n; ++c) {
      const Matrix& gc = loss.grad_cross_scores[b][c];
      if (c == b || gc.size() == 0) continue;
      out.grad_word_embeddings[c] += gc * regions[b];
      out.grad_region_features[b] += gc.transpose() * words[c];
    }
  }
  if (batch.normalize()) {
    for (std::size_t b = 0; b < n; ++b) {
      out.grad_word_embeddings[b] =
          through_normalization(items[b].words.embeddings(), out.grad_word_embeddings[b]);
      out.grad_region_features[b] =
          through_normalization(items[b].regions.features(), out.grad_region_features[b]);
    }
  }
  return out;
}

}  // namespace setalign
