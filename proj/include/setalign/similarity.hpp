#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace setalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Axis-aligned box in pixel coordinates. Requires x2 > x1 and y2 > y1.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double area() const { return (x2 - x1) * (y2 - y1); }
};

/// Candidate regions of one image: an m x d feature matrix (one region per
/// row) plus optional box geometry.
class RegionSet {
 public:
  RegionSet(Matrix features, std::optional<std::vector<Box>> boxes = std::nullopt,
            std::string image_id = {});

  const Matrix& features() const { return features_; }
  const std::optional<std::vector<Box>>& boxes() const { return boxes_; }
  const std::string& image_id() const { return image_id_; }

  Eigen::Index size() const { return features_.rows(); }
  Eigen::Index dim() const { return features_.cols(); }

 private:
  Matrix features_;
  std::optional<std::vector<Box>> boxes_;
  std::string image_id_;
};

/// Caption nouns of one caption: a |W| x d embedding matrix and the surface
/// token each row was embedded from.
class WordSet {
 public:
  WordSet(Matrix embeddings, std::vector<std::string> tokens, std::string caption_id = {});

  const Matrix& embeddings() const { return embeddings_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& caption_id() const { return caption_id_; }

  Eigen::Index size() const { return embeddings_.rows(); }
  Eigen::Index dim() const { return embeddings_.cols(); }

 private:
  Matrix embeddings_;
  std::vector<std::string> tokens_;
  std::string caption_id_;
};

/// |W| x m alignment scores; row i is word i, column k is region k.
class SimilarityMatrix {
 public:
  explicit SimilarityMatrix(Matrix scores);

  const Matrix& scores() const { return scores_; }
  double operator()(Eigen::Index word, Eigen::Index region) const { return scores_(word, region); }
  Eigen::Index words() const { return scores_.rows(); }
  Eigen::Index regions() const { return scores_.cols(); }

 private:
  Matrix scores_;
};

/// Row-wise L2 normalization. Zero rows stay zero.
Matrix normalize_rows(const Matrix& rows);

/// Dot-product scores between every row of `words` and every row of
/// `regions` (words * regions^T). Throws std::invalid_argument when the
/// column counts differ.
Matrix dot_scores(const Matrix& words, const Matrix& regions, bool normalize = false);

SimilarityMatrix compute_similarity(const WordSet& words, const RegionSet& regions,
                                    bool normalize = false);

/// Score of the whole image against the whole caption, treated as one
/// extra region-word pair.
double image_text_score(std::span<const double> image_feature,
                        std::span<const double> caption_feature);

}  // namespace setalign
