#include "setalign/similarity.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace setalign {

namespace {

void require_finite(const Matrix& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        std::ostringstream msg;
        msg << what << " entry (" << r << ", " << c << ") is not finite";
        throw std::invalid_argument(msg.str());
      }
    }
  }
}

}  // namespace

RegionSet::RegionSet(Matrix features, std::optional<std::vector<Box>> boxes, std::string image_id)
    : features_(std::move(features)), boxes_(std::move(boxes)), image_id_(std::move(image_id)) {
  if (features_.rows() < 1) throw std::invalid_argument("region set needs at least one region");
  if (features_.cols() < 1) throw std::invalid_argument("region features need dimension >= 1");
  require_finite(features_, "region feature");
  if (boxes_) {
    if (static_cast<Eigen::Index>(boxes_->size()) != features_.rows()) {
      std::ostringstream msg;
      msg << "region set has " << features_.rows() << " features but " << boxes_->size()
          << " boxes";
      throw std::invalid_argument(msg.str());
    }
    for (std::size_t i = 0; i < boxes_->size(); ++i) {
      const Box& b = (*boxes_)[i];
      if (!(b.x2 > b.x1) || !(b.y2 > b.y1)) {
        std::ostringstream msg;
        msg << "box " << i << " is degenerate (needs x2 > x1 and y2 > y1)";
        throw std::invalid_argument(msg.str());
      }
    }
  }
}

WordSet::WordSet(Matrix embeddings, std::vector<std::string> tokens, std::string caption_id)
    : embeddings_(std::move(embeddings)),
      tokens_(std::move(tokens)),
      caption_id_(std::move(caption_id)) {
  if (embeddings_.rows() < 1) throw std::invalid_argument("word set needs at least one word");
  if (embeddings_.cols() < 1) throw std::invalid_argument("word embeddings need dimension >= 1");
  if (static_cast<Eigen::Index>(tokens_.size()) != embeddings_.rows()) {
    std::ostringstream msg;
    msg << "word set has " << embeddings_.rows() << " embeddings but " << tokens_.size()
        << " tokens";
    throw std::invalid_argument(msg.str());
  }
  require_finite(embeddings_, "word embedding");
}

SimilarityMatrix::SimilarityMatrix(Matrix scores) : scores_(std::move(scores)) {
  require_finite(scores_, "similarity");
}

Matrix normalize_rows(const Matrix& rows) {
  Matrix out = rows;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double norm = out.row(r).norm();
    if (norm > 0.0) {
      out.row(r) /= norm;
    } else {
      out.row(r).setZero();
    }
  }
  return out;
}

Matrix dot_scores(const Matrix& words, const Matrix& regions, bool normalize) {
  if (words.cols() != regions.cols()) {
    std::ostringstream msg;
    msg << "embedding dimension mismatch: words have d=" << words.cols()
        << ", regions have d=" << regions.cols();
    throw std::invalid_argument(msg.str());
  }
  if (normalize) {
    // Rounding can push a cosine of collinear rows one ulp past 1.
    Matrix s = normalize_rows(words) * normalize_rows(regions).transpose();
    return s.cwiseMax(-1.0).cwiseMin(1.0);
  }
  return words * regions.transpose();
}

SimilarityMatrix compute_similarity(const WordSet& words, const RegionSet& regions,
                                    bool normalize) {
  return SimilarityMatrix(dot_scores(words.embeddings(), regions.features(), normalize));
}

double image_text_score(std::span<const double> image_feature,
                        std::span<const double> caption_feature) {
  using RowMap = Eigen::Map<const Eigen::Matrix<double, 1, Eigen::Dynamic>>;
  const RowMap image(image_feature.data(), static_cast<Eigen::Index>(image_feature.size()));
  const RowMap caption(caption_feature.data(), static_cast<Eigen::Index>(caption_feature.size()));
  if (image.cols() != caption.cols()) {
    std::ostringstream msg;
    msg << "image feature has d=" << image.cols() << " but caption feature has d="
        << caption.cols();
    throw std::invalid_argument(msg.str());
  }
  return dot_scores(caption, image)(0, 0);
}

}  // namespace setalign
