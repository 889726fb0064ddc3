#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "setalign/similarity.hpp"

namespace setalign {

/// Thrown for a record that cannot be turned into an EmbeddingRecord.
/// `field()` names the offending key (empty for JSON syntax errors).
class RecordError : public std::runtime_error {
 public:
  RecordError(std::string field, const std::string& message)
      : std::runtime_error(message), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// One line of the embedding JSONL format:
///
///   {"image_id": str, "regions": [[f64; d]], "boxes": [[f64; 4]]?,
///    "caption": str, "word_tokens": [str], "word_embeddings": [[f64; d]],
///    "caption_embedding": [f64; d]?, "image_feature": [f64; d]?,
///    "gt_assignment": [int]?}
///
/// gt_assignment maps word index to region index, -1 for none.
struct EmbeddingRecord {
  std::string image_id;
  Matrix regions;
  std::optional<std::vector<Box>> boxes;
  std::string caption;
  std::vector<std::string> word_tokens;
  Matrix word_embeddings;
  std::optional<Vector> caption_embedding;
  std::optional<Vector> image_feature;
  std::optional<std::vector<int>> gt_assignment;

  RegionSet region_set() const;
  WordSet word_set() const;
};

EmbeddingRecord parse_record(const nlohmann::json& j);
EmbeddingRecord parse_record_line(const std::string& line);
nlohmann::json to_json(const EmbeddingRecord& record);

/// Line-at-a-time JSONL reader. Blank lines are skipped; line numbers are
/// 1-based and count blank lines.
class JsonlReader {
 public:
  explicit JsonlReader(std::istream& in) : in_(in) {}

  /// Next non-blank line, or nullopt at end of stream.
  std::optional<std::string> next();
  std::size_t line_number() const { return line_number_; }

 private:
  std::istream& in_;
  std::size_t line_number_ = 0;
};

}  // namespace setalign
