#include "setalign/records.hpp"

#include <sstream>

namespace setalign {

namespace {

using nlohmann::json;

const json& require(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) {
    throw RecordError(field, std::string("missing required field '") + field + "'");
  }
  return *it;
}

Vector to_vector(const json& j, const char* field) {
  if (!j.is_array()) throw RecordError(field, std::string("field '") + field + "' must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw RecordError(field, std::string("field '") + field + "' must hold numbers");
    }
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Matrix to_matrix(const json& j, const char* field) {
  if (!j.is_array() || j.empty()) {
    throw RecordError(field, std::string("field '") + field + "' must be a non-empty array of rows");
  }
  const std::size_t rows = j.size();
  if (!j[0].is_array()) {
    throw RecordError(field, std::string("field '") + field + "' must be an array of rows");
  }
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const Vector row = to_vector(j[r], field);
    if (static_cast<std::size_t>(row.size()) != cols) {
      std::ostringstream msg;
      msg << "field '" << field << "' row " << r << " has " << row.size() << " entries, expected "
          << cols;
      throw RecordError(field, msg.str());
    }
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

RegionSet EmbeddingRecord::region_set() const { return RegionSet(regions, boxes, image_id); }

WordSet EmbeddingRecord::word_set() const {
  return WordSet(word_embeddings, word_tokens, image_id);
}

EmbeddingRecord parse_record(const json& j) {
  if (!j.is_object()) throw RecordError("", "record must be a JSON object");
  EmbeddingRecord rec;

  const json& id = require(j, "image_id");
  if (!id.is_string()) throw RecordError("image_id", "field 'image_id' must be a string");
  rec.image_id = id.get<std::string>();

  rec.regions = to_matrix(require(j, "regions"), "regions");

  if (auto it = j.find("boxes"); it != j.end() && !it->is_null()) {
    const Matrix raw = to_matrix(*it, "boxes");
    if (raw.cols() != 4) throw RecordError("boxes", "field 'boxes' rows must have 4 entries");
    std::vector<Box> boxes;
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
      boxes.push_back({raw(r, 0), raw(r, 1), raw(r, 2), raw(r, 3)});
    }
    rec.boxes = std::move(boxes);
  }

  if (auto it = j.find("caption"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw RecordError("caption", "field 'caption' must be a string");
    rec.caption = it->get<std::string>();
  }

  const json& tokens = require(j, "word_tokens");
  if (!tokens.is_array()) throw RecordError("word_tokens", "field 'word_tokens' must be an array");
  for (const auto& t : tokens) {
    if (!t.is_string()) throw RecordError("word_tokens", "field 'word_tokens' must hold strings");
    rec.word_tokens.push_back(t.get<std::string>());
  }

  rec.word_embeddings = to_matrix(require(j, "word_embeddings"), "word_embeddings");

  if (auto it = j.find("caption_embedding"); it != j.end() && !it->is_null()) {
    rec.caption_embedding = to_vector(*it, "caption_embedding");
  }
  if (auto it = j.find("image_feature"); it != j.end() && !it->is_null()) {
    rec.image_feature = to_vector(*it, "image_feature");
  }
  if (auto it = j.find("gt_assignment"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw RecordError("gt_assignment", "field 'gt_assignment' must be an array");
    std::vector<int> gt;
    for (const auto& v : *it) {
      if (!v.is_number_integer()) {
        throw RecordError("gt_assignment", "field 'gt_assignment' must hold integers");
      }
      gt.push_back(v.get<int>());
    }
    rec.gt_assignment = std::move(gt);
  }

  // Cross-field consistency.
  if (rec.word_tokens.size() != static_cast<std::size_t>(rec.word_embeddings.rows())) {
    throw RecordError("word_tokens", "field 'word_tokens' length differs from 'word_embeddings'");
  }
  if (rec.word_embeddings.cols() != rec.regions.cols()) {
    std::ostringstream msg;
    msg << "field 'word_embeddings' has d=" << rec.word_embeddings.cols()
        << " but 'regions' has d=" << rec.regions.cols();
    throw RecordError("word_embeddings", msg.str());
  }
  if (rec.boxes && static_cast<Eigen::Index>(rec.boxes->size()) != rec.regions.rows()) {
    throw RecordError("boxes", "field 'boxes' length differs from 'regions'");
  }
  if (rec.gt_assignment) {
    if (rec.gt_assignment->size() != rec.word_tokens.size()) {
      throw RecordError("gt_assignment", "field 'gt_assignment' length differs from 'word_tokens'");
    }
    for (int k : *rec.gt_assignment) {
      if (k < -1 || k >= rec.regions.rows()) {
        throw RecordError("gt_assignment", "field 'gt_assignment' holds an out-of-range region");
      }
    }
  }
  try {
    (void)rec.region_set();
    (void)rec.word_set();
  } catch (const std::invalid_argument& e) {
    throw RecordError("", e.what());
  }
  return rec;
}

EmbeddingRecord parse_record_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw RecordError("", std::string("invalid JSON: ") + e.what());
  }
  return parse_record(j);
}

json to_json(const EmbeddingRecord& record) {
  json j;
  j["image_id"] = record.image_id;
  j["regions"] = matrix_to_json(record.regions);
  if (record.boxes) {
    json boxes = json::array();
    for (const Box& b : *record.boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
    j["boxes"] = std::move(boxes);
  }
  j["caption"] = record.caption;
  j["word_tokens"] = record.word_tokens;
  j["word_embeddings"] = matrix_to_json(record.word_embeddings);
  if (record.caption_embedding) j["caption_embedding"] = vector_to_json(*record.caption_embedding);
  if (record.image_feature) j["image_feature"] = vector_to_json(*record.image_feature);
  if (record.gt_assignment) j["gt_assignment"] = *record.gt_assignment;
  return j;
}

std::optional<std::string> JsonlReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_number_;
    if (line.find_first_not_of(" \t\r") != std::string::npos) return line;
  }
  return std::nullopt;
}

}  // namespace setalign
