#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace setalign {

struct Caption {
  std::string caption_id;
  std::string text;
};

/// Lowercase noun entries; an entry containing one space is a bigram.
class NounLexicon {
 public:
  NounLexicon() = default;
  /// Entries are trimmed, lowercased and internal whitespace collapsed.
  explicit NounLexicon(const std::vector<std::string>& entries);

  bool contains(std::string_view entry) const { return entries_.count(std::string(entry)) > 0; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::set<std::string>& entries() const { return entries_; }

 private:
  std::set<std::string> entries_;
};

using StopwordSet = std::set<std::string>;

/// Noun concepts ordered by frequency (descending) then token (ascending).
struct Vocabulary {
  std::vector<std::pair<std::string, std::size_t>> concepts;
  std::size_t min_freq = 1;
  std::size_t skipped_records = 0;

  std::size_t size() const { return concepts.size(); }
  nlohmann::ordered_json to_json() const;
};

/// Lowercase and split on every character that is not an ASCII letter,
/// digit or hyphen. Bytes >= 0x80 are kept as word characters so UTF-8
/// words stay whole.
std::vector<std::string> tokenize(std::string_view text);

/// Lexicon hits in first-occurrence order, duplicates removed. At each
/// position a bigram entry wins over a unigram entry.
std::vector<std::string> extract_nouns(const Caption& caption, const NounLexicon& lexicon,
                                       const StopwordSet& stopwords);

/// Streaming counter behind build_vocabulary. Each caption counts a noun at
/// most once. Counters merge associatively, so shards can be counted
/// separately.
class VocabularyBuilder {
 public:
  VocabularyBuilder(const NounLexicon& lexicon, const StopwordSet& stopwords);

  void add(const Caption& caption);
  void skip_record() { ++skipped_; }
  void merge(const VocabularyBuilder& other);

  /// Throws std::invalid_argument if min_freq is 0.
  Vocabulary finish(std::size_t min_freq) const;

 private:
  const NounLexicon& lexicon_;
  const StopwordSet& stopwords_;
  std::map<std::string, std::size_t> counts_;
  std::size_t skipped_ = 0;
};

Vocabulary build_vocabulary(const std::vector<Caption>& corpus, const NounLexicon& lexicon,
                            const StopwordSet& stopwords, std::size_t min_freq);

/// Keeps the concepts whose token matches one of the category names after
/// normalization (tokenize, then join with single spaces).
Vocabulary restrict_vocabulary(const Vocabulary& vocab,
                               const std::vector<std::string>& category_names);

/// One entry per line, `#` starts a comment, blank lines ignored.
std::vector<std::string> read_word_list(std::istream& in);

/// Parses one corpus line: either {"caption_id", "text"} or an embedding
/// record carrying "caption" (id taken from "image_id"). Returns nullopt for
/// unreadable lines and for blank caption text.
std::optional<Caption> parse_corpus_line(const std::string& line);

}  // namespace setalign
