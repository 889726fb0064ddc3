#include "setalign/vocabulary.hpp"

#include <algorithm>
#include <stdexcept>

namespace setalign {

namespace {

bool is_word_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
         c >= 0x80;
}

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string normalize_entry(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (char c : raw) {
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(lower(c));
  }
  return out;
}

bool accepted(const std::string& entry, const NounLexicon& lexicon, const StopwordSet& stopwords) {
  return lexicon.contains(entry) && stopwords.count(entry) == 0;
}

}  // namespace

NounLexicon::NounLexicon(const std::vector<std::string>& entries) {
  for (const std::string& e : entries) {
    std::string norm = normalize_entry(e);
    if (!norm.empty()) entries_.insert(std::move(norm));
  }
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (is_word_char(static_cast<unsigned char>(c))) {
      current.push_back(lower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::string> extract_nouns(const Caption& caption, const NounLexicon& lexicon,
                                       const StopwordSet& stopwords) {
  if (lexicon.empty()) throw std::invalid_argument("noun lexicon is empty");
  const std::vector<std::string> tokens = tokenize(caption.text);
  std::vector<std::string> nouns;
  std::set<std::string> seen;
  auto emit = [&](const std::string& noun) {
    if (seen.insert(noun).second) nouns.push_back(noun);
  };
  for (std::size_t p = 0; p < tokens.size();) {
    if (p + 1 < tokens.size()) {
      const std::string bigram = tokens[p] + ' ' + tokens[p + 1];
      if (accepted(bigram, lexicon, stopwords)) {
        emit(bigram);
        p += 2;
        continue;
      }
    }
    if (accepted(tokens[p], lexicon, stopwords)) emit(tokens[p]);
    ++p;
  }
  return nouns;
}

nlohmann::ordered_json Vocabulary::to_json() const {
  nlohmann::ordered_json j;
  j["min_freq"] = min_freq;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& [token, freq] : concepts) list.push_back({token, freq});
  j["concepts"] = std::move(list);
  j["skipped_records"] = skipped_records;
  return j;
}

VocabularyBuilder::VocabularyBuilder(const NounLexicon& lexicon, const StopwordSet& stopwords)
    : lexicon_(lexicon), stopwords_(stopwords) {
  if (lexicon_.empty()) throw std::invalid_argument("noun lexicon is empty");
}

void VocabularyBuilder::add(const Caption& caption) {
  for (const std::string& noun : extract_nouns(caption, lexicon_, stopwords_)) ++counts_[noun];
}

void VocabularyBuilder::merge(const VocabularyBuilder& other) {
  for (const auto& [token, count] : other.counts_) counts_[token] += count;
  skipped_ += other.skipped_;
}

Vocabulary VocabularyBuilder::finish(std::size_t min_freq) const {
  if (min_freq < 1) throw std::invalid_argument("min_freq must be >= 1");
  Vocabulary vocab;
  vocab.min_freq = min_freq;
  vocab.skipped_records = skipped_;
  for (const auto& [token, count] : counts_) {
    if (count >= min_freq) vocab.concepts.emplace_back(token, count);
  }
  // counts_ is token-ordered, so a stable sort on frequency keeps ties ascending.
  std::stable_sort(vocab.concepts.begin(), vocab.concepts.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return vocab;
}

Vocabulary build_vocabulary(const std::vector<Caption>& corpus, const NounLexicon& lexicon,
                            const StopwordSet& stopwords, std::size_t min_freq) {
  VocabularyBuilder builder(lexicon, stopwords);
  for (const Caption& c : corpus) builder.add(c);
  return builder.finish(min_freq);
}

Vocabulary restrict_vocabulary(const Vocabulary& vocab,
                               const std::vector<std::string>& category_names) {
  std::set<std::string> names;
  for (const std::string& raw : category_names) {
    std::string joined;
    for (const std::string& t : tokenize(raw)) {
      if (!joined.empty()) joined.push_back(' ');
      joined += t;
    }
    if (!joined.empty()) names.insert(std::move(joined));
  }
  Vocabulary out;
  out.min_freq = vocab.min_freq;
  out.skipped_records = vocab.skipped_records;
  for (const auto& entry : vocab.concepts) {
    if (names.count(entry.first)) out.concepts.push_back(entry);
  }
  return out;
}

std::vector<std::string> read_word_list(std::istream& in) {
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string entry = normalize_entry(line);
    if (!entry.empty()) words.push_back(std::move(entry));
  }
  return words;
}

std::optional<Caption> parse_corpus_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (!j.is_object()) return std::nullopt;
  Caption caption;
  auto text = j.find("text");
  if (text == j.end()) text = j.find("caption");
  if (text == j.end() || !text->is_string()) return std::nullopt;
  caption.text = text->get<std::string>();
  auto id = j.find("caption_id");
  if (id == j.end()) id = j.find("image_id");
  if (id != j.end()) {
    if (id->is_string()) {
      caption.caption_id = id->get<std::string>();
    } else if (id->is_number_integer()) {
      caption.caption_id = std::to_string(id->get<long long>());
    }
  }
  if (caption.text.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;
  return caption;
}

}  // namespace setalign
