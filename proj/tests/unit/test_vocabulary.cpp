#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "setalign/vocabulary.hpp"

using namespace setalign;

namespace {

const std::string kDir = std::string(SETALIGN_FIXTURES) + "/vocab/";

std::vector<std::string> words(std::initializer_list<const char*> list) {
  return {list.begin(), list.end()};
}

std::vector<std::string> read_list(const std::string& name) {
  std::ifstream in(kDir + name);
  return read_word_list(in);
}

std::string slurp(const std::string& name) {
  std::ifstream in(kDir + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Caption> fixture_corpus() {
  std::ifstream in(kDir + "corpus.jsonl");
  std::vector<Caption> corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (auto c = parse_corpus_line(line)) corpus.push_back(*c);
  }
  return corpus;
}

StopwordSet fixture_stopwords() {
  const auto list = read_list("stopwords.txt");
  return {list.begin(), list.end()};
}

}  // namespace

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("A dog chasing a ball."), words({"a", "dog", "chasing", "a", "ball"}));
  EXPECT_EQ(tokenize("state-of-the-art TV!"), words({"state-of-the-art", "tv"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize(" ,.;!? ").empty());
}

TEST(Tokenize, KeepsUtf8WordsWhole) {
  EXPECT_EQ(tokenize("Caf\xC3\xA9 au lait"), words({"caf\xC3\xA9", "au", "lait"}));
}

TEST(ExtractNouns, Examples) {
  const StopwordSet none;
  EXPECT_EQ(extract_nouns({"c", "young boy washing the dirty bowl"},
                          NounLexicon(words({"boy", "bowl", "kitchen"})), none),
            words({"boy", "bowl"}));
  EXPECT_EQ(extract_nouns({"c", "a basket of oranges"},
                          NounLexicon(words({"basket", "orange", "oranges"})), none),
            words({"basket", "oranges"}));
  EXPECT_EQ(extract_nouns({"c", "traffic light ahead"},
                          NounLexicon(words({"traffic light", "light"})), none),
            words({"traffic light"}));
}

TEST(ExtractNouns, DeduplicatesAndHonoursStopwords) {
  const NounLexicon lex(words({"dog", "thing", "ball"}));
  const StopwordSet stop{"thing"};
  EXPECT_EQ(extract_nouns({"c", "Dog, thing, ball and another DOG"}, lex, stop),
            words({"dog", "ball"}));
}

TEST(ExtractNouns, EmptyLexiconIsAnError) {
  EXPECT_THROW(extract_nouns({"c", "dog"}, NounLexicon(), {}), std::invalid_argument);
}

TEST(ExtractNouns, OutputIsAlwaysInLexicon) {
  const NounLexicon lex(read_list("lexicon.txt"));
  const StopwordSet stop = fixture_stopwords();
  for (const Caption& c : fixture_corpus()) {
    for (const std::string& n : extract_nouns(c, lex, stop)) {
      EXPECT_TRUE(lex.contains(n)) << n;
      EXPECT_EQ(stop.count(n), 0u) << n;
    }
  }
}

TEST(NounLexicon, NormalizesEntries) {
  const NounLexicon lex(words({"  Traffic   Light ", "DOG", ""}));
  EXPECT_EQ(lex.size(), 2u);
  EXPECT_TRUE(lex.contains("traffic light"));
  EXPECT_TRUE(lex.contains("dog"));
}

TEST(ReadWordList, DropsCommentsAndBlanks) {
  std::istringstream in("# header\ndog\n\n  Cat  # trailing\n#only\n");
  EXPECT_EQ(read_word_list(in), words({"dog", "cat"}));
}

TEST(ParseCorpusLine, AcceptsBothLayouts) {
  auto a = parse_corpus_line(R"({"caption_id": "c1", "text": "a dog"})");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->caption_id, "c1");
  auto b = parse_corpus_line(R"({"image_id": 7, "caption": "a cat", "regions": [[1]]})");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->caption_id, "7");
  EXPECT_EQ(b->text, "a cat");
  EXPECT_FALSE(parse_corpus_line("{broken"));
  EXPECT_FALSE(parse_corpus_line(R"({"text": "  "})"));
  EXPECT_FALSE(parse_corpus_line(R"({"text": 3})"));
}

TEST(BuildVocabulary, Examples) {
  const NounLexicon lex(words({"dog", "cat", "jar"}));
  const std::vector<Caption> corpus{{"1", "a dog"}, {"2", "dog and cat"}, {"3", "dog, dog, dog"}};
  const Vocabulary v = build_vocabulary(corpus, lex, {}, 2);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v.concepts[0], (std::pair<std::string, std::size_t>{"dog", 3}));
  EXPECT_THROW(build_vocabulary(corpus, lex, {}, 0), std::invalid_argument);
}

TEST(BuildVocabulary, OrdersByFrequencyThenToken) {
  const NounLexicon lex(words({"b", "a", "c"}));
  const std::vector<Caption> corpus{{"1", "c b"}, {"2", "a b"}, {"3", "c"}};
  const Vocabulary v = build_vocabulary(corpus, lex, {}, 1);
  EXPECT_EQ(v.concepts, (std::vector<std::pair<std::string, std::size_t>>{{"b", 2}, {"c", 2}, {"a", 1}}));
}

TEST(BuildVocabulary, MatchesFixtureGolden) {
  const NounLexicon lex(read_list("lexicon.txt"));
  const StopwordSet stop = fixture_stopwords();
  const std::vector<Caption> corpus = fixture_corpus();
  ASSERT_EQ(corpus.size(), 100u);
  for (int min_freq : {1, 2, 3}) {
    const Vocabulary v = build_vocabulary(corpus, lex, stop, min_freq);
    EXPECT_EQ(v.to_json().dump(2) + "\n", slurp("golden_min" + std::to_string(min_freq) + ".json"));
  }
}

TEST(BuildVocabularyProperty, ShuffleInvariant) {
  const NounLexicon lex(read_list("lexicon.txt"));
  const StopwordSet stop = fixture_stopwords();
  std::vector<Caption> corpus = fixture_corpus();
  const std::string base = build_vocabulary(corpus, lex, stop, 2).to_json().dump();
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(corpus.begin(), corpus.end(), rng);
    EXPECT_EQ(build_vocabulary(corpus, lex, stop, 2).to_json().dump(), base);
  }
}

TEST(BuildVocabularyProperty, MonotoneInMinFreq) {
  const NounLexicon lex(read_list("lexicon.txt"));
  const StopwordSet stop = fixture_stopwords();
  const std::vector<Caption> corpus = fixture_corpus();
  Vocabulary previous = build_vocabulary(corpus, lex, stop, 1);
  for (std::size_t f = 2; f <= 30; ++f) {
    const Vocabulary v = build_vocabulary(corpus, lex, stop, f);
    EXPECT_LE(v.size(), previous.size());
    for (const auto& c : v.concepts) {
      EXPECT_NE(std::find(previous.concepts.begin(), previous.concepts.end(), c),
                previous.concepts.end());
    }
    previous = v;
  }
}

TEST(BuildVocabularyProperty, Idempotent) {
  const NounLexicon lex(read_list("lexicon.txt"));
  const StopwordSet stop = fixture_stopwords();
  const Vocabulary v = build_vocabulary(fixture_corpus(), lex, stop, 2);
  // Re-feed the concept list, each concept repeated as often as it was seen.
  std::vector<Caption> echo;
  std::vector<std::string> names;
  for (const auto& [token, freq] : v.concepts) {
    names.push_back(token);
    for (std::size_t r = 0; r < freq; ++r) echo.push_back({token, token});
  }
  const Vocabulary again = build_vocabulary(echo, NounLexicon(names), {}, 2);
  EXPECT_EQ(again.concepts, v.concepts);
}

TEST(VocabularyBuilder, ShardedCountsMerge) {
  const NounLexicon lex(read_list("lexicon.txt"));
  const StopwordSet stop = fixture_stopwords();
  const std::vector<Caption> corpus = fixture_corpus();
  VocabularyBuilder left(lex, stop), right(lex, stop);
  for (std::size_t i = 0; i < corpus.size(); ++i) (i % 3 ? left : right).add(corpus[i]);
  right.skip_record();
  left.merge(right);
  const Vocabulary merged = left.finish(2);
  EXPECT_EQ(merged.concepts, build_vocabulary(corpus, lex, stop, 2).concepts);
  EXPECT_EQ(merged.skipped_records, 1u);
}

TEST(RestrictVocabulary, Examples) {
  Vocabulary v;
  v.concepts = {{"dog", 5}, {"jar", 2}};
  EXPECT_EQ(restrict_vocabulary(v, words({"dog"})).concepts,
            (std::vector<std::pair<std::string, std::size_t>>{{"dog", 5}}));
  EXPECT_TRUE(restrict_vocabulary(v, words({"zebra", "kite"})).concepts.empty());
  Vocabulary bigram;
  bigram.concepts = {{"traffic light", 4}};
  EXPECT_EQ(restrict_vocabulary(bigram, words({"Traffic  Light"})).size(), 1u);
}

TEST(RestrictVocabulary, CategoryListBoundsSize) {
  const auto categories = read_list("categories.txt");
  ASSERT_EQ(categories.size(), 65u);
  const NounLexicon lex(read_list("lexicon.txt"));
  const Vocabulary all = build_vocabulary(fixture_corpus(), lex, fixture_stopwords(), 2);
  const Vocabulary restricted = restrict_vocabulary(all, categories);
  EXPECT_LE(restricted.size(), 65u);
  EXPECT_LT(restricted.size(), all.size());
  EXPECT_EQ(restricted.to_json().dump(2) + "\n", slurp("golden_categories.json"));
}
