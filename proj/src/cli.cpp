#include "setalign/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "setalign/benchmark.hpp"
#include "setalign/matcher.hpp"
#include "setalign/records.hpp"
#include "setalign/vocabulary.hpp"

namespace setalign::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

/// Bad input or configuration; maps to exit status 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MatchArgs {
  std::string input;
  std::string out;
  std::string strategy = "one-to-one";
  bool normalize = false;
  MatchOptions match;
};

struct VocabArgs {
  std::string corpus;
  std::string lexicon;
  std::string stopwords;
  std::string categories;
  std::string out;
  long long min_freq = 2;
};

struct BenchArgs {
  GeneratorConfig generator;
  EvaluationOptions evaluation;
  std::string strategies = "one-to-one,one-to-many,max-score,max-size";
  std::string out = ".";
};

struct TrainArgs {
  GeneratorConfig generator;
  TrainConfig train;
  std::string strategy = "one-to-one";
  double rotation_deg = 75.0;
  std::uint64_t rotation_seed = 11;
  std::string out = ".";

  TrainArgs() {
    generator.num_scenes = 600;
    generator.num_words = 5;
    generator.num_regions = 25;
  }
};

void add_generator_options(CLI::App* app, GeneratorConfig& g) {
  app->add_option("--num-scenes", g.num_scenes, "Number of synthetic scenes")->capture_default_str();
  app->add_option("--num-words", g.num_words, "Caption nouns per scene")->capture_default_str();
  app->add_option("--num-regions", g.num_regions, "Regions per scene")->capture_default_str();
  app->add_option("--dim", g.dim, "Embedding dimension")->capture_default_str();
  app->add_option("--noise-sigma", g.noise_sigma, "Per-coordinate region noise")->capture_default_str();
  app->add_option("--concept-pool-size", g.concept_pool_size, "Number of concepts")->capture_default_str();
  app->add_option("--duplicate-instance-prob", g.duplicate_instance_prob,
                  "Chance that a caption concept gets a second region")
      ->capture_default_str();
  app->add_option("--seed", g.seed, "Random seed")->capture_default_str();
}

void add_matcher_options(CLI::App* app, MatchOptions& m) {
  app->add_option("--epsilon", m.sinkhorn.epsilon, "Sinkhorn regularization")->capture_default_str();
  app->add_option("--max-iters", m.sinkhorn.max_iters, "Sinkhorn iteration cap")->capture_default_str();
  app->add_option("--tol", m.sinkhorn.tol, "Sinkhorn marginal tolerance")->capture_default_str();
  app->add_option("--tau", m.tau, "Relative plan-mass threshold for one-to-many pairs")
      ->capture_default_str();
}

void validate_matcher(const MatchOptions& m) {
  if (!(m.sinkhorn.epsilon > 0.0)) throw InputError("epsilon: must be > 0");
  if (m.sinkhorn.max_iters < 1) throw InputError("max_iters: must be >= 1");
  if (!(m.sinkhorn.tol >= 0.0)) throw InputError("tol: must be >= 0");
  if (!(m.tau > 0.0 && m.tau <= 1.0)) throw InputError("tau: must lie in (0, 1]");
}

std::vector<Strategy> parse_strategy_list(const std::string& list) {
  std::vector<Strategy> out;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    try {
      out.push_back(parse_strategy(item));
    } catch (const std::invalid_argument& e) {
      throw InputError(std::string("strategies: ") + e.what());
    }
  }
  if (out.empty()) throw InputError("strategies: at least one strategy is required");
  return out;
}

Strategy parse_single_strategy(const std::string& name) {
  try {
    return parse_strategy(name);
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("strategy: ") + e.what());
  }
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open output file " + path.string());
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out = open_output(path);
  out << content;
}

// Expands `--config FILE` into `--key=value` arguments placed right after
// the subcommand name, so anything given on the command line wins.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
  if (args.size() < 2) return args;
  std::string config_path;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;

  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[1]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::ifstream file(config_path);
  if (!file) throw InputError("cannot open config file " + config_path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(file);
  } catch (const CLI::ParseError& e) {
    throw InputError("config " + config_path + ": " + e.what());
  }

  std::vector<std::string> injected;
  for (const CLI::ConfigItem& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == args[1])) {
      throw InputError("config field '" + item.fullname() + "' is not valid for " + args[1]);
    }
    std::string name = item.name;
    std::replace(name.begin(), name.end(), '_', '-');
    if (name == "config" || sub->get_option_no_throw("--" + name) == nullptr) {
      throw InputError("unknown config field '" + item.name + "'");
    }
    if (item.inputs.empty()) {
      injected.push_back("--" + name);
      continue;
    }
    std::string joined;
    for (const std::string& v : item.inputs) joined += (joined.empty() ? "" : ",") + v;
    injected.push_back("--" + name + "=" + joined);
  }
  std::vector<std::string> out(args.begin(), args.begin() + 2);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

ordered_json assignment_json(const Assignment& a) {
  ordered_json j;
  j["strategy"] = std::string(to_string(a.strategy));
  ordered_json pairs = ordered_json::array();
  for (const MatchedPair& p : a.pairs) pairs.push_back({p.word, p.region, p.score});
  j["pairs"] = std::move(pairs);
  j["total_score"] = a.total_score;
  return j;
}

int cmd_match(const MatchArgs& args, std::ostream& out, std::ostream& err) {
  validate_matcher(args.match);
  const Strategy strategy = parse_single_strategy(args.strategy);
  std::ifstream in(args.input);
  if (!in) throw InputError("cannot open input file " + args.input);

  std::ofstream file;
  std::ostream* sink = &out;
  if (!args.out.empty() && args.out != "-") {
    file = open_output(args.out);
    sink = &file;
  }

  JsonlReader reader(in);
  std::size_t records = 0;
  while (auto line = reader.next()) {
    const std::size_t line_no = reader.line_number();
    EmbeddingRecord rec;
    try {
      rec = parse_record_line(*line);
    } catch (const RecordError& e) {
      std::ostringstream msg;
      msg << "line " << line_no << ": " << e.what();
      throw InputError(msg.str());
    }
    if (strategy == Strategy::MaxSize && !rec.boxes) {
      std::ostringstream msg;
      msg << "line " << line_no << ": max-size matching requires field 'boxes'";
      throw InputError(msg.str());
    }
    const WordSet words = rec.word_set();
    const RegionSet regions = rec.region_set();
    const SimilarityMatrix sim = compute_similarity(words, regions, args.normalize);

    ordered_json j;
    j["image_id"] = rec.image_id;
    Assignment a;
    if (strategy == Strategy::OneToMany) {
      const TransportPlan plan =
          sinkhorn_plan(CostMatrix::from_similarity(sim), args.match.sinkhorn);
      a = plan_to_pairs(plan, sim, args.match.tau);
      j.update(assignment_json(a));
      j["sinkhorn"] = {{"iterations", plan.iterations_run}, {"converged", plan.converged}};
    } else {
      a = match(strategy, words, regions, sim, args.match);
      j.update(assignment_json(a));
    }
    if (rec.gt_assignment) {
      ordered_json correct = ordered_json::array();
      for (const MatchedPair& p : a.pairs) {
        correct.push_back((*rec.gt_assignment)[static_cast<std::size_t>(p.word)] == p.region);
      }
      j["correct"] = std::move(correct);
      const StrategyRecovery r =
          recovery_from_counts(strategy, count_recovered(a, *rec.gt_assignment), a.total_score);
      j["recovery"] = {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
    }
    *sink << j.dump() << '\n';
    ++records;
  }
  err << "match: " << records << " records, strategy " << to_string(strategy) << '\n';
  return kOk;
}

int cmd_vocab(const VocabArgs& args, std::ostream& out, std::ostream& err) {
  if (args.min_freq < 1) throw InputError("min_freq: must be >= 1");
  std::ifstream lex_in(args.lexicon);
  if (!lex_in) throw InputError("cannot open lexicon file " + args.lexicon);
  const NounLexicon lexicon(read_word_list(lex_in));
  if (lexicon.empty()) throw InputError("lexicon: " + args.lexicon + " has no entries");

  StopwordSet stopwords;
  if (!args.stopwords.empty()) {
    std::ifstream stop_in(args.stopwords);
    if (!stop_in) throw InputError("cannot open stopword file " + args.stopwords);
    for (std::string& w : read_word_list(stop_in)) stopwords.insert(std::move(w));
  }

  std::ifstream corpus(args.corpus);
  if (!corpus) throw InputError("cannot open corpus file " + args.corpus);
  VocabularyBuilder builder(lexicon, stopwords);
  JsonlReader reader(corpus);
  std::size_t captions = 0;
  while (auto line = reader.next()) {
    if (auto caption = parse_corpus_line(*line)) {
      builder.add(*caption);
      ++captions;
    } else {
      builder.skip_record();
    }
  }
  Vocabulary vocab = builder.finish(static_cast<std::size_t>(args.min_freq));
  if (!args.categories.empty()) {
    std::ifstream cat_in(args.categories);
    if (!cat_in) throw InputError("cannot open category file " + args.categories);
    vocab = restrict_vocabulary(vocab, read_word_list(cat_in));
  }

  const std::string text = vocab.to_json().dump(2) + "\n";
  if (args.out.empty() || args.out == "-") {
    out << text;
  } else {
    write_file(args.out, text);
  }
  err << "vocab: " << captions << " captions, " << vocab.skipped_records << " skipped, "
      << vocab.size() << " concepts\n";
  return kOk;
}

void print_ranking(const RecoveryReport& report, std::ostream& out) {
  std::vector<std::size_t> order(report.strategies.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return report.strategies[a].f1 > report.strategies[b].f1;
  });
  out << std::left << std::setw(6) << "rank" << std::setw(14) << "strategy" << std::setw(10)
      << "f1" << std::setw(11) << "precision" << std::setw(10) << "recall" << "mean_sim\n";
  int rank = 1;
  for (std::size_t idx : order) {
    const StrategyRecovery& r = report.strategies[idx];
    out << std::left << std::setw(6) << rank++ << std::setw(14) << to_string(r.strategy)
        << std::fixed << std::setprecision(4) << std::setw(10) << r.f1 << std::setw(11)
        << r.precision << std::setw(10) << r.recall << r.mean_similarity << '\n';
    out.unsetf(std::ios::fixed);
  }
}

ordered_json matcher_json(const MatchOptions& m, bool normalize) {
  ordered_json j;
  j["epsilon"] = m.sinkhorn.epsilon;
  j["max_iters"] = m.sinkhorn.max_iters;
  j["tol"] = m.sinkhorn.tol;
  j["tau"] = m.tau;
  j["normalize"] = normalize;
  return j;
}

void validate_generator(const GeneratorConfig& g) {
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
}

int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err) {
  validate_generator(args.generator);
  validate_matcher(args.evaluation.match);
  const std::vector<Strategy> strategies = parse_strategy_list(args.strategies);

  const std::vector<PlantedScene> scenes = generate_scenes(args.generator);
  const RecoveryReport report = evaluate_strategies(scenes, strategies, args.evaluation);

  ordered_json j;
  j["config"] = args.generator.to_json();
  j["matcher"] = matcher_json(args.evaluation.match, args.evaluation.normalize);
  j.update(report.to_json());
  const fs::path dir(args.out);
  write_file(dir / "report.json", j.dump(2) + "\n");
  write_file(dir / "report.csv", report.to_csv());
  print_ranking(report, out);
  err << "bench: " << report.scenes << " scenes, report written to " << dir.string() << '\n';
  return kOk;
}

int cmd_train_toy(const TrainArgs& args, std::ostream& out, std::ostream& err, bool verbose) {
  validate_generator(args.generator);
  validate_matcher(args.train.match);
  TrainConfig train = args.train;
  train.strategy = parse_single_strategy(args.strategy);
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  if (!std::isfinite(args.rotation_deg)) throw InputError("rotation_deg: must be finite");

  std::vector<PlantedScene> scenes = generate_scenes(args.generator);
  if (args.rotation_deg != 0.0) {
    const double radians = args.rotation_deg * std::acos(-1.0) / 180.0;
    scenes = rotate_regions(scenes, corrupting_rotation(args.generator.dim, radians,
                                                        args.rotation_seed));
  }

  const TrainingTrace trace = train_toy(scenes, train);
  if (verbose) {
    for (const TrainEpoch& e : trace.epochs) {
      err << "epoch " << e.epoch << " loss " << format_number(e.loss) << " f1 "
          << format_number(e.f1) << '\n';
    }
  }

  ordered_json j;
  j["config"] = args.generator.to_json();
  j["training"] = {{"epochs", train.epochs},
                   {"step_size", train.step_size},
                   {"temperature", train.loss.temperature},
                   {"batch_size", train.batch_size},
                   {"rotation_deg", args.rotation_deg},
                   {"rotation_seed", args.rotation_seed}};
  j["matcher"] = matcher_json(train.match, false);
  j.update(trace.to_json());
  const fs::path dir(args.out);
  write_file(dir / "trace.json", j.dump(2) + "\n");
  write_file(dir / "trace.csv", trace.to_csv());

  const TrainEpoch& first = trace.epochs.front();
  const TrainEpoch& last = trace.epochs.back();
  out << "strategy " << to_string(train.strategy) << ": epoch " << first.epoch << " loss "
      << format_number(first.loss) << " f1 " << format_number(first.f1) << " -> epoch "
      << last.epoch << " loss " << format_number(last.loss) << " f1 " << format_number(last.f1)
      << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app("Region-word set alignment by bipartite matching", "setalign");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  bool verbose = false;

  MatchArgs match_args;
  CLI::App* match_cmd = app.add_subcommand("match", "Match words to regions for every JSONL record");
  match_cmd->add_option("--input,-i", match_args.input, "Embedding JSONL file")->required();
  match_cmd->add_option("--out,-o", match_args.out, "Output JSONL (default stdout)");
  match_cmd->add_option("--strategy", match_args.strategy,
                        "one-to-one | one-to-many | max-score | max-size")
      ->capture_default_str();
  match_cmd->add_flag("--normalize", match_args.normalize, "L2-normalize embeddings first");
  add_matcher_options(match_cmd, match_args.match);

  VocabArgs vocab_args;
  CLI::App* vocab_cmd = app.add_subcommand("vocab", "Build a caption-noun vocabulary");
  vocab_cmd->add_option("--corpus", vocab_args.corpus, "Caption JSONL file")->required();
  vocab_cmd->add_option("--lexicon", vocab_args.lexicon, "Noun lexicon, one entry per line")
      ->required();
  vocab_cmd->add_option("--stopwords", vocab_args.stopwords, "Stopword list");
  vocab_cmd->add_option("--categories", vocab_args.categories,
                        "Restrict to these category names");
  vocab_cmd->add_option("--min-freq", vocab_args.min_freq, "Minimum caption frequency")
      ->capture_default_str();
  vocab_cmd->add_option("--out,-o", vocab_args.out, "Output JSON (default stdout)");

  BenchArgs bench_args;
  std::string bench_config;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Planted-alignment recovery benchmark");
  bench_cmd->add_option("--config", bench_config, "key = value config file");
  bench_cmd->add_option("--out,-o", bench_args.out, "Output directory")->capture_default_str();
  bench_cmd->add_option("--strategies", bench_args.strategies, "Comma-separated strategies")
      ->capture_default_str();
  bench_cmd->add_flag("--normalize", bench_args.evaluation.normalize,
                      "L2-normalize embeddings first");
  bench_cmd->add_option("--threads", bench_args.evaluation.threads, "Worker threads (0 = all)");
  add_generator_options(bench_cmd, bench_args.generator);
  add_matcher_options(bench_cmd, bench_args.evaluation.match);

  TrainArgs train_args;
  std::string train_config;
  CLI::App* train_cmd = app.add_subcommand("train-toy", "Train a region projection on planted scenes");
  train_cmd->add_option("--config", train_config, "key = value config file");
  train_cmd->add_option("--out,-o", train_args.out, "Output directory")->capture_default_str();
  train_cmd->add_option("--strategy", train_args.strategy, "Matching strategy used in training")
      ->capture_default_str();
  train_cmd->add_option("--epochs", train_args.train.epochs)->capture_default_str();
  train_cmd->add_option("--step-size", train_args.train.step_size)->capture_default_str();
  train_cmd->add_option("--temperature", train_args.train.loss.temperature)->capture_default_str();
  train_cmd->add_option("--batch-size", train_args.train.batch_size)->capture_default_str();
  train_cmd->add_option("--divergence-ratio", train_args.train.divergence_ratio)
      ->capture_default_str();
  train_cmd->add_option("--rotation-deg", train_args.rotation_deg,
                        "Corrupting rotation applied to region features")
      ->capture_default_str();
  train_cmd->add_option("--rotation-seed", train_args.rotation_seed)->capture_default_str();
  add_generator_options(train_cmd, train_args.generator);
  add_matcher_options(train_cmd, train_args.train.match);

  for (CLI::App* sub : {match_cmd, vocab_cmd, bench_cmd, train_cmd}) {
    sub->add_flag("--verbose,-v", verbose, "Print progress to stderr");
  }

  try {
    std::vector<std::string> args = expand_config(raw_args, app);
    // CLI11 consumes arguments from the back.
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);

    if (*match_cmd) return cmd_match(match_args, out, err);
    if (*vocab_cmd) return cmd_vocab(vocab_args, out, err);
    if (*bench_cmd) return cmd_bench(bench_args, out, err);
    if (*train_cmd) return cmd_train_toy(train_args, out, err, verbose);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumericalError;
  }
  return kInputError;
}

}  // namespace setalign::cli
