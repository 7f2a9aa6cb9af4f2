#pragma once

// Built-in toy scenarios: guess-number (multi-turn, pooled game service), keyword-RAG
// (two role-tagged calls around a search tool), and calculator (tool expression, then an
// answer). Every scenario's text stays inside its vocabulary, so tokenization is lossless.

#include <cstdint>
#include <string>
#include <vector>

#include "lightline/client/agent.hpp"
#include "lightline/extract/extract.hpp"
#include "lightline/policy/vocab.hpp"

namespace lightline::agents {

struct ScenarioOptions {
  std::uint64_t seed = 0;
  int group_size = 4;
  // guess_number
  int range_max = 8;
  int num_tasks = 64;
  // keyword_rag
  int num_docs = 20;

  void validate() const;
};

struct Scenario {
  std::string name;
  std::vector<TaskSpec> dataset;
  policy::Vocab vocab;
  client::ScenarioRuntime runtime;
  // Reward range and the best achievable reward, known by construction.
  double reward_min = 0.0;
  double reward_max = 1.0;
  double optimal_reward = 1.0;
};

const std::vector<std::string>& scenario_names();

// Throws ConfigError for an unknown name or invalid options.
Scenario make_scenario(const std::string& name, const ScenarioOptions& opts);

Scenario scenario_guess_number(const ScenarioOptions& opts);
Scenario scenario_keyword_rag(const ScenarioOptions& opts);
Scenario scenario_calculator(const ScenarioOptions& opts);

// Keyword-RAG plus an extraction config that keeps only query_writer transitions.
struct SelectiveFixture {
  Scenario scenario;
  extract::ExtractionConfig extraction;
};
SelectiveFixture selective_optimization_fixture(const ScenarioOptions& opts);

// ---- pieces exposed for tests ----

namespace guess {
// First decimal digit in `text` if it names a guess in [1, range_max].
std::optional<int> parse_guess(std::string_view text, int range_max);
// "higher" when the target is above the guess, "lower" below, "correct" on a hit.
std::string feedback(int guess, int target);
double reward(int final_guess, int target, int range_max);
int max_turns(int range_max);
}  // namespace guess

namespace rag {
struct Document {
  std::string subject;
  std::string color;
  std::string animal;

  std::string text() const;
  std::string question() const;
  std::string gold() const;
};
std::vector<Document> build_corpus(std::uint64_t corpus_seed, int num_docs);
// Top-1 document by word overlap, ties to the lowest index; nullopt when nothing overlaps.
std::optional<std::size_t> search(const std::vector<Document>& corpus, std::string_view query);
// Whitespace-separated words.
std::vector<std::string> words(std::string_view text);
// Multiset word overlap F1; 1 when both sides are empty, 0 when exactly one is.
double word_f1(std::string_view prediction, std::string_view gold);
// Text between the first `open` and the following `close`, when both are present.
std::optional<std::string> between_tags(std::string_view text, std::string_view open,
                                        std::string_view close);
// Tagged contents, or the text with any tags removed when the pair is incomplete.
std::string best_effort(std::string_view text, std::string_view open, std::string_view close);
double reward(double f1, bool format_ok);
}  // namespace rag

namespace calc {
// Evaluates "<int><op><int>" with op in + - * / (truncating division). Error outcome on
// malformed input or division by zero.
client::ToolOutcome evaluate(std::string_view expression);
}  // namespace calc

// tasks-{scenario}-{seed}.jsonl
std::string dataset_filename(const std::string& scenario, std::uint64_t seed);

}  // namespace lightline::agents
