#include "lightline/agents/scenarios.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <map>
#include <mutex>

#include <fmt/format.h>

#include "lightline/core/errors.hpp"
#include "lightline/core/rng.hpp"

namespace lightline::agents {

using client::AgentContext;
using client::LlmOptions;
using client::ToolOutcome;

void ScenarioOptions::validate() const {
  if (group_size < 1) throw ConfigError("group_size must be >= 1");
  if (range_max < 2 || range_max > 9) {
    throw ConfigError(fmt::format("range_max must lie in [2, 9], got {}", range_max));
  }
  if (num_tasks < 1) throw ConfigError("num_tasks must be >= 1");
  if (num_docs < 10 || num_docs > 32) {
    throw ConfigError(fmt::format("num_docs must lie in [10, 32], got {}", num_docs));
  }
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"guess_number", "keyword_rag", "calculator"};
  return names;
}

Scenario make_scenario(const std::string& name, const ScenarioOptions& opts) {
  if (name == "guess_number") return scenario_guess_number(opts);
  if (name == "keyword_rag") return scenario_keyword_rag(opts);
  if (name == "calculator") return scenario_calculator(opts);
  throw ConfigError(fmt::format("unknown scenario '{}'", name));
}

std::string dataset_filename(const std::string& scenario, std::uint64_t seed) {
  return fmt::format("tasks-{}-{}.jsonl", scenario, seed);
}

namespace {

std::vector<std::string> with_base(std::initializer_list<std::vector<std::string>> groups) {
  auto pieces = policy::Vocab::base_pieces();
  for (const auto& g : groups) pieces.insert(pieces.end(), g.begin(), g.end());
  return pieces;
}

std::vector<std::string> digit_pieces() {
  std::vector<std::string> out;
  for (char c = '0'; c <= '9'; ++c) out.emplace_back(1, c);
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\n");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

// ---------------------------------------------------------------- guess_number

namespace guess {

std::optional<int> parse_guess(std::string_view text, int range_max) {
  for (char c : text) {
    if (c >= '0' && c <= '9') {
      const int g = c - '0';
      if (g >= 1 && g <= range_max) return g;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::string feedback(int guess, int target) {
  if (guess == target) return "correct";
  return target > guess ? "higher" : "lower";
}

double reward(int final_guess, int target, int range_max) {
  if (final_guess == target) return 1.0;
  return 1.0 - std::abs(final_guess - target) / static_cast<double>(range_max);
}

int max_turns(int range_max) {
  int bits = 0;
  while ((1 << bits) < range_max) ++bits;
  return bits + 2;
}

// The hidden number of a game is a function of its seed, as a real game server would hold it.
int target_of(std::uint64_t game_seed, int range_max) {
  return 1 + static_cast<int>(mix64(game_seed) % static_cast<std::uint64_t>(range_max));
}

}  // namespace guess

namespace {

// One game-server instance. It tracks the game it is currently hosting, so it must not be
// shared between concurrent rollouts.
class GameInstance {
 public:
  ToolOutcome operator()(const Json& input) {
    const auto seed = input.at("game_seed").get<std::uint64_t>();
    const int range_max = input.at("range_max").get<int>();
    if (!game_ || *game_ != seed) {
      game_ = seed;
      target_ = guess::target_of(seed, range_max);
    }
    const auto text = input.at("guess").get<std::string>();
    if (auto g = guess::parse_guess(text, range_max)) {
      return ToolOutcome::success(Json{{"guess", *g}, {"feedback", guess::feedback(*g, target_)}});
    }
    return ToolOutcome::failure(fmt::format("unparseable guess '{}'", text),
                                Json{{"guess", 1}, {"feedback", guess::feedback(1, target_)}});
  }

 private:
  std::optional<std::uint64_t> game_;
  int target_ = 0;
};

Json guess_harness(AgentContext& ctx) {
  const auto& p = ctx.payload();
  const int range_max = p.at("range_max").get<int>();
  const auto game_seed = p.at("game_seed").get<std::uint64_t>();
  std::vector<client::ChatMessage> messages = {{"user", "guess"}};
  int guess = 1;
  int probes = 0;
  for (int turn = 0; turn < guess::max_turns(range_max); ++turn) {
    const auto text = ctx.llm_call(messages, LlmOptions{"guesser", std::nullopt, 1});
    const auto out = ctx.invoke_tool(
        "probe", Json{{"game_seed", game_seed}, {"range_max", range_max}, {"guess", text}});
    ++probes;
    if (!out.value.contains("feedback")) {
      throw Error(fmt::format("probe failed: {}", out.value.dump()));
    }
    guess = out.value.at("guess").get<int>();
    const auto fb = out.value.at("feedback").get<std::string>();
    messages.push_back({"assistant", std::to_string(guess)});
    messages.push_back({"user", fb});
    if (fb == "correct") break;
  }
  return Json{{"guess", guess}, {"probes", probes}};
}

}  // namespace

Scenario scenario_guess_number(const ScenarioOptions& opts) {
  opts.validate();
  Scenario s{"guess_number",
             {},
             policy::Vocab(with_base({digit_pieces(), {" guess", " higher", " lower", " correct"}})),
             {},
             1.0 / opts.range_max,
             1.0,
             1.0};
  // Targets cycle through [1, range_max] from a seeded offset so every target is covered
  // evenly; each game seed is the first derived key whose game hides that target.
  const auto offset = static_cast<int>(derive_key(opts.seed, "guess-offset") %
                                       static_cast<std::uint64_t>(opts.range_max));
  for (int i = 0; i < opts.num_tasks; ++i) {
    const int target = 1 + (i + offset) % opts.range_max;
    std::uint64_t game_seed = 0;
    for (std::uint64_t j = 0;; ++j) {
      game_seed = derive_key(opts.seed, static_cast<std::uint64_t>(i), j);
      if (guess::target_of(game_seed, opts.range_max) == target) break;
    }
    s.dataset.push_back(TaskSpec{
        fmt::format("guess_number-{:04}", i),
        "guess_number",
        Json{{"game_seed", game_seed}, {"range_max", opts.range_max}, {"ground_truth", target}},
        opts.group_size});
  }
  auto tools = std::make_shared<client::ToolRegistry>();
  tools->add_pooled("probe", 4, [] { return client::ToolFn(GameInstance{}); });
  s.runtime = {"guess_number", tools, guess_harness, [](const Json& answer, const Json& payload) {
                 return guess::reward(answer.at("guess").get<int>(),
                                      payload.at("ground_truth").get<int>(),
                                      payload.at("range_max").get<int>());
               }};
  return s;
}

// ---------------------------------------------------------------- keyword_rag

namespace rag {

namespace {

constexpr std::array<std::string_view, 32> kSubjects = {
    "alder", "birch", "cedar", "delta", "ember", "fjord", "glade",  "heron",
    "islet", "jetty", "knoll", "lagoon", "marsh", "nook", "oasis", "prairie",
    "quarry", "ridge", "summit", "tundra", "upland", "vale", "wharf", "yard",
    "zenith", "bluff", "cove", "dune", "grove", "inlet", "mesa", "pier"};
constexpr std::array<std::string_view, 8> kColors = {"red",   "blue",   "green", "amber",
                                                     "violet", "white", "black", "gray"};
constexpr std::array<std::string_view, 8> kAnimals = {"cat", "dog", "fox", "owl",
                                                      "elk", "yak", "hen", "ram"};

template <std::size_t N>
std::vector<std::string> spaced(const std::array<std::string_view, N>& words) {
  std::vector<std::string> out;
  for (auto w : words) out.push_back(" " + std::string(w));
  return out;
}

}  // namespace

std::string Document::text() const { return fmt::format("{} has {} {}", subject, color, animal); }
std::string Document::question() const { return fmt::format("what does {} have", subject); }
std::string Document::gold() const { return fmt::format("{} {}", color, animal); }

std::vector<Document> build_corpus(std::uint64_t corpus_seed, int num_docs) {
  std::vector<std::string_view> subjects(kSubjects.begin(), kSubjects.end());
  CounterRng rng(derive_key(corpus_seed, "corpus"));
  for (std::size_t i = subjects.size() - 1; i > 0; --i) {
    std::swap(subjects[i], subjects[rng.next_u64() % (i + 1)]);
  }
  std::vector<Document> docs;
  for (int i = 0; i < num_docs; ++i) {
    docs.push_back({std::string(subjects[i]), std::string(kColors[rng.next_u64() % kColors.size()]),
                    std::string(kAnimals[rng.next_u64() % kAnimals.size()])});
  }
  return docs;
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<std::size_t> search(const std::vector<Document>& corpus, std::string_view query) {
  const auto q = words(query);
  std::optional<std::size_t> best;
  std::size_t best_score = 0;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    std::size_t score = 0;
    for (const auto& w : words(corpus[d].text())) {
      if (std::find(q.begin(), q.end(), w) != q.end()) ++score;
    }
    if (score > best_score) {
      best_score = score;
      best = d;
    }
  }
  return best;
}

double word_f1(std::string_view prediction, std::string_view gold) {
  const auto p = words(prediction);
  const auto g = words(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& w : g) ++counts[w];
  int common = 0;
  for (const auto& w : p) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::optional<std::string> between_tags(std::string_view text, std::string_view open,
                                        std::string_view close) {
  const auto b = text.find(open);
  if (b == std::string_view::npos) return std::nullopt;
  const auto start = b + open.size();
  const auto e = text.find(close, start);
  if (e == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(start, e - start));
}

std::string best_effort(std::string_view text, std::string_view open, std::string_view close) {
  if (auto inner = between_tags(text, open, close)) return *inner;
  std::string out(text);
  for (auto tag : {open, close}) {
    for (auto pos = out.find(tag); pos != std::string::npos; pos = out.find(tag)) {
      out.replace(pos, tag.size(), " ");
    }
  }
  return out;
}

double reward(double f1, bool format_ok) { return 0.9 * f1 + 0.1 * (format_ok ? 1.0 : 0.0); }

}  // namespace rag

namespace {

// Retriever service instance; caches the corpus it was last asked about.
class RetrieverInstance {
 public:
  ToolOutcome operator()(const Json& input) {
    const auto seed = input.at("corpus_seed").get<std::uint64_t>();
    const int num_docs = input.at("num_docs").get<int>();
    if (!loaded_ || *loaded_ != std::pair{seed, num_docs}) {
      corpus_ = rag::build_corpus(seed, num_docs);
      loaded_ = std::pair{seed, num_docs};
    }
    const auto hit = rag::search(corpus_, input.at("query").get<std::string>());
    return ToolOutcome::success(Json{{"passage", hit ? corpus_[*hit].text() : std::string()}});
  }

 private:
  std::optional<std::pair<std::uint64_t, int>> loaded_;
  std::vector<rag::Document> corpus_;
};

Json rag_harness(AgentContext& ctx) {
  const auto& p = ctx.payload();
  const auto question = p.at("question").get<std::string>();
  const auto q = ctx.llm_call({{"user", question}}, LlmOptions{"query_writer", std::nullopt, 3});
  const auto res = ctx.invoke_tool("search", Json{{"corpus_seed", p.at("corpus_seed")},
                                                  {"num_docs", p.at("num_docs")},
                                                  {"query", rag::best_effort(q, "<query>", "</query>")}});
  const std::string passage = res.ok() ? res.value.at("passage").get<std::string>() : "";
  const auto a = ctx.llm_call({{"user", question}, {"tool", passage}},
                              LlmOptions{"answerer", std::nullopt, 4});
  return Json{{"query_output", q}, {"answer_output", a}};
}

double rag_reward(const Json& answer, const Json& payload) {
  const auto q = answer.at("query_output").get<std::string>();
  const auto a = answer.at("answer_output").get<std::string>();
  const bool format_ok = rag::between_tags(q, "<query>", "</query>").has_value() &&
                         rag::between_tags(a, "<answer>", "</answer>").has_value();
  const double f1 =
      rag::word_f1(rag::best_effort(a, "<answer>", "</answer>"), payload.at("gold").get<std::string>());
  return rag::reward(f1, format_ok);
}

}  // namespace

Scenario scenario_keyword_rag(const ScenarioOptions& opts) {
  opts.validate();
  Scenario s{"keyword_rag",
             {},
             policy::Vocab(with_base({rag::spaced(rag::kSubjects), rag::spaced(rag::kColors),
                                      rag::spaced(rag::kAnimals),
                                      {" has", " what", " does", " have", "<query>", "</query>",
                                       "<answer>", "</answer>"}})),
             {},
             0.0,
             1.0,
             1.0};
  const auto corpus_seed = derive_key(opts.seed, "rag-corpus");
  const auto corpus = rag::build_corpus(corpus_seed, opts.num_docs);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    s.dataset.push_back(TaskSpec{fmt::format("keyword_rag-{:02}", i),
                                 "keyword_rag",
                                 Json{{"corpus_seed", corpus_seed},
                                      {"num_docs", opts.num_docs},
                                      {"doc_index", i},
                                      {"question", corpus[i].question()},
                                      {"gold", corpus[i].gold()}},
                                 opts.group_size});
  }
  auto tools = std::make_shared<client::ToolRegistry>();
  tools->add_pooled("search", 4, [] { return client::ToolFn(RetrieverInstance{}); });
  s.runtime = {"keyword_rag", tools, rag_harness, rag_reward};
  return s;
}

SelectiveFixture selective_optimization_fixture(const ScenarioOptions& opts) {
  SelectiveFixture f{scenario_keyword_rag(opts), {}};
  f.extraction.role_filter = std::set<std::string>{"query_writer"};
  return f;
}

// ---------------------------------------------------------------- calculator

namespace calc {

ToolOutcome evaluate(std::string_view expression) {
  const auto expr = trim(expression);
  // The operator is the first + - * / after a leading sign.
  std::size_t op_pos = std::string::npos;
  for (std::size_t i = (expr.size() > 0 && expr[0] == '-') ? 1 : 0; i < expr.size(); ++i) {
    if (expr[i] == '+' || expr[i] == '-' || expr[i] == '*' || expr[i] == '/') {
      op_pos = i;
      break;
    }
  }
  if (op_pos == std::string::npos) {
    return ToolOutcome::failure(fmt::format("malformed expression '{}'", expr));
  }
  const auto lhs = parse_int(trim(std::string_view(expr).substr(0, op_pos)));
  const auto rhs = parse_int(trim(std::string_view(expr).substr(op_pos + 1)));
  if (!lhs || !rhs) return ToolOutcome::failure(fmt::format("malformed expression '{}'", expr));
  long long v = 0;
  switch (expr[op_pos]) {
    case '+': v = *lhs + *rhs; break;
    case '-': v = *lhs - *rhs; break;
    case '*': v = *lhs * *rhs; break;
    case '/':
      if (*rhs == 0) return ToolOutcome::failure("division by zero");
      v = *lhs / *rhs;
      break;
  }
  return ToolOutcome::success(Json{{"value", v}});
}

}  // namespace calc

namespace {

Json calc_harness(AgentContext& ctx) {
  const auto question = ctx.payload().at("question").get<std::string>();
  const auto expr = ctx.llm_call({{"user", question}}, LlmOptions{"planner", std::nullopt, 4});
  const auto res = ctx.invoke_tool("calc", Json{{"expression", expr}});
  const std::string tool_text = res.ok() ? std::to_string(res.value.at("value").get<long long>()) : "";
  const auto answer = ctx.llm_call({{"user", question}, {"assistant", expr}, {"tool", tool_text}},
                                   LlmOptions{"answerer", std::nullopt, 4});
  return Json{{"expression", expr}, {"answer", answer}};
}

double calc_reward(const Json& answer, const Json& payload) {
  const auto v = parse_int(trim(answer.at("answer").get<std::string>()));
  return v && *v == payload.at("ground_truth").get<long long>() ? 1.0 : 0.0;
}

}  // namespace

Scenario scenario_calculator(const ScenarioOptions& opts) {
  opts.validate();
  Scenario s{"calculator",
             {},
             policy::Vocab(with_base({digit_pieces(), {"+", "-", "*", "/", " what", " is"}})),
             {},
             0.0,
             1.0,
             1.0};
  constexpr std::array<char, 4> kOps = {'+', '-', '*', '/'};
  CounterRng rng(derive_key(opts.seed, "calculator"));
  for (int i = 0; i < opts.num_tasks; ++i) {
    const char op = kOps[rng.next_u64() % kOps.size()];
    const long long a = static_cast<long long>(rng.next_u64() % 10);
    const long long b = op == '/' ? 1 + static_cast<long long>(rng.next_u64() % 9)
                                  : static_cast<long long>(rng.next_u64() % 10);
    const auto expr = fmt::format("{}{}{}", a, op, b);
    const auto truth = calc::evaluate(expr).value.at("value").get<long long>();
    s.dataset.push_back(TaskSpec{
        fmt::format("calculator-{:04}", i),
        "calculator",
        Json{{"question", fmt::format("what is {}", expr)}, {"ground_truth", truth}},
        opts.group_size});
  }
  auto tools = std::make_shared<client::ToolRegistry>();
  tools->add_stateless("calc", [](const Json& input) {
    return calc::evaluate(input.at("expression").get<std::string>());
  });
  s.runtime = {"calculator", tools, calc_harness, calc_reward};
  return s;
}

}  // namespace lightline::agents
