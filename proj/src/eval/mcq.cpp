#include "dated/eval/mcq.hpp"

#include <algorithm>
#include <numeric>

#include "dated/common/error.hpp"
#include "dated/common/hash.hpp"
#include "dated/common/random.hpp"
#include "dated/lm/loss.hpp"
#include "dated/lm/transformer.hpp"

namespace dated::eval {
namespace {

uint64_t item_seed(uint64_t seed, std::string_view id) {
  const auto d = sha256(id);
  uint64_t h = 0;
  for (int i = 0; i < 8; ++i) h = (h << 8) | d[i];
  return seed ^ h;
}

}  // namespace

void McqItem::validate() const {
  if (choices.size() < 2) {
    throw InvalidArgument("item " + id + " has " + std::to_string(choices.size()) +
                          " choice(s); need at least 2");
  }
  if (gold < 0 || gold >= static_cast<int>(choices.size())) {
    throw InvalidArgument("item " + id + " has gold index " + std::to_string(gold) + " for " +
                          std::to_string(choices.size()) + " choices");
  }
}

Json mcq_item_to_json(const McqItem& item) {
  Json ex = Json::array();
  for (const auto& e : item.exemplars) ex.push_back({{"question", e.question}, {"answer", e.answer}});
  Json j = {{"id", item.id}, {"question", item.question}, {"choices", item.choices},
            {"gold", item.gold}};
  if (!item.exemplars.empty()) j["exemplars"] = ex;
  return j;
}

McqItem mcq_item_from_json(const Json& j) {
  McqItem item;
  try {
    item.id = j.value("id", "");
    item.question = j.at("question").get<std::string>();
    item.choices = j.at("choices").get<std::vector<std::string>>();
    item.gold = j.at("gold").get<int>();
    if (j.contains("exemplars")) {
      for (const auto& e : j.at("exemplars")) {
        item.exemplars.push_back({e.at("question").get<std::string>(),
                                  e.at("answer").get<std::string>()});
      }
    }
  } catch (const Json::exception& ex) {
    throw InvalidArgument(std::string("malformed item: ") + ex.what());
  }
  item.validate();
  return item;
}

std::vector<McqItem> read_mcq_task(const std::filesystem::path& path) {
  std::vector<McqItem> out;
  for_each_line(path, [&](size_t line, const std::string& text) {
    try {
      auto item = mcq_item_from_json(Json::parse(text));
      if (item.id.empty()) item.id = "line" + std::to_string(line);
      out.push_back(std::move(item));
    } catch (const std::exception& ex) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line) + ": " + ex.what());
    }
  });
  return out;
}

std::string_view normalization_name(Normalization n) {
  return n == Normalization::kNone ? "none" : "per-token";
}

std::optional<Normalization> parse_normalization(std::string_view name) {
  if (name == "none") return Normalization::kNone;
  if (name == "per-token") return Normalization::kPerToken;
  return std::nullopt;
}

std::vector<Exemplar> select_exemplars(const McqItem& item, std::span<const McqItem> task,
                                       int shots, uint64_t seed) {
  if (shots < 0) throw InvalidArgument("shots must be non-negative");
  if (shots == 0) return {};
  std::vector<Exemplar> pool = item.exemplars;
  if (pool.empty()) {
    for (const auto& other : task) {
      if (other.id == item.id) continue;
      pool.push_back({other.question, other.choices.at(other.gold)});
    }
  }
  if (pool.size() < static_cast<size_t>(shots)) {
    throw InvalidArgument("item " + item.id + " has " + std::to_string(pool.size()) +
                          " exemplar(s) for " + std::to_string(shots) + " shots");
  }
  Rng rng(item_seed(seed, item.id));
  rng.shuffle(std::span(pool));
  pool.resize(shots);
  return pool;
}

std::string mcq_context(const McqItem& item, std::span<const Exemplar> exemplars) {
  std::string s;
  for (const auto& e : exemplars) s += "Question: " + e.question + "\nAnswer: " + e.answer + "\n\n";
  return s + "Question: " + item.question + "\nAnswer:";
}

std::string mcq_continuation(std::string_view choice) { return " " + std::string(choice); }

McqScore score_mcq(const lm::Parameters<float>& params, const tok::BpeTokenizer& tokenizer,
                   const McqItem& item, std::span<const Exemplar> exemplars,
                   Normalization normalization) {
  item.validate();
  if (tokenizer.vocab_size() != params.config.vocab_size) {
    throw InvalidArgument("tokenizer has " + std::to_string(tokenizer.vocab_size()) +
                          " ids, model " + std::to_string(params.config.vocab_size));
  }
  std::vector<tok::TokenId> context{tok::kEndOfText};
  tokenizer.encode_append(mcq_context(item, exemplars), context);
  const int vocab = params.config.vocab_size;
  const size_t window = params.config.sequence_length;

  McqScore out;
  lm::Workspace<float> ws;
  for (size_t c = 0; c < item.choices.size(); ++c) {
    const auto cont = tokenizer.encode(mcq_continuation(item.choices[c]));
    std::vector<tok::TokenId> input = context;
    input.insert(input.end(), cont.begin(), cont.end());
    input.pop_back();  // the last token is only predicted
    if (input.size() > window) {
      throw InvalidArgument("item " + item.id + ": prompt and choice " + std::to_string(c) +
                            " need " + std::to_string(input.size()) +
                            " positions, context window is " + std::to_string(window));
    }
    const auto logits = ws.forward(params, input, 1, static_cast<int>(input.size()));
    double sum = 0;
    for (size_t j = 0; j < cont.size(); ++j) {
      const size_t row = context.size() - 1 + j;
      sum += lm::token_log_prob<float>(logits.subspan(row * vocab, vocab), cont[j]);
    }
    if (normalization == Normalization::kPerToken) sum /= static_cast<double>(cont.size());
    out.scores.push_back(sum);
    out.continuation_tokens.push_back(cont.size());
  }
  for (size_t c = 1; c < out.scores.size(); ++c) {
    if (out.scores[c] > out.scores[out.chosen]) out.chosen = static_cast<int>(c);
  }
  return out;
}

Json mcq_record_to_json(const McqRecord& r) {
  Json j = {{"id", r.id}, {"gold", r.gold}, {"chosen", r.chosen}, {"scores", r.scores},
            {"correct", r.correct}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

Json TaskResult::summary_json() const {
  return {{"total", total}, {"correct", correct}, {"errors", errors}, {"accuracy", accuracy}};
}

TaskResult run_task(const lm::Parameters<float>& params, const tok::BpeTokenizer& tokenizer,
                    std::span<const McqItem> task, const McqOptions& options) {
  if (task.empty()) throw InvalidArgument("task has no items");
  TaskResult r;
  for (const auto& item : task) {
    McqRecord rec;
    rec.id = item.id;
    rec.gold = item.gold;
    try {
      const auto ex = select_exemplars(item, task, options.shots, options.seed);
      const auto s = score_mcq(params, tokenizer, item, ex, options.normalization);
      rec.chosen = s.chosen;
      rec.scores = s.scores;
      rec.correct = s.chosen == item.gold;
    } catch (const std::exception& e) {
      rec.error = e.what();
      ++r.errors;
    }
    r.correct += rec.correct;
    r.records.push_back(std::move(rec));
  }
  r.total = task.size();
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

}  // namespace dated::eval
