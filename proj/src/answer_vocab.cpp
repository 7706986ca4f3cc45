#include "memvqa/answer_vocab.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "memvqa/text.hpp"

namespace memvqa {

AnswerVocab::AnswerVocab(std::vector<std::string> answers, std::vector<std::size_t> counts)
    : answers_(std::move(answers)), counts_(std::move(counts)) {
  if (answers_.size() != counts_.size()) throw std::invalid_argument("answer vocab: answers/counts size mismatch");
  for (std::size_t i = 0; i < answers_.size(); ++i) {
    if (!index_.emplace(answers_[i], i).second) {
      throw std::invalid_argument("answer vocab: duplicate answer '" + answers_[i] + "'");
    }
  }
  retained_ = total_ = 0;
  for (std::size_t c : counts_) retained_ += c;
  total_ = retained_;
}

std::optional<std::size_t> AnswerVocab::index_of(const std::string& normalized_answer) const {
  auto it = index_.find(normalized_answer);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

nlohmann::json AnswerVocab::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < answers_.size(); ++i) out.push_back({{"answer", answers_[i]}, {"count", counts_[i]}});
  return out;
}

AnswerVocab AnswerVocab::from_json(const nlohmann::json& j) {
  std::vector<std::string> answers;
  std::vector<std::size_t> counts;
  for (const auto& entry : j) {
    answers.push_back(entry.at("answer").get<std::string>());
    counts.push_back(entry.at("count").get<std::size_t>());
  }
  return AnswerVocab(std::move(answers), std::move(counts));
}

AnswerVocab build_vocab(const std::vector<std::string>& answers, std::size_t k) {
  if (k < 1) throw std::invalid_argument("build_vocab: K must be at least 1");
  if (answers.empty()) throw std::invalid_argument("build_vocab: empty answer corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& a : answers) ++counts[normalize_answer(a)];

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > k) ranked.resize(k);

  std::vector<std::string> kept;
  std::vector<std::size_t> kept_counts;
  for (auto& [answer, count] : ranked) {
    kept.push_back(answer);
    kept_counts.push_back(count);
  }
  AnswerVocab vocab(std::move(kept), std::move(kept_counts));
  vocab.total_ = answers.size();
  vocab.coverage_ = static_cast<double>(vocab.retained_) / static_cast<double>(vocab.total_);
  return vocab;
}

}  // namespace memvqa
