#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace memvqa {

// Top-K answers by descending training frequency, ties broken by ascending
// string order.
class AnswerVocab {
 public:
  AnswerVocab() = default;
  AnswerVocab(std::vector<std::string> answers, std::vector<std::size_t> counts);

  std::size_t size() const { return answers_.size(); }
  const std::string& answer(std::size_t index) const { return answers_.at(index); }
  std::size_t count(std::size_t index) const { return counts_.at(index); }
  const std::vector<std::string>& answers() const { return answers_; }
  std::optional<std::size_t> index_of(const std::string& normalized_answer) const;

  // Fraction of the corpus whose answer survived the cut, set by build_vocab.
  double coverage() const { return coverage_; }
  std::size_t retained_examples() const { return retained_; }
  std::size_t total_examples() const { return total_; }

  nlohmann::json to_json() const;  // [{"answer": ..., "count": ...}, ...]
  static AnswerVocab from_json(const nlohmann::json& j);

  friend bool operator==(const AnswerVocab& a, const AnswerVocab& b) { return a.answers_ == b.answers_; }

 private:
  friend AnswerVocab build_vocab(const std::vector<std::string>& answers, std::size_t k);

  std::vector<std::string> answers_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
  double coverage_ = 1.0;
  std::size_t retained_ = 0;
  std::size_t total_ = 0;
};

// One answer per example (already the example's training answer); answers
// are normalized before counting.
AnswerVocab build_vocab(const std::vector<std::string>& answers, std::size_t k);

}  // namespace memvqa
