#include "memvqa/vocabulary.hpp"

#include <stdexcept>

namespace memvqa {

Vocabulary::Vocabulary() { add(kUnknownToken); }

Vocabulary Vocabulary::from_sentences(const std::vector<std::vector<std::string>>& sentences) {
  Vocabulary v;
  for (const auto& s : sentences) {
    for (const auto& t : s) v.add(t);
  }
  return v;
}

std::size_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = token_to_index_.emplace(token, index_to_token_.size());
  if (inserted) index_to_token_.push_back(token);
  return it->second;
}

std::size_t Vocabulary::index_of(const std::string& token) const {
  auto it = token_to_index_.find(token);
  return it == token_to_index_.end() ? unknown_index() : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index_of(t));
  return out;
}

nlohmann::json Vocabulary::to_json() const { return index_to_token_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  const auto tokens = j.get<std::vector<std::string>>();
  if (tokens.empty() || tokens.front() != kUnknownToken) {
    throw std::invalid_argument("vocabulary must start with the unknown token");
  }
  Vocabulary v;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (v.add(tokens[i]) != i) throw std::invalid_argument("duplicate token '" + tokens[i] + "' in vocabulary");
  }
  return v;
}

}  // namespace memvqa
