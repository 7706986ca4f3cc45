#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace memvqa {

// Question-token vocabulary. Index 0 is always the unknown token.
class Vocabulary {
 public:
  static constexpr const char* kUnknownToken = "<unk>";

  Vocabulary();

  // Tokens are added in first-seen order; duplicates are ignored.
  static Vocabulary from_sentences(const std::vector<std::vector<std::string>>& sentences);

  std::size_t add(const std::string& token);
  std::size_t index_of(const std::string& token) const;
  const std::string& token(std::size_t index) const { return index_to_token_.at(index); }
  std::size_t unknown_index() const { return 0; }
  std::size_t size() const { return index_to_token_.size(); }
  bool contains(const std::string& token) const { return token_to_index_.count(token) != 0; }

  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.index_to_token_ == b.index_to_token_;
  }

 private:
  std::unordered_map<std::string, std::size_t> token_to_index_;
  std::vector<std::string> index_to_token_;
};

}  // namespace memvqa
