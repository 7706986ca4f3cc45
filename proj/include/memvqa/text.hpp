#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace memvqa {

// Lowercase, replace punctuation with spaces, split on whitespace.
std::vector<std::string> tokenize_question(std::string_view text);

// Lowercase, trim, collapse inner whitespace, strip trailing punctuation.
// Used for vocabulary construction, training labels and the accuracy metric.
std::string normalize_answer(std::string_view text);

}  // namespace memvqa
