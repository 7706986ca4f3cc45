#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "memvqa/answer_vocab.hpp"
#include "memvqa/feature_grid.hpp"
#include "memvqa/vocabulary.hpp"

namespace memvqa {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One line of a questions file before vocabulary mapping.
struct QuestionRecord {
  std::int64_t question_id = 0;
  std::string image_id;
  std::string question;
  std::vector<std::string> answers;  // normalized human answers
  std::optional<std::vector<std::string>> multiple_choices;
  std::string question_type;  // empty when the file has no tag
};

struct ExampleRecord {
  std::int64_t question_id = 0;
  std::string image_id;
  std::vector<std::size_t> question_tokens;
  std::vector<std::string> human_answers;
  std::string training_answer;  // plurality of human_answers
  std::optional<std::size_t> label;  // absent when training_answer is outside the vocabulary
  std::optional<std::vector<std::string>> multiple_choices;
  std::string question_type;
};

struct Dataset {
  std::vector<ExampleRecord> records;
  std::map<std::string, FeatureGrid> grids;  // by image_id

  const FeatureGrid& grid(const std::string& image_id) const;
  std::size_t labeled_count() const;
  bool has_multiple_choices() const;
};

// JSON lines: {"question_id", "image_id", "question", "answers", "multiple_choices"?, "question_type"?}.
std::vector<QuestionRecord> read_questions(const std::filesystem::path& path);
std::vector<QuestionRecord> parse_questions(const std::string& text, const std::string& source = "<memory>");

// Most frequent normalized answer; ties go to the lexicographically lowest.
std::string plurality_answer(const std::vector<std::string>& answers);

// Builds records against fixed vocabularies and loads <features_dir>/<image_id>.bin.
Dataset parse_dataset(const std::filesystem::path& questions_path, const std::filesystem::path& features_dir,
                      const Vocabulary& question_vocab, const AnswerVocab& answer_vocab);
Dataset build_dataset(const std::vector<QuestionRecord>& questions, const std::filesystem::path& features_dir,
                      const Vocabulary& question_vocab, const AnswerVocab& answer_vocab);

Vocabulary build_question_vocab(const std::vector<QuestionRecord>& questions);
std::vector<std::string> training_answers(const std::vector<QuestionRecord>& questions);

// min(#humans that gave the predicted answer / 3, 1).
double vqa_accuracy(const std::string& predicted, const std::vector<std::string>& human_answers);

std::filesystem::path feature_path(const std::filesystem::path& features_dir, const std::string& image_id);

}  // namespace memvqa
