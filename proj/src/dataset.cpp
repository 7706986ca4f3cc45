#include "memvqa/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "memvqa/text.hpp"

namespace memvqa {

const FeatureGrid& Dataset::grid(const std::string& image_id) const {
  auto it = grids.find(image_id);
  if (it == grids.end()) throw DataError("no feature grid loaded for image_id '" + image_id + "'");
  return it->second;
}

std::size_t Dataset::labeled_count() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const ExampleRecord& r) { return r.label.has_value(); }));
}

bool Dataset::has_multiple_choices() const {
  return std::any_of(records.begin(), records.end(),
                     [](const ExampleRecord& r) { return r.multiple_choices && !r.multiple_choices->empty(); });
}

std::vector<QuestionRecord> parse_questions(const std::string& text, const std::string& source) {
  std::vector<QuestionRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      QuestionRecord q;
      q.question_id = j.at("question_id").get<std::int64_t>();
      const auto& image = j.at("image_id");
      q.image_id = image.is_string() ? image.get<std::string>() : image.dump();
      q.question = j.at("question").get<std::string>();
      for (const auto& a : j.at("answers")) q.answers.push_back(normalize_answer(a.get<std::string>()));
      if (q.answers.empty()) throw DataError("record has no answers");
      if (j.contains("multiple_choices") && !j.at("multiple_choices").is_null()) {
        q.multiple_choices = j.at("multiple_choices").get<std::vector<std::string>>();
      }
      if (j.contains("question_type")) q.question_type = j.at("question_type").get<std::string>();
      out.push_back(std::move(q));
    } catch (const std::exception& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": malformed question record: " + e.what());
    }
  }
  return out;
}

std::vector<QuestionRecord> read_questions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open questions file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_questions(buf.str(), path.string());
}

std::string plurality_answer(const std::vector<std::string>& answers) {
  if (answers.empty()) throw std::invalid_argument("plurality_answer: no answers");
  std::map<std::string, std::size_t> counts;  // ordered, so the first maximum is lexicographically lowest
  for (const auto& a : answers) ++counts[normalize_answer(a)];
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

std::filesystem::path feature_path(const std::filesystem::path& features_dir, const std::string& image_id) {
  return features_dir / (image_id + ".bin");
}

Dataset build_dataset(const std::vector<QuestionRecord>& questions, const std::filesystem::path& features_dir,
                      const Vocabulary& question_vocab, const AnswerVocab& answer_vocab) {
  Dataset ds;
  ds.records.reserve(questions.size());
  for (const auto& q : questions) {
    ExampleRecord r;
    r.question_id = q.question_id;
    r.image_id = q.image_id;
    r.question_tokens = question_vocab.encode(tokenize_question(q.question));
    if (r.question_tokens.empty()) {
      throw DataError("question " + std::to_string(q.question_id) + " has no tokens");
    }
    r.human_answers = q.answers;
    r.training_answer = plurality_answer(q.answers);
    r.label = answer_vocab.index_of(r.training_answer);
    r.multiple_choices = q.multiple_choices;
    r.question_type = q.question_type;

    if (ds.grids.count(q.image_id) == 0) {
      const auto path = feature_path(features_dir, q.image_id);
      if (!std::filesystem::exists(path)) {
        throw DataError("missing feature file for image_id '" + q.image_id + "' (" + path.string() + ")");
      }
      ds.grids.emplace(q.image_id, load_feature_grid(path));
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Dataset parse_dataset(const std::filesystem::path& questions_path, const std::filesystem::path& features_dir,
                      const Vocabulary& question_vocab, const AnswerVocab& answer_vocab) {
  return build_dataset(read_questions(questions_path), features_dir, question_vocab, answer_vocab);
}

Vocabulary build_question_vocab(const std::vector<QuestionRecord>& questions) {
  Vocabulary v;
  for (const auto& q : questions) {
    for (const auto& t : tokenize_question(q.question)) v.add(t);
  }
  return v;
}

std::vector<std::string> training_answers(const std::vector<QuestionRecord>& questions) {
  std::vector<std::string> out;
  out.reserve(questions.size());
  for (const auto& q : questions) out.push_back(plurality_answer(q.answers));
  return out;
}

double vqa_accuracy(const std::string& predicted, const std::vector<std::string>& human_answers) {
  const std::string target = normalize_answer(predicted);
  const auto matches = std::count_if(human_answers.begin(), human_answers.end(),
                                     [&](const std::string& a) { return normalize_answer(a) == target; });
  return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

}  // namespace memvqa
