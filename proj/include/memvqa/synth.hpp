#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace memvqa {

// Desk-scale stand-in for a heavy-tailed VQA corpus. Class k (0-based rank)
// is drawn with probability proportional to (k+1)^-zipf_exponent. Every
// image holds the answer's signature in one region and a distractor object
// from another question type in a second region; the question names the type.
struct SynthTaskConfig {
  std::size_t classes = 50;
  double zipf_exponent = 1.2;
  std::size_t vocabulary_size = 20;  // filler words in question templates
  std::size_t regions = 16;
  std::size_t feature_width = 64;
  std::size_t train_examples = 5000;
  std::size_t test_examples = 2000;
  std::size_t question_types = 5;
  double signature_scale = 1.0;  // per-entry std of class signatures
  double noise_scale = 1.0;      // per-entry std of region noise
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static SynthTaskConfig from_json(const nlohmann::json& j);
};

struct SynthClass {
  std::size_t id = 0;
  std::string answer;
  std::string question_type;
  double probability = 0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};

struct SynthManifest {
  SynthTaskConfig config;
  std::vector<SynthClass> classes;
  std::vector<std::size_t> rare_class_ids;  // bottom quartile of the generating distribution

  std::vector<std::string> rare_answers() const;
  nlohmann::ordered_json to_json() const;
  static SynthManifest from_json(const nlohmann::json& j);
};

// Exact Zipf probabilities for ranks 1..classes.
std::vector<double> zipf_probabilities(std::size_t classes, double exponent);

// Number of lowest-frequency classes treated as rare: ceil(classes / 4).
std::size_t rare_class_count(std::size_t classes);

std::string synth_answer(std::size_t class_id);

// In-memory generation (deterministic in the config).
struct SynthExample {
  std::int64_t question_id = 0;
  std::string image_id;
  std::string question;
  std::string question_type;
  std::vector<std::string> answers;
  std::vector<std::string> multiple_choices;
  std::size_t class_id = 0;
  std::vector<float> features;  // regions x feature_width
};

struct SynthSplits {
  SynthManifest manifest;
  std::vector<SynthExample> train;
  std::vector<SynthExample> test;
};

SynthSplits generate_synth_task(const SynthTaskConfig& config);

// Writes <out>/manifest.json, <out>/{train,test}/questions.jsonl and
// <out>/features/<image_id>.bin.
SynthManifest write_synth_task(const SynthTaskConfig& config, const std::filesystem::path& out);

SynthManifest read_manifest(const std::filesystem::path& path);

}  // namespace memvqa
