#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "memvqa/dataset.hpp"
#include "memvqa/model.hpp"
#include "memvqa/optim.hpp"

namespace memvqa {

enum class MemoryReset { never, epoch };

struct TrainConfig {
  double lr_question = 3e-3;  // embedding + bidirectional LSTM
  double lr_answer = 3e-4;    // everything after the question encoder
  double lr_decay_per_epoch = 0.9;
  double clip_magnitude = 0.1;
  ClipMode clip_mode = ClipMode::global_norm;
  double gamma = 1e-4;
  std::size_t truncation_n = 4;
  std::size_t hidden_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  bool external_memory_enabled = true;
  std::size_t memory_slots = 128;
  std::size_t vocab_k = 1000;
  bool gradient_noise = true;
  double noise_eta = 0.01;
  double noise_decay = 0.55;
  MemoryReset memory_reset = MemoryReset::epoch;
  MemoryInit memory_init = MemoryInit::uniform;  // slots seeded from seed
  std::string precision = "f32";  // "f32" or "f64"

  void validate() const;
  nlohmann::ordered_json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0;  // mean training loss over the epoch
  double lr_q = 0;
  double lr_a = 0;
  double train_acc = 0;  // fraction of steps whose pre-update argmax hit the label

  nlohmann::ordered_json to_json() const;
  static EpochMetrics from_json(const nlohmann::json& j);
};

struct TrainingData {
  Dataset train;
  Vocabulary question_vocab;
  AnswerVocab answer_vocab;
};

template <typename Real>
struct Checkpoint {
  TrainConfig config;
  Model<Real> model;
  Adam<Real> adam;
  MannState<Real> state;
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::vector<EpochMetrics> history;
  Vocabulary question_vocab;
  AnswerVocab answer_vocab;
};

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  // When set, receives one JSON line {step, w_r, w_w, w_u} per training step.
  std::ostream* memory_trace = nullptr;
};

// Data directory layout: <dir>/<split>/questions.jsonl and <dir>/features/<image_id>.bin.
// Question and answer vocabularies come from the train split; vocab_k caps the answers.
TrainingData load_training_data(const std::filesystem::path& data_dir, std::size_t vocab_k);
Dataset load_split(const std::filesystem::path& data_dir, const std::string& split, const Vocabulary& question_vocab,
                   const AnswerVocab& answer_vocab);

ModelConfig model_config_for(const TrainConfig& config, const TrainingData& data);

// Shuffled passes over the labeled examples with batch size 1. Each step:
// forward, loss, backward, gradient noise, clipping, Adam. Learning rates
// decay once per epoch. Memory and controller state persist across steps.
template <typename Real>
Checkpoint<Real> train(const TrainConfig& config, const TrainingData& data, const TrainHooks& hooks = {});

enum class EvalMode { open_ended, multiple_choice };

struct Prediction {
  std::int64_t question_id = 0;
  std::string answer;
  double prob = 0;
  bool candidates_used = false;
  double accuracy = 0;  // VQA accuracy against the human answers
  std::string question_type;
  bool rare = false;

  nlohmann::ordered_json to_json() const;  // {question_id, answer, prob, candidates_used}
};

struct AccuracyBucket {
  std::size_t count = 0;
  double accuracy = 0;  // mean VQA accuracy
  double top1 = 0;      // fraction whose prediction equals the training answer
};

struct EvalMetrics {
  std::string mode;
  AccuracyBucket overall;
  std::map<std::string, AccuracyBucket> per_question_type;
  std::optional<AccuracyBucket> rare;
  std::size_t fallback_count = 0;
  std::vector<Prediction> predictions;

  nlohmann::ordered_json to_json() const;
};

// Memory is read-only and the controller restarts from the checkpointed
// state for every example, so results do not depend on example order.
// rare_answers marks the rare-class subset (empty: no rare breakdown).
template <typename Real>
EvalMetrics evaluate(Checkpoint<Real>& checkpoint, const Dataset& dataset, const AnswerVocab& dataset_vocab,
                     EvalMode mode, const std::set<std::string>& rare_answers = {});

// Directory with manifest.json plus one raw little-endian file per tensor.
template <typename Real>
void save_checkpoint(const Checkpoint<Real>& checkpoint, const std::filesystem::path& dir);
template <typename Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& dir);
std::string checkpoint_precision(const std::filesystem::path& dir);

template <typename Real>
Tensor<Real> grid_tensor(const FeatureGrid& grid);

}  // namespace memvqa
