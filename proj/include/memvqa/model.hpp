#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "json.hpp"
#include "memvqa/answer_head.hpp"
#include "memvqa/coattention.hpp"
#include "memvqa/encoders.hpp"
#include "memvqa/mann.hpp"

namespace memvqa {

inline constexpr const char* kAnswerGroup = "answer";

struct ModelConfig {
  std::size_t question_vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t feature_width = 64;         // Dv; the question encoder emits the same width
  std::size_t controller_hidden = 64;     // W
  std::size_t head_hidden = 64;
  std::size_t memory_slots = 128;         // S
  std::size_t num_answers = 0;            // K
  double gamma = 1e-4;
  std::size_t truncation_n = 4;
  bool external_memory = true;
  MemoryInit memory_init = MemoryInit::uniform;
  std::uint64_t memory_seed = 0;

  // Per-direction question LSTM width: half the visual width so q_t matches v_n.
  std::size_t hidden_per_direction() const { return feature_width / 2; }

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  QuestionEncoderConfig encoder_config() const;
  MannConfig mann_config() const;
};

template <typename Real>
struct ForwardResult {
  CoAttentionResult<Real> coattention;
  Var<Real> hidden;     // controller h
  Var<Real> embedding;  // o = [h, r], or [h, 0] without external memory
  Var<Real> probs;
  std::optional<MannStepOutput<Real>> memory;  // present with external memory
  MannGraphState<Real> next;
};

// Encoders -> co-attention -> controller (+ external memory) -> answer head.
template <typename Real>
class Model {
 public:
  explicit Model(ModelConfig config);

  // Uniform fan-in initialization from a seeded generator.
  static Model initialize(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }
  const MannConfig& mann_config() const { return mann_config_; }

  MannState<Real> initial_state() const { return MannState<Real>::initial(mann_config_); }

  // With external memory disabled the memory is neither read nor written
  // and the head consumes [h, 0]; everything upstream is identical.
  ForwardResult<Real> forward(Graph<Real>& graph, const Tensor<Real>& grid, std::span<const std::size_t> tokens,
                              const MannGraphState<Real>& state, bool write_enabled);

 private:
  ModelConfig config_;
  MannConfig mann_config_;
  QuestionEncoderParams encoder_;
  CoAttentionParams coattention_;
  MannParams mann_;
  HeadParams head_;
  ParamStore<Real> params_;
};

}  // namespace memvqa
