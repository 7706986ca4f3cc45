#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "memvqa/lstm.hpp"

namespace memvqa {

struct QuestionEncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_per_direction = 32;

  // Width of each q_t = [h_t^+, h_t^-].
  std::size_t output_width() const { return 2 * hidden_per_direction; }
};

// Parameter names of the bidirectional question encoder. The two directions
// have separate cells.
struct QuestionEncoderParams {
  std::string embedding = "question.embedding";
  LstmCellParams forward;
  LstmCellParams backward;

  static QuestionEncoderParams from_config(const QuestionEncoderConfig& config);
};

inline constexpr const char* kQuestionGroup = "question";

template <typename Real>
void init_question_encoder(ParamStore<Real>& store, const QuestionEncoderConfig& config, std::mt19937_64& rng);

// x_t = row tokens[t] of the embedding matrix.
template <typename Real>
std::vector<Var<Real>> embed_tokens(Var<Real> embedding, std::span<const std::size_t> tokens);

// Runs the forward cell over t = 1..T and the backward cell over t = T..1,
// both from zero state, and stacks q_t = [h_t^+, h_t^-] into a [T, 2H] matrix.
template <typename Real>
Var<Real> encode_question(Graph<Real>& graph, ParamStore<Real>& store, const QuestionEncoderParams& params,
                          std::span<const std::size_t> tokens);

}  // namespace memvqa
