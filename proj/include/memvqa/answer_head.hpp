#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "memvqa/answer_vocab.hpp"
#include "memvqa/graph.hpp"

namespace memvqa {

// One-layer perceptron over the final embedding o = [h, r]. The head owns its
// own projection and classifier matrices.
struct HeadParams {
  std::size_t input_size = 0;   // 2W
  std::size_t hidden_size = 0;
  std::size_t num_answers = 0;  // K
  std::string projection = "head.W_o";  // [hidden, 2W]
  std::string classifier = "head.W_h";  // [K, hidden]
};

inline constexpr double kLogFloor = 1e-12;

template <typename Real>
void init_head(ParamStore<Real>& store, const HeadParams& params, const std::string& group, std::mt19937_64& rng);

// p = softmax(W_h tanh(W_o o)).
template <typename Real>
Var<Real> predict(ParamStore<Real>& store, const HeadParams& params, Var<Real> embedding);

// -log max(p[label], 1e-12).
template <typename Real>
Var<Real> answer_loss(Var<Real> probs, std::size_t label);

// Same loss given a one-hot target; rejects anything that is not one-hot.
template <typename Real>
Var<Real> answer_loss(Var<Real> probs, const Tensor<Real>& one_hot);

// Lowest index among the maxima.
template <typename Real>
std::size_t argmax(std::span<const Real> values);

struct MultipleChoiceSelection {
  std::string answer;
  std::size_t index = 0;  // vocabulary index of the answer
  double prob = 0;
  bool candidates_used = false;  // false when no candidate was in the vocabulary
};

// Picks the in-vocabulary candidate with the highest probability; falls back
// to the global argmax when no candidate is in the vocabulary.
template <typename Real>
MultipleChoiceSelection select_multiple_choice(const Tensor<Real>& probs, const std::vector<std::string>& candidates,
                                               const AnswerVocab& vocab);

template <typename Real>
MultipleChoiceSelection select_open_ended(const Tensor<Real>& probs, const AnswerVocab& vocab);

}  // namespace memvqa
