#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "memvqa/graph.hpp"

namespace memvqa {

// Projections of the co-attention block. All map into the shared width D
// (= Dv = Dq). Each branch has its own score vector.
struct CoAttentionParams {
  std::size_t width = 0;
  std::string visual_proj = "coatt.W_v";
  std::string question_proj = "coatt.W_q";
  std::string guide_proj = "coatt.W_m";
  std::string visual_score = "coatt.w_h_visual";
  std::string question_score = "coatt.w_h_question";
};

template <typename Real>
struct AttentionResult {
  Var<Real> weights;   // alpha over regions or words
  Var<Real> attended;  // v* or q*
};

template <typename Real>
struct CoAttentionResult {
  Var<Real> base;  // m_0
  AttentionResult<Real> visual;
  AttentionResult<Real> question;
  Var<Real> joint;  // [v*, q*]
};

template <typename Real>
void init_coattention(ParamStore<Real>& store, const CoAttentionParams& params, const std::string& group,
                      std::mt19937_64& rng);

// m_0 = tanh(mean_n v_n) * mean_t q_t.
template <typename Real>
Var<Real> base_vector(Var<Real> grid, Var<Real> question);

// tanh(W_m m_0), shared by both branches.
template <typename Real>
Var<Real> attention_guide(ParamStore<Real>& store, const CoAttentionParams& params, Var<Real> base);

// h_n = tanh(W_v v_n) * guide, alpha = softmax(w_h . h_n), v* = tanh(sum alpha_n v_n).
template <typename Real>
AttentionResult<Real> attend_visual_guided(ParamStore<Real>& store, const CoAttentionParams& params, Var<Real> grid,
                                           Var<Real> guide);
// h_t = tanh(W_q q_t) * guide, alpha = softmax(w_h . h_t), q* = sum alpha_t q_t (no outer tanh).
template <typename Real>
AttentionResult<Real> attend_question_guided(ParamStore<Real>& store, const CoAttentionParams& params,
                                             Var<Real> question, Var<Real> guide);

template <typename Real>
AttentionResult<Real> attend_visual(ParamStore<Real>& store, const CoAttentionParams& params, Var<Real> grid,
                                    Var<Real> base) {
  return attend_visual_guided(store, params, grid, attention_guide(store, params, base));
}

template <typename Real>
AttentionResult<Real> attend_question(ParamStore<Real>& store, const CoAttentionParams& params, Var<Real> question,
                                      Var<Real> base) {
  return attend_question_guided(store, params, question, attention_guide(store, params, base));
}

template <typename Real>
CoAttentionResult<Real> coattend(ParamStore<Real>& store, const CoAttentionParams& params, Var<Real> grid,
                                 Var<Real> question);

}  // namespace memvqa
