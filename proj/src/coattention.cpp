#include "memvqa/coattention.hpp"

#include <stdexcept>

#include "memvqa/init.hpp"
#include "memvqa/ops.hpp"

namespace memvqa {

namespace {

void require_width(const char* op, const Shape& shape, std::size_t width) {
  if (shape.size() != 2 || shape[1] != width) {
    throw std::invalid_argument(std::string(op) + ": expected rows of width " + std::to_string(width) + ", got " +
                                shape_string(shape));
  }
}

}  // namespace

template <typename Real>
void init_coattention(ParamStore<Real>& store, const CoAttentionParams& params, const std::string& group,
                      std::mt19937_64& rng) {
  const std::size_t D = params.width;
  if (D == 0) throw std::invalid_argument("co-attention width must be positive");
  store.add(params.visual_proj, uniform_fan_in<Real>({D, D}, D, rng), group);
  store.add(params.question_proj, uniform_fan_in<Real>({D, D}, D, rng), group);
  store.add(params.guide_proj, uniform_fan_in<Real>({D, D}, D, rng), group);
  store.add(params.visual_score, uniform_fan_in<Real>({D}, D, rng), group);
  store.add(params.question_score, uniform_fan_in<Real>({D}, D, rng), group);
}

template <typename Real>
Var<Real> base_vector(Var<Real> grid, Var<Real> question) {
  if (grid.value().rank() != 2 || question.value().rank() != 2 || grid.value().cols() != question.value().cols()) {
    throw std::invalid_argument("base_vector: visual width " + shape_string(grid.shape()) +
                                " does not match question width " + shape_string(question.shape()));
  }
  return tanh(mean_rows(grid)) * mean_rows(question);
}

template <typename Real>
Var<Real> attention_guide(ParamStore<Real>& store, const CoAttentionParams& params, Var<Real> base) {
  if (base.value().rank() != 1 || base.size() != params.width) {
    throw std::invalid_argument("attention_guide: base vector has shape " + shape_string(base.shape()));
  }
  return tanh(matmul(base.graph().parameter(store, params.guide_proj), base));
}

template <typename Real>
AttentionResult<Real> attend_visual_guided(ParamStore<Real>& store, const CoAttentionParams& params, Var<Real> grid,
                                           Var<Real> guide) {
  require_width("attend_visual", grid.shape(), params.width);
  Graph<Real>& g = grid.graph();
  Var<Real> hidden = tanh(matmul_nt(grid, g.parameter(store, params.visual_proj))) * guide;
  Var<Real> alpha = softmax(matmul(hidden, g.parameter(store, params.visual_score)));
  return {alpha, tanh(matmul(alpha, grid))};
}

template <typename Real>
AttentionResult<Real> attend_question_guided(ParamStore<Real>& store, const CoAttentionParams& params,
                                             Var<Real> question, Var<Real> guide) {
  require_width("attend_question", question.shape(), params.width);
  Graph<Real>& g = question.graph();
  Var<Real> hidden = tanh(matmul_nt(question, g.parameter(store, params.question_proj))) * guide;
  Var<Real> alpha = softmax(matmul(hidden, g.parameter(store, params.question_score)));
  return {alpha, matmul(alpha, question)};
}

template <typename Real>
CoAttentionResult<Real> coattend(ParamStore<Real>& store, const CoAttentionParams& params, Var<Real> grid,
                                 Var<Real> question) {
  CoAttentionResult<Real> out;
  out.base = base_vector(grid, question);
  Var<Real> guide = attention_guide(store, params, out.base);
  out.visual = attend_visual_guided(store, params, grid, guide);
  out.question = attend_question_guided(store, params, question, guide);
  out.joint = concat<Real>({out.visual.attended, out.question.attended});
  return out;
}

#define MEMVQA_INSTANTIATE_COATT(R)                                                                              \
  template void init_coattention(ParamStore<R>&, const CoAttentionParams&, const std::string&, std::mt19937_64&); \
  template Var<R> base_vector(Var<R>, Var<R>);                                                                   \
  template Var<R> attention_guide(ParamStore<R>&, const CoAttentionParams&, Var<R>);                             \
  template AttentionResult<R> attend_visual_guided(ParamStore<R>&, const CoAttentionParams&, Var<R>, Var<R>);    \
  template AttentionResult<R> attend_question_guided(ParamStore<R>&, const CoAttentionParams&, Var<R>, Var<R>);  \
  template CoAttentionResult<R> coattend(ParamStore<R>&, const CoAttentionParams&, Var<R>, Var<R>);

MEMVQA_INSTANTIATE_COATT(float)
MEMVQA_INSTANTIATE_COATT(double)

}  // namespace memvqa
