#include "memvqa/answer_head.hpp"

#include <stdexcept>

#include "memvqa/init.hpp"
#include "memvqa/ops.hpp"
#include "memvqa/text.hpp"

namespace memvqa {

template <typename Real>
void init_head(ParamStore<Real>& store, const HeadParams& params, const std::string& group, std::mt19937_64& rng) {
  if (params.input_size == 0 || params.hidden_size == 0 || params.num_answers == 0) {
    throw std::invalid_argument("answer head sizes must be positive");
  }
  store.add(params.projection, uniform_fan_in<Real>({params.hidden_size, params.input_size}, params.input_size, rng),
            group);
  store.add(params.classifier,
            uniform_fan_in<Real>({params.num_answers, params.hidden_size}, params.hidden_size, rng), group);
}

template <typename Real>
Var<Real> predict(ParamStore<Real>& store, const HeadParams& params, Var<Real> embedding) {
  if (embedding.value().rank() != 1 || embedding.size() != params.input_size) {
    throw std::invalid_argument("predict: embedding has shape " + shape_string(embedding.shape()) + ", expected [" +
                                std::to_string(params.input_size) + "]");
  }
  Graph<Real>& g = embedding.graph();
  Var<Real> hidden = tanh(matmul(g.parameter(store, params.projection), embedding));
  return softmax(matmul(g.parameter(store, params.classifier), hidden));
}

template <typename Real>
Var<Real> answer_loss(Var<Real> probs, std::size_t label) {
  return neg_log_pick(probs, label, static_cast<Real>(kLogFloor));
}

template <typename Real>
Var<Real> answer_loss(Var<Real> probs, const Tensor<Real>& one_hot) {
  if (one_hot.shape() != probs.shape()) throw std::invalid_argument("answer_loss: label shape mismatch");
  std::size_t ones = 0, label = 0;
  for (std::size_t i = 0; i < one_hot.size(); ++i) {
    if (one_hot[i] == Real(1)) {
      ++ones;
      label = i;
    } else if (one_hot[i] != Real(0)) {
      throw std::invalid_argument("answer_loss: label is not one-hot");
    }
  }
  if (ones != 1) throw std::invalid_argument("answer_loss: label is not one-hot");
  return answer_loss(probs, label);
}

template <typename Real>
std::size_t argmax(std::span<const Real> values) {
  if (values.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

template <typename Real>
MultipleChoiceSelection select_open_ended(const Tensor<Real>& probs, const AnswerVocab& vocab) {
  if (probs.size() != vocab.size()) throw std::invalid_argument("select: distribution does not match vocabulary");
  MultipleChoiceSelection s;
  s.index = argmax(probs.data());
  s.answer = vocab.answer(s.index);
  s.prob = static_cast<double>(probs[s.index]);
  return s;
}

template <typename Real>
MultipleChoiceSelection select_multiple_choice(const Tensor<Real>& probs, const std::vector<std::string>& candidates,
                                               const AnswerVocab& vocab) {
  if (probs.size() != vocab.size()) throw std::invalid_argument("select: distribution does not match vocabulary");
  bool found = false;
  std::size_t best = 0;
  for (const auto& candidate : candidates) {
    const auto index = vocab.index_of(normalize_answer(candidate));
    if (!index) continue;
    if (!found || probs[*index] > probs[best] || (probs[*index] == probs[best] && *index < best)) {
      best = *index;
      found = true;
    }
  }
  if (!found) return select_open_ended(probs, vocab);
  MultipleChoiceSelection s;
  s.index = best;
  s.answer = vocab.answer(best);
  s.prob = static_cast<double>(probs[best]);
  s.candidates_used = true;
  return s;
}

#define MEMVQA_INSTANTIATE_HEAD(R)                                                                             \
  template void init_head(ParamStore<R>&, const HeadParams&, const std::string&, std::mt19937_64&);           \
  template Var<R> predict(ParamStore<R>&, const HeadParams&, Var<R>);                                         \
  template Var<R> answer_loss(Var<R>, std::size_t);                                                           \
  template Var<R> answer_loss(Var<R>, const Tensor<R>&);                                                      \
  template std::size_t argmax(std::span<const R>);                                                            \
  template MultipleChoiceSelection select_multiple_choice(const Tensor<R>&, const std::vector<std::string>&,  \
                                                          const AnswerVocab&);                                \
  template MultipleChoiceSelection select_open_ended(const Tensor<R>&, const AnswerVocab&);

MEMVQA_INSTANTIATE_HEAD(float)
MEMVQA_INSTANTIATE_HEAD(double)

}  // namespace memvqa
