#include "memvqa/encoders.hpp"

#include <stdexcept>

#include "memvqa/init.hpp"
#include "memvqa/ops.hpp"

namespace memvqa {

QuestionEncoderParams QuestionEncoderParams::from_config(const QuestionEncoderConfig& config) {
  QuestionEncoderParams p;
  p.forward = {"question.forward", config.embed_dim, config.hidden_per_direction};
  p.backward = {"question.backward", config.embed_dim, config.hidden_per_direction};
  return p;
}

template <typename Real>
void init_question_encoder(ParamStore<Real>& store, const QuestionEncoderConfig& config, std::mt19937_64& rng) {
  if (config.vocab_size == 0 || config.embed_dim == 0 || config.hidden_per_direction == 0) {
    throw std::invalid_argument("question encoder sizes must be positive");
  }
  const auto params = QuestionEncoderParams::from_config(config);
  // Embedding rows act as one-hot projections, so fan-in is the row width.
  store.add(params.embedding, uniform_fan_in<Real>({config.vocab_size, config.embed_dim}, config.embed_dim, rng),
            kQuestionGroup);
  init_lstm(store, params.forward, kQuestionGroup, rng);
  init_lstm(store, params.backward, kQuestionGroup, rng);
}

template <typename Real>
std::vector<Var<Real>> embed_tokens(Var<Real> embedding, std::span<const std::size_t> tokens) {
  const std::size_t rows = embedding.value().rows();
  std::vector<Var<Real>> out;
  out.reserve(tokens.size());
  for (std::size_t t : tokens) {
    if (t >= rows) {
      throw std::invalid_argument("embed_tokens: token index " + std::to_string(t) + " out of range for " +
                                  std::to_string(rows) + " embedding rows");
    }
    out.push_back(row(embedding, t));
  }
  return out;
}

template <typename Real>
Var<Real> encode_question(Graph<Real>& graph, ParamStore<Real>& store, const QuestionEncoderParams& params,
                          std::span<const std::size_t> tokens) {
  if (tokens.empty()) throw std::invalid_argument("encode_question: empty question");
  const std::size_t T = tokens.size();
  const std::size_t H = params.forward.hidden_size;
  const auto xs = embed_tokens(graph.parameter(store, params.embedding), tokens);

  const Var<Real> zero = graph.constant(Tensor<Real>({H}));
  std::vector<Var<Real>> forward(T), backward(T);
  LstmState<Real> state{zero, zero};
  for (std::size_t t = 0; t < T; ++t) {
    state = lstm_step(store, params.forward, xs[t], state);
    forward[t] = state.h;
  }
  state = {zero, zero};
  for (std::size_t t = T; t-- > 0;) {
    state = lstm_step(store, params.backward, xs[t], state);
    backward[t] = state.h;
  }
  std::vector<Var<Real>> rows;
  rows.reserve(T);
  for (std::size_t t = 0; t < T; ++t) rows.push_back(concat<Real>({forward[t], backward[t]}));
  return stack_rows(rows);
}

template void init_question_encoder(ParamStore<float>&, const QuestionEncoderConfig&, std::mt19937_64&);
template void init_question_encoder(ParamStore<double>&, const QuestionEncoderConfig&, std::mt19937_64&);
template std::vector<Var<float>> embed_tokens(Var<float>, std::span<const std::size_t>);
template std::vector<Var<double>> embed_tokens(Var<double>, std::span<const std::size_t>);
template Var<float> encode_question(Graph<float>&, ParamStore<float>&, const QuestionEncoderParams&,
                                    std::span<const std::size_t>);
template Var<double> encode_question(Graph<double>&, ParamStore<double>&, const QuestionEncoderParams&,
                                     std::span<const std::size_t>);

}  // namespace memvqa
