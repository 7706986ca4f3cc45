#include "memvqa/mann.hpp"

#include <algorithm>
#include <stdexcept>

#include "memvqa/init.hpp"
#include "memvqa/ops.hpp"

namespace memvqa {

void MannConfig::validate() const {
  if (input_size == 0 || hidden_size == 0 || slots == 0) throw std::invalid_argument("mann sizes must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("mann gamma must lie in (0, 1)");
  if (truncation_n < 1 || truncation_n > slots) {
    throw std::invalid_argument("mann truncation_n must lie in [1, slots]");
  }
}

MannParams MannParams::from_config(const MannConfig& config) {
  MannParams p;
  p.controller = {"mann.controller", config.input_size, config.hidden_size};
  return p;
}

template <typename Real>
MemoryState<Real> MemoryState<Real>::initial(const MannConfig& config) {
  MemoryState s;
  if (config.memory_init_kind == MemoryInit::uniform) {
    std::mt19937_64 rng(config.memory_seed);
    s.memory = uniform_fan_in<Real>({config.slots, config.hidden_size}, config.hidden_size, rng);
  } else {
    s.memory = Tensor<Real>({config.slots, config.hidden_size}, static_cast<Real>(config.memory_init));
  }
  s.usage = Tensor<Real>({config.slots});
  s.read = Tensor<Real>({config.slots});
  s.write = Tensor<Real>({config.slots});
  return s;
}

template <typename Real>
MannState<Real> MannState<Real>::initial(const MannConfig& config) {
  MannState s;
  s.memory = MemoryState<Real>::initial(config);
  s.controller_h = Tensor<Real>({config.hidden_size});
  s.controller_c = Tensor<Real>({config.hidden_size});
  return s;
}

template <typename Real>
MannGraphState<Real> MannGraphState<Real>::constant(Graph<Real>& graph, const MannState<Real>& state) {
  MannGraphState s;
  s.controller = {graph.constant(state.controller_h), graph.constant(state.controller_c)};
  s.memory = graph.constant(state.memory.memory);
  s.read = graph.constant(state.memory.read);
  s.write = graph.constant(state.memory.write);
  s.usage = graph.constant(state.memory.usage);
  return s;
}

template <typename Real>
MannState<Real> MannGraphState<Real>::values() const {
  MannState<Real> s;
  s.memory.memory = memory.value();
  s.memory.usage = usage.value();
  s.memory.read = read.value();
  s.memory.write = write.value();
  s.controller_h = controller.h.value();
  s.controller_c = controller.c.value();
  return s;
}

template <typename Real>
void init_mann(ParamStore<Real>& store, const MannConfig& config, const std::string& group, std::mt19937_64& rng) {
  config.validate();
  const auto params = MannParams::from_config(config);
  init_lstm(store, params.controller, group, rng);
  // sigma(0) = 0.5: equal mix of previous read and least-used locations.
  store.add(params.gate, Tensor<Real>::scalar(Real(0)), group);
}

template <typename Real>
LstmState<Real> controller_step(ParamStore<Real>& store, const MannParams& params, Var<Real> x,
                                const LstmState<Real>& prev) {
  return lstm_step(store, params.controller, x, prev);
}

template <typename Real>
ReadResult<Real> read_memory(Var<Real> hidden, Var<Real> memory) {
  if (memory.value().rank() != 2 || hidden.value().rank() != 1 || memory.value().cols() != hidden.size()) {
    throw std::invalid_argument("read_memory: query " + shape_string(hidden.shape()) + " does not match memory " +
                                shape_string(memory.shape()));
  }
  Var<Real> weights = softmax(cosine_rows(memory, hidden));
  return {weights, matmul(weights, memory)};
}

template <typename Real>
Tensor<Real> least_used_indicator(const Tensor<Real>& usage, std::size_t n) {
  if (n < 1 || n > usage.size()) {
    throw std::invalid_argument("least_used_indicator: n = " + std::to_string(n) + " outside [1, " +
                                std::to_string(usage.size()) + "]");
  }
  std::vector<Real> sorted(usage.data().begin(), usage.data().end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n - 1), sorted.end());
  const Real threshold = sorted[n - 1];
  Tensor<Real> out(usage.shape());
  for (std::size_t i = 0; i < usage.size(); ++i) out[i] = usage[i] <= threshold ? Real(1) : Real(0);
  return out;
}

template <typename Real>
Var<Real> compute_write_weights(Var<Real> read_prev, const Tensor<Real>& usage_prev, Var<Real> alpha,
                                std::size_t n) {
  if (read_prev.shape() != usage_prev.shape()) {
    throw std::invalid_argument("compute_write_weights: read and usage shapes differ");
  }
  if (alpha.size() != 1) throw std::invalid_argument("compute_write_weights: alpha must be a scalar");
  Graph<Real>& g = read_prev.graph();
  Var<Real> indicator = g.constant(least_used_indicator(usage_prev, n));
  Var<Real> gate = sigmoid(alpha);
  Var<Real> one = g.constant(Tensor<Real>::scalar(Real(1)));
  return gate * read_prev + (one - gate) * indicator;
}

template <typename Real>
Var<Real> update_usage(Var<Real> usage_prev, Var<Real> read, Var<Real> write, Real gamma) {
  if (usage_prev.shape() != read.shape() || read.shape() != write.shape()) {
    throw std::invalid_argument("update_usage: usage, read and write weights must have equal shapes");
  }
  if (!(gamma >= Real(0) && gamma <= Real(1))) throw std::invalid_argument("update_usage: gamma outside [0, 1]");
  Var<Real> decay = usage_prev.graph().constant(Tensor<Real>::scalar(gamma));
  return decay * usage_prev + read + write;
}

template <typename Real>
Var<Real> write_memory(Var<Real> memory, Var<Real> write, Var<Real> hidden) {
  const Tensor<Real>& m = memory.value();
  if (m.rank() != 2 || write.value().rank() != 1 || hidden.value().rank() != 1 || write.size() != m.rows() ||
      hidden.size() != m.cols()) {
    throw std::invalid_argument("write_memory: memory " + shape_string(m.shape()) + ", write weights " +
                                shape_string(write.shape()) + ", hidden " + shape_string(hidden.shape()));
  }
  return memory + outer(write, hidden);
}

template <typename Real>
MannStepResult<Real> mann_step(ParamStore<Real>& store, const MannParams& params, const MannConfig& config,
                               Var<Real> x, const MannGraphState<Real>& state, bool write_enabled) {
  if (x.value().rank() != 1 || x.size() != config.input_size) {
    throw std::invalid_argument("mann_step: input has shape " + shape_string(x.shape()) + ", expected [" +
                                std::to_string(config.input_size) + "]");
  }
  MannStepResult<Real> result;
  LstmState<Real> controller = controller_step(store, params, x, state.controller);
  ReadResult<Real> read = read_memory(controller.h, state.memory);

  result.out.hidden = controller.h;
  result.out.read = read;
  result.out.output = concat<Real>({controller.h, read.retrieved});
  result.next.controller = controller;
  result.next.read = read.weights;

  if (write_enabled) {
    Graph<Real>& g = x.graph();
    Var<Real> alpha = g.parameter(store, params.gate);
    Var<Real> write = compute_write_weights(state.read, state.usage.value(), alpha, config.truncation_n);
    result.out.write_weights = write;
    result.out.usage = update_usage(state.usage, read.weights, write, static_cast<Real>(config.gamma));
    result.next.memory = write_memory(state.memory, write, controller.h);
    result.next.usage = result.out.usage;
    result.next.write = write;
  } else {
    result.out.write_weights = x.graph().constant(Tensor<Real>(state.read.shape()));
    result.out.usage = state.usage;
    result.next.memory = state.memory;
    result.next.usage = state.usage;
    result.next.write = result.out.write_weights;
  }
  return result;
}

template <typename Real>
Tensor<Real> write_weights_values(const Tensor<Real>& read_prev, const Tensor<Real>& usage_prev, Real alpha,
                                  std::size_t n) {
  Graph<Real> g;
  return compute_write_weights(g.constant(read_prev), usage_prev, g.constant(Tensor<Real>::scalar(alpha)), n)
      .value();
}

template <typename Real>
Tensor<Real> usage_values(const Tensor<Real>& usage_prev, const Tensor<Real>& read, const Tensor<Real>& write,
                          Real gamma) {
  Graph<Real> g;
  return update_usage(g.constant(usage_prev), g.constant(read), g.constant(write), gamma).value();
}

#define MEMVQA_INSTANTIATE_MANN(R)                                                                              \
  template struct MemoryState<R>;                                                                              \
  template struct MannState<R>;                                                                                \
  template struct MannGraphState<R>;                                                                           \
  template void init_mann(ParamStore<R>&, const MannConfig&, const std::string&, std::mt19937_64&);            \
  template LstmState<R> controller_step(ParamStore<R>&, const MannParams&, Var<R>, const LstmState<R>&);       \
  template ReadResult<R> read_memory(Var<R>, Var<R>);                                                          \
  template Tensor<R> least_used_indicator(const Tensor<R>&, std::size_t);                                      \
  template Var<R> compute_write_weights(Var<R>, const Tensor<R>&, Var<R>, std::size_t);                        \
  template Var<R> update_usage(Var<R>, Var<R>, Var<R>, R);                                                     \
  template Var<R> write_memory(Var<R>, Var<R>, Var<R>);                                                        \
  template MannStepResult<R> mann_step(ParamStore<R>&, const MannParams&, const MannConfig&, Var<R>,           \
                                       const MannGraphState<R>&, bool);                                        \
  template Tensor<R> write_weights_values(const Tensor<R>&, const Tensor<R>&, R, std::size_t);                 \
  template Tensor<R> usage_values(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, R);

MEMVQA_INSTANTIATE_MANN(float)
MEMVQA_INSTANTIATE_MANN(double)

}  // namespace memvqa
