#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "memvqa/lstm.hpp"

namespace memvqa {

// constant: every slot equals memory_init. uniform: slots drawn from
// U[-1/sqrt(W), 1/sqrt(W)] with memory_seed, so slots start distinguishable.
enum class MemoryInit { constant, uniform };

struct MannConfig {
  std::size_t input_size = 128;  // |x| = Dv + Dq
  std::size_t hidden_size = 64;  // controller width W = slot width
  std::size_t slots = 128;       // S
  double gamma = 1e-4;           // usage decay
  std::size_t truncation_n = 4;  // least-used set size
  double memory_init = 1e-6;     // constant fill of fresh slots
  MemoryInit memory_init_kind = MemoryInit::constant;
  std::uint64_t memory_seed = 0;

  void validate() const;
};

struct MannParams {
  LstmCellParams controller;
  std::string gate = "mann.alpha";  // scalar alpha; sigma(alpha) mixes the write weights

  static MannParams from_config(const MannConfig& config);
};

// External memory plus addressing bookkeeping, as plain values between steps.
template <typename Real>
struct MemoryState {
  Tensor<Real> memory;  // [S, W]
  Tensor<Real> usage;   // w^u, [S]
  Tensor<Real> read;    // w^r of the last step, [S]
  Tensor<Real> write;   // w^w of the last step, [S]

  // Slots follow config.memory_init_kind; read/usage start at zero so the
  // first write is driven by the (all-tied) least-used indicator.
  static MemoryState initial(const MannConfig& config);
};

// Memory state together with the controller's recurrent state.
template <typename Real>
struct MannState {
  MemoryState<Real> memory;
  Tensor<Real> controller_h;
  Tensor<Real> controller_c;

  static MannState initial(const MannConfig& config);
};

// The same state bound into a graph so gradients can flow across a rollout.
template <typename Real>
struct MannGraphState {
  LstmState<Real> controller;
  Var<Real> memory;
  Var<Real> read;
  Var<Real> write;
  Var<Real> usage;

  static MannGraphState constant(Graph<Real>& graph, const MannState<Real>& state);
  MannState<Real> values() const;
};

template <typename Real>
struct ReadResult {
  Var<Real> weights;    // w^r
  Var<Real> retrieved;  // r
};

template <typename Real>
struct MannStepOutput {
  Var<Real> output;  // o = [h, r]
  Var<Real> hidden;
  ReadResult<Real> read;
  Var<Real> write_weights;
  Var<Real> usage;
};

template <typename Real>
struct MannStepResult {
  MannStepOutput<Real> out;
  MannGraphState<Real> next;
};

template <typename Real>
void init_mann(ParamStore<Real>& store, const MannConfig& config, const std::string& group, std::mt19937_64& rng);

template <typename Real>
LstmState<Real> controller_step(ParamStore<Real>& store, const MannParams& params, Var<Real> x,
                                const LstmState<Real>& prev);

// w^r = softmax_i cos(h, M(i)), r = sum_i w^r(i) M(i).
template <typename Real>
ReadResult<Real> read_memory(Var<Real> hidden, Var<Real> memory);

// 1(u <= n-th smallest of u); ties at the threshold are all selected.
template <typename Real>
Tensor<Real> least_used_indicator(const Tensor<Real>& usage, std::size_t n);

// w^w = s(alpha) w^r_prev + (1 - s(alpha)) 1(u_prev <= m(u_prev, n)).
// The indicator is a constant of the graph.
template <typename Real>
Var<Real> compute_write_weights(Var<Real> read_prev, const Tensor<Real>& usage_prev, Var<Real> alpha,
                                std::size_t n);

// w^u = gamma w^u_prev + w^r + w^w.
template <typename Real>
Var<Real> update_usage(Var<Real> usage_prev, Var<Real> read, Var<Real> write, Real gamma);

// M(i) <- M(i) + w^w(i) h.
template <typename Real>
Var<Real> write_memory(Var<Real> memory, Var<Real> write, Var<Real> hidden);

// One step: controller, read from the pre-write memory, write weights from
// the previous step's read and usage, memory write, usage update.
// With writes disabled the memory and usage are carried through unchanged.
template <typename Real>
MannStepResult<Real> mann_step(ParamStore<Real>& store, const MannParams& params, const MannConfig& config,
                               Var<Real> x, const MannGraphState<Real>& state, bool write_enabled = true);

// Value-level conveniences over the graph ops.
template <typename Real>
Tensor<Real> write_weights_values(const Tensor<Real>& read_prev, const Tensor<Real>& usage_prev, Real alpha,
                                  std::size_t n);
template <typename Real>
Tensor<Real> usage_values(const Tensor<Real>& usage_prev, const Tensor<Real>& read, const Tensor<Real>& write,
                          Real gamma);

}  // namespace memvqa
