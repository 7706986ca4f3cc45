#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "memvqa/graph.hpp"

namespace memvqa {

// Names of one LSTM cell's parameters inside a ParamStore. Gates are packed
// in the order input, forget, output, candidate:
//   input_weights  [4H, in], hidden_weights [4H, H], bias [4H].
struct LstmCellParams {
  std::string prefix;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;

  std::string input_weights() const { return prefix + ".W_x"; }
  std::string hidden_weights() const { return prefix + ".W_h"; }
  std::string bias() const { return prefix + ".b"; }
};

template <typename Real>
struct LstmState {
  Var<Real> h;
  Var<Real> c;
};

// Registers the cell's tensors with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
// entries; the bias uses the hidden fan-in.
template <typename Real>
void init_lstm(ParamStore<Real>& store, const LstmCellParams& cell, const std::string& group, std::mt19937_64& rng);

template <typename Real>
void zero_lstm(ParamStore<Real>& store, const LstmCellParams& cell, const std::string& group);

// Standard four-gate cell without peepholes:
//   i = s(W_i x + U_i h + b_i), f = s(...), o = s(...), g = tanh(...)
//   c' = f * c + i * g,  h' = o * tanh(c')
template <typename Real>
LstmState<Real> lstm_step(ParamStore<Real>& store, const LstmCellParams& cell, Var<Real> x,
                          const LstmState<Real>& prev);

}  // namespace memvqa
