#include "memvqa/lstm.hpp"

#include <cmath>
#include <stdexcept>

#include "memvqa/init.hpp"
#include "memvqa/ops.hpp"

namespace memvqa {

template <typename Real>
void init_lstm(ParamStore<Real>& store, const LstmCellParams& cell, const std::string& group, std::mt19937_64& rng) {
  const std::size_t gates = 4 * cell.hidden_size;
  store.add(cell.input_weights(), uniform_fan_in<Real>({gates, cell.input_size}, cell.input_size, rng), group);
  store.add(cell.hidden_weights(), uniform_fan_in<Real>({gates, cell.hidden_size}, cell.hidden_size, rng), group);
  store.add(cell.bias(), uniform_fan_in<Real>({gates}, cell.hidden_size, rng), group);
}

template <typename Real>
void zero_lstm(ParamStore<Real>& store, const LstmCellParams& cell, const std::string& group) {
  const std::size_t gates = 4 * cell.hidden_size;
  store.add(cell.input_weights(), Tensor<Real>({gates, cell.input_size}), group);
  store.add(cell.hidden_weights(), Tensor<Real>({gates, cell.hidden_size}), group);
  store.add(cell.bias(), Tensor<Real>({gates}), group);
}

template <typename Real>
LstmState<Real> lstm_step(ParamStore<Real>& store, const LstmCellParams& cell, Var<Real> x,
                          const LstmState<Real>& prev) {
  const std::size_t H = cell.hidden_size;
  if (x.value().rank() != 1 || x.size() != cell.input_size) {
    throw std::invalid_argument("lstm_step(" + cell.prefix + "): input has shape " + shape_string(x.shape()) +
                                ", expected [" + std::to_string(cell.input_size) + "]");
  }
  if (prev.h.size() != H || prev.c.size() != H) {
    throw std::invalid_argument("lstm_step(" + cell.prefix + "): state size mismatch, expected " +
                                std::to_string(H));
  }
  Graph<Real>& g = x.graph();
  Var<Real> Wx = g.parameter(store, cell.input_weights());
  Var<Real> Wh = g.parameter(store, cell.hidden_weights());
  Var<Real> b = g.parameter(store, cell.bias());
  if (Wx.value().shape() != Shape{4 * H, cell.input_size} || Wh.value().shape() != Shape{4 * H, H} ||
      b.value().shape() != Shape{4 * H}) {
    throw std::invalid_argument("lstm_step(" + cell.prefix + "): parameter shapes inconsistent with cell sizes");
  }

  Var<Real> pre = matmul(Wx, x) + matmul(Wh, prev.h) + b;
  Var<Real> i = sigmoid(slice(pre, 0, H));
  Var<Real> f = sigmoid(slice(pre, H, H));
  Var<Real> o = sigmoid(slice(pre, 2 * H, H));
  Var<Real> cand = tanh(slice(pre, 3 * H, H));
  Var<Real> c = f * prev.c + i * cand;
  Var<Real> h = o * tanh(c);
  return {h, c};
}

template void init_lstm(ParamStore<float>&, const LstmCellParams&, const std::string&, std::mt19937_64&);
template void init_lstm(ParamStore<double>&, const LstmCellParams&, const std::string&, std::mt19937_64&);
template void zero_lstm(ParamStore<float>&, const LstmCellParams&, const std::string&);
template void zero_lstm(ParamStore<double>&, const LstmCellParams&, const std::string&);
template LstmState<float> lstm_step(ParamStore<float>&, const LstmCellParams&, Var<float>, const LstmState<float>&);
template LstmState<double> lstm_step(ParamStore<double>&, const LstmCellParams&, Var<double>,
                                     const LstmState<double>&);

}  // namespace memvqa
