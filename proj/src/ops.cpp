#include "memvqa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

namespace memvqa {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

namespace {

template <typename Real>
using RowMajor = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Real>
Eigen::Map<RowMajor<Real>> mat_map(Real* p, std::size_t rows, std::size_t cols) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename Real>
Eigen::Map<const RowMajor<Real>> cmat_map(const Real* p, std::size_t rows, std::size_t cols) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                              shape_string(b));
}

// How operand b is indexed when broadcast against an output of a's shape.
enum class Broadcast { same, scalar, row };

Broadcast broadcast_kind(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::same;
  if (shape_size(b) == 1) return Broadcast::scalar;
  if (a.size() == 2 && b.size() == 1 && a[1] == b[0]) return Broadcast::row;
  shape_error(op, a, b);
}

inline std::size_t bindex(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::same:
      return i;
    case Broadcast::scalar:
      return 0;
    case Broadcast::row:
      return i % cols;
  }
  return i;
}

enum class Elementwise { add, sub, mul };

template <typename Real>
Var<Real> elementwise(Elementwise kind, Var<Real> a, Var<Real> b) {
  static constexpr const char* names[] = {"add", "sub", "mul"};
  const char* op = names[static_cast<int>(kind)];
  // A scalar on the left broadcasts over the right operand.
  bool swapped = false;
  if (a.size() == 1 && b.size() > 1) {
    std::swap(a, b);
    swapped = true;
  }
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  const Broadcast bk = broadcast_kind(op, av.shape(), bv.shape());
  const std::size_t cols = av.cols();
  Tensor<Real> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real x = av[i];
    const Real y = bv[bindex(bk, i, cols)];
    switch (kind) {
      case Elementwise::add:
        out[i] = x + y;
        break;
      case Elementwise::sub:
        out[i] = swapped ? y - x : x - y;
        break;
      case Elementwise::mul:
        out[i] = x * y;
        break;
    }
  }
  auto backward = [kind, bk, cols, swapped](const Tensor<Real>&, const Tensor<Real>& g,
                                            std::span<const Tensor<Real>* const> in,
                                            std::span<Tensor<Real>* const> grads) {
    const Tensor<Real>& x = *in[0];
    const Tensor<Real>& y = *in[1];
    // Sign of each operand for subtraction; operand 0 is the full-size one.
    const Real sa = (kind == Elementwise::sub && swapped) ? Real(-1) : Real(1);
    const Real sb = (kind == Elementwise::sub && !swapped) ? Real(-1) : Real(1);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t j = bindex(bk, i, cols);
      if (grads[0]) {
        (*grads[0])[i] += kind == Elementwise::mul ? g[i] * y[j] : sa * g[i];
      }
      if (grads[1]) {
        (*grads[1])[j] += kind == Elementwise::mul ? g[i] * x[i] : sb * g[i];
      }
    }
  };
  return a.graph().record(op, std::move(out), {a, b}, backward);
}

}  // namespace

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  return elementwise(Elementwise::add, a, b);
}

template <typename Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  return elementwise(Elementwise::sub, a, b);
}

template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  return elementwise(Elementwise::mul, a, b);
}

template <typename Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  // Treat vectors as [1,k] (left) or [k,1] (right) and remember the output rank.
  const bool a_vec = av.rank() == 1;
  const bool b_vec = bv.rank() == 1;
  if (av.rank() > 2 || bv.rank() > 2 || (a_vec && b_vec)) shape_error("matmul", av.shape(), bv.shape());
  const std::size_t m = a_vec ? 1 : av.shape()[0];
  const std::size_t k = a_vec ? av.shape()[0] : av.shape()[1];
  const std::size_t kb = bv.shape()[0];
  const std::size_t n = b_vec ? 1 : bv.shape()[1];
  if (k != kb) shape_error("matmul", av.shape(), bv.shape());

  Shape out_shape = a_vec ? Shape{n} : (b_vec ? Shape{m} : Shape{m, n});
  Tensor<Real> out(out_shape);
  mat_map(out.data().data(), m, n).noalias() = cmat_map(av.data().data(), m, k) * cmat_map(bv.data().data(), k, n);
  auto backward = [m, k, n](const Tensor<Real>&, const Tensor<Real>& g, std::span<const Tensor<Real>* const> in,
                            std::span<Tensor<Real>* const> grads) {
    const auto A = cmat_map(in[0]->data().data(), m, k);
    const auto B = cmat_map(in[1]->data().data(), k, n);
    const auto G = cmat_map(g.data().data(), m, n);
    if (grads[0]) mat_map(grads[0]->data().data(), m, k).noalias() += G * B.transpose();
    if (grads[1]) mat_map(grads[1]->data().data(), k, n).noalias() += A.transpose() * G;
  };
  return a.graph().record("matmul", std::move(out), {a, b}, backward);
}

template <typename Real>
Var<Real> matmul_nt(Var<Real> a, Var<Real> b) {
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[1]) {
    shape_error("matmul_nt", av.shape(), bv.shape());
  }
  const std::size_t m = av.shape()[0];
  const std::size_t k = av.shape()[1];
  const std::size_t n = bv.shape()[0];
  Tensor<Real> out({m, n});
  mat_map(out.data().data(), m, n).noalias() =
      cmat_map(av.data().data(), m, k) * cmat_map(bv.data().data(), n, k).transpose();
  auto backward = [m, k, n](const Tensor<Real>&, const Tensor<Real>& g, std::span<const Tensor<Real>* const> in,
                            std::span<Tensor<Real>* const> grads) {
    const auto A = cmat_map(in[0]->data().data(), m, k);
    const auto B = cmat_map(in[1]->data().data(), n, k);
    const auto G = cmat_map(g.data().data(), m, n);
    if (grads[0]) mat_map(grads[0]->data().data(), m, k).noalias() += G * B;
    if (grads[1]) mat_map(grads[1]->data().data(), n, k).noalias() += G.transpose() * A;
  };
  return a.graph().record("matmul_nt", std::move(out), {a, b}, backward);
}

template <typename Real>
Var<Real> outer(Var<Real> a, Var<Real> b) {
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  if (av.rank() != 1 || bv.rank() != 1) shape_error("outer", av.shape(), bv.shape());
  const std::size_t m = av.size();
  const std::size_t n = bv.size();
  Tensor<Real> out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = av[i] * bv[j];
  }
  auto backward = [m, n](const Tensor<Real>&, const Tensor<Real>& g, std::span<const Tensor<Real>* const> in,
                         std::span<Tensor<Real>* const> grads) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const Real gij = g.at(i, j);
        if (grads[0]) (*grads[0])[i] += gij * (*in[1])[j];
        if (grads[1]) (*grads[1])[j] += gij * (*in[0])[i];
      }
    }
  };
  return a.graph().record("outer", std::move(out), {a, b}, backward);
}

template <typename Real>
Var<Real> tanh(Var<Real> x) {
  Tensor<Real> out(x.shape());
  const Tensor<Real>& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  auto backward = [](const Tensor<Real>& y, const Tensor<Real>& g, std::span<const Tensor<Real>* const>,
                     std::span<Tensor<Real>* const> grads) {
    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * (Real(1) - y[i] * y[i]);
  };
  return x.graph().record("tanh", std::move(out), {x}, backward);
}

template <typename Real>
Var<Real> sigmoid(Var<Real> x) {
  Tensor<Real> out(x.shape());
  const Tensor<Real>& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Branch on sign so exp never overflows.
    const Real v = xv[i];
    if (v >= 0) {
      out[i] = Real(1) / (Real(1) + std::exp(-v));
    } else {
      const Real e = std::exp(v);
      out[i] = e / (Real(1) + e);
    }
  }
  auto backward = [](const Tensor<Real>& y, const Tensor<Real>& g, std::span<const Tensor<Real>* const>,
                     std::span<Tensor<Real>* const> grads) {
    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * y[i] * (Real(1) - y[i]);
  };
  return x.graph().record("sigmoid", std::move(out), {x}, backward);
}

template <typename Real>
Tensor<Real> softmax_values(const Tensor<Real>& x) {
  if (x.empty()) throw std::invalid_argument("softmax: empty input");
  Tensor<Real> out(x.shape());
  const Real peak = *std::max_element(x.data().begin(), x.data().end());
  Real total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - peak);
    total += out[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] /= total;
  return out;
}

template <typename Real>
Var<Real> softmax(Var<Real> x) {
  if (x.value().rank() != 1) throw std::invalid_argument("softmax: expects a vector");
  Tensor<Real> out = softmax_values(x.value());
  auto backward = [](const Tensor<Real>& y, const Tensor<Real>& g, std::span<const Tensor<Real>* const>,
                     std::span<Tensor<Real>* const> grads) {
    Real dot = 0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += y[i] * (g[i] - dot);
  };
  return x.graph().record("softmax", std::move(out), {x}, backward);
}

template <typename Real>
Var<Real> concat(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  std::vector<Real> data;
  for (const auto& p : parts) {
    if (p.value().rank() != 1) throw std::invalid_argument("concat: inputs must be vectors");
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  }
  auto backward = [](const Tensor<Real>&, const Tensor<Real>& g, std::span<const Tensor<Real>* const> in,
                     std::span<Tensor<Real>* const> grads) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      const std::size_t n = in[k]->size();
      if (grads[k]) {
        for (std::size_t i = 0; i < n; ++i) (*grads[k])[i] += g[offset + i];
      }
      offset += n;
    }
  };
  return parts.front().graph().record("concat", Tensor<Real>::vector(std::move(data)), parts, backward);
}

template <typename Real>
Var<Real> stack_rows(const std::vector<Var<Real>>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
  const std::size_t width = rows.front().size();
  std::vector<Real> data;
  data.reserve(width * rows.size());
  for (const auto& r : rows) {
    if (r.value().rank() != 1 || r.size() != width) {
      throw std::invalid_argument("stack_rows: rows must be vectors of equal length");
    }
    data.insert(data.end(), r.value().data().begin(), r.value().data().end());
  }
  auto backward = [width](const Tensor<Real>&, const Tensor<Real>& g, std::span<const Tensor<Real>* const> in,
                          std::span<Tensor<Real>* const> grads) {
    for (std::size_t k = 0; k < in.size(); ++k) {
      if (!grads[k]) continue;
      for (std::size_t i = 0; i < width; ++i) (*grads[k])[i] += g[k * width + i];
    }
  };
  return rows.front().graph().record("stack_rows", Tensor<Real>::matrix(rows.size(), width, std::move(data)), rows,
                                     backward);
}

template <typename Real>
Var<Real> slice(Var<Real> x, std::size_t begin, std::size_t length) {
  const Tensor<Real>& xv = x.value();
  if (xv.rank() != 1 || length == 0 || begin + length > xv.size()) {
    throw std::invalid_argument("slice: range [" + std::to_string(begin) + "," + std::to_string(begin + length) +
                                ") invalid for shape " + shape_string(xv.shape()));
  }
  std::vector<Real> data(xv.data().begin() + begin, xv.data().begin() + begin + length);
  auto backward = [begin](const Tensor<Real>&, const Tensor<Real>& g, std::span<const Tensor<Real>* const>,
                          std::span<Tensor<Real>* const> grads) {
    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[begin + i] += g[i];
  };
  return x.graph().record("slice", Tensor<Real>::vector(std::move(data)), {x}, backward);
}

template <typename Real>
Var<Real> row(Var<Real> matrix, std::size_t index) {
  const Tensor<Real>& mv = matrix.value();
  if (mv.rank() != 2 || index >= mv.rows()) {
    throw std::invalid_argument("row: index " + std::to_string(index) + " invalid for shape " +
                                shape_string(mv.shape()));
  }
  const auto r = mv.row(index);
  auto backward = [index](const Tensor<Real>&, const Tensor<Real>& g, std::span<const Tensor<Real>* const>,
                          std::span<Tensor<Real>* const> grads) {
    auto dst = grads[0]->row(index);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  };
  return matrix.graph().record("row", Tensor<Real>::vector(std::vector<Real>(r.begin(), r.end())), {matrix},
                               backward);
}

template <typename Real>
Var<Real> mean_rows(Var<Real> x) {
  const Tensor<Real>& xv = x.value();
  if (xv.rank() != 2) throw std::invalid_argument("mean_rows: expects a matrix");
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  Tensor<Real> out({d});
  for (std::size_t r = 0; r < n; ++r) {
    const auto row_values = xv.row(r);
    for (std::size_t c = 0; c < d; ++c) out[c] += row_values[c];
  }
  for (std::size_t c = 0; c < d; ++c) out[c] /= static_cast<Real>(n);
  auto backward = [n, d](const Tensor<Real>&, const Tensor<Real>& g, std::span<const Tensor<Real>* const>,
                         std::span<Tensor<Real>* const> grads) {
    const Real scale = Real(1) / static_cast<Real>(n);
    for (std::size_t r = 0; r < n; ++r) {
      auto dst = grads[0]->row(r);
      for (std::size_t c = 0; c < d; ++c) dst[c] += g[c] * scale;
    }
  };
  return x.graph().record("mean_rows", std::move(out), {x}, backward);
}

template <typename Real>
Var<Real> sum(Var<Real> x) {
  Real total = 0;
  for (Real v : x.value().data()) total += v;
  auto backward = [](const Tensor<Real>&, const Tensor<Real>& g, std::span<const Tensor<Real>* const>,
                     std::span<Tensor<Real>* const> grads) {
    for (std::size_t i = 0; i < grads[0]->size(); ++i) (*grads[0])[i] += g[0];
  };
  return x.graph().record("sum", Tensor<Real>::scalar(total), {x}, backward);
}

template <typename Real>
Real cosine_similarity(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  Real dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == Real(0) || nb == Real(0)) return Real(0);
  const Real c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, Real(-1), Real(1));
}

template <typename Real>
Var<Real> cosine_rows(Var<Real> matrix, Var<Real> query) {
  const Tensor<Real>& mv = matrix.value();
  const Tensor<Real>& qv = query.value();
  if (mv.rank() != 2 || qv.rank() != 1 || mv.cols() != qv.size()) {
    shape_error("cosine_rows", mv.shape(), qv.shape());
  }
  const std::size_t s = mv.rows();
  Tensor<Real> out({s});
  for (std::size_t i = 0; i < s; ++i) out[i] = cosine_similarity<Real>(mv.row(i), qv.data());

  auto backward = [s](const Tensor<Real>& cos, const Tensor<Real>& g, std::span<const Tensor<Real>* const> in,
                      std::span<Tensor<Real>* const> grads) {
    const Tensor<Real>& M = *in[0];
    const Tensor<Real>& q = *in[1];
    const std::size_t w = q.size();
    Real qn = 0;
    for (Real v : q.data()) qn += v * v;
    qn = std::sqrt(qn);
    if (qn == Real(0)) return;
    for (std::size_t i = 0; i < s; ++i) {
      const auto m = M.row(i);
      Real mn = 0;
      for (Real v : m) mn += v * v;
      mn = std::sqrt(mn);
      if (mn == Real(0) || g[i] == Real(0)) continue;
      // d cos / d q = m/(|m||q|) - cos q/|q|^2, and symmetrically for m.
      if (grads[1]) {
        for (std::size_t k = 0; k < w; ++k) {
          (*grads[1])[k] += g[i] * (m[k] / (mn * qn) - cos[i] * q[k] / (qn * qn));
        }
      }
      if (grads[0]) {
        auto dm = grads[0]->row(i);
        for (std::size_t k = 0; k < w; ++k) dm[k] += g[i] * (q[k] / (mn * qn) - cos[i] * m[k] / (mn * mn));
      }
    }
  };
  return matrix.graph().record("cosine_rows", std::move(out), {matrix, query}, backward);
}

template <typename Real>
Var<Real> neg_log_pick(Var<Real> probs, std::size_t index, Real floor) {
  const Tensor<Real>& pv = probs.value();
  if (pv.rank() != 1 || index >= pv.size()) {
    throw std::invalid_argument("neg_log_pick: index " + std::to_string(index) + " invalid for shape " +
                                shape_string(pv.shape()));
  }
  const Real p = pv[index];
  const bool clamped = !(p > floor);
  const Real value = -std::log(clamped ? floor : p);
  auto backward = [index, clamped](const Tensor<Real>&, const Tensor<Real>& g,
                                   std::span<const Tensor<Real>* const> in, std::span<Tensor<Real>* const> grads) {
    if (clamped) return;
    (*grads[0])[index] += -g[0] / (*in[0])[index];
  };
  return probs.graph().record("neg_log_pick", Tensor<Real>::scalar(value), {probs}, backward);
}

#define MEMVQA_INSTANTIATE_OPS(R)                                                  \
  template Var<R> add(Var<R>, Var<R>);                                             \
  template Var<R> sub(Var<R>, Var<R>);                                             \
  template Var<R> mul(Var<R>, Var<R>);                                             \
  template Var<R> matmul(Var<R>, Var<R>);                                          \
  template Var<R> matmul_nt(Var<R>, Var<R>);                                       \
  template Var<R> outer(Var<R>, Var<R>);                                           \
  template Var<R> tanh(Var<R>);                                                    \
  template Var<R> sigmoid(Var<R>);                                                 \
  template Var<R> softmax(Var<R>);                                                 \
  template Var<R> concat(const std::vector<Var<R>>&);                              \
  template Var<R> stack_rows(const std::vector<Var<R>>&);                          \
  template Var<R> slice(Var<R>, std::size_t, std::size_t);                         \
  template Var<R> row(Var<R>, std::size_t);                                        \
  template Var<R> mean_rows(Var<R>);                                               \
  template Var<R> sum(Var<R>);                                                     \
  template Var<R> cosine_rows(Var<R>, Var<R>);                                     \
  template Var<R> neg_log_pick(Var<R>, std::size_t, R);                            \
  template Tensor<R> softmax_values(const Tensor<R>&);                             \
  template R cosine_similarity(std::span<const R>, std::span<const R>);

MEMVQA_INSTANTIATE_OPS(float)
MEMVQA_INSTANTIATE_OPS(double)

}  // namespace memvqa
