#pragma once

#include <cstddef>
#include <vector>

#include "memvqa/graph.hpp"

namespace memvqa {

// Differentiable primitives. Every model equation is composed from these.
//
// Elementwise ops broadcast the right operand when it is a scalar ({1}) or,
// for a matrix left operand, a row vector whose length equals the column
// count. A scalar left operand broadcasts over a larger right operand.

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b);
template <typename Real>
Var<Real> sub(Var<Real> a, Var<Real> b);
template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b);

// [m,k]x[k,n], [m,k]x[k] or [k]x[k,n].
template <typename Real>
Var<Real> matmul(Var<Real> a, Var<Real> b);
// a * b^T for matrices [m,k] and [n,k].
template <typename Real>
Var<Real> matmul_nt(Var<Real> a, Var<Real> b);
// Column vector times row vector: [m] x [n] -> [m,n].
template <typename Real>
Var<Real> outer(Var<Real> a, Var<Real> b);

template <typename Real>
Var<Real> tanh(Var<Real> x);
template <typename Real>
Var<Real> sigmoid(Var<Real> x);

// Softmax over a vector, computed with max subtraction.
template <typename Real>
Var<Real> softmax(Var<Real> x);

template <typename Real>
Var<Real> concat(const std::vector<Var<Real>>& parts);
// Stack equal-length vectors into the rows of a matrix.
template <typename Real>
Var<Real> stack_rows(const std::vector<Var<Real>>& rows);
template <typename Real>
Var<Real> slice(Var<Real> x, std::size_t begin, std::size_t length);
template <typename Real>
Var<Real> row(Var<Real> matrix, std::size_t index);

// Column means of a matrix: [n,d] -> [d].
template <typename Real>
Var<Real> mean_rows(Var<Real> x);
template <typename Real>
Var<Real> sum(Var<Real> x);

// Cosine similarity of every row of a [s,w] matrix with a [w] query.
// A zero-norm row or query scores 0 and passes no gradient.
template <typename Real>
Var<Real> cosine_rows(Var<Real> matrix, Var<Real> query);

// -log(max(p[index], floor)); the gradient vanishes below the floor.
template <typename Real>
Var<Real> neg_log_pick(Var<Real> probs, std::size_t index, Real floor);

template <typename Real>
Var<Real> operator+(Var<Real> a, Var<Real> b) {
  return add(a, b);
}
template <typename Real>
Var<Real> operator-(Var<Real> a, Var<Real> b) {
  return sub(a, b);
}
template <typename Real>
Var<Real> operator*(Var<Real> a, Var<Real> b) {
  return mul(a, b);
}

// Plain-value helpers shared by model code and tests.
template <typename Real>
Tensor<Real> softmax_values(const Tensor<Real>& x);
template <typename Real>
Real cosine_similarity(std::span<const Real> a, std::span<const Real> b);

}  // namespace memvqa
