#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "memvqa/graph.hpp"

namespace memvqa {

struct GradientCheckOptions {
  double tolerance = 1e-4;
  // Denominator floor for the relative error so entries whose true gradient
  // is ~0 are judged on absolute error instead of roundoff noise.
  double magnitude_floor = 1e-6;
};

struct GradientCheckEntry {
  std::string parameter;  // empty for the free-input variant
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double relative_error = 0;
  bool flagged = false;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> entries;
  double max_relative_error = 0;
  std::size_t flagged = 0;

  bool passed() const { return flagged == 0; }
};

double relative_error(double analytic, double numeric, double floor);

template <typename Real>
using ScalarFunction = std::function<Var<Real>(Graph<Real>&, Var<Real>)>;

// Central-difference check of d f / d point. f must return a scalar node.
template <typename Real>
GradientCheckReport gradient_check(const ScalarFunction<Real>& f, const Tensor<Real>& point, Real step,
                                   const GradientCheckOptions& options = {});

// Same check against every entry of the named parameters (all when empty).
// f builds the loss from scratch on each call, reading values from store.
template <typename Real>
GradientCheckReport gradient_check_parameters(ParamStore<Real>& store,
                                              const std::function<Var<Real>(Graph<Real>&)>& f, Real step,
                                              const std::vector<std::string>& names = {},
                                              const GradientCheckOptions& options = {});

}  // namespace memvqa
