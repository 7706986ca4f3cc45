#include "memvqa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace memvqa {

double relative_error(double analytic, double numeric, double floor) {
  const double diff = std::abs(analytic - numeric);
  if (diff == 0.0) return 0.0;
  return diff / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace {

void add_entry(GradientCheckReport& report, GradientCheckEntry entry, const GradientCheckOptions& options) {
  // NaN compares false, so test the pass condition rather than the failure.
  entry.relative_error = relative_error(entry.analytic, entry.numeric, options.magnitude_floor);
  entry.flagged = !(entry.relative_error < options.tolerance);
  if (entry.flagged) ++report.flagged;
  report.max_relative_error = std::max(report.max_relative_error, entry.relative_error);
  report.entries.push_back(std::move(entry));
}

template <typename Real>
Real evaluate(const ScalarFunction<Real>& f, const Tensor<Real>& point) {
  Graph<Real> g;
  Var<Real> out = f(g, g.constant(point));
  return out.value().item();
}

}  // namespace

template <typename Real>
GradientCheckReport gradient_check(const ScalarFunction<Real>& f, const Tensor<Real>& point, Real step,
                                   const GradientCheckOptions& options) {
  if (!(step > Real(0))) throw std::invalid_argument("gradient_check: step must be positive");
  Tensor<Real> analytic;
  {
    Graph<Real> g;
    Var<Real> x = g.variable(point);
    Var<Real> out = f(g, x);
    g.backward(out);
    analytic = g.grad(x);
  }
  GradientCheckReport report;
  Tensor<Real> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const Real up = evaluate(f, probe);
    probe[i] = point[i] - step;
    const Real down = evaluate(f, probe);
    probe[i] = point[i];
    GradientCheckEntry e;
    e.index = i;
    e.analytic = analytic[i];
    e.numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * static_cast<double>(step));
    add_entry(report, std::move(e), options);
  }
  return report;
}

template <typename Real>
GradientCheckReport gradient_check_parameters(ParamStore<Real>& store,
                                              const std::function<Var<Real>(Graph<Real>&)>& f, Real step,
                                              const std::vector<std::string>& names,
                                              const GradientCheckOptions& options) {
  if (!(step > Real(0))) throw std::invalid_argument("gradient_check: step must be positive");
  const std::vector<std::string>& targets = names.empty() ? store.names() : names;
  store.zero_grad();
  {
    Graph<Real> g;
    Var<Real> out = f(g);
    g.backward(out);
  }
  GradientCheckReport report;
  for (const auto& name : targets) {
    const Tensor<Real> analytic = store.grad(name);
    Tensor<Real>& value = store.value(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const Real original = value[i];
      value[i] = original + step;
      Real up;
      {
        Graph<Real> g;
        up = f(g).value().item();
      }
      value[i] = original - step;
      Real down;
      {
        Graph<Real> g;
        down = f(g).value().item();
      }
      value[i] = original;
      GradientCheckEntry e;
      e.parameter = name;
      e.index = i;
      e.analytic = analytic[i];
      e.numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * static_cast<double>(step));
      add_entry(report, std::move(e), options);
    }
  }
  return report;
}

template GradientCheckReport gradient_check(const ScalarFunction<float>&, const Tensor<float>&, float,
                                            const GradientCheckOptions&);
template GradientCheckReport gradient_check(const ScalarFunction<double>&, const Tensor<double>&, double,
                                            const GradientCheckOptions&);
template GradientCheckReport gradient_check_parameters(ParamStore<float>&,
                                                       const std::function<Var<float>(Graph<float>&)>&, float,
                                                       const std::vector<std::string>&,
                                                       const GradientCheckOptions&);
template GradientCheckReport gradient_check_parameters(ParamStore<double>&,
                                                       const std::function<Var<double>(Graph<double>&)>&, double,
                                                       const std::vector<std::string>&,
                                                       const GradientCheckOptions&);

}  // namespace memvqa
