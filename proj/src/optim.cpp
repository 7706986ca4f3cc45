#include "memvqa/optim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace memvqa {

template <typename Real>
void adam_update(Tensor<Real>& param, const Tensor<Real>& grad, AdamMoments<Real>& moments, double lr,
                 std::size_t t, const AdamOptions& options) {
  if (t < 1) throw std::invalid_argument("adam_update: step must be >= 1");
  if (param.shape() != grad.shape()) throw std::invalid_argument("adam_update: gradient shape mismatch");
  if (moments.first.shape() != param.shape()) moments.first = Tensor<Real>(param.shape());
  if (moments.second.shape() != param.shape()) moments.second = Tensor<Real>(param.shape());
  const Real b1 = static_cast<Real>(options.beta1);
  const Real b2 = static_cast<Real>(options.beta2);
  const Real step_size = static_cast<Real>(lr / (1.0 - std::pow(options.beta1, static_cast<double>(t))));
  const Real inv_c2 = static_cast<Real>(1.0 / (1.0 - std::pow(options.beta2, static_cast<double>(t))));
  const Real eps = static_cast<Real>(options.epsilon);
  Real* p = param.data().data();
  const Real* g = grad.data().data();
  Real* m = moments.first.data().data();
  Real* v = moments.second.data().data();
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (Real(1) - b1) * g[i];
    v[i] = b2 * v[i] + (Real(1) - b2) * g[i] * g[i];
    p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
  }
}

template <typename Real>
void Adam<Real>::step(ParamStore<Real>& store, const std::function<double(const std::string&)>& lr_for_group) {
  for (const auto& name : store.names()) {
    if (!store.grad(name).all_finite()) throw TrainingError("non-finite gradient for parameter '" + name + "'");
  }
  ++t_;
  for (const auto& name : store.names()) {
    adam_update(store.value(name), store.grad(name), moments_[name], lr_for_group(store.group(name)), t_, options_);
  }
}

template <typename Real>
double gradient_norm(const ParamStore<Real>& store) {
  double total = 0;
  for (const auto& name : store.names()) {
    for (Real g : store.grad(name).data()) total += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(total);
}

template <typename Real>
double clip_gradients(ParamStore<Real>& store, double max_magnitude, ClipMode mode) {
  if (!(max_magnitude > 0)) throw std::invalid_argument("clip_gradients: max magnitude must be positive");
  const double norm = gradient_norm(store);
  if (mode == ClipMode::per_element) {
    const Real bound = static_cast<Real>(max_magnitude);
    for (const auto& name : store.names()) {
      for (Real& g : store.grad(name).data()) g = std::clamp(g, -bound, bound);
    }
    return norm;
  }
  if (norm > max_magnitude) {
    const double scale = max_magnitude / norm;
    for (const auto& name : store.names()) {
      for (Real& g : store.grad(name).data()) g = static_cast<Real>(g * scale);
    }
  }
  return norm;
}

double GradientNoise::variance(std::size_t step) const {
  return eta / std::pow(1.0 + static_cast<double>(step), decay);
}

template <typename Real>
void add_gradient_noise(ParamStore<Real>& store, std::size_t step, std::uint64_t seed,
                        const GradientNoise& schedule) {
  if (step < 1) throw std::invalid_argument("add_gradient_noise: step must be >= 1");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), 0x6e6f6973u};
  std::mt19937 rng(seq);
  std::normal_distribution<Real> noise(Real(0), static_cast<Real>(std::sqrt(schedule.variance(step))));
  for (const auto& name : store.names()) {
    for (Real& g : store.grad(name).data()) g += noise(rng);
  }
}

#define MEMVQA_INSTANTIATE_OPTIM(R)                                                                            \
  template void adam_update(Tensor<R>&, const Tensor<R>&, AdamMoments<R>&, double, std::size_t,              \
                            const AdamOptions&);                                                             \
  template class Adam<R>;                                                                                    \
  template double clip_gradients(ParamStore<R>&, double, ClipMode);                                          \
  template double gradient_norm(const ParamStore<R>&);                                                       \
  template void add_gradient_noise(ParamStore<R>&, std::size_t, std::uint64_t, const GradientNoise&);

MEMVQA_INSTANTIATE_OPTIM(float)
MEMVQA_INSTANTIATE_OPTIM(double)

}  // namespace memvqa
