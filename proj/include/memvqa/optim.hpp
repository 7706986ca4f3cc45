#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "memvqa/graph.hpp"

namespace memvqa {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Real>
struct AdamMoments {
  Tensor<Real> first;
  Tensor<Real> second;
};

// One bias-corrected Adam update of a single tensor at step t >= 1.
template <typename Real>
void adam_update(Tensor<Real>& param, const Tensor<Real>& grad, AdamMoments<Real>& moments, double lr,
                 std::size_t t, const AdamOptions& options = {});

// Adam over a whole ParamStore with a learning rate chosen per parameter group.
template <typename Real>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Advances the step counter and updates every parameter; throws
  // TrainingError naming the first parameter with a non-finite gradient.
  void step(ParamStore<Real>& store, const std::function<double(const std::string& group)>& lr_for_group);

  std::size_t steps() const { return t_; }
  void set_steps(std::size_t t) { t_ = t; }
  const AdamOptions& options() const { return options_; }
  std::map<std::string, AdamMoments<Real>>& moments() { return moments_; }
  const std::map<std::string, AdamMoments<Real>>& moments() const { return moments_; }

 private:
  AdamOptions options_;
  std::size_t t_ = 0;
  std::map<std::string, AdamMoments<Real>> moments_;
};

enum class ClipMode { global_norm, per_element };

// Global mode rescales all gradients by max/norm when the L2 norm over every
// parameter exceeds max; per-element mode clamps each entry to [-max, max].
// Returns the pre-clip global norm.
template <typename Real>
double clip_gradients(ParamStore<Real>& store, double max_magnitude, ClipMode mode = ClipMode::global_norm);

template <typename Real>
double gradient_norm(const ParamStore<Real>& store);

struct GradientNoise {
  double eta = 0.01;
  double decay = 0.55;

  // Variance added at a given step: eta / (1 + step)^decay.
  double variance(std::size_t step) const;
};

// Adds N(0, variance(step)) to every gradient entry. The generator is seeded
// from (seed, step) so a step's noise is reproducible on its own.
template <typename Real>
void add_gradient_noise(ParamStore<Real>& store, std::size_t step, std::uint64_t seed,
                        const GradientNoise& schedule = {});

}  // namespace memvqa
