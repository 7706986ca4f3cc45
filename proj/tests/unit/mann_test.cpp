#include <gtest/gtest.h>

#include <random>

#include "memvqa/gradcheck.hpp"
#include "memvqa/mann.hpp"
#include "memvqa/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace memvqa {
namespace {

namespace ref = testing::ref;
namespace oracle = testing::oracle;
using testing::max_abs_diff;
using testing::random_tensor;
using G = Graph<double>;
using V = Var<double>;
using T = Tensor<double>;

T from_mat(const ref::Mat& m) {
  std::vector<double> flat;
  for (const auto& r : m) flat.insert(flat.end(), r.begin(), r.end());
  return T::matrix(m.size(), m[0].size(), flat);
}

TEST(ReadMemory, MatchesOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    T memory = random_tensor({6, 4}, rng), h = random_tensor({4}, rng);
    G g;
    auto r = read_memory(g.constant(h), g.constant(memory));
    const ref::Vec w = oracle::read_weights(ref::to_vec(h), ref::to_mat(memory));
    EXPECT_LT(max_abs_diff(r.weights.value(), w), 1e-12);
    EXPECT_LT(max_abs_diff(r.retrieved.value(), oracle::retrieve(w, ref::to_mat(memory))), 1e-12);
  }
}

TEST(ReadMemory, SharpestOnMatchingSlot) {
  // Orthogonal slots: the query's own slot has cosine 1, the rest 0.
  G g;
  T memory = T::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto r = read_memory(g.constant(T::vector({0, 2, 0})), g.constant(memory));
  const double e = std::exp(1.0);
  EXPECT_NEAR(r.weights.value()[1], e / (e + 2), 1e-15);
  EXPECT_NEAR(r.weights.value()[0], 1 / (e + 2), 1e-15);
  EXPECT_NEAR(r.retrieved.value()[1], e / (e + 2), 1e-15);
}

TEST(ReadMemory, ShapeMismatchThrows) {
  G g;
  EXPECT_THROW(read_memory(g.constant(T({3})), g.constant(T({4, 5}))), std::invalid_argument);
}

TEST(WriteWeights, ClosedFormExample) {
  T usage = T::vector({3, 1, 2, 4});
  EXPECT_EQ(least_used_indicator(usage, 2).values(), (std::vector<double>{0, 1, 1, 0}));
  T w = write_weights_values(T({4}), usage, 0.0, 2);
  EXPECT_EQ(w.values(), (std::vector<double>{0, 0.5, 0.5, 0}));
}

TEST(WriteWeights, TiesAtThresholdAllSelected) {
  EXPECT_EQ(least_used_indicator(T::vector({1, 1, 1, 2}), 1).values(), (std::vector<double>{1, 1, 1, 0}));
  EXPECT_EQ(least_used_indicator(T::vector({0, 0, 0, 0}), 2).values(), (std::vector<double>{1, 1, 1, 1}));
  EXPECT_THROW(least_used_indicator(T::vector({1, 2}), 0), std::invalid_argument);
  EXPECT_THROW(least_used_indicator(T::vector({1, 2}), 3), std::invalid_argument);
}

TEST(WriteWeights, GateMixesPreviousRead) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    T read = softmax_values(random_tensor({5}, rng)), usage = random_tensor({5}, rng);
    const double alpha = std::normal_distribution<double>()(rng);
    T w = write_weights_values(read, usage, alpha, 2);
    EXPECT_LT(max_abs_diff(w, oracle::write_weights(ref::to_vec(read), ref::to_vec(usage), alpha, 2)), 1e-15);
  }
}

TEST(Usage, DecayExample) {
  T u = usage_values(T::vector({1, 1}), T({2}), T({2}), 0.5);
  EXPECT_EQ(u.values(), (std::vector<double>{0.5, 0.5}));
  EXPECT_THROW(usage_values(T::vector({1, 1}), T({2}), T({2}), 1.5), std::invalid_argument);
}

TEST(WriteMemory, MatchesOracle) {
  std::mt19937_64 rng(3);
  T memory = random_tensor({4, 3}, rng), w = random_tensor({4}, rng), h = random_tensor({3}, rng);
  G g;
  T out = write_memory(g.constant(memory), g.constant(w), g.constant(h)).value();
  EXPECT_LT(max_abs_diff(out, from_mat(oracle::write(ref::to_mat(memory), ref::to_vec(w), ref::to_vec(h)))), 1e-15);
  EXPECT_THROW(write_memory(g.constant(memory), g.constant(h), g.constant(h)), std::invalid_argument);
}

TEST(Recurrence, TwentyStepTraceMatchesOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t S = 6, W = 4, n = 2;
    const double alpha = 0.3 * trial - 1.0, gamma = 0.9;
    T memory = random_tensor({S, W}, rng);
    std::vector<ref::Vec> hs;
    for (int t = 0; t < 20; ++t) hs.push_back(ref::to_vec(random_tensor({W}, rng)));
    auto expected = oracle::memory_trace(hs, ref::to_mat(memory), alpha, n, gamma);

    G g;
    V m = g.constant(memory), read_prev = g.constant(T({S})), usage_prev = g.constant(T({S}));
    V a = g.constant(T::scalar(alpha));
    for (std::size_t t = 0; t < hs.size(); ++t) {
      V h = g.constant(T::vector(hs[t]));
      auto r = read_memory(h, m);
      V w = compute_write_weights(read_prev, usage_prev.value(), a, n);
      V u = update_usage(usage_prev, r.weights, w, gamma);
      m = write_memory(m, w, h);
      EXPECT_LT(max_abs_diff(r.weights.value(), expected[t].read), 1e-12) << t;
      EXPECT_LT(max_abs_diff(r.retrieved.value(), expected[t].retrieved), 1e-12) << t;
      EXPECT_LT(max_abs_diff(w.value(), expected[t].write), 1e-12) << t;
      EXPECT_LT(max_abs_diff(u.value(), expected[t].usage), 1e-12) << t;
      EXPECT_LT(max_abs_diff(m.value(), from_mat(expected[t].memory)), 1e-12) << t;
      read_prev = r.weights;
      usage_prev = u;
    }
  }
}

struct Mann {
  MannConfig config;
  MannParams params;
  ParamStore<double> store;
  Mann(std::size_t input, std::size_t hidden, std::size_t slots, std::uint64_t seed) {
    config.input_size = input;
    config.hidden_size = hidden;
    config.slots = slots;
    config.truncation_n = 2;
    config.gamma = 0.95;
    config.memory_init_kind = MemoryInit::uniform;
    config.memory_seed = seed;
    params = MannParams::from_config(config);
    std::mt19937_64 rng(seed);
    init_mann(store, config, "answer", rng);
  }
};

TEST(MannStep, FiveStepTraceMatchesOracle) {
  Mann mann(5, 4, 6, 21);
  mann.store.value(mann.params.gate)[0] = 0.4;
  std::mt19937_64 rng(22);
  std::vector<T> xs;
  for (int t = 0; t < 5; ++t) xs.push_back(random_tensor({5}, rng));

  const auto& cell = mann.params.controller;
  const ref::Mat wx = ref::to_mat(mann.store.value(cell.input_weights()));
  const ref::Mat wh = ref::to_mat(mann.store.value(cell.hidden_weights()));
  const ref::Vec b = ref::to_vec(mann.store.value(cell.bias()));
  MannState<double> init = MannState<double>::initial(mann.config);
  ref::Vec h(4, 0.0), c(4, 0.0);
  std::vector<ref::Vec> hs;
  for (const T& x : xs) {
    auto out = oracle::lstm(wx, wh, b, ref::to_vec(x), h, c);
    h = out.h;
    c = out.c;
    hs.push_back(h);
  }
  auto expected = oracle::memory_trace(hs, ref::to_mat(init.memory.memory), 0.4, 2, 0.95);

  G g;
  auto state = MannGraphState<double>::constant(g, init);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    auto step = mann_step(mann.store, mann.params, mann.config, g.constant(xs[t]), state);
    ref::Vec o = hs[t];
    o.insert(o.end(), expected[t].retrieved.begin(), expected[t].retrieved.end());
    EXPECT_LT(max_abs_diff(step.out.output.value(), o), 1e-12) << t;
    EXPECT_LT(max_abs_diff(step.out.read.weights.value(), expected[t].read), 1e-12) << t;
    EXPECT_LT(max_abs_diff(step.out.write_weights.value(), expected[t].write), 1e-12) << t;
    EXPECT_LT(max_abs_diff(step.out.usage.value(), expected[t].usage), 1e-12) << t;
    EXPECT_LT(max_abs_diff(step.next.memory.value(), from_mat(expected[t].memory)), 1e-12) << t;
    state = step.next;
  }
}

TEST(MannStep, SameInputTwiceReadsDifferentMemory) {
  Mann mann(3, 4, 5, 31);
  G g;
  auto state = MannGraphState<double>::constant(g, MannState<double>::initial(mann.config));
  V x = g.constant(T::vector({0.5, -0.2, 0.9}));
  auto first = mann_step(mann.store, mann.params, mann.config, x, state);
  // Restore the controller state so only the memory differs.
  auto second_state = first.next;
  second_state.controller = state.controller;
  auto second = mann_step(mann.store, mann.params, mann.config, x, second_state);
  EXPECT_EQ(first.out.hidden.value(), second.out.hidden.value());
  EXPECT_GT(max_abs_diff(first.out.read.retrieved.value(), second.out.read.retrieved.value()), 1e-6);
}

TEST(MannStep, WritesDisabledLeaveMemoryUntouched) {
  Mann mann(3, 4, 5, 32);
  G g;
  MannState<double> init = MannState<double>::initial(mann.config);
  auto state = MannGraphState<double>::constant(g, init);
  auto step = mann_step(mann.store, mann.params, mann.config, g.constant(T::vector({1, 2, 3})), state, false);
  EXPECT_EQ(step.next.memory.value(), init.memory.memory);
  EXPECT_EQ(step.next.usage.value(), init.memory.usage);
}

TEST(MannStep, ThreeStepGradientCheck) {
  Mann mann(3, 4, 4, 41);
  mann.store.value(mann.params.gate)[0] = 0.2;
  std::mt19937_64 rng(42);
  std::vector<T> xs;
  for (int t = 0; t < 3; ++t) xs.push_back(random_tensor({3}, rng));
  T proj = random_tensor({8}, rng);
  MannState<double> init = MannState<double>::initial(mann.config);
  auto loss = [&](G& g) {
    auto state = MannGraphState<double>::constant(g, init);
    V total = g.constant(T::scalar(0));
    for (const T& x : xs) {
      auto step = mann_step(mann.store, mann.params, mann.config, g.constant(x), state);
      total = total + sum(step.out.output * g.constant(proj));
      state = step.next;
    }
    return total;
  };
  GradientCheckReport r = gradient_check_parameters<double>(mann.store, loss, 1e-6);
  EXPECT_TRUE(r.passed()) << r.max_relative_error;
  // The gate reaches the loss through memory written at step 1 and read later.
  double gate_grad = 0;
  for (const auto& e : r.entries)
    if (e.parameter == mann.params.gate) gate_grad = e.analytic;
  EXPECT_NE(gate_grad, 0.0);
}

TEST(MemoryInit, UniformIsSeededAndDistinct) {
  MannConfig config;
  config.memory_init_kind = MemoryInit::uniform;
  config.memory_seed = 5;
  auto a = MemoryState<double>::initial(config);
  auto b = MemoryState<double>::initial(config);
  EXPECT_EQ(a.memory, b.memory);
  config.memory_seed = 6;
  EXPECT_NE(MemoryState<double>::initial(config).memory, a.memory);
  auto r0 = a.memory.row(0), r1 = a.memory.row(1);
  EXPECT_FALSE(std::equal(r0.begin(), r0.end(), r1.begin()));
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden_size));
  for (double v : a.memory.values()) EXPECT_LE(std::abs(v), bound);
}

TEST(MemoryInit, ConstantFill) {
  MannConfig config;
  config.memory_init_kind = MemoryInit::constant;
  auto s = MemoryState<double>::initial(config);
  for (double v : s.memory.values()) EXPECT_EQ(v, config.memory_init);
  EXPECT_EQ(s.usage.values(), std::vector<double>(config.slots, 0.0));
}

}  // namespace
}  // namespace memvqa
