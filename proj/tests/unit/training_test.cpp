#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "memvqa/model.hpp"
#include "memvqa/optim.hpp"
#include "memvqa/synth.hpp"
#include "memvqa/trainer.hpp"
#include "test_util.hpp"

namespace memvqa {
namespace {

using testing::TempDir;
using T = Tensor<double>;

TEST(Adam, MatchesOracleOverTenSteps) {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  T param = T::vector({0.5, -1.0, 2.0});
  AdamMoments<double> moments;
  std::vector<double> p = param.values(), m(3, 0.0), v(3, 0.0);
  for (std::size_t t = 1; t <= 10; ++t) {
    T grad = T::vector({0.1 * static_cast<double>(t), -0.3, std::sin(static_cast<double>(t))});
    adam_update(param, grad, moments, lr, t);
    for (std::size_t i = 0; i < 3; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * grad[i];
      v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
      const double mhat = m[i] / (1 - std::pow(b1, static_cast<double>(t)));
      const double vhat = v[i] / (1 - std::pow(b2, static_cast<double>(t)));
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(param[i], p[i], 1e-12) << "step " << t;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  T param = T::vector({1.0, 1.0});
  AdamMoments<double> moments;
  adam_update(param, T::vector({5.0, -0.01}), moments, 0.001, 1);
  EXPECT_NEAR(param[0], 1.0 - 0.001, 1e-9);
  EXPECT_NEAR(param[1], 1.0 + 0.001, 1e-6);
}

TEST(Adam, StepUsesPerGroupRates) {
  ParamStore<double> store;
  store.add("q", T::vector({0.0}), "question");
  store.add("a", T::vector({0.0}), "answer");
  store.grad("q")[0] = 1.0;
  store.grad("a")[0] = 1.0;
  Adam<double> adam;
  adam.step(store, [](const std::string& group) { return group == "question" ? 0.1 : 0.01; });
  EXPECT_NEAR(store.value("q")[0], -0.1, 1e-9);
  EXPECT_NEAR(store.value("a")[0], -0.01, 1e-9);
  EXPECT_EQ(adam.steps(), 1u);
  store.grad("a")[0] = NAN;
  EXPECT_THROW(adam.step(store, [](const std::string&) { return 0.1; }), TrainingError);
}

TEST(Clip, GlobalNormScalesProportionally) {
  ParamStore<double> store;
  store.add("x", T::vector({0.0, 0.0}));
  store.grad("x")[0] = 3.0;
  store.grad("x")[1] = 4.0;
  EXPECT_DOUBLE_EQ(gradient_norm(store), 5.0);
  clip_gradients(store, 0.1);
  EXPECT_NEAR(store.grad("x")[0], 0.06, 1e-15);
  EXPECT_NEAR(store.grad("x")[1], 0.08, 1e-15);
}

TEST(Clip, SmallGradientsUntouchedAndElementMode) {
  ParamStore<double> store;
  store.add("x", T::vector({0.0, 0.0}));
  store.grad("x")[0] = 0.03;
  store.grad("x")[1] = -0.04;
  clip_gradients(store, 0.1);
  EXPECT_EQ(store.grad("x").values(), (std::vector<double>{0.03, -0.04}));
  store.grad("x")[0] = 3.0;
  store.grad("x")[1] = -4.0;
  clip_gradients(store, 0.1, ClipMode::per_element);
  EXPECT_EQ(store.grad("x").values(), (std::vector<double>{0.1, -0.1}));
}

TEST(GradientNoise, MomentsMatchSchedule) {
  GradientNoise schedule;
  EXPECT_DOUBLE_EQ(schedule.variance(0), 0.01);
  EXPECT_NEAR(schedule.variance(9), 0.01 / std::pow(10.0, 0.55), 1e-15);
  const std::size_t n = 200000, step = 9;
  ParamStore<double> store;
  store.add("x", T({n}));
  add_gradient_noise(store, step, 7, schedule);
  double mean = 0, sq = 0;
  for (double g : store.grad("x").values()) {
    mean += g;
    sq += g * g;
  }
  mean /= n;
  const double var = sq / n - mean * mean, expected = schedule.variance(step);
  EXPECT_NEAR(mean, 0.0, 4 * std::sqrt(expected / n));
  EXPECT_NEAR(var, expected, 4 * expected * std::sqrt(2.0 / n));

  ParamStore<double> again;
  again.add("x", T({n}));
  add_gradient_noise(again, step, 7, schedule);
  EXPECT_EQ(again.grad("x"), store.grad("x"));
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.epochs = 3;
  c.memory_reset = MemoryReset::never;
  c.precision = "f64";
  c.clip_mode = ClipMode::per_element;
  TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"no_such_key", 1}}), std::exception);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"precision", "f16"}}), std::exception);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"truncation_n", 0}}), std::exception);
  TrainConfig partial = TrainConfig::from_json(nlohmann::json{{"epochs", 4}});
  EXPECT_EQ(partial.epochs, 4u);
  EXPECT_EQ(partial.lr_question, TrainConfig().lr_question);
}

// Tiny synthetic task shared by the trainer tests.
class TrainerFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("trainer");
    SynthTaskConfig s;
    s.classes = 6;
    s.question_types = 3;
    s.regions = 3;
    s.feature_width = 8;
    s.train_examples = 60;
    s.test_examples = 30;
    s.seed = 4;
    write_synth_task(s, dir_->path());
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static TrainConfig config() {
    TrainConfig c;
    c.hidden_size = 8;
    c.memory_slots = 8;
    c.epochs = 2;
    c.seed = 5;
    return c;
  }
  static TrainingData data() { return load_training_data(dir_->path(), 100); }
  static Dataset test_split(const TrainingData& d) {
    return load_split(dir_->path(), "test", d.question_vocab, d.answer_vocab);
  }
  static TempDir* dir_;
};

TempDir* TrainerFixture::dir_ = nullptr;

void expect_same_params(const ParamStore<float>& a, const ParamStore<float>& b) {
  ASSERT_EQ(a.names(), b.names());
  for (const auto& name : a.names()) EXPECT_EQ(a.value(name), b.value(name)) << name;
}

TEST_F(TrainerFixture, TrainingIsDeterministic) {
  TrainingData d = data();
  std::ostringstream trace_a, trace_b;
  TrainHooks ha, hb;
  ha.memory_trace = &trace_a;
  hb.memory_trace = &trace_b;
  auto a = train<float>(config(), d, ha);
  auto b = train<float>(config(), d, hb);
  ASSERT_EQ(a.history.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) EXPECT_EQ(a.history[e].to_json().dump(), b.history[e].to_json().dump());
  expect_same_params(a.model.params(), b.model.params());
  EXPECT_EQ(trace_a.str(), trace_b.str());
  EXPECT_FALSE(trace_a.str().empty());
  EXPECT_EQ(a.step, 2 * d.train.labeled_count());
}

TEST_F(TrainerFixture, LearningRatesDecayPerEpoch) {
  TrainConfig c = config();
  c.epochs = 3;
  std::vector<EpochMetrics> seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) { seen.push_back(m); };
  train<float>(c, data(), hooks);
  ASSERT_EQ(seen.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_NEAR(seen[e].lr_q, c.lr_question * std::pow(0.9, static_cast<double>(e)), 1e-12);
    EXPECT_NEAR(seen[e].lr_a, c.lr_answer * std::pow(0.9, static_cast<double>(e)), 1e-12);
    EXPECT_TRUE(std::isfinite(seen[e].loss));
  }
}

TEST_F(TrainerFixture, CheckpointRoundTripIsExact) {
  TrainingData d = data();
  auto ck = train<float>(config(), d);
  TempDir out("ckpt");
  save_checkpoint(ck, out.path());
  EXPECT_EQ(checkpoint_precision(out.path()), "f32");
  auto back = load_checkpoint<float>(out.path());
  expect_same_params(ck.model.params(), back.model.params());
  EXPECT_EQ(back.state.memory.memory, ck.state.memory.memory);
  EXPECT_EQ(back.adam.steps(), ck.adam.steps());
  EXPECT_EQ(back.epoch, ck.epoch);
  ASSERT_EQ(back.history.size(), ck.history.size());
  for (std::size_t e = 0; e < ck.history.size(); ++e)
    EXPECT_EQ(back.history[e].to_json().dump(), ck.history[e].to_json().dump());
  EXPECT_EQ(back.answer_vocab, ck.answer_vocab);

  Dataset test = test_split(d);
  auto m1 = evaluate(ck, test, d.answer_vocab, EvalMode::open_ended);
  auto m2 = evaluate(back, test, d.answer_vocab, EvalMode::open_ended);
  EXPECT_EQ(m1.to_json().dump(), m2.to_json().dump());
}

TEST_F(TrainerFixture, EvaluationIsOrderIndependentAndAggregates) {
  TrainingData d = data();
  auto ck = train<float>(config(), d);
  Dataset test = test_split(d);
  auto forward = evaluate(ck, test, d.answer_vocab, EvalMode::open_ended);
  Dataset reversed = test;
  std::reverse(reversed.records.begin(), reversed.records.end());
  auto backward = evaluate(ck, reversed, d.answer_vocab, EvalMode::open_ended);
  EXPECT_EQ(forward.overall.accuracy, backward.overall.accuracy);
  ASSERT_EQ(forward.predictions.size(), test.records.size());
  for (std::size_t i = 0; i < forward.predictions.size(); ++i) {
    const auto& p = forward.predictions[i];
    const auto& q = backward.predictions[forward.predictions.size() - 1 - i];
    EXPECT_EQ(p.question_id, q.question_id);
    EXPECT_EQ(p.answer, q.answer);
    EXPECT_EQ(p.prob, q.prob);
  }
  double sum = 0;
  for (const auto& p : forward.predictions) sum += p.accuracy;
  EXPECT_NEAR(forward.overall.accuracy, sum / static_cast<double>(forward.predictions.size()), 1e-12);
  std::size_t typed = 0;
  for (const auto& [type, bucket] : forward.per_question_type) typed += bucket.count;
  EXPECT_EQ(typed, forward.overall.count);
  EXPECT_FALSE(forward.rare.has_value());
}

TEST_F(TrainerFixture, MultipleChoiceFallbackAndRareBucket) {
  TrainingData d = data();
  auto ck = train<float>(config(), d);
  Dataset test = test_split(d);
  ASSERT_TRUE(test.has_multiple_choices());
  test.records[0].multiple_choices = std::vector<std::string>{"not an answer"};
  std::set<std::string> rare{d.answer_vocab.answer(d.answer_vocab.size() - 1)};
  auto m = evaluate(ck, test, d.answer_vocab, EvalMode::multiple_choice, rare);
  EXPECT_EQ(m.fallback_count, 1u);
  EXPECT_FALSE(m.predictions[0].candidates_used);
  ASSERT_TRUE(m.rare.has_value());
  for (const auto& p : m.predictions) {
    if (p.candidates_used) {
      const auto& choices = *test.records[static_cast<std::size_t>(&p - m.predictions.data())].multiple_choices;
      EXPECT_NE(std::find(choices.begin(), choices.end(), p.answer), choices.end());
    }
  }
}

TEST_F(TrainerFixture, VocabularyMismatchThrows) {
  TrainingData d = data();
  auto ck = train<float>(config(), d);
  AnswerVocab other({"alpha", "beta"}, {1, 1});
  EXPECT_THROW(evaluate(ck, test_split(d), other, EvalMode::open_ended), std::invalid_argument);
}

TEST_F(TrainerFixture, NonFiniteLossAborts) {
  TrainConfig c = config();
  c.lr_answer = 1e30;
  c.lr_question = 1e30;
  c.clip_magnitude = 1e30;
  EXPECT_THROW(train<float>(c, data()), std::exception);
}

TEST_F(TrainerFixture, AblationLeavesCoattentionUnchanged) {
  TrainingData d = data();
  TrainConfig c = config();
  ModelConfig with = model_config_for(c, d);
  c.external_memory_enabled = false;
  ModelConfig without = model_config_for(c, d);
  EXPECT_TRUE(with.external_memory);
  EXPECT_FALSE(without.external_memory);
  auto a = Model<double>::initialize(with, 3);
  auto b = Model<double>::initialize(without, 3);
  const ExampleRecord& r = d.train.records[0];
  Tensor<double> grid = grid_tensor<double>(d.train.grid(r.image_id));
  Graph<double> g;
  auto sa = MannGraphState<double>::constant(g, a.initial_state());
  auto sb = MannGraphState<double>::constant(g, b.initial_state());
  auto fa = a.forward(g, grid, r.question_tokens, sa, true);
  auto fb = b.forward(g, grid, r.question_tokens, sb, true);
  EXPECT_EQ(fa.coattention.joint.value(), fb.coattention.joint.value());
  EXPECT_EQ(fa.hidden.value(), fb.hidden.value());
  EXPECT_TRUE(fa.memory.has_value());
  EXPECT_FALSE(fb.memory.has_value());
  const std::size_t W = with.controller_hidden;
  for (std::size_t j = 0; j < W; ++j) EXPECT_EQ(fb.embedding.value()[W + j], 0.0);
  EXPECT_EQ(fb.next.memory.value(), b.initial_state().memory.memory);
}

TEST_F(TrainerFixture, DoublePrecisionTrains) {
  TrainConfig c = config();
  c.precision = "f64";
  c.epochs = 1;
  auto ck = train<double>(c, data());
  TempDir out("ckpt64");
  save_checkpoint(ck, out.path());
  EXPECT_EQ(checkpoint_precision(out.path()), "f64");
  EXPECT_EQ(load_checkpoint<double>(out.path()).model.params().value("head.W_h"), ck.model.params().value("head.W_h"));
}

}  // namespace
}  // namespace memvqa
