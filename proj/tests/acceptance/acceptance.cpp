// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "memvqa/answer_head.hpp"
#include "memvqa/answer_vocab.hpp"
#include "memvqa/coattention.hpp"
#include "memvqa/dataset.hpp"
#include "memvqa/gradcheck.hpp"
#include "memvqa/mann.hpp"
#include "memvqa/model.hpp"
#include "memvqa/ops.hpp"
#include "memvqa/synth.hpp"
#include "memvqa/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace memvqa {
namespace {

namespace fs = std::filesystem;
namespace ref = testing::ref;
namespace oracle = testing::oracle;
using testing::max_abs_diff;
using testing::random_tensor;
using G = Graph<double>;
using V = Var<double>;
using T = Tensor<double>;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. Finite-difference agreement for every primitive and the end-to-end loss.
Outcome gradient_suite() {
  const auto start = Clock::now();
  GradientCheckOptions opts;
  opts.tolerance = 1e-4;
  double worst = 0;
  std::size_t checks = 0;
  std::string failed;
  auto record = [&](const std::string& name, const GradientCheckReport& r) {
    worst = std::max(worst, r.max_relative_error);
    checks += r.entries.size();
    if (!r.passed() && failed.empty()) failed = name;
    if (std::getenv("MEMVQA_GRAD_DEBUG") == nullptr) return;
    for (const auto& e : r.entries) {
      if (!e.flagged) continue;
      std::cerr << name << " " << e.parameter << "[" << e.index << "] analytic " << e.analytic << " numeric "
                << e.numeric << "\n";
    }
  };

  std::mt19937_64 rng(1);
  using Op = std::function<V(G&, V)>;
  for (int trial = 0; trial < 10; ++trial) {
    T m34 = random_tensor({3, 4}, rng), v4 = random_tensor({4}, rng), m54 = random_tensor({5, 4}, rng);
    const std::vector<std::pair<std::string, std::pair<Shape, Op>>> ops = {
        {"add", {{3, 4}, [&](G& g, V x) { return x + g.constant(m34); }}},
        {"sub", {{3, 4}, [&](G& g, V x) { return g.constant(m34) - x; }}},
        {"mul", {{3, 4}, [&](G& g, V x) { return x * g.constant(v4); }}},
        {"matmul", {{3, 4}, [&](G& g, V x) { return matmul(x, g.constant(v4)); }}},
        {"matmul_nt", {{3, 4}, [&](G& g, V x) { return matmul_nt(x, g.constant(m54)); }}},
        {"outer", {{4}, [&](G& g, V x) { return outer(x, g.constant(v4)); }}},
        {"tanh", {{3, 4}, [](G&, V x) { return tanh(x); }}},
        {"sigmoid", {{3, 4}, [](G&, V x) { return sigmoid(x); }}},
        {"softmax", {{5}, [](G&, V x) { return softmax(x); }}},
        {"concat", {{3}, [&](G& g, V x) { return concat<double>({x, g.constant(v4)}); }}},
        {"stack_rows", {{4}, [&](G& g, V x) { return stack_rows<double>({x, g.constant(v4)}); }}},
        {"slice", {{6}, [](G&, V x) { return slice(x, 1, 4); }}},
        {"row", {{3, 4}, [](G&, V x) { return row(x, 2); }}},
        {"mean_rows", {{3, 4}, [](G&, V x) { return mean_rows(x); }}},
        {"sum", {{3, 4}, [](G&, V x) { return sum(x); }}},
        {"cosine_rows", {{3, 4}, [&](G& g, V x) { return cosine_rows(x, g.constant(v4)); }}},
        {"cosine_query", {{4}, [&](G& g, V x) { return cosine_rows(g.constant(m34), x); }}},
        {"neg_log_pick", {{4}, [](G&, V x) { return neg_log_pick(softmax(x), 1, 1e-12); }}},
    };
    for (const auto& [name, spec] : ops) {
      const auto& op = spec.second;
      auto f = [&](G& g, V x) {
        V y = op(g, x);
        std::mt19937_64 proj(7);
        return sum(y * g.constant(random_tensor(y.shape(), proj)));
      };
      record(name, gradient_check<double>(f, random_tensor(spec.first, rng), 1e-6, opts));
    }
  }

  // End to end: encoders -> co-attention -> three controller/memory steps -> head.
  ModelConfig mc;
  mc.question_vocab_size = 7;
  mc.embed_dim = 6;
  mc.feature_width = 8;
  mc.controller_hidden = 8;
  mc.head_hidden = 6;
  mc.memory_slots = 8;
  mc.num_answers = 5;
  mc.gamma = 0.9;
  mc.truncation_n = 2;
  auto model = Model<double>::initialize(mc, 11);
  model.params().value("mann.alpha")[0] = 0.3;
  std::vector<T> grids;
  std::vector<std::vector<std::size_t>> questions{{1, 4, 2}, {3, 3}, {6, 0, 5, 2}};
  std::vector<std::size_t> labels{0, 3, 1};
  for (int i = 0; i < 3; ++i) grids.push_back(random_tensor({4, 8}, rng));
  const MannState<double> init = model.initial_state();
  auto loss = [&](G& g) {
    auto state = MannGraphState<double>::constant(g, init);
    V total = g.constant(T::scalar(0));
    for (std::size_t t = 0; t < 3; ++t) {
      auto out = model.forward(g, grids[t], questions[t], state, true);
      total = total + answer_loss(out.probs, labels[t]);
      state = out.next;
    }
    return total;
  };
  // Many partials here are ~1e-6, so a 1e-6 step would leave them dominated by
  // roundoff (eps * |loss| / step); 1e-4 keeps truncation error well below it.
  record("end_to_end", gradient_check_parameters<double>(model.params(), loss, 1e-4, {}, opts));

  const double secs = seconds_since(start);
  Outcome o;
  o.pass = failed.empty() && worst < 1e-4 && secs < 120;
  o.detail = std::to_string(checks) + " partials, max rel err " + fmt("%.2e", worst) + ", " + fmt("%.1fs", secs) +
             (failed.empty() ? "" : ", first failure: " + failed);
  return o;
}

// 2. Twenty-step memory traces against straight-line reimplementations.
Outcome recurrence_oracles() {
  std::mt19937_64 rng(2);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t S = 4 + trial % 5, W = 3 + trial % 4, n = 1 + trial % 3;
    const double alpha = std::normal_distribution<double>()(rng), gamma = 0.05 * trial;
    T memory = random_tensor({S, W}, rng);
    std::vector<ref::Vec> hs;
    for (int t = 0; t < 20; ++t) hs.push_back(ref::to_vec(random_tensor({W}, rng)));
    const auto expected = oracle::memory_trace(hs, ref::to_mat(memory), alpha, n, gamma);
    G g;
    V m = g.constant(memory), read_prev = g.constant(T({S})), usage_prev = g.constant(T({S}));
    V a = g.constant(T::scalar(alpha));
    for (std::size_t t = 0; t < hs.size(); ++t) {
      V h = g.constant(T::vector(hs[t]));
      auto r = read_memory(h, m);
      V w = compute_write_weights(read_prev, usage_prev.value(), a, n);
      V u = update_usage(usage_prev, r.weights, w, gamma);
      m = write_memory(m, w, h);
      worst = std::max({worst, max_abs_diff(r.weights.value(), expected[t].read),
                        max_abs_diff(r.retrieved.value(), expected[t].retrieved),
                        max_abs_diff(w.value(), expected[t].write), max_abs_diff(u.value(), expected[t].usage),
                        oracle::max_diff(ref::to_mat(m.value()), expected[t].memory)});
      read_prev = r.weights;
      usage_prev = u;
    }
  }
  return {worst <= 1e-12, "20 traces x 20 steps, max abs diff " + fmt("%.2e", worst)};
}

// 3. Every softmax output sums to one.
Outcome normalization() {
  std::mt19937_64 rng(3);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    ModelConfig mc;
    mc.question_vocab_size = 10;
    mc.embed_dim = 4 + i % 5;
    mc.feature_width = 2 * (2 + i % 4);
    mc.controller_hidden = 3 + i % 6;
    mc.head_hidden = 4;
    mc.memory_slots = 2 + i % 9;
    mc.num_answers = 2 + i % 13;
    mc.truncation_n = 1;
    auto model = Model<double>::initialize(mc, static_cast<std::uint64_t>(i));
    const std::size_t N = 1 + i % 7, len = 1 + i % 6;
    T grid = random_tensor({N, mc.feature_width}, rng, 3.0);
    std::vector<std::size_t> tokens;
    for (std::size_t t = 0; t < len; ++t) tokens.push_back(rng() % mc.question_vocab_size);
    G g;
    auto state = MannGraphState<double>::constant(g, model.initial_state());
    for (int step = 0; step < 2; ++step) {
      auto out = model.forward(g, grid, tokens, state, true);
      for (const V* v : {&out.coattention.visual.weights, &out.coattention.question.weights, &out.memory->read.weights,
                         &out.probs}) {
        double s = 0;
        for (double x : v->value().values()) s += x;
        worst = std::max(worst, std::abs(s - 1.0));
      }
      state = out.next;
    }
  }
  return {worst <= 1e-6, "1000 instances, max |sum - 1| " + fmt("%.2e", worst)};
}

// 4. Closed-form write-weight and usage examples.
Outcome spot_checks() {
  const T indicator = least_used_indicator(T::vector({3, 1, 2, 4}), 2);
  const T w = write_weights_values(T({4}), T::vector({3, 1, 2, 4}), 0.0, 2);
  const T u = usage_values(T::vector({1, 1}), T({2}), T({2}), 0.5);
  const bool ok = indicator.values() == std::vector<double>{0, 1, 1, 0} &&
                  w.values() == std::vector<double>{0, 0.5, 0.5, 0} && u.values() == std::vector<double>{0.5, 0.5};
  return {ok, "indicator [0,1,1,0], write weights [0,.5,.5,0], usage [.5,.5] compared exactly"};
}

// 5. VQA accuracy on ten-answer cases.
Outcome metric_exactness() {
  bool ok = true;
  const double expected[] = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  for (std::size_t m = 0; m <= 10; ++m) {
    std::vector<std::string> humans(m, "two");
    humans.resize(10, "three");
    ok = ok && vqa_accuracy("two", humans) == expected[m];
  }
  return {ok, "matches 0..10 of 10 humans give min(m/3, 1) exactly"};
}

struct RunData {
  fs::path dir;
  TrainingData data;
  Dataset test;
  std::set<std::string> rare;
};

RunData make_task(const fs::path& dir, const SynthTaskConfig& config, std::size_t vocab_k) {
  fs::remove_all(dir);
  SynthManifest manifest = write_synth_task(config, dir);
  RunData r{dir, load_training_data(dir, vocab_k), {}, {}};
  r.test = load_split(dir, "test", r.data.question_vocab, r.data.answer_vocab);
  const auto rare = manifest.rare_answers();
  r.rare = std::set<std::string>(rare.begin(), rare.end());
  return r;
}

// 6. Fifty training examples are memorized.
Outcome overfit(const fs::path& work) {
  SynthTaskConfig s;
  s.classes = 10;
  s.question_types = 5;
  s.train_examples = 50;
  s.test_examples = 10;
  s.seed = 6;
  RunData task = make_task(work / "overfit", s, 1000);
  TrainConfig c;
  c.epochs = 200;
  c.seed = 6;
  c.lr_question = 3e-3;
  c.lr_answer = 3e-3;
  c.lr_decay_per_epoch = 1.0;
  c.gradient_noise = false;

  auto run_once = [&](std::size_t& first_epoch, double& secs) {
    const auto start = Clock::now();
    first_epoch = 0;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochMetrics& m) {
      if (first_epoch == 0 && m.train_acc >= 0.95) first_epoch = m.epoch;
    };
    auto ck = train<float>(c, task.data, hooks);
    secs = seconds_since(start);
    std::string log;
    for (const auto& m : ck.history) log += m.to_json().dump() + "\n";
    return std::make_pair(log, ck.history.back().train_acc);
  };
  std::size_t first_a = 0, first_b = 0;
  double secs_a = 0, secs_b = 0;
  auto [log_a, final_acc] = run_once(first_a, secs_a);
  auto [log_b, final_b] = run_once(first_b, secs_b);
  (void)final_b;
  const bool deterministic = log_a == log_b;
  Outcome o;
  o.pass = first_a != 0 && first_a <= 200 && secs_a < 300 && deterministic;
  o.detail = "first epoch >= 95%: " + (first_a ? std::to_string(first_a) : std::string("never")) +
             ", final train acc " + fmt("%.3f", final_acc) + ", " + fmt("%.1fs", secs_a) + " per run" +
             (deterministic ? ", repeat run identical" : ", repeat run DIFFERS");
  return o;
}

// 7. External memory versus the [h, 0] ablation on a heavy-tailed task.
Outcome ablation(const fs::path& work) {
  const auto start = Clock::now();
  double rare_on = 0, rare_off = 0, all_on = 0, all_off = 0;
  const int seeds = 5;
  std::ostringstream per_seed;
  for (int seed = 1; seed <= seeds; ++seed) {
    SynthTaskConfig s;
    s.classes = 50;
    s.zipf_exponent = 1.2;
    s.train_examples = 5000;
    s.seed = static_cast<std::uint64_t>(seed);
    RunData task = make_task(work / ("ablation_" + std::to_string(seed)), s, 1000);
    TrainConfig c;
    c.epochs = 10;
    c.seed = static_cast<std::uint64_t>(seed);
    c.gradient_noise = false;
    c.memory_slots = 1024;
    c.memory_reset = MemoryReset::epoch;
    c.memory_init = MemoryInit::uniform;
    double rare[2], all[2];
    for (int arm = 0; arm < 2; ++arm) {
      c.external_memory_enabled = arm == 0;
      auto ck = train<float>(c, task.data);
      auto m = evaluate(ck, task.test, task.data.answer_vocab, EvalMode::open_ended, task.rare);
      rare[arm] = m.rare ? m.rare->accuracy : 0.0;
      all[arm] = m.overall.accuracy;
    }
    rare_on += rare[0] / seeds;
    rare_off += rare[1] / seeds;
    all_on += all[0] / seeds;
    all_off += all[1] / seeds;
    per_seed << " [seed " << seed << ": rare " << fmt("%.3f", rare[0]) << "/" << fmt("%.3f", rare[1]) << ", overall "
             << fmt("%.3f", all[0]) << "/" << fmt("%.3f", all[1]) << "]";
    std::cerr << "ablation seed " << seed << " done after " << fmt("%.0fs", seconds_since(start)) << "\n";
  }
  const double secs = seconds_since(start);
  Outcome o;
  o.pass = rare_on - rare_off >= 0.05 && all_off - all_on <= 0.01 && secs < 1800;
  o.detail = "rare acc memory " + fmt("%.3f", rare_on) + " vs ablation " + fmt("%.3f", rare_off) +
             " (need +0.050), overall " + fmt("%.3f", all_on) + " vs " + fmt("%.3f", all_off) +
             " (need >= -0.010), " + fmt("%.0fs", secs) + ";" + per_seed.str();
  return o;
}

// 8. Coverage of a corpus built from published answer counts.
Outcome vocabulary_statistics() {
  // Examples covered by the top K answers for K = 1000, 2000, 3000, 4000, and
  // the corpus size. Within each rank band the counts are as even as possible.
  const std::size_t total = 369861;
  const std::size_t covered[] = {320029, 334554, 341814, 346287};
  std::vector<std::string> corpus;
  corpus.reserve(total);
  std::size_t next_id = 0, previous = 0;
  auto add_band = [&](std::size_t answers, std::size_t examples) {
    const std::size_t base = examples / answers, extra = examples % answers;
    for (std::size_t i = 0; i < answers; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "answer %06zu", next_id++);
      corpus.insert(corpus.end(), base + (i < extra ? 1 : 0), name);
    }
  };
  for (std::size_t band = 0; band < 4; ++band) {
    add_band(1000, covered[band] - previous);
    previous = covered[band];
  }
  add_band(total - previous, total - previous);  // singleton tail

  AnswerVocab v = build_vocab(corpus, 1000);
  bool bands_ok = true;
  for (std::size_t band = 0; band < 4; ++band) {
    AnswerVocab vb = build_vocab(corpus, 1000 * (band + 1));
    bands_ok = bands_ok && vb.retained_examples() == covered[band];
  }
  const bool ok = std::abs(v.coverage() - 0.865) <= 0.005 && v.total_examples() == total && bands_ok;
  return {ok, "coverage at K=1000 " + fmt("%.4f", v.coverage()) + " over " + std::to_string(corpus.size()) +
                  " answers (target 0.865 +- 0.005)" + (bands_ok ? "" : ", band counts differ")};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MEMVQA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 9. Two identical CLI training runs produce identical bytes.
Outcome determinism(const fs::path& work) {
  const fs::path data = work / "det_data", a = work / "det_a", b = work / "det_b";
  for (const auto& p : {data, a, b}) fs::remove_all(p);
  const fs::path config = work / "det_config.json";
  std::ofstream(config) << R"({"epochs": 2, "hidden_size": 16, "memory_slots": 32, "seed": 9})";
  bool ok = run_cli("gen-synth --classes 12 --regions 4 --feature-width 16 --train-examples 300 "
                    "--test-examples 50 --seed 9 --out " + data.string()) == 0;
  for (const auto& out : {a, b}) {
    ok = ok && run_cli("train --config " + config.string() + " --data " + data.string() + " --out " + out.string() +
                       " --memory-trace") == 0;
  }
  std::size_t files = 0, differing = 0;
  if (ok) {
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      ++files;
      if (slurp(entry.path()) != slurp(b / fs::relative(entry.path(), a))) ++differing;
    }
  }
  return {ok && files > 0 && differing == 0,
          std::to_string(files) + " files compared (metrics, trace, checkpoint), " + std::to_string(differing) +
              " differ"};
}

}  // namespace
}  // namespace memvqa

int main(int argc, char** argv) {
  using namespace memvqa;
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const fs::path work = fs::temp_directory_path() / ("memvqa_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"recurrence oracles", recurrence_oracles},
      {"normalization invariants", normalization},
      {"closed-form spot checks", spot_checks},
      {"metric exactness", metric_exactness},
      {"overfit sanity", [&] { return overfit(work); }},
      {"ablation direction", [&] { return ablation(work); }},
      {"vocabulary statistics", vocabulary_statistics},
      {"determinism", [&] { return determinism(work); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!selected.empty() && selected.count(number) == 0) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << number << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  fs::remove_all(work);
  return failures == 0 ? 0 : 1;
}
