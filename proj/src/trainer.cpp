#include "memvqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "memvqa/binary_io.hpp"
#include "memvqa/ops.hpp"

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define MEMVQA_HAVE_MXCSR 1
#endif

namespace memvqa {

namespace {

// Flush-to-zero and denormals-are-zero for the guard's lifetime; the previous
// MXCSR is restored on exit.
class DenormalGuard {
 public:
#ifdef MEMVQA_HAVE_MXCSR
  DenormalGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
  ~DenormalGuard() { _mm_setcsr(saved_); }

 private:
  unsigned int saved_;
#endif
};

const char* clip_mode_name(ClipMode m) { return m == ClipMode::global_norm ? "global" : "element"; }
const char* reset_name(MemoryReset r) { return r == MemoryReset::never ? "never" : "epoch"; }

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_question > 0) || !(lr_answer > 0)) throw std::invalid_argument("learning rates must be positive");
  if (!(lr_decay_per_epoch > 0 && lr_decay_per_epoch <= 1)) {
    throw std::invalid_argument("lr_decay_per_epoch must lie in (0, 1]");
  }
  if (!(clip_magnitude > 0)) throw std::invalid_argument("clip_magnitude must be positive");
  if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (hidden_size == 0 || memory_slots == 0 || vocab_k == 0) {
    throw std::invalid_argument("hidden_size, memory_slots and vocab_k must be positive");
  }
  if (truncation_n < 1 || truncation_n > memory_slots) {
    throw std::invalid_argument("truncation_n must lie in [1, memory_slots]");
  }
  if (!(noise_eta >= 0)) throw std::invalid_argument("noise_eta must be non-negative");
  if (precision != "f32" && precision != "f64") throw std::invalid_argument("precision must be f32 or f64");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  return {{"lr_question", lr_question},
          {"lr_answer", lr_answer},
          {"lr_decay_per_epoch", lr_decay_per_epoch},
          {"clip_magnitude", clip_magnitude},
          {"clip_mode", clip_mode_name(clip_mode)},
          {"gamma", gamma},
          {"truncation_n", truncation_n},
          {"hidden_size", hidden_size},
          {"epochs", epochs},
          {"seed", seed},
          {"external_memory_enabled", external_memory_enabled},
          {"memory_slots", memory_slots},
          {"vocab_k", vocab_k},
          {"gradient_noise", gradient_noise},
          {"noise_eta", noise_eta},
          {"noise_decay", noise_decay},
          {"memory_reset", reset_name(memory_reset)},
          {"memory_init", memory_init == MemoryInit::uniform ? "uniform" : "constant"},
          {"precision", precision}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  TrainConfig c;
  const auto known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("unknown train config key '" + key + "'");
  }
  c.lr_question = j.value("lr_question", c.lr_question);
  c.lr_answer = j.value("lr_answer", c.lr_answer);
  c.lr_decay_per_epoch = j.value("lr_decay_per_epoch", c.lr_decay_per_epoch);
  c.clip_magnitude = j.value("clip_magnitude", c.clip_magnitude);
  const std::string clip = j.value("clip_mode", std::string(clip_mode_name(c.clip_mode)));
  if (clip == "global") {
    c.clip_mode = ClipMode::global_norm;
  } else if (clip == "element") {
    c.clip_mode = ClipMode::per_element;
  } else {
    throw std::invalid_argument("clip_mode must be 'global' or 'element'");
  }
  c.gamma = j.value("gamma", c.gamma);
  c.truncation_n = j.value("truncation_n", c.truncation_n);
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.external_memory_enabled = j.value("external_memory_enabled", c.external_memory_enabled);
  c.memory_slots = j.value("memory_slots", c.memory_slots);
  c.vocab_k = j.value("vocab_k", c.vocab_k);
  c.gradient_noise = j.value("gradient_noise", c.gradient_noise);
  c.noise_eta = j.value("noise_eta", c.noise_eta);
  c.noise_decay = j.value("noise_decay", c.noise_decay);
  const std::string reset = j.value("memory_reset", std::string(reset_name(c.memory_reset)));
  if (reset == "never") {
    c.memory_reset = MemoryReset::never;
  } else if (reset == "epoch") {
    c.memory_reset = MemoryReset::epoch;
  } else {
    throw std::invalid_argument("memory_reset must be 'never' or 'epoch'");
  }
  const std::string init = j.value("memory_init", std::string("uniform"));
  if (init == "uniform") {
    c.memory_init = MemoryInit::uniform;
  } else if (init == "constant") {
    c.memory_init = MemoryInit::constant;
  } else {
    throw std::invalid_argument("memory_init must be 'uniform' or 'constant'");
  }
  c.precision = j.value("precision", c.precision);
  c.validate();
  return c;
}

nlohmann::ordered_json EpochMetrics::to_json() const {
  return {{"epoch", epoch}, {"step", step}, {"loss", loss}, {"lr_q", lr_q}, {"lr_a", lr_a}, {"train_acc", train_acc}};
}

EpochMetrics EpochMetrics::from_json(const nlohmann::json& j) {
  EpochMetrics m;
  m.epoch = j.at("epoch").get<std::size_t>();
  m.step = j.at("step").get<std::size_t>();
  m.loss = j.at("loss").get<double>();
  m.lr_q = j.at("lr_q").get<double>();
  m.lr_a = j.at("lr_a").get<double>();
  m.train_acc = j.at("train_acc").get<double>();
  return m;
}

TrainingData load_training_data(const std::filesystem::path& data_dir, std::size_t vocab_k) {
  const auto questions = read_questions(data_dir / "train" / "questions.jsonl");
  if (questions.empty()) throw DataError("no questions in '" + (data_dir / "train").string() + "'");
  TrainingData data;
  data.question_vocab = build_question_vocab(questions);
  data.answer_vocab = build_vocab(training_answers(questions), vocab_k);
  data.train = build_dataset(questions, data_dir / "features", data.question_vocab, data.answer_vocab);
  return data;
}

Dataset load_split(const std::filesystem::path& data_dir, const std::string& split, const Vocabulary& question_vocab,
                   const AnswerVocab& answer_vocab) {
  return parse_dataset(data_dir / split / "questions.jsonl", data_dir / "features", question_vocab, answer_vocab);
}

ModelConfig model_config_for(const TrainConfig& config, const TrainingData& data) {
  if (data.train.grids.empty()) throw std::invalid_argument("training data has no feature grids");
  const std::size_t width = data.train.grids.begin()->second.width();
  for (const auto& [id, grid] : data.train.grids) {
    if (grid.width() != width) {
      throw DataError("feature grid '" + id + "' has width " + std::to_string(grid.width()) + ", expected " +
                      std::to_string(width));
    }
  }
  ModelConfig m;
  m.question_vocab_size = data.question_vocab.size();
  m.embed_dim = config.hidden_size;
  m.feature_width = width;
  m.controller_hidden = config.hidden_size;
  m.head_hidden = config.hidden_size;
  m.memory_slots = config.memory_slots;
  m.num_answers = data.answer_vocab.size();
  m.gamma = config.gamma;
  m.truncation_n = config.truncation_n;
  m.external_memory = config.external_memory_enabled;
  m.memory_init = config.memory_init;
  m.memory_seed = config.seed;
  return m;
}

template <typename Real>
Tensor<Real> grid_tensor(const FeatureGrid& grid) {
  return grid.regions.template cast<Real>();
}

template <typename Real>
Checkpoint<Real> train(const TrainConfig& config, const TrainingData& data, const TrainHooks& hooks) {
  config.validate();
  const DenormalGuard denormals;
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < data.train.records.size(); ++i) {
    if (data.train.records[i].label) labeled.push_back(i);
  }
  if (labeled.empty()) throw std::invalid_argument("train: dataset has no labeled examples");

  Checkpoint<Real> ck{config, Model<Real>::initialize(model_config_for(config, data), config.seed), Adam<Real>(),
                      MannState<Real>{}, 0, 0, {}, data.question_vocab, data.answer_vocab};
  ck.state = ck.model.initial_state();

  std::map<std::string, Tensor<Real>> grids;
  for (const auto& [id, grid] : data.train.grids) grids.emplace(id, grid_tensor<Real>(grid));

  const GradientNoise noise{config.noise_eta, config.noise_decay};
  double lr_q = config.lr_question;
  double lr_a = config.lr_answer;
  std::mt19937_64 order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order = labeled;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.memory_reset == MemoryReset::epoch) ck.state = ck.model.initial_state();
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_total = 0;
    std::size_t hits = 0;
    for (std::size_t idx : order) {
      const ExampleRecord& ex = data.train.records[idx];
      ++ck.step;
      Graph<Real> graph;
      auto state = MannGraphState<Real>::constant(graph, ck.state);
      auto fwd = ck.model.forward(graph, grids.at(ex.image_id), ex.question_tokens, state, true);
      Var<Real> loss = answer_loss(fwd.probs, *ex.label);
      const double loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(ck.step) + ", question " + std::to_string(ex.question_id));
      }
      loss_total += loss_value;
      if (argmax(fwd.probs.value().data()) == *ex.label) ++hits;

      ck.model.params().zero_grad();
      graph.backward(loss);
      if (config.gradient_noise) add_gradient_noise(ck.model.params(), ck.step, config.seed, noise);
      clip_gradients(ck.model.params(), config.clip_magnitude, config.clip_mode);
      ck.adam.step(ck.model.params(), [&](const std::string& group) { return group == kQuestionGroup ? lr_q : lr_a; });

      ck.state = fwd.next.values();
      if (hooks.memory_trace && fwd.memory) {
        nlohmann::ordered_json line = {{"step", ck.step},
                                       {"w_r", fwd.memory->read.weights.value().values()},
                                       {"w_w", fwd.memory->write_weights.value().values()},
                                       {"w_u", fwd.memory->usage.value().values()}};
        *hooks.memory_trace << line.dump() << '\n';
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.step = ck.step;
    m.loss = loss_total / static_cast<double>(order.size());
    m.lr_q = lr_q;
    m.lr_a = lr_a;
    m.train_acc = static_cast<double>(hits) / static_cast<double>(order.size());
    ck.history.push_back(m);
    ck.epoch = epoch;
    if (hooks.on_epoch) hooks.on_epoch(m);
    lr_q *= config.lr_decay_per_epoch;
    lr_a *= config.lr_decay_per_epoch;
  }
  return ck;
}

nlohmann::ordered_json Prediction::to_json() const {
  return {{"question_id", question_id}, {"answer", answer}, {"prob", prob}, {"candidates_used", candidates_used}};
}

namespace {

nlohmann::ordered_json bucket_json(const AccuracyBucket& b) {
  return {{"count", b.count}, {"accuracy", b.accuracy}, {"top1", b.top1}};
}

void accumulate(AccuracyBucket& b, double accuracy, bool hit) {
  ++b.count;
  b.accuracy += accuracy;
  b.top1 += hit ? 1.0 : 0.0;
}

void finish(AccuracyBucket& b) {
  if (b.count == 0) return;
  b.accuracy /= static_cast<double>(b.count);
  b.top1 /= static_cast<double>(b.count);
}

}  // namespace

nlohmann::ordered_json EvalMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode;
  j["count"] = overall.count;
  j["accuracy"] = overall.accuracy;
  j["top1"] = overall.top1;
  nlohmann::ordered_json types = nlohmann::ordered_json::object();
  for (const auto& [type, bucket] : per_question_type) types[type] = bucket_json(bucket);
  j["per_question_type"] = types;
  j["rare"] = rare ? bucket_json(*rare) : nlohmann::ordered_json(nullptr);
  j["fallback_count"] = fallback_count;
  return j;
}

template <typename Real>
EvalMetrics evaluate(Checkpoint<Real>& checkpoint, const Dataset& dataset, const AnswerVocab& dataset_vocab,
                     EvalMode mode, const std::set<std::string>& rare_answers) {
  if (!(dataset_vocab == checkpoint.answer_vocab)) {
    throw std::invalid_argument("evaluate: answer vocabulary of the dataset (" + std::to_string(dataset_vocab.size()) +
                                " answers) does not match the checkpoint (" +
                                std::to_string(checkpoint.answer_vocab.size()) + " answers)");
  }
  const DenormalGuard denormals;
  EvalMetrics metrics;
  metrics.mode = mode == EvalMode::open_ended ? "open-ended" : "multiple-choice";
  if (!rare_answers.empty()) metrics.rare = AccuracyBucket{};
  for (const auto& ex : dataset.records) {
    Graph<Real> graph;
    auto state = MannGraphState<Real>::constant(graph, checkpoint.state);
    auto fwd = checkpoint.model.forward(graph, grid_tensor<Real>(dataset.grid(ex.image_id)), ex.question_tokens,
                                        state, false);
    const Tensor<Real>& probs = fwd.probs.value();
    MultipleChoiceSelection choice;
    if (mode == EvalMode::multiple_choice) {
      choice = select_multiple_choice(probs, ex.multiple_choices.value_or(std::vector<std::string>{}),
                                      checkpoint.answer_vocab);
      if (!choice.candidates_used) ++metrics.fallback_count;
    } else {
      choice = select_open_ended(probs, checkpoint.answer_vocab);
    }
    Prediction p;
    p.question_id = ex.question_id;
    p.answer = choice.answer;
    p.prob = choice.prob;
    p.candidates_used = choice.candidates_used;
    p.accuracy = vqa_accuracy(choice.answer, ex.human_answers);
    p.question_type = ex.question_type;
    p.rare = rare_answers.count(ex.training_answer) != 0;
    const bool hit = choice.answer == ex.training_answer;
    accumulate(metrics.overall, p.accuracy, hit);
    if (!ex.question_type.empty()) accumulate(metrics.per_question_type[ex.question_type], p.accuracy, hit);
    if (p.rare) accumulate(*metrics.rare, p.accuracy, hit);
    metrics.predictions.push_back(std::move(p));
  }
  finish(metrics.overall);
  for (auto& [type, bucket] : metrics.per_question_type) finish(bucket);
  if (metrics.rare) finish(*metrics.rare);
  return metrics;
}

namespace {

constexpr const char* kCheckpointFormat = "memvqa-checkpoint";

template <typename Real>
constexpr const char* dtype_name() {
  return sizeof(Real) == 4 ? "f32le" : "f64le";
}

template <typename Real>
std::string encode_tensor(const Tensor<Real>& t) {
  std::string out;
  out.reserve(t.size() * sizeof(Real));
  for (Real v : t.data()) binary::append_le(out, v);
  return out;
}

template <typename Real>
Tensor<Real> decode_tensor(const std::string& bytes, const Shape& shape, const std::string& source) {
  const std::size_t n = shape_size(shape);
  if (bytes.size() != n * sizeof(Real)) {
    throw std::runtime_error("checkpoint tensor '" + source + "' has " + std::to_string(bytes.size()) +
                             " bytes, expected " + std::to_string(n * sizeof(Real)));
  }
  std::vector<Real> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = binary::read_le<Real>(bytes.data() + i * sizeof(Real));
  return Tensor<Real>(shape, std::move(values));
}

std::string file_stem(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')) c = '_';
  }
  return out;
}

}  // namespace

template <typename Real>
void save_checkpoint(const Checkpoint<Real>& ck, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "tensors");
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  auto put = [&](const std::string& kind, const std::string& name, const Tensor<Real>& t, const std::string& group) {
    const std::string file = "tensors/" + file_stem(kind + "." + name) + ".bin";
    binary::write_file((dir / file).string(), encode_tensor(t));
    nlohmann::ordered_json entry = {{"kind", kind}, {"name", name}, {"shape", t.shape()}, {"file", file}};
    if (!group.empty()) entry["group"] = group;
    tensors.push_back(entry);
  };
  const auto& params = ck.model.params();
  for (const auto& name : params.names()) put("param", name, params.value(name), params.group(name));
  for (const auto& [name, m] : ck.adam.moments()) {
    put("adam_m", name, m.first, "");
    put("adam_v", name, m.second, "");
  }
  put("state", "memory", ck.state.memory.memory, "");
  put("state", "usage", ck.state.memory.usage, "");
  put("state", "read", ck.state.memory.read, "");
  put("state", "write", ck.state.memory.write, "");
  put("state", "controller_h", ck.state.controller_h, "");
  put("state", "controller_c", ck.state.controller_c, "");

  nlohmann::ordered_json history = nlohmann::ordered_json::array();
  for (const auto& m : ck.history) history.push_back(m.to_json());
  nlohmann::ordered_json manifest = {{"format", kCheckpointFormat},
                                     {"version", 1},
                                     {"dtype", dtype_name<Real>()},
                                     {"epoch", ck.epoch},
                                     {"step", ck.step},
                                     {"config", ck.config.to_json()},
                                     {"model", ck.model.config().to_json()},
                                     {"adam",
                                      {{"step", ck.adam.steps()},
                                       {"beta1", ck.adam.options().beta1},
                                       {"beta2", ck.adam.options().beta2},
                                       {"epsilon", ck.adam.options().epsilon}}},
                                     {"metrics_history", history},
                                     {"question_vocab", ck.question_vocab.to_json()},
                                     {"answer_vocab", ck.answer_vocab.to_json()},
                                     {"tensors", tensors}};
  binary::write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

std::string checkpoint_precision(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("no checkpoint manifest in '" + dir.string() + "'");
  const auto manifest = nlohmann::json::parse(in);
  if (manifest.value("format", "") != kCheckpointFormat) {
    throw std::runtime_error("'" + dir.string() + "' is not a checkpoint directory");
  }
  return manifest.at("dtype").get<std::string>() == "f32le" ? "f32" : "f64";
}

template <typename Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("no checkpoint manifest in '" + dir.string() + "'");
  const auto manifest = nlohmann::json::parse(in);
  if (manifest.value("format", "") != kCheckpointFormat) {
    throw std::runtime_error("'" + dir.string() + "' is not a checkpoint directory");
  }
  if (manifest.at("dtype").get<std::string>() != dtype_name<Real>()) {
    throw std::runtime_error("checkpoint dtype " + manifest.at("dtype").get<std::string>() +
                             " does not match requested precision");
  }
  const auto adam_json = manifest.at("adam");
  AdamOptions options{adam_json.at("beta1").get<double>(), adam_json.at("beta2").get<double>(),
                      adam_json.at("epsilon").get<double>()};
  Checkpoint<Real> ck{TrainConfig::from_json(manifest.at("config")),
                      Model<Real>(ModelConfig::from_json(manifest.at("model"))),
                      Adam<Real>(options),
                      MannState<Real>{},
                      manifest.at("epoch").get<std::size_t>(),
                      manifest.at("step").get<std::size_t>(),
                      {},
                      Vocabulary::from_json(manifest.at("question_vocab")),
                      AnswerVocab::from_json(manifest.at("answer_vocab"))};
  ck.adam.set_steps(adam_json.at("step").get<std::size_t>());
  for (const auto& m : manifest.at("metrics_history")) ck.history.push_back(EpochMetrics::from_json(m));

  for (const auto& entry : manifest.at("tensors")) {
    const std::string kind = entry.at("kind").get<std::string>();
    const std::string name = entry.at("name").get<std::string>();
    const std::string file = entry.at("file").get<std::string>();
    Tensor<Real> t =
        decode_tensor<Real>(binary::read_file((dir / file).string()), entry.at("shape").get<Shape>(), file);
    if (kind == "param") {
      ck.model.params().add(name, std::move(t), entry.value("group", std::string(kAnswerGroup)));
    } else if (kind == "adam_m") {
      ck.adam.moments()[name].first = std::move(t);
    } else if (kind == "adam_v") {
      ck.adam.moments()[name].second = std::move(t);
    } else if (kind == "state") {
      if (name == "memory") {
        ck.state.memory.memory = std::move(t);
      } else if (name == "usage") {
        ck.state.memory.usage = std::move(t);
      } else if (name == "read") {
        ck.state.memory.read = std::move(t);
      } else if (name == "write") {
        ck.state.memory.write = std::move(t);
      } else if (name == "controller_h") {
        ck.state.controller_h = std::move(t);
      } else if (name == "controller_c") {
        ck.state.controller_c = std::move(t);
      } else {
        throw std::runtime_error("unknown state tensor '" + name + "' in checkpoint");
      }
    } else {
      throw std::runtime_error("unknown tensor kind '" + kind + "' in checkpoint");
    }
  }
  return ck;
}

#define MEMVQA_INSTANTIATE_TRAINER(R)                                                                         \
  template Tensor<R> grid_tensor(const FeatureGrid&);                                                        \
  template Checkpoint<R> train(const TrainConfig&, const TrainingData&, const TrainHooks&);                  \
  template EvalMetrics evaluate(Checkpoint<R>&, const Dataset&, const AnswerVocab&, EvalMode,                \
                                const std::set<std::string>&);                                               \
  template void save_checkpoint(const Checkpoint<R>&, const std::filesystem::path&);                         \
  template Checkpoint<R> load_checkpoint(const std::filesystem::path&);

MEMVQA_INSTANTIATE_TRAINER(float)
MEMVQA_INSTANTIATE_TRAINER(double)

}  // namespace memvqa
