// memvqa command-line entry point: gen-synth, train, eval, inspect.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "memvqa/binary_io.hpp"
#include "memvqa/synth.hpp"
#include "memvqa/trainer.hpp"

namespace fs = std::filesystem;
using namespace memvqa;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  binary::write_file(path.string(), j.dump(2) + "\n");
}

// Refuses to write into a non-empty directory unless forced.
void prepare_output_dir(const fs::path& out, bool force) {
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw UsageError("output path '" + out.string() + "' is not a directory");
    if (!fs::is_empty(out)) {
      if (!force) throw UsageError("output directory '" + out.string() + "' is not empty (use --force)");
      fs::remove_all(out);
    }
  }
  fs::create_directories(out);
}

void require_data_dir(const fs::path& data) {
  if (!fs::is_directory(data)) throw UsageError("data directory '" + data.string() + "' does not exist");
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

// A run directory holds checkpoint/; a checkpoint directory holds manifest.json.
fs::path resolve_checkpoint(const fs::path& path) {
  if (fs::exists(path / "checkpoint" / "manifest.json")) return path / "checkpoint";
  if (fs::exists(path / "manifest.json")) return path;
  throw UsageError("no checkpoint found at '" + path.string() + "'");
}

std::set<std::string> rare_answers_for(const fs::path& data) {
  const auto manifest_path = data / "manifest.json";
  if (!fs::exists(manifest_path)) return {};
  const auto answers = read_manifest(manifest_path).rare_answers();
  return {answers.begin(), answers.end()};
}

// ---- gen-synth ----

struct GenSynthOptions {
  SynthTaskConfig config;
  fs::path out;
  bool force = false;
};

int run_gen_synth(const GenSynthOptions& opt) {
  try {
    opt.config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  prepare_output_dir(opt.out, opt.force);
  const auto manifest = write_synth_task(opt.config, opt.out);
  write_json(opt.out / "resolved_config.json", {{"command", "gen-synth"}, {"config", opt.config.to_json()}});
  std::cout << "wrote " << manifest.classes.size() << " classes, " << opt.config.train_examples << " train and "
            << opt.config.test_examples << " test examples to " << opt.out.string() << "\n";
  return 0;
}

// ---- train ----

struct TrainOptions {
  fs::path config_path;
  fs::path data;
  fs::path out;
  bool force = false;
  bool no_external_memory = false;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> precision;
  std::optional<std::string> memory_reset;
  bool memory_trace = false;
};

template <typename Real>
void train_and_save(const TrainConfig& config, const TrainingData& data, const fs::path& out, bool trace) {
  std::ofstream metrics(out / "metrics.jsonl");
  std::ofstream trace_file;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) {
    metrics << m.to_json().dump() << '\n';
    metrics.flush();
    std::cerr << "epoch " << m.epoch << " loss " << m.loss << " train_acc " << m.train_acc << "\n";
  };
  if (trace) {
    trace_file.open(out / "memory_trace.jsonl");
    hooks.memory_trace = &trace_file;
  }
  const auto checkpoint = train<Real>(config, data, hooks);
  save_checkpoint(checkpoint, out / "checkpoint");
}

int run_train(const TrainOptions& opt) {
  require_data_dir(opt.data);
  TrainConfig config;
  try {
    if (!opt.config_path.empty()) config = TrainConfig::from_json(read_json_file(opt.config_path));
    if (opt.no_external_memory) config.external_memory_enabled = false;
    if (opt.epochs) config.epochs = *opt.epochs;
    if (opt.seed) config.seed = *opt.seed;
    if (opt.precision) config.precision = *opt.precision;
    if (opt.memory_reset) {
      auto j = config.to_json();
      j["memory_reset"] = *opt.memory_reset;
      config = TrainConfig::from_json(j);
    }
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  prepare_output_dir(opt.out, opt.force);
  write_json(opt.out / "resolved_config.json", config.to_json());

  const TrainingData data = load_training_data(opt.data, config.vocab_k);
  write_json(opt.out / "answer_vocab.json", data.answer_vocab.to_json());
  if (config.precision == "f64") {
    train_and_save<double>(config, data, opt.out, opt.memory_trace);
  } else {
    train_and_save<float>(config, data, opt.out, opt.memory_trace);
  }
  std::cout << "checkpoint written to " << (opt.out / "checkpoint").string() << "\n";
  return 0;
}

// ---- eval ----

struct EvalOptions {
  fs::path checkpoint;
  fs::path data;
  std::string split = "test";
  std::string mode = "open-ended";
  fs::path vocab;
  fs::path out;
  fs::path predictions;
};

template <typename Real>
EvalMetrics evaluate_from_disk(const fs::path& ck_dir, const EvalOptions& opt) {
  auto checkpoint = load_checkpoint<Real>(ck_dir);
  const Dataset dataset = load_split(opt.data, opt.split, checkpoint.question_vocab, checkpoint.answer_vocab);
  const EvalMode mode = opt.mode == "multiple-choice" ? EvalMode::multiple_choice : EvalMode::open_ended;
  if (mode == EvalMode::multiple_choice && !dataset.has_multiple_choices()) {
    throw UsageError("--mode multiple-choice needs candidate answers, but split '" + opt.split + "' has none");
  }
  const AnswerVocab dataset_vocab =
      opt.vocab.empty() ? checkpoint.answer_vocab : AnswerVocab::from_json(read_json_file(opt.vocab));
  return evaluate(checkpoint, dataset, dataset_vocab, mode, rare_answers_for(opt.data));
}

int run_eval(const EvalOptions& opt) {
  require_data_dir(opt.data);
  const fs::path ck_dir = resolve_checkpoint(opt.checkpoint);
  const EvalMetrics metrics = checkpoint_precision(ck_dir) == "f64" ? evaluate_from_disk<double>(ck_dir, opt)
                                                                    : evaluate_from_disk<float>(ck_dir, opt);
  auto j = metrics.to_json();
  j["split"] = opt.split;
  j["checkpoint"] = ck_dir.string();
  if (opt.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json(opt.out, j);
  }
  if (!opt.predictions.empty()) {
    std::string lines;
    for (const auto& p : metrics.predictions) lines += p.to_json().dump() + "\n";
    binary::write_file(opt.predictions.string(), lines);
  }
  return 0;
}

// ---- inspect ----

struct InspectOptions {
  fs::path checkpoint;
  fs::path data;
  std::string split = "test";
  std::vector<std::int64_t> question_ids;
  std::size_t limit = 1;
  fs::path out;
  bool force = false;
};

std::vector<std::size_t> top_indices(const std::vector<double>& weights, std::size_t k) {
  std::vector<std::size_t> idx(weights.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

template <typename Real>
std::vector<double> to_doubles(const Tensor<Real>& t) {
  return {t.data().begin(), t.data().end()};
}

// Replays the selected examples as one stream with the write path enabled,
// starting from the checkpointed memory, so the trace shows addressing dynamics.
template <typename Real>
void inspect_from_disk(const fs::path& ck_dir, const InspectOptions& opt) {
  auto checkpoint = load_checkpoint<Real>(ck_dir);
  const Dataset dataset = load_split(opt.data, opt.split, checkpoint.question_vocab, checkpoint.answer_vocab);

  std::vector<const ExampleRecord*> selected;
  if (opt.question_ids.empty()) {
    for (std::size_t i = 0; i < std::min(opt.limit, dataset.records.size()); ++i) selected.push_back(&dataset.records[i]);
  } else {
    for (auto id : opt.question_ids) {
      auto it = std::find_if(dataset.records.begin(), dataset.records.end(),
                             [&](const ExampleRecord& r) { return r.question_id == id; });
      if (it == dataset.records.end()) {
        std::ostringstream msg;
        msg << "unknown question_id " << id << "; available ids:";
        for (const auto& r : dataset.records) msg << ' ' << r.question_id;
        throw std::runtime_error(msg.str());
      }
      selected.push_back(&*it);
    }
  }

  const auto questions = read_questions(opt.data / opt.split / "questions.jsonl");
  std::ofstream attention(opt.out / "attention.jsonl");
  std::ofstream trace(opt.out / "memory_trace.jsonl");
  MannState<Real> state = checkpoint.state;
  std::size_t step = 0;
  for (const ExampleRecord* ex : selected) {
    Graph<Real> graph;
    auto bound = MannGraphState<Real>::constant(graph, state);
    auto fwd = checkpoint.model.forward(graph, grid_tensor<Real>(dataset.grid(ex->image_id)), ex->question_tokens,
                                        bound, true);
    const auto alpha_words = to_doubles(fwd.coattention.question.weights.value());
    nlohmann::ordered_json top = nlohmann::ordered_json::array();
    for (std::size_t i : top_indices(alpha_words, 3)) {
      top.push_back({{"index", i}, {"token", checkpoint.question_vocab.token(ex->question_tokens[i])},
                     {"weight", alpha_words[i]}});
    }
    const auto probs = fwd.probs.value();
    const std::size_t best = argmax(probs.data());
    nlohmann::ordered_json record = {{"question_id", ex->question_id},
                                     {"image_id", ex->image_id},
                                     {"alpha_regions", to_doubles(fwd.coattention.visual.weights.value())},
                                     {"alpha_words", alpha_words},
                                     {"top_words", top},
                                     {"answer", checkpoint.answer_vocab.answer(best)},
                                     {"prob", static_cast<double>(probs[best])}};
    for (const auto& q : questions) {
      if (q.question_id == ex->question_id) record["question"] = q.question;
    }
    attention << record.dump() << '\n';
    ++step;
    if (fwd.memory) {
      trace << nlohmann::ordered_json{{"step", step},
                                      {"w_r", to_doubles(fwd.memory->read.weights.value())},
                                      {"w_w", to_doubles(fwd.memory->write_weights.value())},
                                      {"w_u", to_doubles(fwd.memory->usage.value())}}
                   .dump()
            << '\n';
    }
    state = fwd.next.values();
  }
}

int run_inspect(const InspectOptions& opt) {
  require_data_dir(opt.data);
  const fs::path ck_dir = resolve_checkpoint(opt.checkpoint);
  prepare_output_dir(opt.out, opt.force);
  write_json(opt.out / "resolved_config.json", {{"command", "inspect"},
                                                {"checkpoint", ck_dir.string()},
                                                {"data", opt.data.string()},
                                                {"split", opt.split},
                                                {"question_ids", opt.question_ids},
                                                {"limit", opt.limit}});
  if (checkpoint_precision(ck_dir) == "f64") {
    inspect_from_disk<double>(ck_dir, opt);
  } else {
    inspect_from_disk<float>(ck_dir, opt);
  }
  std::cout << "attention and memory trace written to " << opt.out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory-augmented co-attention VQA: synthetic data, training, evaluation, inspection"};
  app.require_subcommand(1);

  GenSynthOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic heavy-tailed VQA task");
  gen_cmd->add_option("--classes", gen.config.classes, "Number of answer classes")->capture_default_str();
  gen_cmd->add_option("--zipf", gen.config.zipf_exponent, "Zipf exponent of class frequencies")
      ->capture_default_str();
  gen_cmd->add_option("--vocabulary-size", gen.config.vocabulary_size, "Filler words in question templates")
      ->capture_default_str();
  gen_cmd->add_option("--regions", gen.config.regions, "Regions per image (N)")->capture_default_str();
  gen_cmd->add_option("--feature-width", gen.config.feature_width, "Region feature width (Dv)")
      ->capture_default_str();
  gen_cmd->add_option("--train-examples", gen.config.train_examples)->capture_default_str();
  gen_cmd->add_option("--test-examples", gen.config.test_examples)->capture_default_str();
  gen_cmd->add_option("--question-types", gen.config.question_types)->capture_default_str();
  gen_cmd->add_option("--signature-scale", gen.config.signature_scale)->capture_default_str();
  gen_cmd->add_option("--noise-scale", gen.config.noise_scale)->capture_default_str();
  gen_cmd->add_option("--seed", gen.config.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a data directory");
  train_cmd->add_option("--config", tr.config_path, "JSON file with TrainConfig fields");
  train_cmd->add_option("--data", tr.data, "Data directory")->required();
  train_cmd->add_option("--out", tr.out, "Run directory")->required();
  train_cmd->add_flag("--no-external-memory", tr.no_external_memory, "Ablation arm: head consumes [h, 0]");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--precision", tr.precision)->check(CLI::IsMember({"f32", "f64"}));
  train_cmd->add_option("--memory-reset", tr.memory_reset)->check(CLI::IsMember({"never", "epoch"}));
  train_cmd->add_flag("--memory-trace", tr.memory_trace, "Write memory_trace.jsonl, one line per step");
  train_cmd->add_flag("--force", tr.force, "Overwrite a non-empty run directory");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Run or checkpoint directory")->required();
  eval_cmd->add_option("--data", ev.data, "Data directory")->required();
  eval_cmd->add_option("--split", ev.split)->capture_default_str();
  eval_cmd->add_option("--mode", ev.mode)->check(CLI::IsMember({"open-ended", "multiple-choice"}))
      ->capture_default_str();
  eval_cmd->add_option("--vocab", ev.vocab, "Answer vocabulary the dataset was labeled with");
  eval_cmd->add_option("--out", ev.out, "Metrics JSON path (default: stdout)");
  eval_cmd->add_option("--predictions", ev.predictions, "Prediction JSON lines path");

  InspectOptions in;
  auto* inspect_cmd = app.add_subcommand("inspect", "Dump attention weights and a memory trace");
  inspect_cmd->add_option("--checkpoint", in.checkpoint, "Run or checkpoint directory")->required();
  inspect_cmd->add_option("--data", in.data, "Data directory")->required();
  inspect_cmd->add_option("--split", in.split)->capture_default_str();
  inspect_cmd->add_option("--question-id", in.question_ids, "Question ids to inspect (repeatable)");
  inspect_cmd->add_option("--limit", in.limit, "Examples to inspect when no id is given")->capture_default_str();
  inspect_cmd->add_option("--out", in.out, "Output directory")->required();
  inspect_cmd->add_flag("--force", in.force);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_synth(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*inspect_cmd) return run_inspect(in);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
