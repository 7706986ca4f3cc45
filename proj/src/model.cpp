#include "memvqa/model.hpp"

#include <random>
#include <stdexcept>

#include "memvqa/ops.hpp"

namespace memvqa {

void ModelConfig::validate() const {
  if (question_vocab_size == 0 || embed_dim == 0 || feature_width == 0 || controller_hidden == 0 ||
      head_hidden == 0 || memory_slots == 0 || num_answers == 0) {
    throw std::invalid_argument("model sizes must be positive");
  }
  if (feature_width % 2 != 0 || 2 * hidden_per_direction() != feature_width) {
    throw std::invalid_argument("question feature width 2*H must equal visual width " +
                                std::to_string(feature_width) + " (width must be even)");
  }
  mann_config().validate();
}

nlohmann::ordered_json ModelConfig::to_json() const {
  return {{"question_vocab_size", question_vocab_size},
          {"embed_dim", embed_dim},
          {"feature_width", feature_width},
          {"controller_hidden", controller_hidden},
          {"head_hidden", head_hidden},
          {"memory_slots", memory_slots},
          {"num_answers", num_answers},
          {"gamma", gamma},
          {"truncation_n", truncation_n},
          {"external_memory", external_memory},
          {"memory_init", memory_init == MemoryInit::uniform ? "uniform" : "constant"},
          {"memory_seed", memory_seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.question_vocab_size = j.at("question_vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.feature_width = j.at("feature_width").get<std::size_t>();
  c.controller_hidden = j.at("controller_hidden").get<std::size_t>();
  c.head_hidden = j.at("head_hidden").get<std::size_t>();
  c.memory_slots = j.at("memory_slots").get<std::size_t>();
  c.num_answers = j.at("num_answers").get<std::size_t>();
  c.gamma = j.at("gamma").get<double>();
  c.truncation_n = j.at("truncation_n").get<std::size_t>();
  c.external_memory = j.at("external_memory").get<bool>();
  c.memory_init = j.at("memory_init").get<std::string>() == "uniform" ? MemoryInit::uniform : MemoryInit::constant;
  c.memory_seed = j.at("memory_seed").get<std::uint64_t>();
  return c;
}

QuestionEncoderConfig ModelConfig::encoder_config() const {
  return {question_vocab_size, embed_dim, hidden_per_direction()};
}

MannConfig ModelConfig::mann_config() const {
  MannConfig m;
  m.input_size = 2 * feature_width;
  m.hidden_size = controller_hidden;
  m.slots = memory_slots;
  m.gamma = gamma;
  m.truncation_n = truncation_n;
  m.memory_init_kind = memory_init;
  m.memory_seed = memory_seed;
  return m;
}

template <typename Real>
Model<Real>::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  mann_config_ = config_.mann_config();
  encoder_ = QuestionEncoderParams::from_config(config_.encoder_config());
  coattention_.width = config_.feature_width;
  mann_ = MannParams::from_config(mann_config_);
  head_.input_size = 2 * config_.controller_hidden;
  head_.hidden_size = config_.head_hidden;
  head_.num_answers = config_.num_answers;
}

template <typename Real>
Model<Real> Model<Real>::initialize(ModelConfig config, std::uint64_t seed) {
  Model model(std::move(config));
  std::mt19937_64 rng(seed);
  init_question_encoder(model.params_, model.config_.encoder_config(), rng);
  init_coattention(model.params_, model.coattention_, kAnswerGroup, rng);
  init_mann(model.params_, model.mann_config_, kAnswerGroup, rng);
  init_head(model.params_, model.head_, kAnswerGroup, rng);
  return model;
}

template <typename Real>
ForwardResult<Real> Model<Real>::forward(Graph<Real>& graph, const Tensor<Real>& grid,
                                         std::span<const std::size_t> tokens, const MannGraphState<Real>& state,
                                         bool write_enabled) {
  if (grid.rank() != 2 || grid.cols() != config_.feature_width) {
    throw std::invalid_argument("forward: feature grid " + shape_string(grid.shape()) + " does not have width " +
                                std::to_string(config_.feature_width));
  }
  ForwardResult<Real> out;
  Var<Real> regions = graph.constant(grid);
  Var<Real> question = encode_question(graph, params_, encoder_, tokens);
  out.coattention = coattend(params_, coattention_, regions, question);

  if (config_.external_memory) {
    auto step = mann_step(params_, mann_, mann_config_, out.coattention.joint, state, write_enabled);
    out.hidden = step.out.hidden;
    out.embedding = step.out.output;
    out.memory = step.out;
    out.next = step.next;
  } else {
    LstmState<Real> controller = controller_step(params_, mann_, out.coattention.joint, state.controller);
    out.hidden = controller.h;
    out.embedding = concat<Real>({controller.h, graph.constant(Tensor<Real>({config_.controller_hidden}))});
    out.next = state;
    out.next.controller = controller;
  }
  out.probs = predict(params_, head_, out.embedding);
  return out;
}

template class Model<float>;
template class Model<double>;

}  // namespace memvqa
