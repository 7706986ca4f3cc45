#include "memvqa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "memvqa/binary_io.hpp"
#include "memvqa/dataset.hpp"
#include "memvqa/feature_grid.hpp"

namespace memvqa {

namespace {

const std::vector<std::string> kTypeWords = {"color", "animal", "food", "vehicle", "sport",
                                             "tool",  "plant",  "toy",  "fruit",   "shape"};
const std::vector<std::string> kFillerWords = {"picture", "image", "photo", "scene",  "room",   "street", "park",
                                               "kitchen", "field", "table", "window", "corner", "garden", "beach",
                                               "yard",    "shop",  "road",  "wall",   "shelf",  "floor"};
const std::vector<std::string> kTemplates = {"what {t} is in the {f}", "which {t} can you see in the {f}",
                                             "what {t} is shown near the {f}", "name the {t} in this {f}"};

std::string type_word(std::size_t type) {
  return type < kTypeWords.size() ? kTypeWords[type] : "type" + std::to_string(type);
}

std::string filler_word(std::size_t i) {
  return i < kFillerWords.size() ? kFillerWords[i] : "word" + std::to_string(i);
}

std::string fill_template(const std::string& tmpl, const std::string& type, const std::string& filler) {
  std::string out = tmpl;
  out.replace(out.find("{t}"), 3, type);
  out.replace(out.find("{f}"), 3, filler);
  return out;
}

}  // namespace

void SynthTaskConfig::validate() const {
  if (classes == 0 || vocabulary_size == 0 || regions == 0 || feature_width == 0 || train_examples == 0 ||
      question_types == 0) {
    throw std::invalid_argument("synthetic task sizes must be positive");
  }
  if (!(zipf_exponent > 0.0) || !std::isfinite(zipf_exponent)) {
    throw std::invalid_argument("zipf exponent must be finite and positive");
  }
  if (question_types > classes) throw std::invalid_argument("more question types than classes");
  if (!(signature_scale > 0.0) || !(noise_scale >= 0.0)) throw std::invalid_argument("invalid feature scales");
}

nlohmann::ordered_json SynthTaskConfig::to_json() const {
  return {{"classes", classes},
          {"zipf_exponent", zipf_exponent},
          {"vocabulary_size", vocabulary_size},
          {"regions", regions},
          {"feature_width", feature_width},
          {"train_examples", train_examples},
          {"test_examples", test_examples},
          {"question_types", question_types},
          {"signature_scale", signature_scale},
          {"noise_scale", noise_scale},
          {"seed", seed}};
}

SynthTaskConfig SynthTaskConfig::from_json(const nlohmann::json& j) {
  SynthTaskConfig c;
  c.classes = j.value("classes", c.classes);
  c.zipf_exponent = j.value("zipf_exponent", c.zipf_exponent);
  c.vocabulary_size = j.value("vocabulary_size", c.vocabulary_size);
  c.regions = j.value("regions", c.regions);
  c.feature_width = j.value("feature_width", c.feature_width);
  c.train_examples = j.value("train_examples", c.train_examples);
  c.test_examples = j.value("test_examples", c.test_examples);
  c.question_types = j.value("question_types", c.question_types);
  c.signature_scale = j.value("signature_scale", c.signature_scale);
  c.noise_scale = j.value("noise_scale", c.noise_scale);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<std::string> SynthManifest::rare_answers() const {
  std::vector<std::string> out;
  for (std::size_t id : rare_class_ids) out.push_back(classes.at(id).answer);
  return out;
}

nlohmann::ordered_json SynthManifest::to_json() const {
  nlohmann::ordered_json freqs = nlohmann::ordered_json::array();
  for (const auto& c : classes) {
    freqs.push_back({{"id", c.id},
                     {"answer", c.answer},
                     {"question_type", c.question_type},
                     {"probability", c.probability},
                     {"train_count", c.train_count},
                     {"test_count", c.test_count}});
  }
  return {{"class_freqs", freqs}, {"rare_class_ids", rare_class_ids}, {"seed", config.seed},
          {"config", config.to_json()}};
}

SynthManifest SynthManifest::from_json(const nlohmann::json& j) {
  SynthManifest m;
  m.config = SynthTaskConfig::from_json(j.at("config"));
  for (const auto& c : j.at("class_freqs")) {
    SynthClass sc;
    sc.id = c.at("id").get<std::size_t>();
    sc.answer = c.at("answer").get<std::string>();
    sc.question_type = c.value("question_type", "");
    sc.probability = c.value("probability", 0.0);
    sc.train_count = c.value("train_count", std::size_t{0});
    sc.test_count = c.value("test_count", std::size_t{0});
    m.classes.push_back(std::move(sc));
  }
  m.rare_class_ids = j.at("rare_class_ids").get<std::vector<std::size_t>>();
  return m;
}

std::vector<double> zipf_probabilities(std::size_t classes, double exponent) {
  std::vector<double> p(classes);
  double total = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    p[k] = std::pow(static_cast<double>(k + 1), -exponent);
    total += p[k];
  }
  for (double& v : p) v /= total;
  return p;
}

std::size_t rare_class_count(std::size_t classes) { return (classes + 3) / 4; }

std::string synth_answer(std::size_t class_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "c%03zu", class_id);
  return buf;
}

SynthSplits generate_synth_task(const SynthTaskConfig& config) {
  config.validate();
  const std::size_t K = config.classes;
  const std::size_t D = config.feature_width;
  const std::size_t N = config.regions;
  std::mt19937_64 rng(config.seed);

  SynthSplits out;
  out.manifest.config = config;
  const auto probs = zipf_probabilities(K, config.zipf_exponent);
  for (std::size_t k = 0; k < K; ++k) {
    SynthClass c;
    c.id = k;
    c.answer = synth_answer(k);
    c.question_type = type_word(k % config.question_types);
    c.probability = probs[k];
    out.manifest.classes.push_back(std::move(c));
  }
  const std::size_t rare = rare_class_count(K);
  for (std::size_t k = K - rare; k < K; ++k) out.manifest.rare_class_ids.push_back(k);

  std::normal_distribution<double> signature_dist(0.0, config.signature_scale);
  std::vector<std::vector<float>> signatures(K, std::vector<float>(D));
  for (auto& s : signatures) {
    for (auto& v : s) v = static_cast<float>(signature_dist(rng));
  }

  std::discrete_distribution<std::size_t> class_dist(probs.begin(), probs.end());
  std::normal_distribution<double> noise_dist(0.0, 1.0);

  auto make_split = [&](std::size_t count, const std::string& prefix, std::int64_t id_base, bool train) {
    std::vector<SynthExample> split;
    split.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      SynthExample ex;
      const std::size_t cls = class_dist(rng);
      const std::size_t type = cls % config.question_types;
      ex.class_id = cls;
      ex.question_id = id_base + static_cast<std::int64_t>(i) + 1;
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%06zu", prefix.c_str(), i + 1);
      ex.image_id = id;

      // Distractor object: a uniformly chosen class of another question type.
      std::size_t distractor = cls;
      if (config.question_types > 1) {
        std::uniform_int_distribution<std::size_t> pick(0, K - 1);
        do {
          distractor = pick(rng);
        } while (distractor % config.question_types == type);
      }
      std::uniform_int_distribution<std::size_t> region(0, N - 1);
      const std::size_t target_region = region(rng);
      std::size_t distractor_region = target_region;
      if (N > 1) {
        do {
          distractor_region = region(rng);
        } while (distractor_region == target_region);
      }

      ex.features.resize(N * D);
      for (auto& v : ex.features) v = static_cast<float>(config.noise_scale * noise_dist(rng));
      for (std::size_t d = 0; d < D; ++d) ex.features[target_region * D + d] += signatures[cls][d];
      if (distractor != cls && N > 1) {
        for (std::size_t d = 0; d < D; ++d) ex.features[distractor_region * D + d] += signatures[distractor][d];
      }

      std::uniform_int_distribution<std::size_t> tmpl(0, kTemplates.size() - 1);
      std::uniform_int_distribution<std::size_t> filler(0, config.vocabulary_size - 1);
      const std::size_t template_index = tmpl(rng);
      const std::size_t filler_index = filler(rng);
      ex.question_type = type_word(type);
      ex.question = fill_template(kTemplates[template_index], ex.question_type, filler_word(filler_index));

      // Ten human answers; up to two disagree with a random other class.
      ex.answers.assign(10, synth_answer(cls));
      std::uniform_int_distribution<std::size_t> disagree(0, 2);
      const std::size_t noisy = K > 1 ? disagree(rng) : 0;
      for (std::size_t a = 0; a < noisy; ++a) {
        std::uniform_int_distribution<std::size_t> pick(0, K - 1);
        std::size_t other;
        do {
          other = pick(rng);
        } while (other == cls);
        ex.answers[9 - a] = synth_answer(other);
      }

      // Four candidates: the answer plus three other classes, shuffled.
      std::vector<std::size_t> choices{cls};
      std::uniform_int_distribution<std::size_t> pick(0, K - 1);
      while (choices.size() < std::min<std::size_t>(4, K)) {
        const std::size_t c = pick(rng);
        if (std::find(choices.begin(), choices.end(), c) == choices.end()) choices.push_back(c);
      }
      std::shuffle(choices.begin(), choices.end(), rng);
      for (std::size_t c : choices) ex.multiple_choices.push_back(synth_answer(c));

      auto& meta = out.manifest.classes[cls];
      (train ? meta.train_count : meta.test_count) += 1;
      split.push_back(std::move(ex));
    }
    return split;
  };

  out.train = make_split(config.train_examples, "train", 0, true);
  out.test = make_split(config.test_examples, "test", 1000000, false);
  return out;
}

namespace {

void write_split(const std::vector<SynthExample>& split, const SynthTaskConfig& config,
                 const std::filesystem::path& dir, const std::filesystem::path& features) {
  std::filesystem::create_directories(dir);
  std::string lines;
  for (const auto& ex : split) {
    nlohmann::ordered_json j = {{"question_id", ex.question_id},
                                {"image_id", ex.image_id},
                                {"question", ex.question},
                                {"answers", ex.answers},
                                {"multiple_choices", ex.multiple_choices},
                                {"question_type", ex.question_type}};
    lines += j.dump();
    lines.push_back('\n');
    FeatureGrid grid;
    grid.image_id = ex.image_id;
    grid.regions = Tensor<float>::matrix(config.regions, config.feature_width, ex.features);
    save_feature_grid(feature_path(features, ex.image_id), grid);
  }
  binary::write_file((dir / "questions.jsonl").string(), lines);
}

}  // namespace

SynthManifest write_synth_task(const SynthTaskConfig& config, const std::filesystem::path& out) {
  const SynthSplits splits = generate_synth_task(config);
  const auto features = out / "features";
  std::filesystem::create_directories(features);
  write_split(splits.train, config, out / "train", features);
  write_split(splits.test, config, out / "test", features);
  binary::write_file((out / "manifest.json").string(), splits.manifest.to_json().dump(2) + "\n");
  return splits.manifest;
}

SynthManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  try {
    return SynthManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest '" + path.string() + "': " + e.what());
  }
}

}  // namespace memvqa
