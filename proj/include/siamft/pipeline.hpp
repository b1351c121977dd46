#pragma once

#include <algorithm>
#include <deque>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siamft/corpus.hpp"
#include "siamft/encoder.hpp"
#include "siamft/episodes.hpp"
#include "siamft/error.hpp"
#include "siamft/eval.hpp"
#include "siamft/training.hpp"
#include "siamft/vocab.hpp"

namespace siamft {

// The four compared encoder variants.
enum class ModelKind { kOrig, kNaive, kSiamese, kAll };

inline const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kOrig: return "ORIG";
    case ModelKind::kNaive: return "NAIVE";
    case ModelKind::kSiamese: return "SIAMESE";
    case ModelKind::kAll: return "ALL";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "ORIG") return ModelKind::kOrig;
  if (s == "NAIVE") return ModelKind::kNaive;
  if (s == "SIAMESE") return ModelKind::kSiamese;
  if (s == "ALL") return ModelKind::kAll;
  throw ConfigError("unknown model \"" + std::string(s) + "\" (ORIG|NAIVE|SIAMESE|ALL)");
}

// Defaults: 70,000 single-task pairs,
// 10,000 pairs per dataset for ALL, 30 epochs, 5,000 evaluation pairs,
// 512-d embeddings and a 128-d naive hidden layer.
struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<std::string> train_sets;      // NAIVE and SIAMESE
  std::vector<std::string> all_train_sets;  // ALL
  std::vector<std::string> test_sets;
  // Corpora whose text builds the trainable-mode vocabulary. Empty means
  // every corpus named above. Labels are never read from these.
  std::vector<std::string> vocab_sets;
  std::string vocab_file;    // overrides vocab_sets when set
  std::string vectors_file;  // frozen-projection mode input vectors
  std::vector<ModelKind> models{ModelKind::kOrig, ModelKind::kNaive, ModelKind::kSiamese,
                                ModelKind::kAll};

  EncoderConfig encoder;
  std::uint64_t min_count = 1;
  ModelEncoding model_encoding = ModelEncoding::kBinary;

  SiameseConfig siamese;
  NaiveConfig naive;
  std::size_t siamese_pairs = 70000;
  std::size_t all_pairs_per_dataset = 10000;
  double same_fraction = 0.5;
  EvalSpec eval;

  std::uint64_t seed = 0;
  std::string out_dir = "out";

  // Sub-seeds derived from `seed` unless set explicitly.
  std::optional<std::uint64_t> init_seed, episode_seed;

  std::uint64_t effective_init_seed() const { return init_seed.value_or(seed); }
  std::uint64_t effective_episode_seed() const { return episode_seed.value_or(seed + 1); }
};

// Re-derives trainer/eval seeds from the global seed (used when --seed is
// given on the command line without explicit sub-seeds in the config).
inline void apply_global_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.siamese.seed = seed + 2;
  cfg.naive.seed = seed + 3;
  cfg.eval.seed = seed + 4;
}

inline ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  apply_global_seed(cfg, 0);
  return cfg;
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field \"" + where + key + "\": " + e.what());
  }
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError("config section \"" + where + "\" must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError("unknown config field \"" + where + key + "\"");
  }
}

}  // namespace detail

// Parses a JSON configuration document on top of the defaults.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  using detail::read_field;
  ExperimentConfig cfg = default_experiment_config();
  detail::check_keys(j,
                     {"name", "train_sets", "all_train_sets", "test_sets", "vocab_sets",
                      "vocab_file", "vectors_file", "models", "encoder", "siamese", "naive",
                      "episodes", "eval", "seed", "out_dir"},
                     "");
  read_field(j, "seed", cfg.seed, "");
  apply_global_seed(cfg, cfg.seed);
  read_field(j, "name", cfg.name, "");
  read_field(j, "train_sets", cfg.train_sets, "");
  read_field(j, "all_train_sets", cfg.all_train_sets, "");
  read_field(j, "test_sets", cfg.test_sets, "");
  read_field(j, "vocab_sets", cfg.vocab_sets, "");
  read_field(j, "vocab_file", cfg.vocab_file, "");
  read_field(j, "vectors_file", cfg.vectors_file, "");
  read_field(j, "out_dir", cfg.out_dir, "");
  if (j.contains("models")) {
    std::vector<std::string> names;
    read_field(j, "models", names, "");
    cfg.models.clear();
    for (const auto& n : names) cfg.models.push_back(parse_model_kind(n));
  }
  if (const auto it = j.find("encoder"); it != j.end()) {
    detail::check_keys(*it,
                       {"mode", "d_tok", "d_in", "hidden", "d_out", "min_count", "format",
                        "init_seed"},
                       "encoder.");
    std::string mode = to_string(cfg.encoder.mode);
    read_field(*it, "mode", mode, "encoder.");
    cfg.encoder.mode = parse_encoder_mode(mode);
    read_field(*it, "d_tok", cfg.encoder.d_tok, "encoder.");
    read_field(*it, "d_in", cfg.encoder.d_in, "encoder.");
    read_field(*it, "hidden", cfg.encoder.hidden, "encoder.");
    read_field(*it, "d_out", cfg.encoder.d_out, "encoder.");
    read_field(*it, "min_count", cfg.min_count, "encoder.");
    std::string format = "binary";
    read_field(*it, "format", format, "encoder.");
    cfg.model_encoding = parse_model_encoding(format);
    if (it->contains("init_seed")) {
      std::uint64_t s = 0;
      read_field(*it, "init_seed", s, "encoder.");
      cfg.init_seed = s;
    }
  }
  if (const auto it = j.find("siamese"); it != j.end()) {
    detail::check_keys(*it,
                       {"epochs", "batch_size", "learning_rate", "target_same", "target_diff",
                        "epsilon_norm", "seed"},
                       "siamese.");
    auto& s = cfg.siamese;
    read_field(*it, "epochs", s.epochs, "siamese.");
    read_field(*it, "batch_size", s.batch_size, "siamese.");
    read_field(*it, "learning_rate", s.learning_rate, "siamese.");
    read_field(*it, "target_same", s.target_same, "siamese.");
    read_field(*it, "target_diff", s.target_diff, "siamese.");
    read_field(*it, "epsilon_norm", s.epsilon_norm, "siamese.");
    read_field(*it, "seed", s.seed, "siamese.");
  }
  if (const auto it = j.find("naive"); it != j.end()) {
    detail::check_keys(*it, {"epochs", "batch_size", "learning_rate", "hidden_dim", "seed"},
                       "naive.");
    auto& n = cfg.naive;
    read_field(*it, "epochs", n.epochs, "naive.");
    read_field(*it, "batch_size", n.batch_size, "naive.");
    read_field(*it, "learning_rate", n.learning_rate, "naive.");
    read_field(*it, "hidden_dim", n.hidden_dim, "naive.");
    read_field(*it, "seed", n.seed, "naive.");
  }
  if (const auto it = j.find("episodes"); it != j.end()) {
    detail::check_keys(*it, {"pairs", "all_pairs_per_dataset", "same_fraction", "seed"},
                       "episodes.");
    read_field(*it, "pairs", cfg.siamese_pairs, "episodes.");
    read_field(*it, "all_pairs_per_dataset", cfg.all_pairs_per_dataset, "episodes.");
    read_field(*it, "same_fraction", cfg.same_fraction, "episodes.");
    if (it->contains("seed")) {
      std::uint64_t s = 0;
      read_field(*it, "seed", s, "episodes.");
      cfg.episode_seed = s;
    }
  }
  if (const auto it = j.find("eval"); it != j.end()) {
    detail::check_keys(*it, {"n_pairs", "same_fraction", "seed"}, "eval.");
    read_field(*it, "n_pairs", cfg.eval.n_pairs, "eval.");
    read_field(*it, "same_fraction", cfg.eval.same_fraction, "eval.");
    read_field(*it, "seed", cfg.eval.seed, "eval.");
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return parse_experiment_config(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// Checks that `kind` can be trained from `n_train` datasets.
inline void validate_train_sets(ModelKind kind, std::size_t n_train) {
  switch (kind) {
    case ModelKind::kOrig:
      if (n_train != 0) throw ConfigError("train_sets: ORIG takes no training set");
      break;
    case ModelKind::kNaive:
    case ModelKind::kSiamese:
      if (n_train != 1)
        throw ConfigError(std::string("train_sets: ") + to_string(kind) +
                          " requires exactly one training set, got " + std::to_string(n_train));
      break;
    case ModelKind::kAll:
      if (n_train < 2)
        throw ConfigError("all_train_sets: ALL requires at least two training sets, got " +
                          std::to_string(n_train));
      break;
  }
}

inline void validate_common(const ExperimentConfig& cfg) {
  cfg.encoder.validate();
  cfg.siamese.validate();
  cfg.naive.validate();
  cfg.eval.validate();
  if (cfg.siamese_pairs == 0) throw ConfigError("episodes.pairs must be >= 1");
  if (cfg.all_pairs_per_dataset == 0)
    throw ConfigError("episodes.all_pairs_per_dataset must be >= 1");
  if (!(cfg.same_fraction > 0.0 && cfg.same_fraction < 1.0))
    throw ConfigError("episodes.same_fraction must be strictly between 0 and 1");
  if (cfg.min_count == 0) throw ConfigError("encoder.min_count must be >= 1");
  if (cfg.encoder.mode == EncoderMode::kFrozenProjection && cfg.vectors_file.empty())
    throw ConfigError("vectors_file: frozen-projection mode needs a vector table");
}

inline void validate_experiment(const ExperimentConfig& cfg) {
  validate_common(cfg);
  if (cfg.models.empty()) throw ConfigError("models: at least one model is required");
  if (cfg.test_sets.empty()) throw ConfigError("test_sets: at least one test set is required");
  std::set<ModelKind> seen;
  for (ModelKind m : cfg.models) {
    if (!seen.insert(m).second)
      throw ConfigError(std::string("models: ") + to_string(m) + " listed twice");
    if (m == ModelKind::kNaive || m == ModelKind::kSiamese)
      validate_train_sets(m, cfg.train_sets.size());
    if (m == ModelKind::kAll) validate_train_sets(m, cfg.all_train_sets.size());
  }
}

// Loaded corpora plus the encoder input source shared by every model of a
// run.
class Workspace {
 public:
  explicit Workspace(const ExperimentConfig& cfg) : cfg_(cfg) {
    if (!cfg.vectors_file.empty()) vectors_.emplace(load_vectors(cfg.vectors_file));
    if (cfg.encoder.mode == EncoderMode::kFrozenProjection) {
      if (!vectors_)
        throw ConfigError("vectors_file: frozen-projection mode needs a vector table");
      encoder_.d_in = vectors_->dim();
    }
  }

  const Corpus& corpus(const std::string& path) {
    for (const auto& [p, c] : corpora_)
      if (p == path) return c;
    corpora_.emplace_back(path, load_corpus(path));
    return corpora_.back().second;
  }

  std::vector<Corpus> corpora(const std::vector<std::string>& paths) {
    std::vector<Corpus> out;
    for (const auto& p : paths) out.push_back(corpus(p));
    return out;
  }

  const EncoderConfig& encoder_config() const { return encoder_; }

  // Vocabulary for trainable mode: the vocab file, or one built from the
  // configured corpora's text.
  const Vocabulary& vocabulary() {
    if (vocab_) return *vocab_;
    if (!cfg_.vocab_file.empty()) {
      vocab_.emplace(load_vocab(cfg_.vocab_file));
      return *vocab_;
    }
    std::vector<std::string> paths = cfg_.vocab_sets;
    if (paths.empty()) {
      for (const auto* list : {&cfg_.train_sets, &cfg_.all_train_sets, &cfg_.test_sets})
        for (const auto& p : *list)
          if (std::find(paths.begin(), paths.end(), p) == paths.end()) paths.push_back(p);
    }
    if (paths.empty()) throw ConfigError("vocab_sets: no corpus to build a vocabulary from");
    std::vector<const Corpus*> sources;
    for (const auto& p : paths) sources.push_back(&corpus(p));
    vocab_.emplace(build_vocab(sources, cfg_.min_count));
    return *vocab_;
  }

  Featurizer featurizer_for(const Model& model) {
    if (model.config.mode == EncoderMode::kTrainable) return Featurizer(model.vocab);
    if (!vectors_) throw ConfigError("vectors_file: frozen-projection model needs a vector table");
    if (vectors_->dim() != model.config.d_in)
      throw DataError("vector table has dim " + std::to_string(vectors_->dim()) +
                      " but the model expects " + std::to_string(model.config.d_in));
    return Featurizer(*vectors_);
  }

  // The untrained starting point shared by every variant: a seeded random
  // reference encoder in trainable mode, or the identity-like projection in
  // frozen-projection mode.
  Model initial_model() {
    Model m;
    m.config = encoder_;
    if (encoder_.mode == EncoderMode::kTrainable) {
      m.vocab = vocabulary();
      m.params = init_params(encoder_, m.vocab.size(), cfg_.effective_init_seed());
    } else {
      m.params = identity_params(encoder_, cfg_.effective_init_seed());
    }
    return m;
  }

 private:
  ExperimentConfig cfg_;
  EncoderConfig encoder_ = cfg_.encoder;
  std::deque<std::pair<std::string, Corpus>> corpora_;  // stable references
  std::optional<Vocabulary> vocab_;
  std::optional<VectorTable> vectors_;
};

struct TrainOutcome {
  Model model;
  TrainingReport report;
  std::size_t pair_count = 0;
  std::map<std::string, std::size_t> pairs_per_dataset;
};

inline std::vector<EpisodePair> episodes_for(ModelKind kind, const ExperimentConfig& cfg,
                                             std::span<const Corpus> corpora) {
  EpisodeSpec spec;
  spec.same_fraction = cfg.same_fraction;
  spec.seed = cfg.effective_episode_seed();
  for (const auto& c : corpora)
    spec.quotas[c.dataset_id()] =
        kind == ModelKind::kAll ? cfg.all_pairs_per_dataset : cfg.siamese_pairs;
  return generate_episodes(corpora, spec);
}

// Trains one variant starting from the workspace's initial model.
// `pairs_override`, when non-empty, replaces episode generation (replay of a
// pair dump).
inline TrainOutcome train_variant(ModelKind kind, const ExperimentConfig& cfg, Workspace& ws,
                                  const std::vector<std::string>& train_paths,
                                  const ProgressFn& progress = {},
                                  const std::filesystem::path& pairs_file = {}) {
  validate_common(cfg);
  validate_train_sets(kind, train_paths.size());
  TrainOutcome out{ws.initial_model(), {}, 0, {}};
  if (kind == ModelKind::kOrig) return out;

  const auto corpora = ws.corpora(train_paths);
  const Featurizer featurize = ws.featurizer_for(out.model);
  if (kind == ModelKind::kNaive) {
    auto result = train_naive(std::move(out.model.params), out.model.config, corpora.front(),
                              featurize, cfg.naive, progress);
    out.model.params = std::move(result.params);
    out.report = std::move(result.report);
    return out;
  }
  const auto pairs =
      pairs_file.empty() ? episodes_for(kind, cfg, corpora) : read_pairs(pairs_file, corpora);
  out.pair_count = pairs.size();
  for (const auto& p : pairs) ++out.pairs_per_dataset[p.source_dataset];
  auto result = train_siamese(std::move(out.model.params), out.model.config, pairs, corpora,
                              featurize, cfg.siamese, progress);
  out.model.params = std::move(result.params);
  out.report = std::move(result.report);
  return out;
}

inline DeltaReport evaluate_model(const Model& model, const Featurizer& featurize,
                                  const Corpus& test, const EvalSpec& spec) {
  check_params(model.params, model.config);
  return delta_cosine_distance(
      [&](const LabeledExample& ex) { return encode(model.params, model.config, featurize(ex)); },
      test, spec);
}

// Deterministic JSON summary of a training run (no wall-clock values).
inline nlohmann::ordered_json training_summary(ModelKind kind, const TrainOutcome& t) {
  nlohmann::ordered_json j;
  j["model"] = to_string(kind);
  j["mode"] = to_string(t.model.config.mode);
  j["items"] = t.report.item_count;
  j["pairs"] = t.pair_count;
  j["pairs_per_dataset"] = t.pairs_per_dataset;
  j["epoch_loss"] = t.report.epoch_loss;
  if (!t.report.epoch_accuracy.empty()) j["epoch_accuracy"] = t.report.epoch_accuracy;
  return j;
}

inline void write_json(const nlohmann::ordered_json& j, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::string dataset_name(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

// Line-oriented progress log: "<model> epoch <n> loss <mean> elapsed <s>".
inline ProgressFn stderr_progress(std::string label) {
  return [label = std::move(label)](const EpochProgress& p) {
    std::cerr << label << " epoch " << p.epoch << " loss " << detail::format_g9(p.mean_loss)
              << " elapsed " << detail::format_g9(p.seconds) << "s\n";
  };
}

inline const char* kOrigNote =
    "ORIG is a surrogate for an unmodified pretrained encoder: the untrained starting point "
    "shared by all variants (seeded random reference encoder in trainable mode, "
    "identity-like projection of the supplied vectors in frozen-projection mode).";

// Trains every requested variant, evaluates each on every test set, and
// writes <out_dir>/models/<MODEL>.model, <out_dir>/logs/<MODEL>.json,
// <out_dir>/report.tsv and <out_dir>/report.meta.json. On failure an
// <out_dir>/INCOMPLETE file records the error and the exception propagates.
inline std::vector<ReportRow> run_experiment(const ExperimentConfig& cfg,
                                             const ProgressFn& progress_sink = {},
                                             bool log_progress = false) {
  validate_experiment(cfg);
  const std::filesystem::path out_dir(cfg.out_dir);
  std::filesystem::create_directories(out_dir);
  const auto incomplete = out_dir / "INCOMPLETE";
  std::filesystem::remove(incomplete);
  std::filesystem::remove(out_dir / "report.tsv");
  try {
    Workspace ws(cfg);
    std::vector<ReportRow> rows;
    std::vector<Model> models;
    for (ModelKind kind : cfg.models) {
      const auto& sets = kind == ModelKind::kAll ? cfg.all_train_sets
                         : kind == ModelKind::kOrig ? std::vector<std::string>{}
                                                    : cfg.train_sets;
      ProgressFn progress = progress_sink;
      if (log_progress) progress = stderr_progress(to_string(kind));
      auto outcome = train_variant(kind, cfg, ws, sets, progress);
      save_model(outcome.model, out_dir / "models" / (std::string(to_string(kind)) + ".model"),
                 cfg.model_encoding);
      write_json(training_summary(kind, outcome),
                 out_dir / "logs" / (std::string(to_string(kind)) + ".json"));
      models.push_back(std::move(outcome.model));
    }
    for (std::size_t m = 0; m < models.size(); ++m) {
      const Featurizer featurize = ws.featurizer_for(models[m]);
      for (const auto& test_path : cfg.test_sets) {
        rows.push_back({to_string(cfg.models[m]), dataset_name(test_path),
                        evaluate_model(models[m], featurize, ws.corpus(test_path), cfg.eval)});
      }
    }
    emit_report(rows, out_dir / "report.tsv");
    nlohmann::ordered_json meta;
    meta["name"] = cfg.name;
    meta["orig"] = kOrigNote;
    meta["encoder_mode"] = to_string(ws.encoder_config().mode);
    meta["seed"] = cfg.seed;
    meta["eval_pairs"] = cfg.eval.n_pairs;
    write_json(meta, out_dir / "report.meta.json");
    return rows;
  } catch (const std::exception& e) {
    std::ofstream(incomplete) << e.what() << '\n';
    throw;
  }
}

}  // namespace siamft
