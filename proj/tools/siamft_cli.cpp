// siamft: command-line front end for corpus preparation, Siamese / naive
// finetuning, and delta-cosine-distance evaluation.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "siamft/siamft.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::optional<std::string> out_dir;
  std::optional<std::string> format;
};

// Options shared by train and eval that map onto config fields.
struct ModelOptions {
  std::optional<std::string> mode;
  std::optional<std::size_t> d_tok, d_in, hidden, d_out, min_count;
  std::optional<std::size_t> epochs, batch_size, naive_hidden, pairs, n_pairs;
  std::optional<double> learning_rate, same_fraction;
  std::optional<std::string> vocab, vectors;
  std::vector<std::string> vocab_from;
};

template <typename T>
void patch(json& j, const char* section, const char* key, const std::optional<T>& value) {
  if (!value) return;
  if (section == nullptr) {
    j[key] = *value;
  } else {
    j[section][key] = *value;
  }
}

// flag > config file > built-in default
siamft::ExperimentConfig resolve_config(const GlobalOptions& g, const ModelOptions* m,
                                        json overrides = json::object()) {
  json doc = json::object();
  if (!g.config.empty()) {
    std::ifstream in(g.config);
    if (!in) throw siamft::ConfigError("cannot open config " + g.config);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw siamft::ConfigError(g.config + ": " + e.what());
    }
    if (!doc.is_object()) throw siamft::ConfigError(g.config + ": config must be an object");
  }
  patch(doc, nullptr, "seed", g.seed);
  patch(doc, nullptr, "out_dir", g.out_dir);
  patch(doc, "encoder", "format", g.format);
  if (m != nullptr) {
    patch(doc, "encoder", "mode", m->mode);
    patch(doc, "encoder", "d_tok", m->d_tok);
    patch(doc, "encoder", "d_in", m->d_in);
    patch(doc, "encoder", "hidden", m->hidden);
    patch(doc, "encoder", "d_out", m->d_out);
    patch(doc, "encoder", "min_count", m->min_count);
    if (m->epochs) {
      doc["siamese"]["epochs"] = *m->epochs;
      doc["naive"]["epochs"] = *m->epochs;
    }
    if (m->batch_size) {
      doc["siamese"]["batch_size"] = *m->batch_size;
      doc["naive"]["batch_size"] = *m->batch_size;
    }
    if (m->learning_rate) {
      doc["siamese"]["learning_rate"] = *m->learning_rate;
      doc["naive"]["learning_rate"] = *m->learning_rate;
    }
    patch(doc, "naive", "hidden_dim", m->naive_hidden);
    patch(doc, "episodes", "same_fraction", m->same_fraction);
    patch(doc, "eval", "n_pairs", m->n_pairs);
    patch(doc, nullptr, "vocab_file", m->vocab);
    patch(doc, nullptr, "vectors_file", m->vectors);
    if (!m->vocab_from.empty()) doc["vocab_sets"] = m->vocab_from;
  }
  doc.merge_patch(overrides);
  return siamft::parse_experiment_config(doc);
}

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--mode", m.mode, "encoder mode: trainable | frozen-projection");
  cmd->add_option("--d-tok", m.d_tok, "token embedding width");
  cmd->add_option("--d-in", m.d_in, "input vector width (frozen mode)");
  cmd->add_option("--hidden", m.hidden, "encoder hidden width");
  cmd->add_option("--d-out", m.d_out, "embedding width");
  cmd->add_option("--min-count", m.min_count, "vocabulary frequency cutoff");
  cmd->add_option("--vocab", m.vocab, "vocabulary file (build-vocab output)");
  cmd->add_option("--vocab-from", m.vocab_from, "corpora whose text builds the vocabulary");
  cmd->add_option("--vectors", m.vectors, "precomputed vector file (frozen mode)");
}

int run_build_vocab(const GlobalOptions& g, const std::vector<std::string>& corpora,
                    std::optional<std::size_t> min_count, std::string out) {
  const auto cfg = resolve_config(g, nullptr);
  std::vector<siamft::Corpus> loaded;
  for (const auto& p : corpora) loaded.push_back(siamft::load_corpus(p));
  std::vector<const siamft::Corpus*> sources;
  for (const auto& c : loaded) sources.push_back(&c);
  const auto vocab = siamft::build_vocab(sources, min_count.value_or(cfg.min_count));
  if (out.empty()) out = (fs::path(cfg.out_dir) / "vocab.tsv").string();
  siamft::write_vocab(vocab, out);
  std::cerr << "wrote " << vocab.size() << " tokens to " << out << '\n';
  return 0;
}

int run_gen_pairs(const GlobalOptions& g, const std::vector<std::string>& corpora,
                  std::optional<std::size_t> pairs, std::optional<double> same_fraction,
                  std::string out) {
  const auto cfg = resolve_config(g, nullptr);
  std::vector<siamft::Corpus> loaded;
  for (const auto& p : corpora) loaded.push_back(siamft::load_corpus(p));
  siamft::EpisodeSpec spec;
  spec.same_fraction = same_fraction.value_or(cfg.same_fraction);
  spec.seed = cfg.effective_episode_seed();
  const std::size_t default_quota =
      loaded.size() == 1 ? cfg.siamese_pairs : cfg.all_pairs_per_dataset;
  for (const auto& c : loaded) spec.quotas[c.dataset_id()] = pairs.value_or(default_quota);
  const auto episodes = siamft::generate_episodes(loaded, spec);
  if (out.empty()) out = (fs::path(cfg.out_dir) / "pairs.tsv").string();
  siamft::write_pairs(episodes, loaded, out);
  std::cerr << "wrote " << episodes.size() << " pairs to " << out << '\n';
  return 0;
}

int run_train(const GlobalOptions& g, const ModelOptions& m, const std::string& model_name,
              const std::vector<std::string>& train, const std::string& pairs_file,
              std::string out) {
  const auto kind = siamft::parse_model_kind(model_name);
  json overrides = json::object();
  if (kind == siamft::ModelKind::kAll) {
    overrides["all_train_sets"] = train;
    if (m.pairs) overrides["episodes"]["all_pairs_per_dataset"] = *m.pairs;
  } else {
    overrides["train_sets"] = train;
    if (m.pairs) overrides["episodes"]["pairs"] = *m.pairs;
  }
  if (!train.empty() && m.vocab_from.empty() && !m.vocab)
    overrides["vocab_sets"] = train;  // vocabulary defaults to the training text
  const auto cfg = resolve_config(g, &m, overrides);
  siamft::validate_common(cfg);
  siamft::validate_train_sets(kind, train.size());

  siamft::Workspace ws(cfg);
  const auto outcome =
      siamft::train_variant(kind, cfg, ws, train, siamft::stderr_progress(model_name),
                            pairs_file);
  if (out.empty()) out = (fs::path(cfg.out_dir) / (model_name + ".model")).string();
  siamft::save_model(outcome.model, out, cfg.model_encoding);
  siamft::write_json(siamft::training_summary(kind, outcome), out + ".json");
  std::cerr << "wrote " << out << '\n';
  return 0;
}

int run_eval(const GlobalOptions& g, const ModelOptions& m,
             const std::vector<std::string>& model_files, bool orig,
             const std::vector<std::string>& tests, std::string report) {
  if (model_files.empty() && !orig)
    throw siamft::ConfigError("eval needs --model-file or --orig");
  json overrides = json::object();
  overrides["test_sets"] = tests;
  const auto cfg = resolve_config(g, &m, overrides);
  siamft::validate_common(cfg);

  siamft::Workspace ws(cfg);
  std::vector<std::pair<std::string, siamft::Model>> models;
  if (orig) models.emplace_back("ORIG", ws.initial_model());
  for (const auto& f : model_files)
    models.emplace_back(fs::path(f).stem().string(), siamft::load_model(f));

  std::vector<siamft::ReportRow> rows;
  for (const auto& [name, model] : models) {
    const auto featurize = ws.featurizer_for(model);
    for (const auto& t : tests)
      rows.push_back({name, siamft::dataset_name(t),
                      siamft::evaluate_model(model, featurize, ws.corpus(t), cfg.eval)});
  }
  if (report.empty()) report = (fs::path(cfg.out_dir) / "report.tsv").string();
  siamft::emit_report(rows, report);
  std::cerr << "wrote " << rows.size() << " report rows to " << report << '\n';
  return 0;
}

int run_experiment(const GlobalOptions& g) {
  if (g.config.empty()) throw siamft::ConfigError("experiment requires --config");
  const auto cfg = resolve_config(g, nullptr);
  const auto rows = siamft::run_experiment(cfg, {}, true);
  std::cerr << "wrote " << rows.size() << " report rows to "
            << (fs::path(cfg.out_dir) / "report.tsv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Siamese finetuning of sentence encoders"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--seed", g.seed, "global seed (sub-seeds are derived from it)");
  app.add_option("--config", g.config, "JSON configuration document");
  app.add_option("--out-dir", g.out_dir, "output directory");
  app.add_option("--format", g.format, "model file encoding: binary | text");

  // build-vocab
  auto* vocab_cmd = app.add_subcommand("build-vocab", "build a vocabulary file from corpora");
  std::vector<std::string> vocab_corpora;
  std::optional<std::size_t> vocab_min_count;
  std::string vocab_out;
  vocab_cmd->add_option("--corpus", vocab_corpora, "corpus files")->required();
  vocab_cmd->add_option("--min-count", vocab_min_count, "frequency cutoff");
  vocab_cmd->add_option("--out", vocab_out, "output file (default <out-dir>/vocab.tsv)");

  // gen-pairs
  auto* pairs_cmd = app.add_subcommand("gen-pairs", "generate same/different episode pairs");
  std::vector<std::string> pair_corpora;
  std::optional<std::size_t> pair_count;
  std::optional<double> pair_same_fraction;
  std::string pairs_out;
  pairs_cmd->add_option("--corpus", pair_corpora, "corpus files")->required();
  pairs_cmd->add_option("--pairs", pair_count, "pairs per dataset");
  pairs_cmd->add_option("--same-fraction", pair_same_fraction, "share of same-class pairs");
  pairs_cmd->add_option("--out", pairs_out, "output file (default <out-dir>/pairs.tsv)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train one model variant");
  ModelOptions train_opts;
  std::string train_model;
  std::vector<std::string> train_sets;
  std::string train_pairs_file, train_out;
  train_cmd->add_option("--model", train_model, "ORIG | NAIVE | SIAMESE | ALL")->required();
  train_cmd->add_option("--train", train_sets, "training corpora");
  train_cmd->add_option("--pairs-file", train_pairs_file, "replay a gen-pairs dump");
  train_cmd->add_option("--pairs", train_opts.pairs,
                        "pairs (SIAMESE) or pairs per dataset (ALL)");
  train_cmd->add_option("--epochs", train_opts.epochs, "training epochs");
  train_cmd->add_option("--batch-size", train_opts.batch_size, "mini-batch size");
  train_cmd->add_option("--lr", train_opts.learning_rate, "Adam learning rate");
  train_cmd->add_option("--naive-hidden", train_opts.naive_hidden, "naive head width");
  train_cmd->add_option("--same-fraction", train_opts.same_fraction, "share of same pairs");
  train_cmd->add_option("--out", train_out, "model file (default <out-dir>/<MODEL>.model)");
  add_model_options(train_cmd, train_opts);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "delta cosine distance of models on test sets");
  ModelOptions eval_opts;
  std::vector<std::string> eval_models, eval_tests;
  bool eval_orig = false;
  std::string eval_report;
  eval_cmd->add_option("--model-file", eval_models, "trained model files");
  eval_cmd->add_flag("--orig", eval_orig, "also evaluate the untrained ORIG surrogate");
  eval_cmd->add_option("--test", eval_tests, "test corpora")->required();
  eval_cmd->add_option("--n-pairs", eval_opts.n_pairs, "evaluation pairs per test set");
  eval_cmd->add_option("--report", eval_report, "report file (default <out-dir>/report.tsv)");
  add_model_options(eval_cmd, eval_opts);

  // experiment
  app.add_subcommand("experiment", "train and evaluate every configured variant");

  // gen-synthetic
  auto* syn_cmd = app.add_subcommand("gen-synthetic", "write a seeded synthetic corpus");
  siamft::SyntheticSpec syn;
  std::string syn_out, syn_test_out;
  std::optional<double> syn_holdout;
  syn_cmd->add_option("--out", syn_out, "corpus file (.jsonl or .tsv)")->required();
  syn_cmd->add_option("--dataset-id", syn.dataset_id, "dataset id and token prefix");
  syn_cmd->add_option("--token-prefix", syn.token_prefix, "domain token prefix");
  syn_cmd->add_option("--classes", syn.n_classes, "number of classes");
  syn_cmd->add_option("--first-class", syn.first_class, "index of the first class");
  syn_cmd->add_option("--examples-per-class", syn.examples_per_class, "examples per class");
  syn_cmd->add_option("--class-pool", syn.class_pool_size, "tokens per class pool");
  syn_cmd->add_option("--shared-pool", syn.shared_pool_size, "domain filler tokens");
  syn_cmd->add_option("--topics", syn.topic_count, "domain topics (0: class-unique tokens)");
  syn_cmd->add_option("--topic-size", syn.topic_size, "tokens per topic");
  syn_cmd->add_option("--overlap", syn.overlap, "share of class pool taken from fillers");
  syn_cmd->add_option("--doc-length", syn.doc_length, "tokens per document");
  syn_cmd->add_option("--class-rate", syn.class_token_rate, "probability of a class token");
  syn_cmd->add_option("--holdout", syn_holdout, "fraction of examples written to --test-out");
  syn_cmd->add_option("--test-out", syn_test_out, "held-out corpus file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(siamft::ExitCode::kUsage);
  }

  try {
    if (*vocab_cmd) return run_build_vocab(g, vocab_corpora, vocab_min_count, vocab_out);
    if (*pairs_cmd)
      return run_gen_pairs(g, pair_corpora, pair_count, pair_same_fraction, pairs_out);
    if (*train_cmd)
      return run_train(g, train_opts, train_model, train_sets, train_pairs_file, train_out);
    if (*eval_cmd) return run_eval(g, eval_opts, eval_models, eval_orig, eval_tests, eval_report);
    if (app.got_subcommand("experiment")) return run_experiment(g);
    if (*syn_cmd) {
      if (g.seed) syn.seed = *g.seed;
      const auto corpus = siamft::generate_synthetic(syn);
      const auto format = siamft::corpus_format_for(syn_out);
      if (syn_holdout) {
        if (syn_test_out.empty()) throw siamft::ConfigError("--holdout requires --test-out");
        siamft::SplitSpec split;
        split.fraction = 1.0 - *syn_holdout;
        split.seed = syn.seed + 1;
        const auto [train, test] = siamft::split_corpus(corpus, split);
        siamft::write_corpus(train, syn_out, format);
        siamft::write_corpus(test, syn_test_out, siamft::corpus_format_for(syn_test_out));
      } else {
        siamft::write_corpus(corpus, syn_out, format);
      }
      return 0;
    }
  } catch (const siamft::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(siamft::ExitCode::kData);
  }
  return static_cast<int>(siamft::ExitCode::kUsage);
}
