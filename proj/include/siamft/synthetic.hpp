#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "siamft/corpus.hpp"
#include "siamft/error.hpp"
#include "siamft/random.hpp"

namespace siamft {

// Seeded stand-in for a labeled tweet collection. Each class owns a pool of
// tokens; every corpus of one domain (token_prefix) shares a pool of filler
// tokens that carry no class information. A document draws each position
// from its class pool with probability class_token_rate and from the filler
// pool otherwise.
//
// With topic_count == 0 every class pool is made of class-unique tokens.
// Otherwise the domain vocabulary is split into topic_count topics of
// topic_size tokens and class k draws its pool from topic k % topic_count,
// so classes of one topic reuse the same words in different combinations.
//
// Class k's pool depends only on (token_prefix, k, pool settings), so corpora
// generated with disjoint [first_class, first_class + n_classes) ranges give
// unseen classes over the same domain vocabulary.
struct SyntheticSpec {
  std::string dataset_id = "synthetic";
  std::string token_prefix;  // defaults to dataset_id
  std::size_t n_classes = 4;
  std::size_t first_class = 0;
  std::size_t examples_per_class = 50;
  std::size_t class_pool_size = 5;
  std::size_t shared_pool_size = 20;
  std::size_t topic_count = 0;
  std::size_t topic_size = 0;
  // Fraction of each class pool drawn from the shared pool instead of being
  // class-unique; 0 gives disjoint class vocabularies.
  double overlap = 0.0;
  std::size_t doc_length = 8;
  double class_token_rate = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_classes < 2) throw ConfigError("synthetic corpus needs at least 2 classes");
    if (examples_per_class == 0 || class_pool_size == 0 || doc_length == 0)
      throw ConfigError("synthetic sizes must be positive");
    if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("overlap must be in [0, 1]");
    if (!(class_token_rate >= 0.0 && class_token_rate <= 1.0))
      throw ConfigError("class_token_rate must be in [0, 1]");
    if (shared_pool_size == 0 && (class_token_rate < 1.0 || overlap > 0.0))
      throw ConfigError("shared_pool_size must be positive when shared tokens are drawn");
    if (topic_count > 0 && topic_size < class_pool_size)
      throw ConfigError("topic_size must be at least class_pool_size");
  }
};

namespace detail {

inline std::string padded(std::size_t k, int width = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, k);
  return buf;
}

}  // namespace detail

inline std::string synthetic_class_label(std::size_t k) { return "class" + detail::padded(k); }

inline std::vector<std::string> synthetic_class_pool(const SyntheticSpec& spec, std::size_t k) {
  const std::string prefix = spec.token_prefix.empty() ? spec.dataset_id : spec.token_prefix;
  const auto n_shared = static_cast<std::size_t>(
      std::llround(spec.overlap * static_cast<double>(spec.class_pool_size)));
  Rng rng(0x5EEDC1A55ULL + 0x9E3779B97F4A7C15ULL * (k + 1));
  std::vector<std::size_t> content;
  std::string topic;
  if (spec.topic_count > 0) {
    topic = prefix + "t" + detail::padded(k % spec.topic_count) + "w";
    content.resize(spec.topic_size);
    for (std::size_t j = 0; j < content.size(); ++j) content[j] = j;
    rng.shuffle(content);
  }
  std::vector<std::string> pool;
  for (std::size_t j = 0; j < spec.class_pool_size; ++j) {
    if (j < n_shared) {
      pool.push_back(prefix + "s" + detail::padded(rng.uniform_index(spec.shared_pool_size)));
    } else if (spec.topic_count > 0) {
      pool.push_back(topic + detail::padded(content[j]));
    } else {
      pool.push_back(prefix + "c" + detail::padded(k) + "w" + detail::padded(j));
    }
  }
  return pool;
}

inline Corpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::string prefix = spec.token_prefix.empty() ? spec.dataset_id : spec.token_prefix;
  Rng rng(spec.seed);
  std::vector<LabeledExample> examples;
  examples.reserve(spec.n_classes * spec.examples_per_class);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const std::size_t k = spec.first_class + c;
    const auto pool = synthetic_class_pool(spec, k);
    for (std::size_t i = 0; i < spec.examples_per_class; ++i) {
      std::string text;
      for (std::size_t t = 0; t < spec.doc_length; ++t) {
        if (t > 0) text += ' ';
        if (rng.uniform01() < spec.class_token_rate) {
          text += pool[rng.uniform_index(pool.size())];
        } else {
          text += prefix + "s" + detail::padded(rng.uniform_index(spec.shared_pool_size));
        }
      }
      examples.push_back({spec.dataset_id + "-" + detail::padded(k) + "-" + detail::padded(i, 5),
                          std::move(text), synthetic_class_label(k), spec.dataset_id});
    }
  }
  return Corpus(spec.dataset_id, std::move(examples));
}

}  // namespace siamft
