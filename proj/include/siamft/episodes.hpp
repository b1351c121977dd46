#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "siamft/corpus.hpp"
#include "siamft/error.hpp"
#include "siamft/random.hpp"

namespace siamft {

// Two examples of one dataset plus a same-class (1) / different-class (0)
// target. Examples are referenced by position: `dataset` indexes the corpus
// sequence handed to generate_episodes, `a` and `b` index that corpus.
struct EpisodePair {
  std::size_t dataset = 0;
  std::size_t a = 0;
  std::size_t b = 0;
  int target = 0;
  std::string source_dataset;

  bool operator==(const EpisodePair&) const = default;
};

struct EpisodeSpec {
  std::map<std::string, std::size_t> quotas;  // dataset id -> pair count
  double same_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (quotas.empty()) throw ConfigError("episode quotas are empty");
    for (const auto& [id, q] : quotas)
      if (q == 0) throw ConfigError("episode quota for \"" + id + "\" must be >= 1");
    if (!(same_fraction > 0.0 && same_fraction < 1.0))
      throw ConfigError("same_fraction must be strictly between 0 and 1");
  }
};

// Number of same-class pairs in a quota: round-half-away-from-zero.
inline std::size_t same_pair_count(std::size_t quota, double same_fraction) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(quota) * same_fraction));
}

// Class-first sampler over one corpus.
class PairSampler {
 public:
  explicit PairSampler(const Corpus& corpus) : corpus_(&corpus) {
    if (corpus.num_classes() < 2)
      throw DataError("dataset \"" + corpus.dataset_id() + "\" has fewer than 2 classes");
    for (std::size_t c = 0; c < corpus.num_classes(); ++c)
      if (corpus.members(c).size() >= 2) eligible_.push_back(c);
  }

  bool can_sample_same() const noexcept { return !eligible_.empty(); }

  // Uniform eligible class, then two distinct members without replacement.
  std::pair<std::size_t, std::size_t> same(Rng& rng) const {
    if (eligible_.empty())
      throw DataError("dataset \"" + corpus_->dataset_id() +
                      "\" has no class with at least 2 examples");
    const auto& m = corpus_->members(eligible_[rng.uniform_index(eligible_.size())]);
    const auto i = rng.uniform_index(m.size());
    auto j = rng.uniform_index(m.size() - 1);
    if (j >= i) ++j;
    return {m[i], m[j]};
  }

  // Uniform (ordered, hence also unordered) pair of distinct classes, then one
  // member of each.
  std::pair<std::size_t, std::size_t> different(Rng& rng) const {
    const std::size_t k = corpus_->num_classes();
    const auto c1 = rng.uniform_index(k);
    auto c2 = rng.uniform_index(k - 1);
    if (c2 >= c1) ++c2;
    const auto& m1 = corpus_->members(c1);
    const auto& m2 = corpus_->members(c2);
    return {m1[rng.uniform_index(m1.size())], m2[rng.uniform_index(m2.size())]};
  }

 private:
  const Corpus* corpus_;
  std::vector<std::size_t> eligible_;
};

// Exactly quotas[d] pairs per dataset, round(quota * same_fraction) of them
// same-class, in a seeded shuffled order. Datasets are visited in quota-key
// order, so the result depends only on the sampling settings and the corpus contents.
inline std::vector<EpisodePair> generate_episodes(std::span<const Corpus> corpora,
                                                  const EpisodeSpec& spec) {
  spec.validate();
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < corpora.size(); ++i)
    if (!position.emplace(corpora[i].dataset_id(), i).second)
      throw DataError("dataset id \"" + corpora[i].dataset_id() + "\" given twice");

  Rng rng(spec.seed);
  std::vector<EpisodePair> pairs;
  for (const auto& [dataset_id, quota] : spec.quotas) {
    const auto it = position.find(dataset_id);
    if (it == position.end())
      throw ConfigError("episode quota names unknown dataset \"" + dataset_id + "\"");
    const Corpus& corpus = corpora[it->second];
    const PairSampler sampler(corpus);
    const std::size_t n_same = same_pair_count(quota, spec.same_fraction);
    if (n_same > 0 && !sampler.can_sample_same())
      throw DataError("dataset \"" + dataset_id +
                      "\" has no class with at least 2 examples; same-class pairs impossible");
    pairs.reserve(pairs.size() + quota);
    for (std::size_t k = 0; k < quota; ++k) {
      const bool same = k < n_same;
      const auto [a, b] = same ? sampler.same(rng) : sampler.different(rng);
      pairs.push_back({it->second, a, b, same ? 1 : 0, dataset_id});
    }
  }
  rng.shuffle(pairs);
  return pairs;
}

// Re-checks the pair invariants against the corpora.
inline void validate_pairs(std::span<const EpisodePair> pairs, std::span<const Corpus> corpora) {
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    const auto where = "pair " + std::to_string(k) + ": ";
    if (p.dataset >= corpora.size()) throw DataError(where + "dataset out of range");
    const Corpus& c = corpora[p.dataset];
    if (p.a >= c.size() || p.b >= c.size()) throw DataError(where + "example out of range");
    if (p.a == p.b) throw DataError(where + "pairs an example with itself");
    const bool same = c.class_of(p.a) == c.class_of(p.b);
    if ((p.target == 1) != same || (p.target != 0 && p.target != 1))
      throw DataError(where + "target does not match the class labels");
  }
}

// One "<dataset>\t<id_a>\t<id_b>\t<target>" line per pair.
inline void write_pairs(std::span<const EpisodePair> pairs, std::span<const Corpus> corpora,
                        const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  for (const auto& p : pairs) {
    const Corpus& c = corpora[p.dataset];
    out << c.dataset_id() << '\t' << c[p.a].id << '\t' << c[p.b].id << '\t' << p.target
        << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<EpisodePair> read_pairs(const std::filesystem::path& path,
                                           std::span<const Corpus> corpora) {
  std::unordered_map<std::string, std::size_t> dataset_pos;
  std::vector<std::unordered_map<std::string, std::size_t>> id_pos(corpora.size());
  for (std::size_t d = 0; d < corpora.size(); ++d) {
    dataset_pos.emplace(corpora[d].dataset_id(), d);
    for (std::size_t i = 0; i < corpora[d].size(); ++i) id_pos[d].emplace(corpora[d][i].id, i);
  }
  auto in = detail::open_input(path);
  std::vector<EpisodePair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto where = detail::location(path, line_no);
    const auto f = detail::split_tabs(line);
    if (f.size() != 4 || (f[3] != "0" && f[3] != "1"))
      throw DataError(where + "expected \"<dataset>\\t<id_a>\\t<id_b>\\t<0|1>\"");
    const auto d = dataset_pos.find(std::string(f[0]));
    if (d == dataset_pos.end()) throw DataError(where + "unknown dataset \"" +
                                                std::string(f[0]) + "\"");
    const auto& ids = id_pos[d->second];
    const auto a = ids.find(std::string(f[1]));
    const auto b = ids.find(std::string(f[2]));
    if (a == ids.end() || b == ids.end()) throw DataError(where + "unknown example id");
    pairs.push_back({d->second, a->second, b->second, f[3] == "1" ? 1 : 0, d->first});
  }
  validate_pairs(pairs, corpora);
  return pairs;
}

}  // namespace siamft
