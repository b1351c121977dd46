#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "siamft/corpus.hpp"
#include "siamft/episodes.hpp"
#include "siamft/error.hpp"
#include "siamft/training.hpp"

namespace siamft {

inline double cosine_distance(std::span<const double> u, std::span<const double> v) {
  return 1.0 - cosine_similarity(u, v);
}

struct EvalSpec {
  std::size_t n_pairs = 5000;
  double same_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_pairs < 2) throw ConfigError("eval.n_pairs must be >= 2");
    if (!(same_fraction > 0.0 && same_fraction < 1.0))
      throw ConfigError("eval.same_fraction must be strictly between 0 and 1");
    const auto same = same_pair_count(n_pairs, same_fraction);
    if (same == 0 || same == n_pairs)
      throw ConfigError("eval.n_pairs too small for the requested same_fraction");
  }
};

// Mean cosine distance of different-class pairs minus that of same-class
// pairs, with the standard error of each mean.
struct DeltaReport {
  std::size_t different_count = 0;
  std::size_t same_count = 0;
  double mean_diff_distance = 0.0;
  double mean_same_distance = 0.0;
  double diff_stderr = 0.0;
  double same_stderr = 0.0;
  double delta = 0.0;

  std::size_t n_pairs() const noexcept { return different_count + same_count; }
};

namespace detail {

struct MeanAndError {
  double mean;
  double stderr_;
};

inline MeanAndError mean_and_stderr(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace detail

// Builds a report from per-pair distances.
inline DeltaReport make_delta_report(const std::vector<double>& diff_distances,
                                     const std::vector<double>& same_distances) {
  if (diff_distances.empty() || same_distances.empty())
    throw DataError("delta needs at least one same-class and one different-class pair");
  const auto d = detail::mean_and_stderr(diff_distances);
  const auto s = detail::mean_and_stderr(same_distances);
  return {diff_distances.size(), same_distances.size(), d.mean, s.mean, d.stderr_, s.stderr_,
          d.mean - s.mean};
}

// Samples class-balanced test pairs with the episode sampler, embeds each
// distinct example once, and averages the per-pair cosine distances.
// embed: const LabeledExample& -> Vector.
template <typename EmbedFn>
DeltaReport delta_cosine_distance(EmbedFn&& embed, const Corpus& test_corpus,
                                  const EvalSpec& spec) {
  spec.validate();
  EpisodeSpec episodes;
  episodes.quotas[test_corpus.dataset_id()] = spec.n_pairs;
  episodes.same_fraction = spec.same_fraction;
  episodes.seed = spec.seed;
  const auto pairs = generate_episodes(std::span<const Corpus>(&test_corpus, 1), episodes);

  std::unordered_map<std::size_t, Vector> cache;
  auto lookup = [&](std::size_t i) -> const Vector& {
    auto it = cache.find(i);
    if (it == cache.end()) {
      Vector v = embed(test_corpus[i]);
      if (!all_finite(v))
        throw NumericError("non-finite embedding for example \"" + test_corpus[i].id + "\"");
      it = cache.emplace(i, std::move(v)).first;
    }
    return it->second;
  };

  std::vector<double> same, diff;
  for (const auto& p : pairs) {
    const double dist = cosine_distance(lookup(p.a), lookup(p.b));
    (p.target == 1 ? same : diff).push_back(dist);
  }
  return make_delta_report(diff, same);
}

struct ReportRow {
  std::string model;
  std::string test_set;
  DeltaReport report;
};

inline constexpr std::string_view kReportHeader =
    "model\ttest_set\tn_pairs\tmean_same\tmean_diff\tsame_stderr\tdiff_stderr\tdelta";

// Tab-separated table, one row per report, floats at 9 significant digits.
inline void emit_report(std::span<const ReportRow> rows, const std::filesystem::path& path) {
  if (rows.empty()) throw ConfigError("no report rows to write");
  auto out = detail::open_output(path);
  out << kReportHeader << '\n';
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << row.model << '\t' << row.test_set << '\t' << r.n_pairs() << '\t'
        << detail::format_g9(r.mean_same_distance) << '\t'
        << detail::format_g9(r.mean_diff_distance) << '\t' << detail::format_g9(r.same_stderr)
        << '\t' << detail::format_g9(r.diff_stderr) << '\t' << detail::format_g9(r.delta)
        << '\n';
  }
  out.flush();
  if (!out) throw DataError("write failed: " + path.string());
}

// Parses a table written by emit_report. Same/different counts are not
// stored separately; different_count carries n_pairs.
inline std::vector<ReportRow> read_report(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line) || (detail::strip_cr(line), line != kReportHeader))
    throw DataError(path.string() + ": missing report header");
  std::vector<ReportRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto where = detail::location(path, line_no);
    const auto f = detail::split_tabs(line);
    if (f.size() != 8) throw DataError(where + "expected 8 fields");
    ReportRow row{std::string(f[0]), std::string(f[1]), {}};
    auto& r = row.report;
    std::size_t n = 0;
    if (std::from_chars(f[2].data(), f[2].data() + f[2].size(), n).ec != std::errc{})
      throw DataError(where + "bad n_pairs");
    r.different_count = n;
    r.mean_same_distance = detail::parse_double(f[3], where);
    r.mean_diff_distance = detail::parse_double(f[4], where);
    r.same_stderr = detail::parse_double(f[5], where);
    r.diff_stderr = detail::parse_double(f[6], where);
    r.delta = detail::parse_double(f[7], where);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace siamft
