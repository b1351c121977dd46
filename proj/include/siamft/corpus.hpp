#pragma once

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "siamft/error.hpp"
#include "siamft/random.hpp"
#include "siamft/tensor.hpp"
#include "siamft/text.hpp"

namespace siamft {

struct LabeledExample {
  std::string id;
  std::string text;
  std::string class_label;
  std::string dataset_id;

  bool operator==(const LabeledExample&) const = default;
};

// An immutable, validated collection of labeled examples from one dataset.
//
// Class labels are opaque byte strings; the class index is ordered by
// byte-wise label comparison, which also fixes the class numbering used by
// classification heads.
class Corpus {
 public:
  using ClassIndex = std::map<std::string, std::vector<std::size_t>>;

  Corpus(std::string dataset_id, std::vector<LabeledExample> examples)
      : dataset_id_(std::move(dataset_id)), examples_(std::move(examples)) {
    std::unordered_set<std::string_view> seen;
    seen.reserve(examples_.size());
    for (std::size_t i = 0; i < examples_.size(); ++i) {
      auto& ex = examples_[i];
      ex.dataset_id = dataset_id_;
      if (!seen.insert(ex.id).second)
        throw DataError("duplicate example id \"" + ex.id + "\"");
      if (text::trim(ex.text).empty())
        throw DataError("example \"" + ex.id + "\" has empty text");
      class_index_[ex.class_label].push_back(i);
    }
    if (class_index_.size() < 2)
      throw DataError("dataset \"" + dataset_id_ + "\" has " +
                      std::to_string(class_index_.size()) +
                      " distinct class(es); at least 2 are required");
    labels_.reserve(class_index_.size());
    class_of_.resize(examples_.size());
    for (const auto& [label, members] : class_index_) {
      for (std::size_t i : members) class_of_[i] = labels_.size();
      labels_.push_back(label);
    }
  }

  const std::string& dataset_id() const noexcept { return dataset_id_; }
  const std::vector<LabeledExample>& examples() const noexcept { return examples_; }
  const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }
  std::size_t size() const noexcept { return examples_.size(); }

  const ClassIndex& class_index() const noexcept { return class_index_; }
  const std::vector<std::string>& class_labels() const noexcept { return labels_; }
  std::size_t num_classes() const noexcept { return labels_.size(); }

  // Position of example i's label within class_labels().
  std::size_t class_of(std::size_t i) const { return class_of_[i]; }

  const std::vector<std::size_t>& members(std::size_t class_id) const {
    return class_index_.at(labels_[class_id]);
  }

 private:
  std::string dataset_id_;
  std::vector<LabeledExample> examples_;
  ClassIndex class_index_;
  std::vector<std::string> labels_;
  std::vector<std::size_t> class_of_;
};

enum class CorpusFormat { kJsonLines, kDelimited };

// .tsv/.txt/.tab → delimited text, everything else json-lines.
inline CorpusFormat corpus_format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".tsv" || ext == ".tab" || ext == ".txt") return CorpusFormat::kDelimited;
  return CorpusFormat::kJsonLines;
}

namespace detail {

inline std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

inline std::string format_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline double parse_double(std::string_view s, const std::string& where) {
  // strtod accepts the same decimal grammar on every platform we target;
  // std::from_chars for double is missing from older libstdc++.
  std::string tmp(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size())
    throw DataError(where + "not a number: \"" + tmp + "\"");
  return v;
}

}  // namespace detail

// Reads a corpus file. The dataset id defaults to the file's stem.
inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                          std::string dataset_id = {}) {
  if (dataset_id.empty()) dataset_id = path.stem().string();
  auto in = detail::open_input(path);
  std::vector<LabeledExample> examples;
  std::string line;
  std::size_t line_no = 0;

  if (format == CorpusFormat::kJsonLines) {
    while (std::getline(in, line)) {
      ++line_no;
      detail::strip_cr(line);
      if (text::trim(line).empty()) continue;
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError(detail::location(path, line_no) + "parse error: " + e.what());
      }
      if (!record.is_object())
        throw DataError(detail::location(path, line_no) + "record is not a JSON object");
      LabeledExample ex;
      for (auto [key, field] : {std::pair{"id", &ex.id}, std::pair{"text", &ex.text},
                                std::pair{"label", &ex.class_label}}) {
        auto it = record.find(key);
        if (it == record.end() || !it->is_string())
          throw DataError(detail::location(path, line_no) + "missing string field \"" +
                          key + "\"");
        *field = it->get<std::string>();
      }
      examples.push_back(std::move(ex));
    }
  } else {
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    line_no = 1;
    detail::strip_cr(line);
    const auto header = detail::split_tabs(line);
    std::optional<std::size_t> id_col, text_col, label_col;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == "id") id_col = c;
      if (header[c] == "text") text_col = c;
      if (header[c] == "label") label_col = c;
    }
    if (!id_col || !text_col || !label_col)
      throw DataError(detail::location(path, 1) +
                      "header must name columns id, text and label");
    while (std::getline(in, line)) {
      ++line_no;
      detail::strip_cr(line);
      if (line.empty()) continue;
      const auto fields = detail::split_tabs(line);
      if (fields.size() != header.size())
        throw DataError(detail::location(path, line_no) + "expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
      examples.push_back({std::string(fields[*id_col]), std::string(fields[*text_col]),
                          std::string(fields[*label_col]), {}});
    }
  }
  return Corpus(std::move(dataset_id), std::move(examples));
}

inline Corpus load_corpus(const std::filesystem::path& path) {
  return load_corpus(path, corpus_format_for(path));
}

inline void write_corpus(const Corpus& corpus, const std::filesystem::path& path,
                         CorpusFormat format) {
  auto out = detail::open_output(path);
  if (format == CorpusFormat::kJsonLines) {
    for (const auto& ex : corpus.examples()) {
      nlohmann::ordered_json record;
      record["id"] = ex.id;
      record["text"] = ex.text;
      record["label"] = ex.class_label;
      out << record.dump() << '\n';
    }
  } else {
    out << "id\ttext\tlabel\n";
    for (const auto& ex : corpus.examples()) {
      for (const auto* field : {&ex.id, &ex.text, &ex.class_label})
        if (field->find_first_of("\t\n\r") != std::string::npos)
          throw DataError("example \"" + ex.id +
                          "\" contains a tab or newline; use json-lines");
      out << ex.id << '\t' << ex.text << '\t' << ex.class_label << '\n';
    }
  }
  if (!out) throw DataError("write failed: " + path.string());
}

enum class SplitMode { kRandomByExample, kByClass };

struct SplitSpec {
  SplitMode mode = SplitMode::kRandomByExample;
  // Share of examples (or of classes, in by-class mode) assigned to the
  // first (training) side. Ignored when test_classes is non-empty.
  double fraction = 0.8;
  // By-class mode only: explicit list of classes for the second side.
  std::vector<std::string> test_classes;
  std::uint64_t seed = 0;
};

// Partitions a corpus in two. Record order is preserved within each side.
inline std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, const SplitSpec& spec) {
  const bool explicit_classes = spec.mode == SplitMode::kByClass && !spec.test_classes.empty();
  if (!explicit_classes && !(spec.fraction > 0.0 && spec.fraction < 1.0))
    throw ConfigError("split fraction must be strictly between 0 and 1");

  Rng rng(spec.seed);
  std::vector<bool> to_first(corpus.size(), false);

  if (spec.mode == SplitMode::kRandomByExample) {
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const auto n_first = static_cast<std::size_t>(
        std::llround(spec.fraction * static_cast<double>(corpus.size())));
    for (std::size_t k = 0; k < n_first; ++k) to_first[order[k]] = true;
  } else {
    std::set<std::string> second;
    if (explicit_classes) {
      for (const auto& label : spec.test_classes) {
        if (!corpus.class_index().contains(label))
          throw ConfigError("split names unknown class \"" + label + "\"");
        second.insert(label);
      }
    } else {
      auto labels = corpus.class_labels();
      rng.shuffle(labels);
      const auto n_first = static_cast<std::size_t>(
          std::llround(spec.fraction * static_cast<double>(labels.size())));
      second.insert(labels.begin() + static_cast<std::ptrdiff_t>(
                                         std::min(n_first, labels.size())),
                    labels.end());
    }
    for (std::size_t i = 0; i < corpus.size(); ++i)
      to_first[i] = !second.contains(corpus[i].class_label);
  }

  std::vector<LabeledExample> first, second;
  std::set<std::string> first_classes, second_classes;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (to_first[i]) {
      first.push_back(corpus[i]);
      first_classes.insert(corpus[i].class_label);
    } else {
      second.push_back(corpus[i]);
      second_classes.insert(corpus[i].class_label);
    }
  }
  if (first.empty() || second.empty())
    throw DataError("split of \"" + corpus.dataset_id() + "\" leaves a side with 0 examples");
  if (first_classes.size() < 2 || second_classes.size() < 2)
    throw DataError("split of \"" + corpus.dataset_id() +
                    "\" leaves a side with fewer than 2 classes (train " +
                    std::to_string(first_classes.size()) + ", test " +
                    std::to_string(second_classes.size()) + ")");
  return {Corpus(corpus.dataset_id(), std::move(first)),
          Corpus(corpus.dataset_id(), std::move(second))};
}

// Precomputed sentence vectors keyed by example id.
class VectorTable {
 public:
  explicit VectorTable(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw DataError("vector dimension must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<std::string, Vector>& entries() const noexcept { return entries_; }

  void insert(std::string id, Vector v) {
    if (v.size() != dim_)
      throw DataError("vector for \"" + id + "\" has " + std::to_string(v.size()) +
                      " values, expected " + std::to_string(dim_));
    if (!all_finite(v)) throw DataError("vector for \"" + id + "\" has a non-finite value");
    const auto [it, inserted] = entries_.emplace(std::move(id), std::move(v));
    if (!inserted) throw DataError("duplicate vector id \"" + it->first + "\"");
  }

  const Vector* find(const std::string& id) const {
    const auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }

 private:
  std::size_t dim_;
  std::map<std::string, Vector> entries_;
};

inline VectorTable load_vectors(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty vector file");
  detail::strip_cr(line);
  std::size_t dim = 0;
  {
    const std::string_view head(line);
    const auto [ptr, ec] =
        head.starts_with("dim=")
            ? std::from_chars(head.data() + 4, head.data() + head.size(), dim)
            : std::from_chars_result{head.data(), std::errc::invalid_argument};
    if (ec != std::errc{} || ptr != head.data() + head.size() || dim == 0)
      throw DataError(detail::location(path, 1) + "expected header \"dim=<N>\"");
  }
  VectorTable table(dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_tabs(line);
    const auto where = detail::location(path, line_no);
    if (fields.size() != dim + 1)
      throw DataError(where + "dimension mismatch: expected " + std::to_string(dim) +
                      " values, found " + std::to_string(fields.size() - 1));
    Vector v(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      v[k] = detail::parse_double(fields[k + 1], where);
      if (!std::isfinite(v[k])) throw DataError(where + "non-finite value");
    }
    try {
      table.insert(std::string(fields[0]), std::move(v));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return table;
}

// Values are written with 9 significant digits.
inline void write_vectors(const VectorTable& table, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  out << "dim=" << table.dim() << '\n';
  for (const auto& [id, v] : table.entries()) {
    out << id;
    for (double x : v) out << '\t' << detail::format_g9(x);
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace siamft
