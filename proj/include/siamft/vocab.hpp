#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "siamft/corpus.hpp"
#include "siamft/error.hpp"
#include "siamft/text.hpp"

namespace siamft {

// Token emitted for texts with no surviving tokens; always maps to index 0.
inline constexpr std::string_view kUnknownToken = "<unk>";

namespace detail {

// Edge characters removed from tokens. '@', '#' and '_' are kept so that
// mentions and hashtags survive intact.
inline bool is_edge_punct(char32_t cp) {
  if (cp < 0x80) {
    if (cp == '@' || cp == '#' || cp == '_') return false;
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  return cp == 0xA1 || cp == 0xAB || cp == 0xBB || cp == 0xBF ||
         (cp >= 0x2010 && cp <= 0x2027) || cp == 0x3001 || cp == 0x3002;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// ASCII and Latin-1 letters only.
inline char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
  return cp;
}

struct CodePoint {
  std::size_t pos;
  std::size_t len;
  char32_t value;
};

inline void flush_token(const std::vector<CodePoint>& cps, std::string_view raw,
                        std::vector<std::string>& out) {
  std::size_t lo = 0, hi = cps.size();
  while (lo < hi && is_edge_punct(cps[lo].value)) ++lo;
  while (hi > lo && is_edge_punct(cps[hi - 1].value)) --hi;
  if (lo == hi) return;
  std::string token;
  for (std::size_t k = lo; k < hi; ++k) {
    const char32_t lower = to_lower(cps[k].value);
    if (lower == cps[k].value) {
      token += raw.substr(cps[k].pos, cps[k].len);  // also keeps malformed bytes
    } else {
      append_utf8(token, lower);
    }
  }
  out.push_back(std::move(token));
}

}  // namespace detail

// Lowercases, splits on Unicode whitespace, and strips edge punctuation.
// Never returns an empty sequence.
inline std::vector<std::string> tokenize(std::string_view raw) {
  std::vector<std::string> tokens;
  std::vector<detail::CodePoint> current;
  for (std::size_t pos = 0; pos < raw.size();) {
    std::size_t len = 0;
    const char32_t cp = text::decode_utf8(raw, pos, len);
    if (text::is_unicode_space(cp)) {
      detail::flush_token(current, raw, tokens);
      current.clear();
    } else {
      current.push_back({pos, len, cp});
    }
    pos += len;
  }
  detail::flush_token(current, raw, tokens);
  if (tokens.empty()) tokens.emplace_back(kUnknownToken);
  return tokens;
}

using TokenId = std::uint32_t;
using TokenIds = std::vector<TokenId>;

// Token → contiguous index map. Index 0 is always the unknown token.
class Vocabulary {
 public:
  Vocabulary() { add(std::string(kUnknownToken), 0); }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

  TokenId lookup(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? 0 : it->second;
  }

  TokenIds encode(std::string_view raw) const {
    TokenIds ids;
    for (const auto& t : tokenize(raw)) ids.push_back(lookup(t));
    return ids;
  }

  // Appends a token; used by build_vocab and by model/vocabulary loaders.
  void add(std::string token, std::uint64_t count) {
    if (token.empty() || token.find_first_of(" \t\r\n") != std::string::npos)
      throw DataError("invalid vocabulary token \"" + token + "\"");
    const auto id = static_cast<TokenId>(tokens_.size());
    if (!index_.emplace(token, id).second)
      throw DataError("duplicate vocabulary token \"" + token + "\"");
    tokens_.push_back(std::move(token));
    counts_.push_back(count);
  }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, TokenId> index_;
};

// Tokens with frequency >= min_count, ordered by descending frequency with
// ties broken byte-wise.
inline Vocabulary build_vocab(std::span<const Corpus* const> corpora, std::uint64_t min_count) {
  if (min_count == 0) throw ConfigError("min_count must be positive");
  std::map<std::string, std::uint64_t> freq;
  std::size_t n_examples = 0;
  for (const Corpus* corpus : corpora) {
    for (const auto& ex : corpus->examples()) {
      ++n_examples;
      for (auto& t : tokenize(ex.text))
        if (t != kUnknownToken) ++freq[std::move(t)];
    }
  }
  if (n_examples == 0) throw DataError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [token, count] : freq)
    if (count >= min_count) kept.emplace_back(token, count);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (auto& [token, count] : kept) vocab.add(std::move(token), count);
  return vocab;
}

inline Vocabulary build_vocab(const Corpus& corpus, std::uint64_t min_count) {
  const Corpus* one[] = {&corpus};
  return build_vocab(one, min_count);
}

// One "token<TAB>count" line per entry in index order.
inline void write_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  for (std::size_t i = 0; i < vocab.size(); ++i)
    out << vocab.tokens()[i] << '\t' << vocab.counts()[i] << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

inline Vocabulary load_vocab(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_tabs(line);
    std::uint64_t count = 0;
    if (fields.size() != 2 ||
        std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), count).ec !=
            std::errc{})
      throw DataError(detail::location(path, line_no) + "expected \"token<TAB>count\"");
    if (line_no == 1) {
      if (fields[0] != kUnknownToken)
        throw DataError(detail::location(path, 1) + "first entry must be " +
                        std::string(kUnknownToken));
      continue;
    }
    try {
      vocab.add(std::string(fields[0]), count);
    } catch (const DataError& e) {
      throw DataError(detail::location(path, line_no) + e.what());
    }
  }
  return vocab;
}

}  // namespace siamft
