#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "siamft/corpus.hpp"
#include "siamft/error.hpp"
#include "siamft/random.hpp"
#include "siamft/tensor.hpp"
#include "siamft/vocab.hpp"

namespace siamft {

enum class EncoderMode { kTrainable, kFrozenProjection };

inline const char* to_string(EncoderMode mode) {
  return mode == EncoderMode::kTrainable ? "trainable" : "frozen-projection";
}

inline EncoderMode parse_encoder_mode(std::string_view s) {
  if (s == "trainable") return EncoderMode::kTrainable;
  if (s == "frozen-projection" || s == "frozen") return EncoderMode::kFrozenProjection;
  throw ConfigError("unknown encoder mode \"" + std::string(s) + "\"");
}

struct EncoderConfig {
  EncoderMode mode = EncoderMode::kTrainable;
  std::size_t d_tok = 64;   // token embedding width (trainable mode)
  std::size_t d_in = 512;   // input vector width (frozen mode)
  std::size_t hidden = 512;
  std::size_t d_out = 512;

  std::size_t input_dim() const noexcept {
    return mode == EncoderMode::kTrainable ? d_tok : d_in;
  }

  void validate() const {
    if (d_tok == 0 || d_in == 0 || hidden == 0 || d_out == 0)
      throw ConfigError("encoder dimensions must all be >= 1");
  }

  bool operator==(const EncoderConfig&) const = default;
};

// The single parameter set shared by every branch that encodes text.
// `embedding` is empty in frozen-projection mode.
struct EncoderParams {
  Matrix embedding;  // |V| x d_tok
  Matrix w1;         // hidden x input_dim
  Vector b1;         // hidden
  Matrix w2;         // d_out x hidden
  Vector b2;         // d_out

  template <typename F>
  void for_each_tensor(F&& f) {
    f(embedding.flat());
    f(w1.flat());
    f(std::span<double>(b1));
    f(w2.flat());
    f(std::span<double>(b2));
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f(embedding.flat());
    f(w1.flat());
    f(std::span<const double>(b1));
    f(w2.flat());
    f(std::span<const double>(b2));
  }

  bool same_shape(const EncoderParams& o) const {
    return embedding.same_shape(o.embedding) && w1.same_shape(o.w1) &&
           b1.size() == o.b1.size() && w2.same_shape(o.w2) && b2.size() == o.b2.size();
  }

  bool operator==(const EncoderParams&) const = default;
};

// Additive accumulator with the same layout as EncoderParams.
using EncoderGradient = EncoderParams;

inline EncoderParams zeros_like(const EncoderParams& p) {
  return {Matrix(p.embedding.rows(), p.embedding.cols()), Matrix(p.w1.rows(), p.w1.cols()),
          Vector(p.b1.size(), 0.0), Matrix(p.w2.rows(), p.w2.cols()),
          Vector(p.b2.size(), 0.0)};
}

inline void set_zero(EncoderParams& p) {
  p.for_each_tensor([](std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
}

inline EncoderParams zero_params(const EncoderConfig& config, std::size_t vocab_size) {
  config.validate();
  const bool trainable = config.mode == EncoderMode::kTrainable;
  return {trainable ? Matrix(vocab_size, config.d_tok) : Matrix(),
          Matrix(config.hidden, config.input_dim()), Vector(config.hidden, 0.0),
          Matrix(config.d_out, config.hidden), Vector(config.d_out, 0.0)};
}

namespace detail {

inline void fill_uniform(std::span<double> values, double bound, Rng& rng) {
  for (double& v : values) v = rng.uniform(-bound, bound);
}

}  // namespace detail

// Token table in [-0.1, 0.1], weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)],
// biases zero.
inline EncoderParams init_params(const EncoderConfig& config, std::size_t vocab_size,
                                 std::uint64_t seed) {
  EncoderParams p = zero_params(config, vocab_size);
  Rng rng(seed);
  detail::fill_uniform(p.embedding.flat(), 0.1, rng);
  detail::fill_uniform(p.w1.flat(), 1.0 / std::sqrt(static_cast<double>(p.w1.cols())), rng);
  detail::fill_uniform(p.w2.flat(), 1.0 / std::sqrt(static_cast<double>(p.w2.cols())), rng);
  return p;
}

// Frozen-projection parameters that reproduce the input exactly for inputs
// whose components all exceed -shift: hidden unit i carries m_i + shift,
// which stays in the linear part of the relu, and the output layer subtracts
// the shift again. Extra hidden units get random input weights and zero
// output weights so they do not change the output but can still learn.
// Requires d_in == d_out and hidden >= d_in; otherwise falls back to
// init_params.
inline EncoderParams identity_params(const EncoderConfig& config, std::uint64_t seed,
                                     double shift = 1.0) {
  if (config.mode != EncoderMode::kFrozenProjection || config.d_in != config.d_out ||
      config.hidden < config.d_in)
    return init_params(config, 0, seed);
  EncoderParams p = zero_params(config, 0);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.d_in));
  for (std::size_t r = 0; r < config.hidden; ++r) {
    if (r < config.d_in) {
      p.w1(r, r) = 1.0;
      p.b1[r] = shift;
    } else {
      detail::fill_uniform(p.w1.row(r), bound, rng);
    }
  }
  for (std::size_t r = 0; r < config.d_out; ++r) {
    p.w2(r, r) = 1.0;
    p.b2[r] = -shift;
  }
  return p;
}

inline void check_params(const EncoderParams& p, const EncoderConfig& config) {
  const bool trainable = config.mode == EncoderMode::kTrainable;
  const bool ok = (trainable ? p.embedding.cols() == config.d_tok && p.embedding.rows() > 0
                             : p.embedding.empty()) &&
                  p.w1.rows() == config.hidden && p.w1.cols() == config.input_dim() &&
                  p.b1.size() == config.hidden && p.w2.rows() == config.d_out &&
                  p.w2.cols() == config.hidden && p.b2.size() == config.d_out;
  if (!ok) throw NumericError("encoder parameters do not match the encoder configuration");
}

// Token ids (trainable mode) or a fixed input vector (frozen mode).
using EncoderInput = std::variant<TokenIds, Vector>;

// Intermediate values of one forward pass, reused by the backward pass.
struct EncoderActivations {
  Vector pooled;  // mean token embedding, or the input vector
  Vector pre;     // W1 m + b1
  Vector hidden;  // relu(pre)
  Vector output;  // W2 hidden + b2
};

inline EncoderActivations forward(const EncoderParams& p, const EncoderConfig& config,
                                  const EncoderInput& input) {
  EncoderActivations act;
  if (config.mode == EncoderMode::kTrainable) {
    const auto* ids = std::get_if<TokenIds>(&input);
    if (ids == nullptr) throw NumericError("trainable encoder expects token ids");
    if (ids->empty()) throw NumericError("empty token sequence");
    act.pooled.assign(config.d_tok, 0.0);
    for (TokenId t : *ids) {
      if (t >= p.embedding.rows())
        throw NumericError("token id " + std::to_string(t) + " outside the embedding table");
      add_to(act.pooled, p.embedding.row(t));
    }
    if (ids->size() > 1) {
      const double inv = 1.0 / static_cast<double>(ids->size());
      for (double& v : act.pooled) v *= inv;
    }
  } else {
    const auto* v = std::get_if<Vector>(&input);
    if (v == nullptr) throw NumericError("frozen-projection encoder expects an input vector");
    if (v->size() != config.d_in)
      throw NumericError("input vector has " + std::to_string(v->size()) +
                         " components, expected " + std::to_string(config.d_in));
    act.pooled = *v;
  }
  act.pre.resize(config.hidden);
  affine(p.w1, act.pooled, p.b1, act.pre);
  act.hidden.resize(config.hidden);
  for (std::size_t i = 0; i < act.pre.size(); ++i)
    act.hidden[i] = act.pre[i] > 0.0 ? act.pre[i] : 0.0;
  act.output.resize(config.d_out);
  affine(p.w2, act.hidden, p.b2, act.output);
  return act;
}

inline Vector encode(const EncoderParams& p, const EncoderConfig& config,
                     const EncoderInput& input) {
  return forward(p, config, input).output;
}

// grad += (dz/dtheta)^T upstream, given the activations of the same input.
inline void backward(const EncoderParams& p, const EncoderConfig& config,
                     const EncoderInput& input, const EncoderActivations& act,
                     std::span<const double> upstream, EncoderGradient& grad) {
  if (upstream.size() != config.d_out)
    throw NumericError("upstream gradient has " + std::to_string(upstream.size()) +
                       " components, expected " + std::to_string(config.d_out));
  if (!grad.same_shape(p)) throw NumericError("gradient accumulator shape mismatch");

  accumulate_outer(grad.w2, upstream, act.hidden);
  add_to(grad.b2, upstream);

  Vector d_pre(config.hidden, 0.0);
  accumulate_transposed(p.w2, upstream, d_pre);
  for (std::size_t i = 0; i < d_pre.size(); ++i)
    if (!(act.pre[i] > 0.0)) d_pre[i] = 0.0;  // relu'(0) = 0

  accumulate_outer(grad.w1, d_pre, act.pooled);
  add_to(grad.b1, d_pre);

  if (config.mode == EncoderMode::kTrainable) {
    Vector d_pooled(config.d_tok, 0.0);
    accumulate_transposed(p.w1, d_pre, d_pooled);
    const auto& ids = std::get<TokenIds>(input);
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (TokenId t : ids) add_to(grad.embedding.row(t), d_pooled, inv);
  }
}

inline void encode_backward(const EncoderParams& p, const EncoderConfig& config,
                            const EncoderInput& input, std::span<const double> upstream,
                            EncoderGradient& grad) {
  backward(p, config, input, forward(p, config, input), upstream, grad);
}

// Maps corpus examples to encoder inputs: token ids through a vocabulary, or
// precomputed vectors looked up by example id. Holds a non-owning pointer.
class Featurizer {
 public:
  explicit Featurizer(const Vocabulary& vocab) : source_(&vocab) {}
  explicit Featurizer(const VectorTable& vectors) : source_(&vectors) {}

  EncoderInput operator()(const LabeledExample& ex) const {
    if (const auto* vocab = std::get_if<const Vocabulary*>(&source_))
      return (*vocab)->encode(ex.text);
    const auto* table = std::get<const VectorTable*>(source_);
    const Vector* v = table->find(ex.id);
    if (v == nullptr) throw DataError("no vector for example \"" + ex.id + "\"");
    return *v;
  }

  std::vector<EncoderInput> featurize(const Corpus& corpus) const {
    std::vector<EncoderInput> out;
    out.reserve(corpus.size());
    for (const auto& ex : corpus.examples()) out.push_back((*this)(ex));
    return out;
  }

 private:
  std::variant<const Vocabulary*, const VectorTable*> source_;
};

// A trained (or initial) encoder as stored on disk.
struct Model {
  EncoderConfig config;
  Vocabulary vocab;  // only the unknown token in frozen-projection mode
  EncoderParams params;
};

enum class ModelEncoding { kBinary, kText };

inline ModelEncoding parse_model_encoding(std::string_view s) {
  if (s == "binary") return ModelEncoding::kBinary;
  if (s == "text") return ModelEncoding::kText;
  throw ConfigError("unknown model encoding \"" + std::string(s) + "\" (binary|text)");
}

inline constexpr std::string_view kModelMagic = "siamft-model";
inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline void write_le_doubles(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int k = 0; k < 8; ++k) {
      bytes[k] = static_cast<char>(bits & 0xFF);
      bits >>= 8;
    }
    out.write(bytes, 8);
  }
}

inline void read_le_doubles(std::istream& in, std::span<double> values) {
  for (double& v : values) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8))
      throw DataError("model file truncated in parameter block");
    std::uint64_t bits = 0;
    for (int k = 7; k >= 0; --k) bits = (bits << 8) | bytes[k];
    v = std::bit_cast<double>(bits);
  }
}

inline std::string expect_key(std::istream& in, std::string_view key) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("model file truncated before \"" +
                                               std::string(key) + "\"");
  const auto space = line.find(' ');
  if (line.substr(0, space) != key || space == std::string::npos)
    throw DataError("model file: expected \"" + std::string(key) + " <value>\", got \"" +
                    line + "\"");
  return line.substr(space + 1);
}

inline std::size_t parse_size(const std::string& s, std::string_view key) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw DataError("model file: bad value for \"" + std::string(key) + "\": " + s);
  return v;
}

}  // namespace detail

// Header lines ("key value"), the vocabulary (one token per line), then the
// parameter blocks E, W1, b1, W2, b2 in row-major order, either as 8-byte
// little-endian doubles or as text rows with 17 significant digits.
inline void save_model(const Model& model, const std::filesystem::path& path,
                       ModelEncoding encoding) {
  check_params(model.params, model.config);
  auto out = detail::open_output(path);
  const auto& c = model.config;
  out << kModelMagic << ' ' << kModelFormatVersion << '\n'
      << "mode " << to_string(c.mode) << '\n'
      << "d_tok " << c.d_tok << '\n'
      << "d_in " << c.d_in << '\n'
      << "hidden " << c.hidden << '\n'
      << "d_out " << c.d_out << '\n'
      << "encoding " << (encoding == ModelEncoding::kBinary ? "binary" : "text") << '\n'
      << "vocab " << model.vocab.size() << '\n';
  for (const auto& token : model.vocab.tokens()) out << token << '\n';
  out << "params\n";
  model.params.for_each_tensor([&](std::span<const double> t) {
    if (encoding == ModelEncoding::kBinary) {
      detail::write_le_doubles(out, t);
    } else {
      char buf[40];
      for (std::size_t i = 0; i < t.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", t[i]);
        out << (i == 0 ? "" : " ") << buf;
      }
      out << '\n';
    }
  });
  if (!out) throw DataError("write failed: " + path.string());
}

inline Model load_model(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  Model model;
  {
    const auto version = detail::expect_key(in, kModelMagic);
    if (version != std::to_string(kModelFormatVersion))
      throw DataError(path.string() + ": unsupported model format version " + version);
  }
  auto& c = model.config;
  c.mode = parse_encoder_mode(detail::expect_key(in, "mode"));
  c.d_tok = detail::parse_size(detail::expect_key(in, "d_tok"), "d_tok");
  c.d_in = detail::parse_size(detail::expect_key(in, "d_in"), "d_in");
  c.hidden = detail::parse_size(detail::expect_key(in, "hidden"), "hidden");
  c.d_out = detail::parse_size(detail::expect_key(in, "d_out"), "d_out");
  const auto encoding = parse_model_encoding(detail::expect_key(in, "encoding"));
  const auto vocab_size = detail::parse_size(detail::expect_key(in, "vocab"), "vocab");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (vocab_size == 0) throw DataError(path.string() + ": empty vocabulary");
  std::string line;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    if (!std::getline(in, line)) throw DataError(path.string() + ": truncated vocabulary");
    if (i == 0) {
      if (line != kUnknownToken)
        throw DataError(path.string() + ": vocabulary must start with " +
                        std::string(kUnknownToken));
      continue;
    }
    model.vocab.add(line, 0);
  }
  if (!std::getline(in, line) || line != "params")
    throw DataError(path.string() + ": missing parameter block");

  model.params = zero_params(c, vocab_size);
  model.params.for_each_tensor([&](std::span<double> t) {
    if (encoding == ModelEncoding::kBinary) {
      detail::read_le_doubles(in, t);
    } else {
      std::string row;
      if (!std::getline(in, row)) throw DataError(path.string() + ": truncated parameters");
      std::istringstream fields(row);
      std::string field;
      std::size_t k = 0;
      while (fields >> field) {
        if (k == t.size()) throw DataError(path.string() + ": too many parameter values");
        t[k++] = detail::parse_double(field, path.string() + ": ");
      }
      if (k != t.size()) throw DataError(path.string() + ": too few parameter values");
    }
    if (!all_finite(t)) throw DataError(path.string() + ": non-finite parameter");
  });
  return model;
}

}  // namespace siamft
