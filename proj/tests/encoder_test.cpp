#include <gtest/gtest.h>

#include "oracles/finite_diff.hpp"
#include "oracles/forward_script.hpp"
#include "siamft/siamft.hpp"
#include "support.hpp"

using namespace siamft;
using testing_support::random_vector;
using testing_support::TempDir;

namespace {

EncoderConfig small_config(std::size_t d_tok, std::size_t hidden, std::size_t d_out) {
  EncoderConfig c;
  c.d_tok = d_tok;
  c.hidden = hidden;
  c.d_out = d_out;
  return c;
}

TokenIds random_tokens(std::size_t vocab, std::size_t len, Rng& rng) {
  TokenIds ids(len);
  for (auto& t : ids) t = static_cast<TokenId>(rng.uniform_index(vocab));
  return ids;
}

}  // namespace

TEST(Encoder, ZeroParamsGiveZeroOutput) {
  const auto cfg = small_config(3, 4, 5);
  const auto p = zero_params(cfg, 6);
  for (const TokenIds& ids : {TokenIds{0}, TokenIds{1, 2, 5}, TokenIds{3, 3}})
    EXPECT_EQ(encode(p, cfg, ids), Vector(5, 0.0));
}

TEST(Encoder, SingleTokenPoolsToItsRow) {
  const auto cfg = small_config(4, 3, 2);
  const auto p = init_params(cfg, 7, 11);
  for (TokenId t = 0; t < 7; ++t) {
    const auto act = forward(p, cfg, TokenIds{t});
    const auto row = p.embedding.row(t);
    EXPECT_EQ(act.pooled, Vector(row.begin(), row.end()));
  }
}

TEST(Encoder, MatchesStraightLineScript) {
  const auto cfg = small_config(2, 2, 2);
  EncoderParams p = zero_params(cfg, 3);
  const oracle::Mat E = {{0.5, -1.0}, {2.0, 0.25}, {-0.75, 1.5}};
  const oracle::Mat W1 = {{1.0, -2.0}, {0.5, 0.5}};
  const std::vector<double> b1 = {0.1, -3.0};
  const oracle::Mat W2 = {{1.5, -0.5}, {-1.0, 2.0}};
  const std::vector<double> b2 = {0.2, -0.3};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 2; ++c) p.embedding(r, c) = E[r][c];
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      p.w1(r, c) = W1[r][c];
      p.w2(r, c) = W2[r][c];
    }
  p.b1 = b1;
  p.b2 = b2;
  for (const std::vector<int>& toks : {std::vector<int>{0, 1}, {2, 0}, {1, 1}, {2, 2}}) {
    const auto expected = oracle::encoder_forward(E, W1, b1, W2, b2, toks);
    const auto got = encode(p, cfg, TokenIds(toks.begin(), toks.end()));
    ASSERT_EQ(got.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(got[i], expected[i], 1e-14);
  }
}

TEST(Encoder, ZeroUpstreamLeavesAccumulator) {
  const auto cfg = small_config(3, 4, 2);
  Rng rng(3);
  const auto p = init_params(cfg, 5, 1);
  auto grad = zeros_like(p);
  grad.for_each_tensor([&](std::span<double> t) {
    for (double& x : t) x = rng.uniform(-1, 1);
  });
  const auto before = grad;
  encode_backward(p, cfg, TokenIds{1, 4}, Vector(2, 0.0), grad);
  EXPECT_EQ(grad, before);
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    const auto cfg = small_config(1 + rng.uniform_index(5), 1 + rng.uniform_index(5),
                                  1 + rng.uniform_index(5));
    const std::size_t vocab = 2 + rng.uniform_index(9);
    auto p = init_params(cfg, vocab, 100 + trial);
    p.b1 = random_vector(cfg.hidden, rng, 0.3);
    p.b2 = random_vector(cfg.d_out, rng, 0.3);
    const auto ids = random_tokens(vocab, 1 + rng.uniform_index(6), rng);
    const auto c = random_vector(cfg.d_out, rng);
    auto probe = [&](const EncoderParams& q) { return dot(c, encode(q, cfg, ids)); };
    auto grad = zeros_like(p);
    encode_backward(p, cfg, ids, c, grad);
    const auto check = oracle::check_gradient(p, grad, probe, 1e-4);
    EXPECT_TRUE(check.ok()) << "trial " << trial << ": " << check.first_failure;
  }
}

TEST(Encoder, RepeatedTokenSumsContributions) {
  const auto cfg = small_config(3, 4, 2);
  const auto p = init_params(cfg, 4, 9);
  const Vector up = {0.7, -1.3};
  auto g = zeros_like(p);
  // {2, 2, 1}: row 2 gets two shares of d_pooled / 3, row 1 one share.
  encode_backward(p, cfg, TokenIds{2, 2, 1}, up, g);
  const auto row2 = g.embedding.row(2), row1 = g.embedding.row(1);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(row2[j], 2.0 * row1[j], 1e-15);
  for (double x : g.embedding.row(0)) EXPECT_EQ(x, 0.0);
  for (double x : g.embedding.row(3)) EXPECT_EQ(x, 0.0);
}

TEST(Encoder, EncodeIsPure) {
  const auto cfg = small_config(4, 6, 3);
  const auto p = init_params(cfg, 10, 4);
  const TokenIds ids = {1, 5, 9};
  const auto a = encode(p, cfg, ids);
  const auto b = encode(p, cfg, ids);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
}

TEST(Encoder, FrozenModeIgnoresEmbedding) {
  EncoderConfig cfg;
  cfg.mode = EncoderMode::kFrozenProjection;
  cfg.d_in = 4;
  cfg.hidden = 6;
  cfg.d_out = 4;
  auto p = identity_params(cfg, 8);
  EXPECT_TRUE(p.embedding.empty());
  const Vector x = {0.3, -0.2, 0.9, 0.0};
  const auto z = encode(p, cfg, x);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(z[i], x[i], 1e-15);
  auto grad = zeros_like(p);
  encode_backward(p, cfg, x, Vector{1, 2, 3, 4}, grad);
  EXPECT_TRUE(grad.embedding.empty());
  EXPECT_THROW(encode(p, cfg, TokenIds{0}), NumericError);
  EXPECT_THROW(encode(p, cfg, Vector{1, 2}), NumericError);

  Rng rng(6);
  const auto c = random_vector(4, rng);
  auto probe = [&](const EncoderParams& q) { return dot(c, encode(q, cfg, x)); };
  auto g = zeros_like(p);
  encode_backward(p, cfg, x, c, g);
  EXPECT_TRUE(oracle::check_gradient(p, g, probe, 1e-4).ok());
}

TEST(Encoder, InitRanges) {
  const auto cfg = small_config(8, 16, 4);
  const auto p = init_params(cfg, 50, 1);
  for (double e : p.embedding.flat()) EXPECT_LE(std::abs(e), 0.1);
  for (double w : p.w1.flat()) EXPECT_LE(std::abs(w), 1.0 / std::sqrt(8.0));
  for (double w : p.w2.flat()) EXPECT_LE(std::abs(w), 1.0 / std::sqrt(16.0));
  EXPECT_EQ(p.b1, Vector(16, 0.0));
  EXPECT_EQ(init_params(cfg, 50, 1), p);
  EXPECT_NE(init_params(cfg, 50, 2), p);
}

TEST(Model, BinaryRoundTripIsBitExact) {
  TempDir dir;
  const auto corpus = testing_support::make_corpus({"a", "b"}, "m", {"hello world", "bye now"});
  Model m{small_config(3, 5, 4), build_vocab(corpus, 1), {}};
  m.params = init_params(m.config, m.vocab.size(), 77);
  m.params.b1[2] = 1.0 / 3.0;
  save_model(m, dir / "a.model", ModelEncoding::kBinary);
  const auto back = load_model(dir / "a.model");
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.vocab, m.vocab);
  EXPECT_EQ(back.params, m.params);
  save_model(back, dir / "b.model", ModelEncoding::kBinary);
  EXPECT_EQ(testing_support::read_file(dir / "a.model"),
            testing_support::read_file(dir / "b.model"));

  save_model(m, dir / "t.model", ModelEncoding::kText);
  EXPECT_EQ(load_model(dir / "t.model").params, m.params);
}

TEST(Model, RejectsCorruptFiles) {
  TempDir dir;
  testing_support::write_file(dir / "x.model", "not-a-model 1\n");
  EXPECT_THROW(load_model(dir / "x.model"), DataError);
  Model m{small_config(2, 2, 2), Vocabulary(), {}};
  m.params = init_params(m.config, 1, 1);
  save_model(m, dir / "ok.model", ModelEncoding::kBinary);
  auto bytes = testing_support::read_file(dir / "ok.model");
  testing_support::write_file(dir / "cut.model", bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(load_model(dir / "cut.model"), DataError);
}

TEST(Featurizer, VectorLookup) {
  VectorTable t(2);
  t.insert("e0", {1, 2});
  const Featurizer f(t);
  const auto c = testing_support::make_corpus({"a", "b"});
  EXPECT_EQ(std::get<Vector>(f(c[0])), (Vector{1, 2}));
  EXPECT_THROW(f(c[1]), DataError);
}
