#include <gtest/gtest.h>

#include "oracles/finite_diff.hpp"
#include "oracles/reference_adam.hpp"
#include "siamft/siamft.hpp"
#include "support.hpp"

using namespace siamft;
using testing_support::random_vector;

namespace {

EncoderConfig tiny(std::size_t d_tok, std::size_t hidden, std::size_t d_out) {
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

// Scalar parameter set for driving the optimizer directly.
struct Scalar {
  Vector x;
  template <typename F>
  void for_each_tensor(F&& f) { f(std::span<double>(x)); }
  template <typename F>
  void for_each_tensor(F&& f) const { f(std::span<const double>(x)); }
};

// Encoder plus head, so one gradient check covers both parameter sets.
struct Joint {
  EncoderParams enc;
  HeadParams head;
  template <typename F>
  void for_each_tensor(F&& f) {
    enc.for_each_tensor(f);
    head.for_each_tensor(f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    enc.for_each_tensor(f);
    head.for_each_tensor(f);
  }
};

Corpus separable(std::size_t n_classes, std::size_t per_class, std::uint64_t seed) {
  SyntheticSpec s;
  s.dataset_id = "sep";
  s.n_classes = n_classes;
  s.examples_per_class = per_class;
  s.class_pool_size = 5;
  s.shared_pool_size = 0;
  s.class_token_rate = 1.0;
  s.doc_length = 6;
  s.seed = seed;
  return generate_synthetic(s);
}

}  // namespace

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(cosine_similarity(Vector{1, 0}, Vector{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(Vector{1, 0}, Vector{0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(Vector{1, 0}, Vector{-1, 0}), -1.0);
  EXPECT_EQ(cosine_similarity(Vector{0, 0}, Vector{1, 0}), 0.0);
  EXPECT_THROW(cosine_similarity(Vector{1, 0}, Vector{1, 0, 0}), NumericError);
}

TEST(Cosine, BackwardMatchesFiniteDifferences) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(6);
    Scalar u{random_vector(n, rng)}, v{random_vector(n, rng)};
    Scalar gu{Vector(n, 0.0)}, gv{Vector(n, 0.0)};
    cosine_similarity_backward(u.x, v.x, 1e-12, 1.0, gu.x, gv.x);
    auto fu = [&](const Scalar& q) { return cosine_similarity(q.x, v.x); };
    auto fv = [&](const Scalar& q) { return cosine_similarity(u.x, q.x); };
    EXPECT_TRUE(oracle::check_gradient(u, gu, fu).ok());
    EXPECT_TRUE(oracle::check_gradient(v, gv, fv).ok());
  }
}

TEST(SiameseLoss, Examples) {
  auto [l0, d0] = siamese_loss(1.0, 1.0);
  EXPECT_EQ(l0, 0.0);
  EXPECT_EQ(d0, 0.0);
  auto [l1, d1] = siamese_loss(0.0, 1.0);
  EXPECT_EQ(l1, 1.0);
  EXPECT_EQ(d1, -2.0);
  auto [l2, d2] = siamese_loss(0.3, 0.0);
  EXPECT_NEAR(l2, 0.09, 1e-15);
  EXPECT_NEAR(d2, 0.6, 1e-15);
}

TEST(Adam, ZeroGradientKeepsParameters) {
  Scalar p{{1.5, -2.0}};
  auto state = OptimizerState::for_params(p);
  state.first[0] = {0.4, -0.2};
  state.second[0] = {0.01, 0.02};
  const Scalar zero{{0.0, 0.0}};
  optimizer_step(p, zero, state, 1e-3);
  EXPECT_NEAR(state.first[0][0], 0.36, 1e-15);
  EXPECT_NEAR(state.second[0][1], 0.02 * 0.999, 1e-15);

  Scalar q{{1.5, -2.0}};
  auto fresh = OptimizerState::for_params(q);
  for (int k = 0; k < 5; ++k) optimizer_step(q, zero, fresh, 1e-3);
  EXPECT_EQ(q.x, (Vector{1.5, -2.0}));
  EXPECT_EQ(fresh.first[0], (Vector{0.0, 0.0}));
}

TEST(Adam, FirstStepIsLearningRate) {
  Scalar p{{0.0}};
  auto state = OptimizerState::for_params(p);
  optimizer_step(p, Scalar{{1.0}}, state, 1e-3);
  EXPECT_NEAR(p.x[0], -1e-3, 1e-10);
}

TEST(Adam, QuadraticTrajectoryMatchesReference) {
  const double a = 3.0, c = 0.7, lr = 0.05;
  const auto expected = oracle::quadratic_trajectory(2.0, a, c, lr, 10);
  Scalar p{{2.0}};
  auto state = OptimizerState::for_params(p);
  for (int k = 0; k < 10; ++k) {
    optimizer_step(p, Scalar{{a * (p.x[0] - c)}}, state, lr);
    EXPECT_NEAR(p.x[0], expected[k], 1e-10) << "step " << k + 1;
  }
}

TEST(Adam, ShapeMismatchThrows) {
  Scalar p{{0.0, 1.0}};
  auto state = OptimizerState::for_params(p);
  EXPECT_THROW(optimizer_step(p, Scalar{{1.0}}, state, 1e-3), NumericError);
}

TEST(SiameseGradient, MatchesFiniteDifferences) {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    const auto cfg = tiny(1 + rng.uniform_index(5), 1 + rng.uniform_index(5),
                          1 + rng.uniform_index(5));
    const std::size_t vocab = 2 + rng.uniform_index(9);
    auto p = init_params(cfg, vocab, 500 + trial);
    p.b1 = random_vector(cfg.hidden, rng, 0.3);
    p.b2 = random_vector(cfg.d_out, rng, 0.3);
    const EncoderInput a = random_tokens(vocab, 1 + rng.uniform_index(5), rng);
    const EncoderInput b = random_tokens(vocab, 1 + rng.uniform_index(5), rng);
    const double target = static_cast<double>(trial % 2);
    auto grad = zeros_like(p);
    siamese_pair_gradient(p, cfg, a, b, target, 1e-12, &grad);
    auto loss = [&](const EncoderParams& q) {
      return siamese_pair_gradient(q, cfg, a, b, target, 1e-12, nullptr);
    };
    const auto check = oracle::check_gradient(p, grad, loss);
    EXPECT_TRUE(check.ok()) << "trial " << trial << ": " << check.first_failure;
  }
}

TEST(SiameseGradient, SymmetricInPairOrder) {
  const auto cfg = tiny(4, 6, 5);
  const auto p = init_params(cfg, 8, 3);
  const EncoderInput a = TokenIds{1, 2, 3}, b = TokenIds{4, 7};
  auto gab = zeros_like(p), gba = zeros_like(p);
  siamese_pair_gradient(p, cfg, a, b, 1.0, 1e-12, &gab);
  siamese_pair_gradient(p, cfg, b, a, 1.0, 1e-12, &gba);
  std::vector<double> x, y;
  gab.for_each_tensor([&](std::span<const double> t) { x.insert(x.end(), t.begin(), t.end()); });
  gba.for_each_tensor([&](std::span<const double> t) { y.insert(y.end(), t.begin(), t.end()); });
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], 1e-12);
}

TEST(SiameseTraining, SingleStepMatchesAdamOfNumericGradient) {
  const auto corpus = testing_support::make_corpus({"a", "b"}, "one", {"x y z", "y w"});
  const auto vocab = build_vocab(corpus, 1);
  const auto cfg = tiny(3, 4, 3);
  auto p = init_params(cfg, vocab.size(), 21);
  p.b1 = {0.1, 0.2, -0.1, 0.3};
  const std::vector<Corpus> corpora = {corpus};
  const std::vector<EpisodePair> pairs = {{0, 0, 1, 0, "one"}};
  SiameseConfig scfg;
  scfg.epochs = 1;
  scfg.batch_size = 1;
  scfg.learning_rate = 1e-3;
  const Featurizer feat(vocab);
  const auto trained = train_siamese(p, cfg, pairs, corpora, feat, scfg).params;

  const EncoderInput a = feat(corpus[0]), b = feat(corpus[1]);
  auto loss = [&](const EncoderParams& q) {
    return siamese_pair_gradient(q, cfg, a, b, 0.0, 1e-12, nullptr);
  };
  // First bias-corrected Adam step: delta = -lr * g / (|g| + eps).
  std::vector<std::span<const double>> before, after;
  p.for_each_tensor([&](std::span<const double> t) { before.push_back(t); });
  trained.for_each_tensor([&](std::span<const double> t) { after.push_back(t); });
  EncoderParams probe = p;
  std::vector<std::span<double>> slots;
  probe.for_each_tensor([&](std::span<double> t) { slots.push_back(t); });
  const double h = 1e-6;
  for (std::size_t k = 0; k < slots.size(); ++k)
    for (std::size_t i = 0; i < slots[k].size(); ++i) {
      const double saved = slots[k][i];
      slots[k][i] = saved + h;
      const double up = loss(probe);
      slots[k][i] = saved - h;
      const double down = loss(probe);
      slots[k][i] = saved;
      const double g = (up - down) / (2 * h);
      const double expected = -1e-3 * g / (std::abs(g) + 1e-8);
      const double got = after[k][i] - before[k][i];
      if (std::abs(g) > 1e-6)
        EXPECT_NEAR(got, expected, 1e-4 * 1e-3) << "tensor " << k << " index " << i;
      else
        EXPECT_LE(std::abs(got), 1e-3 + 1e-12);
    }
}

TEST(SiameseTraining, ZeroEpochsIsNoOp) {
  const auto corpus = separable(2, 5, 1);
  const auto vocab = build_vocab(corpus, 1);
  const auto cfg = tiny(4, 4, 4);
  const auto p = init_params(cfg, vocab.size(), 1);
  SiameseConfig scfg;
  scfg.epochs = 0;
  const std::vector<Corpus> corpora = {corpus};
  const auto r = train_siamese(p, cfg, {}, corpora, Featurizer(vocab), scfg);
  EXPECT_EQ(r.params, p);
  EXPECT_TRUE(r.report.epoch_loss.empty());
}

TEST(SiameseTraining, SeparableToyAndDeterminism) {
  const auto full = separable(2, 60, 4);
  const auto [train, held] = split_corpus(full, {SplitMode::kRandomByExample, 0.8, {}, 5});
  const auto vocab = build_vocab(full, 1);
  const auto cfg = tiny(8, 16, 16);
  const auto p0 = init_params(cfg, vocab.size(), 6);
  const std::vector<Corpus> corpora = {train};
  const auto pairs = generate_episodes(corpora, {{{train.dataset_id(), 2000}}, 0.5, 7});
  SiameseConfig scfg;
  scfg.seed = 8;
  const Featurizer feat(vocab);
  const auto r = train_siamese(p0, cfg, pairs, corpora, feat, scfg);
  ASSERT_EQ(r.report.epoch_loss.size(), 30u);
  EXPECT_LT(r.report.epoch_loss.back(), 0.05);
  EXPECT_LT(r.report.epoch_loss.back(), r.report.epoch_loss.front());
  auto embed = [&](const LabeledExample& ex) { return encode(r.params, cfg, feat(ex)); };
  EXPECT_GT(delta_cosine_distance(embed, held, {5000, 0.5, 9}).delta, 0.5);

  const auto again = train_siamese(p0, cfg, pairs, corpora, feat, scfg);
  EXPECT_EQ(again.params, r.params);
}

TEST(SiameseTraining, RejectsBadConfigAndPairs) {
  const auto corpus = separable(2, 4, 1);
  const auto vocab = build_vocab(corpus, 1);
  const auto cfg = tiny(2, 2, 2);
  const auto p = init_params(cfg, vocab.size(), 1);
  const std::vector<Corpus> corpora = {corpus};
  SiameseConfig scfg;
  scfg.batch_size = 0;
  EXPECT_THROW(train_siamese(p, cfg, {}, corpora, Featurizer(vocab), scfg), ConfigError);
  scfg.batch_size = 4;
  const std::vector<EpisodePair> wrong = {{0, 0, 1, 0, "sep"}};  // same class, target 0
  EXPECT_THROW(train_siamese(p, cfg, wrong, corpora, Featurizer(vocab), scfg), DataError);
  EXPECT_THROW(train_siamese(p, tiny(3, 2, 2), {}, corpora, Featurizer(vocab), scfg),
               NumericError);
}

TEST(SiameseTraining, NonFiniteLossIsReported) {
  const auto corpus = separable(2, 4, 1);
  const auto vocab = build_vocab(corpus, 1);
  const auto cfg = tiny(2, 2, 2);
  auto p = init_params(cfg, vocab.size(), 1);
  p.b2[0] = std::numeric_limits<double>::quiet_NaN();
  const std::vector<Corpus> corpora = {corpus};
  const auto pairs = generate_episodes(corpora, {{{"sep", 8}}, 0.5, 1});
  try {
    train_siamese(p, cfg, pairs, corpora, Featurizer(vocab), SiameseConfig{});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
    EXPECT_EQ(e.code(), ExitCode::kNumeric);
  }
}

TEST(NaiveGradient, MatchesFiniteDifferencesOnThreeClasses) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cfg = tiny(1 + rng.uniform_index(5), 1 + rng.uniform_index(5),
                          1 + rng.uniform_index(5));
    const std::size_t vocab = 2 + rng.uniform_index(9);
    Joint j{init_params(cfg, vocab, 40 + trial), {}};
    j.enc.b1 = random_vector(cfg.hidden, rng, 0.3);
    Rng head_rng(trial);
    j.head = init_head(cfg.d_out, 1 + rng.uniform_index(5), 3, head_rng);
    j.head.bh = random_vector(j.head.bh.size(), rng, 0.3);
    const EncoderInput x = random_tokens(vocab, 1 + rng.uniform_index(5), rng);
    const std::size_t cls = rng.uniform_index(3);
    Joint g{zeros_like(j.enc), zeros_like(j.head)};
    naive_example_gradient(j.enc, cfg, j.head, x, cls, &g.enc, &g.head);
    auto loss = [&](const Joint& q) {
      return naive_example_gradient(q.enc, cfg, q.head, x, cls, nullptr, nullptr);
    };
    const auto check = oracle::check_gradient(j, g, loss);
    EXPECT_TRUE(check.ok()) << "trial " << trial << ": " << check.first_failure;
  }
}

TEST(NaiveTraining, SeparableToyReachesHighAccuracy) {
  const auto corpus = separable(2, 50, 12);
  const auto vocab = build_vocab(corpus, 1);
  const auto cfg = tiny(8, 16, 16);
  NaiveConfig ncfg;
  ncfg.seed = 3;
  const auto r = train_naive(init_params(cfg, vocab.size(), 2), cfg, corpus, Featurizer(vocab), ncfg);
  ASSERT_EQ(r.report.epoch_accuracy.size(), 30u);
  EXPECT_GE(r.report.epoch_accuracy.back(), 0.95);
  EXPECT_EQ(r.head.wh.rows(), 128u);
  EXPECT_EQ(r.head.wo.rows(), 2u);
}

TEST(NaiveTraining, ZeroEpochsLeavesEncoder) {
  const auto corpus = separable(3, 5, 1);
  const auto vocab = build_vocab(corpus, 1);
  const auto cfg = tiny(4, 4, 4);
  const auto p = init_params(cfg, vocab.size(), 1);
  NaiveConfig ncfg;
  ncfg.epochs = 0;
  const auto r = train_naive(p, cfg, corpus, Featurizer(vocab), ncfg);
  EXPECT_EQ(r.params, p);
  EXPECT_TRUE(r.report.epoch_loss.empty());
}

TEST(NaiveTraining, Deterministic) {
  const auto corpus = separable(3, 10, 2);
  const auto vocab = build_vocab(corpus, 1);
  const auto cfg = tiny(4, 8, 4);
  NaiveConfig ncfg;
  ncfg.epochs = 3;
  ncfg.hidden_dim = 8;
  const auto p = init_params(cfg, vocab.size(), 1);
  const auto a = train_naive(p, cfg, corpus, Featurizer(vocab), ncfg);
  const auto b = train_naive(p, cfg, corpus, Featurizer(vocab), ncfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.head, b.head);
  EXPECT_NE(a.params, p);
}
