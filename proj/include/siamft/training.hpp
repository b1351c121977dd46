#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "siamft/corpus.hpp"
#include "siamft/encoder.hpp"
#include "siamft/episodes.hpp"
#include "siamft/error.hpp"
#include "siamft/random.hpp"
#include "siamft/tensor.hpp"

namespace siamft {

// u.v / (max(|u|, eps) * max(|v|, eps))
inline double cosine_similarity(std::span<const double> u, std::span<const double> v,
                                double epsilon_norm = 1e-12) {
  if (u.size() != v.size())
    throw NumericError("cosine similarity of vectors with lengths " +
                       std::to_string(u.size()) + " and " + std::to_string(v.size()));
  const double ru = norm2(u), rv = norm2(v);
  if (!(ru > epsilon_norm && rv > epsilon_norm))
    return dot(u, v) / (std::max(ru, epsilon_norm) * std::max(rv, epsilon_norm));
  // Dividing by the largest magnitude first makes the result bit-identical
  // for any exactly representable rescaling of either input.
  double mu = 0.0, mv = 0.0;
  for (double x : u) mu = std::max(mu, std::abs(x));
  for (double x : v) mv = std::max(mv, std::abs(x));
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i] / mu, b = v[i] / mv;
    uv += a * b;
    uu += a * a;
    vv += b * b;
  }
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

// Adds scale * d cos(u, v) / du into du_acc and scale * d cos / dv into
// dv_acc. A clamped norm is treated as a constant.
inline void cosine_similarity_backward(std::span<const double> u, std::span<const double> v,
                                       double epsilon_norm, double scale,
                                       std::span<double> du_acc, std::span<double> dv_acc) {
  const double ru = norm2(u), rv = norm2(v);
  const double nu = std::max(ru, epsilon_norm);
  const double nv = std::max(rv, epsilon_norm);
  const double s = dot(u, v) / (nu * nv);
  const double inv = scale / (nu * nv);
  const double su = ru > epsilon_norm ? scale * s / (nu * nu) : 0.0;
  const double sv = rv > epsilon_norm ? scale * s / (nv * nv) : 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    du_acc[i] += inv * v[i] - su * u[i];
    dv_acc[i] += inv * u[i] - sv * v[i];
  }
}

struct LossAndGrad {
  double loss;
  double dloss;
};

// Squared error between the cosine similarity and the pair target.
inline LossAndGrad siamese_loss(double sim, double target) {
  const double r = sim - target;
  return {r * r, 2.0 * r};
}

struct SiameseConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double target_same = 1.0;
  double target_diff = 0.0;
  double epsilon_norm = 1e-12;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw ConfigError("siamese.batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("siamese.learning_rate must be positive");
    if (!(target_same > target_diff) || target_same > 1.0 || target_diff < -1.0)
      throw ConfigError("siamese targets must satisfy -1 <= target_diff < target_same <= 1");
    if (!(epsilon_norm > 0.0)) throw ConfigError("siamese.epsilon_norm must be positive");
  }
};

struct NaiveConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t hidden_dim = 128;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw ConfigError("naive.batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("naive.learning_rate must be positive");
    if (hidden_dim == 0) throw ConfigError("naive.hidden_dim must be >= 1");
  }
};

// Classification head used by the naive trainer and discarded afterwards.
struct HeadParams {
  Matrix wh;  // hidden_dim x d_out
  Vector bh;
  Matrix wo;  // n_classes x hidden_dim
  Vector bo;

  template <typename F>
  void for_each_tensor(F&& f) {
    f(wh.flat());
    f(std::span<double>(bh));
    f(wo.flat());
    f(std::span<double>(bo));
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f(wh.flat());
    f(std::span<const double>(bh));
    f(wo.flat());
    f(std::span<const double>(bo));
  }

  bool operator==(const HeadParams&) const = default;
};

inline HeadParams zeros_like(const HeadParams& h) {
  return {Matrix(h.wh.rows(), h.wh.cols()), Vector(h.bh.size(), 0.0),
          Matrix(h.wo.rows(), h.wo.cols()), Vector(h.bo.size(), 0.0)};
}

inline HeadParams init_head(std::size_t d_out, std::size_t hidden_dim, std::size_t n_classes,
                            Rng& rng) {
  HeadParams h{Matrix(hidden_dim, d_out), Vector(hidden_dim, 0.0),
               Matrix(n_classes, hidden_dim), Vector(n_classes, 0.0)};
  detail::fill_uniform(h.wh.flat(), 1.0 / std::sqrt(static_cast<double>(d_out)), rng);
  detail::fill_uniform(h.wo.flat(), 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng);
  return h;
}

// Adam moments for one parameter set, in for_each_tensor order.
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Vector> first;
  std::vector<Vector> second;

  template <typename Params>
  static OptimizerState for_params(const Params& params) {
    OptimizerState s;
    params.for_each_tensor([&](std::span<const double> t) {
      s.first.emplace_back(t.size(), 0.0);
      s.second.emplace_back(t.size(), 0.0);
    });
    return s;
  }
};

// One bias-corrected Adam update.
template <typename Params>
void optimizer_step(Params& params, const Params& grads, OptimizerState& state,
                    double learning_rate) {
  std::vector<std::span<const double>> g;
  grads.for_each_tensor([&](std::span<const double> t) { g.push_back(t); });
  std::size_t k = 0;
  bool shapes_ok = g.size() == state.first.size();
  params.for_each_tensor([&](std::span<double> t) {
    if (k < g.size() && (g[k].size() != t.size() || state.first[k].size() != t.size()))
      shapes_ok = false;
    ++k;
  });
  if (!shapes_ok || k != g.size()) throw NumericError("optimizer shape mismatch");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  k = 0;
  params.for_each_tensor([&](std::span<double> p) {
    auto& m = state.first[k];
    auto& v = state.second[k];
    const auto& gk = g[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gk[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gk[i] * gk[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
    ++k;
  });
}

struct TrainingReport {
  std::vector<double> epoch_loss;     // mean loss per completed epoch
  std::vector<double> epoch_seconds;  // wall time per epoch
  std::vector<double> epoch_accuracy; // naive trainer only
  std::size_t item_count = 0;         // pairs (siamese) or examples (naive)
};

struct EpochProgress {
  std::size_t epoch;
  double mean_loss;
  double seconds;
};

using ProgressFn = std::function<void(const EpochProgress&)>;

// Loss of one pair and, when grad is non-null, scale * dloss/dtheta added to
// it. Both sides go through the same parameter object.
inline double siamese_pair_gradient(const EncoderParams& params, const EncoderConfig& config,
                                    const EncoderInput& a, const EncoderInput& b,
                                    double target, double epsilon_norm, EncoderGradient* grad,
                                    double scale = 1.0) {
  const auto act_a = forward(params, config, a);
  const auto act_b = forward(params, config, b);
  const double sim = cosine_similarity(act_a.output, act_b.output, epsilon_norm);
  const auto [loss, dloss] = siamese_loss(sim, target);
  if (grad != nullptr) {
    Vector dz_a(config.d_out, 0.0), dz_b(config.d_out, 0.0);
    cosine_similarity_backward(act_a.output, act_b.output, epsilon_norm, scale * dloss, dz_a,
                               dz_b);
    backward(params, config, a, act_a, dz_a, *grad);
    backward(params, config, b, act_b, dz_b, *grad);
  }
  return loss;
}

namespace detail {

inline std::vector<std::vector<EncoderInput>> featurize_all(std::span<const Corpus> corpora,
                                                            const Featurizer& featurize) {
  std::vector<std::vector<EncoderInput>> inputs;
  inputs.reserve(corpora.size());
  for (const auto& c : corpora) inputs.push_back(featurize.featurize(c));
  return inputs;
}

inline std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

struct SiameseResult {
  EncoderParams params;
  TrainingReport report;
};

// Siamese finetuning: every pair is encoded twice with the one shared
// parameter set, scored by cosine similarity against the pair target, and
// the batch-mean gradient of both branches drives one Adam step.
inline SiameseResult train_siamese(EncoderParams params, const EncoderConfig& config,
                                   std::span<const EpisodePair> pairs,
                                   std::span<const Corpus> corpora, const Featurizer& featurize,
                                   const SiameseConfig& scfg, const ProgressFn& progress = {}) {
  scfg.validate();
  check_params(params, config);
  SiameseResult result{std::move(params), {}};
  result.report.item_count = pairs.size();
  if (scfg.epochs == 0) return result;
  if (pairs.empty()) throw ConfigError("siamese training needs at least one pair");
  validate_pairs(pairs, corpora);

  const auto inputs = detail::featurize_all(corpora, featurize);
  EncoderParams& shared = result.params;
  EncoderGradient grad = zeros_like(shared);
  auto state = OptimizerState::for_params(shared);
  Rng rng(scfg.seed);
  auto order = detail::iota(pairs.size());

  for (std::size_t epoch = 0; epoch < scfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0, batch = 0; begin < order.size();
         begin += scfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), begin + scfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - begin);
      set_zero(grad);
      double batch_loss = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const auto& p = pairs[order[k]];
        const double target = p.target == 1 ? scfg.target_same : scfg.target_diff;
        batch_loss += siamese_pair_gradient(shared, config, inputs[p.dataset][p.a],
                                            inputs[p.dataset][p.b], target, scfg.epsilon_norm,
                                            &grad, scale);
      }
      if (!std::isfinite(batch_loss))
        throw NumericError("non-finite siamese loss at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(batch + 1));
      loss_sum += batch_loss;
      optimizer_step(shared, grad, state, scfg.learning_rate);
    }
    const double mean = loss_sum / static_cast<double>(pairs.size());
    const double secs = detail::seconds_since(start);
    result.report.epoch_loss.push_back(mean);
    result.report.epoch_seconds.push_back(secs);
    if (progress) progress({epoch + 1, mean, secs});
  }
  return result;
}

struct HeadActivations {
  Vector pre;     // Wh z + bh
  Vector hidden;  // relu(pre)
  Vector logits;  // Wo hidden + bo
};

inline HeadActivations head_forward(const HeadParams& head, std::span<const double> z) {
  HeadActivations act;
  act.pre.resize(head.wh.rows());
  affine(head.wh, z, head.bh, act.pre);
  act.hidden.resize(act.pre.size());
  for (std::size_t i = 0; i < act.pre.size(); ++i)
    act.hidden[i] = act.pre[i] > 0.0 ? act.pre[i] : 0.0;
  act.logits.resize(head.wo.rows());
  affine(head.wo, act.hidden, head.bo, act.logits);
  return act;
}

// Softmax probabilities, computed with the max-logit shift.
inline Vector softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += p[i] = std::exp(logits[i] - mx);
  for (double& x : p) x /= sum;
  return p;
}

// Cross-entropy of one example. When grads are non-null, scale * dloss/dtheta
// is added for both the head and the encoder.
inline double naive_example_gradient(const EncoderParams& params, const EncoderConfig& config,
                                     const HeadParams& head, const EncoderInput& input,
                                     std::size_t class_id, EncoderGradient* enc_grad,
                                     HeadParams* head_grad, double scale = 1.0) {
  const auto enc = forward(params, config, input);
  const auto act = head_forward(head, enc.output);
  const double mx = *std::max_element(act.logits.begin(), act.logits.end());
  double sum = 0.0;
  for (double l : act.logits) sum += std::exp(l - mx);
  const double loss = mx + std::log(sum) - act.logits[class_id];
  if (enc_grad != nullptr && head_grad != nullptr) {
    Vector d_logits = softmax(act.logits);
    d_logits[class_id] -= 1.0;
    for (double& d : d_logits) d *= scale;
    accumulate_outer(head_grad->wo, d_logits, act.hidden);
    add_to(head_grad->bo, d_logits);
    Vector d_pre(act.pre.size(), 0.0);
    accumulate_transposed(head.wo, d_logits, d_pre);
    for (std::size_t i = 0; i < d_pre.size(); ++i)
      if (!(act.pre[i] > 0.0)) d_pre[i] = 0.0;
    accumulate_outer(head_grad->wh, d_pre, enc.output);
    add_to(head_grad->bh, d_pre);
    Vector dz(config.d_out, 0.0);
    accumulate_transposed(head.wh, d_pre, dz);
    backward(params, config, input, enc, dz, *enc_grad);
  }
  return loss;
}

inline std::size_t naive_predict(const EncoderParams& params, const EncoderConfig& config,
                                 const HeadParams& head, const EncoderInput& input) {
  const auto act = head_forward(head, encode(params, config, input));
  return static_cast<std::size_t>(
      std::max_element(act.logits.begin(), act.logits.end()) - act.logits.begin());
}

struct NaiveResult {
  EncoderParams params;
  HeadParams head;
  TrainingReport report;
};

// Classification-head finetuning over the whole corpus. The head maps the
// embedding through one relu layer to class logits (classes numbered as in
// Corpus::class_labels) and gradients flow into the encoder.
inline NaiveResult train_naive(EncoderParams params, const EncoderConfig& config,
                               const Corpus& corpus, const Featurizer& featurize,
                               const NaiveConfig& ncfg, const ProgressFn& progress = {}) {
  ncfg.validate();
  check_params(params, config);
  Rng rng(ncfg.seed);
  NaiveResult result{std::move(params),
                     init_head(config.d_out, ncfg.hidden_dim, corpus.num_classes(), rng),
                     {}};
  result.report.item_count = corpus.size();
  if (ncfg.epochs == 0) return result;

  const auto inputs = featurize.featurize(corpus);
  EncoderGradient enc_grad = zeros_like(result.params);
  HeadParams head_grad = zeros_like(result.head);
  auto enc_state = OptimizerState::for_params(result.params);
  auto head_state = OptimizerState::for_params(result.head);
  auto order = detail::iota(corpus.size());

  for (std::size_t epoch = 0; epoch < ncfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0, batch = 0; begin < order.size();
         begin += ncfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), begin + ncfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - begin);
      set_zero(enc_grad);
      head_grad.for_each_tensor(
          [](std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
      double batch_loss = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t i = order[k];
        batch_loss += naive_example_gradient(result.params, config, result.head, inputs[i],
                                             corpus.class_of(i), &enc_grad, &head_grad, scale);
      }
      if (!std::isfinite(batch_loss))
        throw NumericError("non-finite naive loss at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(batch + 1));
      loss_sum += batch_loss;
      optimizer_step(result.params, enc_grad, enc_state, ncfg.learning_rate);
      optimizer_step(result.head, head_grad, head_state, ncfg.learning_rate);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      correct += naive_predict(result.params, config, result.head, inputs[i]) ==
                 corpus.class_of(i);
    const double mean = loss_sum / static_cast<double>(corpus.size());
    const double secs = detail::seconds_since(start);
    result.report.epoch_loss.push_back(mean);
    result.report.epoch_seconds.push_back(secs);
    result.report.epoch_accuracy.push_back(static_cast<double>(correct) /
                                           static_cast<double>(corpus.size()));
    if (progress) progress({epoch + 1, mean, secs});
  }
  return result;
}

}  // namespace siamft
