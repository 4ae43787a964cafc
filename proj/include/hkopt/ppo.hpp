/* Copyright 2026 The hkopt Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Proximal Policy Optimization for the featurized policy over offline trees.

#ifndef HKOPT_PPO_HPP_
#define HKOPT_PPO_HPP_

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hkopt/action_space.hpp"
#include "hkopt/offline_env.hpp"
#include "hkopt/policy.hpp"
#include "hkopt/util.hpp"

namespace hkopt {

struct TrainerConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  int epochs = 4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double learning_rate = 0.003;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool normalize_advantages = true;
  int iterations = 500;
  int episodes_per_iteration = 64;
  int eval_episodes = 200;
};

inline json to_json(const TrainerConfig& c) {
  return {{"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_epsilon", c.clip_epsilon},
          {"epochs", c.epochs},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"normalize_advantages", c.normalize_advantages},
          {"iterations", c.iterations},
          {"episodes_per_iteration", c.episodes_per_iteration},
          {"eval_episodes", c.eval_episodes}};
}

inline TrainerConfig trainer_config_from_json(const json& j) {
  TrainerConfig c;
  c.gamma = j.value("gamma", c.gamma);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
  c.epochs = j.value("epochs", c.epochs);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.normalize_advantages = j.value("normalize_advantages", c.normalize_advantages);
  c.iterations = j.value("iterations", c.iterations);
  c.episodes_per_iteration =
      j.value("episodes_per_iteration", c.episodes_per_iteration);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  if (c.epochs < 1 || c.iterations < 0 || c.episodes_per_iteration < 1)
    throw ConfigError("trainer: epochs and episodes_per_iteration must be >= 1");
  if (!(c.gamma > 0 && c.gamma <= 1) || !(c.gae_lambda >= 0 && c.gae_lambda <= 1))
    throw ConfigError("trainer: gamma and gae_lambda must lie in [0, 1]");
  return c;
}

inline std::string config_hash(const TrainerConfig& c) {
  return sha256_hex(to_json(c).dump());
}

struct Transition {
  StepFeatures features;
  std::size_t action_index = 0;
  double logprob = 0;
  double reward = 0;
  bool done = false;
  double value = 0;
  double advantage = 0;
  double ret = 0;
};

struct RolloutBatch {
  std::vector<Transition> transitions;
  std::vector<double> episode_returns;  // undiscounted

  [[nodiscard]] double mean_return() const {
    if (episode_returns.empty()) return 0;
    double s = 0;
    for (double r : episode_returns) s += r;
    return s / static_cast<double>(episode_returns.size());
  }
};

/// G_t = r_t + gamma * G_{t+1}, reset at episode ends.
inline std::vector<double> discounted_returns(const std::vector<double>& rewards,
                                              const std::vector<bool>& dones,
                                              double gamma) {
  std::vector<double> g(rewards.size());
  double next = 0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    if (dones[i]) next = 0;
    next = rewards[i] + gamma * next;
    g[i] = next;
  }
  return g;
}

/// Generalized advantage estimates; the value after a terminal step is 0.
inline std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                          const std::vector<double>& values,
                                          const std::vector<bool>& dones,
                                          double gamma, double lambda) {
  std::vector<double> adv(rewards.size());
  double next_adv = 0;
  double next_value = 0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    if (dones[i]) {
      next_adv = 0;
      next_value = 0;
    }
    const double delta = rewards[i] + gamma * next_value - values[i];
    next_adv = delta + gamma * lambda * next_adv;
    adv[i] = next_adv;
    next_value = values[i];
  }
  return adv;
}

inline void finalize_batch(RolloutBatch& batch, const TrainerConfig& cfg) {
  std::vector<double> r, v;
  std::vector<bool> d;
  for (const auto& t : batch.transitions) {
    r.push_back(t.reward);
    v.push_back(t.value);
    d.push_back(t.done);
  }
  auto g = discounted_returns(r, d, cfg.gamma);
  auto a = gae_advantages(r, v, d, cfg.gamma, cfg.gae_lambda);
  for (std::size_t i = 0; i < batch.transitions.size(); ++i) {
    batch.transitions[i].ret = g[i];
    batch.transitions[i].advantage = a[i];
  }
}

/// Runs `episodes` episodes round-robin over `trees`, sampling from the
/// policy. Deterministic for a given rng state.
inline RolloutBatch collect_rollouts(
    const std::vector<std::shared_ptr<const TrajectoryTree>>& trees,
    const HardwareSpec& hardware, const EnvConfig& env_cfg,
    FeaturizedPolicy& policy, int episodes, Rng& rng,
    const TrainerConfig& cfg) {
  if (trees.empty()) throw PreconditionError("collect_rollouts: no trees");
  RolloutBatch batch;
  for (int e = 0; e < episodes; ++e) {
    TreeEnv env(trees[static_cast<std::size_t>(e) % trees.size()], hardware,
                env_cfg);
    Observation obs = env.reset();
    double total = 0;
    bool done = false;
    while (!done) {
      auto catalog = enumerate_actions(obs);
      Transition t;
      t.features = featurize(obs, catalog);
      auto probs = softmax(step_logits(policy.theta(), t.features));
      t.action_index = sample_index(probs, rng);
      t.logprob = std::log(probs[t.action_index]);
      t.value = policy.value(t.features.obs);
      auto res = env.step(catalog[t.action_index]);
      t.reward = res.reward;
      t.done = res.done;
      total += res.reward;
      done = res.done;
      obs = std::move(res.observation);
      batch.transitions.push_back(std::move(t));
    }
    batch.episode_returns.push_back(total);
  }
  finalize_batch(batch, cfg);
  return batch;
}

inline RolloutBatch collect_rollouts(
    const std::vector<std::shared_ptr<const TrajectoryTree>>& trees,
    const HardwareSpec& hardware, const EnvConfig& env_cfg,
    FeaturizedPolicy& policy, int episodes, std::uint64_t seed,
    const TrainerConfig& cfg = {}) {
  Rng rng(seed);
  return collect_rollouts(trees, hardware, env_cfg, policy, episodes, rng, cfg);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct LossAndGrad {
  double loss = 0;
  std::vector<double> grad;
  double entropy = 0;
  double clip_fraction = 0;
};

inline std::vector<double> batch_advantages(const RolloutBatch& batch,
                                            const TrainerConfig& cfg) {
  std::vector<double> a;
  for (const auto& t : batch.transitions) a.push_back(t.advantage);
  if (!cfg.normalize_advantages || a.empty()) return a;
  double mean = 0;
  for (double x : a) mean += x;
  mean /= static_cast<double>(a.size());
  double var = 0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(a.size()));
  for (double& x : a) x = (x - mean) / (sd + 1e-8);
  return a;
}

/// Clipped surrogate loss minus the entropy bonus, averaged over the batch,
/// and its gradient with respect to the policy parameters.
inline LossAndGrad policy_loss(const RolloutBatch& batch,
                               const std::vector<double>& theta,
                               const std::vector<double>& advantages,
                               const TrainerConfig& cfg) {
  LossAndGrad out;
  out.grad.assign(theta.size(), 0.0);
  const double n = static_cast<double>(batch.transitions.size());
  std::size_t clipped = 0;
  std::vector<double> dz;  // d(loss)/d(logit_b) for one transition

  for (std::size_t i = 0; i < batch.transitions.size(); ++i) {
    const auto& t = batch.transitions[i];
    const double adv = advantages[i];
    auto logits = step_logits(theta, t.features);
    auto p = softmax(logits);
    const std::size_t a = t.action_index;
    const double logp = std::log(p[a]);
    const double ratio = std::exp(logp - t.logprob);
    const double lo = 1.0 - cfg.clip_epsilon;
    const double hi = 1.0 + cfg.clip_epsilon;
    const double clipped_ratio = std::clamp(ratio, lo, hi);
    if (std::abs(ratio - 1.0) > cfg.clip_epsilon) ++clipped;
    const double surr1 = ratio * adv;
    const double surr2 = clipped_ratio * adv;
    out.loss += -std::min(surr1, surr2) / n;

    double entropy = 0;
    for (double q : p)
      if (q > 0) entropy -= q * std::log(q);
    out.entropy += entropy / n;
    out.loss -= cfg.entropy_coef * entropy / n;

    dz.assign(p.size(), 0.0);
    // The unclipped branch is active unless clipping binds.
    if (surr1 <= surr2) {
      const double coeff = -adv * ratio / n;
      for (std::size_t b = 0; b < p.size(); ++b)
        dz[b] += coeff * ((b == a ? 1.0 : 0.0) - p[b]);
    }
    // dH/dz_b = -p_b (log p_b + H)
    for (std::size_t b = 0; b < p.size(); ++b) {
      const double lp = p[b] > 0 ? std::log(p[b]) : 0.0;
      dz[b] -= cfg.entropy_coef * (-p[b] * (lp + entropy)) / n;
    }
    for (std::size_t b = 0; b < p.size(); ++b) {
      if (dz[b] == 0) continue;
      const auto& act = t.features.actions[b];
      for (std::size_t oi = 0; oi < kObsDim; ++oi) {
        const double o = t.features.obs[oi];
        if (o == 0) continue;
        double* row = out.grad.data() + oi * kActDim;
        for (std::size_t aj = 0; aj < kActDim; ++aj)
          row[aj] += dz[b] * o * act[aj];
      }
    }
  }
  out.clip_fraction = n > 0 ? static_cast<double>(clipped) / n : 0.0;
  return out;
}

/// Mean of 0.5 (V - G)^2 and its gradient with respect to the value weights.
inline LossAndGrad value_loss(const RolloutBatch& batch,
                              const std::vector<double>& weights) {
  LossAndGrad out;
  out.grad.assign(weights.size(), 0.0);
  const double n = static_cast<double>(batch.transitions.size());
  for (const auto& t : batch.transitions) {
    double v = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) v += weights[i] * t.features.obs[i];
    const double err = v - t.ret;
    out.loss += 0.5 * err * err / n;
    for (std::size_t i = 0; i < weights.size(); ++i)
      out.grad[i] += err * t.features.obs[i] / n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer and update
// ---------------------------------------------------------------------------

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t size, double lr, double beta1, double beta2,
                double eps)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1 - b1_) * grad[i];
      v_[i] = b2_ * v_[i] + (1 - b2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

struct UpdateStats {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
};

/// Optimizer state for the policy and value parameters of one trainer.
struct PpoOptimizers {
  AdamOptimizer policy;
  AdamOptimizer value;

  explicit PpoOptimizers(const TrainerConfig& cfg)
      : policy(kFeatureDim, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
               cfg.adam_epsilon),
        value(kObsDim, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
              cfg.adam_epsilon) {}
};

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// `cfg.epochs` full-batch steps of the clipped objective. Statistics are
/// averaged over epochs. Parameters are left untouched if any loss or
/// gradient is non-finite.
inline UpdateStats ppo_update(const RolloutBatch& batch, FeaturizedPolicy& policy,
                              const TrainerConfig& cfg, PpoOptimizers& opt) {
  if (batch.transitions.empty()) throw PreconditionError("ppo_update: empty batch");
  const auto adv = batch_advantages(batch, cfg);
  std::vector<double> theta = policy.theta();
  std::vector<double> value = policy.value_weights();
  UpdateStats stats;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto pl = policy_loss(batch, theta, adv, cfg);
    auto vl = value_loss(batch, value);
    if (!std::isfinite(pl.loss) || !std::isfinite(vl.loss) ||
        !all_finite(pl.grad) || !all_finite(vl.grad))
      throw NumericError("ppo_update: non-finite loss (policy " +
                         std::to_string(pl.loss) + ", value " +
                         std::to_string(vl.loss) + ") at epoch " +
                         std::to_string(epoch));
    for (double& g : vl.grad) g *= cfg.value_coef;
    opt.policy.step(theta, pl.grad);
    opt.value.step(value, vl.grad);
    stats.policy_loss += pl.loss / cfg.epochs;
    stats.value_loss += vl.loss / cfg.epochs;
    stats.entropy += pl.entropy / cfg.epochs;
    stats.clip_fraction += pl.clip_fraction / cfg.epochs;
  }
  policy.set_parameters(std::move(theta), std::move(value));
  return stats;
}

inline UpdateStats ppo_update(const RolloutBatch& batch, FeaturizedPolicy& policy,
                              const TrainerConfig& cfg) {
  PpoOptimizers opt(cfg);
  return ppo_update(batch, policy, cfg, opt);
}

// ---------------------------------------------------------------------------
// Training loop and evaluation
// ---------------------------------------------------------------------------

struct TrainingLogRecord {
  int iteration = 0;
  double mean_return = 0;
  UpdateStats stats;
};

inline json to_json(const TrainingLogRecord& r) {
  return {{"iteration", r.iteration},
          {"mean_return", r.mean_return},
          {"policy_loss", r.stats.policy_loss},
          {"value_loss", r.stats.value_loss},
          {"entropy", r.stats.entropy},
          {"clip_fraction", r.stats.clip_fraction}};
}

inline std::vector<TrainingLogRecord> train_policy(
    const std::vector<std::shared_ptr<const TrajectoryTree>>& trees,
    const HardwareSpec& hardware, const EnvConfig& env_cfg,
    const TrainerConfig& cfg, FeaturizedPolicy& policy, std::uint64_t seed,
    const std::function<void(const TrainingLogRecord&)>& on_iteration = {}) {
  Rng rng(seed);
  PpoOptimizers opt(cfg);
  std::vector<TrainingLogRecord> log;
  for (int it = 0; it < cfg.iterations; ++it) {
    auto batch = collect_rollouts(trees, hardware, env_cfg, policy,
                                  cfg.episodes_per_iteration, rng, cfg);
    TrainingLogRecord rec{it, batch.mean_return(), ppo_update(batch, policy, cfg, opt)};
    if (on_iteration) on_iteration(rec);
    log.push_back(rec);
  }
  return log;
}

/// Mean undiscounted return of `episodes` episodes, sampled or greedy.
inline double evaluate_policy(
    const std::vector<std::shared_ptr<const TrajectoryTree>>& trees,
    const HardwareSpec& hardware, const EnvConfig& env_cfg,
    FeaturizedPolicy& policy, int episodes, std::uint64_t seed, bool greedy) {
  Rng rng(seed);
  double total = 0;
  for (int e = 0; e < episodes; ++e) {
    TreeEnv env(trees[static_cast<std::size_t>(e) % trees.size()], hardware,
                env_cfg);
    Observation obs = env.reset();
    bool done = false;
    while (!done) {
      auto catalog = enumerate_actions(obs);
      auto dist = score_actions(obs, catalog, policy);
      std::size_t idx = greedy ? dist.argmax() : sample_index(dist.probabilities, rng);
      auto res = env.step(catalog[idx]);
      total += res.reward;
      done = res.done;
      obs = std::move(res.observation);
    }
  }
  return total / episodes;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline json checkpoint_json(const FeaturizedPolicy& policy,
                            const TrainerConfig& cfg) {
  return {{"format", "hkopt-featurized-policy"},
          {"version", kCheckpointVersion},
          {"config_hash", config_hash(cfg)},
          {"obs_dim", kObsDim},
          {"act_dim", kActDim},
          {"theta", policy.theta()},
          {"value", policy.value_weights()}};
}

inline void load_checkpoint(const json& j, FeaturizedPolicy& policy) {
  const std::string ctx = "checkpoint";
  if (j.value("format", std::string{}) != "hkopt-featurized-policy")
    throw SchemaError(ctx + ": unknown format");
  if (detail::get<int>(j, "version", ctx) != kCheckpointVersion)
    throw SchemaError(ctx + ": unsupported version");
  if (detail::get<std::size_t>(j, "obs_dim", ctx) != kObsDim ||
      detail::get<std::size_t>(j, "act_dim", ctx) != kActDim)
    throw SchemaError(ctx + ": feature layout mismatch");
  policy.set_parameters(detail::get<std::vector<double>>(j, "theta", ctx),
                        detail::get<std::vector<double>>(j, "value", ctx));
}

}  // namespace hkopt

#endif  // HKOPT_PPO_HPP_
