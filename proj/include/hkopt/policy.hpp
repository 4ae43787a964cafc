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

// Action scoring. A backend turns (observation, catalog) into one logit per
// action; score_actions normalizes them with a softmax. Token-level backends
// score an action by the joint log-probability of its rendered text, i.e.
// the sum of its per-token log-probabilities, divided by the token count.

#ifndef HKOPT_POLICY_HPP_
#define HKOPT_POLICY_HPP_

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hkopt/action_space.hpp"
#include "hkopt/core_model.hpp"
#include "hkopt/error.hpp"
#include "hkopt/util.hpp"

namespace hkopt {

// ---------------------------------------------------------------------------
// Token scores and softmax
// ---------------------------------------------------------------------------

struct TokenScore {
  std::vector<std::string> tokens;
  std::vector<double> per_token_logprob;
  double joint_logprob = 0;

  [[nodiscard]] double joint_probability() const {
    return std::exp(joint_logprob);
  }
  /// Joint log-probability divided by the token count.
  [[nodiscard]] double normalized_logprob() const {
    return tokens.empty() ? joint_logprob
                          : joint_logprob / static_cast<double>(tokens.size());
  }
};

inline TokenScore make_token_score(std::vector<std::string> tokens,
                                   std::vector<double> logprobs) {
  if (tokens.size() != logprobs.size())
    throw ValidationError("token score: token/logprob length mismatch");
  TokenScore s{std::move(tokens), std::move(logprobs), 0.0};
  s.joint_logprob =
      std::accumulate(s.per_token_logprob.begin(), s.per_token_logprob.end(), 0.0);
  return s;
}

inline std::vector<double> softmax(const std::vector<double>& logits,
                                   double temperature = 1.0) {
  if (logits.empty()) return {};
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - hi) / temperature);
    z += p[i];
  }
  for (auto& x : p) x /= z;
  return p;
}

struct PolicyDistribution {
  ActionCatalog catalog;
  std::vector<double> logits;
  std::vector<double> probabilities;

  [[nodiscard]] std::size_t argmax() const {
    return static_cast<std::size_t>(
        std::max_element(probabilities.begin(), probabilities.end()) -
        probabilities.begin());
  }
};

inline PolicyDistribution make_distribution(ActionCatalog catalog,
                                            std::vector<double> logits,
                                            double temperature = 1.0) {
  if (logits.size() != catalog.size())
    throw BackendError("backend returned " + std::to_string(logits.size()) +
                       " logits for " + std::to_string(catalog.size()) +
                       " actions");
  for (double l : logits)
    if (!std::isfinite(l)) throw BackendError("backend returned a non-finite logit");
  auto probs = softmax(logits, temperature);
  return {std::move(catalog), std::move(logits), std::move(probs)};
}

inline PolicyDistribution uniform_distribution(ActionCatalog catalog) {
  std::vector<double> logits(catalog.size(), 0.0);
  return make_distribution(std::move(catalog), std::move(logits));
}

/// Index drawn by inverse CDF from a single uniform.
inline std::size_t sample_index(const std::vector<double>& probabilities,
                                Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    acc += probabilities[i];
    if (u < acc) return i;
  }
  // Rounding left u above the total: take the last action with mass.
  for (std::size_t i = probabilities.size(); i-- > 0;)
    if (probabilities[i] > 0) return i;
  return probabilities.size() - 1;
}

inline OptimizationAction sample_action(const PolicyDistribution& dist,
                                        Rng& rng) {
  return dist.catalog[sample_index(dist.probabilities, rng)];
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;
  /// One logit per catalog entry. Must be safe for concurrent calls.
  virtual std::vector<double> logits(const Observation& obs,
                                     const ActionCatalog& catalog) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

inline PolicyDistribution score_actions(const Observation& obs,
                                        const ActionCatalog& catalog,
                                        PolicyBackend& backend,
                                        double temperature = 1.0) {
  if (catalog.size() == 0) throw PreconditionError("empty action catalog");
  std::vector<double> logits;
  try {
    logits = backend.logits(obs, catalog);
  } catch (const BackendError&) {
    throw;
  } catch (const std::exception& e) {
    throw BackendError(backend.name() + ": " + e.what());
  }
  return make_distribution(catalog, std::move(logits), temperature);
}

// ---------------------------------------------------------------------------
// Featurized linear-softmax backend
// ---------------------------------------------------------------------------

/// Observation summary: bias, step bucket, prior applications per kind, sign
/// of the last reward, and two hardware scalars.
inline constexpr std::size_t kStepBuckets = 5;
inline constexpr std::size_t kObsDim = 1 + kStepBuckets + 4 + 1 + 2;
/// Action summary: kind one-hot, region span and start as fractions of the
/// source, and the catalog slot (first kSlots entries).
inline constexpr std::size_t kSlots = 16;
inline constexpr std::size_t kActDim = 5 + 2 + kSlots;
inline constexpr std::size_t kFeatureDim = kObsDim * kActDim;

inline std::vector<double> observation_features(const Observation& obs) {
  std::vector<double> f(kObsDim, 0.0);
  f[0] = 1.0;
  f[1 + std::min<std::size_t>(obs.step_index, kStepBuckets - 1)] = 1.0;
  std::array<int, 4> applied{};
  for (const auto& h : obs.history)
    if (!h.action.is_stop()) ++applied[static_cast<int>(h.action.kind())];
  for (std::size_t k = 0; k < 4; ++k)
    f[1 + kStepBuckets + k] = std::min(applied[k], 4) / 4.0;
  if (!obs.history.empty()) {
    const double r = obs.history.back().reward;
    f[1 + kStepBuckets + 4] = r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
  }
  f[kObsDim - 2] = std::log(static_cast<double>(obs.hardware.sm_count)) / 10.0;
  f[kObsDim - 1] = std::log(obs.hardware.memory_bandwidth_gbps) / 10.0;
  return f;
}

inline std::vector<double> action_features(const OptimizationAction& a,
                                           std::size_t slot, int line_count) {
  std::vector<double> f(kActDim, 0.0);
  f[static_cast<int>(a.kind())] = 1.0;
  if (!a.is_stop()) {
    const double n = std::max(1, line_count);
    f[5] = (a.region()->end_line() - a.region()->start_line() + 1) / n;
    f[6] = a.region()->start_line() / n;
    if (slot < kSlots) f[7 + slot] = 1.0;
  }
  return f;
}

/// Per-step features for every catalog action, flattened to the outer
/// product layout used by the parameter vector.
struct StepFeatures {
  std::vector<double> obs;
  std::vector<std::vector<double>> actions;
};

inline StepFeatures featurize(const Observation& obs,
                              const ActionCatalog& catalog) {
  StepFeatures sf{observation_features(obs), {}};
  sf.actions.reserve(catalog.size());
  for (std::size_t i = 0; i < catalog.size(); ++i)
    sf.actions.push_back(
        action_features(catalog[i], i, obs.current_source.line_count()));
  return sf;
}

/// theta . (obs (x) act), without materializing the outer product.
inline double bilinear(const std::vector<double>& theta,
                       const std::vector<double>& obs,
                       const std::vector<double>& act) {
  double s = 0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i] == 0) continue;
    const double* row = theta.data() + i * kActDim;
    double r = 0;
    for (std::size_t j = 0; j < act.size(); ++j) r += row[j] * act[j];
    s += obs[i] * r;
  }
  return s;
}

inline std::vector<double> step_logits(const std::vector<double>& theta,
                                       const StepFeatures& sf) {
  std::vector<double> l(sf.actions.size());
  for (std::size_t b = 0; b < sf.actions.size(); ++b)
    l[b] = bilinear(theta, sf.obs, sf.actions[b]);
  return l;
}

/// Linear softmax policy with a linear value head, trained by PPO.
class FeaturizedPolicy : public PolicyBackend {
 public:
  FeaturizedPolicy()
      : theta_(kFeatureDim, 0.0), value_(kObsDim, 0.0) {}

  std::vector<double> logits(const Observation& obs,
                             const ActionCatalog& catalog) override {
    std::lock_guard lock(mu_);
    return step_logits(theta_, featurize(obs, catalog));
  }
  [[nodiscard]] std::string name() const override { return "featurized"; }

  [[nodiscard]] double value(const std::vector<double>& obs_features) const {
    double v = 0;
    for (std::size_t i = 0; i < kObsDim; ++i) v += value_[i] * obs_features[i];
    return v;
  }

  [[nodiscard]] const std::vector<double>& theta() const { return theta_; }
  [[nodiscard]] const std::vector<double>& value_weights() const {
    return value_;
  }
  void set_parameters(std::vector<double> theta, std::vector<double> value) {
    if (theta.size() != kFeatureDim || value.size() != kObsDim)
      throw ValidationError("featurized policy: parameter size mismatch");
    std::lock_guard lock(mu_);
    theta_ = std::move(theta);
    value_ = std::move(value);
  }

 private:
  std::mutex mu_;
  std::vector<double> theta_;
  std::vector<double> value_;
};

// ---------------------------------------------------------------------------
// Remote text-model backend
// ---------------------------------------------------------------------------

struct TokenLogprob {
  std::string token;
  double logprob;
};

/// Text-model serving interface. `score_continuation` returns std::nullopt
/// when the endpoint cannot report token log-probabilities.
class TextModelClient {
 public:
  virtual ~TextModelClient() = default;
  virtual std::optional<std::vector<TokenLogprob>> score_continuation(
      const std::string& prompt, const std::string& continuation) = 0;
  virtual std::string generate(const std::string& prompt) = 0;
};

inline std::string numbered_source(const std::string& text) {
  std::ostringstream os;
  auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i)
    os << (i + 1) << ": " << lines[i] << "\n";
  return os.str();
}

/// Prompt presented to a text-model policy before the action text.
inline std::string observation_prompt(const Observation& obs,
                                      const ActionCatalog& catalog) {
  std::ostringstream os;
  os << "Choose the next optimization for the GPU kernel below.\n"
     << "Task: " << obs.task.description << "\n"
     << "Hardware: " << obs.hardware.name << " (" << obs.hardware.architecture
     << ", " << obs.hardware.sm_count << " SMs, "
     << obs.hardware.memory_bandwidth_gbps << " GB/s)\n"
     << "Step: " << obs.step_index << "\n"
     << "History:\n";
  if (obs.history.empty()) os << "(none)\n";
  for (const auto& h : obs.history)
    os << "- " << render_action(h.action) << " -> " << h.outcome << "\n";
  os << "Kernel:\n" << numbered_source(obs.current_source.text())
     << "Candidate actions:\n";
  for (const auto& a : catalog.actions()) os << "- " << render_action(a) << "\n";
  os << "Next action:";
  return os.str();
}

/// Scores each catalog action by its length-normalized joint token
/// log-probability. Endpoints without token scores fall back to generating
/// an action and parsing it, retrying out-of-catalog answers.
class RemoteTextPolicy : public PolicyBackend {
 public:
  static constexpr int kMaxRetries = 3;
  static constexpr double kExcludedLogit = -1e6;

  explicit RemoteTextPolicy(std::shared_ptr<TextModelClient> client)
      : client_(std::move(client)) {}

  std::vector<double> logits(const Observation& obs,
                             const ActionCatalog& catalog) override {
    const std::string prompt = observation_prompt(obs, catalog);
    std::vector<double> out;
    out.reserve(catalog.size());
    for (const auto& a : catalog.actions()) {
      auto scored = client_->score_continuation(prompt, " " + render_action(a));
      if (!scored) return generate_and_parse(prompt, catalog);
      out.push_back(score(*scored).normalized_logprob());
    }
    return out;
  }

  [[nodiscard]] std::string name() const override { return "remote"; }

  static TokenScore score(const std::vector<TokenLogprob>& toks) {
    std::vector<std::string> t;
    std::vector<double> lp;
    for (const auto& x : toks) {
      t.push_back(x.token);
      lp.push_back(x.logprob);
    }
    return make_token_score(std::move(t), std::move(lp));
  }

 private:
  std::vector<double> generate_and_parse(const std::string& prompt,
                                         const ActionCatalog& catalog) {
    std::string last_error;
    for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
      const std::string text = client_->generate(prompt);
      // Take the first line that looks like an action.
      for (auto line : split_lines(text)) {
        try {
          auto a = parse_action(line, catalog);
          std::vector<double> l(catalog.size(), kExcludedLogit);
          l[*catalog.find(a)] = 0.0;
          return l;
        } catch (const ActionParseError& e) {
          last_error = e.what();
        } catch (const OutOfCatalogError& e) {
          last_error = e.what();
        }
      }
    }
    throw BackendError("remote policy: no in-catalog action after " +
                       std::to_string(kMaxRetries) + " retries: " + last_error);
  }

  std::shared_ptr<TextModelClient> client_;
};

}  // namespace hkopt

#endif  // HKOPT_POLICY_HPP_
