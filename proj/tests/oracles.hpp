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

// Independent reference computations shared by the unit tests and the
// acceptance binary.

#ifndef HKOPT_TESTS_ORACLES_HPP_
#define HKOPT_TESTS_ORACLES_HPP_

#include <cmath>
#include <functional>
#include <regex>
#include <set>
#include <utility>
#include <vector>

#include "hkopt/eval.hpp"
#include "hkopt/ppo.hpp"
#include "hkopt/region_analyzer.hpp"
#include "test_support.hpp"

namespace hkopt::oracle {

/// Central differences of `f` at `x`, one coordinate at a time.
inline std::vector<double> finite_difference(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||).
inline double relative_error(const std::vector<double>& a,
                             const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nb));
  return denom == 0 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

/// Single-state batch over a three-action catalog (tile, pipeline, stop)
/// with mixed-sign advantages and behaviour log-probabilities taken from a
/// different parameter vector, so both clip branches are exercised.
struct GradientCase {
  RolloutBatch batch;
  std::vector<double> theta;
  std::vector<double> advantages;
};

inline GradientCase three_action_case(std::uint64_t seed = 7) {
  KernelTask task = random_task_fixed();
  Observation obs{task, KernelSource(Language::KernelDsl, "a = f(x)\n"), 0, {},
                  test_hardware()};
  auto catalog = enumerate_actions(obs);
  auto features = featurize(obs, catalog);

  Rng rng(seed);
  GradientCase gc;
  gc.theta.resize(kFeatureDim);
  std::vector<double> behaviour(kFeatureDim);
  for (std::size_t i = 0; i < kFeatureDim; ++i) {
    gc.theta[i] = rng.uniform(-0.5, 0.5);
    behaviour[i] = gc.theta[i] + rng.uniform(-0.3, 0.3);
  }
  auto old_p = softmax(step_logits(behaviour, features));
  const std::vector<double> adv{1.3, -0.7, 0.4, -1.9, 2.2, 0.05};
  for (std::size_t k = 0; k < adv.size(); ++k) {
    Transition t;
    t.features = features;
    t.action_index = k % catalog.size();
    t.logprob = std::log(old_p[t.action_index]);
    t.advantage = adv[k];
    gc.batch.transitions.push_back(t);
    gc.advantages.push_back(adv[k]);
  }
  return gc;
}

/// Result set with every outcome class represented, including speedups
/// sitting exactly on the usual thresholds.
inline std::vector<TaskResult> random_results(Rng& rng, std::size_t n) {
  static const double kEdges[] = {0.5, 1.0, 2.0};
  std::vector<TaskResult> out;
  for (std::size_t i = 0; i < n; ++i) {
    TaskResult r{"t" + std::to_string(i), false, false, 0.0};
    const double u = rng.uniform();
    if (u < 0.15) {
      // compile failure
    } else if (u < 0.35) {
      r.compile_ok = true;
    } else {
      r.compile_ok = r.correct = true;
      r.speedup = rng.uniform() < 0.1 ? kEdges[rng.index(3)] : rng.uniform(0.0, 4.0);
    }
    out.push_back(r);
  }
  return out;
}

/// Plain recount of the suite metrics, one pass per quantity, summing
/// speedups with long double.
struct Recount {
  double call = 0;
  double execute = 0;
  double mean = 0;
  std::vector<double> fast;
};

inline Recount recount(const std::vector<TaskResult>& rs, const std::vector<double>& ps) {
  Recount c;
  long n_compiled = 0, n_correct = 0;
  long double sum = 0;
  for (const auto& r : rs) {
    if (r.compile_ok) ++n_compiled;
    if (r.correct) {
      ++n_correct;
      sum += r.speedup;
    }
  }
  const double n = static_cast<double>(rs.size());
  c.call = n_compiled / n;
  c.execute = n_correct / n;
  c.mean = static_cast<double>(sum / rs.size());
  for (double p : ps) {
    long hits = 0;
    for (const auto& r : rs)
      if (r.correct && r.speedup > p) ++hits;
    c.fast.push_back(hits / n);
  }
  return c;
}

struct GoldenStatement {
  int start, end;
  std::string kind;
  std::set<std::string> defs, uses;
};

inline std::vector<GoldenStatement> golden_statements(const std::filesystem::path& path) {
  std::vector<GoldenStatement> out;
  for (const auto& r : parse_json_file(path))
    out.push_back({r["start"], r["end"], r["kind"], r["defs"].get<std::set<std::string>>(),
                   r["uses"].get<std::set<std::string>>()});
  return out;
}

using Spans = std::vector<std::pair<int, int>>;

/// Candidate spans for `kind` found by testing every (start, end) pair of
/// the source against the candidate rules, evaluated on a hand-built
/// statement table and the raw text rather than on analyzer output.
inline Spans region_candidates(const std::string& text,
                               const std::vector<GoldenStatement>& table, ActionKind kind) {
  std::vector<std::string> lines;
  for (auto l : split_lines(text)) lines.emplace_back(l);
  const int n = static_cast<int>(lines.size());
  static const std::regex kCall(R"([A-Za-z_][A-Za-z0-9_.]*\s*\()");
  static const std::regex kFor(R"(^\s*for\b)");
  auto text_of = [&](const GoldenStatement& s) {
    std::string t;
    for (int l = s.start; l <= s.end; ++l) t += lines[l - 1] + "\n";
    return t;
  };
  auto fors = [&](const GoldenStatement& s) {
    int c = 0;
    for (int l = s.start; l <= s.end; ++l) c += std::regex_search(lines[l - 1], kFor);
    return c;
  };
  auto statement_at = [&](int a, int b) -> const GoldenStatement* {
    for (const auto& s : table)
      if (s.start == a && s.end == b) return &s;
    return nullptr;
  };
  auto pair_at = [&](int a, int b) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i + 1 < table.size(); ++i)
      if (table[i].start == a && table[i + 1].end == b) return i;
    return std::nullopt;
  };

  Spans out;
  for (int a = 1; a <= n; ++a)
    for (int b = a; b <= n; ++b) {
      bool keep = false;
      switch (kind) {
        case ActionKind::Tiling:
        case ActionKind::Pipeline:
          if (const auto* s = statement_at(a, b))
            keep = s->kind == "LOOP_HEADER" ||
                   (s->kind != "OTHER" && std::regex_search(text_of(*s), kCall));
          break;
        case ActionKind::Fusion:
          if (auto i = pair_at(a, b))
            for (const auto& d : table[*i].defs) keep |= table[*i + 1].uses.count(d) > 0;
          break;
        case ActionKind::Reordering:
          if (const auto* s = statement_at(a, b)) keep = s->kind == "LOOP_HEADER" && fors(*s) >= 2;
          if (auto i = pair_at(a, b))
            keep |= table[*i].kind == "LOOP_HEADER" && table[*i + 1].kind == "LOOP_HEADER";
          break;
        case ActionKind::Stop:
          break;
      }
      if (keep) out.emplace_back(a, b);
    }
  return out;
}

}  // namespace hkopt::oracle

#endif  // HKOPT_TESTS_ORACLES_HPP_
