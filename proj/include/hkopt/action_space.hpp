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

#ifndef HKOPT_ACTION_SPACE_HPP_
#define HKOPT_ACTION_SPACE_HPP_

#include <charconv>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "hkopt/core_model.hpp"
#include "hkopt/region_analyzer.hpp"

namespace hkopt {

/// Ordered set of semantic actions available at one source. Sorted by
/// (kind, start, end) with exactly one Stop, last.
class ActionCatalog {
 public:
  ActionCatalog(std::vector<OptimizationAction> actions,
                std::string source_fingerprint)
      : actions_(std::move(actions)), fingerprint_(std::move(source_fingerprint)) {
    std::sort(actions_.begin(), actions_.end(), &ActionCatalog::before);
    std::size_t stops = 0;
    for (std::size_t i = 0; i < actions_.size(); ++i) {
      if (actions_[i].is_stop()) ++stops;
      if (i > 0 && actions_[i].same_target(actions_[i - 1]))
        throw ValidationError("duplicate action in catalog");
    }
    if (stops != 1 || !actions_.back().is_stop())
      throw ValidationError("catalog must hold exactly one stop action, last");
  }

  [[nodiscard]] const std::vector<OptimizationAction>& actions() const {
    return actions_;
  }
  [[nodiscard]] std::size_t size() const { return actions_.size(); }
  [[nodiscard]] const OptimizationAction& operator[](std::size_t i) const {
    return actions_[i];
  }
  [[nodiscard]] const std::string& source_fingerprint() const {
    return fingerprint_;
  }

  /// Index of the entry with the same kind and lines, if any.
  [[nodiscard]] std::optional<std::size_t> find(
      const OptimizationAction& a) const {
    for (std::size_t i = 0; i < actions_.size(); ++i)
      if (actions_[i].same_target(a)) return i;
    return std::nullopt;
  }

  [[nodiscard]] std::size_t stop_index() const { return actions_.size() - 1; }

 private:
  static bool before(const OptimizationAction& a, const OptimizationAction& b) {
    if (a.kind() != b.kind()) return a.kind() < b.kind();
    if (a.is_stop()) return false;
    return std::pair(a.region()->start_line(), a.region()->end_line()) <
           std::pair(b.region()->start_line(), b.region()->end_line());
  }

  std::vector<OptimizationAction> actions_;
  std::string fingerprint_;
};

/// One action per candidate region per optimization kind, plus Stop.
inline ActionCatalog enumerate_actions(const KernelSource& source) {
  std::vector<OptimizationAction> actions;
  for (auto kind : kOptimizationKinds)
    for (auto& region : extract_regions(source, kind))
      actions.emplace_back(kind, std::move(region));
  actions.push_back(OptimizationAction::stop());
  return {std::move(actions), sha256_hex(source.text())};
}

inline ActionCatalog enumerate_actions(const Observation& obs) {
  return enumerate_actions(obs.current_source);
}

inline std::string_view action_verb(ActionKind kind) {
  switch (kind) {
    case ActionKind::Tiling: return "tile";
    case ActionKind::Fusion: return "fuse";
    case ActionKind::Pipeline: return "pipeline";
    case ActionKind::Reordering: return "reorder";
    case ActionKind::Stop: return "stop";
  }
  return "stop";
}

/// Canonical text: `<verb> lines <start>-<end>` or `stop`.
inline std::string render_action(const OptimizationAction& action) {
  if (action.is_stop()) return "stop";
  return std::string(action_verb(action.kind())) + " lines " +
         std::to_string(action.region()->start_line()) + "-" +
         std::to_string(action.region()->end_line());
}

/// Parses canonical action text without consulting a catalog. Surrounding
/// whitespace is ignored; anything else must match the grammar exactly.
inline OptimizationAction parse_action_text(std::string_view text) {
  static const std::regex kGrammar(
      R"(^(tile|fuse|pipeline|reorder) lines ([0-9]+)-([0-9]+)$)");
  const std::string s(trim(text));
  if (s == "stop") return OptimizationAction::stop();
  std::smatch m;
  if (!std::regex_match(s, m, kGrammar))
    throw ActionParseError("not a canonical action: '" + s + "'");
  ActionKind kind = ActionKind::Tiling;
  for (auto k : kOptimizationKinds)
    if (action_verb(k) == m[1].str()) kind = k;
  auto to_int = [&](const std::string& digits) {
    int v = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc() || p != digits.data() + digits.size())
      throw ActionParseError("line number out of range in '" + s + "'");
    return v;
  };
  int start = to_int(m[2].str());
  int end = to_int(m[3].str());
  if (start < 1 || start > end)
    throw ActionParseError("invalid line range in '" + s + "'");
  return {kind, CodeRegion(start, end)};
}

/// Parses `text` and resolves it to the catalog's own instance.
inline OptimizationAction parse_action(std::string_view text,
                                       const ActionCatalog& catalog) {
  auto parsed = parse_action_text(text);
  auto idx = catalog.find(parsed);
  if (!idx)
    throw OutOfCatalogError("action '" + render_action(parsed) +
                            "' is not in the catalog");
  return catalog[*idx];
}

}  // namespace hkopt

#endif  // HKOPT_ACTION_SPACE_HPP_
