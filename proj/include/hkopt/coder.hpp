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

// Code-generation clients that turn a prompt into a response holding code.

#ifndef HKOPT_CODER_HPP_
#define HKOPT_CODER_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "hkopt/core_model.hpp"
#include "hkopt/error.hpp"
#include "hkopt/util.hpp"

namespace hkopt {

class CoderClient {
 public:
  virtual ~CoderClient() = default;
  /// Throws TransportError when the endpoint cannot be reached.
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Text between the kernel markers of a prompt built by the orchestrator.
inline std::string prompt_kernel(const std::string& prompt) {
  static constexpr std::string_view kOpen = "<kernel>\n";
  static constexpr std::string_view kClose = "</kernel>";
  const auto b = prompt.find(kOpen);
  if (b == std::string::npos) return {};
  const auto start = b + kOpen.size();
  const auto e = prompt.find(kClose, start);
  return e == std::string::npos ? std::string{} : prompt.substr(start, e - start);
}

inline std::string fenced(const std::string& code) {
  std::string body = code;
  if (!body.empty() && body.back() != '\n') body += '\n';
  return "```python\n" + body + "```\n";
}

/// Answers every prompt with the kernel it was given.
class IdentityCoder : public CoderClient {
 public:
  std::string complete(const std::string& prompt) override {
    return fenced(prompt_kernel(prompt));
  }
};

/// Ordered rules; the first whose `when` substrings all occur in the prompt
/// answers. In responses `{{kernel}}` expands to the prompt's kernel text.
/// Prompts no rule matches get the identity answer.
class ScriptedCoder : public CoderClient {
 public:
  struct Rule {
    std::vector<std::string> when;
    std::string response;
  };

  explicit ScriptedCoder(std::vector<Rule> rules) : rules_(std::move(rules)) {}

  std::string complete(const std::string& prompt) override {
    for (const auto& r : rules_) {
      bool all = true;
      for (const auto& w : r.when) all = all && prompt.find(w) != std::string::npos;
      if (all) return expand(r.response, prompt_kernel(prompt));
    }
    return fenced(prompt_kernel(prompt));
  }

 private:
  static std::string expand(std::string text, const std::string& kernel) {
    static constexpr std::string_view kVar = "{{kernel}}";
    std::string body = kernel;
    if (!body.empty() && body.back() == '\n') body.pop_back();
    for (auto pos = text.find(kVar); pos != std::string::npos;
         pos = text.find(kVar, pos + body.size()))
      text.replace(pos, kVar.size(), body);
    return text;
  }

  std::vector<Rule> rules_;
};

inline ScriptedCoder scripted_coder_from_json(const json& j) {
  const std::string ctx = "coder script";
  std::vector<ScriptedCoder::Rule> rules;
  const auto& arr = detail::field(j, "rules", ctx);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto rctx = ctx + " rule[" + std::to_string(i) + "]";
    const auto& r = arr[i];
    ScriptedCoder::Rule rule;
    const auto& when = detail::field(r, "when", rctx);
    if (when.is_string()) rule.when.push_back(when.get<std::string>());
    else rule.when = when.get<std::vector<std::string>>();
    rule.response = detail::get<std::string>(r, "response", rctx);
    rules.push_back(std::move(rule));
  }
  return ScriptedCoder(std::move(rules));
}

inline ScriptedCoder load_scripted_coder(const std::filesystem::path& path) {
  return scripted_coder_from_json(parse_json_file(path));
}

}  // namespace hkopt

#endif  // HKOPT_CODER_HPP_
