/*
 * Copyright 2026 The phonconv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/** @file dialogue.hpp Dialogue domains and the finite-state dialogue manager.
 *
 * Domain file schema (UTF-8 XML, unknown elements and attributes rejected):
 *
 *     <domain id="demo" initial="s0" fallback="Sorry?">
 *       <phases>                          <!-- optional, ordered -->
 *         <phase id="baseline"/>
 *       </phases>
 *       <state id="s0" phase="baseline" timeout="s1">
 *         <prompt>War das <word feature="ae" variant="[e:]">Gerät</word> teuer?</prompt>
 *         <trigger pattern="yes" target="s1"/>
 *         <trigger pattern="*" target="s1"/>
 *       </state>
 *       <state id="s1" terminal="true"><prompt>Bye.</prompt></state>
 *     </domain>
 *
 * Trigger patterns are case-insensitive. A pattern without '*' matches as a
 * substring; a pattern containing '*' must match the whole input, with '*'
 * standing for any run of characters. Triggers are tried in declaration
 * order.
 *
 * A `word` may pin its realization to a variant: a variant label, or
 * "contrast" for the variant opposite to the listener's baseline.
 */

#pragma once

#include <phonconv/convergence.hpp>
#include <phonconv/error.hpp>
#include <phonconv/xml.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace phonconv {

inline constexpr const char* kContrastVariant = "contrast";
inline constexpr const char* kDefaultFallback = "Sorry, could you say that again?";

struct PromptPart {
  std::string text;
  std::string feature;  // empty for plain text
  std::string variant;  // empty: realize from the convergence model

  bool annotated() const noexcept { return !feature.empty(); }
  friend bool operator==(const PromptPart&, const PromptPart&) = default;
};

struct PromptTemplate {
  std::vector<PromptPart> parts;
  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

struct Trigger {
  std::string pattern;
  std::string target;
};

struct DialogueState {
  std::string id;
  std::string phase;
  PromptTemplate prompt;
  std::vector<Trigger> triggers;
  std::optional<std::string> on_timeout;
  bool is_terminal = false;
};

struct DialogueDomain {
  std::string id;
  std::string initial_state;
  std::vector<std::string> phases;
  std::vector<DialogueState> states;
  PromptTemplate fallback;

  const DialogueState* find(const std::string& state_id) const {
    for (const auto& s : states)
      if (s.id == state_id) return &s;
    return nullptr;
  }

  const DialogueState& state(const std::string& state_id) const {
    const auto* s = find(state_id);
    if (s == nullptr) throw Error(Errc::unknown_state, state_id);
    return *s;
  }

  /// Position of `phase` in the declared phase order, or -1.
  int phase_index(const std::string& phase) const {
    auto it = std::find(phases.begin(), phases.end(), phase);
    return it == phases.end() ? -1 : static_cast<int>(it - phases.begin());
  }
};

// Parsing ----------------------------------------------------------------

namespace detail {

inline bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

inline Error schema_error(const xml::Element& el, const std::string& reason) {
  return Error(Errc::schema_error, "<" + el.name + "> at line " + std::to_string(el.line) + ": " + reason);
}

inline void check_attributes(const xml::Element& el, const std::set<std::string>& required,
                             const std::set<std::string>& optional) {
  for (const auto& key : required)
    if (!el.attribute(key)) throw schema_error(el, "missing attribute '" + key + "'");
  for (const auto& [key, _] : el.attributes)
    if (!required.count(key) && !optional.count(key)) throw schema_error(el, "unknown attribute '" + key + "'");
}

/// Children of an element-only container; stray text is a schema error.
inline std::vector<const xml::Element*> element_children(const xml::Element& el) {
  std::vector<const xml::Element*> out;
  for (const auto& node : el.children) {
    if (node.is_element())
      out.push_back(node.element.get());
    else if (!is_blank(node.text))
      throw schema_error(el, "unexpected text content");
  }
  return out;
}

inline bool parse_bool(const xml::Element& el, const std::string& key) {
  auto v = el.attribute(key);
  if (!v || *v == "false") return false;
  if (*v == "true") return true;
  throw schema_error(el, "attribute '" + key + "' must be true or false");
}

inline PromptTemplate parse_prompt(const xml::Element& el) {
  check_attributes(el, {}, {});
  PromptTemplate tpl;
  for (const auto& node : el.children) {
    if (!node.is_element()) {
      tpl.parts.push_back({node.text, "", ""});
      continue;
    }
    const xml::Element& word = *node.element;
    if (word.name != "word") throw schema_error(word, "unknown element inside <prompt>");
    check_attributes(word, {"feature"}, {"variant"});
    std::string text;
    for (const auto& child : word.children) {
      if (child.is_element()) throw schema_error(word, "<word> must contain text only");
      text += child.text;
    }
    if (is_blank(text)) throw schema_error(word, "empty word");
    const std::string feature = *word.attribute("feature");
    if (feature.empty()) throw schema_error(word, "empty feature attribute");
    tpl.parts.push_back({text, feature, word.attribute("variant").value_or("")});
  }
  return tpl;
}

inline DialogueState parse_state(const xml::Element& el, const std::set<std::string>& declared_phases) {
  check_attributes(el, {"id"}, {"phase", "terminal", "timeout"});
  DialogueState st;
  st.id = *el.attribute("id");
  if (st.id.empty()) throw schema_error(el, "empty state id");
  st.is_terminal = parse_bool(el, "terminal");
  st.phase = el.attribute("phase").value_or("");
  if (!st.phase.empty() && !declared_phases.count(st.phase)) throw schema_error(el, "undeclared phase '" + st.phase + "'");
  if (auto t = el.attribute("timeout")) st.on_timeout = *t;

  bool have_prompt = false;
  for (const auto* child : element_children(el)) {
    if (child->name == "prompt") {
      if (have_prompt) throw schema_error(*child, "more than one <prompt> in state " + st.id);
      st.prompt = parse_prompt(*child);
      have_prompt = true;
    } else if (child->name == "trigger") {
      check_attributes(*child, {"pattern", "target"}, {});
      Trigger t{*child->attribute("pattern"), *child->attribute("target")};
      if (t.pattern.empty()) throw schema_error(*child, "empty pattern");
      st.triggers.push_back(std::move(t));
    } else {
      throw schema_error(*child, "unknown element inside <state>");
    }
  }
  if (st.is_terminal && (!st.triggers.empty() || st.on_timeout))
    throw schema_error(el, "terminal state " + st.id + " has outgoing transitions");
  if (!st.is_terminal && st.triggers.empty() && !st.on_timeout)
    throw schema_error(el, "state " + st.id + " has no trigger or timeout");
  return st;
}

}  // namespace detail

/// Strict parse: either a fully valid domain or an exception
/// (SyntaxError, Errc::schema_error, Errc::dangling_reference).
inline DialogueDomain parse_domain(const std::string& source) {
  const auto root = xml::parse(source);
  if (root->name != "domain") throw detail::schema_error(*root, "root element must be <domain>");
  detail::check_attributes(*root, {"id", "initial"}, {"fallback"});

  DialogueDomain domain;
  domain.id = *root->attribute("id");
  domain.initial_state = *root->attribute("initial");
  domain.fallback.parts.push_back({root->attribute("fallback").value_or(kDefaultFallback), "", ""});

  const auto children = detail::element_children(*root);
  std::set<std::string> declared_phases;
  bool have_phases = false;
  for (const auto* child : children) {
    if (child->name != "phases") continue;
    if (have_phases) throw detail::schema_error(*child, "more than one <phases>");
    have_phases = true;
    detail::check_attributes(*child, {}, {});
    for (const auto* phase : detail::element_children(*child)) {
      if (phase->name != "phase") throw detail::schema_error(*phase, "unknown element inside <phases>");
      detail::check_attributes(*phase, {"id"}, {});
      if (!phase->children.empty()) throw detail::schema_error(*phase, "<phase> must be empty");
      const std::string id = *phase->attribute("id");
      if (id.empty() || !declared_phases.insert(id).second) throw detail::schema_error(*phase, "duplicate or empty phase id");
      domain.phases.push_back(id);
    }
  }

  std::set<std::string> ids;
  for (const auto* child : children) {
    if (child->name == "phases") continue;
    if (child->name != "state") throw detail::schema_error(*child, "unknown element inside <domain>");
    auto st = detail::parse_state(*child, declared_phases);
    if (!ids.insert(st.id).second) throw detail::schema_error(*child, "duplicate state id " + st.id);
    domain.states.push_back(std::move(st));
  }
  if (domain.states.empty()) throw detail::schema_error(*root, "no states");

  if (!ids.count(domain.initial_state)) throw Error(Errc::dangling_reference, domain.initial_state);
  for (const auto& st : domain.states) {
    for (const auto& t : st.triggers)
      if (!ids.count(t.target)) throw Error(Errc::dangling_reference, t.target);
    if (st.on_timeout && !ids.count(*st.on_timeout)) throw Error(Errc::dangling_reference, *st.on_timeout);
  }
  return domain;
}

// Dialogue manager -------------------------------------------------------

inline std::string to_lower_ascii(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

namespace detail {

inline bool glob_match(const std::string& pattern, const std::string& text) {
  std::size_t p = 0, t = 0, star = std::string::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (p < pattern.size() && pattern[p] == text[t]) {
      ++p;
      ++t;
    } else if (star != std::string::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

}  // namespace detail

inline bool trigger_matches(const std::string& pattern, const std::string& user_text) {
  const std::string p = to_lower_ascii(pattern);
  const std::string t = to_lower_ascii(user_text);
  if (p.find('*') != std::string::npos) return detail::glob_match(p, t);
  return t.find(p) != std::string::npos;
}

struct AdvanceResult {
  std::string next_state;
  PromptTemplate response;
  bool matched = false;
};

/// Pure transition function: first matching trigger wins; no match keeps
/// the state and answers with the domain's fallback prompt.
inline AdvanceResult advance(const DialogueDomain& domain, const std::string& current_state,
                             const std::string& user_text) {
  const DialogueState& st = domain.state(current_state);
  if (st.is_terminal) throw Error(Errc::terminal_state, current_state);
  for (const auto& t : st.triggers)
    if (trigger_matches(t.pattern, user_text)) return {t.target, domain.state(t.target).prompt, true};
  return {current_state, domain.fallback, false};
}

/// Follows the state's timeout transition, if it has one.
inline std::optional<AdvanceResult> advance_timeout(const DialogueDomain& domain, const std::string& current_state) {
  const DialogueState& st = domain.state(current_state);
  if (st.is_terminal) throw Error(Errc::terminal_state, current_state);
  if (!st.on_timeout) return std::nullopt;
  return AdvanceResult{*st.on_timeout, domain.state(*st.on_timeout).prompt, true};
}

// Rendering --------------------------------------------------------------

struct UtteranceWord {
  std::string text;
  std::size_t index = 0;  // position among the utterance's words
  std::string feature;
};

struct SystemUtterance {
  std::string text;
  std::vector<UtteranceWord> feature_words;
  std::map<std::string, Values> feature_targets;
  std::vector<std::string> contains_features;
  /// Variant label per feature for words pinned to a variant.
  std::map<std::string, std::string> stimulus_variants;
};

/// Picks the variant a "contrast" word realizes for a feature.
using ContrastMap = std::map<std::string, std::string>;

inline std::string default_contrast(const FeatureDefinition& def) {
  for (const auto& v : def.variants)
    if (v.label != def.canonical_variant) return v.label;
  return def.canonical_variant;
}

/// Fills feature targets from the model's current state, or from a variant
/// prototype for pinned words. Whitespace in the template is collapsed.
inline SystemUtterance render_response(const PromptTemplate& tpl, const ConvergenceModel& model,
                                       const ContrastMap& contrast = {}) {
  SystemUtterance out;
  std::size_t words = 0;
  bool in_word = false;
  auto append = [&](char c) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_word = false;
      return;
    }
    if (!in_word) {
      if (!out.text.empty()) out.text += ' ';
      ++words;
      in_word = true;
    }
    out.text += c;
  };

  for (const auto& part : tpl.parts) {
    if (!part.annotated()) {
      for (char c : part.text) append(c);
      continue;
    }
    if (!model.contains(part.feature)) throw Error(Errc::unknown_feature, part.feature);
    const FeatureDefinition& def = model.definition(part.feature);

    // A word glued to the preceding text shares its index.
    const bool glued = in_word && !std::isspace(static_cast<unsigned char>(part.text.front()));
    const std::size_t index = glued ? words - 1 : words;
    for (char c : part.text) append(c);
    std::string word_text = part.text;
    word_text.erase(0, word_text.find_first_not_of(" \t\r\n"));
    word_text.erase(word_text.find_last_not_of(" \t\r\n") + 1);
    out.feature_words.push_back({word_text, index, part.feature});

    Values target = model.state(part.feature).current_value;
    if (!part.variant.empty()) {
      std::string label = part.variant;
      if (label == kContrastVariant) {
        auto it = contrast.find(part.feature);
        label = it != contrast.end() ? it->second : default_contrast(def);
      }
      const VariantSpec* v = def.variant(label);
      if (v == nullptr) throw Error(Errc::validation_error, part.feature + ": unknown variant " + label);
      target = v->prototype;
      out.stimulus_variants[part.feature] = label;
    }
    if (!out.feature_targets.count(part.feature)) out.contains_features.push_back(part.feature);
    out.feature_targets[part.feature] = std::move(target);
  }
  return out;
}

}  // namespace phonconv
