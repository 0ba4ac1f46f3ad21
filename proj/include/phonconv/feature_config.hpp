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

#pragma once

#include <phonconv/classify.hpp>
#include <phonconv/convergence.hpp>
#include <phonconv/error.hpp>

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace phonconv {

/// One feature block of the configuration file: the definition plus the
/// classifier attached to it.
struct FeatureConfigEntry {
  FeatureDefinition definition;
  ClassifierKind classifier = ClassifierKind::nearest_prototype;
  /// Training fixture path, relative to the config file. Empty means the
  /// classifier is trained on the variant prototypes.
  std::string training_file;
};

struct FeatureConfig {
  std::string id;
  std::vector<FeatureConfigEntry> features;
  /// Exact bytes the config was loaded from (hashed into session archives).
  std::string source;

  const FeatureConfigEntry* find(const std::string& feature_id) const {
    for (const auto& f : features)
      if (f.definition.id == feature_id) return &f;
    return nullptr;
  }
};

namespace detail {

inline void require_keys(const nlohmann::json& obj, const std::set<std::string>& required,
                         const std::set<std::string>& optional, const std::string& where) {
  if (!obj.is_object()) throw Error(Errc::invalid_definition, where + ": expected an object");
  for (const auto& key : required)
    if (!obj.contains(key)) throw Error(Errc::invalid_definition, where + ": missing key '" + key + "'");
  for (const auto& [key, _] : obj.items())
    if (!required.count(key) && !optional.count(key))
      throw Error(Errc::invalid_definition, where + ": unknown key '" + key + "'");
}

inline CalculationMethod method_from_string(const std::string& s) {
  if (s == "mean") return CalculationMethod::mean;
  if (s == "median") return CalculationMethod::median;
  if (s == "recency_weighted_mean") return CalculationMethod::recency_weighted_mean;
  throw Error(Errc::invalid_definition, "unknown calculation_method '" + s + "'");
}

inline ClassifierKind classifier_from_string(const std::string& s) {
  if (s == "nearest_prototype") return ClassifierKind::nearest_prototype;
  if (s == "max_margin_linear") return ClassifierKind::max_margin_linear;
  throw Error(Errc::invalid_definition, "unknown classifier '" + s + "'");
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const FeatureDefinition& def) {
  nlohmann::ordered_json j;
  j["id"] = def.id;
  j["phonemes"] = def.phonemes;
  auto dims = nlohmann::ordered_json::array();
  for (const auto& d : def.dimensions)
    dims.push_back({{"name", d.name}, {"unit", d.unit}, {"min", d.min}, {"max", d.max}});
  j["dimensions"] = dims;
  j["history_size"] = def.history_size;
  j["update_frequency"] = def.update_frequency;
  j["calculation_method"] = to_string(def.calculation_method);
  j["convergence_rate"] = def.convergence_rate;
  j["convergence_limit"] = def.convergence_limit;
  j["initial_value"] = def.initial_value;
  auto variants = nlohmann::ordered_json::array();
  for (const auto& v : def.variants) variants.push_back({{"label", v.label}, {"prototype", v.prototype}});
  j["variants"] = variants;
  j["canonical_variant"] = def.canonical_variant;
  j["recency_decay"] = def.recency_decay;
  return j;
}

inline FeatureConfigEntry feature_entry_from_json(const nlohmann::json& j) {
  static const std::set<std::string> required{
      "id", "phonemes", "dimensions", "history_size", "update_frequency", "calculation_method",
      "convergence_rate", "convergence_limit", "initial_value", "variants", "canonical_variant"};
  static const std::set<std::string> optional{"recency_decay", "classifier", "training_file"};
  const std::string where = j.contains("id") && j["id"].is_string() ? "feature " + j["id"].get<std::string>() : "feature";
  detail::require_keys(j, required, optional, where);

  FeatureConfigEntry entry;
  FeatureDefinition& def = entry.definition;
  try {
    def.id = j.at("id").get<std::string>();
    def.phonemes = j.at("phonemes").get<std::vector<std::string>>();
    for (const auto& d : j.at("dimensions")) {
      detail::require_keys(d, {"name", "unit", "min", "max"}, {}, where + " dimension");
      def.dimensions.push_back({d.at("name").get<std::string>(), d.at("unit").get<std::string>(),
                                d.at("min").get<double>(), d.at("max").get<double>()});
    }
    const auto history = j.at("history_size").get<long long>();
    const auto frequency = j.at("update_frequency").get<long long>();
    if (history < 1) throw Error(Errc::invalid_definition, where + ": history_size must be >= 1");
    if (frequency < 1) throw Error(Errc::invalid_definition, where + ": update_frequency must be >= 1");
    def.history_size = static_cast<std::size_t>(history);
    def.update_frequency = static_cast<std::size_t>(frequency);
    def.calculation_method = detail::method_from_string(j.at("calculation_method").get<std::string>());
    def.convergence_rate = j.at("convergence_rate").get<double>();
    def.convergence_limit = j.at("convergence_limit").get<double>();
    def.initial_value = j.at("initial_value").get<Values>();
    for (const auto& v : j.at("variants")) {
      detail::require_keys(v, {"label", "prototype"}, {}, where + " variant");
      def.variants.push_back({v.at("label").get<std::string>(), v.at("prototype").get<Values>()});
    }
    def.canonical_variant = j.at("canonical_variant").get<std::string>();
    if (j.contains("recency_decay")) def.recency_decay = j.at("recency_decay").get<double>();
    if (j.contains("classifier")) entry.classifier = detail::classifier_from_string(j.at("classifier").get<std::string>());
    if (j.contains("training_file")) entry.training_file = j.at("training_file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_definition, where + ": " + e.what());
  }
  def.validate();
  return entry;
}

inline FeatureConfig parse_feature_config(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::parse_error, std::string("feature config: ") + e.what());
  }
  detail::require_keys(root, {"id", "features"}, {"description"}, "feature config");
  FeatureConfig cfg;
  cfg.id = root.at("id").get<std::string>();
  cfg.source = text;
  std::set<std::string> seen;
  for (const auto& f : root.at("features")) {
    auto entry = feature_entry_from_json(f);
    if (!seen.insert(entry.definition.id).second) throw Error(Errc::duplicate_feature, entry.definition.id);
    cfg.features.push_back(std::move(entry));
  }
  return cfg;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path);
  out << content;
}

/// Classifier for `entry`; reads its training fixture relative to `base_dir`.
inline VariantClassifier build_classifier(const FeatureConfigEntry& entry, const std::string& base_dir = ".") {
  std::vector<LabeledPoint> points;
  if (entry.training_file.empty()) {
    points = prototype_points(entry.definition);
  } else {
    const std::string path = entry.training_file.front() == '/' ? entry.training_file : base_dir + "/" + entry.training_file;
    std::istringstream in(read_file(path));
    points = parse_training_points(in, entry.definition);
  }
  return train_classifier(entry.definition, std::move(points), entry.classifier);
}

}  // namespace phonconv
