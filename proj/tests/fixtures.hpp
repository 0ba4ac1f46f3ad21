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

// Shared test fixtures.

#pragma once

#include <phonconv/convergence.hpp>
#include <phonconv/feature_config.hpp>

#include <random>
#include <string>

/// Asserts that `expr` throws phonconv::Error with code `errc`.
#define CHECK_ERRC(expr, errc)                                                   \
  CHECK_THROWS_MATCHES(expr, ::phonconv::Error,                                   \
                       ::Catch::Matchers::Predicate<::phonconv::Error>(           \
                           [](const ::phonconv::Error& e_) { return e_.code() == (errc); }, \
                           "error code " #errc))

namespace phonconv::testing {

/// [E:]/[e:] vowel feature on an F1 x F2 plane.
inline FeatureDefinition ae_feature() {
  FeatureDefinition def;
  def.id = "ae";
  def.phonemes = {"E:", "e:"};
  def.dimensions = {{"F1", "Hz", 200, 1000}, {"F2", "Hz", 800, 2800}};
  def.history_size = 5;
  def.update_frequency = 1;
  def.calculation_method = CalculationMethod::mean;
  def.convergence_rate = 0.2;
  def.convergence_limit = 1.0;
  def.initial_value = {550, 1900};
  def.variants = {{"[E:]", {560, 1950}}, {"[e:]", {380, 2250}}};
  def.canonical_variant = "[E:]";
  return def;
}

/// One dimension on [200, 1000].
inline FeatureDefinition scalar_feature(double initial = 500) {
  FeatureDefinition def;
  def.id = "x";
  def.phonemes = {"a"};
  def.dimensions = {{"F1", "Hz", 200, 1000}};
  def.initial_value = {initial};
  def.variants = {{"lo", {300}}, {"hi", {900}}};
  def.canonical_variant = "lo";
  return def;
}

inline Exemplar user_exemplar(const std::string& feature, Values v, std::uint64_t turn = 0) {
  return Exemplar{feature, std::move(v), Speaker::user, turn, static_cast<std::int64_t>(turn) * 1000};
}

inline std::string data_path(const std::string& name) { return std::string(PHONCONV_DATA_DIR) + "/" + name; }

inline FeatureConfig shipped_config() { return parse_feature_config(read_file(data_path("features.json"))); }

}  // namespace phonconv::testing
