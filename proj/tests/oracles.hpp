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

// Independent reference implementations used to check the library.

#pragma once

#include <phonconv/analysis.hpp>

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace phonconv::testing {

/// Kappa from a full label x label contingency table of probabilities.
inline double kappa_oracle(const AnnotationPair& pair) {
  std::set<std::string> labels;
  for (const auto& it : pair.items) {
    labels.insert(it.user_label);
    labels.insert(it.model_label);
  }
  const std::vector<std::string> L(labels.begin(), labels.end());
  const std::size_t k = L.size();
  std::vector<std::vector<double>> table(k, std::vector<double>(k, 0.0));
  auto idx = [&](const std::string& s) {
    for (std::size_t i = 0; i < k; ++i)
      if (L[i] == s) return i;
    return k;
  };
  const double n = static_cast<double>(pair.items.size());
  for (const auto& it : pair.items) table[idx(it.user_label)][idx(it.model_label)] += 1.0 / n;
  double po = 0.0, pe = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    po += table[i][i];
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row += table[i][j];
      col += table[j][i];
    }
    pe += row * col;
  }
  return (po - pe) / (1.0 - pe);
}

/// Random annotation pair over `labels` whose marginals are not both
/// concentrated on a single shared label.
inline AnnotationPair random_pair(std::mt19937_64& rng, const std::vector<std::string>& labels, std::size_t min_n,
                                  std::size_t max_n) {
  std::uniform_int_distribution<std::size_t> len(min_n, max_n);
  std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
  for (;;) {
    AnnotationPair p;
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) p.items.push_back({labels[pick(rng)], labels[pick(rng)]});
    std::set<std::string> used;
    for (const auto& it : p.items) {
      used.insert(it.user_label);
      used.insert(it.model_label);
    }
    if (used.size() > 1) return p;
  }
}

}  // namespace phonconv::testing
