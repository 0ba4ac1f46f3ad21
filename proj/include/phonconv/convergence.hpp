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

/** @file convergence.hpp Exemplar-pool convergence model.
 *
 * Each tracked feature owns a bounded FIFO pool of the user's observed
 * realizations. Every `update_frequency` accepted exemplars the system's
 * own target value moves toward the pool value:
 *
 *     proposed = (1 - rate) * current + rate * pool_value
 *
 * and is then clamped so that no dimension drifts further than
 * `convergence_limit * (max - min)` from the feature's initial value.
 */

#pragma once

#include <phonconv/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace phonconv {

using Values = std::vector<double>;

enum class Speaker { user, system };

constexpr const char* to_string(Speaker s) noexcept {
  return s == Speaker::user ? "user" : "system";
}

enum class CalculationMethod { mean, median, recency_weighted_mean };

constexpr const char* to_string(CalculationMethod m) noexcept {
  switch (m) {
    case CalculationMethod::mean: return "mean";
    case CalculationMethod::median: return "median";
    case CalculationMethod::recency_weighted_mean: return "recency_weighted_mean";
  }
  return "mean";
}

struct DimensionSpec {
  std::string name;
  std::string unit;
  double min = 0.0;
  double max = 1.0;

  double width() const noexcept { return max - min; }
  bool contains(double v) const noexcept { return v >= min && v <= max; }
};

struct VariantSpec {
  std::string label;
  Values prototype;
};

struct FeatureDefinition {
  std::string id;
  std::vector<std::string> phonemes;
  std::vector<DimensionSpec> dimensions;
  std::size_t history_size = 10;
  std::size_t update_frequency = 1;
  CalculationMethod calculation_method = CalculationMethod::mean;
  double convergence_rate = 0.2;
  double convergence_limit = 1.0;
  Values initial_value;
  std::vector<VariantSpec> variants;
  std::string canonical_variant;
  double recency_decay = 0.8;

  std::size_t dimensionality() const noexcept { return dimensions.size(); }

  bool in_range(std::span<const double> values) const noexcept {
    if (values.size() != dimensions.size()) return false;
    for (std::size_t d = 0; d < values.size(); ++d)
      if (!dimensions[d].contains(values[d])) return false;
    return true;
  }

  bool has_phoneme(const std::string& phone) const {
    return std::find(phonemes.begin(), phonemes.end(), phone) != phonemes.end();
  }

  const VariantSpec* variant(const std::string& label) const {
    for (const auto& v : variants)
      if (v.label == label) return &v;
    return nullptr;
  }

  /// Throws Errc::invalid_definition naming the first violated rule.
  void validate() const {
    auto fail = [](const std::string& reason) { throw Error(Errc::invalid_definition, reason); };
    if (id.empty()) fail("empty feature id");
    if (dimensions.empty()) fail("no dimensions");
    for (const auto& dim : dimensions) {
      if (!(dim.min < dim.max) || !std::isfinite(dim.width()))
        fail("invalid range for dimension " + dim.name);
    }
    if (history_size < 1) fail("history_size must be >= 1");
    if (update_frequency < 1) fail("update_frequency must be >= 1");
    if (!(convergence_rate >= 0.0 && convergence_rate <= 1.0)) fail("convergence_rate outside [0,1]");
    if (!(convergence_limit >= 0.0 && convergence_limit <= 1.0)) fail("convergence_limit outside [0,1]");
    if (!(recency_decay > 0.0 && recency_decay <= 1.0)) fail("recency_decay outside (0,1]");
    if (initial_value.size() != dimensions.size()) fail("initial value dimensionality");
    if (!in_range(initial_value)) fail("initial value out of range");
    if (variants.size() < 2) fail("at least two variants required");
    for (std::size_t i = 0; i < variants.size(); ++i) {
      for (std::size_t j = i + 1; j < variants.size(); ++j)
        if (variants[i].label == variants[j].label) fail("duplicate variant label " + variants[i].label);
      if (variants[i].prototype.size() != dimensions.size())
        fail("prototype dimensionality for " + variants[i].label);
      if (!in_range(variants[i].prototype)) fail("prototype out of range for " + variants[i].label);
    }
    if (variant(canonical_variant) == nullptr) fail("canonical variant not among variants");
  }
};

struct Exemplar {
  std::string feature_id;
  Values values;
  Speaker speaker = Speaker::user;
  std::uint64_t turn_index = 0;
  std::int64_t timestamp_ms = 0;

  friend bool operator==(const Exemplar&, const Exemplar&) = default;
};

/// `not_pooled` is returned for in-range system exemplars, which are never
/// added to a pool.
enum class IngestResult { accepted, rejected_out_of_range, not_pooled };

struct FeatureState {
  std::string feature_id;
  Values current_value;
  std::deque<Exemplar> pool;
  std::size_t ingest_counter = 0;
  std::size_t update_count = 0;

  friend bool operator==(const FeatureState&, const FeatureState&) = default;
};

struct StateUpdate {
  std::string feature_id;
  Values old_value;
  Values new_value;
  Values pool_value;
  std::size_t update_count = 0;
};

struct FeatureStateSnapshot {
  std::string feature_id;
  std::size_t dimensionality = 0;
  FeatureState state;

  friend bool operator==(const FeatureStateSnapshot&, const FeatureStateSnapshot&) = default;
};

// Pool statistics --------------------------------------------------------

/// Per-dimension aggregate of the pool in ingestion order (front = oldest).
template <typename Range>
Values compute_pool_value(const Range& pool, std::size_t dims, CalculationMethod method,
                          double decay = 0.8) {
  const std::size_t n = std::size(pool);
  if (n == 0) throw Error(Errc::empty_pool, "pool is empty");
  Values out(dims, 0.0);
  switch (method) {
    case CalculationMethod::mean: {
      for (const auto& ex : pool)
        for (std::size_t d = 0; d < dims; ++d) out[d] += ex.values[d];
      for (auto& v : out) v /= static_cast<double>(n);
      break;
    }
    case CalculationMethod::median: {
      std::vector<double> column(n);
      for (std::size_t d = 0; d < dims; ++d) {
        std::size_t i = 0;
        for (const auto& ex : pool) column[i++] = ex.values[d];
        std::sort(column.begin(), column.end());
        out[d] = (n % 2 == 1) ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
      }
      break;
    }
    case CalculationMethod::recency_weighted_mean: {
      // w_i = decay^(n-1-i); newest item has weight 1.
      double weight_sum = 0.0;
      std::size_t i = 0;
      for (const auto& ex : pool) {
        const double w = std::pow(decay, static_cast<double>(n - 1 - i));
        weight_sum += w;
        for (std::size_t d = 0; d < dims; ++d) out[d] += w * ex.values[d];
        ++i;
      }
      for (auto& v : out) v /= weight_sum;
      break;
    }
  }
  return out;
}

/// Convex step toward `pool` followed by the displacement clamp around
/// `def.initial_value`.
inline Values converge_step(const FeatureDefinition& def, std::span<const double> current,
                            std::span<const double> pool) {
  Values next(current.size());
  const double r = def.convergence_rate;
  for (std::size_t d = 0; d < current.size(); ++d) {
    const double proposed = (1.0 - r) * current[d] + r * pool[d];
    const double cap = def.convergence_limit * def.dimensions[d].width();
    const double lo = std::max(def.initial_value[d] - cap, def.dimensions[d].min);
    const double hi = std::min(def.initial_value[d] + cap, def.dimensions[d].max);
    next[d] = std::clamp(proposed, lo, hi);
  }
  return next;
}

// Model ------------------------------------------------------------------

/// All feature states of one session. Not thread-safe: a session has a
/// single writer. Snapshots are plain values and may cross threads.
class ConvergenceModel {
 public:
  const FeatureState& register_feature(FeatureDefinition def) {
    def.validate();
    if (entries_.count(def.id)) throw Error(Errc::duplicate_feature, def.id);
    Entry entry;
    entry.state.feature_id = def.id;
    entry.state.current_value = def.initial_value;
    entry.definition = std::make_shared<const FeatureDefinition>(std::move(def));
    auto [it, _] = entries_.emplace(entry.state.feature_id, std::move(entry));
    order_.push_back(it->first);
    return it->second.state;
  }

  bool contains(const std::string& feature_id) const { return entries_.count(feature_id) > 0; }

  const FeatureDefinition& definition(const std::string& feature_id) const {
    return *entry(feature_id).definition;
  }

  const FeatureState& state(const std::string& feature_id) const { return entry(feature_id).state; }

  /// Feature ids in registration order.
  const std::vector<std::string>& feature_ids() const noexcept { return order_; }

  IngestResult ingest_exemplar(const std::string& feature_id, const Exemplar& ex) {
    Entry& e = entry(feature_id);
    const FeatureDefinition& def = *e.definition;
    if (ex.values.size() != def.dimensionality())
      throw Error(Errc::dimension_mismatch, feature_id + ": expected " +
                                                std::to_string(def.dimensionality()) + " values, got " +
                                                std::to_string(ex.values.size()));
    if (!def.in_range(ex.values)) return IngestResult::rejected_out_of_range;
    if (ex.speaker != Speaker::user) return IngestResult::not_pooled;

    FeatureState& st = e.state;
    st.pool.push_back(ex);
    st.pool.back().feature_id = feature_id;
    while (st.pool.size() > def.history_size) st.pool.pop_front();
    ++st.ingest_counter;
    return IngestResult::accepted;
  }

  Values pool_value(const std::string& feature_id) const {
    const Entry& e = entry(feature_id);
    return compute_pool_value(e.state.pool, e.definition->dimensionality(),
                              e.definition->calculation_method, e.definition->recency_decay);
  }

  std::optional<StateUpdate> maybe_update_state(const std::string& feature_id) {
    Entry& e = entry(feature_id);
    FeatureState& st = e.state;
    const FeatureDefinition& def = *e.definition;
    if (st.ingest_counter < def.update_frequency || st.pool.empty()) return std::nullopt;

    StateUpdate update;
    update.feature_id = feature_id;
    update.old_value = st.current_value;
    update.pool_value = pool_value(feature_id);
    st.current_value = converge_step(def, st.current_value, update.pool_value);
    st.ingest_counter = 0;
    ++st.update_count;
    update.new_value = st.current_value;
    update.update_count = st.update_count;
    return update;
  }

  FeatureStateSnapshot snapshot(const std::string& feature_id) const {
    const Entry& e = entry(feature_id);
    return FeatureStateSnapshot{feature_id, e.definition->dimensionality(), e.state};
  }

  void restore(const FeatureStateSnapshot& snap) {
    Entry& e = entry(snap.feature_id);
    const FeatureDefinition& def = *e.definition;
    if (snap.state.feature_id != snap.feature_id)
      throw Error(Errc::incompatible_snapshot, "feature id mismatch");
    if (snap.dimensionality != def.dimensionality() ||
        snap.state.current_value.size() != def.dimensionality())
      throw Error(Errc::incompatible_snapshot, "dimensionality mismatch");
    if (snap.state.pool.size() > def.history_size)
      throw Error(Errc::incompatible_snapshot, "pool exceeds history size");
    for (const auto& ex : snap.state.pool)
      if (ex.values.size() != def.dimensionality())
        throw Error(Errc::incompatible_snapshot, "pool exemplar dimensionality");
    e.state = snap.state;
  }

 private:
  struct Entry {
    std::shared_ptr<const FeatureDefinition> definition;
    FeatureState state;
  };

  Entry& entry(const std::string& id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(Errc::unknown_feature, id);
    return it->second;
  }
  const Entry& entry(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(Errc::unknown_feature, id);
    return it->second;
  }

  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

}  // namespace phonconv
