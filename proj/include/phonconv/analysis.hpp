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

/** @file analysis.hpp Convergence degree, behavioral grouping and agreement.
 *
 * The shadowing phase of a session is treated as an annotation task with
 * two annotators: the classifier's prediction of the user's realization
 * and the prediction of the stimulus the user was listening to.
 */

#pragma once

#include <phonconv/error.hpp>

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace phonconv {

struct AnnotationItem {
  std::string user_label;
  std::string model_label;
};

struct AnnotationPair {
  std::vector<AnnotationItem> items;

  void append(const AnnotationPair& other) { items.insert(items.end(), other.items.begin(), other.items.end()); }
};

enum class BehaviorGroup { Low, Mid, High };

constexpr const char* to_string(BehaviorGroup g) noexcept {
  switch (g) {
    case BehaviorGroup::Low: return "Low";
    case BehaviorGroup::Mid: return "Mid";
    case BehaviorGroup::High: return "High";
  }
  return "Low";
}

inline constexpr double kLowThreshold = 0.10;
inline constexpr double kHighThreshold = 0.90;

/// Low for degree <= 0.10, High for degree >= 0.90, Mid in between.
inline BehaviorGroup classify_behavior(double degree) {
  if (!(degree >= 0.0 && degree <= 1.0)) throw Error(Errc::out_of_range, std::to_string(degree));
  if (degree <= kLowThreshold) return BehaviorGroup::Low;
  if (degree >= kHighThreshold) return BehaviorGroup::High;
  return BehaviorGroup::Mid;
}

/// Per-participant view of a session, extracted from its event log.
struct ParticipantData {
  std::string participant;
  /// Predicted user variants during the baseline phase.
  std::vector<std::string> baseline_labels;
  /// (user prediction, stimulus prediction) per shadowed utterance.
  AnnotationPair shadowing;
};

/// Majority label; ties and empty input resolve to `tie_break`.
inline std::string majority_label(const std::vector<std::string>& labels, const std::string& tie_break) {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : labels) ++counts[l];
  std::string best = tie_break;
  std::size_t best_count = 0;
  bool tie = false;
  for (const auto& [label, n] : counts) {
    if (n > best_count) {
      best = label;
      best_count = n;
      tie = false;
    } else if (n == best_count) {
      tie = true;
    }
  }
  return tie ? tie_break : best;
}

/// Fraction of shadowed utterances whose predicted user variant differs
/// from `baseline_variant`.
inline double convergence_degree(const ParticipantData& p, const std::string& baseline_variant) {
  if (p.shadowing.items.empty()) throw Error(Errc::no_data, p.participant + ": no shadowed utterances");
  std::size_t changed = 0;
  for (const auto& item : p.shadowing.items) changed += item.user_label != baseline_variant ? 1 : 0;
  return static_cast<double>(changed) / static_cast<double>(p.shadowing.items.size());
}

inline double percent_agreement(const AnnotationPair& pair) {
  if (pair.items.empty()) throw Error(Errc::empty, "annotation pair is empty");
  std::size_t same = 0;
  for (const auto& item : pair.items) same += item.user_label == item.model_label ? 1 : 0;
  return 100.0 * static_cast<double>(same) / static_cast<double>(pair.items.size());
}

namespace detail {

struct Marginals {
  std::size_t n = 0;
  std::size_t agree = 0;
  std::map<std::string, std::array<std::size_t, 2>> counts;  // label -> {user, model}
};

inline Marginals marginals(const AnnotationPair& pair) {
  Marginals m;
  m.n = pair.items.size();
  for (const auto& item : pair.items) {
    ++m.counts[item.user_label][0];
    ++m.counts[item.model_label][1];
    m.agree += item.user_label == item.model_label ? 1 : 0;
  }
  return m;
}

}  // namespace detail

/// Cohen's kappa, (p_o - p_e) / (1 - p_e). When both annotators use one and
/// the same label throughout (p_e = 1) the result is 1.
inline double cohen_kappa(const AnnotationPair& pair) {
  if (pair.items.empty()) throw Error(Errc::empty, "annotation pair is empty");
  const auto m = detail::marginals(pair);
  // p_e * n^2 in integers, so the degenerate case is detected exactly.
  std::size_t chance = 0;
  for (const auto& [_, c] : m.counts) chance += c[0] * c[1];
  const std::size_t n2 = m.n * m.n;
  if (chance == n2) {
    if (m.agree == m.n) return 1.0;
    throw Error(Errc::degenerate_marginals, "expected agreement is 1");
  }
  const double n = static_cast<double>(m.n);
  const double po = static_cast<double>(m.agree) / n;
  const double pe = static_cast<double>(chance) / static_cast<double>(n2);
  return (po - pe) / (1.0 - pe);
}

struct KappaSignificance {
  double z = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  std::string stars;  // "***", "**", "*" or empty
};

/// Large-sample z-test of kappa against 0, using the null-hypothesis
/// standard error of Fleiss, Cohen & Everitt (1969).
inline KappaSignificance kappa_significance(const AnnotationPair& pair) {
  KappaSignificance out;
  if (pair.items.empty()) return out;
  const auto m = detail::marginals(pair);
  const double n = static_cast<double>(m.n);
  double pe = 0.0, cross = 0.0;
  for (const auto& [_, c] : m.counts) {
    const double pu = c[0] / n, pm = c[1] / n;
    pe += pu * pm;
    cross += pu * pm * (pu + pm);
  }
  const double var_num = pe + pe * pe - cross;
  if (!(pe < 1.0) || !(var_num > 0.0)) return out;
  const double se = std::sqrt(var_num) / ((1.0 - pe) * std::sqrt(n));
  out.z = cohen_kappa(pair) / se;
  out.p_value = std::erfc(std::abs(out.z) / std::sqrt(2.0));
  if (out.p_value < 0.001)
    out.stars = "***";
  else if (out.p_value < 0.01)
    out.stars = "**";
  else if (out.p_value < 0.05)
    out.stars = "*";
  return out;
}

// Reports ----------------------------------------------------------------

struct ReportRow {
  std::string group;
  std::size_t sessions = 0;
  std::size_t items = 0;
  double similarity_percent = std::numeric_limits<double>::quiet_NaN();
  double kappa = std::numeric_limits<double>::quiet_NaN();
  std::string kappa_significance_note;
  double size_percent = 0.0;
};

struct ParticipantSummary {
  std::string participant;
  std::string baseline_variant;
  double degree = 0.0;
  BehaviorGroup group = BehaviorGroup::Low;
};

struct ExperimentReport {
  std::string feature_id;
  std::vector<ReportRow> rows;  // Low, Mid, High, All
  std::vector<ParticipantSummary> participants;
  std::vector<std::pair<std::string, std::string>> failures;  // participant, reason

  const ReportRow& row(const std::string& group) const {
    for (const auto& r : rows)
      if (r.group == group) return r;
    throw Error(Errc::no_data, "no report row " + group);
  }
};

namespace detail {

inline ReportRow make_row(const std::string& name, std::size_t sessions, std::size_t total, const AnnotationPair& pooled) {
  ReportRow row;
  row.group = name;
  row.sessions = sessions;
  row.items = pooled.items.size();
  row.size_percent = total ? 100.0 * static_cast<double>(sessions) / static_cast<double>(total) : 0.0;
  if (!pooled.items.empty()) {
    row.similarity_percent = percent_agreement(pooled);
    row.kappa = cohen_kappa(pooled);
    row.kappa_significance_note = kappa_significance(pooled).stars;
  }
  return row;
}

}  // namespace detail

/// Groups participants by convergence degree and pools their annotations
/// per group. The baseline variant of each participant is the majority of
/// their baseline-phase predictions (ties go to `canonical_variant`).
inline ExperimentReport experiment_report(const std::vector<ParticipantData>& participants, const std::string& feature_id,
                                          const std::string& canonical_variant) {
  if (participants.empty()) throw Error(Errc::no_sessions, "no sessions to report on");
  ExperimentReport report;
  report.feature_id = feature_id;
  std::array<AnnotationPair, 3> pooled;
  std::array<std::size_t, 3> sizes{0, 0, 0};
  AnnotationPair all;
  for (const auto& p : participants) {
    ParticipantSummary s;
    s.participant = p.participant;
    s.baseline_variant = majority_label(p.baseline_labels, canonical_variant);
    try {
      s.degree = convergence_degree(p, s.baseline_variant);
    } catch (const Error& e) {
      report.failures.emplace_back(p.participant, e.what());
      continue;
    }
    s.group = classify_behavior(s.degree);
    const auto g = static_cast<std::size_t>(s.group);
    pooled[g].append(p.shadowing);
    all.append(p.shadowing);
    ++sizes[g];
    report.participants.push_back(s);
  }
  const std::size_t total = report.participants.size();
  if (total == 0) throw Error(Errc::no_sessions, "no analyzable sessions");
  for (std::size_t g = 0; g < 3; ++g)
    report.rows.push_back(detail::make_row(to_string(static_cast<BehaviorGroup>(g)), sizes[g], total, pooled[g]));
  report.rows.push_back(detail::make_row("All", total, total, all));
  return report;
}

namespace detail {

inline std::string fmt_number(double v, int precision) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace detail

/// Tab-separated; columns: group, similarity %, kappa, stars, size %.
inline std::string report_to_tsv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "group\tsimilarity_percent\tkappa\tsignificance\tsize_percent\n";
  for (const auto& r : report.rows)
    os << r.group << '\t' << detail::fmt_number(r.similarity_percent, 2) << '\t' << detail::fmt_number(r.kappa, 4)
       << '\t' << r.kappa_significance_note << '\t' << detail::fmt_number(r.size_percent, 2) << '\n';
  for (const auto& [who, why] : report.failures) os << "# failed\t" << who << '\t' << why << '\n';
  return os.str();
}

inline nlohmann::ordered_json to_json(const ExperimentReport& report) {
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isnan(v)) return nullptr;
    return v;
  };
  nlohmann::ordered_json j;
  j["feature_id"] = report.feature_id;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows)
    j["rows"].push_back({{"group", r.group},
                         {"similarity_percent", num(r.similarity_percent)},
                         {"kappa", num(r.kappa)},
                         {"significance", r.kappa_significance_note},
                         {"size_percent", r.size_percent},
                         {"sessions", r.sessions},
                         {"items", r.items}});
  j["participants"] = nlohmann::ordered_json::array();
  for (const auto& p : report.participants)
    j["participants"].push_back({{"participant", p.participant},
                                 {"baseline_variant", p.baseline_variant},
                                 {"degree", p.degree},
                                 {"group", to_string(p.group)}});
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& [who, why] : report.failures) j["failures"].push_back({{"participant", who}, {"reason", why}});
  return j;
}

}  // namespace phonconv
