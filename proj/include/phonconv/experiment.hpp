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

/** @file experiment.hpp Shadowing-experiment harness.
 *
 * A shadowing run walks each simulated participant through three phases:
 *
 *   baseline   the participant reads sentences; their preferred variant is
 *              the majority prediction over this phase,
 *   shadowing  the system plays stimuli realizing the variant opposite to
 *              that baseline and the participant repeats them,
 *   post       free reading again.
 *
 * Participants are utterance-stream files. The synthetic cohort generator
 * writes such files for participants with a designed convergence degree.
 */

#pragma once

#include <phonconv/analysis.hpp>
#include <phonconv/classify.hpp>
#include <phonconv/convergence.hpp>
#include <phonconv/error.hpp>
#include <phonconv/feature_config.hpp>
#include <phonconv/session.hpp>
#include <phonconv/speech_adapter.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace phonconv {

struct PhaseLengths {
  std::size_t baseline = 12;
  std::size_t shadowing = 24;
  std::size_t post = 4;
};

// Domain generation ----------------------------------------------------------

namespace detail {

struct CarrierSentence {
  std::string before;
  std::string word;
  std::string after;
};

inline std::vector<CarrierSentence> carrier_sentences(const std::string& feature_id) {
  if (feature_id == "ae")
    return {{"War das", "Gerät", "sehr teuer?"},
            {"Der", "Käse", "ist alt."},
            {"Wir haben", "Mädchen", "gesehen."},
            {"Die", "Säge", "liegt im Keller."}};
  if (feature_id == "ig")
    return {{"Ich bin", "süchtig", "nach Schokolade."},
            {"Das ist", "richtig", "so."},
            {"Er war sehr", "fleißig", "heute."}};
  if (feature_id == "en")
    return {{"Wir", "besuchen", "euch bald wieder."},
            {"Sie", "lachen", "laut."},
            {"Wir", "fahren", "morgen."}};
  return {{"Please say", "this", "word."}, {"Now", "again", "please."}};
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Linear three-phase shadowing domain for one feature. Inputs: one
/// opening turn, then one turn per phase item.
inline std::string make_shadowing_domain_xml(const std::string& feature_id, const PhaseLengths& len = {}) {
  const auto sentences = detail::carrier_sentences(feature_id);
  const std::string f = detail::xml_escape(feature_id);
  std::ostringstream x;
  x << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  x << "<!-- Shadowing experiment for feature " << f << ": baseline " << len.baseline << ", shadowing "
    << len.shadowing << ", post " << len.post << " items. -->\n";
  x << "<domain id=\"shadowing-" << f << "\" initial=\"welcome\" fallback=\"Please repeat the sentence.\">\n";
  x << "  <phases>\n    <phase id=\"baseline\"/>\n    <phase id=\"shadowing\"/>\n    <phase id=\"post\"/>\n  </phases>\n";

  std::vector<std::pair<std::string, std::string>> items;  // state id, phase
  for (std::size_t i = 1; i <= len.baseline; ++i) items.emplace_back("baseline-" + std::to_string(i), "baseline");
  for (std::size_t i = 1; i <= len.shadowing; ++i) items.emplace_back("shadow-" + std::to_string(i), "shadowing");
  for (std::size_t i = 1; i <= len.post; ++i) items.emplace_back("post-" + std::to_string(i), "post");
  const std::string first = items.empty() ? "end" : items.front().first;

  x << "  <state id=\"welcome\">\n    <prompt>Welcome. Say anything to begin.</prompt>\n"
    << "    <trigger pattern=\"*\" target=\"" << first << "\"/>\n  </state>\n";
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& [id, phase] = items[i];
    const auto& s = sentences[i % sentences.size()];
    const std::string next = i + 1 < items.size() ? items[i + 1].first : "end";
    x << "  <state id=\"" << id << "\" phase=\"" << phase << "\">\n    <prompt>";
    if (phase == "shadowing")
      x << "Please repeat: " << detail::xml_escape(s.before) << " <word feature=\"" << f << "\" variant=\"contrast\">"
        << detail::xml_escape(s.word) << "</word> " << detail::xml_escape(s.after);
    else
      x << "Please read aloud: " << detail::xml_escape(s.before + " " + s.word + " " + s.after);
    x << "</prompt>\n    <trigger pattern=\"*\" target=\"" << next << "\"/>\n  </state>\n";
  }
  x << "  <state id=\"end\" terminal=\"true\">\n    <prompt>Thank you, that was all.</prompt>\n  </state>\n";
  x << "</domain>\n";
  return x.str();
}

// Synthetic cohort -----------------------------------------------------------

struct CohortSpec {
  std::size_t participants = 30;
  std::vector<double> proportions{0.23, 0.50, 0.27};
  std::vector<double> degrees{0.05, 0.50, 0.95};
  /// Gaussian jitter std, as a fraction of each dimension's range width.
  double noise = 0.02;
  std::uint64_t seed = 42;
  PhaseLengths phases;
  /// Jittered stimulus points per variant for classifier training.
  std::size_t stimulus_points = 20;
};

struct ParticipantScript {
  std::string name;
  std::size_t design_group = 0;  // index into CohortSpec::degrees
  double designed_degree = 0.0;
  std::string baseline_variant;
  std::string stimulus_variant;
  std::vector<bool> shadow_flips;  // true: realized the stimulus variant
  std::vector<UtteranceRecord> records;

  double realized_degree() const {
    if (shadow_flips.empty()) return 0.0;
    return static_cast<double>(std::count(shadow_flips.begin(), shadow_flips.end(), true)) /
           static_cast<double>(shadow_flips.size());
  }
};

struct Cohort {
  std::string feature_id;
  std::vector<ParticipantScript> participants;
  std::vector<LabeledPoint> stimulus_points;
};

/// Group sizes by largest remainder so they sum to `n`.
inline std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& proportions) {
  std::vector<std::size_t> sizes(proportions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < proportions.size(); ++g) {
    const double exact = proportions[g] * static_cast<double>(n);
    sizes[g] = static_cast<std::size_t>(std::floor(exact));
    assigned += sizes[g];
    remainders.emplace_back(exact - std::floor(exact), g);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[remainders[i % remainders.size()].second];
  return sizes;
}

/// Deterministic for a given spec. Participant i has baseline variant
/// variants[i % 2]; every shadowed utterance realizes the stimulus variant
/// with probability equal to the participant's designed degree.
inline Cohort generate_synthetic_cohort(const CohortSpec& spec, const FeatureDefinition& def) {
  if (spec.proportions.size() != spec.degrees.size() || spec.proportions.empty())
    throw Error(Errc::invalid_spec, "proportions and degrees must have the same non-zero length");
  const double total = std::accumulate(spec.proportions.begin(), spec.proportions.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw Error(Errc::invalid_spec, "proportions must sum to 1");
  for (double p : spec.proportions)
    if (p < 0.0) throw Error(Errc::invalid_spec, "negative proportion");
  for (double d : spec.degrees)
    if (!(d >= 0.0 && d <= 1.0)) throw Error(Errc::invalid_spec, "degree outside [0,1]");
  if (!(spec.noise >= 0.0)) throw Error(Errc::invalid_spec, "noise must be >= 0");
  if (def.variants.size() != 2) throw Error(Errc::invalid_spec, "feature must have two variants");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto realize = [&](const VariantSpec& v) {
    Values out = v.prototype;
    if (spec.noise > 0.0)
      for (std::size_t d = 0; d < out.size(); ++d)
        out[d] = std::clamp(out[d] + gauss(rng) * spec.noise * def.dimensions[d].width(), def.dimensions[d].min,
                            def.dimensions[d].max);
    return out;
  };
  auto phone_for = [&](std::size_t variant) {
    if (def.phonemes.size() == def.variants.size()) return def.phonemes[variant];
    return def.phonemes.empty() ? std::string("?") : def.phonemes.front();
  };
  const auto sentences = detail::carrier_sentences(def.id);
  auto record = [&](std::size_t item, std::optional<std::size_t> variant) {
    UtteranceRecord rec;
    const auto& s = sentences[item % sentences.size()];
    rec.transcript = s.before + " " + s.word + " " + s.after;
    if (variant) {
      // The carrier word follows the words of `before`.
      std::int64_t word_index = 1;
      for (char c : s.before) word_index += c == ' ' ? 1 : 0;
      const std::int64_t start = 300 * word_index;
      rec.segments.push_back(PhoneSegment{phone_for(*variant), start, start + 120, {{def.id, realize(def.variants[*variant])}}});
    }
    return rec;
  };

  Cohort cohort;
  cohort.feature_id = def.id;
  const auto sizes = apportion(spec.participants, spec.proportions);
  std::size_t i = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    for (std::size_t k = 0; k < sizes[g]; ++k, ++i) {
      ParticipantScript p;
      char name[32];
      std::snprintf(name, sizeof name, "participant_%02zu", i + 1);
      p.name = name;
      p.design_group = g;
      p.designed_degree = spec.degrees[g];
      const std::size_t base = i % 2, stim = 1 - base;
      p.baseline_variant = def.variants[base].label;
      p.stimulus_variant = def.variants[stim].label;

      p.records.push_back(UtteranceRecord{Speaker::user, "start", {}});
      std::size_t item = 0;
      for (std::size_t b = 0; b < spec.phases.baseline; ++b) p.records.push_back(record(item++, base));
      for (std::size_t s = 0; s < spec.phases.shadowing; ++s) {
        const bool flip = unit(rng) < p.designed_degree;
        p.shadow_flips.push_back(flip);
        p.records.push_back(record(item++, flip ? stim : base));
      }
      for (std::size_t q = 0; q < spec.phases.post; ++q) p.records.push_back(record(item++, base));
      cohort.participants.push_back(std::move(p));
    }
  }
  for (std::size_t v = 0; v < def.variants.size(); ++v)
    for (std::size_t k = 0; k < spec.stimulus_points; ++k)
      cohort.stimulus_points.push_back({realize(def.variants[v]), def.variants[v].label});
  return cohort;
}

inline std::string utterance_stream_text(const std::vector<UtteranceRecord>& records) {
  std::string out;
  for (const auto& r : records) out += serialize_record(r) + '\n';
  return out;
}

inline json cohort_manifest(const Cohort& cohort, const CohortSpec& spec) {
  json j;
  j["feature_id"] = cohort.feature_id;
  j["seed"] = spec.seed;
  j["noise"] = spec.noise;
  j["proportions"] = spec.proportions;
  j["degrees"] = spec.degrees;
  j["participants"] = json::array();
  for (const auto& p : cohort.participants)
    j["participants"].push_back({{"name", p.name},
                                 {"designed_degree", p.designed_degree},
                                 {"baseline_variant", p.baseline_variant},
                                 {"stimulus_variant", p.stimulus_variant},
                                 {"realized_degree", p.realized_degree()}});
  return j;
}

/// Writes <name>.jsonl per participant, stimuli.tsv and manifest.json.
inline void write_cohort(const Cohort& cohort, const CohortSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& p : cohort.participants) write_file((dir / (p.name + ".jsonl")).string(), utterance_stream_text(p.records));
  std::ostringstream tsv;
  write_training_points(tsv, cohort.feature_id, cohort.stimulus_points);
  write_file((dir / "stimuli.tsv").string(), tsv.str());
  write_file((dir / "manifest.json").string(), cohort_manifest(cohort, spec).dump(2) + "\n");
}

// Running ----------------------------------------------------------------

struct ParticipantSource {
  std::string name;
  std::string utterance_stream;  // file content
};

struct ExperimentScript {
  std::string domain_source;
  std::string config_source;
  std::string feature_id;
  std::vector<ParticipantSource> participants;
  /// Stimulus training points per feature (fixture format). Features
  /// without an entry train as configured.
  std::map<std::string, std::string> training;
  std::string config_base_dir = ".";
  std::size_t threads = 0;  // 0: hardware concurrency
};

struct ParticipantRun {
  std::string name;
  std::optional<json> archive;
  std::string error;
};

struct ExperimentOutcome {
  std::vector<ParticipantRun> runs;
  ExperimentReport report;
};

/// Feeds one participant's stream through a fresh session until the
/// dialogue reaches a terminal state or the stream ends.
inline std::unique_ptr<Session> run_participant(const std::string& name, const std::string& stream,
                                                std::shared_ptr<const SessionResources> res) {
  auto session = std::make_unique<Session>(name, res);
  std::istringstream in(stream);
  UtteranceStreamAdapter adapter(in, res->definitions());
  while (!session->terminal()) {
    auto rec = adapter.next();
    if (!rec) break;
    session->post_turn(UserInput::from_record(std::move(*rec)));
  }
  return session;
}

inline ExperimentOutcome run_experiment(const ExperimentScript& script) {
  auto res = make_resources(script.domain_source, script.config_source, script.training, script.config_base_dir);
  const FeatureConfigEntry* entry = res->config->find(script.feature_id);
  if (entry == nullptr) throw Error(Errc::unknown_feature, script.feature_id);
  for (const auto& phase : {kBaselinePhase, kShadowingPhase})
    if (res->domain->phase_index(phase) < 0)
      throw Error(Errc::invalid_spec, std::string("domain has no '") + phase + "' phase");

  ExperimentOutcome out;
  out.runs.resize(script.participants.size());
  std::vector<std::optional<ParticipantData>> data(script.participants.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < script.participants.size(); i = next++) {
      const auto& src = script.participants[i];
      auto& run = out.runs[i];
      run.name = src.name;
      try {
        auto session = run_participant(src.name, src.utterance_stream, res);
        run.archive = session->archive();
        data[i] = participant_data_from_events(session->events_since(0), script.feature_id, src.name);
      } catch (const Error& e) {
        run.error = e.what();
      }
    }
  };
  std::size_t threads = script.threads ? script.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, script.participants.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<ParticipantData> analyzable;
  for (const auto& d : data)
    if (d) analyzable.push_back(*d);
  if (analyzable.empty()) throw Error(Errc::no_sessions, "no participant completed");
  out.report = experiment_report(analyzable, script.feature_id, entry->definition.canonical_variant);
  for (const auto& run : out.runs)
    if (!run.error.empty()) out.report.failures.emplace_back(run.name, run.error);
  return out;
}

/// Report over stored archives; each archive's embedded config supplies the
/// canonical variant used for baseline ties.
inline ExperimentReport report_from_archives(const std::vector<std::pair<std::string, nlohmann::json>>& archives,
                                             const std::string& feature_id) {
  std::vector<ParticipantData> data;
  std::vector<std::pair<std::string, std::string>> failures;
  std::string canonical;
  for (const auto& [name, archive] : archives) {
    try {
      const auto cfg = parse_feature_config(archive.at("resources").at("feature_config").get<std::string>());
      const auto* entry = cfg.find(feature_id);
      if (entry == nullptr) throw Error(Errc::unknown_feature, feature_id);
      if (canonical.empty()) canonical = entry->definition.canonical_variant;
      data.push_back(participant_data_from_events(events_from_archive(archive), feature_id, name));
    } catch (const nlohmann::json::exception& e) {
      failures.emplace_back(name, std::string("ArchiveCorrupt: ") + e.what());
    } catch (const Error& e) {
      failures.emplace_back(name, e.what());
    }
  }
  if (data.empty()) throw Error(Errc::no_sessions, "no usable archives");
  auto report = experiment_report(data, feature_id, canonical);
  report.failures.insert(report.failures.end(), failures.begin(), failures.end());
  return report;
}

}  // namespace phonconv
