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

/** @file session.hpp Event-sourced dialogue sessions.
 *
 * A session runs the turn pipeline
 *
 *     detect -> ingest -> update -> predict -> respond
 *
 * and records every step as a SessionEvent in an append-only log. The log,
 * the user inputs and the exact resource files make up a session archive;
 * re-running the inputs against the archived resources reproduces the log.
 */

#pragma once

#include <phonconv/analysis.hpp>
#include <phonconv/classify.hpp>
#include <phonconv/convergence.hpp>
#include <phonconv/dialogue.hpp>
#include <phonconv/error.hpp>
#include <phonconv/feature_config.hpp>
#include <phonconv/speech_adapter.hpp>

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace phonconv {

using json = nlohmann::ordered_json;

inline constexpr const char* kArchiveFormat = "phonconv-archive/1";
inline constexpr const char* kBaselinePhase = "baseline";
inline constexpr const char* kShadowingPhase = "shadowing";
inline constexpr std::int64_t kTextTurnMs = 1000;

/// 64-bit FNV-1a, rendered as "fnv1a64:<16 hex digits>".
inline std::string content_hash(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Events -----------------------------------------------------------------

enum class EventKind {
  turn_added,
  exemplar_accepted,
  exemplar_rejected,
  state_updated,
  prediction_made,
  variant_switch,
  phase_changed,
};

constexpr const char* to_string(EventKind k) noexcept {
  switch (k) {
    case EventKind::turn_added: return "turn_added";
    case EventKind::exemplar_accepted: return "exemplar_accepted";
    case EventKind::exemplar_rejected: return "exemplar_rejected";
    case EventKind::state_updated: return "state_updated";
    case EventKind::prediction_made: return "prediction_made";
    case EventKind::variant_switch: return "variant_switch";
    case EventKind::phase_changed: return "phase_changed";
  }
  return "turn_added";
}

inline EventKind event_kind_from_string(const std::string& s) {
  for (int k = 0; k <= static_cast<int>(EventKind::phase_changed); ++k)
    if (s == to_string(static_cast<EventKind>(k))) return static_cast<EventKind>(k);
  throw Error(Errc::archive_corrupt, "unknown event kind " + s);
}

struct SessionEvent {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::turn_added;
  json payload;
};

inline json to_json(const SessionEvent& e) {
  json j;
  j["seq"] = e.seq;
  j["kind"] = to_string(e.kind);
  j["payload"] = e.payload;
  return j;
}

inline SessionEvent event_from_json(const nlohmann::json& j) {
  try {
    SessionEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.kind = event_kind_from_string(j.at("kind").get<std::string>());
    e.payload = j.at("payload");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::archive_corrupt, std::string("event: ") + ex.what());
  }
}

/// Structural equality; numbers compare within `tolerance` (relative to
/// max(1, |a|)).
inline bool json_near(const json& a, const json& b, double tolerance = 1e-12) {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    return std::abs(x - y) <= tolerance * std::max({1.0, std::abs(x), std::abs(y)});
  }
  if (a.type() != b.type()) return false;
  if (a.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!json_near(a[i], b[i], tolerance)) return false;
    return true;
  }
  if (a.is_object()) {
    if (a.size() != b.size()) return false;
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key()) || !json_near(it.value(), b[it.key()], tolerance)) return false;
    }
    return true;
  }
  return a == b;
}

inline bool events_equal(const SessionEvent& a, const SessionEvent& b, double tolerance = 1e-12) {
  return a.seq == b.seq && a.kind == b.kind && json_near(a.payload, b.payload, tolerance);
}

// Resources --------------------------------------------------------------

/// Everything a session needs, immutable and shareable between sessions.
struct SessionResources {
  std::shared_ptr<const DialogueDomain> domain;
  std::string domain_source;
  std::shared_ptr<const FeatureConfig> config;
  std::map<std::string, VariantClassifier> classifiers;
  /// Training points per feature, in the tab-separated fixture format.
  std::map<std::string, std::string> training;

  std::vector<FeatureDefinition> definitions() const {
    std::vector<FeatureDefinition> defs;
    for (const auto& f : config->features) defs.push_back(f.definition);
    return defs;
  }

  std::string training_hash() const {
    std::string all;
    for (const auto& [id, text] : training) all += id + '\n' + text + '\n';
    return content_hash(all);
  }
};

/// Builds resources from source texts. `training` overrides the config's
/// training files per feature; features without an entry use the config's
/// training file (relative to `base_dir`) or the variant prototypes.
inline std::shared_ptr<const SessionResources> make_resources(const std::string& domain_source,
                                                              const std::string& config_source,
                                                              std::map<std::string, std::string> training = {},
                                                              const std::string& base_dir = ".") {
  auto res = std::make_shared<SessionResources>();
  res->domain = std::make_shared<const DialogueDomain>(parse_domain(domain_source));
  res->domain_source = domain_source;
  res->config = std::make_shared<const FeatureConfig>(parse_feature_config(config_source));
  for (const auto& entry : res->config->features) {
    const auto& def = entry.definition;
    std::vector<LabeledPoint> points;
    if (auto it = training.find(def.id); it != training.end()) {
      std::istringstream in(it->second);
      points = parse_training_points(in, def);
    } else if (!entry.training_file.empty()) {
      const std::string path = entry.training_file.front() == '/' ? entry.training_file : base_dir + "/" + entry.training_file;
      std::istringstream in(read_file(path));
      points = parse_training_points(in, def);
    } else {
      points = prototype_points(def);
    }
    std::ostringstream tsv;
    write_training_points(tsv, def.id, points);
    res->training[def.id] = tsv.str();
    res->classifiers.emplace(def.id, train_classifier(def, std::move(points), entry.classifier));
  }
  return res;
}

// Serialization helpers ----------------------------------------------------

struct UserInput {
  std::optional<std::string> text;
  std::optional<UtteranceRecord> record;

  static UserInput from_text(std::string t) { return {std::move(t), std::nullopt}; }
  static UserInput from_record(UtteranceRecord r) { return {std::nullopt, std::move(r)}; }
};

inline json to_json(const UserInput& in) {
  json j;
  if (in.record)
    j["record"] = to_json(*in.record);
  else
    j["text"] = in.text.value_or("");
  return j;
}

/// Accepts {"text": ...} or {"record": UtteranceRecord}.
inline UserInput user_input_from_json(const nlohmann::json& j, std::span<const FeatureDefinition> features = {}) {
  if (!j.is_object()) throw Error(Errc::parse_error, "turn body must be an object");
  if (j.contains("record") && !j.contains("text") && j.size() == 1) return UserInput::from_record(record_from_json(j["record"], features));
  if (j.contains("text") && !j.contains("record") && j.size() == 1) {
    if (!j["text"].is_string()) throw Error(Errc::parse_error, "text must be a string");
    auto text = j["text"].get<std::string>();
    if (text.empty()) throw Error(Errc::validation_error, "transcript");
    return UserInput::from_text(std::move(text));
  }
  throw Error(Errc::parse_error, "turn body needs exactly one of 'text' or 'record'");
}

inline json to_json(const Exemplar& ex) {
  json j;
  j["feature"] = ex.feature_id;
  j["values"] = ex.values;
  j["speaker"] = to_string(ex.speaker);
  j["turn"] = ex.turn_index;
  j["timestamp_ms"] = ex.timestamp_ms;
  return j;
}

inline json to_json(const Turn& t) {
  json j;
  j["index"] = t.index;
  j["speaker"] = to_string(t.speaker);
  j["transcript"] = t.transcript;
  j["detected"] = json::array();
  for (const auto& ex : t.detected) j["detected"].push_back(to_json(ex));
  j["predictions"] = json::object();
  for (const auto& [f, p] : t.predictions) j["predictions"][f] = {{"label", p.label}, {"score", p.score}};
  if (t.record) j["record"] = to_json(*t.record);
  return j;
}

// Session ----------------------------------------------------------------

struct PostResult {
  Turn user_turn;
  Turn system_turn;
};

class Session {
 public:
  Session(std::string id, std::shared_ptr<const SessionResources> resources)
      : id_(std::move(id)), res_(std::move(resources)), definitions_(res_->definitions()) {
    for (const auto& def : definitions_) {
      model_.register_feature(def);
      last_system_label_[def.id] = res_->classifiers.at(def.id).predict(def.initial_value).label;
    }
    state_ = res_->domain->initial_state;
    terminal_ = res_->domain->state(state_).is_terminal;
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const noexcept { return id_; }
  const SessionResources& resources() const noexcept { return *res_; }

  PostResult post_turn(const UserInput& input) {
    std::lock_guard lock(mutex_);
    if (terminal_) throw Error(Errc::terminal_session, id_);
    if (input.record) {
      validate_record(*input.record, definitions_);
      if (input.record->speaker != Speaker::user) throw Error(Errc::validation_error, "speaker");
    } else if (!input.text || input.text->empty()) {
      throw Error(Errc::validation_error, "transcript");
    }

    const DialogueDomain& domain = *res_->domain;
    const std::string phase = domain.state(state_).phase;

    // (1) user turn
    Turn user;
    user.index = turns_.size();
    user.speaker = Speaker::user;
    user.transcript = input.record ? input.record->transcript : *input.text;
    if (input.record) user.record = input.record;
    emit(EventKind::turn_added, json{{"turn", user.index},
                                     {"speaker", "user"},
                                     {"transcript", user.transcript},
                                     {"input", input.record ? "speech" : "text"},
                                     {"state", state_},
                                     {"phase", phase},
                                     {"time_ms", clock_ms_}});

    if (input.record) process_speech(*input.record, user, phase);
    clock_ms_ += turn_duration(input);
    turns_.push_back(user);

    // (5) dialogue manager and system response
    const AdvanceResult step = advance(domain, state_, user.transcript);
    const std::string next_phase = domain.state(step.next_state).phase;
    if (next_phase != phase)
      emit(EventKind::phase_changed, json{{"turn", user.index}, {"from", phase}, {"to", next_phase}});
    state_ = step.next_state;

    Turn system = respond(step.response, next_phase);
    turns_.push_back(system);
    terminal_ = domain.state(state_).is_terminal;
    inputs_.push_back(input);
    return {std::move(user), std::move(system)};
  }

  /// Copy of all events with seq >= from_seq.
  std::vector<SessionEvent> events_since(std::uint64_t from_seq) const {
    std::lock_guard lock(mutex_);
    return copy_from(from_seq);
  }

  /// Blocks until an event with seq >= from_seq exists or `timeout` passes.
  std::vector<SessionEvent> wait_events(std::uint64_t from_seq, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return events_.size() > from_seq; });
    return copy_from(from_seq);
  }

  std::size_t event_count() const {
    std::lock_guard lock(mutex_);
    return events_.size();
  }

  std::vector<Turn> turns() const {
    std::lock_guard lock(mutex_);
    return turns_;
  }

  bool terminal() const {
    std::lock_guard lock(mutex_);
    return terminal_;
  }

  std::string dialogue_state() const {
    std::lock_guard lock(mutex_);
    return state_;
  }

  FeatureStateSnapshot feature_snapshot(const std::string& feature_id) const {
    std::lock_guard lock(mutex_);
    return model_.snapshot(feature_id);
  }

  json summary() const {
    std::lock_guard lock(mutex_);
    json j;
    j["session_id"] = id_;
    j["domain_id"] = res_->domain->id;
    j["feature_config_id"] = res_->config->id;
    j["state"] = state_;
    j["phase"] = res_->domain->state(state_).phase;
    j["terminal"] = terminal_;
    j["turn_count"] = turns_.size();
    j["event_count"] = events_.size();
    j["features"] = json::object();
    for (const auto& id : model_.feature_ids()) {
      const auto& st = model_.state(id);
      j["features"][id] = {{"current_value", st.current_value},
                           {"pool_size", st.pool.size()},
                           {"ingest_counter", st.ingest_counter},
                           {"update_count", st.update_count},
                           {"predicted_variant", last_system_label_.at(id)}};
    }
    return j;
  }

  json archive() const {
    std::lock_guard lock(mutex_);
    json j;
    j["format"] = kArchiveFormat;
    j["session_id"] = id_;
    j["domain_id"] = res_->domain->id;
    j["feature_config_id"] = res_->config->id;
    j["config_hash"] = content_hash(res_->config->source);
    j["domain_hash"] = content_hash(res_->domain_source);
    j["training_hash"] = res_->training_hash();
    j["resources"] = {{"feature_config", res_->config->source},
                      {"domain", res_->domain_source},
                      {"training", res_->training}};
    j["inputs"] = json::array();
    for (const auto& in : inputs_) j["inputs"].push_back(to_json(in));
    j["events"] = json::array();
    for (const auto& e : events_) j["events"].push_back(to_json(e));
    return j;
  }

 private:
  void emit(EventKind kind, json payload) {
    events_.push_back(SessionEvent{events_.size(), kind, std::move(payload)});
    cv_.notify_all();
  }

  std::vector<SessionEvent> copy_from(std::uint64_t from_seq) const {
    if (from_seq >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(from_seq), events_.end()};
  }

  static std::int64_t turn_duration(const UserInput& input) {
    if (input.record && !input.record->segments.empty())
      return std::max(input.record->segments.back().end_ms, kTextTurnMs);
    return kTextTurnMs;
  }

  // Steps (2)-(4) of the pipeline.
  void process_speech(const UtteranceRecord& rec, Turn& user, const std::string& phase) {
    std::vector<std::string> warnings;
    user.detected = detect_instances(rec, definitions_, user.index, clock_ms_, &warnings);

    std::vector<std::string> affected;
    for (const auto& ex : user.detected) {
      const IngestResult r = model_.ingest_exemplar(ex.feature_id, ex);
      json payload = to_json(ex);
      payload["turn"] = user.index;
      emit(r == IngestResult::accepted ? EventKind::exemplar_accepted : EventKind::exemplar_rejected, std::move(payload));
      if (std::find(affected.begin(), affected.end(), ex.feature_id) == affected.end()) affected.push_back(ex.feature_id);
    }

    for (const auto& f : affected) {
      if (auto up = model_.maybe_update_state(f)) {
        emit(EventKind::state_updated, json{{"turn", user.index},
                                            {"feature", f},
                                            {"old_value", up->old_value},
                                            {"new_value", up->new_value},
                                            {"pool_value", up->pool_value},
                                            {"update_count", up->update_count}});
      }
    }

    for (const auto& f : affected) {
      // The user's realization in this turn is the mean of its instances.
      Values mean(model_.definition(f).dimensionality(), 0.0);
      std::size_t n = 0;
      for (const auto& ex : user.detected) {
        if (ex.feature_id != f) continue;
        for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += ex.values[d];
        ++n;
      }
      for (auto& v : mean) v /= static_cast<double>(n);
      const Prediction p = res_->classifiers.at(f).predict(mean);
      user.predictions[f] = p;
      if (phase == kBaselinePhase) baseline_labels_[f].push_back(p.label);
      emit(EventKind::prediction_made, json{{"turn", user.index},
                                            {"feature", f},
                                            {"speaker", "user"},
                                            {"values", mean},
                                            {"label", p.label},
                                            {"score", p.score}});
    }
    for (const auto& f : affected) {
      const Values& current = model_.state(f).current_value;
      const Prediction p = res_->classifiers.at(f).predict(current);
      emit(EventKind::prediction_made, json{{"turn", user.index},
                                            {"feature", f},
                                            {"speaker", "system"},
                                            {"values", current},
                                            {"label", p.label},
                                            {"score", p.score}});
    }
  }

  Turn respond(const PromptTemplate& tpl, const std::string& phase) {
    ContrastMap contrast;
    for (const auto& def : definitions_) {
      const auto it = baseline_labels_.find(def.id);
      const std::string baseline =
          majority_label(it == baseline_labels_.end() ? std::vector<std::string>{} : it->second, def.canonical_variant);
      for (const auto& v : def.variants)
        if (v.label != baseline) {
          contrast[def.id] = v.label;
          break;
        }
    }

    const SystemUtterance utt = render_response(tpl, model_, contrast);
    const UtteranceRecord rec = synthesize_stub(utt, definitions_);

    Turn system;
    system.index = turns_.size();
    system.speaker = Speaker::system;
    system.transcript = utt.text;
    system.record = rec;
    system.detected = detect_instances(rec, definitions_, system.index, clock_ms_);
    for (const auto& f : utt.contains_features)
      system.predictions[f] = res_->classifiers.at(f).predict(utt.feature_targets.at(f));

    json targets = json::object();
    for (const auto& [f, v] : utt.feature_targets) targets[f] = v;
    json detected = json::array();
    for (const auto& ex : system.detected) detected.push_back(to_json(ex));
    json predictions = json::object();
    for (const auto& [f, p] : system.predictions) predictions[f] = {{"label", p.label}, {"score", p.score}};
    json stimuli = json::object();
    for (const auto& [f, l] : utt.stimulus_variants) stimuli[f] = l;
    emit(EventKind::turn_added, json{{"turn", system.index},
                                     {"speaker", "system"},
                                     {"transcript", system.transcript},
                                     {"state", state_},
                                     {"phase", phase},
                                     {"time_ms", clock_ms_},
                                     {"feature_targets", targets},
                                     {"stimulus_variants", stimuli},
                                     {"detected", detected},
                                     {"predictions", predictions},
                                     {"record", to_json(rec)}});

    for (const auto& f : utt.contains_features) {
      const std::string& label = system.predictions.at(f).label;
      if (label != last_system_label_.at(f)) {
        emit(EventKind::variant_switch,
             json{{"turn", system.index}, {"feature", f}, {"from", last_system_label_.at(f)}, {"to", label}});
        last_system_label_[f] = label;
      }
    }

    std::size_t words = 0;
    bool in_word = false;
    for (char c : utt.text) {
      const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
      if (!space && !in_word) ++words;
      in_word = !space;
    }
    clock_ms_ += std::max<std::int64_t>(kStubWordSpacingMs * static_cast<std::int64_t>(words), kStubWordSpacingMs);
    return system;
  }

  std::string id_;
  std::shared_ptr<const SessionResources> res_;
  std::vector<FeatureDefinition> definitions_;

  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  ConvergenceModel model_;
  std::string state_;
  bool terminal_ = false;
  std::int64_t clock_ms_ = 0;
  std::vector<Turn> turns_;
  std::vector<SessionEvent> events_;
  std::vector<UserInput> inputs_;
  std::map<std::string, std::vector<std::string>> baseline_labels_;
  std::map<std::string, std::string> last_system_label_;
};

// Archives and replay --------------------------------------------------------

struct ReplayResult {
  std::unique_ptr<Session> session;
  bool identical = false;
  /// Index of the first differing event when not identical.
  std::optional<std::size_t> first_mismatch;
};

inline std::shared_ptr<const SessionResources> resources_from_archive(const nlohmann::json& archive) {
  try {
    if (archive.at("format").get<std::string>() != kArchiveFormat) throw Error(Errc::archive_corrupt, "unsupported format");
    const auto& r = archive.at("resources");
    const auto config = r.at("feature_config").get<std::string>();
    const auto domain = r.at("domain").get<std::string>();
    const auto training = r.at("training").get<std::map<std::string, std::string>>();
    if (content_hash(config) != archive.at("config_hash").get<std::string>())
      throw Error(Errc::config_mismatch, "feature config hash differs");
    if (content_hash(domain) != archive.at("domain_hash").get<std::string>())
      throw Error(Errc::config_mismatch, "domain hash differs");
    auto res = make_resources(domain, config, training);
    if (res->training_hash() != archive.at("training_hash").get<std::string>())
      throw Error(Errc::config_mismatch, "training data hash differs");
    return res;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::archive_corrupt, e.what());
  }
}

/// Re-executes the archived inputs and compares the new event log with the
/// archived one. Throws Errc::archive_corrupt or Errc::config_mismatch.
inline ReplayResult replay_session(const nlohmann::json& archive, const FeatureConfig* expected_config = nullptr) {
  if (!archive.is_object()) throw Error(Errc::archive_corrupt, "archive must be a JSON object");
  auto res = resources_from_archive(archive);
  if (expected_config != nullptr && content_hash(expected_config->source) != content_hash(res->config->source))
    throw Error(Errc::config_mismatch, "archive was recorded with a different feature config");

  std::vector<SessionEvent> recorded;
  std::vector<UserInput> inputs;
  try {
    for (const auto& e : archive.at("events")) recorded.push_back(event_from_json(e));
    const auto defs = res->definitions();
    for (const auto& in : archive.at("inputs")) inputs.push_back(user_input_from_json(in, defs));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::archive_corrupt, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::archive_corrupt) throw;
    throw Error(Errc::archive_corrupt, e.what());
  }

  ReplayResult out;
  out.session = std::make_unique<Session>(archive.value("session_id", std::string("replay")), res);
  for (const auto& in : inputs) out.session->post_turn(in);

  const auto replayed = out.session->events_since(0);
  const std::size_t n = std::min(replayed.size(), recorded.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!events_equal(replayed[i], recorded[i])) {
      out.first_mismatch = i;
      return out;
    }
  if (replayed.size() != recorded.size()) {
    out.first_mismatch = n;
    return out;
  }
  out.identical = true;
  return out;
}

// Extraction for analysis --------------------------------------------------

/// Baseline predictions and shadowing annotation pairs for one feature,
/// read from a session's event log. A shadowed item pairs the user's
/// predicted variant with the prediction of the latest system production of
/// that feature (the stimulus being shadowed).
inline ParticipantData participant_data_from_events(const std::vector<SessionEvent>& events, const std::string& feature_id,
                                                    const std::string& participant = {}) {
  ParticipantData out;
  out.participant = participant;
  std::map<std::uint64_t, std::string> user_turn_phase;
  std::optional<std::string> stimulus_label;
  for (const auto& e : events) {
    const auto& p = e.payload;
    if (e.kind == EventKind::turn_added) {
      const auto turn = p.at("turn").get<std::uint64_t>();
      if (p.at("speaker") == "user") {
        user_turn_phase[turn] = p.at("phase").get<std::string>();
      } else if (p.at("predictions").contains(feature_id)) {
        stimulus_label = p.at("predictions").at(feature_id).at("label").get<std::string>();
      }
    } else if (e.kind == EventKind::prediction_made && p.at("speaker") == "user" && p.at("feature") == feature_id) {
      const auto& phase = user_turn_phase[p.at("turn").get<std::uint64_t>()];
      const auto label = p.at("label").get<std::string>();
      if (phase == kBaselinePhase)
        out.baseline_labels.push_back(label);
      else if (phase == kShadowingPhase && stimulus_label)
        out.shadowing.items.push_back({label, *stimulus_label});
    }
  }
  return out;
}

inline std::vector<SessionEvent> events_from_archive(const nlohmann::json& archive) {
  std::vector<SessionEvent> events;
  try {
    for (const auto& e : archive.at("events")) events.push_back(event_from_json(e));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::archive_corrupt, e.what());
  }
  return events;
}

// Session registry ---------------------------------------------------------

/// Resources by id and live sessions. Thread-safe.
class SessionManager {
 public:
  void add_domain(const std::string& source) {
    auto domain = parse_domain(source);
    std::lock_guard lock(mutex_);
    domains_[domain.id] = source;
  }

  void add_config(const std::string& source, const std::string& base_dir = ".") {
    auto cfg = parse_feature_config(source);
    std::lock_guard lock(mutex_);
    configs_[cfg.id] = {source, base_dir};
  }

  std::vector<std::string> domain_ids() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : domains_) ids.push_back(id);
    return ids;
  }

  std::vector<std::string> config_ids() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : configs_) ids.push_back(id);
    return ids;
  }

  std::vector<FeatureConfig> configs() const {
    std::lock_guard lock(mutex_);
    std::vector<FeatureConfig> out;
    for (const auto& [_, c] : configs_) out.push_back(parse_feature_config(c.source));
    return out;
  }

  std::string create_session(const std::string& domain_id, const std::string& config_id) {
    std::shared_ptr<const SessionResources> res;
    {
      std::lock_guard lock(mutex_);
      auto d = domains_.find(domain_id);
      if (d == domains_.end()) throw Error(Errc::unknown_domain, domain_id);
      auto c = configs_.find(config_id);
      if (c == configs_.end()) throw Error(Errc::unknown_config, config_id);
      const auto key = domain_id + '\n' + config_id;
      auto cached = resources_.find(key);
      if (cached == resources_.end())
        cached = resources_.emplace(key, make_resources(d->second, c->second.source, {}, c->second.base_dir)).first;
      res = cached->second;
    }
    std::string id = next_id();
    auto session = std::make_shared<Session>(id, res);
    std::lock_guard lock(mutex_);
    sessions_[id] = std::move(session);
    return id;
  }

  std::shared_ptr<Session> get(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(Errc::unknown_session, session_id);
    return it->second;
  }

 private:
  std::string next_id() {
    const auto n = counter_.fetch_add(1);
    thread_local std::mt19937_64 rng{std::random_device{}()};
    char buf[48];
    std::snprintf(buf, sizeof buf, "s%04llx%08llx", static_cast<unsigned long long>(n),
                  static_cast<unsigned long long>(rng() & 0xffffffffull));
    return buf;
  }

  struct ConfigSource {
    std::string source;
    std::string base_dir;
  };

  mutable std::mutex mutex_;
  std::map<std::string, std::string> domains_;
  std::map<std::string, ConfigSource> configs_;
  std::map<std::string, std::shared_ptr<const SessionResources>> resources_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::atomic<std::uint64_t> counter_{0};
};

}  // namespace phonconv
