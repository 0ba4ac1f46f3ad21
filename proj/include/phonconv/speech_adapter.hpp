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

/** @file speech_adapter.hpp Boundary between speech and the dialogue core.
 *
 * Speech arrives as pre-analyzed utterance records, one JSON object per
 * line of an utterance-stream file:
 *
 *     {"speaker":"user","transcript":"War das Gerät teuer?",
 *      "segments":[{"phone":"E:","start_ms":300,"end_ms":420,
 *                   "features":{"ae":[580,1950]}}]}
 *
 * `detect_instances` turns matching segments into exemplars, and
 * `synthesize_stub` stands in for TTS by emitting a system record that
 * carries the realized feature values.
 */

#pragma once

#include <phonconv/classify.hpp>
#include <phonconv/convergence.hpp>
#include <phonconv/dialogue.hpp>
#include <phonconv/error.hpp>

#include <json.hpp>

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace phonconv {

struct PhoneSegment {
  std::string phone;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::map<std::string, Values> measurements;

  friend bool operator==(const PhoneSegment&, const PhoneSegment&) = default;
};

struct UtteranceRecord {
  Speaker speaker = Speaker::user;
  std::string transcript;
  std::vector<PhoneSegment> segments;

  friend bool operator==(const UtteranceRecord&, const UtteranceRecord&) = default;
};

struct Turn {
  std::uint64_t index = 0;
  Speaker speaker = Speaker::user;
  std::string transcript;
  std::vector<Exemplar> detected;
  std::map<std::string, Prediction> predictions;
  std::optional<UtteranceRecord> record;
};

// Wire format ------------------------------------------------------------

inline nlohmann::ordered_json to_json(const UtteranceRecord& rec) {
  nlohmann::ordered_json j;
  j["speaker"] = to_string(rec.speaker);
  j["transcript"] = rec.transcript;
  auto segs = nlohmann::ordered_json::array();
  for (const auto& s : rec.segments) {
    nlohmann::ordered_json js;
    js["phone"] = s.phone;
    js["start_ms"] = s.start_ms;
    js["end_ms"] = s.end_ms;
    js["features"] = nlohmann::ordered_json::object();
    for (const auto& [id, v] : s.measurements) js["features"][id] = v;
    segs.push_back(std::move(js));
  }
  j["segments"] = std::move(segs);
  return j;
}

/// One line of an utterance-stream file (no trailing newline).
inline std::string serialize_record(const UtteranceRecord& rec) { return to_json(rec).dump(); }

inline void validate_record(const UtteranceRecord& rec, std::span<const FeatureDefinition> features = {}) {
  if (rec.speaker == Speaker::user && rec.transcript.empty()) throw Error(Errc::validation_error, "transcript");
  std::int64_t previous_end = 0;
  for (const auto& seg : rec.segments) {
    if (seg.start_ms < 0 || seg.end_ms <= seg.start_ms || seg.start_ms < previous_end)
      throw Error(Errc::validation_error, "segment times");
    previous_end = seg.end_ms;
    for (const auto& [id, values] : seg.measurements) {
      for (const auto& def : features)
        if (def.id == id && values.size() != def.dimensionality()) throw Error(Errc::validation_error, "dimensionality");
    }
  }
}

inline UtteranceRecord record_from_json(const nlohmann::json& j, std::span<const FeatureDefinition> features = {}) {
  auto fail = [](const std::string& reason) { throw Error(Errc::parse_error, reason); };
  auto exact_keys = [&](const nlohmann::json& obj, std::initializer_list<const char*> keys, const char* what) {
    if (!obj.is_object()) fail(std::string(what) + " must be an object");
    for (const char* k : keys)
      if (!obj.contains(k)) fail(std::string(what) + ": missing field '" + k + "'");
    if (obj.size() != keys.size()) fail(std::string(what) + ": unexpected field");
  };

  exact_keys(j, {"speaker", "transcript", "segments"}, "record");
  UtteranceRecord rec;
  if (!j["speaker"].is_string()) fail("speaker must be a string");
  const auto speaker = j["speaker"].get<std::string>();
  if (speaker == "user")
    rec.speaker = Speaker::user;
  else if (speaker == "system")
    rec.speaker = Speaker::system;
  else
    fail("speaker must be \"user\" or \"system\"");
  if (!j["transcript"].is_string()) fail("transcript must be a string");
  rec.transcript = j["transcript"].get<std::string>();
  if (!j["segments"].is_array()) fail("segments must be an array");

  for (const auto& js : j["segments"]) {
    exact_keys(js, {"phone", "start_ms", "end_ms", "features"}, "segment");
    PhoneSegment seg;
    if (!js["phone"].is_string()) fail("phone must be a string");
    seg.phone = js["phone"].get<std::string>();
    if (!js["start_ms"].is_number_integer() || !js["end_ms"].is_number_integer()) fail("segment times must be integers");
    seg.start_ms = js["start_ms"].get<std::int64_t>();
    seg.end_ms = js["end_ms"].get<std::int64_t>();
    if (!js["features"].is_object()) fail("features must be an object");
    for (const auto& [id, arr] : js["features"].items()) {
      if (!arr.is_array()) fail("feature " + id + " must be an array");
      Values v;
      for (const auto& x : arr) {
        if (!x.is_number()) fail("feature " + id + " must contain numbers");
        v.push_back(x.get<double>());
      }
      seg.measurements[id] = std::move(v);
    }
    rec.segments.push_back(std::move(seg));
  }
  validate_record(rec, features);
  return rec;
}

/// Throws Errc::parse_error for malformed lines and Errc::validation_error
/// (detail = offending field) for invariant violations.
inline UtteranceRecord parse_utterance_record(const std::string& line, std::span<const FeatureDefinition> features = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::parse_error, e.what());
  }
  return record_from_json(j, features);
}

// Detection and synthesis --------------------------------------------------

/// One exemplar per (segment, feature) pair where the segment's phone
/// belongs to the feature and the segment carries its measurement. Missing
/// measurements are reported to `warnings` and skipped.
inline std::vector<Exemplar> detect_instances(const UtteranceRecord& rec, std::span<const FeatureDefinition> features,
                                              std::uint64_t turn_index = 0, std::int64_t turn_start_ms = 0,
                                              std::vector<std::string>* warnings = nullptr) {
  std::vector<Exemplar> out;
  for (std::size_t s = 0; s < rec.segments.size(); ++s) {
    const auto& seg = rec.segments[s];
    for (const auto& def : features) {
      if (!def.has_phoneme(seg.phone)) continue;
      auto it = seg.measurements.find(def.id);
      if (it == seg.measurements.end() || it->second.size() != def.dimensionality()) {
        if (warnings)
          warnings->push_back("segment " + std::to_string(s) + " (" + seg.phone + "): no usable measurement for " + def.id);
        continue;
      }
      out.push_back(Exemplar{def.id, it->second, rec.speaker, turn_index, turn_start_ms + seg.start_ms});
    }
  }
  return out;
}

inline constexpr std::int64_t kStubWordSpacingMs = 300;
inline constexpr std::int64_t kStubWordDurationMs = 280;

/// Word k of the utterance spans [300k, 300k + 280) ms; only feature-bearing
/// words become segments.
inline UtteranceRecord synthesize_stub(const SystemUtterance& utt, std::span<const FeatureDefinition> features) {
  UtteranceRecord rec;
  rec.speaker = Speaker::system;
  rec.transcript = utt.text;
  for (const auto& word : utt.feature_words) {
    auto target = utt.feature_targets.find(word.feature);
    if (target == utt.feature_targets.end()) continue;
    const std::int64_t start = kStubWordSpacingMs * static_cast<std::int64_t>(word.index);
    if (!rec.segments.empty() && rec.segments.back().start_ms == start) {
      rec.segments.back().measurements[word.feature] = target->second;
      continue;
    }
    std::string phone = word.feature;
    for (const auto& def : features)
      if (def.id == word.feature && !def.phonemes.empty()) phone = def.phonemes.front();
    rec.segments.push_back(PhoneSegment{phone, start, start + kStubWordDurationMs, {{word.feature, target->second}}});
  }
  return rec;
}

// Adapters ---------------------------------------------------------------

/// Source of user utterances. Only the file-backed adapter ships; a live
/// ASR front end would implement the same interface.
class SpeechAdapter {
 public:
  virtual ~SpeechAdapter() = default;
  virtual std::optional<UtteranceRecord> next() = 0;
};

class UtteranceStreamAdapter : public SpeechAdapter {
 public:
  UtteranceStreamAdapter(std::istream& in, std::vector<FeatureDefinition> features)
      : in_(in), features_(std::move(features)) {}

  std::optional<UtteranceRecord> next() override {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_number_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      try {
        return parse_utterance_record(line, features_);
      } catch (const Error& e) {
        throw Error(e.code(), e.code() == Errc::validation_error
                                  ? e.detail()
                                  : "line " + std::to_string(line_number_) + ": " + e.detail());
      }
    }
    return std::nullopt;
  }

  std::size_t line_number() const noexcept { return line_number_; }

 private:
  std::istream& in_;
  std::vector<FeatureDefinition> features_;
  std::size_t line_number_ = 0;
};

inline std::vector<UtteranceRecord> read_utterance_stream(std::istream& in, std::vector<FeatureDefinition> features = {}) {
  UtteranceStreamAdapter adapter(in, std::move(features));
  std::vector<UtteranceRecord> out;
  while (auto rec = adapter.next()) out.push_back(std::move(*rec));
  return out;
}

}  // namespace phonconv
