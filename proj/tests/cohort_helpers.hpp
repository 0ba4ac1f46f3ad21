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

// Runs a synthetic cohort through the experiment pipeline in memory.

#pragma once

#include "fixtures.hpp"

#include <phonconv/experiment.hpp>

#include <sstream>

namespace phonconv::testing {

inline ExperimentScript script_for(const Cohort& cohort, const CohortSpec& spec) {
  ExperimentScript script;
  script.domain_source = make_shadowing_domain_xml(cohort.feature_id, spec.phases);
  script.config_source = read_file(data_path("features.json"));
  script.config_base_dir = PHONCONV_DATA_DIR;
  script.feature_id = cohort.feature_id;
  for (const auto& p : cohort.participants) script.participants.push_back({p.name, utterance_stream_text(p.records)});
  std::ostringstream tsv;
  write_training_points(tsv, cohort.feature_id, cohort.stimulus_points);
  script.training[cohort.feature_id] = tsv.str();
  return script;
}

inline ExperimentOutcome run_cohort(const CohortSpec& spec, const std::string& feature_id = "ae") {
  const auto cfg = shipped_config();
  const auto cohort = generate_synthetic_cohort(spec, cfg.find(feature_id)->definition);
  return run_experiment(script_for(cohort, spec));
}

}  // namespace phonconv::testing
