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

// phonconv: dialogue server, session replay and shadowing-experiment tools.

#include <phonconv/analysis.hpp>
#include <phonconv/experiment.hpp>
#include <phonconv/feature_config.hpp>
#include <phonconv/server.hpp>
#include <phonconv/session.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace phonconv;

namespace {

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::string parent_dir(const std::string& path) {
  const auto p = fs::path(path).parent_path();
  return p.empty() ? "." : p.string();
}

void write_report(const ExperimentReport& report, const std::string& out) {
  write_file(out, report_to_tsv(report));
  write_file(out + ".json", to_json(report).dump(2) + "\n");
}

int cmd_serve(const std::vector<std::string>& configs, const std::vector<std::string>& domains, const std::string& host,
              int port, const std::string& static_dir) {
  auto sessions = std::make_shared<SessionManager>();
  for (const auto& c : configs) sessions->add_config(read_file(c), parent_dir(c));
  for (const auto& d : domains) sessions->add_domain(read_file(d));

  HttpServer server(sessions);
  if (!static_dir.empty() && !server.mount_static(static_dir)) {
    std::cerr << "cannot serve static files from " << static_dir << "\n";
    return 1;
  }
  if (!server.bind(host, port)) {
    std::cerr << "cannot bind " << host << ":" << port << "\n";
    return 1;
  }
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on http://" << host << ":" << port << "\n";
  for (const auto& id : sessions->domain_ids()) std::cout << "  domain " << id << "\n";
  for (const auto& id : sessions->config_ids()) std::cout << "  feature config " << id << "\n";
  std::cout.flush();
  server.run();
  g_server = nullptr;
  return 0;
}

int cmd_replay(const std::string& archive_path, const std::string& config_path) {
  const auto archive = nlohmann::json::parse(read_file(archive_path));
  std::optional<FeatureConfig> expected;
  if (!config_path.empty()) expected = parse_feature_config(read_file(config_path));
  const auto result = replay_session(archive, expected ? &*expected : nullptr);
  const auto events = result.session->event_count();
  if (result.identical) {
    std::cout << "replay identical: " << events << " events, " << result.session->turns().size() << " turns\n";
    return 0;
  }
  std::cout << "replay differs at event " << *result.first_mismatch << "\n";
  return 2;
}

int cmd_experiment(const std::string& domain_path, const std::string& responses, const std::string& report_path,
                   const std::string& config_path, std::string feature, const std::string& archives_dir) {
  ExperimentScript script;
  script.domain_source = read_file(domain_path);
  script.config_source = read_file(config_path);
  script.config_base_dir = parent_dir(config_path);
  const auto cfg = parse_feature_config(script.config_source);
  if (feature.empty()) feature = cfg.features.front().definition.id;
  script.feature_id = feature;

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(responses))
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) script.participants.push_back({f.stem().string(), read_file(f.string())});
  if (const auto stimuli = fs::path(responses) / "stimuli.tsv"; fs::exists(stimuli))
    script.training[feature] = read_file(stimuli.string());

  const auto outcome = run_experiment(script);
  write_report(outcome.report, report_path);
  if (!archives_dir.empty()) {
    fs::create_directories(archives_dir);
    const auto report_json = to_json(outcome.report);
    for (const auto& run : outcome.runs) {
      if (!run.archive) continue;
      auto archive = *run.archive;
      archive["report"] = report_json;
      write_file((fs::path(archives_dir) / (run.name + ".json")).string(), archive.dump() + "\n");
    }
  }
  std::cout << report_to_tsv(outcome.report);
  return 0;
}

int cmd_report(const std::string& archives_dir, const std::string& feature, const std::string& out) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(archives_dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<std::pair<std::string, nlohmann::json>> archives;
  for (const auto& f : files) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(f.string()));
    } catch (const nlohmann::json::exception&) {
      j = nlohmann::json::object();  // reported as a failure
    }
    archives.emplace_back(f.stem().string(), std::move(j));
  }
  const auto report = report_from_archives(archives, feature);
  write_report(report, out);
  std::cout << report_to_tsv(report);
  return 0;
}

int cmd_cohort(const std::string& out_dir, const std::string& config_path, std::string feature, CohortSpec spec) {
  const auto cfg = parse_feature_config(read_file(config_path));
  if (feature.empty()) feature = cfg.features.front().definition.id;
  const auto* entry = cfg.find(feature);
  if (entry == nullptr) throw Error(Errc::unknown_feature, feature);
  const auto cohort = generate_synthetic_cohort(spec, entry->definition);
  write_cohort(cohort, spec, out_dir);
  write_file((fs::path(out_dir) / "domain.xml").string(), make_shadowing_domain_xml(feature, spec.phases));
  std::cout << "wrote " << cohort.participants.size() << " participants to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phonconv: phonetic-convergence dialogue server and experiment tools"};
  app.require_subcommand(1);

  std::vector<std::string> serve_configs, serve_domains;
  std::string host = "127.0.0.1", static_dir;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP dialogue server");
  serve->add_option("--config", serve_configs, "Feature configuration file (repeatable)")->required()->check(CLI::ExistingFile);
  serve->add_option("--domain", serve_domains, "Dialogue domain file (repeatable)")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port, "Port")->capture_default_str();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--static", static_dir, "Directory served at / (web client)");

  std::string archive_path, replay_config;
  auto* replay = app.add_subcommand("replay", "Re-run a session archive and compare event logs");
  replay->add_option("--archive", archive_path, "Session archive")->required()->check(CLI::ExistingFile);
  replay->add_option("--config", replay_config, "Require this feature config")->check(CLI::ExistingFile);

  std::string exp_domain, responses, report_out, exp_config = "data/features.json", exp_feature, archives_out;
  auto* experiment = app.add_subcommand("experiment", "Run a shadowing experiment over participant streams");
  experiment->add_option("--domain", exp_domain, "Experiment domain file")->required()->check(CLI::ExistingFile);
  experiment->add_option("--responses", responses, "Directory of <participant>.jsonl streams")->required()->check(CLI::ExistingDirectory);
  experiment->add_option("--report", report_out, "Report output (TSV; JSON written alongside)")->required();
  experiment->add_option("--config", exp_config, "Feature configuration")->capture_default_str()->check(CLI::ExistingFile);
  experiment->add_option("--feature", exp_feature, "Analyzed feature (default: first in config)");
  experiment->add_option("--archives", archives_out, "Write one session archive per participant here");

  std::string report_archives, report_feature, report_file;
  auto* report = app.add_subcommand("report", "Build a report from stored session archives");
  report->add_option("--archives", report_archives, "Directory of archives")->required()->check(CLI::ExistingDirectory);
  report->add_option("--feature", report_feature, "Feature id")->required();
  report->add_option("--out", report_file, "Report output (TSV; JSON written alongside)")->required();

  CohortSpec spec;
  std::string cohort_out, cohort_config = "data/features.json", cohort_feature;
  auto* cohort = app.add_subcommand("cohort", "Generate a synthetic participant cohort");
  cohort->add_option("--out", cohort_out, "Output directory")->required();
  cohort->add_option("--config", cohort_config, "Feature configuration")->capture_default_str()->check(CLI::ExistingFile);
  cohort->add_option("--feature", cohort_feature, "Feature id (default: first in config)");
  cohort->add_option("--participants", spec.participants, "Cohort size")->capture_default_str();
  cohort->add_option("--proportions", spec.proportions, "Group proportions")->capture_default_str();
  cohort->add_option("--degrees", spec.degrees, "Designed convergence degree per group")->capture_default_str();
  cohort->add_option("--noise", spec.noise, "Jitter std as fraction of range width")->capture_default_str();
  cohort->add_option("--seed", spec.seed, "RNG seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return cmd_serve(serve_configs, serve_domains, host, port, static_dir);
    if (*replay) return cmd_replay(archive_path, replay_config);
    if (*experiment) return cmd_experiment(exp_domain, responses, report_out, exp_config, exp_feature, archives_out);
    if (*report) return cmd_report(report_archives, report_feature, report_file);
    if (*cohort) return cmd_cohort(cohort_out, cohort_config, cohort_feature, spec);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
