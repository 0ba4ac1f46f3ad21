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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails or exceeds its time budget.

#include "cohort_helpers.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <phonconv/analysis.hpp>
#include <phonconv/classify.hpp>
#include <phonconv/convergence.hpp>
#include <phonconv/dialogue.hpp>
#include <phonconv/experiment.hpp>
#include <phonconv/session.hpp>

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace phonconv;
using namespace phonconv::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

Outcome fail(std::string why) { return {false, std::move(why)}; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

Outcome kappa_oracle_equivalence() {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto pair = random_pair(rng, {"[E:]", "[e:]"}, 1, 20);
    double k = 0.0;
    try {
      k = cohen_kappa(pair);
    } catch (const Error& e) {
      return fail("pair " + std::to_string(i) + ": " + e.what());
    }
    const double diff = std::abs(k - kappa_oracle(pair));
    worst = std::max(worst, diff);
    if (!(diff <= 1e-12)) return fail("pair " + std::to_string(i) + " differs by " + fmt(diff));
  }
  return {true, "1000 pairs, max |diff| = " + fmt(worst, 3)};
}

Outcome pool_limit_invariants() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t cases = 0, violations = 0;
  std::string first;
  auto violation = [&](const std::string& what) {
    if (violations++ == 0) first = what;
  };
  for (int trial = 0; trial < 400 && cases < 12000; ++trial) {
    auto def = ae_feature();
    def.history_size = 1 + static_cast<std::size_t>(unit(rng) * 12);
    def.update_frequency = 1 + static_cast<std::size_t>(unit(rng) * 4);
    def.convergence_rate = unit(rng);
    def.convergence_limit = unit(rng);
    def.calculation_method = static_cast<CalculationMethod>(trial % 3);
    def.initial_value = {200 + 800 * unit(rng), 800 + 2000 * unit(rng)};
    ConvergenceModel model;
    model.register_feature(def);
    std::deque<Values> oracle;
    std::size_t accepted = 0;
    for (int i = 0; i < 30; ++i, ++cases) {
      const Values v{100 + 1000 * unit(rng), 600 + 2400 * unit(rng)};
      const auto before = model.state("ae");
      const auto r = model.ingest_exemplar("ae", user_exemplar("ae", v, i));
      if (r == IngestResult::accepted) {
        ++accepted;
        oracle.push_back(v);
        if (oracle.size() > def.history_size) oracle.pop_front();
      } else if (!(model.state("ae") == before)) {
        violation("rejected ingest mutated state");
      }
      model.maybe_update_state("ae");
      const auto& st = model.state("ae");
      if (st.pool.size() != std::min(accepted, def.history_size)) violation("pool size");
      for (std::size_t k = 0; k < oracle.size() && k < st.pool.size(); ++k)
        if (st.pool[k].values != oracle[k]) violation("eviction order");
      for (std::size_t d = 0; d < 2; ++d) {
        const double cap = def.convergence_limit * def.dimensions[d].width() + 1e-12;
        if (std::abs(st.current_value[d] - def.initial_value[d]) > cap) violation("displacement bound");
        if (!def.dimensions[d].contains(st.current_value[d])) violation("range safety");
      }
    }
  }
  if (cases < 10000) return fail("only " + std::to_string(cases) + " cases");
  if (violations) return fail(std::to_string(violations) + " violations, first: " + first);
  return {true, std::to_string(cases) + " cases, 0 violations"};
}

Outcome geometric_convergence() {
  auto def = ae_feature();
  def.convergence_rate = 0.3;
  def.convergence_limit = 1.0;
  def.update_frequency = 1;
  ConvergenceModel model;
  model.register_feature(def);
  const Values v{400, 2200};
  for (int k = 0; k < 20; ++k) {
    model.ingest_exemplar("ae", user_exemplar("ae", v, k));
    if (!model.maybe_update_state("ae")) return fail("no update at step " + std::to_string(k + 1));
  }
  double worst = 0.0;
  for (std::size_t d = 0; d < 2; ++d) {
    const double expected = std::abs(def.initial_value[d] - v[d]) * std::pow(0.7, 20);
    const double got = std::abs(model.state("ae").current_value[d] - v[d]);
    const double rel = std::abs(got - expected) / expected;
    worst = std::max(worst, rel);
    if (!(rel <= 1e-9)) return fail("dimension " + std::to_string(d) + " relative error " + fmt(rel));
  }
  return {true, "max relative error " + fmt(worst, 3)};
}

Outcome variant_switch() {
  auto cfg = nlohmann::json::parse(read_file(data_path("features.json")));
  auto& ae = cfg["features"][0];
  ae["convergence_rate"] = 0.2;
  ae["convergence_limit"] = 1.0;
  ae["update_frequency"] = 1;
  ae["initial_value"] = ae["variants"][0]["prototype"];
  ae["classifier"] = "nearest_prototype";
  ae.erase("training_file");
  const Values target = ae["variants"][1]["prototype"].get<Values>();
  const std::string domain = R"(<domain id="fig3" initial="chat">
    <state id="chat"><prompt>Das <word feature="ae">Gerät</word>?</prompt><trigger pattern="*" target="chat"/></state>
  </domain>)";
  Session s("fig3", make_resources(domain, cfg.dump()));

  const int k_star = static_cast<int>(std::ceil(std::log(0.5) / std::log(1.0 - 0.2)));
  std::vector<int> switch_turns;
  std::vector<std::string> labels;
  for (int k = 1; k <= 12; ++k) {
    UtteranceRecord rec;
    rec.transcript = "Gerät";
    rec.segments = {{"e:", 0, 100, {{"ae", target}}}};
    const auto before = s.event_count();
    const auto r = s.post_turn(UserInput::from_record(rec));
    labels.push_back(r.system_turn.predictions.at("ae").label);
    for (const auto& e : s.events_since(before))
      if (e.kind == EventKind::variant_switch) switch_turns.push_back(k);
  }
  if (switch_turns.size() != 1) return fail(std::to_string(switch_turns.size()) + " variant_switch events");
  if (switch_turns[0] != k_star)
    return fail("switch at update " + std::to_string(switch_turns[0]) + ", expected " + std::to_string(k_star));
  if (labels.front() != "[E:]" || labels.back() != "[e:]") return fail("unexpected labels");
  return {true, "single switch [E:] -> [e:] at k = " + std::to_string(k_star)};
}

Outcome grouping_boundaries() {
  const std::vector<double> in{0.0, 0.10, 0.1001, 0.8999, 0.90, 1.0};
  const std::vector<BehaviorGroup> want{BehaviorGroup::Low, BehaviorGroup::Low,  BehaviorGroup::Mid,
                                        BehaviorGroup::Mid, BehaviorGroup::High, BehaviorGroup::High};
  std::string got;
  bool ok = true;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto g = classify_behavior(in[i]);
    ok = ok && g == want[i];
    got += std::string(i ? "," : "") + to_string(g);
  }
  return {ok, got};
}

Outcome synthetic_cohort() {
  const CohortSpec spec;  // 30 participants, 23/50/27 %, degrees .05/.5/.95, noise .02
  const auto out = run_cohort(spec);
  const auto& r = out.report;
  const auto design = apportion(spec.participants, spec.proportions);
  const char* names[] = {"Low", "Mid", "High"};
  std::ostringstream d;
  bool ok = true;
  for (int g = 0; g < 3; ++g) {
    const auto& row = r.row(names[g]);
    const long diff = static_cast<long>(row.sessions) - static_cast<long>(design[g]);
    ok = ok && std::labs(diff) <= 1;
    d << names[g] << " " << row.sessions << "/" << design[g] << " ";
  }
  const double high = r.row("High").kappa, low = r.row("Low").kappa;
  d << "kappa High " << fmt(high) << " Low " << fmt(low);
  ok = ok && high > 0.6 && low < 0.0;
  return {ok, d.str()};
}

Outcome replay_determinism() {
  const auto res = make_resources(read_file(data_path("demo_domain.xml")), read_file(data_path("features.json")), {},
                                  PHONCONV_DATA_DIR);
  Session s("replay", res);
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> f1(180, 1020), f2(780, 2820), cog(1000, 8000), dur(20, 250), schwa(0, 100);
  for (int t = 0; t < 20; ++t) {
    if (t % 3 == 0) {
      s.post_turn(UserInput::from_text(t == 0 ? "ja" : "erzähl weiter"));
      continue;
    }
    UtteranceRecord rec;
    rec.transcript = "Gerät süchtig besuchen";
    rec.segments = {{"E:", 0, 90, {{"ae", {f1(rng), f2(rng)}}}},
                    {"C", 400, 470, {{"ig", {cog(rng), dur(rng)}}}},
                    {"n", 700, 760, {{"en", {schwa(rng)}}}}};
    s.post_turn(UserInput::from_record(rec));
  }
  const auto archive = nlohmann::json::parse(s.archive().dump());
  const auto r = replay_session(archive);
  if (!r.identical)
    return fail("first mismatch at event " + (r.first_mismatch ? std::to_string(*r.first_mismatch) : "?"));
  return {true, std::to_string(s.turns().size() / 2) + " user turns, " + std::to_string(s.event_count()) +
                    " events identical"};
}

Outcome domain_fixtures() {
  const fs::path root = fs::path(PHONCONV_SOURCE_TESTS) / "fixtures" / "domains";
  std::size_t valid = 0, invalid = 0;
  for (const auto& e : fs::directory_iterator(root / "valid")) {
    try {
      parse_domain(read_file(e.path().string()));
      ++valid;
    } catch (const Error& err) {
      return fail(e.path().filename().string() + ": " + err.what());
    }
  }
  for (const auto& e : fs::directory_iterator(root / "invalid")) {
    const std::string name = e.path().filename().string();
    const Errc want = name.rfind("syntax", 0) == 0   ? Errc::syntax_error
                      : name.rfind("schema", 0) == 0 ? Errc::schema_error
                                                     : Errc::dangling_reference;
    try {
      parse_domain(read_file(e.path().string()));
      return fail(name + " parsed");
    } catch (const SyntaxError& err) {
      if (want != Errc::syntax_error) return fail(name + ": got SyntaxError");
    } catch (const Error& err) {
      if (err.code() != want) return fail(name + ": got " + std::string(to_string(err.code())));
    }
    ++invalid;
  }
  if (valid != 10 || invalid != 10)
    return fail(std::to_string(valid) + " valid, " + std::to_string(invalid) + " invalid fixtures");
  return {true, "10 valid parsed, 10 invalid with expected diagnostics"};
}

Outcome classifier_oracle() {
  const auto def = ae_feature();
  const auto proto = train_classifier(def, prototype_points(def), ClassifierKind::nearest_prototype);
  std::array<Values, 2> c;
  for (int k = 0; k < 2; ++k)
    for (std::size_t d = 0; d < 2; ++d)
      c[k].push_back((def.variants[k].prototype[d] - def.dimensions[d].min) / def.dimensions[d].width());
  std::mt19937_64 rng(1000);
  std::uniform_real_distribution<double> f1(200, 1000), f2(800, 2800);
  for (int i = 0; i < 1000; ++i) {
    const Values x{f1(rng), f2(rng)};
    const Values s{(x[0] - 200) / 800, (x[1] - 800) / 2000};
    double dist[2];
    for (int k = 0; k < 2; ++k) dist[k] = std::hypot(s[0] - c[k][0], s[1] - c[k][1]);
    const std::string want = dist[0] < dist[1]   ? def.variants[0].label
                             : dist[1] < dist[0] ? def.variants[1].label
                                                 : def.canonical_variant;
    if (proto.predict(x).label != want) return fail("point " + std::to_string(i) + " disagrees");
  }

  // 40-point separable fixture: 20 per class around scaled 0.75 / 0.25.
  std::vector<LabeledPoint> pts;
  std::uniform_real_distribution<double> jitter(-0.12, 0.12);
  for (int i = 0; i < 20; ++i)
    for (int k = 0; k < 2; ++k) {
      const double centre = k == 0 ? 0.75 : 0.25;
      pts.push_back({{200 + (centre + jitter(rng)) * 800, 800 + (centre + jitter(rng)) * 2000}, def.variants[k].label});
    }
  const auto svm = train_classifier(def, pts, ClassifierKind::max_margin_linear);
  std::size_t errors = 0;
  for (const auto& p : pts) errors += svm.predict(p.values).label != p.label;
  if (errors) return fail(std::to_string(errors) + " training errors on the 40-point fixture");
  return {true, "1000/1000 oracle agreement, 0/40 SVM training errors"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"kappa oracle equivalence", 5.0, kappa_oracle_equivalence},
      {"pool/limit invariants", 30.0, pool_limit_invariants},
      {"geometric convergence", 1.0, geometric_convergence},
      {"variant-switch reproduction", 1.0, variant_switch},
      {"grouping boundaries", 1.0, grouping_boundaries},
      {"end-to-end synthetic cohort", 60.0, synthetic_cohort},
      {"replay determinism", 5.0, replay_determinism},
      {"domain parser fixtures", 1.0, domain_fixtures},
      {"classifier oracle", 5.0, classifier_oracle},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.pass && secs > c.budget_s) {
      o.pass = false;
      o.detail += " (over time budget)";
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(30) << c.name << std::right
              << std::fixed << std::setprecision(3) << std::setw(8) << secs << " s / " << std::setprecision(0)
              << c.budget_s << " s  " << o.detail << "\n";
    std::cout.unsetf(std::ios::fixed);
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed\n"
                       : "acceptance: all criteria passed\n");
  return failed ? 1 : 0;
}
