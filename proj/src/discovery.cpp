#include "phenokg/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace phenokg {

namespace {

[[noreturn]] void fail(const std::string& why) { throw Error(ErrorKind::Parse, "rubric: " + why); }

}  // namespace

ScoringRubric ScoringRubric::from_json(const json& j) {
  if (!j.is_object()) fail("expected an object");
  for (const auto& [k, _] : j.items()) {
    if (k != "disease_name" && k != "disease_context" && k != "criteria" && k != "scale_note")
      fail("unexpected field '" + k + "'");
  }
  auto str = [&](const char* field) {
    if (!j.contains(field) || !j[field].is_string()) fail(std::string("missing string field '") + field + "'");
    return j[field].get<std::string>();
  };
  ScoringRubric r;
  r.disease_name = str("disease_name");
  r.disease_context = str("disease_context");
  r.scale_note = j.contains("scale_note") ? str("scale_note") : "";
  if (!j.contains("criteria") || !j["criteria"].is_array()) fail("missing array field 'criteria'");
  for (const auto& c : j["criteria"]) {
    if (!c.is_object() || !c.contains("description") || !c["description"].is_string())
      fail("each criterion needs a string 'description'");
    RubricCriterion rc{c["description"].get<std::string>(), 1.0};
    if (c.contains("weight")) {
      if (!c["weight"].is_number()) fail("criterion weight must be a number");
      rc.weight = c["weight"].get<double>();
    }
    r.criteria.push_back(std::move(rc));
  }
  return r;
}

ScoringRubric ScoringRubric::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  ScoringRubric r = from_json(j);
  validate(r);
  return r;
}

json ScoringRubric::to_json() const {
  json crit = json::array();
  for (const auto& c : criteria) crit.push_back({{"description", c.description}, {"weight", c.weight}});
  return json{{"disease_name", disease_name},
              {"disease_context", disease_context},
              {"criteria", crit},
              {"scale_note", scale_note}};
}

void validate(const ScoringRubric& r) {
  std::vector<std::string> problems;
  if (trim(r.disease_name).empty()) problems.push_back("disease_name is empty");
  if (trim(r.disease_context).empty()) problems.push_back("disease_context is empty");
  if (r.criteria.empty()) problems.push_back("criteria is empty");
  for (std::size_t i = 0; i < r.criteria.size(); ++i) {
    if (trim(r.criteria[i].description).empty())
      problems.push_back("criteria[" + std::to_string(i) + "] has an empty description");
    if (!std::isfinite(r.criteria[i].weight) || r.criteria[i].weight <= 0)
      problems.push_back("criteria[" + std::to_string(i) + "] weight must be positive");
  }
  if (problems.empty()) return;
  std::string msg = "invalid rubric:";
  for (const auto& p : problems) msg += "\n  - " + p;
  throw Error(ErrorKind::Validation, msg);
}

std::string render_rubric(const ScoringRubric& r) {
  std::string out = "DISEASE: " + r.disease_name + "\n\n" + std::string(trim(r.disease_context)) + "\n\nCRITERIA (weight):\n";
  for (const auto& c : r.criteria) out += "- " + c.description + " (" + format_fixed(c.weight, 1) + ")\n";
  if (!trim(r.scale_note).empty()) out += "\nSCALE: " + std::string(trim(r.scale_note)) + "\n";
  return out;
}

ChatRequest build_score_prompt(const ScoringRubric& rubric, const std::string& patient_key,
                               const std::string& record, const PromptTemplates& templates) {
  ChatRequest req;
  req.system = fill_template(templates.score_system, {{"rubric", render_rubric(rubric)}});
  req.user = fill_template(templates.user, {{"doc_key", patient_key}, {"document", record}});
  req.request_tag = "score:" + patient_key;
  return req;
}

ChatRequest build_score_retry_prompt(const ChatRequest& first, const std::string& problem) {
  ChatRequest req = first;
  req.user += "\nYour previous reply was rejected (" + problem +
              "). Answer again with only the JSON object: an integer score from 0 to 9 and a rationale.\n";
  req.request_tag = first.request_tag + ":retry";
  return req;
}

namespace {

std::optional<LikelihoodScore> parse_score(const std::string& key, const std::string& text, std::string& problem) {
  try {
    auto out = std::get<ScoreOutput>(parse_model_output(text, OutputSchema::Score));
    return LikelihoodScore{key, out.score, out.rationale};
  } catch (const OutputError& e) {
    problem = e.what();
    return std::nullopt;
  }
}

void note(AuditLog* audit, const std::string& key, int round, const char* kind, const std::string& detail) {
  if (audit) audit->record({key, round, kind, detail});
}

}  // namespace

LikelihoodScore score_patient(const std::string& patient_key, const std::string& record,
                              const ScoringRubric& rubric, ChatBackend& backend, AuditLog* audit) {
  validate(rubric);
  ChatRequest req = build_score_prompt(rubric, patient_key, record);
  std::string problem;
  for (int round = 0; round < 2; ++round) {
    ChatResponse resp;
    try {
      resp = backend.complete(req);
    } catch (const Error& e) {
      note(audit, patient_key, round, "backend_error", e.what());
      throw;
    }
    if (auto s = parse_score(patient_key, resp.text, problem)) return *s;
    note(audit, patient_key, round, round == 0 ? "score_retry" : "scoring_error", problem);
    req = build_score_retry_prompt(req, problem);
  }
  throw Error(ErrorKind::Scoring, "could not score patient " + patient_key + ": " + problem);
}

std::set<std::string> candidate_cohort(const Graph& graph, const std::set<std::string>& keywords,
                                       const std::set<std::string>& generic_icd) {
  if (keywords.empty() && generic_icd.empty())
    throw Error(ErrorKind::Domain, "candidate_cohort needs keywords or generic ICD codes");
  std::set<std::string> out;
  for (const auto& k : keywords) {
    for (const auto& [patient, _] : keyword_search(graph, k)) out.insert(patient);
  }
  if (!generic_icd.empty()) {
    auto icd = cohort_by_icd(graph, generic_icd, CodeMatch::Any);
    out.insert(icd.begin(), icd.end());
  }
  return out;
}

void validate(const FunnelConfig& c) {
  std::vector<std::string> problems;
  if (c.threshold < 0 || c.threshold > 9) problems.push_back("threshold must be in [0, 9]");
  if (c.keywords.empty() && c.generic_icd.empty()) problems.push_back("keywords and generic_icd are both empty");
  if (c.allowed_terms.empty()) problems.push_back("allowed_terms is empty");
  if (!std::isfinite(c.high_confidence) || c.high_confidence < 0 || c.high_confidence > 1)
    problems.push_back("high_confidence must be in [0, 1]");
  if (c.max_in_flight < 1) problems.push_back("max_in_flight must be >= 1");
  if (problems.empty()) return;
  std::string msg = "invalid funnel config:";
  for (const auto& p : problems) msg += "\n  - " + p;
  throw Error(ErrorKind::Domain, msg);
}

FunnelReport run_funnel(const Graph& graph, const Ontology& ontology, const ScoringRubric& rubric,
                        const FunnelConfig& config, ChatBackend& backend, AuditLog* audit) {
  validate(config);
  validate(rubric);
  validate(config.glean);
  FunnelReport report;

  const auto candidates = candidate_cohort(graph, config.keywords, config.generic_icd);
  report.stage_counts.emplace_back("candidates", candidates.size());

  std::vector<std::string> keys(candidates.begin(), candidates.end());
  std::map<std::string, std::string> records;
  std::vector<ChatRequest> first;
  for (const auto& k : keys) {
    records[k] = render_patient_record(graph, k);
    first.push_back(build_score_prompt(rubric, k, records[k], config.templates));
  }

  std::map<std::string, LikelihoodScore> scores;
  std::vector<std::string> retry_keys;
  std::vector<ChatRequest> retry;
  auto replies = complete_batch(backend, first, config.max_in_flight);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!replies[i].ok()) {
      note(audit, keys[i], 0, "backend_error", replies[i].error->what());
      report.failed.push_back(keys[i]);
      continue;
    }
    std::string problem;
    if (auto s = parse_score(keys[i], replies[i].response->text, problem)) {
      scores.emplace(keys[i], *s);
    } else {
      note(audit, keys[i], 0, "score_retry", problem);
      retry_keys.push_back(keys[i]);
      retry.push_back(build_score_retry_prompt(first[i], problem));
    }
  }
  auto second = complete_batch(backend, retry, config.max_in_flight);
  for (std::size_t i = 0; i < retry_keys.size(); ++i) {
    if (!second[i].ok()) {
      note(audit, retry_keys[i], 1, "backend_error", second[i].error->what());
      report.failed.push_back(retry_keys[i]);
      continue;
    }
    std::string problem;
    if (auto s = parse_score(retry_keys[i], second[i].response->text, problem)) {
      scores.emplace(retry_keys[i], *s);
    } else {
      note(audit, retry_keys[i], 1, "scoring_error", problem);
      report.failed.push_back(retry_keys[i]);
    }
  }
  for (const auto& [_, s] : scores) report.scores.push_back(s);
  report.stage_counts.emplace_back("scored", scores.size());

  std::vector<Document> filtered;
  for (const auto& [k, s] : scores) {
    if (s.score >= config.threshold) filtered.push_back(Document{k, records[k]});
  }
  report.stage_counts.emplace_back("filtered", filtered.size());

  TaskSpec spec = patient_hpo_spec(ontology, config.allowed_terms, rubric.disease_context);
  spec.templates = config.templates;
  auto outcomes = extract_batch(spec, filtered, backend, FewShotPolicy{}, config.glean, config.max_in_flight, audit);

  std::vector<Finalist> phenotyped;
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    const std::string& key = filtered[i].doc_id;
    if (!outcomes[i].ok()) {
      report.failed.push_back(key);
      continue;
    }
    const auto& ext = std::get<HpoExtraction>(*outcomes[i].result);
    Finalist f;
    f.patient = key;
    f.score = scores.at(key).score;
    f.rationale = scores.at(key).rationale;
    f.assertions = ext.assertions;
    for (const auto& a : ext.assertions)
      if (a.confidence >= config.high_confidence) ++f.high_confidence_count;
    f.top_assertions = ext.assertions;
    std::stable_sort(f.top_assertions.begin(), f.top_assertions.end(),
                     [](const HpoAssertion& a, const HpoAssertion& b) {
                       if (a.confidence != b.confidence) return a.confidence > b.confidence;
                       return a.term < b.term;
                     });
    if (f.top_assertions.size() > config.top_assertions)
      f.top_assertions.erase(f.top_assertions.begin() + static_cast<std::ptrdiff_t>(config.top_assertions),
                             f.top_assertions.end());
    phenotyped.push_back(std::move(f));
  }
  report.stage_counts.emplace_back("phenotyped", phenotyped.size());

  for (auto& f : phenotyped) {
    if (config.min_assertions && f.high_confidence_count < *config.min_assertions) continue;
    report.finalists.push_back(std::move(f));
  }
  std::sort(report.finalists.begin(), report.finalists.end(), [](const Finalist& a, const Finalist& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.high_confidence_count != b.high_confidence_count) return a.high_confidence_count > b.high_confidence_count;
    return a.patient < b.patient;
  });
  report.stage_counts.emplace_back("finalists", report.finalists.size());
  std::sort(report.failed.begin(), report.failed.end());
  return report;
}

namespace {

json assertion_json(const HpoAssertion& a) {
  return json{{"term", a.term.str()}, {"confidence", a.confidence}, {"reasoning", a.reasoning}};
}

}  // namespace

json to_json(const FunnelReport& report) {
  json stages = json::array();
  for (const auto& [name, count] : report.stage_counts) stages.push_back({{"stage", name}, {"count", count}});
  json finalists = json::array();
  for (std::size_t i = 0; i < report.finalists.size(); ++i) {
    const auto& f = report.finalists[i];
    json top = json::array();
    for (const auto& a : f.top_assertions) top.push_back(assertion_json(a));
    json all = json::array();
    for (const auto& a : f.assertions) all.push_back(assertion_json(a));
    finalists.push_back({{"rank", i + 1},
                         {"patient", f.patient},
                         {"score", f.score},
                         {"rationale", f.rationale},
                         {"high_confidence_count", f.high_confidence_count},
                         {"top_assertions", top},
                         {"assertions", all}});
  }
  json scores = json::array();
  for (const auto& s : report.scores)
    scores.push_back({{"patient", s.patient}, {"score", s.score}, {"rationale", s.rationale}});
  return json{{"stage_counts", stages}, {"finalists", finalists}, {"scores", scores}, {"failed", report.failed}};
}

std::string to_markdown(const FunnelReport& report, const ScoringRubric& rubric, const Ontology& ontology) {
  std::string out = "# Discovery funnel: " + rubric.disease_name + "\n\n| stage | patients |\n|---|---:|\n";
  for (const auto& [name, count] : report.stage_counts) out += "| " + name + " | " + std::to_string(count) + " |\n";
  out += "\n## Finalists\n\n";
  if (report.finalists.empty()) {
    out += "None.\n";
  } else {
    out += "| rank | patient | score | high-confidence terms | top terms |\n|---:|---|---:|---:|---|\n";
    for (std::size_t i = 0; i < report.finalists.size(); ++i) {
      const auto& f = report.finalists[i];
      std::string terms;
      for (const auto& a : f.top_assertions) {
        const auto* t = ontology.find(a.term);
        terms += (terms.empty() ? "" : "; ") + (t ? t->name : a.term.str()) + " (" + format_fixed(a.confidence, 2) + ")";
      }
      out += "| " + std::to_string(i + 1) + " | " + f.patient + " | " + std::to_string(f.score) + " | " +
             std::to_string(f.high_confidence_count) + " | " + terms + " |\n";
    }
  }
  if (!report.failed.empty()) {
    out += "\nSkipped after errors: ";
    for (std::size_t i = 0; i < report.failed.size(); ++i) out += (i ? ", " : "") + report.failed[i];
    out += "\n";
  }
  return out;
}

}  // namespace phenokg
