#include "phenokg/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <unordered_map>

namespace phenokg {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::Ner: return "ner";
    case Task::Hpo: return "hpo";
    case Task::MultiLabel: return "multilabel";
  }
  return "?";
}

std::optional<Task> parse_task(std::string_view s) {
  std::string k = to_lower_ascii(trim(s));
  if (k == "ner") return Task::Ner;
  if (k == "hpo") return Task::Hpo;
  if (k == "multilabel") return Task::MultiLabel;
  return std::nullopt;
}

std::string_view to_string(FewShotMode m) {
  switch (m) {
    case FewShotMode::ZeroShot: return "zero-shot";
    case FewShotMode::StaticFewShot: return "static-fewshot";
    case FewShotMode::DynamicFewShot: return "dynamic-fewshot";
  }
  return "?";
}

std::optional<FewShotMode> parse_few_shot_mode(std::string_view s) {
  std::string k = to_lower_ascii(trim(s));
  if (k == "zero-shot" || k == "zeroshot") return FewShotMode::ZeroShot;
  if (k == "static-fewshot" || k == "fewshot" || k == "static") return FewShotMode::StaticFewShot;
  if (k == "dynamic-fewshot" || k == "dynamic") return FewShotMode::DynamicFewShot;
  return std::nullopt;
}

// ---- results ----

std::set<TermId> HpoExtraction::terms() const {
  std::set<TermId> out;
  for (const auto& a : assertions) out.insert(a.term);
  return out;
}

std::string result_key(const TaskResult& r) {
  return std::visit(
      [](const auto& v) -> std::string {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, HpoExtraction>) return v.key;
        else return v.doc_id;
      },
      r);
}

Task result_task(const TaskResult& r) {
  switch (r.index()) {
    case 0: return Task::Ner;
    case 1: return Task::Hpo;
    default: return Task::MultiLabel;
  }
}

std::size_t result_size(const TaskResult& r) {
  if (auto* n = std::get_if<NerResult>(&r)) return n->mentions.size();
  if (auto* h = std::get_if<HpoExtraction>(&r)) return h->assertions.size();
  return std::get<MultiLabelResult>(r).labels.size();
}

TaskResult empty_result(Task task, std::string key) {
  switch (task) {
    case Task::Ner: return NerResult{std::move(key), {}};
    case Task::Hpo: return HpoExtraction{std::move(key), {}};
    case Task::MultiLabel: return MultiLabelResult{std::move(key), {}};
  }
  throw Error(ErrorKind::Domain, "unknown task");
}

TaskResult gold_result(const SpanDocument& gold) {
  NerResult r{gold.doc.doc_id, {}};
  for (const auto& s : gold.spans) r.mentions.insert(NerMention{normalize_text(s.surface), s.entity_type});
  return r;
}

TaskResult gold_result(const HpoGoldDoc& gold) {
  HpoExtraction r{gold.doc.doc_id, {}};
  for (const auto& t : gold.terms) r.assertions.push_back(HpoAssertion{t, 1.0, "annotated"});
  return r;
}

TaskResult gold_result(const MultiLabelDoc& gold) { return MultiLabelResult{gold.doc.doc_id, gold.labels}; }

json render_output(const TaskResult& r) {
  json items = json::array();
  if (auto* n = std::get_if<NerResult>(&r)) {
    for (const auto& m : n->mentions) items.push_back({{"text", m.surface}, {"type", to_string(m.type)}});
  } else if (auto* h = std::get_if<HpoExtraction>(&r)) {
    for (const auto& a : h->assertions)
      items.push_back({{"category", a.term.str()}, {"confidence", a.confidence}, {"reasoning", a.reasoning}});
  } else {
    for (const auto& l : std::get<MultiLabelResult>(r).labels) items.push_back(l);
  }
  return json{{result_key(r), items}};
}

namespace {

// Keeps one assertion per term: highest confidence, first seen on ties.
void upsert_max(std::map<TermId, HpoAssertion>& by_term, const HpoAssertion& a) {
  auto [it, inserted] = by_term.try_emplace(a.term, a);
  if (!inserted && a.confidence > it->second.confidence) it->second = a;
}

std::vector<HpoAssertion> flatten(const std::map<TermId, HpoAssertion>& by_term) {
  std::vector<HpoAssertion> out;
  out.reserve(by_term.size());
  for (const auto& [_, a] : by_term) out.push_back(a);
  return out;
}

void require_same_key(const std::string& a, const std::string& b) {
  if (a != b) throw Error(ErrorKind::Domain, "cannot merge results for different keys '" + a + "' and '" + b + "'");
}

}  // namespace

NerResult merge_gleaned(const NerResult& prev, const NerResult& next) {
  require_same_key(prev.doc_id, next.doc_id);
  NerResult out = prev;
  out.mentions.insert(next.mentions.begin(), next.mentions.end());
  return out;
}

HpoExtraction merge_gleaned(const HpoExtraction& prev, const HpoExtraction& next) {
  require_same_key(prev.key, next.key);
  std::map<TermId, HpoAssertion> by_term;
  for (const auto& a : prev.assertions) upsert_max(by_term, a);
  for (const auto& a : next.assertions) upsert_max(by_term, a);
  return HpoExtraction{prev.key, flatten(by_term)};
}

MultiLabelResult merge_gleaned(const MultiLabelResult& prev, const MultiLabelResult& next) {
  require_same_key(prev.doc_id, next.doc_id);
  MultiLabelResult out = prev;
  out.labels.insert(next.labels.begin(), next.labels.end());
  return out;
}

TaskResult merge_gleaned(const TaskResult& prev, const TaskResult& next) {
  if (prev.index() != next.index()) throw Error(ErrorKind::Domain, "cannot merge results of different tasks");
  return std::visit(
      [&](const auto& p) -> TaskResult {
        using T = std::decay_t<decltype(p)>;
        return merge_gleaned(p, std::get<T>(next));
      },
      prev);
}

// ---- model output parsing ----

namespace {

// Index of the brace closing the object that opens at `open`, or npos.
std::size_t matching_brace(std::string_view t, std::size_t open) {
  int depth = 0;
  bool in_str = false;
  bool esc = false;
  for (std::size_t i = open; i < t.size(); ++i) {
    char c = t[i];
    if (in_str) {
      if (esc) esc = false;
      else if (c == '\\') esc = true;
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i;
  }
  return std::string_view::npos;
}

[[noreturn]] void parse_fail(std::string_view raw, const std::string& why) {
  throw OutputError(ErrorKind::Parse, "model output is not a single JSON object: " + why, std::string(raw));
}

json parse_object_or_fail(std::string_view raw, std::string_view text, const std::string& context) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    parse_fail(raw, context + ": " + e.what());
  }
  if (!j.is_object()) parse_fail(raw, context + ": top-level value is not an object");
  return j;
}

}  // namespace

json extract_json_object(std::string_view raw) {
  const std::string_view t = trim(raw);
  if (t.empty()) parse_fail(raw, "empty output");

  if (t.front() == '{') {
    json j = json::parse(t, nullptr, false);
    if (!j.is_discarded()) {
      if (!j.is_object()) parse_fail(raw, "top-level value is not an object");
      return j;
    }
  } else if (t.front() == '[') {
    parse_fail(raw, "top-level value is an array");
  }

  if (t.rfind("```", 0) == 0) {
    std::size_t first_nl = t.find('\n');
    if (first_nl == std::string_view::npos || t.size() < 6 || t.substr(t.size() - 3) != "```")
      parse_fail(raw, "unterminated code fence");
    std::string_view info = trim(t.substr(3, first_nl - 3));
    for (char c : info)
      if (!std::isalnum(static_cast<unsigned char>(c))) parse_fail(raw, "malformed code fence header");
    std::string_view inner = trim(t.substr(first_nl + 1, t.size() - 3 - (first_nl + 1)));
    if (inner.find("```") != std::string_view::npos) parse_fail(raw, "more than one code fence");
    return parse_object_or_fail(raw, inner, "fenced block");
  }

  const std::size_t open = t.find('{');
  if (open == std::string_view::npos) parse_fail(raw, "no object found");
  const std::size_t close = matching_brace(t, open);
  if (close == std::string_view::npos) parse_fail(raw, "unbalanced braces (truncated object?)");
  const std::string_view before = t.substr(0, open);
  const std::string_view after = t.substr(close + 1);
  if (before.find('}') != std::string_view::npos || after.find_first_of("{}") != std::string_view::npos)
    parse_fail(raw, "more than one object or stray braces");
  if (before.find("```") != std::string_view::npos || after.find("```") != std::string_view::npos)
    parse_fail(raw, "code fence mixed with prose");
  std::string_view lead = trim(before);
  if (!lead.empty() && (lead.back() == '[' || lead.back() == ',' || lead.back() == '"'))
    parse_fail(raw, "object is nested inside other JSON");
  return parse_object_or_fail(raw, t.substr(open, close - open + 1), "embedded object");
}

namespace {

[[noreturn]] void schema_fail(std::string_view raw, const std::string& field, const std::string& why) {
  throw OutputError(ErrorKind::Schema, "schema violation at '" + field + "': " + why, std::string(raw), field);
}

void check_fields(std::string_view raw, const json& obj, const std::string& where,
                  std::initializer_list<std::string_view> allowed) {
  for (const auto& [k, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      schema_fail(raw, where + "." + k, "unexpected field");
  }
  for (auto name : allowed) {
    if (!obj.contains(name)) schema_fail(raw, where + "." + std::string(name), "missing field");
  }
}

double coerce_confidence(std::string_view raw, const json& v, const std::string& field) {
  double c = 0.0;
  if (v.is_number()) {
    c = v.get<double>();
  } else if (v.is_string()) {
    const std::string s(trim(v.get<std::string>()));
    char* end = nullptr;
    c = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) schema_fail(raw, field, "not a number");
  } else {
    schema_fail(raw, field, "not a number");
  }
  if (!std::isfinite(c) || c < 0.0 || c > 1.0) schema_fail(raw, field, "outside [0,1]");
  return c;
}

const json& entry_list(std::string_view raw, const json& root, const std::string& key) {
  const json& v = root.at(key);
  if (!v.is_array()) schema_fail(raw, key, "expected an array");
  return v;
}

ParsedOutput parse_validated(std::string_view raw, const json& root, OutputSchema schema) {
  switch (schema) {
    case OutputSchema::Ner: {
      KeyedNer out;
      for (const auto& [key, _] : root.items()) {
        auto& list = out[key];
        const json& arr = entry_list(raw, root, key);
        for (std::size_t i = 0; i < arr.size(); ++i) {
          const std::string where = key + "[" + std::to_string(i) + "]";
          if (!arr[i].is_object()) schema_fail(raw, where, "expected an object");
          check_fields(raw, arr[i], where, {"text", "type"});
          if (!arr[i]["text"].is_string()) schema_fail(raw, where + ".text", "not a string");
          std::string surface = normalize_text(arr[i]["text"].get<std::string>());
          if (surface.empty()) schema_fail(raw, where + ".text", "empty mention");
          if (!arr[i]["type"].is_string()) schema_fail(raw, where + ".type", "not a string");
          auto type = parse_entity_type(arr[i]["type"].get<std::string>());
          if (!type) schema_fail(raw, where + ".type", "unknown entity type");
          list.push_back(NerMention{std::move(surface), *type});
        }
      }
      return out;
    }
    case OutputSchema::Hpo: {
      KeyedHpo out;
      for (const auto& [key, _] : root.items()) {
        auto& list = out[key];
        const json& arr = entry_list(raw, root, key);
        for (std::size_t i = 0; i < arr.size(); ++i) {
          const std::string where = key + "[" + std::to_string(i) + "]";
          if (!arr[i].is_object()) schema_fail(raw, where, "expected an object");
          check_fields(raw, arr[i], where, {"category", "confidence", "reasoning"});
          if (!arr[i]["category"].is_string()) schema_fail(raw, where + ".category", "not a string");
          if (!arr[i]["reasoning"].is_string()) schema_fail(raw, where + ".reasoning", "not a string");
          list.push_back(RawHpoAssertion{arr[i]["category"].get<std::string>(),
                                         coerce_confidence(raw, arr[i]["confidence"], where + ".confidence"),
                                         arr[i]["reasoning"].get<std::string>()});
        }
      }
      return out;
    }
    case OutputSchema::MultiLabel: {
      KeyedLabels out;
      for (const auto& [key, _] : root.items()) {
        auto& list = out[key];
        const json& arr = entry_list(raw, root, key);
        for (std::size_t i = 0; i < arr.size(); ++i) {
          if (!arr[i].is_string()) schema_fail(raw, key + "[" + std::to_string(i) + "]", "not a string");
          list.push_back(arr[i].get<std::string>());
        }
      }
      return out;
    }
    case OutputSchema::Score: {
      check_fields(raw, root, "$", {"score", "rationale"});
      const json& s = root["score"];
      if (!s.is_number()) schema_fail(raw, "$.score", "not a number");
      double v = s.get<double>();
      if (!std::isfinite(v) || v != std::floor(v)) schema_fail(raw, "$.score", "not an integer");
      if (v < 0 || v > 9) schema_fail(raw, "$.score", "outside 0-9");
      if (!root["rationale"].is_string()) schema_fail(raw, "$.rationale", "not a string");
      return ScoreOutput{static_cast<int>(v), root["rationale"].get<std::string>()};
    }
  }
  throw Error(ErrorKind::Domain, "unknown output schema");
}

}  // namespace

ParsedOutput parse_model_output(std::string_view raw, OutputSchema schema) {
  json root = extract_json_object(raw);
  try {
    return parse_validated(raw, root, schema);
  } catch (const OutputError&) {
    throw;
  } catch (const std::exception& e) {
    // nlohmann type errors on odd values land here rather than escaping
    throw OutputError(ErrorKind::Schema, std::string("schema violation: ") + e.what(), std::string(raw));
  }
}

// ---- audit ----

void AuditLog::record(AuditEntry entry) {
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(entry));
}

std::vector<AuditEntry> AuditLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t AuditLog::count(std::string_view kind) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [&](const AuditEntry& e) { return e.kind == kind; }));
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::string AuditLog::to_jsonl() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& e : entries_) {
    out += json{{"key", e.key}, {"round", e.round}, {"kind", e.kind}, {"detail", e.detail}}.dump(
               -1, ' ', false, json::error_handler_t::replace) +
           "\n";
  }
  return out;
}

// ---- prompts ----

namespace {

constexpr const char* kFormatContract =
    "RESPONSE FORMAT:\n"
    "- MUST be a single JSON object\n"
    "- NO explanatory text, notes, or comments\n"
    "- NO markdown formatting\n"
    "- NO additional fields beyond the specified format\n";

}  // namespace

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.ner_system = std::string(
                     "You annotate biomedical abstracts. Find every chemical (drugs and other substances) and "
                     "every disease mentioned in the input text.\n\n") +
                 kFormatContract +
                 "\nOutput schema, keyed by the document key given with the input:\n"
                 "{\"<DOC_KEY>\": [{\"text\": \"mention exactly as written\", \"type\": \"Chemical\" or "
                 "\"Disease\"}]}\n"
                 "{examples}";
  t.hpo_system = std::string(
                     "You map clinical findings to the Human Phenotype Ontology (HPO). Read the input and report "
                     "every phenotypic abnormality it supports, each mapped to the single best matching HPO "
                     "identifier.\n\n") +
                 kFormatContract + "{disease_context}{allowed_terms}" +
                 "\nOutput schema, keyed by the document key given with the input:\n"
                 "{\"<DOC_KEY>\": [{\"category\": \"HPO identifier such as HP:0001250\", \"confidence\": number "
                 "between 0 and 1, \"reasoning\": \"why the text supports this term\"}]}\n"
                 "{examples}";
  t.multilabel_system = std::string(
                            "You classify clinical notes. Decide which of the categories below apply to the "
                            "patient described in the note; several may apply.\n\nCategories:\n{labels}\n") +
                        kFormatContract +
                        "\nOutput schema, keyed by the document key given with the input:\n"
                        "{\"<DOC_KEY>\": [\"CATEGORY\", ...]}\n"
                        "{examples}";
  t.score_system = std::string(
                       "You screen patient records for a rare disease. Rate how likely the patient has the "
                       "disease on an integer scale from 0 (no evidence) to 9 (near certain), following the "
                       "rubric.\n\n") +
                   kFormatContract + "\n{rubric}\nOutput schema:\n{\"score\": integer 0-9, \"rationale\": \"short "
                                     "justification\"}\n";
  t.user = "Document key: {doc_key}\n\n{document}\n";
  t.glean =
      "\nAn earlier pass over this document produced the result below. Read the document again and report "
      "NEW entities that the earlier result does not contain. Use the same JSON format; repeating earlier "
      "entities is allowed.\n\nEarlier result:\n{previous_result}\n";
  return t;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  PromptTemplates t = defaults();
  auto maybe = [&](const char* name, std::string& slot) {
    auto p = dir / name;
    if (std::filesystem::exists(p)) slot = read_file(p);
  };
  maybe("ner.txt", t.ner_system);
  maybe("hpo.txt", t.hpo_system);
  maybe("multilabel.txt", t.multilabel_system);
  maybe("score.txt", t.score_system);
  maybe("user.txt", t.user);
  maybe("glean.txt", t.glean);
  return t;
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

void validate(const FewShotPolicy& p) {
  if (p.mode == FewShotMode::ZeroShot) return;
  if (p.k < 1) throw Error(ErrorKind::Domain, "few-shot k must be >= 1");
  if (!p.example_pool || p.example_pool->empty())
    throw Error(ErrorKind::Domain, std::string(to_string(p.mode)) + " needs a nonempty example pool");
  if (p.mode == FewShotMode::DynamicFewShot) {
    if (!p.index || !p.embedder) throw Error(ErrorKind::Domain, "dynamic few-shot needs an index and an embedder");
    for (const auto& ex : *p.example_pool) {
      if (!p.index->contains(ex.doc.doc_id))
        throw Error(ErrorKind::Domain, "index does not cover pool item " + ex.doc.doc_id);
    }
  }
}

std::vector<const FewShotExample*> select_examples(const Document& document, const FewShotPolicy& policy) {
  validate(policy);
  std::vector<const FewShotExample*> out;
  if (policy.mode == FewShotMode::ZeroShot) return out;
  const auto& pool = *policy.example_pool;
  auto is_self = [&](const FewShotExample& ex) {
    return ex.doc.doc_id == document.doc_id || ex.doc.text == document.text;
  };
  if (policy.mode == FewShotMode::StaticFewShot) {
    for (const auto& ex : pool) {
      if (out.size() == policy.k) break;
      if (!is_self(ex)) out.push_back(&ex);
    }
    return out;
  }
  std::unordered_map<std::string, const FewShotExample*> by_id;
  for (const auto& ex : pool) by_id.emplace(ex.doc.doc_id, &ex);
  auto query = embed(*policy.embedder, {document.text});
  auto hits = top_k(*policy.index, query.front(), policy.k, [&](const std::string& id) {
    auto it = by_id.find(id);
    return it != by_id.end() && !is_self(*it->second);
  });
  for (const auto& h : hits) out.push_back(by_id.at(h.item_id));
  return out;
}

namespace {

const std::string& system_template(const TaskSpec& spec) {
  switch (spec.task) {
    case Task::Ner: return spec.templates.ner_system;
    case Task::Hpo: return spec.templates.hpo_system;
    case Task::MultiLabel: return spec.templates.multilabel_system;
  }
  throw Error(ErrorKind::Domain, "unknown task");
}

std::string render_examples(const std::vector<const FewShotExample*>& examples) {
  if (examples.empty()) return "";
  std::string out = "\nEXAMPLES:\n";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = *examples[i];
    out += "\nExample " + std::to_string(i + 1) + "\nDocument key: " + ex.doc.doc_id + "\n\n" + ex.doc.text +
           "\nOutput:\n" + render_output(ex.gold).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
  }
  return out;
}

std::string system_text(const TaskSpec& spec, const Document& document, const FewShotPolicy& policy) {
  if (spec.task == Task::Hpo && !spec.ontology) throw Error(ErrorKind::Domain, "hpo task needs an ontology");
  std::map<std::string, std::string> values;
  values["examples"] = render_examples(select_examples(document, policy));
  values["disease_context"] =
      spec.disease_context.empty() ? "" : "\nDISEASE CONTEXT:\n" + std::string(trim(spec.disease_context)) + "\n";
  values["allowed_terms"] = spec.allowed_terms.empty() ? ""
                                                       : "\nOnly these HPO terms may be reported:\n" +
                                                             render_allowed_terms(*spec.ontology, spec.allowed_terms);
  std::string labels;
  for (const auto& l : multilabel_universe()) labels += "- " + l + "\n";
  values["labels"] = labels;
  return fill_template(system_template(spec), values);
}

std::string user_text(const TaskSpec& spec, const Document& document) {
  return fill_template(spec.templates.user, {{"doc_key", document.doc_id}, {"document", document.text}});
}

}  // namespace

std::string render_allowed_terms(const Ontology& ontology, const std::set<TermId>& allowed) {
  std::string out;
  for (const auto& id : allowed) out += id.str() + " \t " + ontology.at(id).name + "\n";
  return out;
}

ChatRequest build_prompt(const TaskSpec& spec, const Document& document, const FewShotPolicy& policy) {
  ChatRequest req;
  req.system = system_text(spec, document, policy);
  req.user = user_text(spec, document);
  req.temperature = spec.temperature;
  req.max_tokens = spec.max_tokens;
  req.request_tag = std::string(to_string(spec.task)) + ":" + document.doc_id + ":r0";
  return req;
}

ChatRequest build_glean_prompt(const TaskSpec& spec, const Document& document, const FewShotPolicy& policy,
                               const TaskResult& cumulative) {
  ChatRequest req = build_prompt(spec, document, policy);
  req.user += fill_template(
      spec.templates.glean,
      {{"previous_result", render_output(cumulative).dump(-1, ' ', false, json::error_handler_t::replace)}});
  req.request_tag = std::string(to_string(spec.task)) + ":" + document.doc_id + ":glean";
  return req;
}

// ---- extraction ----

void validate(const GleanConfig& glean) {
  if (glean.iterations < 0 || glean.iterations > GleanConfig::kMaxIterations)
    throw Error(ErrorKind::Domain, "glean iterations must be in [0, " + std::to_string(GleanConfig::kMaxIterations) +
                                       "]");
}

namespace {

OutputSchema schema_for(Task t) {
  switch (t) {
    case Task::Ner: return OutputSchema::Ner;
    case Task::Hpo: return OutputSchema::Hpo;
    case Task::MultiLabel: return OutputSchema::MultiLabel;
  }
  return OutputSchema::Hpo;
}

std::string canonical_label(std::string_view s) {
  std::string out;
  bool dot = false;
  for (char c : trim(s)) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
      dot = !out.empty();
      continue;
    }
    if (dot) out.push_back('.');
    dot = false;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

// Selects the entries attributable to `key` from a keyed reply.
template <typename List>
List pick_for_key(const std::map<std::string, List>& keyed, const std::string& key, std::string_view raw,
                  int round, AuditLog* audit) {
  if (keyed.empty()) return {};
  if (auto it = keyed.find(key); it != keyed.end()) {
    for (const auto& [k, _] : keyed) {
      if (k != key && audit) audit->record({key, round, "foreign_key", "ignored entries under '" + k + "'"});
    }
    return it->second;
  }
  if (keyed.size() == 1) {
    if (audit) audit->record({key, round, "key_mismatch", "reply keyed '" + keyed.begin()->first + "'"});
    return keyed.begin()->second;
  }
  throw OutputError(ErrorKind::Schema, "reply has no entry for key '" + key + "'", std::string(raw), key);
}

}  // namespace

TaskResult interpret_output(const TaskSpec& spec, const std::string& key, std::string_view raw, int round,
                            AuditLog* audit) {
  ParsedOutput parsed = parse_model_output(raw, schema_for(spec.task));
  switch (spec.task) {
    case Task::Ner: {
      NerResult r{key, {}};
      for (auto& m : pick_for_key(std::get<KeyedNer>(parsed), key, raw, round, audit)) r.mentions.insert(m);
      return r;
    }
    case Task::Hpo: {
      if (!spec.ontology) throw Error(ErrorKind::Domain, "hpo task needs an ontology");
      std::map<TermId, HpoAssertion> by_term;
      for (auto& a : pick_for_key(std::get<KeyedHpo>(parsed), key, raw, round, audit)) {
        auto id = TermId::try_parse(a.category);
        if (!id || !spec.ontology->contains(*id)) {
          if (audit) audit->record({key, round, "invalid_term", a.category});
          continue;
        }
        if (!spec.allowed_terms.empty() && !spec.allowed_terms.count(*id)) {
          if (audit) audit->record({key, round, "term_not_allowed", id->str()});
          continue;
        }
        upsert_max(by_term, HpoAssertion{*id, a.confidence, a.reasoning});
      }
      return HpoExtraction{key, flatten(by_term)};
    }
    case Task::MultiLabel: {
      MultiLabelResult r{key, {}};
      for (auto& l : pick_for_key(std::get<KeyedLabels>(parsed), key, raw, round, audit)) {
        std::string c = canonical_label(l);
        if (!in_multilabel_universe(c)) {
          if (audit) audit->record({key, round, "unknown_label", l});
          continue;
        }
        r.labels.insert(std::move(c));
      }
      return r;
    }
  }
  throw Error(ErrorKind::Domain, "unknown task");
}

namespace {

[[noreturn]] void rethrow_with_round(int round) {
  const std::string prefix = "round " + std::to_string(round) + ": ";
  try {
    throw;
  } catch (const BackendError& e) {
    throw BackendError(e.kind(), prefix + e.what(), e.last_status(), e.attempts());
  } catch (const OutputError& e) {
    throw OutputError(e.kind(), prefix + e.what(), e.raw(), e.field());
  } catch (const Error& e) {
    throw Error(e.kind(), prefix + e.what());
  }
}

std::string audit_kind(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Parse: return "parse_error";
    case ErrorKind::Schema: return "schema_error";
    default: return "backend_error";
  }
}

}  // namespace

std::vector<TaskResult> extract_rounds(const TaskSpec& spec, const Document& document, ChatBackend& backend,
                                       const FewShotPolicy& policy, GleanConfig glean, AuditLog* audit) {
  validate(glean);
  validate(policy);
  std::vector<TaskResult> rounds;
  for (int r = 0; r <= glean.iterations; ++r) {
    try {
      ChatRequest req = r == 0 ? build_prompt(spec, document, policy)
                               : build_glean_prompt(spec, document, policy, rounds.back());
      ChatResponse resp = backend.complete(req);
      TaskResult got = interpret_output(spec, document.doc_id, resp.text, r, audit);
      rounds.push_back(r == 0 ? std::move(got) : merge_gleaned(rounds.back(), got));
    } catch (const Error& e) {
      if (audit) audit->record({document.doc_id, r, audit_kind(e), e.what()});
      rethrow_with_round(r);
    }
  }
  return rounds;
}

TaskResult extract(const TaskSpec& spec, const Document& document, ChatBackend& backend,
                   const FewShotPolicy& policy, GleanConfig glean, AuditLog* audit) {
  return extract_rounds(spec, document, backend, policy, glean, audit).back();
}

std::vector<ExtractionOutcome> extract_batch(const TaskSpec& spec, const std::vector<Document>& documents,
                                             ChatBackend& backend, const FewShotPolicy& policy, GleanConfig glean,
                                             int max_in_flight, AuditLog* audit) {
  validate(glean);
  validate(policy);
  std::vector<ExtractionOutcome> outcomes(documents.size());
  std::vector<std::optional<TaskResult>> cumulative(documents.size());
  std::vector<std::size_t> active(documents.size());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;

  auto fail = [&](std::size_t i, int round, const Error& e) {
    if (audit) audit->record({documents[i].doc_id, round, audit_kind(e), e.what()});
    outcomes[i].error = Error(e.kind(), "round " + std::to_string(round) + ": " + e.what());
  };

  for (int r = 0; r <= glean.iterations && !active.empty(); ++r) {
    std::vector<ChatRequest> requests;
    std::vector<std::size_t> sent;
    for (auto i : active) {
      try {
        requests.push_back(r == 0 ? build_prompt(spec, documents[i], policy)
                                  : build_glean_prompt(spec, documents[i], policy, *cumulative[i]));
        sent.push_back(i);
      } catch (const Error& e) {
        fail(i, r, e);
      }
    }
    auto replies = complete_batch(backend, requests, max_in_flight);
    std::vector<std::size_t> still;
    for (std::size_t j = 0; j < sent.size(); ++j) {
      const std::size_t i = sent[j];
      if (!replies[j].ok()) {
        fail(i, r, *replies[j].error);
        continue;
      }
      try {
        TaskResult got = interpret_output(spec, documents[i].doc_id, replies[j].response->text, r, audit);
        cumulative[i] = r == 0 ? std::move(got) : merge_gleaned(*cumulative[i], got);
        still.push_back(i);
      } catch (const Error& e) {
        fail(i, r, e);
      }
    }
    active = std::move(still);
  }
  for (auto i : active) outcomes[i].result = std::move(cumulative[i]);
  return outcomes;
}

TaskSpec patient_hpo_spec(const Ontology& ontology, const std::set<TermId>& allowed_terms,
                          const std::string& disease_context) {
  if (allowed_terms.empty()) throw Error(ErrorKind::Domain, "allowed_terms must be nonempty");
  if (trim(disease_context).empty()) throw Error(ErrorKind::Domain, "disease_context must be supplied");
  for (const auto& t : allowed_terms) {
    if (!ontology.contains(t)) throw Error(ErrorKind::Validation, "allowed term " + t.str() + " not in ontology");
  }
  TaskSpec spec;
  spec.task = Task::Hpo;
  spec.ontology = &ontology;
  spec.allowed_terms = allowed_terms;
  spec.disease_context = disease_context;
  return spec;
}

HpoExtraction extract_hpo_for_patient(const std::string& patient_key, const std::string& patient_record,
                                      const std::string& disease_context, const std::set<TermId>& allowed_terms,
                                      const Ontology& ontology, ChatBackend& backend, GleanConfig glean,
                                      AuditLog* audit) {
  TaskSpec spec = patient_hpo_spec(ontology, allowed_terms, disease_context);
  TaskResult r = extract(spec, Document{patient_key, patient_record}, backend, FewShotPolicy{}, glean, audit);
  return std::get<HpoExtraction>(std::move(r));
}

}  // namespace phenokg
