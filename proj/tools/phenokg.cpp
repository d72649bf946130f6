#include <CLI11.hpp>

#include <iostream>
#include <memory>

#include "phenokg/cohortstats.hpp"
#include "phenokg/corpus.hpp"
#include "phenokg/discovery.hpp"
#include "phenokg/evaluation.hpp"
#include "phenokg/extraction.hpp"
#include "phenokg/fixtures.hpp"
#include "phenokg/kg.hpp"
#include "phenokg/llm.hpp"
#include "phenokg/ontology.hpp"
#include "phenokg/retrieval.hpp"
#include "run_dir.hpp"

namespace phenokg::cli {
namespace {

struct Common {
  std::optional<std::string> config;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file; flags override its values")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Run directory for outputs and manifest")->required();
}

void add_backend(CLI::App* cmd, BackendFlags& b) {
  cmd->add_option("--backend", b.kind, "Backend kind: http or replay");
  cmd->add_option("--endpoint", b.endpoint, "Chat-completions URL (http backend)");
  cmd->add_option("--model", b.model, "Model name sent to the endpoint");
  cmd->add_option("--cassette", b.cassette, "Cassette file (replay backend)");
  cmd->add_option("--max-in-flight", b.max_in_flight, "Concurrent requests");
  cmd->add_option("--max-attempts", b.max_attempts, "Attempts per request (http backend)");
  cmd->add_option("--timeout-ms", b.timeout_ms, "Per-request timeout (http backend)");
  cmd->add_option("--backoff-ms", b.backoff_ms, "Initial retry backoff (http backend)");
}

std::set<std::string> split_codes(const std::string& csv) {
  std::set<std::string> out;
  for (const auto& part : split(csv, ',')) {
    if (!trim(part).empty()) out.insert(std::string(trim(part)));
  }
  return out;
}

/// One term id per line, optionally followed by whitespace and a name.
std::set<TermId> load_term_list(const std::string& path, const Ontology& ontology) {
  std::set<TermId> out;
  std::size_t line_no = 0;
  for (const auto& line : split(read_file(path), '\n')) {
    ++line_no;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto end = t.find_first_of(" \t");
    auto id = TermId::try_parse(t.substr(0, end));
    if (!id) throw Error(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": malformed term id");
    if (!ontology.contains(*id))
      throw Error(ErrorKind::Validation, path + ":" + std::to_string(line_no) + ": " + id->str() + " not in ontology");
    out.insert(*id);
  }
  return out;
}

std::string term_list_text(const Ontology& ontology, const std::set<TermId>& terms) {
  return render_allowed_terms(ontology, terms);
}

std::string annotations_tsv(const std::vector<DiseaseAnnotation>& annotations) {
  std::string out = "disease_id\thpo_id\tfrequency\n";
  for (const auto& a : annotations)
    out += a.disease_id + "\t" + a.phenotype.str() + "\t" + std::string(to_string(a.expected)) + "\n";
  return out;
}

std::string grouping_tsv(const Grouping& g) {
  std::string out = "term_id\tgroup\n";
  for (const auto& [t, label] : g) out += t.str() + "\t" + label + "\n";
  return out;
}

// ---- ontology stats ----

struct OntologyOpts {
  Common common;
  std::string ontology;
  std::optional<std::string> annotations;
};

int run_ontology_stats(const OntologyOpts& o, const std::vector<std::string>& argv) {
  const json cfg = load_config(o.common.config);
  Problems problems;
  const std::string ont_path = pick(o.ontology.empty() ? std::nullopt : std::optional(o.ontology), cfg,
                                    "ontology_path", std::string(), problems);
  require_file(ont_path, "ontology", problems);
  if (o.annotations) require_file(*o.annotations, "annotations", problems);
  problems.raise_if_any();

  RunDir run(o.common.out, "ontology stats", argv);
  run.input(ont_path);
  Ontology ont = load_ontology(ont_path);
  std::size_t roots = 0, synonyms = 0, with_def = 0;
  std::set<TermId> has_child;
  for (const auto& t : ont.terms()) {
    if (t.parents.empty()) ++roots;
    synonyms += t.synonyms.size();
    if (!t.definition.empty()) ++with_def;
    for (const auto& p : t.parents) has_child.insert(p);
  }
  std::size_t max_depth = 0;
  for (const auto& t : ont.terms()) max_depth = std::max(max_depth, ont.ancestors(t.id).size() - 1);
  json stats{{"terms", ont.term_count()},
             {"roots", roots},
             {"leaves", ont.term_count() - has_child.size()},
             {"synonyms", synonyms},
             {"with_definition", with_def},
             {"max_ancestor_count", max_depth}};
  if (o.annotations) {
    run.input(*o.annotations);
    auto ann = load_annotations(*o.annotations, ont);
    json by_cat = json::object();
    for (const auto& a : ann) by_cat[std::string(to_string(a.expected))] = by_cat.value(std::string(to_string(a.expected)), 0) + 1;
    stats["annotations"] = ann.size();
    stats["annotations_by_category"] = by_cat;
  }
  run.settings() = {{"ontology_path", ont_path}};
  run.write("stats.json", stats.dump(2) + "\n");
  run.finish();
  std::cout << stats.dump(2) << "\n";
  return 0;
}

// ---- corpus synth ----

struct SynthOpts {
  Common common;
  std::string kind;
  std::optional<std::string> ontology;
  std::optional<std::size_t> n;
  std::optional<std::size_t> labels;
  std::optional<std::uint64_t> seed;
};

int run_corpus_synth(const SynthOpts& o, const std::vector<std::string>& argv) {
  const json cfg = load_config(o.common.config);
  Problems problems;
  const std::uint64_t seed = pick(o.seed, cfg, "seed", std::uint64_t{1}, problems);
  const std::size_t n = pick(o.n, cfg, "n_docs", std::size_t{20}, problems);
  const std::size_t labels = pick(o.labels, cfg, "labels_per_doc", std::size_t{3}, problems);
  const std::string ont_path = pick(o.ontology, cfg, "ontology_path", std::string(), problems);
  if (!ont_path.empty()) require_file(ont_path, "ontology", problems);
  const std::set<std::string> kinds = {"hpo", "ner", "multilabel", "fixtures"};
  if (!kinds.count(o.kind)) problems.add("--kind must be one of hpo, ner, multilabel, fixtures");
  if (n == 0) problems.add("--n must be positive");
  problems.raise_if_any();

  RunDir run(o.common.out, "corpus synth", argv);
  run.settings() = {{"kind", o.kind}, {"seed", seed}, {"n_docs", n}, {"labels_per_doc", labels},
                    {"ontology_path", ont_path}};
  Ontology ont = ont_path.empty() ? fixtures::fixture_ontology() : load_ontology(ont_path);
  if (!ont_path.empty()) run.input(ont_path);

  if (o.kind == "hpo") {
    run.write("hpo_corpus.jsonl", to_jsonl(synthesize_fixture(seed, ont, n, labels)));
  } else if (o.kind == "ner") {
    run.write("ner_corpus.pubtator", to_pubtator(synthesize_span_fixture(seed, n, labels)));
  } else if (o.kind == "multilabel") {
    run.write("multilabel_corpus.jsonl", to_jsonl(synthesize_multilabel_fixture(seed, n)));
  } else {
    const Ontology fx = fixtures::fixture_ontology();
    run.write("ontology.obo", fx.to_obo());
    run.write("dravet_annotations.tsv", annotations_tsv(fixtures::dravet_annotations(fx)));
    run.write("dravet_allowed_terms.txt", term_list_text(fx, fixtures::dravet_allowed_terms()));
    run.write("dravet_context.txt", fixtures::dravet_disease_context() + "\n");
    const auto allowed = fixtures::dravet_allowed_terms();
    run.write("grouping.tsv", grouping_tsv(group_by_ancestors(fx, allowed, fixtures::organ_system_roots())));
    run.write("dravet_graph.jsonl", to_jsonl(fixtures::dravet_graph(fx)));
    auto bpan = fixtures::bpan_fixture();
    run.write("bpan_graph.jsonl", to_jsonl(bpan.graph));
    std::string planted;
    for (const auto& k : bpan.planted) planted += k + "\n";
    run.write("bpan_planted.txt", planted);
    run.write("bpan_rubric.json", fixtures::bpan_rubric().to_json().dump(2) + "\n");
    run.write("bpan_allowed_terms.txt", term_list_text(fx, fixtures::bpan_allowed_terms()));
    run.write("hpo_corpus.jsonl", to_jsonl(synthesize_fixture(seed, fx, n, labels)));
    run.write("ner_corpus.pubtator", to_pubtator(synthesize_span_fixture(seed, n, labels)));
    run.write("multilabel_corpus.jsonl", to_jsonl(synthesize_multilabel_fixture(seed, n)));
  }
  run.finish();
  return 0;
}

// ---- extract ----

struct ExtractOpts {
  Common common;
  BackendFlags backend;
  std::optional<std::string> task, input, train, ontology, allowed_terms, disease_context, prompts, policy,
      record_cassette;
  std::optional<std::size_t> k, test_size;
  std::optional<int> glean;
  std::optional<std::uint64_t> seed;
};

void add_extract_options(CLI::App* cmd, ExtractOpts& o) {
  cmd->add_option("--task", o.task, "ner, hpo or multilabel");
  cmd->add_option("--input", o.input, "Corpus to extract from (PubTator for ner, JSON Lines otherwise)");
  cmd->add_option("--train", o.train, "Annotated corpus used as the few-shot pool");
  cmd->add_option("--test-size", o.test_size, "Split --input: extract this many docs, use the rest as the pool");
  cmd->add_option("--ontology", o.ontology, "OBO ontology (hpo task)");
  cmd->add_option("--allowed-terms", o.allowed_terms, "File of permitted term ids (hpo task)");
  cmd->add_option("--disease-context", o.disease_context, "Text file describing the disease (hpo task)");
  cmd->add_option("--prompts", o.prompts, "Directory of prompt template overrides");
  cmd->add_option("--policy", o.policy, "zero-shot, static-fewshot or dynamic-fewshot");
  cmd->add_option("--k", o.k, "Few-shot examples per prompt");
  cmd->add_option("--glean", o.glean, "Gleaning rounds after the first pass");
  cmd->add_option("--seed", o.seed, "Seed for --test-size splitting");
}

/// Everything `extract` and `cassette oracle` need, loaded and validated.
struct ExtractSetup {
  Task task = Task::Hpo;
  std::optional<Ontology> ontology;
  std::vector<FewShotExample> targets;
  std::vector<FewShotExample> pool;
  std::unique_ptr<HashingEmbedder> embedder;
  EmbeddingIndex index;
  FewShotPolicy policy;
  TaskSpec spec;
  GleanConfig glean;
  json settings;
  std::vector<std::string> inputs;
};

std::vector<FewShotExample> load_examples(Task task, const std::string& path, const Ontology* ontology) {
  std::vector<FewShotExample> out;
  switch (task) {
    case Task::Ner:
      for (const auto& d : load_span_corpus(path)) out.push_back({d.doc, gold_result(d)});
      break;
    case Task::Hpo:
      for (const auto& d : load_hpo_gold(path, ontology)) out.push_back({d.doc, gold_result(d)});
      break;
    case Task::MultiLabel:
      for (const auto& d : load_multilabel_gold(path)) out.push_back({d.doc, gold_result(d)});
      break;
  }
  return out;
}

std::unique_ptr<ExtractSetup> extract_setup(const ExtractOpts& o, const json& cfg, Problems& problems) {
  auto s = std::make_unique<ExtractSetup>();
  const std::string task_s = pick(o.task, cfg, "task", std::string("hpo"), problems);
  auto task = parse_task(task_s);
  if (!task) problems.add("task must be ner, hpo or multilabel, got '" + task_s + "'");
  s->task = task.value_or(Task::Hpo);
  const std::string input = pick(o.input, cfg, "input_path", std::string(), problems);
  require_file(input, "input corpus", problems);
  const std::string train = pick(o.train, cfg, "train_path", std::string(), problems);
  if (!train.empty()) require_file(train, "training corpus", problems);
  const std::string ont_path = pick(o.ontology, cfg, "ontology_path", std::string(), problems);
  if (s->task == Task::Hpo) require_file(ont_path, "ontology", problems);
  const std::string allowed_path = pick(o.allowed_terms, cfg, "allowed_terms_path", std::string(), problems);
  if (!allowed_path.empty()) require_file(allowed_path, "allowed terms", problems);
  const std::string context_path = pick(o.disease_context, cfg, "disease_context_path", std::string(), problems);
  if (!context_path.empty()) require_file(context_path, "disease context", problems);
  const std::string prompts = pick(o.prompts, cfg, "prompts_dir", std::string(), problems);
  if (!prompts.empty() && !std::filesystem::is_directory(prompts))
    problems.add("prompts directory not found: " + prompts);
  const std::string policy_s = pick(o.policy, cfg, "policy", std::string("zero-shot"), problems);
  auto mode = parse_few_shot_mode(policy_s);
  if (!mode) problems.add("policy must be zero-shot, static-fewshot or dynamic-fewshot, got '" + policy_s + "'");
  const std::size_t k = pick(o.k, cfg, "k", std::size_t{5}, problems);
  if (k == 0) problems.add("k must be >= 1");
  const int glean = pick(o.glean, cfg, "glean", 1, problems);
  if (glean < 0 || glean > GleanConfig::kMaxIterations)
    problems.add("glean must be in [0, " + std::to_string(GleanConfig::kMaxIterations) + "]");
  std::optional<std::size_t> test_size = o.test_size;
  if (!test_size && cfg.contains("test_size"))
    test_size = pick(std::optional<std::size_t>{}, cfg, "test_size", std::size_t{0}, problems);
  const std::uint64_t seed = pick(o.seed, cfg, "seed", std::uint64_t{1}, problems);
  if (mode && *mode != FewShotMode::ZeroShot && train.empty() && !test_size)
    problems.add("few-shot policies need --train or --test-size");
  problems.raise_if_any();

  if (!ont_path.empty()) {
    s->ontology = load_ontology(ont_path);
    s->inputs.push_back(ont_path);
  }
  const Ontology* ont = s->ontology ? &*s->ontology : nullptr;
  s->inputs.push_back(input);
  auto examples = load_examples(s->task, input, ont);
  if (test_size) {
    auto [train_part, test_part] = split_train_test(examples, *test_size, seed);
    s->pool = std::move(train_part);
    s->targets = std::move(test_part);
  } else {
    s->targets = std::move(examples);
  }
  if (!train.empty()) {
    s->inputs.push_back(train);
    auto extra = load_examples(s->task, train, ont);
    s->pool.insert(s->pool.end(), extra.begin(), extra.end());
  }

  s->policy.mode = *mode;
  s->policy.k = k;
  s->policy.example_pool = &s->pool;
  if (*mode == FewShotMode::DynamicFewShot) {
    s->embedder = std::make_unique<HashingEmbedder>();
    std::vector<Document> docs;
    for (const auto& ex : s->pool) docs.push_back(ex.doc);
    s->index = build_index(*s->embedder, docs);
    s->policy.index = &s->index;
    s->policy.embedder = s->embedder.get();
  }
  validate(s->policy);

  s->spec.task = s->task;
  s->spec.ontology = ont;
  if (!allowed_path.empty()) {
    if (!ont) throw Error(ErrorKind::Config, "allowed terms need an ontology");
    s->spec.allowed_terms = load_term_list(allowed_path, *ont);
    s->inputs.push_back(allowed_path);
  }
  if (!context_path.empty()) {
    s->spec.disease_context = read_file(context_path);
    s->inputs.push_back(context_path);
  }
  if (!prompts.empty()) s->spec.templates = PromptTemplates::load(prompts);
  s->glean.iterations = glean;
  s->settings = {{"task", to_string(s->task)},       {"input_path", input},
                 {"train_path", train},              {"ontology_path", ont_path},
                 {"allowed_terms_path", allowed_path}, {"disease_context_path", context_path},
                 {"prompts_dir", prompts},           {"policy", to_string(*mode)},
                 {"k", k},                           {"glean", glean},
                 {"seed", seed}};
  s->settings["test_size"] = test_size ? json(test_size.value()) : json(nullptr);
  return s;
}

int run_extract(const ExtractOpts& o, const std::vector<std::string>& argv) {
  const json cfg = load_config(o.common.config);
  Problems problems;
  BackendConfig bc = backend_config(o.backend, cfg, problems);
  auto setup = extract_setup(o, cfg, problems);

  RunDir run(o.common.out, "extract", argv);
  for (const auto& p : setup->inputs) run.input(p);
  if (bc.kind == BackendKind::Replay) run.input(bc.cassette_path);
  run.settings() = setup->settings;
  run.settings()["backend"] = to_json(bc);

  auto live = make_backend(bc);
  std::unique_ptr<RecordingBackend> recorder;
  ChatBackend* backend = live.get();
  if (o.record_cassette) {
    recorder = std::make_unique<RecordingBackend>(*live);
    backend = recorder.get();
  }
  std::vector<Document> docs;
  for (const auto& ex : setup->targets) docs.push_back(ex.doc);
  AuditLog audit;
  auto outcomes = extract_batch(setup->spec, docs, *backend, setup->policy, setup->glean, bc.max_in_flight, &audit);

  std::string lines;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    json line{{"doc_id", docs[i].doc_id}};
    if (outcomes[i].ok()) {
      line["output"] = render_output(*outcomes[i].result);
      line["error"] = nullptr;
    } else {
      ++failed;
      line["output"] = nullptr;
      line["error"] = {{"kind", to_string(outcomes[i].error->kind())}, {"message", outcomes[i].error->what()}};
    }
    lines += line.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
  }
  run.write("predictions.jsonl", lines);
  run.write("audit.jsonl", audit.to_jsonl());
  if (setup->task == Task::Hpo || !setup->targets.empty()) {
    std::string gold;
    switch (setup->task) {
      case Task::Ner: {
        // the gold copy keeps offsets so eval can use any match policy
        std::vector<SpanDocument> g = load_span_corpus(setup->settings["input_path"].get<std::string>());
        std::set<std::string> ids;
        for (const auto& d : docs) ids.insert(d.doc_id);
        std::vector<SpanDocument> kept;
        for (auto& d : g)
          if (ids.count(d.doc.doc_id)) kept.push_back(std::move(d));
        gold = to_pubtator(kept);
        run.write("gold.pubtator", gold);
        break;
      }
      case Task::Hpo: {
        std::vector<HpoGoldDoc> g;
        for (const auto& ex : setup->targets) g.push_back({ex.doc, std::get<HpoExtraction>(ex.gold).terms()});
        run.write("gold.jsonl", to_jsonl(g));
        break;
      }
      case Task::MultiLabel: {
        std::vector<MultiLabelDoc> g;
        for (const auto& ex : setup->targets) g.push_back({ex.doc, std::get<MultiLabelResult>(ex.gold).labels});
        run.write("gold.jsonl", to_jsonl(g));
        break;
      }
    }
  }
  if (recorder) {
    recorder->cassette().save(*o.record_cassette);
    run.settings()["recorded_cassette"] = *o.record_cassette;
  }
  json summary{{"documents", docs.size()}, {"failed", failed}, {"audit_entries", audit.size()}};
  run.write("summary.json", summary.dump(2) + "\n");
  run.finish();
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---- eval ----

struct EvalOpts {
  Common common;
  std::optional<std::string> task, gold, pred, ontology, model, match_policy;
};

std::map<std::string, TaskResult> load_predictions(const std::string& path, const TaskSpec& spec) {
  std::map<std::string, TaskResult> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    if (!j.is_object() || !j.contains("doc_id") || !j["doc_id"].is_string())
      throw Error(ErrorKind::Parse, path + ":" + std::to_string(line) + ": expected {doc_id, output, error}");
    const std::string id = j["doc_id"].get<std::string>();
    TaskResult r = empty_result(spec.task, id);
    if (j.contains("output") && j["output"].is_object()) r = interpret_output(spec, id, j["output"].dump(), 0, nullptr);
    if (!out.emplace(id, std::move(r)).second)
      throw Error(ErrorKind::DuplicateId, path + ":" + std::to_string(line) + ": duplicate doc " + id);
  });
  return out;
}

template <typename R, typename G, typename Id>
std::vector<R> aligned(const std::vector<G>& gold, std::map<std::string, TaskResult>& preds, Task task, Id id) {
  std::vector<R> out;
  for (const auto& g : gold) {
    auto it = preds.find(id(g));
    if (it != preds.end()) out.push_back(std::get<R>(it->second));
  }
  for (auto& [k, r] : preds) {
    bool known = std::any_of(gold.begin(), gold.end(), [&](const G& g) { return id(g) == k; });
    if (!known) out.push_back(std::get<R>(r));
  }
  (void)task;
  return out;
}

int run_eval(const EvalOpts& o, const std::vector<std::string>& argv) {
  const json cfg = load_config(o.common.config);
  Problems problems;
  const std::string task_s = pick(o.task, cfg, "task", std::string("hpo"), problems);
  auto task = parse_task(task_s);
  if (!task) problems.add("task must be ner, hpo or multilabel, got '" + task_s + "'");
  const std::string gold = pick(o.gold, cfg, "gold_path", std::string(), problems);
  require_file(gold, "gold corpus", problems);
  const std::string pred = pick(o.pred, cfg, "pred_path", std::string(), problems);
  require_file(pred, "predictions", problems);
  const std::string ont_path = pick(o.ontology, cfg, "ontology_path", std::string(), problems);
  if (task == Task::Hpo) require_file(ont_path, "ontology", problems);
  const std::string model = pick(o.model, cfg, "model_name", std::string("model"), problems);
  const std::string mp_s = pick(o.match_policy, cfg, "match_policy", std::string("normalized-mention-set"), problems);
  auto mp = parse_match_policy(mp_s);
  if (!mp) problems.add("match_policy must be normalized-mention-set, exact-span or concept-id");
  problems.raise_if_any();

  RunDir run(o.common.out, "eval", argv);
  run.input(gold);
  run.input(pred);
  run.settings() = {{"task", task_s}, {"gold_path", gold}, {"pred_path", pred}, {"ontology_path", ont_path},
                    {"model_name", model}, {"match_policy", to_string(*mp)}};
  std::optional<Ontology> ont;
  if (!ont_path.empty()) {
    run.input(ont_path);
    ont = load_ontology(ont_path);
  }
  TaskSpec spec;
  spec.task = *task;
  spec.ontology = ont ? &*ont : nullptr;
  auto preds = load_predictions(pred, spec);

  MetricReport report;
  switch (*task) {
    case Task::Ner: {
      auto g = load_span_corpus(gold);
      report = score_ner(g, aligned<NerResult>(g, preds, *task, [](const SpanDocument& d) { return d.doc.doc_id; }),
                         *mp);
      break;
    }
    case Task::Hpo: {
      auto g = load_hpo_gold(gold, spec.ontology);
      report = score_hpo(g, aligned<HpoExtraction>(g, preds, *task, [](const HpoGoldDoc& d) { return d.doc.doc_id; }));
      break;
    }
    case Task::MultiLabel: {
      auto g = load_multilabel_gold(gold);
      report = score_multilabel(
          g, aligned<MultiLabelResult>(g, preds, *task, [](const MultiLabelDoc& d) { return d.doc.doc_id; }));
      break;
    }
  }
  std::vector<ReportEntry> entries{{model, report}};
  run.write("report.csv", render_report(entries, ReportFormat::Csv));
  run.write("report.md", render_report(entries, ReportFormat::Markdown));
  run.write("report.json", report_json(entries).dump(2) + "\n");
  run.finish();
  std::cout << render_report(entries, ReportFormat::Markdown);
  return 0;
}

// ---- kg ----

struct KgBuildOpts {
  Common common;
  std::optional<std::string> input, ontology;
};

int run_kg_build(const KgBuildOpts& o, const std::vector<std::string>& argv) {
  const json cfg = load_config(o.common.config);
  Problems problems;
  const std::string input = pick(o.input, cfg, "input_path", std::string(), problems);
  require_file(input, "patient records", problems);
  const std::string ont_path = pick(o.ontology, cfg, "ontology_path", std::string(), problems);
  if (!ont_path.empty()) require_file(ont_path, "ontology", problems);
  problems.raise_if_any();

  RunDir run(o.common.out, "kg build", argv);
  run.input(input);
  run.settings() = {{"input_path", input}, {"ontology_path", ont_path}};
  std::optional<Ontology> ont;
  if (!ont_path.empty()) {
    run.input(ont_path);
    ont = load_ontology(ont_path);
  }
  Graph g = build_graph(parse_records(read_file(input), input), ont ? &*ont : nullptr);
  run.write("graph.jsonl", to_jsonl(g));
  json stats{{"patients", g.patient_count()}, {"notes", g.note_count()}, {"assertions", g.assertion_count()},
             {"edges", g.edge_count()}};
  run.write("stats.json", stats.dump(2) + "\n");
  run.finish();
  std::cout << stats.dump() << "\n";
  return 0;
}

struct KgQueryOpts {
  Common common;
  std::optional<std::string> graph, ontology, icd, mode, keyword, prefix;
};

int run_kg_query(const KgQueryOpts& o, const std::vector<std::string>& argv) {
  const json cfg = load_config(o.common.config);
  Problems problems;
  const std::string graph_path = pick(o.graph, cfg, "graph_path", std::string(), problems);
  require_file(graph_path, "graph", problems);
  const std::string ont_path = pick(o.ontology, cfg, "ontology_path", std::string(), problems);
  if (!ont_path.empty()) require_file(ont_path, "ontology", problems);
  const std::string mode = o.mode.value_or("any");
  if (mode != "any" && mode != "all") problems.add("--mode must be any or all");
  if (!o.icd && !o.keyword && !o.prefix) problems.add("give at least one of --icd, --keyword, --expand-prefix");
  problems.raise_if_any();

  RunDir run(o.common.out, "kg query", argv);
  run.input(graph_path);
  std::optional<Ontology> ont;
  if (!ont_path.empty()) {
    run.input(ont_path);
    ont = load_ontology(ont_path);
  }
  Graph g = load_graph(graph_path, ont ? &*ont : nullptr);
  json result = json::object();
  run.settings() = {{"graph_path", graph_path}, {"ontology_path", ont_path}, {"mode", mode}};
  if (o.icd) {
    auto codes = split_codes(*o.icd);
    auto cohort = cohort_by_icd(g, codes, mode == "all" ? CodeMatch::All : CodeMatch::Any);
    result["icd"] = {{"codes", codes}, {"mode", mode}, {"count", cohort.size()}, {"patients", cohort}};
    run.settings()["icd"] = codes;
  }
  if (o.keyword) {
    json hits = json::array();
    std::set<std::string> patients;
    for (const auto& [p, n] : keyword_search(g, *o.keyword)) {
      hits.push_back({{"patient", p}, {"note_id", n}});
      patients.insert(p);
    }
    result["keyword"] = {{"pattern", *o.keyword}, {"patients", patients}, {"hits", hits}};
    run.settings()["keyword"] = *o.keyword;
  }
  if (o.prefix) {
    result["expanded_codes"] = expand_icd_prefix(g, *o.prefix);
    run.settings()["expand_prefix"] = *o.prefix;
  }
  run.write("query.json", result.dump(2) + "\n");
  run.finish();
  std::cout << result.dump(2) << "\n";
  return 0;
}

// ---- cohort-freq ----

struct CohortOpts {
  Common common;
  std::optional<std::string> graph, ontology, icd, terms, annotations, grouping, disease;
  std::optional<double> min_confidence;
};

int run_cohort_freq(const CohortOpts& o, const std::vector<std::string>& argv) {
  const json cfg = load_config(o.common.config);
  Problems problems;
  const std::string graph_path = pick(o.graph, cfg, "graph_path", std::string(), problems);
  require_file(graph_path, "graph", problems);
  const std::string ont_path = pick(o.ontology, cfg, "ontology_path", std::string(), problems);
  require_file(ont_path, "ontology", problems);
  const std::string icd = pick(o.icd, cfg, "icd", std::string(), problems);
  if (split_codes(icd).empty()) problems.add("--icd needs at least one code");
  const std::string terms_path = pick(o.terms, cfg, "allowed_terms_path", std::string(), problems);
  const std::string ann_path = pick(o.annotations, cfg, "annotations_path", std::string(), problems);
  if (!terms_path.empty()) require_file(terms_path, "term list", problems);
  if (!ann_path.empty()) require_file(ann_path, "annotations", problems);
  if (terms_path.empty() && ann_path.empty()) problems.add("give --terms or --annotations");
  const std::string grouping_path = pick(o.grouping, cfg, "grouping_path", std::string(), problems);
  if (!grouping_path.empty()) require_file(grouping_path, "grouping", problems);
  const double min_conf = pick(o.min_confidence, cfg, "min_confidence", 0.0, problems);
  if (!(min_conf >= 0.0 && min_conf <= 1.0)) problems.add("min_confidence must be in [0, 1]");
  problems.raise_if_any();

  RunDir run(o.common.out, "cohort-freq", argv);
  run.input(graph_path);
  run.input(ont_path);
  run.settings() = {{"graph_path", graph_path}, {"ontology_path", ont_path}, {"icd", icd},
                    {"allowed_terms_path", terms_path}, {"annotations_path", ann_path},
                    {"grouping_path", grouping_path}, {"min_confidence", min_conf}};
  Ontology ont = load_ontology(ont_path);
  Graph g = load_graph(graph_path, &ont);
  auto cohort = cohort_by_icd(g, split_codes(icd), CodeMatch::Any);
  if (cohort.empty()) throw Error(ErrorKind::Domain, "no patient carries any of the codes " + icd);

  std::set<TermId> terms;
  if (!terms_path.empty()) {
    run.input(terms_path);
    terms = load_term_list(terms_path, ont);
  }
  std::vector<DiseaseAnnotation> annotations;
  if (!ann_path.empty()) {
    run.input(ann_path);
    annotations = load_annotations(ann_path, ont);
    if (o.disease) {
      std::erase_if(annotations, [&](const DiseaseAnnotation& a) { return a.disease_id != *o.disease; });
      run.settings()["disease"] = *o.disease;
    }
    for (const auto& a : annotations) terms.insert(a.phenotype);
  }
  auto table = phenotype_frequency(g, cohort, terms, ont, min_conf);
  run.write("frequencies.csv", frequency_csv(table, ont));
  if (!annotations.empty()) {
    auto comparisons = compare_to_ontology(table, annotations);
    Grouping grouping;
    if (!grouping_path.empty()) {
      run.input(grouping_path);
      grouping = load_grouping(grouping_path);
    }
    run.write("heatmap.csv", heatmap_csv(comparisons, ont, grouping));
  }
  run.finish();
  std::cout << "cohort size " << cohort.size() << ", " << table.size() << " terms\n";
  return 0;
}

// ---- discover ----

struct DiscoverOpts {
  Common common;
  BackendFlags backend;
  std::optional<std::string> graph, ontology, rubric, keywords, generic_icd, allowed_terms, record_cassette;
  std::optional<int> threshold, glean;
  std::optional<std::size_t> min_assertions;
  std::optional<double> high_confidence;
};

int run_discover(const DiscoverOpts& o, const std::vector<std::string>& argv, bool oracle,
                 const std::string& oracle_out = "") {
  const json cfg = load_config(o.common.config);
  Problems problems;
  BackendConfig bc;
  if (!oracle) bc = backend_config(o.backend, cfg, problems);
  const std::string graph_path = pick(o.graph, cfg, "graph_path", std::string(), problems);
  require_file(graph_path, "graph", problems);
  const std::string ont_path = pick(o.ontology, cfg, "ontology_path", std::string(), problems);
  require_file(ont_path, "ontology", problems);
  const std::string rubric_path = pick(o.rubric, cfg, "rubric_path", std::string(), problems);
  require_file(rubric_path, "rubric", problems);
  const std::string terms_path = pick(o.allowed_terms, cfg, "allowed_terms_path", std::string(), problems);
  require_file(terms_path, "allowed terms", problems);
  FunnelConfig fc;
  fc.keywords = split_codes(pick(o.keywords, cfg, "keywords", std::string(), problems));
  fc.generic_icd = split_codes(pick(o.generic_icd, cfg, "generic_icd", std::string(), problems));
  fc.threshold = pick(o.threshold, cfg, "threshold", 7, problems);
  fc.glean.iterations = pick(o.glean, cfg, "glean", 1, problems);
  fc.high_confidence = pick(o.high_confidence, cfg, "high_confidence", 0.5, problems);
  if (o.min_assertions) fc.min_assertions = *o.min_assertions;
  else if (cfg.contains("min_assertions")) fc.min_assertions = pick(std::optional<std::size_t>{}, cfg, "min_assertions", std::size_t{0}, problems);
  if (!oracle) fc.max_in_flight = bc.max_in_flight;
  if (fc.threshold < 0 || fc.threshold > 9) problems.add("threshold must be in [0, 9]");
  if (fc.keywords.empty() && fc.generic_icd.empty()) problems.add("give --keywords or --generic-icd");
  if (fc.glean.iterations < 0 || fc.glean.iterations > GleanConfig::kMaxIterations) problems.add("glean out of range");
  problems.raise_if_any();

  RunDir run(o.common.out, oracle ? "cassette oracle" : "discover", argv);
  for (const auto& p : {graph_path, ont_path, rubric_path, terms_path}) run.input(p);
  if (!oracle && bc.kind == BackendKind::Replay) run.input(bc.cassette_path);
  run.settings() = {{"graph_path", graph_path}, {"ontology_path", ont_path}, {"rubric_path", rubric_path},
                    {"allowed_terms_path", terms_path}, {"keywords", fc.keywords}, {"generic_icd", fc.generic_icd},
                    {"threshold", fc.threshold}, {"glean", fc.glean.iterations},
                    {"high_confidence", fc.high_confidence}};
  run.settings()["min_assertions"] = fc.min_assertions ? json(*fc.min_assertions) : json(nullptr);
  if (!oracle) run.settings()["backend"] = to_json(bc);

  Ontology ont = load_ontology(ont_path);
  Graph g = load_graph(graph_path, &ont);
  ScoringRubric rubric = ScoringRubric::load(rubric_path);
  fc.allowed_terms = load_term_list(terms_path, ont);

  std::unique_ptr<ChatBackend> live;
  if (oracle) live = std::make_unique<ScriptedBackend>(fixtures::bpan_oracle_backend(ont));
  else live = make_backend(bc);
  std::unique_ptr<RecordingBackend> recorder;
  ChatBackend* backend = live.get();
  if (oracle || o.record_cassette) {
    recorder = std::make_unique<RecordingBackend>(*live);
    backend = recorder.get();
  }
  AuditLog audit;
  FunnelReport report = run_funnel(g, ont, rubric, fc, *backend, &audit);
  if (oracle) {
    run.write("cassette.jsonl", recorder->cassette().to_jsonl());
    (void)oracle_out;
  } else {
    run.write("funnel.json", to_json(report).dump(2) + "\n");
    run.write("funnel.md", to_markdown(report, rubric, ont));
    run.write("audit.jsonl", audit.to_jsonl());
    if (recorder) recorder->cassette().save(*o.record_cassette);
  }
  run.finish();
  for (const auto& [stage, count] : report.stage_counts) std::cout << stage << "\t" << count << "\n";
  return 0;
}

// ---- cassette ----

struct RecordOpts {
  Common common;
  BackendFlags backend;
  std::string requests;
};

int run_cassette_record(const RecordOpts& o, const std::vector<std::string>& argv) {
  const json cfg = load_config(o.common.config);
  Problems problems;
  BackendConfig bc = backend_config(o.backend, cfg, problems);
  if (bc.kind != BackendKind::Http) problems.add("recording needs the http backend");
  require_file(o.requests, "requests file", problems);
  problems.raise_if_any();

  std::vector<ChatRequest> requests;
  for_each_jsonl(o.requests, [&](std::size_t line, const json& j) {
    if (!j.is_object() || !j.contains("user") || !j["user"].is_string())
      throw Error(ErrorKind::Parse, o.requests + ":" + std::to_string(line) + ": expected {system, user}");
    ChatRequest r;
    r.system = j.value("system", "");
    r.user = j["user"].get<std::string>();
    r.temperature = j.value("temperature", 0.0);
    r.max_tokens = j.value("max_tokens", 2048);
    requests.push_back(std::move(r));
  });
  RunDir run(o.common.out, "cassette record", argv);
  run.input(o.requests);
  run.settings() = {{"requests_path", o.requests}, {"backend", to_json(bc)}};
  auto live = make_backend(bc);
  Cassette c = record_cassette(*live, requests, run.dir() / "cassette.jsonl", bc.max_in_flight);
  run.write("cassette.jsonl", c.to_jsonl());
  run.finish();
  std::cout << c.size() << " responses recorded\n";
  return 0;
}

int run_cassette_oracle_extract(const ExtractOpts& o, const std::vector<std::string>& argv) {
  const json cfg = load_config(o.common.config);
  Problems problems;
  auto setup = extract_setup(o, cfg, problems);
  RunDir run(o.common.out, "cassette oracle", argv);
  for (const auto& p : setup->inputs) run.input(p);
  run.settings() = setup->settings;
  Cassette c = fixtures::oracle_cassette(setup->spec, setup->targets, setup->policy, setup->glean);
  run.write("cassette.jsonl", c.to_jsonl());
  run.finish();
  std::cout << c.size() << " oracle responses\n";
  return 0;
}

void print_error(const Error& e) {
  json err{{"error", {{"kind", to_string(e.kind())}, {"message", e.what()}}}};
  std::cerr << err.dump(-1, ' ', false, json::error_handler_t::replace) << "\n";
}

}  // namespace
}  // namespace phenokg::cli

int main(int argc, char** argv) {
  using namespace phenokg;
  using namespace phenokg::cli;
  const std::vector<std::string> args(argv + 1, argv + argc);

  CLI::App app{"Ontology-grounded clinical extraction, patient graphs and cohort discovery"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto* ontology = app.add_subcommand("ontology", "Ontology utilities")->require_subcommand(1);
  OntologyOpts ont_o;
  auto* ont_stats = ontology->add_subcommand("stats", "Term and annotation statistics");
  add_common(ont_stats, ont_o.common);
  ont_stats->add_option("--ontology", ont_o.ontology, "OBO file");
  ont_stats->add_option("--annotations", ont_o.annotations, "Disease annotation TSV");

  auto* corpus = app.add_subcommand("corpus", "Corpus utilities")->require_subcommand(1);
  SynthOpts synth_o;
  auto* synth = corpus->add_subcommand("synth", "Write synthetic corpora and fixture files");
  add_common(synth, synth_o.common);
  synth->add_option("--kind", synth_o.kind, "hpo, ner, multilabel or fixtures")->required();
  synth->add_option("--ontology", synth_o.ontology, "OBO file (default: built-in fixture ontology)");
  synth->add_option("--n", synth_o.n, "Number of documents");
  synth->add_option("--labels", synth_o.labels, "Terms (hpo) or mentions (ner) per document");
  synth->add_option("--seed", synth_o.seed, "Random seed");

  ExtractOpts ext_o;
  auto* extract = app.add_subcommand("extract", "Run LLM extraction over a corpus");
  add_common(extract, ext_o.common);
  add_backend(extract, ext_o.backend);
  add_extract_options(extract, ext_o);
  extract->add_option("--record-cassette", ext_o.record_cassette, "Save every exchange to this cassette");

  EvalOpts eval_o;
  auto* eval = app.add_subcommand("eval", "Score predictions against gold");
  add_common(eval, eval_o.common);
  eval->add_option("--task", eval_o.task, "ner, hpo or multilabel");
  eval->add_option("--gold", eval_o.gold, "Gold corpus");
  eval->add_option("--pred", eval_o.pred, "predictions.jsonl from extract");
  eval->add_option("--ontology", eval_o.ontology, "OBO file (hpo task)");
  eval->add_option("--model", eval_o.model, "Model label for the report");
  eval->add_option("--match-policy", eval_o.match_policy, "normalized-mention-set, exact-span or concept-id");

  auto* kg = app.add_subcommand("kg", "Patient knowledge graph")->require_subcommand(1);
  KgBuildOpts kgb_o;
  auto* kg_build = kg->add_subcommand("build", "Build a graph from patient/note/assertion records");
  add_common(kg_build, kgb_o.common);
  kg_build->add_option("--input", kgb_o.input, "JSON Lines records");
  kg_build->add_option("--ontology", kgb_o.ontology, "OBO file (needed when records hold assertions)");
  KgQueryOpts kgq_o;
  auto* kg_query = kg->add_subcommand("query", "Cohort and keyword queries");
  add_common(kg_query, kgq_o.common);
  kg_query->add_option("--graph", kgq_o.graph, "graph.jsonl");
  kg_query->add_option("--ontology", kgq_o.ontology, "OBO file (needed when the graph holds assertions)");
  kg_query->add_option("--icd", kgq_o.icd, "Comma-separated ICD-10 codes");
  kg_query->add_option("--mode", kgq_o.mode, "any or all");
  kg_query->add_option("--keyword", kgq_o.keyword, "Case-insensitive note search");
  kg_query->add_option("--expand-prefix", kgq_o.prefix, "List graph ICD-10 codes under a prefix");

  CohortOpts co_o;
  auto* cohort = app.add_subcommand("cohort-freq", "Phenotype frequencies in an ICD-defined cohort");
  add_common(cohort, co_o.common);
  cohort->add_option("--graph", co_o.graph, "graph.jsonl");
  cohort->add_option("--ontology", co_o.ontology, "OBO file");
  cohort->add_option("--icd", co_o.icd, "Comma-separated ICD-10 codes defining the cohort");
  cohort->add_option("--terms", co_o.terms, "Term list file");
  cohort->add_option("--annotations", co_o.annotations, "Disease annotation TSV (adds heatmap.csv)");
  cohort->add_option("--disease", co_o.disease, "Only annotations of this disease id");
  cohort->add_option("--grouping", co_o.grouping, "TSV term_id<TAB>group");
  cohort->add_option("--min-confidence", co_o.min_confidence, "Ignore assertions below this confidence");

  DiscoverOpts disc_o;
  auto* discover = app.add_subcommand("discover", "Rare-disease discovery funnel");
  add_common(discover, disc_o.common);
  add_backend(discover, disc_o.backend);
  discover->add_option("--graph", disc_o.graph, "graph.jsonl");
  discover->add_option("--ontology", disc_o.ontology, "OBO file");
  discover->add_option("--rubric", disc_o.rubric, "Scoring rubric JSON");
  discover->add_option("--keywords", disc_o.keywords, "Comma-separated note keywords");
  discover->add_option("--generic-icd", disc_o.generic_icd, "Comma-separated ICD-10 codes");
  discover->add_option("--allowed-terms", disc_o.allowed_terms, "Term list for phenotype extraction");
  discover->add_option("--threshold", disc_o.threshold, "Minimum score 0-9");
  discover->add_option("--glean", disc_o.glean, "Gleaning rounds for phenotype extraction");
  discover->add_option("--high-confidence", disc_o.high_confidence, "Confidence counted as high for ranking");
  discover->add_option("--min-assertions", disc_o.min_assertions, "Drop finalists with fewer high-confidence terms");
  discover->add_option("--record-cassette", disc_o.record_cassette, "Save every exchange to this cassette");

  auto* cassette = app.add_subcommand("cassette", "Record or synthesize replay cassettes")->require_subcommand(1);
  RecordOpts rec_o;
  auto* record = cassette->add_subcommand("record", "Send requests to a live endpoint and save the replies");
  add_common(record, rec_o.common);
  add_backend(record, rec_o.backend);
  record->add_option("--requests", rec_o.requests, "JSON Lines of {system, user}")->required();
  ExtractOpts orc_o;
  auto* oracle = cassette->add_subcommand("oracle", "Cassette answering extract prompts with the gold annotations");
  add_common(oracle, orc_o.common);
  add_extract_options(oracle, orc_o);
  DiscoverOpts orcd_o;
  auto* oracle_bpan = cassette->add_subcommand("oracle-funnel", "Cassette from the built-in rubric oracle for discover");
  add_common(oracle_bpan, orcd_o.common);
  oracle_bpan->add_option("--graph", orcd_o.graph, "graph.jsonl");
  oracle_bpan->add_option("--ontology", orcd_o.ontology, "OBO file");
  oracle_bpan->add_option("--rubric", orcd_o.rubric, "Scoring rubric JSON");
  oracle_bpan->add_option("--keywords", orcd_o.keywords, "Comma-separated note keywords");
  oracle_bpan->add_option("--generic-icd", orcd_o.generic_icd, "Comma-separated ICD-10 codes");
  oracle_bpan->add_option("--allowed-terms", orcd_o.allowed_terms, "Term list for phenotype extraction");
  oracle_bpan->add_option("--threshold", orcd_o.threshold, "Minimum score 0-9");
  oracle_bpan->add_option("--glean", orcd_o.glean, "Gleaning rounds for phenotype extraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    json err{{"error", {{"kind", "usage_error"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  }

  try {
    if (ont_stats->parsed()) return run_ontology_stats(ont_o, args);
    if (synth->parsed()) return run_corpus_synth(synth_o, args);
    if (extract->parsed()) return run_extract(ext_o, args);
    if (eval->parsed()) return run_eval(eval_o, args);
    if (kg_build->parsed()) return run_kg_build(kgb_o, args);
    if (kg_query->parsed()) return run_kg_query(kgq_o, args);
    if (cohort->parsed()) return run_cohort_freq(co_o, args);
    if (discover->parsed()) return run_discover(disc_o, args, false);
    if (record->parsed()) return run_cassette_record(rec_o, args);
    if (oracle->parsed()) return run_cassette_oracle_extract(orc_o, args);
    if (oracle_bpan->parsed()) return run_discover(orcd_o, args, true);
  } catch (const Error& e) {
    print_error(e);
    return e.kind() == ErrorKind::Config ? 2 : 1;
  } catch (const std::exception& e) {
    print_error(Error(ErrorKind::Io, e.what()));
    return 1;
  }
  return 1;
}
