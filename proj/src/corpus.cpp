#include "phenokg/corpus.hpp"

#include <map>
#include <unordered_map>
#include <unordered_set>

namespace phenokg {

std::string_view to_string(EntityType t) {
  return t == EntityType::Chemical ? "Chemical" : "Disease";
}

std::optional<EntityType> parse_entity_type(std::string_view s) {
  std::string k = to_lower_ascii(trim(s));
  if (k == "chemical") return EntityType::Chemical;
  if (k == "disease") return EntityType::Disease;
  return std::nullopt;
}

const std::array<std::string, 15>& multilabel_universe() {
  static const std::array<std::string, 15> labels = {
      "ADVANCED.CANCER",
      "ADVANCED.HEART.DISEASE",
      "ADVANCED.LUNG.DISEASE",
      "ALCOHOL.ABUSE",
      "CHRONIC.NEUROLOGICAL.DYSTROPHIES",
      "CHRONIC.PAIN.FIBROMYALGIA",
      "DEMENTIA",
      "DEPRESSION",
      "DEVELOPMENTAL.DELAY.RETARDATION",
      "NON.ADHERENCE",
      "NONE",
      "OBESITY",
      "OTHER.SUBSTANCE.ABUSE",
      "SCHIZOPHRENIA.AND.OTHER.PSYCHIATRIC.DISORDERS",
      "UNSURE",
  };
  return labels;
}

bool in_multilabel_universe(std::string_view label) {
  const auto& u = multilabel_universe();
  return std::find(u.begin(), u.end(), label) != u.end();
}

// ---- PubTator ----

std::vector<SpanDocument> parse_span_corpus(std::string_view text, std::string_view source) {
  const std::string src(source);
  std::vector<SpanDocument> docs;
  std::unordered_map<std::string, std::size_t> index;
  struct Raw {
    std::string title, abstract;
    bool has_title = false, has_abstract = false;
    std::vector<std::pair<std::size_t, std::vector<std::string>>> ann;
  };
  std::map<std::string, Raw> pending;  // doc_id -> raw fields, in first-seen order below
  std::vector<std::string> order;

  auto where = [&](std::size_t line) { return src + ":" + std::to_string(line) + ": "; };
  std::size_t line_no = 0;
  std::string current;
  for (const auto& raw_line : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw_line;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      current.clear();
      continue;
    }
    auto bar = line.find('|');
    auto tab = line.find('\t');
    if (bar != std::string_view::npos && (tab == std::string_view::npos || bar < tab) && line.size() > bar + 2 &&
        line[bar + 2] == '|') {
      std::string id(line.substr(0, bar));
      char field = line[bar + 1];
      std::string body(line.substr(bar + 3));
      if (field != 't' && field != 'a') throw Error(ErrorKind::Parse, where(line_no) + "unknown field '" + field + "'");
      if (id != current) {
        if (pending.count(id)) throw Error(ErrorKind::DuplicateId, where(line_no) + "duplicate doc_id " + id);
        pending[id];
        order.push_back(id);
        current = id;
      }
      Raw& r = pending[id];
      bool& seen = field == 't' ? r.has_title : r.has_abstract;
      if (seen) throw Error(ErrorKind::DuplicateId, where(line_no) + "duplicate doc_id " + id);
      seen = true;
      (field == 't' ? r.title : r.abstract) = body;
      continue;
    }
    auto cols = split(line, '\t');
    if (cols.size() == 4) continue;  // relation line
    if (cols.size() < 5 || cols.size() > 6)
      throw Error(ErrorKind::Parse, where(line_no) + "expected 5 or 6 tab-separated annotation columns");
    auto it = pending.find(cols[0]);
    if (it == pending.end() || cols[0] != current)
      throw Error(ErrorKind::Integrity, where(line_no) + "annotation for unknown doc_id " + cols[0]);
    it->second.ann.emplace_back(line_no, std::move(cols));
  }

  for (const auto& id : order) {
    Raw& r = pending[id];
    SpanDocument sd;
    sd.doc.doc_id = id;
    sd.doc.text = r.title;
    if (r.has_abstract) sd.doc.text += (r.has_title ? " " : "") + r.abstract;
    if (trim(sd.doc.text).empty()) throw Error(ErrorKind::Integrity, "document " + id + " has empty text");
    const std::size_t len = utf8_length(sd.doc.text);
    for (auto& [ln, cols] : r.ann) {
      SpanAnnotation a;
      try {
        a.start = std::stoul(cols[1]);
        a.end = std::stoul(cols[2]);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Parse, where(ln) + "non-numeric offset");
      }
      a.surface = cols[3];
      auto type = parse_entity_type(cols[4]);
      if (!type) throw Error(ErrorKind::Parse, where(ln) + "unknown entity type '" + cols[4] + "'");
      a.entity_type = *type;
      if (cols.size() == 6) {
        std::string_view c = trim(cols[5]);
        if (!c.empty() && c != "-1" && c != "-") a.concept_id = std::string(c);
      }
      if (!(a.start < a.end && a.end <= len))
        throw Error(ErrorKind::Integrity, "document " + id + ": span [" + cols[1] + "," + cols[2] +
                                              ") out of range (line " + std::to_string(ln) + ")");
      std::string slice = utf8_slice(sd.doc.text, a.start, a.end);
      if (slice != a.surface)
        throw Error(ErrorKind::Integrity, "document " + id + ": surface '" + a.surface + "' != text '" + slice +
                                              "' at [" + cols[1] + "," + cols[2] + ") (line " + std::to_string(ln) +
                                              ")");
      sd.spans.push_back(std::move(a));
    }
    docs.push_back(std::move(sd));
  }
  return docs;
}

std::vector<SpanDocument> load_span_corpus(const std::filesystem::path& path) {
  return parse_span_corpus(read_file(path), path.string());
}

std::string to_pubtator(const std::vector<SpanDocument>& corpus) {
  std::string out;
  for (const auto& sd : corpus) {
    // everything lives in the title so offsets need no adjustment on reload
    out += sd.doc.doc_id + "|t|" + sd.doc.text + "\n";
    for (const auto& a : sd.spans) {
      out += sd.doc.doc_id + "\t" + std::to_string(a.start) + "\t" + std::to_string(a.end) + "\t" + a.surface +
             "\t" + std::string(to_string(a.entity_type)) + "\t" + a.concept_id.value_or("-1") + "\n";
    }
    out += "\n";
  }
  return out;
}

// ---- JSON Lines gold ----

namespace {

Document read_document(const json& j, std::size_t line) {
  auto fail = [&](const std::string& m) { return Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + m); };
  if (!j.is_object()) throw fail("expected an object");
  if (!j.contains("doc_id") || !j["doc_id"].is_string()) throw fail("missing string field doc_id");
  if (!j.contains("text") || !j["text"].is_string()) throw fail("missing string field text");
  Document d{j["doc_id"].get<std::string>(), j["text"].get<std::string>()};
  if (d.doc_id.empty()) throw fail("empty doc_id");
  if (trim(d.text).empty()) throw Error(ErrorKind::Integrity, "document " + d.doc_id + " has empty text");
  return d;
}

void check_unique(std::unordered_set<std::string>& seen, const std::string& id) {
  if (!seen.insert(id).second) throw Error(ErrorKind::DuplicateId, "duplicate doc_id " + id);
}

}  // namespace

std::vector<HpoGoldDoc> parse_hpo_gold(std::string_view text, const Ontology* ontology) {
  std::vector<HpoGoldDoc> out;
  std::unordered_set<std::string> seen;
  for_each_jsonl_text(text, [&](std::size_t line, const json& j) {
    HpoGoldDoc g{read_document(j, line), {}};
    check_unique(seen, g.doc.doc_id);
    if (!j.contains("hpo_ids") || !j["hpo_ids"].is_array())
      throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": missing array field hpo_ids");
    for (const auto& v : j["hpo_ids"]) {
      if (!v.is_string()) throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": hpo_ids entry not a string");
      TermId id = TermId::parse(v.get<std::string>());
      if (ontology && !ontology->contains(id))
        throw Error(ErrorKind::Validation, "document " + g.doc.doc_id + ": unknown term " + id.str());
      g.terms.insert(id);
    }
    out.push_back(std::move(g));
  });
  return out;
}

std::vector<HpoGoldDoc> load_hpo_gold(const std::filesystem::path& path, const Ontology* ontology) {
  return parse_hpo_gold(read_file(path), ontology);
}

std::string to_jsonl(const std::vector<HpoGoldDoc>& corpus) {
  std::string out;
  for (const auto& g : corpus) {
    json ids = json::array();
    for (const auto& t : g.terms) ids.push_back(t.str());
    out += json{{"doc_id", g.doc.doc_id}, {"text", g.doc.text}, {"hpo_ids", ids}}.dump() + "\n";
  }
  return out;
}

std::vector<MultiLabelDoc> parse_multilabel_gold(std::string_view text) {
  std::vector<MultiLabelDoc> out;
  std::unordered_set<std::string> seen;
  for_each_jsonl_text(text, [&](std::size_t line, const json& j) {
    MultiLabelDoc m{read_document(j, line), {}};
    check_unique(seen, m.doc.doc_id);
    if (!j.contains("labels") || !j["labels"].is_array())
      throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": missing array field labels");
    for (const auto& v : j["labels"]) {
      if (!v.is_string() || !in_multilabel_universe(v.get<std::string>()))
        throw Error(ErrorKind::Validation, "document " + m.doc.doc_id + ": label " + v.dump() + " not in universe");
      m.labels.insert(v.get<std::string>());
    }
    out.push_back(std::move(m));
  });
  return out;
}

std::vector<MultiLabelDoc> load_multilabel_gold(const std::filesystem::path& path) {
  return parse_multilabel_gold(read_file(path));
}

std::string to_jsonl(const std::vector<MultiLabelDoc>& corpus) {
  std::string out;
  for (const auto& m : corpus) {
    out += json{{"doc_id", m.doc.doc_id}, {"text", m.doc.text}, {"labels", m.labels}}.dump() + "\n";
  }
  return out;
}

// ---- synthetic fixtures ----

namespace {

constexpr std::array<std::string_view, 6> kNoteTemplates = {
    "Examination revealed {}.",
    "History is notable for {}.",
    "Caregiver reports {} since the last visit.",
    "Clinician documented {} at follow-up.",
    "Assessment today: {}.",
    "Ongoing concern regarding {}.",
};

std::string fill(std::string_view tmpl, std::string_view value) {
  std::string out(tmpl);
  out.replace(out.find("{}"), 2, value);
  return out;
}

std::string note_header(std::size_t i) { return "Synthetic clinical note " + std::to_string(i + 1) + "."; }

// Word-bounded sub-spans of a normalized name.
std::vector<std::string> bounded_substrings(const std::string& s) {
  auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  std::vector<std::size_t> starts, ends;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (alnum(s[i]) && (i == 0 || !alnum(s[i - 1]))) starts.push_back(i);
    if (alnum(s[i]) && (i + 1 == s.size() || !alnum(s[i + 1]))) ends.push_back(i + 1);
  }
  std::vector<std::string> out;
  for (auto b : starts)
    for (auto e : ends)
      if (e > b) out.push_back(s.substr(b, e - b));
  return out;
}

}  // namespace

std::vector<TermId> dictionary_safe_terms(const Ontology& ontology) {
  std::unordered_map<std::string, std::vector<std::size_t>> by_name;
  const auto& terms = ontology.terms();
  for (std::size_t i = 0; i < terms.size(); ++i) by_name[normalize_text(terms[i].name)].push_back(i);

  std::vector<bool> unsafe(terms.size(), false);
  std::string filler = normalize_text(note_header(0));
  for (auto t : kNoteTemplates) filler += " | " + normalize_text(fill(t, "|"));

  for (std::size_t i = 0; i < terms.size(); ++i) {
    const std::string name = normalize_text(terms[i].name);
    if (name.empty()) {
      unsafe[i] = true;
      continue;
    }
    if (by_name[name].size() > 1) unsafe[i] = true;
    if (!find_word_bounded(filler, name).empty()) unsafe[i] = true;
    for (const auto& sub : bounded_substrings(name)) {
      if (sub == name) continue;
      auto it = by_name.find(sub);
      if (it == by_name.end()) continue;
      unsafe[i] = true;
      for (auto j : it->second) unsafe[j] = true;
    }
  }
  std::vector<TermId> out;
  for (std::size_t i = 0; i < terms.size(); ++i)
    if (!unsafe[i]) out.push_back(terms[i].id);
  std::sort(out.begin(), out.end());
  return out;
}

std::set<TermId> dictionary_scan(const Ontology& ontology, std::string_view text) {
  const std::string hay = normalize_text(text);
  std::set<TermId> found;
  for (const auto& t : ontology.terms()) {
    const std::string name = normalize_text(t.name);
    if (!name.empty() && !find_word_bounded(hay, name).empty()) found.insert(t.id);
  }
  return found;
}

std::vector<HpoGoldDoc> synthesize_fixture(std::uint64_t seed, const Ontology& ontology, std::size_t n_docs,
                                           std::size_t labels_per_doc) {
  if (n_docs == 0) throw Error(ErrorKind::Domain, "n_docs must be positive");
  if (labels_per_doc > ontology.term_count())
    throw Error(ErrorKind::Domain, "labels_per_doc " + std::to_string(labels_per_doc) + " exceeds ontology size " +
                                       std::to_string(ontology.term_count()));
  std::vector<TermId> pool = dictionary_safe_terms(ontology);
  if (labels_per_doc > pool.size())
    throw Error(ErrorKind::Domain, "labels_per_doc " + std::to_string(labels_per_doc) +
                                       " exceeds the " + std::to_string(pool.size()) + " dictionary-safe terms");
  Rng rng(seed);
  std::vector<HpoGoldDoc> out;
  out.reserve(n_docs);
  for (std::size_t i = 0; i < n_docs; ++i) {
    std::vector<TermId> picked = pool;
    rng.shuffle(picked);
    picked.erase(picked.begin() + static_cast<std::ptrdiff_t>(labels_per_doc), picked.end());
    std::string text = note_header(i);
    for (const auto& id : picked) {
      text += " " + fill(kNoteTemplates[rng.below(kNoteTemplates.size())], ontology.at(id).name);
    }
    HpoGoldDoc g{Document{"note-" + std::to_string(i + 1), text}, std::set<TermId>(picked.begin(), picked.end())};
    if (dictionary_scan(ontology, text) != g.terms)
      throw Error(ErrorKind::Integrity, "generated note " + g.doc.doc_id + " is not dictionary-recoverable");
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

constexpr std::array<std::string_view, 12> kChemicals = {
    "aspirin", "cisplatin", "haloperidol", "lithium", "warfarin", "morphine",
    "nicotine", "caffeine", "valproate", "amiodarone", "tacrolimus", "doxorubicin",
};
constexpr std::array<std::string_view, 12> kDiseases = {
    "nausea", "hepatitis", "hypertension", "seizures", "cardiomyopathy", "neutropenia",
    "delirium", "nephrotoxicity", "bradycardia", "psychosis", "pancreatitis", "thrombocytopenia",
};
constexpr std::array<std::string_view, 4> kSpanTemplates = {
    "Treatment with {C} was associated with {D}.",
    "We report {D} following exposure to {C}.",
    "Patients receiving {C} developed {D} within weeks.",
    "The incidence of {D} increased after {C} therapy.",
};

}  // namespace

std::vector<SpanDocument> synthesize_span_fixture(std::uint64_t seed, std::size_t n_docs,
                                                  std::size_t mentions_per_doc) {
  if (n_docs == 0) throw Error(ErrorKind::Domain, "n_docs must be positive");
  if (mentions_per_doc == 0) throw Error(ErrorKind::Domain, "mentions_per_doc must be positive");
  Rng rng(seed);
  std::vector<SpanDocument> out;
  for (std::size_t i = 0; i < n_docs; ++i) {
    SpanDocument sd;
    sd.doc.doc_id = "abs-" + std::to_string(i + 1);
    std::string& text = sd.doc.text;
    text = "Synthetic abstract " + std::to_string(i + 1) + ".";
    // each sentence contributes one chemical and one disease mention
    std::size_t sentences = (mentions_per_doc + 1) / 2;
    for (std::size_t s = 0; s < sentences; ++s) {
      std::string_view tmpl = kSpanTemplates[rng.below(kSpanTemplates.size())];
      std::string_view chem = kChemicals[rng.below(kChemicals.size())];
      std::string_view dis = kDiseases[rng.below(kDiseases.size())];
      text += " ";
      std::size_t pos = 0;
      while (pos < tmpl.size()) {
        if (tmpl.compare(pos, 3, "{C}") == 0 || tmpl.compare(pos, 3, "{D}") == 0) {
          bool is_chem = tmpl[pos + 1] == 'C';
          std::string_view surface = is_chem ? chem : dis;
          std::size_t start = utf8_length(text);
          text += surface;
          sd.spans.push_back(SpanAnnotation{start, start + utf8_length(surface), std::string(surface),
                                            is_chem ? EntityType::Chemical : EntityType::Disease, std::nullopt});
          pos += 3;
        } else {
          text.push_back(tmpl[pos++]);
        }
      }
    }
    out.push_back(std::move(sd));
  }
  return out;
}

std::vector<MultiLabelDoc> synthesize_multilabel_fixture(std::uint64_t seed, std::size_t n_docs) {
  if (n_docs == 0) throw Error(ErrorKind::Domain, "n_docs must be positive");
  const auto& universe = multilabel_universe();
  Rng rng(seed);
  std::vector<MultiLabelDoc> out;
  for (std::size_t i = 0; i < n_docs; ++i) {
    MultiLabelDoc m;
    m.doc.doc_id = "mimic-" + std::to_string(i + 1);
    std::size_t n = 1 + rng.below(3);
    std::vector<std::string> labels(universe.begin(), universe.end());
    rng.shuffle(labels);
    labels.resize(n);
    m.doc.text = "Discharge summary " + std::to_string(i + 1) + ".";
    for (const auto& l : labels) {
      std::string phrase = to_lower_ascii(l);
      std::replace(phrase.begin(), phrase.end(), '.', ' ');
      m.doc.text += " Findings consistent with " + phrase + ".";
    }
    m.labels.insert(labels.begin(), labels.end());
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace phenokg
