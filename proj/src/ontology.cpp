#include "phenokg/ontology.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "phenokg/error.hpp"
#include "phenokg/util.hpp"

namespace phenokg {

// ---- TermId ----

std::optional<TermId> TermId::try_parse(std::string_view text) {
  std::string_view t = trim(text);
  if (t.size() != 10) return std::nullopt;
  if (std::toupper(static_cast<unsigned char>(t[0])) != 'H' ||
      std::toupper(static_cast<unsigned char>(t[1])) != 'P' || t[2] != ':')
    return std::nullopt;
  for (std::size_t i = 3; i < t.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(t[i]))) return std::nullopt;
  }
  return TermId("HP:" + std::string(t.substr(3)));
}

TermId TermId::parse(std::string_view text) {
  auto id = try_parse(text);
  if (!id) throw Error(ErrorKind::Parse, "not a term id (expected HP:#######): '" + std::string(text) + "'");
  return *id;
}

// ---- frequency categories ----

std::string_view to_string(FrequencyCategory c) {
  switch (c) {
    case FrequencyCategory::Absent: return "Absent";
    case FrequencyCategory::VeryRare: return "VeryRare";
    case FrequencyCategory::Occasional: return "Occasional";
    case FrequencyCategory::Frequent: return "Frequent";
    case FrequencyCategory::VeryFrequent: return "VeryFrequent";
    case FrequencyCategory::Obligate: return "Obligate";
  }
  return "?";
}

std::optional<FrequencyCategory> parse_frequency_category(std::string_view label) {
  std::string key;
  for (char c : trim(label)) {
    if (c == ' ' || c == '_' || c == '-') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "obligate" || key == "hp:0040280") return FrequencyCategory::Obligate;
  if (key == "veryfrequent" || key == "hp:0040281") return FrequencyCategory::VeryFrequent;
  if (key == "frequent" || key == "hp:0040282") return FrequencyCategory::Frequent;
  if (key == "occasional" || key == "hp:0040283") return FrequencyCategory::Occasional;
  if (key == "veryrare" || key == "hp:0040284") return FrequencyCategory::VeryRare;
  if (key == "absent" || key == "excluded" || key == "hp:0040285") return FrequencyCategory::Absent;
  return std::nullopt;
}

FrequencyCategory frequency_bin(Fraction f) {
  if (f.denominator == 0 || f.numerator > f.denominator)
    throw Error(ErrorKind::Domain, "fraction " + std::to_string(f.numerator) + "/" +
                                       std::to_string(f.denominator) + " outside [0,1]");
  // compare num/den >= p/100 as 100*num >= p*den; 128-bit avoids overflow
  using u128 = unsigned __int128;
  const u128 scaled = static_cast<u128>(f.numerator) * 100;
  const u128 den = f.denominator;
  if (f.numerator == 0) return FrequencyCategory::Absent;
  if (f.numerator == f.denominator) return FrequencyCategory::Obligate;
  if (scaled >= den * 80) return FrequencyCategory::VeryFrequent;
  if (scaled >= den * 30) return FrequencyCategory::Frequent;
  if (scaled >= den * 5) return FrequencyCategory::Occasional;
  return FrequencyCategory::VeryRare;
}

FrequencyCategory frequency_bin(double f) {
  if (!(f >= 0.0 && f <= 1.0))
    throw Error(ErrorKind::Domain, "fraction " + std::to_string(f) + " outside [0,1]");
  if (f == 0.0) return FrequencyCategory::Absent;
  if (f == 1.0) return FrequencyCategory::Obligate;
  if (f >= 0.80) return FrequencyCategory::VeryFrequent;
  if (f >= 0.30) return FrequencyCategory::Frequent;
  if (f >= 0.05) return FrequencyCategory::Occasional;
  return FrequencyCategory::VeryRare;
}

// ---- Ontology ----

Ontology::Ontology(std::vector<OntologyTerm> terms) : terms_(std::move(terms)) {
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const auto& t = terms_[i];
    if (trim(t.name).empty()) throw Error(ErrorKind::Validation, "term " + t.id.str() + " has an empty name");
    if (!by_id_.emplace(t.id.str(), i).second)
      throw Error(ErrorKind::DuplicateId, "duplicate term id " + t.id.str());
  }
  std::vector<std::string> orphans;
  for (const auto& t : terms_) {
    for (const auto& p : t.parents) {
      if (!by_id_.count(p.str())) orphans.push_back(t.id.str() + " -> " + p.str());
    }
  }
  if (!orphans.empty()) {
    std::string msg = "dangling is_a parents:";
    for (const auto& o : orphans) msg += " " + o;
    throw Error(ErrorKind::Validation, msg);
  }
  for (const auto& t : terms_) {
    by_name_[normalize_text(t.name)].push_back(t.id);
    for (const auto& s : t.synonyms) {
      auto& ids = by_synonym_[normalize_text(s)];
      if (std::find(ids.begin(), ids.end(), t.id) == ids.end()) ids.push_back(t.id);
    }
  }
  for (auto* m : {&by_name_, &by_synonym_}) {
    for (auto& [_, ids] : *m) std::sort(ids.begin(), ids.end());
  }
}

const OntologyTerm* Ontology::find(const TermId& id) const {
  auto it = by_id_.find(id.str());
  return it == by_id_.end() ? nullptr : &terms_[it->second];
}

const OntologyTerm& Ontology::at(const TermId& id) const {
  const auto* t = find(id);
  if (!t) throw Error(ErrorKind::Validation, "unknown term " + id.str());
  return *t;
}

std::vector<TermId> Ontology::resolve_label(std::string_view text) const {
  const std::string key = normalize_text(text);
  if (key.empty()) return {};
  if (auto it = by_name_.find(key); it != by_name_.end()) return it->second;
  if (auto it = by_synonym_.find(key); it != by_synonym_.end()) return it->second;
  return {};
}

std::set<TermId> Ontology::ancestors(const TermId& id) const {
  std::set<TermId> seen;
  std::vector<TermId> stack{id};
  while (!stack.empty()) {
    TermId cur = stack.back();
    stack.pop_back();
    if (!seen.insert(cur).second) continue;
    if (const auto* t = find(cur)) {
      for (const auto& p : t->parents) stack.push_back(p);
    }
  }
  return seen;
}

namespace {

std::string quote_obo(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// Reads a leading quoted OBO string; returns nullopt when the value is not quoted
// or the closing quote is missing.
std::optional<std::string> unquote_obo(std::string_view v) {
  v = trim(v);
  if (v.empty() || v.front() != '"') return std::nullopt;
  std::string out;
  for (std::size_t i = 1; i < v.size(); ++i) {
    char c = v[i];
    if (c == '\\' && i + 1 < v.size()) {
      char n = v[++i];
      out.push_back(n == 'n' ? '\n' : n);
      continue;
    }
    if (c == '"') return out;
    out.push_back(c);
  }
  return std::nullopt;
}

}  // namespace

std::string Ontology::to_obo() const {
  std::string out = "format-version: 1.2\n";
  for (const auto& t : terms_) {
    out += "\n[Term]\nid: " + t.id.str() + "\nname: " + t.name + "\n";
    if (!t.definition.empty()) out += "def: " + quote_obo(t.definition) + " []\n";
    for (const auto& s : t.synonyms) out += "synonym: " + quote_obo(s) + " EXACT []\n";
    for (const auto& p : t.parents) out += "is_a: " + p.str() + " ! " + at(p).name + "\n";
  }
  return out;
}

Ontology parse_ontology(std::string_view text, std::string_view source) {
  std::vector<OntologyTerm> terms;
  struct Pending {
    std::size_t line = 0;
    std::optional<TermId> id;
    std::optional<std::string> name;
    std::string def;
    std::vector<std::string> synonyms;
    std::vector<TermId> parents;
    bool obsolete = false;
  };
  std::optional<Pending> cur;
  bool in_other_stanza = false;
  const std::string src(source);

  auto fail = [&](std::size_t line, const std::string& msg) -> Error {
    return Error(ErrorKind::Parse, src + ":" + std::to_string(line) + ": " + msg);
  };
  auto flush = [&]() {
    if (!cur) return;
    if (!cur->id) throw fail(cur->line, "[Term] stanza without id");
    if (!cur->name || cur->name->empty()) throw fail(cur->line, "term " + cur->id->str() + " has no name");
    if (!cur->obsolete) {
      terms.push_back(OntologyTerm{*cur->id, *cur->name, std::move(cur->synonyms), std::move(cur->def),
                                   std::move(cur->parents)});
    }
    cur.reset();
  };

  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '!') continue;
    if (line.front() == '[') {
      flush();
      if (line == "[Term]") {
        cur = Pending{};
        cur->line = line_no;
        in_other_stanza = false;
      } else if (line.back() == ']') {
        in_other_stanza = true;  // [Typedef] and friends are outside the subset
      } else {
        throw fail(line_no, "malformed stanza header '" + std::string(line) + "'");
      }
      continue;
    }
    if (in_other_stanza) continue;
    auto colon = line.find(':');
    if (colon == std::string_view::npos) throw fail(line_no, "expected 'tag: value'");
    std::string_view tag = trim(line.substr(0, colon));
    std::string_view value = trim(line.substr(colon + 1));
    if (!cur) continue;  // header tags before the first stanza
    if (tag == "id") {
      if (cur->id) throw fail(line_no, "second id in one stanza");
      auto id = TermId::try_parse(value);
      if (!id) throw fail(line_no, "bad term id '" + std::string(value) + "'");
      cur->id = *id;
    } else if (tag == "name") {
      if (cur->name) throw fail(line_no, "second name in one stanza");
      cur->name = std::string(value);
    } else if (tag == "def") {
      auto q = unquote_obo(value);
      cur->def = q ? *q : std::string(value);
    } else if (tag == "synonym") {
      auto q = unquote_obo(value);
      if (!q) throw fail(line_no, "synonym must be a quoted string");
      cur->synonyms.push_back(*q);
    } else if (tag == "is_a") {
      std::string_view target = value.substr(0, value.find_first_of(" \t!"));
      auto id = TermId::try_parse(target);
      if (!id) throw fail(line_no, "bad is_a target '" + std::string(value) + "'");
      cur->parents.push_back(*id);
    } else if (tag == "is_obsolete") {
      cur->obsolete = trim(value) == "true";
    }
  }
  flush();
  return Ontology(std::move(terms));
}

Ontology load_ontology(const std::filesystem::path& path) {
  return parse_ontology(read_file(path), path.string());
}

std::vector<DiseaseAnnotation> parse_annotations(std::string_view text, const Ontology& ontology,
                                                 std::string_view source) {
  std::vector<DiseaseAnnotation> out;
  std::vector<std::string> unresolved;
  std::size_t line_no = 0;
  const std::string src(source);
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || trim(line).front() == '#') continue;
    auto cols = split(line, '\t');
    if (cols.size() != 3)
      throw Error(ErrorKind::Parse, src + ":" + std::to_string(line_no) + ": expected 3 tab-separated columns");
    if (line_no == 1 && trim(cols[0]) == "disease_id") continue;
    auto id = TermId::try_parse(cols[1]);
    if (!id) throw Error(ErrorKind::Parse, src + ":" + std::to_string(line_no) + ": bad term id '" + cols[1] + "'");
    auto cat = parse_frequency_category(cols[2]);
    if (!cat)
      throw Error(ErrorKind::Parse,
                  src + ":" + std::to_string(line_no) + ": unknown frequency category '" + cols[2] + "'");
    if (!ontology.contains(*id)) unresolved.push_back(id->str());
    out.push_back(DiseaseAnnotation{std::string(trim(cols[0])), *id, *cat});
  }
  if (!unresolved.empty()) {
    std::string msg = src + ": annotation terms not in ontology:";
    for (const auto& u : unresolved) msg += " " + u;
    throw Error(ErrorKind::Validation, msg);
  }
  return out;
}

std::vector<DiseaseAnnotation> load_annotations(const std::filesystem::path& path,
                                                const Ontology& ontology) {
  return parse_annotations(read_file(path), ontology, path.string());
}

}  // namespace phenokg
