#include "phenokg/cohortstats.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace phenokg {

FrequencyTable phenotype_frequency(const Graph& graph, const std::set<std::string>& cohort,
                                   const std::set<TermId>& terms, const Ontology& ontology,
                                   double min_confidence) {
  if (cohort.empty()) throw Error(ErrorKind::Domain, "phenotype_frequency needs a nonempty cohort");
  if (!std::isfinite(min_confidence) || min_confidence < 0.0 || min_confidence > 1.0)
    throw Error(ErrorKind::Domain, "min_confidence must be in [0,1]");
  for (const auto& t : terms) {
    if (!ontology.contains(t)) throw Error(ErrorKind::Validation, "term " + t.str() + " is not in the ontology");
  }
  FrequencyTable table;
  for (const auto& t : terms) table.emplace(t, TermFrequency{0, cohort.size()});
  for (const auto& key : cohort) {
    if (!graph.has_patient(key)) throw Error(ErrorKind::Domain, "cohort patient " + key + " is not in the graph");
    std::set<TermId> seen;
    for (const auto& a : graph.assertions_for(key)) {
      if (a.confidence >= min_confidence && terms.count(a.term)) seen.insert(a.term);
    }
    for (const auto& t : seen) ++table.at(t).count;
  }
  return table;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string term_name(const Ontology& ontology, const TermId& id) {
  const auto* t = ontology.find(id);
  return t ? t->name : "";
}

}  // namespace

std::string frequency_csv(const FrequencyTable& table, const Ontology& ontology) {
  std::string out = "term,name,count,cohort_size,fraction\n";
  for (const auto& [term, f] : table) {
    out += term.str() + "," + csv_field(term_name(ontology, term)) + "," + std::to_string(f.count) + "," +
           std::to_string(f.cohort_size) + "," + format_fixed(f.fraction().value()) + "\n";
  }
  return out;
}

std::vector<FrequencyComparison> compare_to_ontology(const FrequencyTable& frequencies,
                                                     const std::vector<DiseaseAnnotation>& annotations) {
  std::vector<FrequencyComparison> out;
  out.reserve(annotations.size());
  for (const auto& a : annotations) {
    auto it = frequencies.find(a.phenotype);
    if (it == frequencies.end())
      throw Error(ErrorKind::Domain, "annotated term " + a.phenotype.str() + " has no observed frequency");
    FrequencyComparison c{a.phenotype, 0, 0, Fraction{}, FrequencyCategory::Absent, a.expected, 0};
    c.observed_count = it->second.count;
    c.cohort_size = it->second.cohort_size;
    c.observed_fraction = it->second.fraction();
    c.observed_bin = frequency_bin(c.observed_fraction);
    c.expected_bin = a.expected;
    c.bin_delta = ordinal(c.observed_bin) - ordinal(c.expected_bin);
    out.push_back(c);
  }
  return out;
}

Grouping parse_grouping(std::string_view text, std::string_view source) {
  Grouping out;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto cols = split(line, '\t');
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (cols.size() != 2) throw Error(ErrorKind::Parse, where + ": expected term_id<TAB>group");
    if (to_lower_ascii(trim(cols[0])) == "term_id") continue;
    auto id = TermId::try_parse(cols[0]);
    if (!id) throw Error(ErrorKind::Parse, where + ": malformed term id '" + cols[0] + "'");
    std::string group(trim(cols[1]));
    if (group.empty()) throw Error(ErrorKind::Parse, where + ": empty group");
    if (!out.emplace(*id, group).second) throw Error(ErrorKind::DuplicateId, where + ": " + id->str() + " grouped twice");
  }
  return out;
}

Grouping load_grouping(const std::filesystem::path& path) { return parse_grouping(read_file(path), path.string()); }

Grouping group_by_ancestors(const Ontology& ontology, const std::set<TermId>& terms,
                            const std::vector<std::pair<TermId, std::string>>& roots) {
  Grouping out;
  for (const auto& t : terms) {
    const auto anc = ontology.ancestors(t);
    for (const auto& [root, label] : roots) {
      if (anc.count(root)) {
        out.emplace(t, label);
        break;
      }
    }
  }
  return out;
}

std::string heatmap_csv(const std::vector<FrequencyComparison>& comparisons, const Ontology& ontology,
                        const Grouping& grouping) {
  if (comparisons.empty()) throw Error(ErrorKind::Domain, "heatmap_csv needs at least one comparison");
  struct Row {
    std::string group;
    const FrequencyComparison* c;
  };
  std::vector<Row> rows;
  rows.reserve(comparisons.size());
  for (const auto& c : comparisons) {
    auto it = grouping.find(c.term);
    rows.push_back({it == grouping.end() ? "ungrouped" : it->second, &c});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.group, a.c->term) < std::tie(b.group, b.c->term);
  });
  std::string out = "term,name,group,observed_fraction,observed_bin,expected_bin,bin_delta\n";
  for (const auto& r : rows) {
    out += r.c->term.str() + "," + csv_field(term_name(ontology, r.c->term)) + "," + csv_field(r.group) + "," +
           format_fixed(r.c->observed_fraction.value()) + "," + std::string(to_string(r.c->observed_bin)) + "," +
           std::string(to_string(r.c->expected_bin)) + "," + std::to_string(r.c->bin_delta) + "\n";
  }
  return out;
}

}  // namespace phenokg
