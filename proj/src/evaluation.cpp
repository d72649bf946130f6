#include "phenokg/evaluation.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

namespace phenokg {

MetricRow metric_row(const ConfusionCounts& c) {
  MetricRow r;
  r.counts = c;
  if (c.tp + c.fp + c.fn == 0) {
    r.precision = r.recall = r.f1 = 1.0;
    return r;
  }
  r.precision = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  r.recall = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.f1 = c.tp == 0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::string_view to_string(MatchPolicy p) {
  switch (p) {
    case MatchPolicy::NormalizedMentionSet: return "normalized-mention-set";
    case MatchPolicy::ExactSpan: return "exact-span";
    case MatchPolicy::ConceptId: return "concept-id";
  }
  return "?";
}

std::optional<MatchPolicy> parse_match_policy(std::string_view s) {
  std::string k = to_lower_ascii(trim(s));
  if (k == "normalized-mention-set" || k == "mention") return MatchPolicy::NormalizedMentionSet;
  if (k == "exact-span" || k == "span") return MatchPolicy::ExactSpan;
  if (k == "concept-id" || k == "concept") return MatchPolicy::ConceptId;
  return std::nullopt;
}

namespace {

// Maps doc_id -> position in `pred` after checking both sides cover the
// same ids exactly once.
template <typename G, typename P, typename GetG, typename GetP>
std::vector<std::size_t> align(const std::vector<G>& gold, const std::vector<P>& pred, GetG gid, GetP pid) {
  std::unordered_map<std::string, std::size_t> pred_pos;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred_pos.emplace(pid(pred[i]), i).second)
      throw Error(ErrorKind::Domain, "duplicate prediction for doc " + pid(pred[i]));
  }
  std::set<std::string> seen;
  std::vector<std::string> missing;
  std::vector<std::size_t> order;
  order.reserve(gold.size());
  for (const auto& g : gold) {
    const std::string& id = gid(g);
    if (!seen.insert(id).second) throw Error(ErrorKind::Domain, "duplicate gold doc " + id);
    auto it = pred_pos.find(id);
    if (it == pred_pos.end()) missing.push_back(id);
    else order.push_back(it->second);
  }
  std::vector<std::string> extra;
  for (const auto& p : pred)
    if (!seen.count(pid(p))) extra.push_back(pid(p));
  std::sort(extra.begin(), extra.end());
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "gold and predictions cover different documents";
    auto list = [](const std::vector<std::string>& ids) {
      std::string s;
      for (const auto& id : ids) s += (s.empty() ? "" : ", ") + id;
      return s;
    };
    if (!missing.empty()) msg += "; missing predictions: " + list(missing);
    if (!extra.empty()) msg += "; predictions without gold: " + list(extra);
    throw Error(ErrorKind::Domain, msg);
  }
  return order;
}

using TypedKeys = std::map<EntityType, std::set<std::string>>;

TypedKeys span_keys(const SpanDocument& d, MatchPolicy policy) {
  TypedKeys out;
  for (const auto& s : d.spans) {
    switch (policy) {
      case MatchPolicy::NormalizedMentionSet: out[s.entity_type].insert(normalize_text(s.surface)); break;
      case MatchPolicy::ExactSpan:
        out[s.entity_type].insert(std::to_string(s.start) + ":" + std::to_string(s.end));
        break;
      case MatchPolicy::ConceptId:
        if (s.concept_id) out[s.entity_type].insert(*s.concept_id);
        break;
    }
  }
  return out;
}

MetricReport typed_report(const std::vector<std::pair<TypedKeys, TypedKeys>>& pairs) {
  std::map<EntityType, ConfusionCounts> totals{{EntityType::Chemical, {}}, {EntityType::Disease, {}}};
  static const std::set<std::string> kEmpty;
  for (const auto& [g, p] : pairs) {
    for (auto& [type, counts] : totals) {
      auto gi = g.find(type);
      auto pi = p.find(type);
      counts += compare_sets(gi == g.end() ? kEmpty : gi->second, pi == p.end() ? kEmpty : pi->second);
    }
  }
  MetricReport r;
  for (const auto& [type, counts] : totals) r.per_key[std::string(to_string(type))] = metric_row(counts);
  return r;
}

}  // namespace

MetricReport score_ner(const std::vector<SpanDocument>& gold, const std::vector<SpanDocument>& pred,
                       MatchPolicy policy) {
  auto id = [](const SpanDocument& d) -> const std::string& { return d.doc.doc_id; };
  auto order = align(gold, pred, id, id);
  std::vector<std::pair<TypedKeys, TypedKeys>> pairs;
  for (std::size_t i = 0; i < gold.size(); ++i)
    pairs.emplace_back(span_keys(gold[i], policy), span_keys(pred[order[i]], policy));
  return typed_report(pairs);
}

MetricReport score_ner(const std::vector<SpanDocument>& gold, const std::vector<NerResult>& pred,
                       MatchPolicy policy) {
  if (policy != MatchPolicy::NormalizedMentionSet)
    throw Error(ErrorKind::Domain, std::string(to_string(policy)) + " matching needs offset-bearing predictions");
  auto order = align(
      gold, pred, [](const SpanDocument& d) -> const std::string& { return d.doc.doc_id; },
      [](const NerResult& r) -> const std::string& { return r.doc_id; });
  std::vector<std::pair<TypedKeys, TypedKeys>> pairs;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    TypedKeys p;
    for (const auto& m : pred[order[i]].mentions) p[m.type].insert(normalize_text(m.surface));
    pairs.emplace_back(span_keys(gold[i], policy), std::move(p));
  }
  return typed_report(pairs);
}

MetricReport score_hpo(const std::vector<HpoGoldDoc>& gold, const std::vector<HpoExtraction>& pred) {
  auto order = align(
      gold, pred, [](const HpoGoldDoc& d) -> const std::string& { return d.doc.doc_id; },
      [](const HpoExtraction& r) -> const std::string& { return r.key; });
  ConfusionCounts total;
  for (std::size_t i = 0; i < gold.size(); ++i) total += compare_sets(gold[i].terms, pred[order[i]].terms());
  MetricReport r;
  r.per_key["hpo"] = metric_row(total);
  return r;
}

MetricReport score_multilabel(const std::vector<MultiLabelDoc>& gold, const std::vector<MultiLabelResult>& pred) {
  auto order = align(
      gold, pred, [](const MultiLabelDoc& d) -> const std::string& { return d.doc.doc_id; },
      [](const MultiLabelResult& r) -> const std::string& { return r.doc_id; });
  auto check = [](const std::set<std::string>& labels, const std::string& doc) {
    for (const auto& l : labels)
      if (!in_multilabel_universe(l)) throw Error(ErrorKind::Domain, "unknown label '" + l + "' in doc " + doc);
  };
  const auto& universe = multilabel_universe();
  std::map<std::string, ConfusionCounts> per_label;
  for (const auto& l : universe) per_label[l];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& g = gold[i].labels;
    const auto& p = pred[order[i]].labels;
    check(g, gold[i].doc.doc_id);
    check(p, gold[i].doc.doc_id);
    for (const auto& l : universe) {
      const bool in_g = g.count(l) > 0;
      const bool in_p = p.count(l) > 0;
      auto& c = per_label[l];
      if (in_g && in_p) ++c.tp;
      else if (in_p) ++c.fp;
      else if (in_g) ++c.fn;
      if (in_g == in_p) ++correct;
    }
  }
  MetricReport r;
  MetricRow macro;
  for (const auto& [label, counts] : per_label) {
    MetricRow row = metric_row(counts);
    macro.counts += counts;
    macro.precision += row.precision;
    macro.recall += row.recall;
    macro.f1 += row.f1;
    r.per_key[label] = row;
  }
  const double n = static_cast<double>(universe.size());
  macro.precision /= n;
  macro.recall /= n;
  macro.f1 /= n;
  r.per_key["macro"] = macro;
  const std::size_t cells = gold.size() * universe.size();
  r.micro_accuracy = cells == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(cells);
  return r;
}

namespace {

struct FlatRow {
  std::string model, key;
  const MetricRow* row;
  std::optional<double> micro;
};

std::vector<FlatRow> flatten(const std::vector<ReportEntry>& entries) {
  if (entries.empty()) throw Error(ErrorKind::Domain, "render_report needs at least one report");
  std::vector<FlatRow> rows;
  for (const auto& e : entries)
    for (const auto& [key, row] : e.report.per_key) rows.push_back({e.model, key, &row, e.report.micro_accuracy});
  std::stable_sort(rows.begin(), rows.end(), [](const FlatRow& a, const FlatRow& b) {
    return std::tie(a.model, a.key) < std::tie(b.model, b.key);
  });
  return rows;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string render_report(const std::vector<ReportEntry>& entries, ReportFormat format) {
  auto rows = flatten(entries);
  std::string out;
  if (format == ReportFormat::Csv) {
    out = "model,type,precision,recall,f1,micro_accuracy\n";
    for (const auto& r : rows) {
      out += csv_field(r.model) + "," + csv_field(r.key) + "," + format_fixed(r.row->precision) + "," +
             format_fixed(r.row->recall) + "," + format_fixed(r.row->f1) + "," +
             (r.micro ? format_fixed(*r.micro) : "") + "\n";
    }
    return out;
  }
  out = "| model | type | precision | recall | f1 | micro_accuracy |\n|---|---|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    out += "| " + r.model + " | " + r.key + " | " + format_fixed(r.row->precision) + " | " +
           format_fixed(r.row->recall) + " | " + format_fixed(r.row->f1) + " | " +
           (r.micro ? format_fixed(*r.micro) : "-") + " |\n";
  }
  return out;
}

json report_json(const std::vector<ReportEntry>& entries) {
  json out = json::array();
  for (const auto& e : entries) {
    json per_key = json::object();
    for (const auto& [key, row] : e.report.per_key) {
      per_key[key] = {{"tp", row.counts.tp}, {"fp", row.counts.fp}, {"fn", row.counts.fn},
                      {"precision", row.precision}, {"recall", row.recall}, {"f1", row.f1}};
    }
    json item{{"model", e.model}, {"per_key", per_key}};
    item["micro_accuracy"] = e.report.micro_accuracy ? json(*e.report.micro_accuracy) : json(nullptr);
    out.push_back(item);
  }
  return out;
}

}  // namespace phenokg
