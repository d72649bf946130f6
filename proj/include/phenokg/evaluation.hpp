#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phenokg/corpus.hpp"
#include "phenokg/extraction.hpp"

namespace phenokg {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Counts for one gold/pred set pair.
template <typename Set>
ConfusionCounts compare_sets(const Set& gold, const Set& pred) {
  ConfusionCounts c;
  for (const auto& p : pred) (gold.count(p) ? c.tp : c.fp)++;
  c.fn = gold.size() - c.tp;
  return c;
}

struct MetricRow {
  ConfusionCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// P, R and F1 from counts. Empty gold and empty pred scores 1/1/1;
/// otherwise 0/0 is 0.
MetricRow metric_row(const ConfusionCounts& c);

struct MetricReport {
  std::map<std::string, MetricRow> per_key;
  std::optional<double> micro_accuracy;
};

enum class MatchPolicy { NormalizedMentionSet, ExactSpan, ConceptId };

std::string_view to_string(MatchPolicy p);
std::optional<MatchPolicy> parse_match_policy(std::string_view s);

/// Per-document set comparison, counts summed per entity type. Keys are
/// "Chemical" and "Disease". Spans without a concept id are ignored under
/// ConceptId. Throws Error(Domain) when the doc id sets differ.
MetricReport score_ner(const std::vector<SpanDocument>& gold, const std::vector<SpanDocument>& pred,
                       MatchPolicy policy = MatchPolicy::NormalizedMentionSet);
/// Offset-free predictions (model output); only NormalizedMentionSet applies.
MetricReport score_ner(const std::vector<SpanDocument>& gold, const std::vector<NerResult>& pred,
                       MatchPolicy policy = MatchPolicy::NormalizedMentionSet);

/// Exact term-id set comparison, one report key "hpo".
MetricReport score_hpo(const std::vector<HpoGoldDoc>& gold, const std::vector<HpoExtraction>& pred);

/// One key per label plus "macro" (mean of the per-label P, R and F1), and
/// micro_accuracy over the doc x label grid.
MetricReport score_multilabel(const std::vector<MultiLabelDoc>& gold, const std::vector<MultiLabelResult>& pred);

struct ReportEntry {
  std::string model;
  MetricReport report;
};

enum class ReportFormat { Csv, Markdown };

/// Rows sorted by (model, key); numbers at 3 decimals. Throws Error(Domain)
/// for an empty list.
std::string render_report(const std::vector<ReportEntry>& entries, ReportFormat format);
json report_json(const std::vector<ReportEntry>& entries);

}  // namespace phenokg
