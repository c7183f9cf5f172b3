#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pfn/data.hpp"
#include "pfn/types.hpp"
#include "pfn/units.hpp"

namespace pfn {

enum class SpanMode { exact, partial };
enum class Averaging { micro, macro };

std::string_view to_string(SpanMode m) noexcept;
std::string_view to_string(Averaging a) noexcept;
SpanMode parse_span_mode(std::string_view s);
Averaging parse_averaging(std::string_view s);

// exact: (start, end, type) must match. partial: (end token, type), the only
// annotated token in tail-only data.
struct MatchCriteria {
  SpanMode span_mode = SpanMode::exact;
  Averaging averaging = Averaging::micro;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Pooled decision counts (summed over types for macro averaging).
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  // Set when a zero denominator forced the corresponding value to 0.
  bool precision_undefined = false;
  bool recall_undefined = false;

  bool empty() const noexcept { return tp + fp + fn == 0; }
};

Prf prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

// Single-sentence (or already pooled) scoring.
Prf ner_f1(std::span<const EntitySpan> predicted, std::span<const EntitySpan> gold, MatchCriteria criteria);
Prf re_f1(std::span<const Triple> predicted, std::span<const Triple> gold, MatchCriteria criteria);

// Corpus scoring: matching happens within each sentence, counts are pooled.
Prf ner_f1_corpus(const std::vector<std::vector<EntitySpan>>& predicted,
                  const std::vector<std::vector<EntitySpan>>& gold, MatchCriteria criteria);
Prf re_f1_corpus(const std::vector<std::vector<Triple>>& predicted, const std::vector<std::vector<Triple>>& gold,
                 MatchCriteria criteria);

// EPO if two triples share both entities, else SEO if two share exactly one,
// else Normal. nullopt for a sentence without triples.
std::optional<OverlapPattern> classify_overlap_pattern(std::span<const Triple> triples);

struct BreakdownCell {
  std::string label;
  std::size_t sentences = 0;
  Prf scores;
};

struct MetricDiff {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// In - Out per metric.
MetricDiff metric_diff(const Prf& in_triple, const Prf& out_triple);

struct EvalReport {
  MatchCriteria criteria;
  std::size_t sentences = 0;
  Prf ner;
  Prf re;
  // RE scores; sentences without gold triples are counted in `excluded`.
  std::vector<BreakdownCell> by_pattern;      // Normal, SEO, EPO
  std::vector<BreakdownCell> by_triple_count;  // 1, 2, 3, 4, >=5
  std::size_t excluded = 0;
  // NER scores split by whether the gold entity takes part in a gold triple.
  BreakdownCell in_triple;
  BreakdownCell out_triple;
  std::optional<MetricDiff> diff;  // nullopt when either group is empty
};

EvalReport evaluate(const std::vector<DecodedResult>& predictions, const Dataset& gold, MatchCriteria criteria);

std::string report_to_json(const EvalReport& report);
// One row per breakdown cell: section,label,sentences,precision,recall,f1,tp,fp,fn
std::string report_to_csv(const EvalReport& report);

}  // namespace pfn
