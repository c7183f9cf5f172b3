#include "pfn/evaluation.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "pfn/error.hpp"

namespace pfn {

std::string_view to_string(SpanMode m) noexcept { return m == SpanMode::partial ? "partial" : "exact"; }
std::string_view to_string(Averaging a) noexcept { return a == Averaging::macro ? "macro" : "micro"; }

SpanMode parse_span_mode(std::string_view s) {
  if (s == "exact") return SpanMode::exact;
  if (s == "partial") return SpanMode::partial;
  throw ConfigError("unknown span mode: " + std::string(s));
}

Averaging parse_averaging(std::string_view s) {
  if (s == "micro") return Averaging::micro;
  if (s == "macro") return Averaging::macro;
  throw ConfigError("unknown averaging: " + std::string(s));
}

Prf prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  Prf r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision_undefined = tp + fp == 0;
  r.recall_undefined = tp + fn == 0;
  r.precision = r.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = r.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double denom = r.precision + r.recall;
  r.f1 = denom == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / denom;
  return r;
}

namespace {

// Matching key plus the label used for macro averaging.
using EntityKey = std::tuple<std::size_t, std::size_t, int>;
using TripleKey = std::tuple<std::size_t, std::size_t, int, int, std::size_t, std::size_t, int>;

EntityKey entity_key(const EntitySpan& e, SpanMode mode) {
  if (mode == SpanMode::partial) return {e.end, e.end, e.type};
  return {e.start, e.end, e.type};
}

TripleKey triple_key(const Triple& t, SpanMode mode) {
  if (mode == SpanMode::partial) return {t.subject.end, t.subject.end, 0, t.relation, t.object.end, t.object.end, 0};
  return {t.subject.start, t.subject.end, t.subject.type, t.relation, t.object.start, t.object.end, t.object.type};
}

int label_of(const EntityKey& k) { return std::get<2>(k); }
int label_of(const TripleKey& k) { return std::get<3>(k); }

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

template <class Key>
class Scorer {
 public:
  void add_sentence(const std::set<Key>& predicted, const std::set<Key>& gold) {
    for (const auto& k : predicted) {
      auto& c = per_label_[label_of(k)];
      if (gold.count(k) != 0) {
        ++c.tp;
      } else {
        ++c.fp;
      }
    }
    for (const auto& k : gold) {
      if (predicted.count(k) == 0) ++per_label_[label_of(k)].fn;
    }
  }

  Prf result(Averaging averaging) const {
    Counts total;
    for (const auto& [label, c] : per_label_) {
      total.tp += c.tp;
      total.fp += c.fp;
      total.fn += c.fn;
    }
    Prf r = prf_from_counts(total.tp, total.fp, total.fn);
    if (averaging == Averaging::micro || per_label_.empty()) return r;
    double p = 0.0, rec = 0.0, f = 0.0;
    for (const auto& [label, c] : per_label_) {
      const Prf one = prf_from_counts(c.tp, c.fp, c.fn);
      p += one.precision;
      rec += one.recall;
      f += one.f1;
    }
    const double n = static_cast<double>(per_label_.size());
    r.precision = p / n;
    r.recall = rec / n;
    r.f1 = f / n;
    return r;
  }

 private:
  std::map<int, Counts> per_label_;
};

std::set<EntityKey> entity_keys(std::span<const EntitySpan> items, SpanMode mode) {
  std::set<EntityKey> out;
  for (const auto& e : items) out.insert(entity_key(e, mode));
  return out;
}

std::set<TripleKey> triple_keys(std::span<const Triple> items, SpanMode mode) {
  std::set<TripleKey> out;
  for (const auto& t : items) out.insert(triple_key(t, mode));
  return out;
}

}  // namespace

Prf ner_f1(std::span<const EntitySpan> predicted, std::span<const EntitySpan> gold, MatchCriteria criteria) {
  Scorer<EntityKey> s;
  s.add_sentence(entity_keys(predicted, criteria.span_mode), entity_keys(gold, criteria.span_mode));
  return s.result(criteria.averaging);
}

Prf re_f1(std::span<const Triple> predicted, std::span<const Triple> gold, MatchCriteria criteria) {
  Scorer<TripleKey> s;
  s.add_sentence(triple_keys(predicted, criteria.span_mode), triple_keys(gold, criteria.span_mode));
  return s.result(criteria.averaging);
}

Prf ner_f1_corpus(const std::vector<std::vector<EntitySpan>>& predicted,
                  const std::vector<std::vector<EntitySpan>>& gold, MatchCriteria criteria) {
  if (predicted.size() != gold.size()) throw DimensionError("ner_f1: prediction and gold sentence counts differ");
  Scorer<EntityKey> s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    s.add_sentence(entity_keys(predicted[i], criteria.span_mode), entity_keys(gold[i], criteria.span_mode));
  }
  return s.result(criteria.averaging);
}

Prf re_f1_corpus(const std::vector<std::vector<Triple>>& predicted, const std::vector<std::vector<Triple>>& gold,
                 MatchCriteria criteria) {
  if (predicted.size() != gold.size()) throw DimensionError("re_f1: prediction and gold sentence counts differ");
  Scorer<TripleKey> s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    s.add_sentence(triple_keys(predicted[i], criteria.span_mode), triple_keys(gold[i], criteria.span_mode));
  }
  return s.result(criteria.averaging);
}

std::optional<OverlapPattern> classify_overlap_pattern(std::span<const Triple> triples) {
  if (triples.empty()) return std::nullopt;
  bool seo = false;
  for (std::size_t a = 0; a < triples.size(); ++a) {
    const std::set<EntitySpan> ea{triples[a].subject, triples[a].object};
    for (std::size_t b = a + 1; b < triples.size(); ++b) {
      const std::set<EntitySpan> eb{triples[b].subject, triples[b].object};
      std::size_t shared = 0;
      for (const auto& e : ea) shared += eb.count(e);
      if (shared == ea.size() && shared == eb.size()) return OverlapPattern::entity_pair_overlap;
      if (shared >= 1) seo = true;
    }
  }
  return seo ? OverlapPattern::single_entity_overlap : OverlapPattern::normal;
}

MetricDiff metric_diff(const Prf& in_triple, const Prf& out_triple) {
  return {in_triple.precision - out_triple.precision, in_triple.recall - out_triple.recall,
          in_triple.f1 - out_triple.f1};
}

EvalReport evaluate(const std::vector<DecodedResult>& predictions, const Dataset& gold, MatchCriteria criteria) {
  if (predictions.size() != gold.sentences.size()) {
    throw DimensionError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(gold.sentences.size()) + " sentences");
  }
  const SpanMode mode = criteria.span_mode;
  EvalReport report;
  report.criteria = criteria;
  report.sentences = gold.sentences.size();

  Scorer<EntityKey> ner;
  Scorer<TripleKey> re;
  std::array<Scorer<TripleKey>, 3> pattern_scorers;
  std::array<std::size_t, 3> pattern_sentences{};
  std::array<Scorer<TripleKey>, 5> count_scorers;
  std::array<std::size_t, 5> count_sentences{};
  Counts in_counts, out_counts;

  for (std::size_t s = 0; s < gold.sentences.size(); ++s) {
    const auto& ex = gold.sentences[s];
    const auto& pred = predictions[s];
    const auto gold_triples = ex.gold_triples();
    const auto pred_entities = entity_keys(pred.entities, mode);
    const auto gold_entities = entity_keys(ex.entities, mode);
    const auto pred_triples = triple_keys(pred.triples, mode);
    const auto gold_triple_set = triple_keys(gold_triples, mode);
    ner.add_sentence(pred_entities, gold_entities);
    re.add_sentence(pred_triples, gold_triple_set);

    if (auto pattern = classify_overlap_pattern(gold_triples)) {
      const auto p = static_cast<std::size_t>(*pattern);
      pattern_scorers[p].add_sentence(pred_triples, gold_triple_set);
      ++pattern_sentences[p];
      const std::size_t bucket = std::min<std::size_t>(gold_triple_set.size(), 5) - 1;
      count_scorers[bucket].add_sentence(pred_triples, gold_triple_set);
      ++count_sentences[bucket];
    } else {
      ++report.excluded;
    }

    std::set<EntityKey> gold_in, pred_in;
    for (const auto& t : gold_triples) {
      gold_in.insert(entity_key(t.subject, mode));
      gold_in.insert(entity_key(t.object, mode));
    }
    for (const auto& t : pred.triples) {
      pred_in.insert(entity_key(t.subject, mode));
      pred_in.insert(entity_key(t.object, mode));
    }
    for (const auto& k : pred_entities) {
      if (gold_entities.count(k) != 0) {
        ++(gold_in.count(k) != 0 ? in_counts : out_counts).tp;
      } else {
        ++(pred_in.count(k) != 0 ? in_counts : out_counts).fp;
      }
    }
    for (const auto& k : gold_entities) {
      if (pred_entities.count(k) == 0) ++(gold_in.count(k) != 0 ? in_counts : out_counts).fn;
    }
  }

  report.ner = ner.result(criteria.averaging);
  report.re = re.result(criteria.averaging);
  for (std::size_t p = 0; p < 3; ++p) {
    report.by_pattern.push_back({std::string(to_string(static_cast<OverlapPattern>(p))), pattern_sentences[p],
                                 pattern_scorers[p].result(criteria.averaging)});
  }
  for (std::size_t b = 0; b < 5; ++b) {
    report.by_triple_count.push_back(
        {b == 4 ? ">=5" : std::to_string(b + 1), count_sentences[b], count_scorers[b].result(criteria.averaging)});
  }
  report.in_triple = {"In-triple", report.sentences, prf_from_counts(in_counts.tp, in_counts.fp, in_counts.fn)};
  report.out_triple = {"Out-of-triple", report.sentences,
                       prf_from_counts(out_counts.tp, out_counts.fp, out_counts.fn)};
  if (!report.in_triple.scores.empty() && !report.out_triple.scores.empty()) {
    report.diff = metric_diff(report.in_triple.scores, report.out_triple.scores);
  }
  return report;
}

namespace {

using nlohmann::ordered_json;

ordered_json prf_json(const Prf& p) {
  ordered_json j;
  j["precision"] = p.precision;
  j["recall"] = p.recall;
  j["f1"] = p.f1;
  j["tp"] = p.tp;
  j["fp"] = p.fp;
  j["fn"] = p.fn;
  j["precision_undefined"] = p.precision_undefined;
  j["recall_undefined"] = p.recall_undefined;
  return j;
}

ordered_json cell_json(const BreakdownCell& c) {
  ordered_json j;
  j["label"] = c.label;
  j["sentences"] = c.sentences;
  j["scores"] = prf_json(c.scores);
  return j;
}

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  ordered_json j;
  j["span_mode"] = to_string(r.criteria.span_mode);
  j["averaging"] = to_string(r.criteria.averaging);
  j["sentences"] = r.sentences;
  j["ner"] = prf_json(r.ner);
  j["re"] = prf_json(r.re);
  j["by_pattern"] = ordered_json::array();
  for (const auto& c : r.by_pattern) j["by_pattern"].push_back(cell_json(c));
  j["by_triple_count"] = ordered_json::array();
  for (const auto& c : r.by_triple_count) j["by_triple_count"].push_back(cell_json(c));
  j["excluded_without_triples"] = r.excluded;
  j["in_triple"] = cell_json(r.in_triple);
  j["out_of_triple"] = cell_json(r.out_triple);
  if (r.diff) {
    j["diff"] = {{"precision", r.diff->precision}, {"recall", r.diff->recall}, {"f1", r.diff->f1}};
  } else {
    j["diff"] = nullptr;
  }
  return j.dump(2);
}

std::string report_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "section,label,sentences,precision,recall,f1,tp,fp,fn\n";
  auto row = [&](std::string_view section, const BreakdownCell& c) {
    out << section << ',' << c.label << ',' << c.sentences << ',' << num(c.scores.precision) << ','
        << num(c.scores.recall) << ',' << num(c.scores.f1) << ',' << c.scores.tp << ',' << c.scores.fp << ','
        << c.scores.fn << '\n';
  };
  row("overall", {"NER", r.sentences, r.ner});
  row("overall", {"RE", r.sentences, r.re});
  for (const auto& c : r.by_pattern) row("pattern", c);
  for (const auto& c : r.by_triple_count) row("triple_count", c);
  row("entity_group", r.in_triple);
  row("entity_group", r.out_triple);
  if (r.diff) {
    out << "entity_group,Diff,," << num(r.diff->precision) << ',' << num(r.diff->recall) << ',' << num(r.diff->f1)
        << ",,,\n";
  } else {
    out << "entity_group,Diff,,n/a,n/a,n/a,,,\n";
  }
  return out.str();
}

}  // namespace pfn
