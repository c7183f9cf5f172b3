#include "pfn/units.hpp"

#include <algorithm>
#include <set>

#include "pfn/error.hpp"

namespace pfn {

std::string_view to_string(OverlapPattern p) noexcept {
  switch (p) {
    case OverlapPattern::normal: return "Normal";
    case OverlapPattern::single_entity_overlap: return "SEO";
    case OverlapPattern::entity_pair_overlap: return "EPO";
  }
  return "Normal";
}

ScoreTables::ScoreTables(std::size_t length, std::size_t entity_types, std::size_t relation_types)
    : length(length),
      entity_types(entity_types),
      relation_types(relation_types),
      entity(length * length * entity_types, 0.0),
      relation(length * length * relation_types, 0.0) {}

TableUnit::TableUnit(ParameterStore& store, const std::string& prefix, std::size_t hidden_dim,
                     std::size_t span_dim, std::size_t outputs, bool use_global)
    : hidden_dim_(hidden_dim), outputs_(outputs), use_global_(use_global) {
  if (outputs == 0) throw ConfigError(prefix + ": needs at least one label");
  span_ = LinearLayer::create(store, prefix + ".span", span_dim, (use_global ? 3 : 2) * hidden_dim);
  output_ = LinearLayer::create(store, prefix + ".output", outputs, span_dim);
}

template <class Store>
Var TableUnit::fill_impl(Tape& tape, Store& store, Var features, std::optional<Var> global,
                         Dropout dropout) const {
  const Shape s = tape.shape(features);
  if (s.size() != 2 || s[0] == 0) throw DimensionError("table unit: empty sentence");
  if (s[1] != hidden_dim_) throw DimensionError("table unit: feature width mismatch");
  if (use_global_ && !global) throw DimensionError("table unit: global features required");

  const BoundLinear span = bind(tape, store, span_);
  const BoundLinear output = bind(tape, store, output_);
  // W [h_i ; h_j ; g] + b == W_1 h_i + W_2 h_j + (W_3 g + b), evaluated once per
  // token instead of once per pair.
  const Var w_first = tape.col_block(span.weight, 0, hidden_dim_);
  const Var w_second = tape.col_block(span.weight, hidden_dim_, hidden_dim_);
  const Var first = tape.linear_rows(features, w_first, Var{});
  const Var second = tape.linear_rows(features, w_second, Var{});
  Var offset = span.bias;
  if (use_global_) {
    const Var w_global = tape.col_block(span.weight, 2 * hidden_dim_, hidden_dim_);
    offset = tape.linear(*global, w_global, span.bias);
  }
  Var pairs = tape.elu(tape.pairwise_sum(first, second, offset));
  pairs = dropout.apply(tape, pairs);
  return tape.sigmoid(output.rows(tape, pairs));
}

Var TableUnit::fill(Tape& tape, ParameterStore& store, Var features, std::optional<Var> global,
                    Dropout dropout) const {
  return fill_impl(tape, store, features, global, dropout);
}

Var TableUnit::fill(Tape& tape, const ParameterStore& store, Var features,
                    std::optional<Var> global) const {
  return fill_impl(tape, store, features, global, Dropout{});
}

std::vector<double> entity_cell_weights(std::size_t length, std::size_t entity_types,
                                        bool mask_lower_triangle) {
  std::vector<double> w(length * length * entity_types, 1.0);
  if (!mask_lower_triangle) return w;
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j < i; ++j)
      for (std::size_t k = 0; k < entity_types; ++k) w[(i * length + j) * entity_types + k] = 0.0;
  return w;
}

namespace {

double scored_cells(std::span<const double> weights) {
  double n = 0.0;
  for (double w : weights) n += w != 0.0 ? 1.0 : 0.0;
  return n;
}

}  // namespace

Var joint_loss(Tape& tape, Var entity_probs, Var relation_probs, const ScoreTables& gold,
               const LossOptions& options, std::span<const double> relation_weights) {
  const auto entity_weights =
      entity_cell_weights(gold.length, gold.entity_types, options.mask_lower_triangle);
  std::vector<double> rel_w;
  if (relation_weights.empty()) {
    rel_w.assign(gold.relation.size(), 1.0);
  } else {
    rel_w.assign(relation_weights.begin(), relation_weights.end());
  }
  Var ner = tape.bce_sum(entity_probs, gold.entity, entity_weights, options.clamp_eps);
  Var re = tape.bce_sum(relation_probs, gold.relation, rel_w, options.clamp_eps);
  if (options.normalize) {
    ner = tape.scale(ner, 1.0 / std::max(1.0, scored_cells(entity_weights)));
    re = tape.scale(re, 1.0 / std::max(1.0, scored_cells(rel_w)));
  }
  return tape.add(ner, re);
}

double joint_loss(const ScoreTables& predicted, const ScoreTables& gold, const LossOptions& options) {
  if (predicted.length != gold.length || predicted.entity.size() != gold.entity.size() ||
      predicted.relation.size() != gold.relation.size()) {
    throw DimensionError("joint_loss: predicted and gold tables differ in shape");
  }
  Tape tape;
  const Var e = tape.constant(Tensor::vector(predicted.entity));
  const Var r = tape.constant(Tensor::vector(predicted.relation));
  return tape.scalar(joint_loss(tape, e, r, gold, options));
}

std::string_view to_string(DecodingStrategy s) noexcept {
  return s == DecodingStrategy::selective ? "selective" : "universal";
}

DecodingStrategy parse_decoding(std::string_view s) {
  if (s == "universal") return DecodingStrategy::universal;
  if (s == "selective") return DecodingStrategy::selective;
  throw ConfigError("unknown decoding strategy: " + std::string(s));
}

std::vector<HeadTriple> DecodedResult::head_only() const {
  std::set<HeadTriple> heads;
  for (const auto& t : triples) heads.insert({t.subject.start, t.relation, t.object.start});
  return {heads.begin(), heads.end()};
}

namespace {

std::vector<EntitySpan> accepted_entities(const ScoreTables& tables, double threshold) {
  std::vector<EntitySpan> out;
  for (std::size_t i = 0; i < tables.length; ++i)
    for (std::size_t j = i; j < tables.length; ++j)
      for (std::size_t k = 0; k < tables.entity_types; ++k)
        if (tables.entity_at(i, j, k) >= threshold) out.push_back({i, j, static_cast<int>(k)});
  std::sort(out.begin(), out.end());
  return out;
}

template <class StartFilter>
std::vector<Triple> assemble_triples(const ScoreTables& tables, const std::vector<EntitySpan>& entities,
                                     double threshold, StartFilter allowed) {
  std::vector<Triple> out;
  for (const auto& s : entities) {
    for (const auto& o : entities) {
      if (!allowed(s.start, o.start)) continue;
      for (std::size_t l = 0; l < tables.relation_types; ++l) {
        if (tables.relation_at(s.start, o.start, l) >= threshold) {
          out.push_back({s, static_cast<int>(l), o});
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DecodedResult decode_universal(const ScoreTables& tables, Thresholds thresholds) {
  DecodedResult r;
  r.entities = accepted_entities(tables, thresholds.entity);
  r.triples = assemble_triples(tables, r.entities, thresholds.relation,
                               [](std::size_t, std::size_t) { return true; });
  return r;
}

DecodedResult decode_selective(const ScoreTables& tables, std::span<const EntitySpan> candidates,
                               Thresholds thresholds) {
  std::vector<bool> is_start(tables.length, false);
  for (const auto& c : candidates) {
    if (c.start < tables.length) is_start[c.start] = true;
  }
  DecodedResult r;
  r.entities = accepted_entities(tables, thresholds.entity);
  r.triples = assemble_triples(tables, r.entities, thresholds.relation,
                               [&](std::size_t i, std::size_t m) { return is_start[i] && is_start[m]; });
  return r;
}

}  // namespace pfn
