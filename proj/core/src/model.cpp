#include "pfn/model.hpp"

#include "pfn/error.hpp"

namespace pfn {

void ModelConfig::validate() const {
  encoder.validate();
  if (entity_types == 0) throw ConfigError("model needs at least one entity type");
  if (relation_types == 0) throw ConfigError("model needs at least one relation type");
  if (!(loss.clamp_eps > 0.0 && loss.clamp_eps < 0.5)) throw ConfigError("clamp_eps must lie in (0, 0.5)");
}

namespace {

const ModelConfig& checked(const ModelConfig& c) {
  c.validate();
  return c;
}

ParamId make_embedding(ParameterStore& store, const ModelConfig& c) {
  if (c.vocab_size == 0) return {};
  return store.add("embedding.weight", {c.vocab_size, c.encoder.input_dim});
}

}  // namespace

PfnModel::PfnModel(const ModelConfig& config)
    : config_(checked(config)),
      embedding_(make_embedding(store_, config_)),
      encoder_(config_.encoder, store_),
      entity_unit_(store_, "ner", config_.encoder.hidden_dim, config_.effective_span_dim(),
                   config_.entity_types, config_.encoder.use_global),
      relation_unit_(store_, "re", config_.encoder.hidden_dim, config_.effective_span_dim(),
                     config_.relation_types, config_.encoder.use_global) {}

template <class Store>
Var PfnModel::embed(Tape& tape, Store& store, const ModelInput& input) const {
  if (input.embeddings != nullptr) {
    const Tensor& e = *input.embeddings;
    if (e.rank() != 2 || e.cols() != config_.encoder.input_dim) {
      throw DimensionError("precomputed embeddings have width " + std::to_string(e.cols()) + ", model expects " +
                           std::to_string(config_.encoder.input_dim));
    }
    return tape.constant(e);
  }
  if (!embedding_.valid()) throw ConfigError("model has no embedding table; precomputed vectors required");
  if (input.token_ids.empty()) throw DimensionError("empty sentence");
  for (auto id : input.token_ids) {
    if (id >= config_.vocab_size) throw DimensionError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tape.gather_rows(tape.parameter(store[embedding_].tensor), input.token_ids);
}

TableProbs PfnModel::forward(Tape& tape, const ModelInput& input, ForwardNoise noise) {
  Dropout dropout = noise.rng != nullptr ? Dropout(noise.dropout, *noise.rng) : Dropout{};
  const Var x = dropout.apply(tape, embed(tape, store_, input));
  const EncodedFeatures f = encoder_.encode(tape, store_, x);
  std::optional<Var> ge, gr;
  if (f.global) {
    ge = f.global->entity;
    gr = f.global->relation;
  }
  return {entity_unit_.fill(tape, store_, f.entity, ge, dropout),
          relation_unit_.fill(tape, store_, f.relation, gr, dropout)};
}

EncodedFeatures PfnModel::features(Tape& tape, const ModelInput& input) const {
  return encoder_.encode(tape, store_, embed(tape, store_, input));
}

TableProbs PfnModel::forward(Tape& tape, const ModelInput& input) const {
  const EncodedFeatures f = features(tape, input);
  std::optional<Var> ge, gr;
  if (f.global) {
    ge = f.global->entity;
    gr = f.global->relation;
  }
  return {entity_unit_.fill(tape, store_, f.entity, ge), relation_unit_.fill(tape, store_, f.relation, gr)};
}

std::vector<double> start_pair_weights(std::size_t length, std::size_t relation_types,
                                       std::span<const EntitySpan> entities) {
  std::vector<bool> is_start(length, false);
  for (const auto& e : entities) {
    if (e.start < length) is_start[e.start] = true;
  }
  std::vector<double> w(length * length * relation_types, 0.0);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t m = 0; m < length; ++m)
      if (is_start[i] && is_start[m])
        for (std::size_t l = 0; l < relation_types; ++l) w[(i * length + m) * relation_types + l] = 1.0;
  return w;
}

Var PfnModel::loss(Tape& tape, const ModelInput& input, const ScoreTables& gold,
                   std::span<const EntitySpan> gold_entities, ForwardNoise noise) {
  if (gold.length != input.length() || gold.entity_types != config_.entity_types ||
      gold.relation_types != config_.relation_types) {
    throw DimensionError("gold tables do not match the input sentence or label sets");
  }
  const TableProbs probs = forward(tape, input, noise);
  if (config_.decoding == DecodingStrategy::selective) {
    const auto w = start_pair_weights(gold.length, gold.relation_types, gold_entities);
    return joint_loss(tape, probs.entity, probs.relation, gold, config_.loss, w);
  }
  return joint_loss(tape, probs.entity, probs.relation, gold, config_.loss);
}

ScoreTables PfnModel::predict_tables(const ModelInput& input) const {
  const std::size_t len = input.length();
  ScoreTables tables(len, config_.entity_types, config_.relation_types);
  if (len == 0) return tables;
  Tape tape;
  const TableProbs probs = forward(tape, input);
  const auto e = tape.value(probs.entity);
  const auto r = tape.value(probs.relation);
  tables.entity.assign(e.begin(), e.end());
  tables.relation.assign(r.begin(), r.end());
  return tables;
}

DecodedResult PfnModel::decode(const ScoreTables& tables, Thresholds thresholds) const {
  if (config_.decoding == DecodingStrategy::selective) {
    const DecodedResult ner = decode_universal(tables, thresholds);
    return decode_selective(tables, ner.entities, thresholds);
  }
  return decode_universal(tables, thresholds);
}

DecodedResult PfnModel::predict(const ModelInput& input, Thresholds thresholds) const {
  return decode(predict_tables(input), thresholds);
}

}  // namespace pfn
