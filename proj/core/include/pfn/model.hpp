#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "pfn/encoder.hpp"
#include "pfn/parameters.hpp"
#include "pfn/tape.hpp"
#include "pfn/tensor.hpp"
#include "pfn/types.hpp"
#include "pfn/units.hpp"

namespace pfn {

struct ModelConfig {
  EncoderConfig encoder;
  // Width of the ELU span/pair representation; 0 means hidden_dim.
  std::size_t span_dim = 0;
  // Rows of the trainable embedding table. 0: inputs are precomputed vectors
  // of width encoder.input_dim.
  std::size_t vocab_size = 0;
  std::size_t entity_types = 1;
  std::size_t relation_types = 1;
  LossOptions loss;
  // Selective: the relation loss sees only start pairs of gold entities and
  // decoding consults only start pairs of predicted entities.
  DecodingStrategy decoding = DecodingStrategy::universal;

  std::size_t effective_span_dim() const noexcept { return span_dim == 0 ? encoder.hidden_dim : span_dim; }
  void validate() const;
};

// One sentence worth of input: token ids for the lookup table, or a
// precomputed [L x input_dim] matrix.
struct ModelInput {
  std::vector<std::size_t> token_ids;
  const Tensor* embeddings = nullptr;

  std::size_t length() const { return embeddings != nullptr ? embeddings->rows() : token_ids.size(); }
};

struct TableProbs {
  Var entity;    // [L*L x |E|]
  Var relation;  // [L*L x |R|]
};

// Training-time noise; the default is a clean forward pass.
struct ForwardNoise {
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

class PfnModel {
 public:
  explicit PfnModel(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  const Encoder& encoder() const noexcept { return encoder_; }
  ParameterStore& parameters() noexcept { return store_; }
  const ParameterStore& parameters() const noexcept { return store_; }

  void initialize(std::mt19937_64& rng) { store_.initialize(rng); }

  // Records onto `tape` with gradients flowing into parameters().
  TableProbs forward(Tape& tape, const ModelInput& input, ForwardNoise noise = {});
  // Read-only forward pass.
  TableProbs forward(Tape& tape, const ModelInput& input) const;
  EncodedFeatures features(Tape& tape, const ModelInput& input) const;

  Var loss(Tape& tape, const ModelInput& input, const ScoreTables& gold,
           std::span<const EntitySpan> gold_entities, ForwardNoise noise = {});

  ScoreTables predict_tables(const ModelInput& input) const;
  DecodedResult predict(const ModelInput& input, Thresholds thresholds = {}) const;
  DecodedResult decode(const ScoreTables& tables, Thresholds thresholds) const;

 private:
  template <class Store>
  Var embed(Tape& tape, Store& store, const ModelInput& input) const;

  ModelConfig config_;
  ParameterStore store_;
  ParamId embedding_;
  Encoder encoder_;
  TableUnit entity_unit_;
  TableUnit relation_unit_;
};

// Relation-loss weights that keep only start-token pairs of `entities`.
std::vector<double> start_pair_weights(std::size_t length, std::size_t relation_types,
                                       std::span<const EntitySpan> entities);

}  // namespace pfn
