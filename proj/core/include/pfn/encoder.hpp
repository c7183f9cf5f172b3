#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pfn/layers.hpp"
#include "pfn/parameters.hpp"
#include "pfn/tape.hpp"

namespace pfn {

enum class Direction { unidirectional, bidirectional };
enum class EncodingScheme { joint, sequential, parallel };

std::string_view to_string(Direction d) noexcept;
std::string_view to_string(EncodingScheme s) noexcept;
Direction parse_direction(std::string_view s);
EncodingScheme parse_scheme(std::string_view s);

struct EncoderConfig {
  std::size_t input_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 1;
  Direction direction = Direction::unidirectional;
  bool use_global = true;
  // Gates have width hidden_dim / chunk_count and are tiled chunk_count
  // times; chunk_count == 1 is the fine-grained partition.
  std::size_t chunk_count = 1;
  EncodingScheme scheme = EncodingScheme::joint;

  std::size_t gate_dim() const { return hidden_dim / chunk_count; }
  void validate() const;
};

// ---------------------------------------------------------------------------
// Partition filter cell

struct PfnCellParams {
  LinearLayer candidate;
  // Index 0 gates the previous cell c_{t-1}, index 1 the candidate cell.
  std::array<LinearLayer, 2> entity_gate;
  std::array<LinearLayer, 2> relation_gate;
  LinearLayer entity_feature;
  LinearLayer relation_feature;
  LinearLayer shared_feature;
  LinearLayer cell;
  LinearLayer hidden;

  static PfnCellParams create(ParameterStore& store, const std::string& prefix,
                              std::size_t input_dim, std::size_t hidden_dim, std::size_t gate_dim);
};

struct BoundPfnCell {
  BoundLinear candidate;
  std::array<BoundLinear, 2> entity_gate;
  std::array<BoundLinear, 2> relation_gate;
  BoundLinear entity_feature;
  BoundLinear relation_feature;
  BoundLinear shared_feature;
  BoundLinear cell;
  BoundLinear hidden;
  std::size_t chunk_count = 1;
};

BoundPfnCell bind(Tape& tape, ParameterStore& store, const PfnCellParams& p, std::size_t chunk_count);
BoundPfnCell bind(Tape& tape, const ParameterStore& store, const PfnCellParams& p,
                  std::size_t chunk_count);

struct GatePair {
  Var entity;    // non-decreasing within each chunk
  Var relation;  // non-increasing within each chunk
};

// Per-target-cell partition coefficients.
struct PartitionCoefficients {
  Var entity;
  Var relation;
  Var shared;
};

struct Partitions {
  PartitionCoefficients previous;
  PartitionCoefficients candidate;
  // Aggregated partition contents over both target cells.
  Var entity;
  Var relation;
  Var shared;
};

struct Memories {
  Var entity;
  Var relation;
  Var shared;
};

struct CellOutput {
  Var entity;
  Var relation;
  Var shared;
  Var cell;
  Var hidden;
};

// Everything computed inside one recurrent step.
struct StepState {
  Var candidate;
  GatePair previous_gates;
  GatePair candidate_gates;
  Partitions partitions;
  Memories memories;
  CellOutput output;
};

Var candidate_cell(Tape& tape, const BoundLinear& layer, Var x, Var h_prev);
GatePair compute_gates(Tape& tape, const BoundLinear& entity, const BoundLinear& relation, Var x,
                       Var h_prev, std::size_t chunk_count);
PartitionCoefficients partition_coefficients(Tape& tape, const GatePair& gates);
Partitions partition(Tape& tape, const GatePair& previous_gates, const GatePair& candidate_gates,
                     Var c_prev, Var c_candidate);
Memories filter_memories(Tape& tape, const Partitions& partitions);
CellOutput features_and_state(Tape& tape, const BoundPfnCell& cell, const Memories& memories);
StepState pfn_step(Tape& tape, const BoundPfnCell& cell, Var x, Var h_prev, Var c_prev);

// ---------------------------------------------------------------------------
// LSTM cell for the sequential / parallel baselines

struct LstmCellParams {
  LinearLayer input_gate;
  LinearLayer forget_gate;
  LinearLayer output_gate;
  LinearLayer candidate;

  static LstmCellParams create(ParameterStore& store, const std::string& prefix,
                               std::size_t input_dim, std::size_t hidden_dim);
};

struct BoundLstmCell {
  BoundLinear input_gate;
  BoundLinear forget_gate;
  BoundLinear output_gate;
  BoundLinear candidate;
};

BoundLstmCell bind(Tape& tape, ParameterStore& store, const LstmCellParams& p);
BoundLstmCell bind(Tape& tape, const ParameterStore& store, const LstmCellParams& p);

struct LstmState {
  Var hidden;
  Var cell;
};

LstmState lstm_cell(Tape& tape, const BoundLstmCell& cell, Var x, Var h_prev, Var c_prev);

// ---------------------------------------------------------------------------
// Sequence encoder

struct GlobalFeatures {
  Var entity;          // [H]
  Var relation;        // [H]
  Var entity_steps;    // [L x H] before pooling
  Var relation_steps;  // [L x H] before pooling
};

// Smallest gap between the largest and second-largest step of any pooled
// column; the pooled features are differentiable only where it is nonzero.
// Infinite for a single step.
double pool_margin(const Tape& tape, const GlobalFeatures& global);

struct EncodedFeatures {
  Var entity;    // [L x H]
  Var relation;  // [L x H]
  Var shared;    // [L x H]
  std::optional<GlobalFeatures> global;
};

// maxpool_t tanh(W [h_x,t ; h_s,t] + b) for x in {entity, relation}.
GlobalFeatures global_representation(Tape& tape, const BoundLinear& entity_projection,
                                     const BoundLinear& relation_projection, Var entity, Var relation,
                                     Var shared);

// Builds and owns the parameter layout for one EncoderConfig. The store passed
// to encode() must be the one given to the constructor.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, ParameterStore& store, const std::string& prefix = "encoder");

  const EncoderConfig& config() const noexcept { return config_; }

  // Runs the configured scheme over embeddings [L x input_dim].
  EncodedFeatures encode(Tape& tape, ParameterStore& store, Var embeddings) const;
  EncodedFeatures encode(Tape& tape, const ParameterStore& store, Var embeddings) const;

  // Parameters that shape each task's features; used by sensitivity analysis.
  // Joint: the entity / relation gate layers. Baselines: LSTM#1 / LSTM#2.
  std::vector<ParamId> entity_side_params() const;
  std::vector<ParamId> relation_side_params() const;

 private:
  struct Stack {
    // layers[k][0] forward, layers[k][1] backward (bidirectional only).
    std::vector<std::array<PfnCellParams, 2>> pfn;
    std::vector<std::array<LstmCellParams, 2>> lstm;
    // Direction merge projections [H x 2H]; entity, relation, shared for PFN.
    std::vector<LinearLayer> merge;
  };

  Stack make_pfn_stack(ParameterStore& store, const std::string& prefix);
  Stack make_lstm_stack(ParameterStore& store, const std::string& prefix, std::size_t input_dim);

  template <class Store>
  EncodedFeatures encode_impl(Tape& tape, Store& store, Var embeddings) const;
  template <class Store>
  std::array<std::vector<Var>, 3> run_pfn(Tape& tape, Store& store, const std::vector<Var>& inputs) const;
  template <class Store>
  std::vector<Var> run_lstm(Tape& tape, Store& store, const Stack& stack,
                            const std::vector<Var>& inputs) const;

  EncoderConfig config_;
  Stack joint_;
  Stack entity_lstm_;
  Stack relation_lstm_;
  std::optional<std::array<LinearLayer, 2>> global_;
};

}  // namespace pfn
