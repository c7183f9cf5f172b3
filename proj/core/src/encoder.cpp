#include "pfn/encoder.hpp"

#include <algorithm>
#include <limits>

#include "pfn/error.hpp"

namespace pfn {

std::string_view to_string(Direction d) noexcept {
  return d == Direction::bidirectional ? "bidirectional" : "unidirectional";
}

std::string_view to_string(EncodingScheme s) noexcept {
  switch (s) {
    case EncodingScheme::joint: return "joint";
    case EncodingScheme::sequential: return "sequential";
    case EncodingScheme::parallel: return "parallel";
  }
  return "joint";
}

Direction parse_direction(std::string_view s) {
  if (s == "unidirectional" || s == "uni") return Direction::unidirectional;
  if (s == "bidirectional" || s == "bi") return Direction::bidirectional;
  throw ConfigError("unknown direction: " + std::string(s));
}

EncodingScheme parse_scheme(std::string_view s) {
  if (s == "joint") return EncodingScheme::joint;
  if (s == "sequential") return EncodingScheme::sequential;
  if (s == "parallel") return EncodingScheme::parallel;
  throw ConfigError("unknown encoding scheme: " + std::string(s));
}

void EncoderConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0) throw ConfigError("encoder dimensions must be positive");
  if (num_layers == 0) throw ConfigError("encoder needs at least one layer");
  if (chunk_count == 0 || hidden_dim % chunk_count != 0) {
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by chunk_count " +
                      std::to_string(chunk_count));
  }
}

// ---------------------------------------------------------------------------

PfnCellParams PfnCellParams::create(ParameterStore& store, const std::string& prefix,
                                    std::size_t input_dim, std::size_t hidden_dim,
                                    std::size_t gate_dim) {
  const std::size_t xh = input_dim + hidden_dim;
  PfnCellParams p;
  p.candidate = LinearLayer::create(store, prefix + ".candidate", hidden_dim, xh);
  p.entity_gate[0] = LinearLayer::create(store, prefix + ".entity_gate.prev", gate_dim, xh);
  p.entity_gate[1] = LinearLayer::create(store, prefix + ".entity_gate.cand", gate_dim, xh);
  p.relation_gate[0] = LinearLayer::create(store, prefix + ".relation_gate.prev", gate_dim, xh);
  p.relation_gate[1] = LinearLayer::create(store, prefix + ".relation_gate.cand", gate_dim, xh);
  p.entity_feature = LinearLayer::create(store, prefix + ".entity_feature", hidden_dim, hidden_dim);
  p.relation_feature = LinearLayer::create(store, prefix + ".relation_feature", hidden_dim, hidden_dim);
  p.shared_feature = LinearLayer::create(store, prefix + ".shared_feature", hidden_dim, hidden_dim);
  p.cell = LinearLayer::create(store, prefix + ".cell", hidden_dim, 3 * hidden_dim);
  p.hidden = LinearLayer::create(store, prefix + ".hidden", hidden_dim, hidden_dim);
  return p;
}

namespace {

template <class Store>
BoundPfnCell bind_cell(Tape& tape, Store& store, const PfnCellParams& p, std::size_t chunk_count) {
  BoundPfnCell b;
  b.candidate = bind(tape, store, p.candidate);
  for (std::size_t i = 0; i < 2; ++i) {
    b.entity_gate[i] = bind(tape, store, p.entity_gate[i]);
    b.relation_gate[i] = bind(tape, store, p.relation_gate[i]);
  }
  b.entity_feature = bind(tape, store, p.entity_feature);
  b.relation_feature = bind(tape, store, p.relation_feature);
  b.shared_feature = bind(tape, store, p.shared_feature);
  b.cell = bind(tape, store, p.cell);
  b.hidden = bind(tape, store, p.hidden);
  b.chunk_count = chunk_count;
  return b;
}

template <class Store>
BoundLstmCell bind_lstm(Tape& tape, Store& store, const LstmCellParams& p) {
  return {bind(tape, store, p.input_gate), bind(tape, store, p.forget_gate),
          bind(tape, store, p.output_gate), bind(tape, store, p.candidate)};
}

Var zeros(Tape& tape, std::size_t n) { return tape.constant(std::vector<double>(n, 0.0)); }

void append_layer(std::vector<ParamId>& out, const LinearLayer& layer) {
  out.push_back(layer.weight);
  out.push_back(layer.bias);
}

}  // namespace

BoundPfnCell bind(Tape& tape, ParameterStore& store, const PfnCellParams& p, std::size_t chunk_count) {
  return bind_cell(tape, store, p, chunk_count);
}

BoundPfnCell bind(Tape& tape, const ParameterStore& store, const PfnCellParams& p,
                  std::size_t chunk_count) {
  return bind_cell(tape, store, p, chunk_count);
}

Var candidate_cell(Tape& tape, const BoundLinear& layer, Var x, Var h_prev) {
  return tape.tanh(layer(tape, tape.concat({x, h_prev})));
}

GatePair compute_gates(Tape& tape, const BoundLinear& entity, const BoundLinear& relation, Var x,
                       Var h_prev, std::size_t chunk_count) {
  const Var xh = tape.concat({x, h_prev});
  const Var e = tape.cummax(entity(tape, xh));
  const Var r = tape.one_minus_cummax(relation(tape, xh));
  return {tape.tile(e, chunk_count), tape.tile(r, chunk_count)};
}

PartitionCoefficients partition_coefficients(Tape& tape, const GatePair& gates) {
  const Var shared = tape.hadamard(gates.entity, gates.relation);
  return {tape.sub(gates.entity, shared), tape.sub(gates.relation, shared), shared};
}

Partitions partition(Tape& tape, const GatePair& previous_gates, const GatePair& candidate_gates,
                     Var c_prev, Var c_candidate) {
  Partitions p;
  p.previous = partition_coefficients(tape, previous_gates);
  p.candidate = partition_coefficients(tape, candidate_gates);
  auto aggregate = [&](Var prev_coef, Var cand_coef) {
    return tape.add(tape.hadamard(prev_coef, c_prev), tape.hadamard(cand_coef, c_candidate));
  };
  p.entity = aggregate(p.previous.entity, p.candidate.entity);
  p.relation = aggregate(p.previous.relation, p.candidate.relation);
  p.shared = aggregate(p.previous.shared, p.candidate.shared);
  return p;
}

Memories filter_memories(Tape& tape, const Partitions& partitions) {
  return {tape.add(partitions.entity, partitions.shared),
          tape.add(partitions.relation, partitions.shared), partitions.shared};
}

CellOutput features_and_state(Tape& tape, const BoundPfnCell& cell, const Memories& memories) {
  CellOutput out;
  out.entity = tape.tanh(cell.entity_feature(tape, memories.entity));
  out.relation = tape.tanh(cell.relation_feature(tape, memories.relation));
  out.shared = tape.tanh(cell.shared_feature(tape, memories.shared));
  out.cell = cell.cell(tape, tape.concat({memories.entity, memories.relation, memories.shared}));
  out.hidden = tape.tanh(cell.hidden(tape, out.cell));
  return out;
}

StepState pfn_step(Tape& tape, const BoundPfnCell& cell, Var x, Var h_prev, Var c_prev) {
  StepState s;
  s.candidate = candidate_cell(tape, cell.candidate, x, h_prev);
  s.previous_gates =
      compute_gates(tape, cell.entity_gate[0], cell.relation_gate[0], x, h_prev, cell.chunk_count);
  s.candidate_gates =
      compute_gates(tape, cell.entity_gate[1], cell.relation_gate[1], x, h_prev, cell.chunk_count);
  s.partitions = partition(tape, s.previous_gates, s.candidate_gates, c_prev, s.candidate);
  s.memories = filter_memories(tape, s.partitions);
  s.output = features_and_state(tape, cell, s.memories);
  return s;
}

// ---------------------------------------------------------------------------

LstmCellParams LstmCellParams::create(ParameterStore& store, const std::string& prefix,
                                      std::size_t input_dim, std::size_t hidden_dim) {
  const std::size_t xh = input_dim + hidden_dim;
  return {LinearLayer::create(store, prefix + ".input_gate", hidden_dim, xh),
          LinearLayer::create(store, prefix + ".forget_gate", hidden_dim, xh),
          LinearLayer::create(store, prefix + ".output_gate", hidden_dim, xh),
          LinearLayer::create(store, prefix + ".candidate", hidden_dim, xh)};
}

BoundLstmCell bind(Tape& tape, ParameterStore& store, const LstmCellParams& p) {
  return bind_lstm(tape, store, p);
}

BoundLstmCell bind(Tape& tape, const ParameterStore& store, const LstmCellParams& p) {
  return bind_lstm(tape, store, p);
}

LstmState lstm_cell(Tape& tape, const BoundLstmCell& cell, Var x, Var h_prev, Var c_prev) {
  const Var xh = tape.concat({x, h_prev});
  const Var i = tape.sigmoid(cell.input_gate(tape, xh));
  const Var f = tape.sigmoid(cell.forget_gate(tape, xh));
  const Var o = tape.sigmoid(cell.output_gate(tape, xh));
  const Var g = tape.tanh(cell.candidate(tape, xh));
  const Var c = tape.add(tape.hadamard(f, c_prev), tape.hadamard(i, g));
  return {tape.hadamard(o, tape.tanh(c)), c};
}

// ---------------------------------------------------------------------------

GlobalFeatures global_representation(Tape& tape, const BoundLinear& entity_projection,
                                     const BoundLinear& relation_projection, Var entity, Var relation,
                                     Var shared) {
  if (tape.shape(entity).size() != 2 || tape.shape(entity)[0] == 0) {
    throw DimensionError("global_representation: empty sequence");
  }
  const Var ge = tape.tanh(entity_projection.rows(tape, tape.concat_cols(entity, shared)));
  const Var gr = tape.tanh(relation_projection.rows(tape, tape.concat_cols(relation, shared)));
  return {tape.max_rows(ge), tape.max_rows(gr), ge, gr};
}

double pool_margin(const Tape& tape, const GlobalFeatures& global) {
  double margin = std::numeric_limits<double>::infinity();
  for (Var steps : {global.entity_steps, global.relation_steps}) {
    const Shape s = tape.shape(steps);
    const auto v = tape.value(steps);
    for (std::size_t c = 0; c < s[1]; ++c) {
      double top = -std::numeric_limits<double>::infinity();
      double second = top;
      for (std::size_t i = 0; i < s[0]; ++i) {
        const double x = v[i * s[1] + c];
        if (x > top) {
          second = top;
          top = x;
        } else if (x > second) {
          second = x;
        }
      }
      if (s[0] > 1) margin = std::min(margin, top - second);
    }
  }
  return margin;
}

Encoder::Encoder(const EncoderConfig& config, ParameterStore& store, const std::string& prefix)
    : config_(config) {
  config_.validate();
  if (config_.scheme == EncodingScheme::joint) {
    joint_ = make_pfn_stack(store, prefix + ".pfn");
  } else {
    entity_lstm_ = make_lstm_stack(store, prefix + ".lstm_entity", config_.input_dim);
    const std::size_t second_input =
        config_.scheme == EncodingScheme::sequential ? config_.hidden_dim : config_.input_dim;
    relation_lstm_ = make_lstm_stack(store, prefix + ".lstm_relation", second_input);
  }
  if (config_.use_global) {
    const std::size_t h = config_.hidden_dim;
    global_ = std::array<LinearLayer, 2>{
        LinearLayer::create(store, prefix + ".global.entity", h, 2 * h),
        LinearLayer::create(store, prefix + ".global.relation", h, 2 * h)};
  }
}

Encoder::Stack Encoder::make_pfn_stack(ParameterStore& store, const std::string& prefix) {
  Stack s;
  const std::size_t h = config_.hidden_dim;
  const bool bi = config_.direction == Direction::bidirectional;
  for (std::size_t k = 0; k < config_.num_layers; ++k) {
    const std::size_t in = k == 0 ? config_.input_dim : (bi ? 2 * h : h);
    const std::string base = prefix + ".l" + std::to_string(k);
    std::array<PfnCellParams, 2> layer;
    layer[0] = PfnCellParams::create(store, base + ".fwd", in, h, config_.gate_dim());
    if (bi) layer[1] = PfnCellParams::create(store, base + ".bwd", in, h, config_.gate_dim());
    s.pfn.push_back(layer);
  }
  if (bi) {
    for (const char* task : {"entity", "relation", "shared"}) {
      s.merge.push_back(LinearLayer::create(store, prefix + ".merge." + task, h, 2 * h));
    }
  }
  return s;
}

Encoder::Stack Encoder::make_lstm_stack(ParameterStore& store, const std::string& prefix,
                                        std::size_t input_dim) {
  Stack s;
  const std::size_t h = config_.hidden_dim;
  const bool bi = config_.direction == Direction::bidirectional;
  for (std::size_t k = 0; k < config_.num_layers; ++k) {
    const std::size_t in = k == 0 ? input_dim : (bi ? 2 * h : h);
    const std::string base = prefix + ".l" + std::to_string(k);
    std::array<LstmCellParams, 2> layer;
    layer[0] = LstmCellParams::create(store, base + ".fwd", in, h);
    if (bi) layer[1] = LstmCellParams::create(store, base + ".bwd", in, h);
    s.lstm.push_back(layer);
  }
  if (bi) s.merge.push_back(LinearLayer::create(store, prefix + ".merge", h, 2 * h));
  return s;
}

template <class Store>
std::array<std::vector<Var>, 3> Encoder::run_pfn(Tape& tape, Store& store,
                                                 const std::vector<Var>& inputs) const {
  const std::size_t len = inputs.size();
  const std::size_t h = config_.hidden_dim;
  const std::size_t directions = config_.direction == Direction::bidirectional ? 2 : 1;
  // top[dir][task][t]
  std::array<std::array<std::vector<Var>, 3>, 2> top;
  std::vector<Var> layer_in = inputs;
  for (std::size_t k = 0; k < joint_.pfn.size(); ++k) {
    const bool last = k + 1 == joint_.pfn.size();
    std::array<std::vector<Var>, 2> hidden;
    for (std::size_t dir = 0; dir < directions; ++dir) {
      const BoundPfnCell cell = bind(tape, store, joint_.pfn[k][dir], config_.chunk_count);
      Var hs = zeros(tape, h);
      Var cs = zeros(tape, h);
      hidden[dir].assign(len, Var{});
      if (last) {
        for (auto& task : top[dir]) task.assign(len, Var{});
      }
      for (std::size_t step = 0; step < len; ++step) {
        const std::size_t t = dir == 0 ? step : len - 1 - step;
        const StepState st = pfn_step(tape, cell, layer_in[t], hs, cs);
        hs = st.output.hidden;
        cs = st.output.cell;
        hidden[dir][t] = hs;
        if (last) {
          top[dir][0][t] = st.output.entity;
          top[dir][1][t] = st.output.relation;
          top[dir][2][t] = st.output.shared;
        }
      }
    }
    if (!last) {
      for (std::size_t t = 0; t < len; ++t) {
        layer_in[t] = directions == 2 ? tape.concat({hidden[0][t], hidden[1][t]}) : hidden[0][t];
      }
    }
  }
  if (directions == 1) return top[0];
  std::array<std::vector<Var>, 3> merged;
  for (std::size_t task = 0; task < 3; ++task) {
    const BoundLinear proj = bind(tape, store, joint_.merge[task]);
    for (std::size_t t = 0; t < len; ++t) {
      merged[task].push_back(proj(tape, tape.concat({top[0][task][t], top[1][task][t]})));
    }
  }
  return merged;
}

template <class Store>
std::vector<Var> Encoder::run_lstm(Tape& tape, Store& store, const Stack& stack,
                                   const std::vector<Var>& inputs) const {
  const std::size_t len = inputs.size();
  const std::size_t h = config_.hidden_dim;
  const std::size_t directions = config_.direction == Direction::bidirectional ? 2 : 1;
  std::vector<Var> layer_in = inputs;
  std::array<std::vector<Var>, 2> hidden;
  for (std::size_t k = 0; k < stack.lstm.size(); ++k) {
    for (std::size_t dir = 0; dir < directions; ++dir) {
      const BoundLstmCell cell = bind(tape, store, stack.lstm[k][dir]);
      LstmState state{zeros(tape, h), zeros(tape, h)};
      hidden[dir].assign(len, Var{});
      for (std::size_t step = 0; step < len; ++step) {
        const std::size_t t = dir == 0 ? step : len - 1 - step;
        state = lstm_cell(tape, cell, layer_in[t], state.hidden, state.cell);
        hidden[dir][t] = state.hidden;
      }
    }
    if (k + 1 < stack.lstm.size()) {
      for (std::size_t t = 0; t < len; ++t) {
        layer_in[t] = directions == 2 ? tape.concat({hidden[0][t], hidden[1][t]}) : hidden[0][t];
      }
    }
  }
  if (directions == 1) return hidden[0];
  const BoundLinear proj = bind(tape, store, stack.merge[0]);
  std::vector<Var> merged;
  for (std::size_t t = 0; t < len; ++t) {
    merged.push_back(proj(tape, tape.concat({hidden[0][t], hidden[1][t]})));
  }
  return merged;
}

template <class Store>
EncodedFeatures Encoder::encode_impl(Tape& tape, Store& store, Var embeddings) const {
  const Shape shape = tape.shape(embeddings);
  if (shape.size() != 2 || shape[0] == 0) throw DimensionError("encode: empty sequence");
  if (shape[1] != config_.input_dim) {
    throw DimensionError("encode: embeddings " + shape_string(shape) + " vs input_dim " +
                         std::to_string(config_.input_dim));
  }
  std::vector<Var> inputs;
  for (std::size_t t = 0; t < shape[0]; ++t) inputs.push_back(tape.row(embeddings, t));

  EncodedFeatures out;
  if (config_.scheme == EncodingScheme::joint) {
    const auto f = run_pfn(tape, store, inputs);
    out.entity = tape.stack_rows(f[0]);
    out.relation = tape.stack_rows(f[1]);
    out.shared = tape.stack_rows(f[2]);
  } else {
    const auto e = run_lstm(tape, store, entity_lstm_, inputs);
    const auto r = run_lstm(tape, store, relation_lstm_,
                            config_.scheme == EncodingScheme::sequential ? e : inputs);
    out.entity = tape.stack_rows(e);
    out.relation = tape.stack_rows(r);
    // Baselines have no shared partition; use the mean of the task features.
    out.shared = tape.scale(tape.add(out.entity, out.relation), 0.5);
  }
  if (global_) {
    out.global = global_representation(tape, bind(tape, store, (*global_)[0]),
                                       bind(tape, store, (*global_)[1]), out.entity, out.relation,
                                       out.shared);
  }
  return out;
}

EncodedFeatures Encoder::encode(Tape& tape, ParameterStore& store, Var embeddings) const {
  return encode_impl(tape, store, embeddings);
}

EncodedFeatures Encoder::encode(Tape& tape, const ParameterStore& store, Var embeddings) const {
  return encode_impl(tape, store, embeddings);
}

std::vector<ParamId> Encoder::entity_side_params() const {
  std::vector<ParamId> out;
  if (config_.scheme == EncodingScheme::joint) {
    for (const auto& layer : joint_.pfn)
      for (std::size_t d = 0; d < (config_.direction == Direction::bidirectional ? 2u : 1u); ++d)
        for (const auto& g : layer[d].entity_gate) append_layer(out, g);
  } else {
    for (const auto& layer : entity_lstm_.lstm)
      for (std::size_t d = 0; d < (config_.direction == Direction::bidirectional ? 2u : 1u); ++d)
        for (const auto* l : {&layer[d].input_gate, &layer[d].forget_gate, &layer[d].output_gate,
                              &layer[d].candidate})
          append_layer(out, *l);
    for (const auto& m : entity_lstm_.merge) append_layer(out, m);
  }
  return out;
}

std::vector<ParamId> Encoder::relation_side_params() const {
  std::vector<ParamId> out;
  if (config_.scheme == EncodingScheme::joint) {
    for (const auto& layer : joint_.pfn)
      for (std::size_t d = 0; d < (config_.direction == Direction::bidirectional ? 2u : 1u); ++d)
        for (const auto& g : layer[d].relation_gate) append_layer(out, g);
  } else {
    for (const auto& layer : relation_lstm_.lstm)
      for (std::size_t d = 0; d < (config_.direction == Direction::bidirectional ? 2u : 1u); ++d)
        for (const auto* l : {&layer[d].input_gate, &layer[d].forget_gate, &layer[d].output_gate,
                              &layer[d].candidate})
          append_layer(out, *l);
    for (const auto& m : relation_lstm_.merge) append_layer(out, m);
  }
  return out;
}

}  // namespace pfn
