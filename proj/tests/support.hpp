#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pfn/data.hpp"
#include "pfn/encoder.hpp"
#include "pfn/grad_check.hpp"
#include "pfn/model.hpp"
#include "pfn/parameters.hpp"
#include "pfn/tape.hpp"
#include "pfn/tensor.hpp"
#include "pfn/units.hpp"

namespace pfn::test {

inline std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> out(n);
  for (auto& v : out) v = u(rng);
  return out;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double amplitude = 1.0) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), uniform(n, rng, -amplitude, amplitude));
}

// Overwrites every parameter, biases included, with U(-amplitude, amplitude).
inline void randomize(ParameterStore& store, std::mt19937_64& rng, double amplitude) {
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  for (auto& p : store.all())
    for (auto& v : p.tensor.values()) v = u(rng);
}

inline ModelConfig small_model_config(std::size_t hidden = 8, std::size_t vocab = 12) {
  ModelConfig c;
  c.encoder.input_dim = 6;
  c.encoder.hidden_dim = hidden;
  c.vocab_size = vocab;
  c.entity_types = 2;
  c.relation_types = 2;
  return c;
}

// Random token ids plus one relation between two random single-token entities.
struct RandomSentence {
  ModelInput input;
  SentenceExample example;
};

inline RandomSentence random_sentence(std::mt19937_64& rng, std::size_t length, std::size_t vocab,
                                      std::size_t entity_types, std::size_t relation_types) {
  RandomSentence s;
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t id = rng() % vocab;
    s.input.token_ids.push_back(id);
    s.example.tokens.push_back("w" + std::to_string(id));
  }
  const std::size_t a = rng() % length;
  std::size_t b = rng() % length;
  if (b == a) b = (a + 1) % length;
  s.example.entities.push_back({a, a, static_cast<int>(rng() % entity_types)});
  s.example.entities.push_back({b, b, static_cast<int>(rng() % entity_types)});
  s.example.relations.push_back({0, static_cast<int>(rng() % relation_types), 1});
  return s;
}

// How strongly one task's encoder features depend on a parameter group: the
// largest change after nudging every entry by `delta`, and the largest
// reverse-mode gradient of a random projection of the features.
struct Sensitivity {
  double forward_change = 0.0;
  double gradient = 0.0;
};

inline Sensitivity sensitivity(const Encoder& encoder, ParameterStore& store, const Tensor& embeddings,
                               bool entity_features, const std::vector<ParamId>& group,
                               double delta = 1e-3) {
  auto features = [&] {
    Tape tape;
    const EncodedFeatures f = encoder.encode(tape, std::as_const(store), tape.constant(embeddings));
    const auto v = tape.value(entity_features ? f.entity : f.relation);
    return std::vector<double>(v.begin(), v.end());
  };
  Sensitivity s;
  const auto before = features();
  std::vector<std::vector<double>> saved;
  for (ParamId id : group) {
    auto values = store[id].tensor.values();
    saved.emplace_back(values.begin(), values.end());
    for (auto& v : values) v += delta;
  }
  const auto after = features();
  for (std::size_t k = 0; k < group.size(); ++k) {
    std::copy(saved[k].begin(), saved[k].end(), store[group[k]].tensor.values().begin());
  }
  for (std::size_t i = 0; i < before.size(); ++i) {
    s.forward_change = std::max(s.forward_change, std::abs(after[i] - before[i]));
  }

  store.zero_grads();
  Tape tape;
  const EncodedFeatures f = encoder.encode(tape, store, tape.constant(embeddings));
  const Var target = entity_features ? f.entity : f.relation;
  std::mt19937_64 rng(99);
  const Var weights = tape.constant(Tensor(tape.shape(target), uniform(before.size(), rng)));
  tape.backward(tape.sum(tape.hadamard(target, weights)));
  for (ParamId id : group) {
    for (double g : store[id].tensor.grad()) s.gradient = std::max(s.gradient, std::abs(g));
  }
  store.zero_grads();
  return s;
}

inline std::string failures(const GradCheckReport& report) {
  std::ostringstream out;
  for (const auto& e : report.entries) {
    if (e.passed) continue;
    out << "\n  " << e.name << '[' << e.worst_index << "] analytic " << e.analytic_at_worst << " numeric "
        << e.numeric_at_worst << " rel " << e.max_rel_error;
  }
  return out.str();
}

// Tables with independent U(0,1) cells.
inline ScoreTables random_tables(std::mt19937_64& rng, std::size_t length, std::size_t entity_types,
                                 std::size_t relation_types) {
  ScoreTables t(length, entity_types, relation_types);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : t.entity) v = u(rng);
  for (double& v : t.relation) v = u(rng);
  return t;
}

// Every (i, j, k, m, n, k', l) tuple checked against the three threshold
// conditions; `start_ok` restricts the relation cells consulted.
template <class StartFilter>
DecodedResult brute_force_decode(const ScoreTables& t, Thresholds th, StartFilter start_ok) {
  DecodedResult r;
  const std::size_t n_len = t.length;
  for (std::size_t i = 0; i < n_len; ++i)
    for (std::size_t j = i; j < n_len; ++j)
      for (std::size_t k = 0; k < t.entity_types; ++k)
        if (t.entity_at(i, j, k) >= th.entity) r.entities.push_back({i, j, static_cast<int>(k)});
  for (std::size_t i = 0; i < n_len; ++i)
    for (std::size_t j = i; j < n_len; ++j)
      for (std::size_t k = 0; k < t.entity_types; ++k)
        for (std::size_t m = 0; m < n_len; ++m)
          for (std::size_t n = m; n < n_len; ++n)
            for (std::size_t k2 = 0; k2 < t.entity_types; ++k2)
              for (std::size_t l = 0; l < t.relation_types; ++l) {
                if (t.entity_at(i, j, k) < th.entity || t.entity_at(m, n, k2) < th.entity) continue;
                if (!start_ok(i, m) || t.relation_at(i, m, l) < th.relation) continue;
                r.triples.push_back({{i, j, static_cast<int>(k)}, static_cast<int>(l), {m, n, static_cast<int>(k2)}});
              }
  std::sort(r.entities.begin(), r.entities.end());
  std::sort(r.triples.begin(), r.triples.end());
  return r;
}

inline DecodedResult brute_force_decode(const ScoreTables& t, Thresholds th = {}) {
  return brute_force_decode(t, th, [](std::size_t, std::size_t) { return true; });
}

}  // namespace pfn::test
