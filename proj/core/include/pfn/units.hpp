#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pfn/layers.hpp"
#include "pfn/parameters.hpp"
#include "pfn/tape.hpp"
#include "pfn/types.hpp"

namespace pfn {

// Entity table [L][L][|E|] and relation table [L][L][|R|], row-major, so that
// cell (i, j, k) lives at (i * L + j) * K + k.
struct ScoreTables {
  std::size_t length = 0;
  std::size_t entity_types = 0;
  std::size_t relation_types = 0;
  std::vector<double> entity;
  std::vector<double> relation;

  ScoreTables() = default;
  ScoreTables(std::size_t length, std::size_t entity_types, std::size_t relation_types);

  std::size_t entity_index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return (i * length + j) * entity_types + k;
  }
  std::size_t relation_index(std::size_t i, std::size_t j, std::size_t l) const noexcept {
    return (i * length + j) * relation_types + l;
  }
  double& entity_at(std::size_t i, std::size_t j, std::size_t k) { return entity[entity_index(i, j, k)]; }
  double entity_at(std::size_t i, std::size_t j, std::size_t k) const { return entity[entity_index(i, j, k)]; }
  double& relation_at(std::size_t i, std::size_t j, std::size_t l) { return relation[relation_index(i, j, l)]; }
  double relation_at(std::size_t i, std::size_t j, std::size_t l) const {
    return relation[relation_index(i, j, l)];
  }
};

// One table-filling head: ELU span/pair representation over
// [h_i ; h_j ; global] followed by a sigmoid layer with one output per label.
class TableUnit {
 public:
  TableUnit() = default;
  TableUnit(ParameterStore& store, const std::string& prefix, std::size_t hidden_dim,
            std::size_t span_dim, std::size_t outputs, bool use_global);

  // Probabilities [L*L x outputs]. `global` is ignored when the unit was built
  // without a global input. `dropout` applies to the pair representations.
  Var fill(Tape& tape, ParameterStore& store, Var features, std::optional<Var> global,
           Dropout dropout = {}) const;
  Var fill(Tape& tape, const ParameterStore& store, Var features, std::optional<Var> global) const;

  std::size_t outputs() const noexcept { return outputs_; }

 private:
  template <class Store>
  Var fill_impl(Tape& tape, Store& store, Var features, std::optional<Var> global,
                Dropout dropout) const;

  LinearLayer span_;
  LinearLayer output_;
  std::size_t hidden_dim_ = 0;
  std::size_t outputs_ = 0;
  bool use_global_ = true;
};

struct LossOptions {
  // Exclude entity cells with i > j.
  bool mask_lower_triangle = true;
  // Divide each task's sum by its number of scored cells.
  bool normalize = false;
  double clamp_eps = 1e-7;
};

// Per-cell weights of the entity table: 1 for scored cells, 0 for masked ones.
std::vector<double> entity_cell_weights(std::size_t length, std::size_t entity_types,
                                        bool mask_lower_triangle);

// L_ner + L_re, BCE summed over every unmasked cell. `relation_weights`, when
// non-empty, replaces the all-ones relation mask.
Var joint_loss(Tape& tape, Var entity_probs, Var relation_probs, const ScoreTables& gold,
               const LossOptions& options, std::span<const double> relation_weights = {});
double joint_loss(const ScoreTables& predicted, const ScoreTables& gold, const LossOptions& options);

struct Thresholds {
  double entity = 0.5;
  double relation = 0.5;
};

enum class DecodingStrategy { universal, selective };

std::string_view to_string(DecodingStrategy s) noexcept;
DecodingStrategy parse_decoding(std::string_view s);

struct DecodedResult {
  std::vector<EntitySpan> entities;  // sorted
  std::vector<Triple> triples;       // sorted

  std::vector<HeadTriple> head_only() const;
};

// Every span with e^k_ij >= λ_e, and every (subject, l, object) pair of such
// spans whose start tokens satisfy r^l_im >= λ_r.
DecodedResult decode_universal(const ScoreTables& tables, Thresholds thresholds = {});

// As decode_universal, but relation cells are consulted only for start-token
// pairs where both starts belong to spans in `candidates`.
DecodedResult decode_selective(const ScoreTables& tables, std::span<const EntitySpan> candidates,
                               Thresholds thresholds = {});

}  // namespace pfn
