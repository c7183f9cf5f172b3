#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "pfn/parameters.hpp"
#include "pfn/tape.hpp"

namespace pfn {

// Weight [out x in] and bias [out] registered in a ParameterStore.
struct LinearLayer {
  ParamId weight;
  ParamId bias;

  static LinearLayer create(ParameterStore& store, const std::string& name, std::size_t out,
                            std::size_t in);
};

// A LinearLayer whose tensors are recorded on a particular tape.
struct BoundLinear {
  Var weight;
  Var bias;

  Var operator()(Tape& tape, Var x) const { return tape.linear(x, weight, bias); }
  Var rows(Tape& tape, Var x) const { return tape.linear_rows(x, weight, bias); }
};

BoundLinear bind(Tape& tape, ParameterStore& store, const LinearLayer& layer);
// Read-only binding: no gradient flows back into the store.
BoundLinear bind(Tape& tape, const ParameterStore& store, const LinearLayer& layer);

// Inverted dropout: kept units are scaled by 1/(1-p) so inference is a plain
// forward pass. A default-constructed Dropout is the identity.
class Dropout {
 public:
  Dropout() = default;
  Dropout(double p, std::mt19937_64& rng) : p_(p), rng_(&rng) {}

  bool active() const noexcept { return rng_ != nullptr && p_ > 0.0; }
  Var apply(Tape& tape, Var x);

 private:
  double p_ = 0.0;
  std::mt19937_64* rng_ = nullptr;
};

}  // namespace pfn
