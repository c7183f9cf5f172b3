#include "pfn/layers.hpp"

#include <vector>

namespace pfn {

LinearLayer LinearLayer::create(ParameterStore& store, const std::string& name, std::size_t out,
                                std::size_t in) {
  LinearLayer layer;
  layer.weight = store.add(name + ".weight", {out, in});
  layer.bias = store.add(name + ".bias", {out});
  return layer;
}

BoundLinear bind(Tape& tape, ParameterStore& store, const LinearLayer& layer) {
  return {tape.parameter(store[layer.weight].tensor), tape.parameter(store[layer.bias].tensor)};
}

BoundLinear bind(Tape& tape, const ParameterStore& store, const LinearLayer& layer) {
  return {tape.parameter(store[layer.weight].tensor), tape.parameter(store[layer.bias].tensor)};
}

Var Dropout::apply(Tape& tape, Var x) {
  if (!active()) return x;
  const std::size_t n = tape.value(x).size();
  std::bernoulli_distribution keep(1.0 - p_);
  const double kept = 1.0 / (1.0 - p_);
  std::vector<double> factor(n);
  for (auto& f : factor) f = keep(*rng_) ? kept : 0.0;
  return tape.mask_multiply(x, std::move(factor));
}

}  // namespace pfn
