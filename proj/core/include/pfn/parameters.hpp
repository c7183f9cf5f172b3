#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pfn/tensor.hpp"

namespace pfn {

struct ParamId {
  std::uint32_t index = UINT32_MAX;
  bool valid() const noexcept { return index != UINT32_MAX; }
};

struct Parameter {
  std::string name;
  Tensor tensor;
};

// Owns every learnable tensor of a model. Indices are stable for the store's
// lifetime, so components keep ParamIds instead of references.
class ParameterStore {
 public:
  ParamId add(std::string name, Shape shape);

  // Xavier-uniform for matrices, zeros for vectors.
  void initialize(std::mt19937_64& rng);

  Parameter& operator[](ParamId id) { return params_.at(id.index); }
  const Parameter& operator[](ParamId id) const { return params_.at(id.index); }
  ParamId find(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;
  std::vector<Parameter>& all() noexcept { return params_; }
  const std::vector<Parameter>& all() const noexcept { return params_; }

  void zero_grads();

 private:
  std::vector<Parameter> params_;
};

}  // namespace pfn
