#include "pfn/parameters.hpp"

#include <cmath>

#include "pfn/error.hpp"

namespace pfn {

ParamId ParameterStore::add(std::string name, Shape shape) {
  if (find(name).valid()) throw Error("duplicate parameter name: " + name);
  Tensor t(std::move(shape));
  t.enable_grad();
  params_.push_back({std::move(name), std::move(t)});
  return ParamId{static_cast<std::uint32_t>(params_.size() - 1)};
}

void ParameterStore::initialize(std::mt19937_64& rng) {
  for (auto& p : params_) {
    auto& t = p.tensor;
    if (t.rank() == 2) {
      const double bound = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : t.values()) v = dist(rng);
    } else {
      for (auto& v : t.values()) v = 0.0;
    }
  }
}

ParamId ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return ParamId{static_cast<std::uint32_t>(i)};
  }
  return {};
}

std::size_t ParameterStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace pfn
