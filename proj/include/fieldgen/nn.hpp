#pragma once

#include <string>
#include <vector>

#include "fieldgen/rng.hpp"
#include "fieldgen/tensor.hpp"

// Small building blocks shared by the VAE, prior, and transformer.
namespace fieldgen::nn {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

// Ordered parameter registry; the order is the checkpoint order.
template <typename T>
class ParamSet {
 public:
  void add(std::string name, Tensor<T> tensor) { items_.push_back({std::move(name), std::move(tensor)}); }
  void append(const ParamSet& other) { items_.insert(items_.end(), other.items_.begin(), other.items_.end()); }
  const std::vector<NamedParam<T>>& items() const { return items_; }
  std::vector<Tensor<T>> tensors() const;
  std::size_t total_size() const;

 private:
  std::vector<NamedParam<T>> items_;
};

template <typename T>
Tensor<T> parameter(const Shape& shape, std::vector<T> values);
template <typename T>
Tensor<T> normal_parameter(const Shape& shape, double stddev, Rng& rng);
template <typename T>
Tensor<T> uniform_parameter(const Shape& shape, double limit, Rng& rng);

// y = x . W + b with W stored [in, out].
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  // Xavier-uniform weights, zero bias. `zero_init` zeroes the weights too.
  static Linear create(std::size_t in, std::size_t out, Rng& rng, bool zero_init = false);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(ParamSet<T>& set, const std::string& prefix) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

template <typename T>
struct Conv2d {
  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [out]
  std::size_t stride = 1;
  std::size_t pad = 0;

  // He-normal weights, zero bias; pad keeps "same" extents at stride 1.
  static Conv2d create(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(ParamSet<T>& set, const std::string& prefix) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;

  static LayerNorm create(std::size_t dim);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(ParamSet<T>& set, const std::string& prefix) const;
};

}  // namespace fieldgen::nn
