#include "fieldgen/nn.hpp"

#include <cmath>

#include "fieldgen/ops.hpp"

namespace fieldgen::nn {

template <typename T>
std::vector<Tensor<T>> ParamSet<T>::tensors() const {
  std::vector<Tensor<T>> out;
  out.reserve(items_.size());
  for (const auto& item : items_) out.push_back(item.tensor);
  return out;
}

template <typename T>
std::size_t ParamSet<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.tensor.numel();
  return n;
}

template <typename T>
Tensor<T> parameter(const Shape& shape, std::vector<T> values) {
  Tensor<T> t = Tensor<T>::from(shape, std::move(values));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> normal_parameter(const Shape& shape, double stddev, Rng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(stddev * rng.normal());
  return parameter<T>(shape, std::move(v));
}

template <typename T>
Tensor<T> uniform_parameter(const Shape& shape, double limit, Rng& rng) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(limit * (2.0 * rng.uniform() - 1.0));
  return parameter<T>(shape, std::move(v));
}

template <typename T>
Linear<T> Linear<T>::create(std::size_t in, std::size_t out, Rng& rng, bool zero_init) {
  Linear l;
  if (zero_init) {
    l.weight = parameter<T>({in, out}, std::vector<T>(in * out, T(0)));
  } else {
    l.weight = uniform_parameter<T>({in, out}, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
  }
  l.bias = parameter<T>({out}, std::vector<T>(out, T(0)));
  return l;
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  return ops::add_rows(ops::matmul(x, weight), bias);
}

template <typename T>
void Linear<T>::collect(ParamSet<T>& set, const std::string& prefix) const {
  set.add(prefix + ".weight", weight);
  set.add(prefix + ".bias", bias);
}

template <typename T>
Conv2d<T> Conv2d<T>::create(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, Rng& rng) {
  Conv2d c;
  const double fan_in = static_cast<double>(in * kernel * kernel);
  c.weight = normal_parameter<T>({out, in, kernel, kernel}, std::sqrt(2.0 / fan_in), rng);
  c.bias = parameter<T>({out}, std::vector<T>(out, T(0)));
  c.stride = stride;
  c.pad = kernel / 2;
  return c;
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  return ops::conv2d(x, weight, &bias, stride, pad);
}

template <typename T>
void Conv2d<T>::collect(ParamSet<T>& set, const std::string& prefix) const {
  set.add(prefix + ".weight", weight);
  set.add(prefix + ".bias", bias);
}

template <typename T>
LayerNorm<T> LayerNorm<T>::create(std::size_t dim) {
  return {parameter<T>({dim}, std::vector<T>(dim, T(1))), parameter<T>({dim}, std::vector<T>(dim, T(0)))};
}

template <typename T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T>& x) const {
  return ops::layer_norm(x, gamma, beta);
}

template <typename T>
void LayerNorm<T>::collect(ParamSet<T>& set, const std::string& prefix) const {
  set.add(prefix + ".gamma", gamma);
  set.add(prefix + ".beta", beta);
}

#define FIELDGEN_INSTANTIATE_NN(T)                                                   \
  template class ParamSet<T>;                                                        \
  template Tensor<T> parameter(const Shape&, std::vector<T>);                        \
  template Tensor<T> normal_parameter<T>(const Shape&, double, Rng&);                \
  template Tensor<T> uniform_parameter<T>(const Shape&, double, Rng&);               \
  template struct Linear<T>;                                                         \
  template struct Conv2d<T>;                                                         \
  template struct LayerNorm<T>;

FIELDGEN_INSTANTIATE_NN(float)
FIELDGEN_INSTANTIATE_NN(double)

}  // namespace fieldgen::nn
