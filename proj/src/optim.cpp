#include "fieldgen/optim.hpp"

#include <cmath>
#include <string>

#include "fieldgen/errors.hpp"

namespace fieldgen {

template <typename T>
OptimizerState<T> OptimizerState<T>::for_params(const std::vector<Tensor<T>>& params, AdamWConfig config) {
  OptimizerState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), T(0));
    state.second_moment.emplace_back(p.numel(), T(0));
  }
  return state;
}

template <typename T>
void adamw_step(std::vector<Tensor<T>>& params, OptimizerState<T>& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw DimensionError("optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel() ||
        state.second_moment[i].size() != params[i].numel()) {
      throw DimensionError("optimizer moment shape mismatch at parameter " + std::to_string(i));
    }
    for (const T g : params[i].grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter " + std::to_string(i) + "; step aborted");
      }
    }
  }

  const AdamWConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - c.learning_rate * c.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    const auto g = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g.empty() ? 0.0 : static_cast<double>(g[j]);
      const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + c.epsilon);
      p[j] = static_cast<T>(static_cast<double>(p[j]) * decay - c.learning_rate * update);
    }
  }
}

template <typename T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (const T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.mutable_grad()) g = static_cast<T>(static_cast<double>(g) * f);
    }
  }
  return norm;
}

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void adamw_step(std::vector<Tensor<float>>&, OptimizerState<float>&);
template void adamw_step(std::vector<Tensor<double>>&, OptimizerState<double>&);
template double clip_grad_norm(std::vector<Tensor<float>>&, double);
template double clip_grad_norm(std::vector<Tensor<double>>&, double);
template void zero_grads(std::vector<Tensor<float>>&);
template void zero_grads(std::vector<Tensor<double>>&);

}  // namespace fieldgen
