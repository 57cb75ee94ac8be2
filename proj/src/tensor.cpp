#include "fieldgen/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "fieldgen/errors.hpp"

namespace fieldgen {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape) {
  return full(shape, T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value) {
  return from(shape, std::vector<T>(shape_numel(shape), value));
}

template <typename T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::vector<T> data) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (std::size_t s : shape) {
    if (s == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data = std::move(data);
  return Tensor(std::move(node));
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!node_->is_leaf) throw std::logic_error("mutable_data on a non-leaf tensor");
  return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf) throw std::logic_error("requires_grad can only be toggled on leaves");
  node_->requires_grad = on;
  return *this;
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) throw DimensionError("backward() needs a scalar, got " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order. Owning pointers keep
  // nodes alive while links are released below.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{node_, 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      std::shared_ptr<Node> p = top.first->parents[top.second++];
      if (p->requires_grad && seen.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = it->get();
    if (n->is_leaf) continue;
    if (n->backward && !n->grad.empty()) n->backward(*n);
    n->backward = nullptr;
    n->parents.clear();
    n->grad.clear();
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return detach();
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace fieldgen
