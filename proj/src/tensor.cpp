#include "lieneurons/tensor.hpp"

#include "lieneurons/errors.hpp"

#include <cmath>
#include <unordered_set>

namespace lieneurons {
namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ArgumentError("tensor: shape " + shape_string(shape) + " needs " +
                        std::to_string(shape_numel(shape)) + " values, got " +
                        std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value.assign(data.begin(), data.end());
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), false));
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), false));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  return Tensor(make_leaf(std::move(shape), std::move(data), false));
}

Tensor Tensor::scalar(double value) { return Tensor(make_leaf({}, {value}, false)); }

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  return Tensor(make_leaf(std::move(shape), std::move(data), true));
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on a tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape();
  node->value = node_->value;
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  if (!node_ || numel() != 1) {
    throw UsageError("backward() without a seed needs a single-element tensor");
  }
  const double one = 1.0;
  backward(std::span<const double>(&one, 1));
}

void Tensor::backward(std::span<const double> seed) const {
  if (!node_ || !node_->requires_grad) {
    throw UsageError("backward() on a tensor that does not depend on any gradient-requiring input");
  }
  if (seed.size() != numel()) throw ArgumentError("backward(): seed size mismatch");

  // Post-order DFS gives a topological order with parents before children.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (node->backward) node->grad.assign(node->value.size(), 0.0);
  }
  auto& root = node_->grad_buffer();
  for (std::size_t i = 0; i < seed.size(); ++i) root[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) throw ArgumentError("grad_check: eps must lie in [1e-7, 1e-4]");
  Tensor probe = Tensor::parameter(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  const Tensor out = f(probe);
  if (out.numel() != 1) throw ArgumentError("grad_check: f must be scalar-valued");
  out.backward();
  std::vector<double> analytic(probe.numel(), 0.0);
  if (!probe.grad().empty()) analytic.assign(probe.grad().begin(), probe.grad().end());

  NoGradGuard no_grad;
  double worst = 0.0;
  std::vector<double> values(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + eps;
    const double up = f(Tensor::from(x.shape(), values)).item();
    values[i] = original - eps;
    const double down = f(Tensor::from(x.shape(), values)).item();
    values[i] = original;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) /
                       (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace lieneurons
