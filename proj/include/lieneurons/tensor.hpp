#pragma once

// A dense row-major float64 array with reverse-mode differentiation over the
// small op set the equivariant layers need. Graphs are dynamic: every op on a
// gradient-requiring input records a node holding its backward rule, and
// backward() walks the nodes in reverse topological order.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace lieneurons {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// Eigen picks its vectorized path from each buffer's address, which changes the
// summation order. Fixing the alignment keeps results identical run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  Buffer& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);
  /// A gradient-requiring leaf.
  static Tensor parameter(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const& { return node_->value; }
  // Views into a temporary would dangle.
  std::span<const double> data() const&& = delete;
  /// Writable view of the values. Intended for leaves (parameters, inputs);
  /// writing into an interior node invalidates its recorded backward rule.
  std::span<double> mutable_data() { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_ && !node_->backward; }
  const char* op() const { return node_->op; }

  /// Accumulated gradient; empty until a backward pass reaches this tensor.
  std::span<const double> grad() const& { return node_->grad; }
  std::span<const double> grad() const&& = delete;
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  /// Seeds d(this)/d(this) = 1 (this must be a single-element tensor) and
  /// accumulates gradients into every gradient-requiring leaf. Throws
  /// UsageError when no gradient-requiring input feeds this tensor.
  void backward() const;
  void backward(std::span<const double> seed) const;

  /// Same values, no graph.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// While alive, ops on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Integer indices with a shape; produced by argmax, consumed by gather.
struct IndexTensor {
  Shape shape;
  std::vector<std::size_t> index;
};

// ---- ops ------------------------------------------------------------------
// Binary elementwise ops broadcast NumPy-style (right-aligned, size-1 dims).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);

/// a: [..., M, Q] treated as a (numel/Q) x Q matrix, b: [Q, P] -> [..., M, P].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Applies a P x Q matrix along `axis` of x (x.dim(axis) == Q):
/// out[..., p, ...] = sum_q m[p, q] x[..., q, ...].
Tensor contract_axis(const Tensor& m, const Tensor& x, std::size_t axis);

/// Per-slice x^T G y along `axis`, keeping `axis` with size 1. G is fixed.
Tensor bilinear(const Tensor& x, const Eigen::MatrixXd& G, const Tensor& y, std::size_t axis);

struct BilinearTerm {
  int i;
  int j;
  int k;
  double c;
};

/// Sparse bilinear map along `axis`: out[.., k, ..] = sum_t c_t u[.., i_t, ..] v[.., j_t, ..].
/// The output has `out_dim` entries along `axis`.
Tensor bilinear_map(const Tensor& u, const Tensor& v, std::span<const BilinearTerm> terms,
                    std::size_t out_dim, std::size_t axis);

/// Elementwise select; mask has a's shape and a, b must share it. The mask is
/// a constant of the graph.
Tensor where(const std::vector<std::uint8_t>& mask, const Tensor& a, const Tensor& b);

Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

Tensor reduce_sum(const Tensor& x);
Tensor reduce_sum(const Tensor& x, std::size_t axis, bool keepdim = true);
Tensor reduce_mean(const Tensor& x);
Tensor reduce_mean(const Tensor& x, std::size_t axis, bool keepdim = true);

/// Index of the maximum along `axis` (kept with size 1); ties go to the
/// smallest index. Not differentiable.
IndexTensor argmax(const Tensor& x, std::size_t axis);

/// take_along_axis: out has x's shape except out.dim(axis) = index.shape[axis];
/// index dims other than `axis` must equal x's or be 1 (broadcast).
Tensor gather(const Tensor& x, std::size_t axis, const IndexTensor& index);

/// Mean softmax cross-entropy over rows of logits [B, M] with labels in [0, M).
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Reverse-mode gradient of scalar f at x compared with central differences.
/// Returns max_i |g_ad - g_fd| / (|g_ad| + |g_fd| + 1e-12).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps);

}  // namespace lieneurons
