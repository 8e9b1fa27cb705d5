#include "lieneurons/errors.hpp"
#include "lieneurons/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lieneurons {
namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

Tensor make_result(Shape shape, detail::Buffer value, const char* op,
                   std::vector<NodePtr> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  const bool needs = grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                                   [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void require(bool condition, const std::string& message) {
  if (!condition) throw ArgumentError(message);
}

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    require(da == db || da == 1 || db == 1, std::string(op) + ": shapes " + shape_string(a) +
                                                 " and " + shape_string(b) + " do not broadcast");
    out[i] = da == 1 ? db : da;
  }
  return out;
}

// Strides of `in` indexed by the dims of `out` (0 on broadcast dims).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t i = in.size() - 1 - k;
    const std::size_t o = out.size() - 1 - k;
    strides[o] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

// Calls f(out_index, a_offset, b_offset) for every element of `out`.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t total = shape_numel(out);
  if (total == 0) return;
  const std::size_t rank = out.size();
  std::vector<std::size_t> counter(rank, 0);
  std::size_t oa = 0;
  std::size_t ob = 0;
  for (std::size_t i = 0; i < total; ++i) {
    f(i, oa, ob);
    for (std::size_t d = rank; d-- > 0;) {
      if (++counter[d] < out[d]) {
        oa += sa[d];
        ob += sb[d];
        break;
      }
      oa -= sa[d] * (out[d] - 1);
      ob -= sb[d] * (out[d] - 1);
      counter[d] = 0;
    }
  }
}

struct Binary {
  Shape out;
  std::vector<std::size_t> sa;
  std::vector<std::size_t> sb;
  bool same;
};

Binary plan_binary(const Tensor& a, const Tensor& b, const char* op) {
  require(a.defined() && b.defined(), std::string(op) + ": undefined operand");
  Binary p;
  p.same = a.shape() == b.shape();
  p.out = p.same ? a.shape() : broadcast_shapes(a.shape(), b.shape(), op);
  if (!p.same) {
    p.sa = broadcast_strides(a.shape(), p.out);
    p.sb = broadcast_strides(b.shape(), p.out);
  }
  return p;
}

template <typename Fwd, typename Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Bwd bwd) {
  auto plan = plan_binary(a, b, op);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  detail::Buffer out(shape_numel(plan.out));
  if (plan.same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for_each_broadcast(plan.out, plan.sa, plan.sb,
                       [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(av[ia], bv[ib]); });
  }
  return make_result(plan.out, std::move(out), op, {a.node(), b.node()}, [plan, bwd](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    double* ga = pa.requires_grad ? pa.grad_buffer().data() : nullptr;
    double* gb = pb.requires_grad ? pb.grad_buffer().data() : nullptr;
    const auto& av = pa.value;
    const auto& bv = pb.value;
    if (plan.same) {
      for (std::size_t i = 0; i < g.size(); ++i) bwd(g[i], av[i], bv[i], ga ? &ga[i] : nullptr, gb ? &gb[i] : nullptr);
    } else {
      for_each_broadcast(plan.out, plan.sa, plan.sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        bwd(g[i], av[ia], bv[ib], ga ? &ga[ia] : nullptr, gb ? &gb[ib] : nullptr);
      });
    }
  });
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  require(a.defined(), std::string(op) + ": undefined operand");
  const auto& av = a.node()->value;
  detail::Buffer out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_result(a.shape(), std::move(out), op, {a.node()}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    auto& gp = p.grad_buffer();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i] * deriv(p.value[i]);
  });
}

// outer x axis_len x inner decomposition of a shape around `axis`.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  require(axis < shape.size(), std::string(op) + ": axis " + std::to_string(axis) +
                                   " out of range for shape " + shape_string(shape));
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.len = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double, double* ga, double* gb) {
        if (ga) *ga += g;
        if (gb) *gb += g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double, double* ga, double* gb) {
        if (ga) *ga += g;
        if (gb) *gb -= g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double x, double y, double* ga, double* gb) {
        if (ga) *ga += g * y;
        if (gb) *gb += g * x;
      });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      a, "scale", [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.defined() && b.defined(), "matmul: undefined operand");
  require(a.rank() >= 1 && b.rank() == 2, "matmul: expected a of rank >= 1 and b of rank 2, got " +
                                              shape_string(a.shape()) + " and " + shape_string(b.shape()));
  const std::size_t q = a.shape().back();
  require(q == b.dim(0), "matmul: inner dimensions differ (" + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()) + ")");
  const std::size_t rows = q == 0 ? 0 : a.numel() / q;
  const std::size_t p = b.dim(1);
  Shape out_shape = a.shape();
  out_shape.back() = p;
  detail::Buffer out(rows * p);
  const auto ea = static_cast<Eigen::Index>(rows);
  const auto eq = static_cast<Eigen::Index>(q);
  const auto ep = static_cast<Eigen::Index>(p);
  MutMap(out.data(), ea, ep).noalias() = ConstMap(a.data().data(), ea, eq) * ConstMap(b.data().data(), eq, ep);
  return make_result(std::move(out_shape), std::move(out), "matmul", {a.node(), b.node()},
                     [ea, eq, ep](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       ConstMap g(self.grad.data(), ea, ep);
                       if (pa.requires_grad) {
                         MutMap(pa.grad_buffer().data(), ea, eq).noalias() += g * ConstMap(pb.value.data(), eq, ep).transpose();
                       }
                       if (pb.requires_grad) {
                         MutMap(pb.grad_buffer().data(), eq, ep).noalias() += ConstMap(pa.value.data(), ea, eq).transpose() * g;
                       }
                     });
}

Tensor contract_axis(const Tensor& m, const Tensor& x, std::size_t axis) {
  require(m.defined() && x.defined(), "contract_axis: undefined operand");
  require(m.rank() == 2, "contract_axis: matrix operand must be rank 2");
  const auto s = split_at(x.shape(), axis, "contract_axis");
  require(m.dim(1) == s.len, "contract_axis: matrix " + shape_string(m.shape()) +
                                 " does not match axis " + std::to_string(axis) + " of " +
                                 shape_string(x.shape()));
  const auto P = static_cast<Eigen::Index>(m.dim(0));
  const auto Q = static_cast<Eigen::Index>(s.len);
  const auto inner = static_cast<Eigen::Index>(s.inner);
  Shape out_shape = x.shape();
  out_shape[axis] = m.dim(0);
  detail::Buffer out(s.outer * m.dim(0) * s.inner);
  ConstMap mm(m.data().data(), P, Q);
  for (std::size_t o = 0; o < s.outer; ++o) {
    MutMap(out.data() + o * P * inner, P, inner).noalias() = mm * ConstMap(x.data().data() + o * Q * inner, Q, inner);
  }
  return make_result(std::move(out_shape), std::move(out), "contract_axis", {m.node(), x.node()},
                     [P, Q, inner, outer = s.outer](Node& self) {
                       Node& pm = *self.parents[0];
                       Node& px = *self.parents[1];
                       ConstMap mm(pm.value.data(), P, Q);
                       double* gx = px.requires_grad ? px.grad_buffer().data() : nullptr;
                       double* gm = pm.requires_grad ? pm.grad_buffer().data() : nullptr;
                       for (std::size_t o = 0; o < outer; ++o) {
                         ConstMap g(self.grad.data() + o * P * inner, P, inner);
                         if (gx) MutMap(gx + o * Q * inner, Q, inner).noalias() += mm.transpose() * g;
                         if (gm) {
                           MutMap(gm, P, Q).noalias() += g * ConstMap(px.value.data() + o * Q * inner, Q, inner).transpose();
                         }
                       }
                     });
}

Tensor bilinear(const Tensor& x, const Eigen::MatrixXd& G, const Tensor& y, std::size_t axis) {
  require(x.defined() && y.defined(), "bilinear: undefined operand");
  require(x.shape() == y.shape(), "bilinear: operand shapes differ (" + shape_string(x.shape()) +
                                      " vs " + shape_string(y.shape()) + ")");
  const auto s = split_at(x.shape(), axis, "bilinear");
  require(static_cast<std::size_t>(G.rows()) == s.len && static_cast<std::size_t>(G.cols()) == s.len,
          "bilinear: form size does not match axis length");
  const auto K = static_cast<Eigen::Index>(s.len);
  const auto inner = static_cast<Eigen::Index>(s.inner);
  const RowMatrix form = G;

  detail::Buffer gy(x.numel());
  detail::Buffer out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    MutMap block(gy.data() + o * K * inner, K, inner);
    block.noalias() = form * ConstMap(y.data().data() + o * K * inner, K, inner);
    ConstMap xb(x.data().data() + o * K * inner, K, inner);
    Eigen::Map<Eigen::RowVectorXd> row(out.data() + o * inner, inner);
    row = xb.cwiseProduct(block).colwise().sum();
  }
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  return make_result(std::move(out_shape), std::move(out), "bilinear", {x.node(), y.node()},
                     [form, gy = std::move(gy), K, inner, outer = s.outer](Node& self) {
                       Node& px = *self.parents[0];
                       Node& py = *self.parents[1];
                       double* gxp = px.requires_grad ? px.grad_buffer().data() : nullptr;
                       double* gyp = py.requires_grad ? py.grad_buffer().data() : nullptr;
                       RowMatrix scaled(K, inner);
                       for (std::size_t o = 0; o < outer; ++o) {
                         Eigen::Map<const Eigen::RowVectorXd> sbar(self.grad.data() + o * inner, inner);
                         if (gxp) {
                           MutMap(gxp + o * K * inner, K, inner) +=
                               ConstMap(gy.data() + o * K * inner, K, inner) * sbar.asDiagonal();
                         }
                         if (gyp) {
                           scaled.noalias() = ConstMap(px.value.data() + o * K * inner, K, inner) * sbar.asDiagonal();
                           MutMap(gyp + o * K * inner, K, inner).noalias() += form.transpose() * scaled;
                         }
                       }
                     });
}

Tensor bilinear_map(const Tensor& u, const Tensor& v, std::span<const BilinearTerm> terms,
                    std::size_t out_dim, std::size_t axis) {
  require(u.defined() && v.defined(), "bilinear_map: undefined operand");
  require(u.shape() == v.shape(), "bilinear_map: operand shapes differ (" + shape_string(u.shape()) +
                                      " vs " + shape_string(v.shape()) + ")");
  const auto s = split_at(u.shape(), axis, "bilinear_map");
  for (const auto& t : terms) {
    require(t.i >= 0 && t.j >= 0 && t.k >= 0 && static_cast<std::size_t>(t.i) < s.len &&
                static_cast<std::size_t>(t.j) < s.len && static_cast<std::size_t>(t.k) < out_dim,
            "bilinear_map: term index out of range");
  }
  std::vector<BilinearTerm> table(terms.begin(), terms.end());
  const std::size_t in_block = s.len * s.inner;
  const std::size_t out_block = out_dim * s.inner;
  detail::Buffer out(s.outer * out_block, 0.0);
  const double* uv = u.data().data();
  const double* vv = v.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (const auto& t : table) {
      const double* ui = uv + o * in_block + t.i * s.inner;
      const double* vj = vv + o * in_block + t.j * s.inner;
      double* ok = out.data() + o * out_block + t.k * s.inner;
      for (std::size_t c = 0; c < s.inner; ++c) ok[c] += t.c * ui[c] * vj[c];
    }
  }
  Shape out_shape = u.shape();
  out_shape[axis] = out_dim;
  return make_result(std::move(out_shape), std::move(out), "bilinear_map", {u.node(), v.node()},
                     [table = std::move(table), s, in_block, out_block](Node& self) {
                       Node& pu = *self.parents[0];
                       Node& pv = *self.parents[1];
                       double* gu = pu.requires_grad ? pu.grad_buffer().data() : nullptr;
                       double* gv = pv.requires_grad ? pv.grad_buffer().data() : nullptr;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (const auto& t : table) {
                           const double* g = self.grad.data() + o * out_block + t.k * s.inner;
                           const double* ui = pu.value.data() + o * in_block + t.i * s.inner;
                           const double* vj = pv.value.data() + o * in_block + t.j * s.inner;
                           if (gu) {
                             double* d = gu + o * in_block + t.i * s.inner;
                             for (std::size_t c = 0; c < s.inner; ++c) d[c] += t.c * vj[c] * g[c];
                           }
                           if (gv) {
                             double* d = gv + o * in_block + t.j * s.inner;
                             for (std::size_t c = 0; c < s.inner; ++c) d[c] += t.c * ui[c] * g[c];
                           }
                         }
                       }
                     });
}

Tensor where(const std::vector<std::uint8_t>& mask, const Tensor& a, const Tensor& b) {
  require(a.defined() && b.defined(), "where: undefined operand");
  require(a.shape() == b.shape() && mask.size() == a.numel(), "where: mask and operands must share a shape");
  detail::Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] ? a.data()[i] : b.data()[i];
  return make_result(a.shape(), std::move(out), "where", {a.node(), b.node()}, [mask](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) if (mask[i]) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) if (!mask[i]) g[i] += self.grad[i];
    }
  });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  require(x.defined(), "broadcast_to: undefined operand");
  const Shape out_shape = broadcast_shapes(x.shape(), shape, "broadcast_to");
  require(out_shape == shape, "broadcast_to: cannot broadcast " + shape_string(x.shape()) + " to " +
                                  shape_string(shape));
  const auto strides = broadcast_strides(x.shape(), shape);
  const std::vector<std::size_t> none(shape.size(), 0);
  detail::Buffer out(shape_numel(shape));
  const auto& xv = x.node()->value;
  for_each_broadcast(shape, strides, none, [&](std::size_t i, std::size_t ix, std::size_t) { out[i] = xv[ix]; });
  return make_result(shape, std::move(out), "broadcast_to", {x.node()}, [shape, strides, none](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for_each_broadcast(shape, strides, none, [&](std::size_t i, std::size_t ix, std::size_t) { g[ix] += self.grad[i]; });
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(x.defined(), "reshape: undefined operand");
  require(shape_numel(shape) == x.numel(), "reshape: cannot view " + shape_string(x.shape()) + " as " +
                                               shape_string(shape));
  return make_result(std::move(shape), x.node()->value, "reshape", {x.node()}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no operands");
  const Shape& first = parts.front().shape();
  require(axis < first.size(), "concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<NodePtr> parents;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    require(p.rank() == first.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      require(d == axis || p.dim(d) == first[d], "concat: shape mismatch " + shape_string(p.shape()) +
                                                     " vs " + shape_string(first));
    }
    out_shape[axis] += p.dim(axis);
    lengths.push_back(p.dim(axis));
    parents.push_back(p.node());
  }
  const auto s = split_at(out_shape, axis, "concat");
  detail::Buffer out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t block = lengths[k] * s.inner;
    const double* src = parts[k].data().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(src + o * block, block, out.data() + o * s.len * s.inner + offset);
    }
    offset += block;
  }
  return make_result(std::move(out_shape), std::move(out), "concat", std::move(parents),
                     [lengths, s](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < lengths.size(); ++k) {
                         const std::size_t block = lengths[k] * s.inner;
                         Node& p = *self.parents[k];
                         if (p.requires_grad) {
                           auto& g = p.grad_buffer();
                           for (std::size_t o = 0; o < s.outer; ++o) {
                             const double* src = self.grad.data() + o * s.len * s.inner + offset;
                             for (std::size_t i = 0; i < block; ++i) g[o * block + i] += src[i];
                           }
                         }
                         offset += block;
                       }
                     });
}

Tensor reduce_sum(const Tensor& x) {
  require(x.defined(), "reduce_sum: undefined operand");
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({}, {total}, "reduce_sum", {x.node()}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& gi : g) gi += self.grad[0];
  });
}

Tensor reduce_sum(const Tensor& x, std::size_t axis, bool keepdim) {
  require(x.defined(), "reduce_sum: undefined operand");
  const auto s = split_at(x.shape(), axis, "reduce_sum");
  detail::Buffer out(s.outer * s.inner, 0.0);
  const double* xv = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      const double* src = xv + (o * s.len + l) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return make_result(std::move(out_shape), std::move(out), "reduce_sum_axis", {x.node()}, [s](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t l = 0; l < s.len; ++l) {
        double* dst = g.data() + (o * s.len + l) * s.inner;
        const double* src = self.grad.data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor reduce_mean(const Tensor& x) {
  require(x.numel() > 0, "reduce_mean: empty tensor");
  return scale(reduce_sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reduce_mean(const Tensor& x, std::size_t axis, bool keepdim) {
  require(x.defined() && axis < x.rank() && x.dim(axis) > 0, "reduce_mean: empty or invalid axis");
  return scale(reduce_sum(x, axis, keepdim), 1.0 / static_cast<double>(x.dim(axis)));
}

IndexTensor argmax(const Tensor& x, std::size_t axis) {
  require(x.defined(), "argmax: undefined operand");
  const auto s = split_at(x.shape(), axis, "argmax");
  require(s.len > 0, "argmax: empty axis");
  IndexTensor result;
  result.shape = x.shape();
  result.shape[axis] = 1;
  result.index.assign(s.outer * s.inner, 0);
  const double* xv = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = 0;
      double best_value = xv[o * s.len * s.inner + i];
      for (std::size_t l = 1; l < s.len; ++l) {
        const double v = xv[(o * s.len + l) * s.inner + i];
        if (v > best_value) {
          best_value = v;
          best = l;
        }
      }
      result.index[o * s.inner + i] = best;
    }
  }
  return result;
}

Tensor gather(const Tensor& x, std::size_t axis, const IndexTensor& index) {
  require(x.defined(), "gather: undefined operand");
  require(axis < x.rank() && index.shape.size() == x.rank(), "gather: index rank must equal tensor rank");
  require(index.index.size() == shape_numel(index.shape), "gather: index data/shape mismatch");
  Shape out_shape = x.shape();
  out_shape[axis] = index.shape[axis];
  for (std::size_t d = 0; d < x.rank(); ++d) {
    require(d == axis || index.shape[d] == x.dim(d) || index.shape[d] == 1,
            "gather: index shape " + shape_string(index.shape) + " incompatible with " + shape_string(x.shape()));
  }
  for (auto v : index.index) require(v < x.dim(axis), "gather: index out of range");

  std::vector<std::size_t> x_strides(x.rank());
  std::size_t stride = 1;
  for (std::size_t d = x.rank(); d-- > 0;) {
    x_strides[d] = stride;
    stride *= x.dim(d);
  }
  const auto idx_strides = broadcast_strides(index.shape, out_shape);

  // Offsets of every output element into x, excluding the axis term.
  std::vector<std::size_t> base(x.rank(), 0);
  for (std::size_t d = 0; d < x.rank(); ++d) base[d] = d == axis ? 0 : x_strides[d];
  std::vector<std::size_t> source(shape_numel(out_shape));
  for_each_broadcast(out_shape, base, idx_strides, [&](std::size_t i, std::size_t off, std::size_t ii) {
    source[i] = off + index.index[ii] * x_strides[axis];
  });

  detail::Buffer out(source.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[source[i]];
  return make_result(std::move(out_shape), std::move(out), "gather", {x.node()},
                     [source = std::move(source)](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < source.size(); ++i) g[source[i]] += self.grad[i];
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require(logits.defined() && logits.rank() == 2, "softmax_cross_entropy: logits must be [B, M]");
  const std::size_t B = logits.dim(0);
  const std::size_t M = logits.dim(1);
  require(labels.size() == B, "softmax_cross_entropy: one label per row required");
  require(B > 0 && M > 0, "softmax_cross_entropy: empty logits");
  detail::Buffer probs(B * M);
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    require(labels[b] >= 0 && static_cast<std::size_t>(labels[b]) < M, "softmax_cross_entropy: label out of range");
    const double* row = logits.data().data() + b * M;
    const double peak = *std::max_element(row, row + M);
    double denom = 0.0;
    for (std::size_t m = 0; m < M; ++m) denom += std::exp(row[m] - peak);
    const double log_denom = std::log(denom) + peak;
    for (std::size_t m = 0; m < M; ++m) probs[b * M + m] = std::exp(row[m] - log_denom);
    loss += log_denom - row[labels[b]];
  }
  loss /= static_cast<double>(B);
  std::vector<int> label_copy(labels.begin(), labels.end());
  return make_result({}, {loss}, "softmax_cross_entropy", {logits.node()},
                     [probs = std::move(probs), label_copy = std::move(label_copy), B, M](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       const double scale = self.grad[0] / static_cast<double>(B);
                       for (std::size_t b = 0; b < B; ++b) {
                         for (std::size_t m = 0; m < M; ++m) {
                           const double target = static_cast<int>(m) == label_copy[b] ? 1.0 : 0.0;
                           g[b * M + m] += scale * (probs[b * M + m] - target);
                         }
                       }
                     });
}

}  // namespace lieneurons
