#include "advp/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advp/simd/kernels.hpp"

namespace advp {
namespace {

void require_same(const NArray& a, const NArray& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void require_finite(const NArray& v, const char* what) {
  if (!v.all_finite()) throw NonFiniteError(std::string(what) + ": non-finite value");
}

NArray transpose(const NArray& m) {
  const std::size_t r = m.dim(0), c = m.dim(1);
  NArray t(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = m[i * c + j];
  return t;
}

NArray& grad_slot(std::vector<NArray>& grads, std::uint32_t id, const Shape& shape) {
  NArray& g = grads[id];
  if (g.shape() != shape || g.size() == 0) g = NArray(shape, 0.0);
  return g;
}

// Number of (outer, axis, inner) blocks for a reduction along `axis`.
struct AxisLayout {
  std::size_t outer, len, inner;
};

AxisLayout axis_layout(const Shape& s, std::size_t axis) {
  AxisLayout l{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) l.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
  return l;
}

}  // namespace

const NArray& Var::value() const { return tape_->value(id_); }

const NArray& Tape::value(std::uint32_t id) const { return node_value(nodes_.at(id)); }

Var Tape::push(Node node, const char* op_name) {
  if (node.op != Op::parameter) require_finite(node.value, op_name);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(NArray value) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(value);
  return push(std::move(n), "constant");
}

Var Tape::param(const Parameter& p, bool frozen) {
  require_finite(p.value, ("parameter " + p.name).c_str());
  Node n;
  n.op = Op::parameter;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = p.trainable && !frozen;
  return push(std::move(n), "parameter");
}

GradientMap Tape::backward(Var loss) {
  if (&loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  const NArray& lv = value(loss.id());
  if (lv.size() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(lv.shape()));

  const std::uint32_t root = loss.id();
  std::vector<char> reachable(root + 1, 0);
  reachable[root] = 1;
  for (std::uint32_t id = root + 1; id-- > 0;) {
    if (!reachable[id]) continue;
    const Node& n = nodes_[id];
    for (std::uint8_t k = 0; k < n.n_in; ++k) reachable[n.in[k]] = 1;
  }

  std::vector<NArray> grads(root + 1);
  grads[root] = NArray(lv.shape(), 1.0);
  for (std::uint32_t id = root + 1; id-- > 0;) {
    if (!reachable[id] || !nodes_[id].requires_grad || grads[id].size() == 0) continue;
    propagate(id, grads);
  }

  GradientMap out;
  for (std::uint32_t id = 0; id <= root; ++id) {
    const Node& n = nodes_[id];
    if (n.op != Op::parameter || !reachable[id]) continue;
    auto [it, inserted] = out.try_emplace(n.param->name, n.external->shape(), 0.0);
    if (n.requires_grad && grads[id].size() != 0) {
      simd::active().accumulate(grads[id].data(), it->second.data(), it->second.size());
    }
    (void)inserted;
  }
  return out;
}

void Tape::propagate(std::uint32_t id, std::vector<NArray>& grads) {
  const auto& k = simd::active();
  const Node& n = nodes_[id];
  const NArray& gy = grads[id];
  const NArray& y = node_value(n);

  auto wants = [&](std::uint8_t slot) { return nodes_[n.in[slot]].requires_grad; };
  auto in_value = [&](std::uint8_t slot) -> const NArray& { return value(n.in[slot]); };
  auto slot_grad = [&](std::uint8_t slot) -> NArray& {
    return grad_slot(grads, n.in[slot], in_value(slot).shape());
  };

  switch (n.op) {
    case Op::constant:
    case Op::parameter:
      break;
    case Op::matmul: {
      const NArray& a = in_value(0);
      const NArray& b = in_value(1);
      const std::size_t m = a.dim(0), kk = a.dim(1), nn = b.dim(1);
      if (wants(0)) {
        NArray bt = transpose(b);
        NArray tmp(Shape{m, kk});
        k.gemm_nn(gy.data(), bt.data(), tmp.data(), m, nn, kk);
        NArray& ga = slot_grad(0);
        k.accumulate(tmp.data(), ga.data(), ga.size());
      }
      if (wants(1)) {
        NArray tmp(Shape{kk, nn});
        k.gemm_tn(a.data(), gy.data(), tmp.data(), kk, m, nn);
        NArray& gb = slot_grad(1);
        k.accumulate(tmp.data(), gb.data(), gb.size());
      }
      break;
    }
    case Op::add:
      if (wants(0)) k.accumulate(gy.data(), slot_grad(0).data(), gy.size());
      if (wants(1)) k.accumulate(gy.data(), slot_grad(1).data(), gy.size());
      break;
    case Op::add_row:
      if (wants(0)) k.accumulate(gy.data(), slot_grad(0).data(), gy.size());
      if (wants(1)) k.accumulate_rows(gy.data(), slot_grad(1).data(), gy.dim(0), gy.dim(1));
      break;
    case Op::sub:
      if (wants(0)) k.accumulate(gy.data(), slot_grad(0).data(), gy.size());
      if (wants(1)) k.axpy(-1.0, gy.data(), slot_grad(1).data(), gy.size());
      break;
    case Op::mul:
      if (wants(0)) k.accumulate_mul(gy.data(), in_value(1).data(), slot_grad(0).data(), gy.size());
      if (wants(1)) k.accumulate_mul(gy.data(), in_value(0).data(), slot_grad(1).data(), gy.size());
      break;
    case Op::scale:
      if (wants(0)) k.axpy(n.s0, gy.data(), slot_grad(0).data(), gy.size());
      break;
    case Op::relu:
      if (wants(0)) k.relu_backward(in_value(0).data(), gy.data(), slot_grad(0).data(), gy.size());
      break;
    case Op::tanh:
      if (wants(0)) k.tanh_backward(y.data(), gy.data(), slot_grad(0).data(), gy.size());
      break;
    case Op::exp:
      if (wants(0)) k.accumulate_mul(gy.data(), y.data(), slot_grad(0).data(), gy.size());
      break;
    case Op::square:
      if (wants(0)) {
        NArray& gx = slot_grad(0);
        const NArray& x = in_value(0);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * (2.0 * x[i]);
      }
      break;
    case Op::log_softmax:
      if (wants(0)) {
        NArray& gx = slot_grad(0);
        const AxisLayout l = axis_layout(y.shape(), n.axis);
        for (std::size_t o = 0; o < l.outer; ++o) {
          for (std::size_t in = 0; in < l.inner; ++in) {
            const std::size_t base = o * l.len * l.inner + in;
            double gsum = 0.0;
            for (std::size_t t = 0; t < l.len; ++t) gsum += gy[base + t * l.inner];
            for (std::size_t t = 0; t < l.len; ++t) {
              const std::size_t i = base + t * l.inner;
              gx[i] += gy[i] - std::exp(y[i]) * gsum;
            }
          }
        }
      }
      break;
    case Op::gather:
      if (wants(0)) {
        NArray& gx = slot_grad(0);
        const std::size_t cols = gx.dim(1);
        for (std::size_t r = 0; r < n.indices.size(); ++r) gx[r * cols + n.indices[r]] += gy[r];
      }
      break;
    case Op::sum:
      if (wants(0)) {
        NArray& gx = slot_grad(0);
        const double g = gy[0];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
      }
      break;
    case Op::mean:
      if (wants(0)) {
        NArray& gx = slot_grad(0);
        const double g = gy[0] / static_cast<double>(gx.size());
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
      }
      break;
    case Op::sum_axis:
      if (wants(0)) {
        NArray& gx = slot_grad(0);
        const std::size_t rows = gx.dim(0), cols = gx.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c)
            gx[r * cols + c] += n.axis == 1 ? gy[r] : gy[c];
      }
      break;
    case Op::clip:
      if (wants(0)) {
        NArray& gx = slot_grad(0);
        const NArray& x = in_value(0);
        for (std::size_t i = 0; i < gy.size(); ++i)
          if (x[i] >= n.s0 && x[i] <= n.s1) gx[i] += gy[i];
      }
      break;
    case Op::minimum: {
      const NArray& a = in_value(0);
      const NArray& b = in_value(1);
      if (wants(0)) {
        NArray& ga = slot_grad(0);
        for (std::size_t i = 0; i < gy.size(); ++i)
          if (a[i] <= b[i]) ga[i] += gy[i];
      }
      if (wants(1)) {
        NArray& gb = slot_grad(1);
        for (std::size_t i = 0; i < gy.size(); ++i)
          if (!(a[i] <= b[i])) gb[i] += gy[i];
      }
      break;
    }
  }
}

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape())
    throw std::invalid_argument(std::string(op) + ": operands must live on the same tape");
  return a.tape();
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const NArray& av = a.value();
  const NArray& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_string(av.shape()) + " and " +
                     shape_string(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tape::Node node;
  node.op = Op::matmul;
  node.in = {a.id(), b.id()};
  node.n_in = 2;
  node.value = NArray(Shape{m, n});
  simd::active().gemm_nn(av.data(), bv.data(), node.value.data(), m, k, n);
  node.requires_grad = t.nodes_[a.id()].requires_grad || t.nodes_[b.id()].requires_grad;
  return t.push(std::move(node), "matmul");
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const NArray& av = a.value();
  const NArray& bv = b.value();
  Tape::Node node;
  node.in = {a.id(), b.id()};
  node.n_in = 2;
  node.value = NArray(av.shape());
  if (av.shape() == bv.shape()) {
    node.op = Op::add;
    simd::active().add(av.data(), bv.data(), node.value.data(), av.size());
  } else if (av.rank() == 2 && bv.rank() == 1 && av.dim(1) == bv.dim(0)) {
    node.op = Op::add_row;
    simd::active().add_row_bias(av.data(), bv.data(), node.value.data(), av.dim(0), av.dim(1));
  } else {
    throw ShapeError("add: shape mismatch " + shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  }
  node.requires_grad = t.nodes_[a.id()].requires_grad || t.nodes_[b.id()].requires_grad;
  return t.push(std::move(node), "add");
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  require_same(a.value(), b.value(), "sub");
  Tape::Node node;
  node.op = Op::sub;
  node.in = {a.id(), b.id()};
  node.n_in = 2;
  node.value = NArray(a.shape());
  simd::active().sub(a.value().data(), b.value().data(), node.value.data(), node.value.size());
  node.requires_grad = t.nodes_[a.id()].requires_grad || t.nodes_[b.id()].requires_grad;
  return t.push(std::move(node), "sub");
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  require_same(a.value(), b.value(), "mul");
  Tape::Node node;
  node.op = Op::mul;
  node.in = {a.id(), b.id()};
  node.n_in = 2;
  node.value = NArray(a.shape());
  simd::active().mul(a.value().data(), b.value().data(), node.value.data(), node.value.size());
  node.requires_grad = t.nodes_[a.id()].requires_grad || t.nodes_[b.id()].requires_grad;
  return t.push(std::move(node), "mul");
}

Var scale(Var a, double s) {
  Tape& t = a.tape();
  Tape::Node node;
  node.op = Op::scale;
  node.in = {a.id(), 0};
  node.n_in = 1;
  node.s0 = s;
  const NArray& av = a.value();
  node.value = NArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) node.value[i] = s * av[i];
  node.requires_grad = t.nodes_[a.id()].requires_grad;
  return t.push(std::move(node), "scale");
}

Var relu(Var x) {
  Tape& t = x.tape();
  Tape::Node node;
  node.op = Op::relu;
  node.in = {x.id(), 0};
  node.n_in = 1;
  node.value = NArray(x.shape());
  simd::active().relu(x.value().data(), node.value.data(), node.value.size());
  node.requires_grad = t.nodes_[x.id()].requires_grad;
  return t.push(std::move(node), "relu");
}

Var tanh(Var x) {
  Tape& t = x.tape();
  Tape::Node node;
  node.op = Op::tanh;
  node.in = {x.id(), 0};
  node.n_in = 1;
  const NArray& xv = x.value();
  node.value = NArray(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) node.value[i] = std::tanh(xv[i]);
  node.requires_grad = t.nodes_[x.id()].requires_grad;
  return t.push(std::move(node), "tanh");
}

Var exp(Var x) {
  Tape& t = x.tape();
  Tape::Node node;
  node.op = Op::exp;
  node.in = {x.id(), 0};
  node.n_in = 1;
  const NArray& xv = x.value();
  node.value = NArray(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) node.value[i] = std::exp(xv[i]);
  node.requires_grad = t.nodes_[x.id()].requires_grad;
  return t.push(std::move(node), "exp");
}

Var square(Var x) {
  Tape& t = x.tape();
  Tape::Node node;
  node.op = Op::square;
  node.in = {x.id(), 0};
  node.n_in = 1;
  node.value = NArray(x.shape());
  simd::active().mul(x.value().data(), x.value().data(), node.value.data(), node.value.size());
  node.requires_grad = t.nodes_[x.id()].requires_grad;
  return t.push(std::move(node), "square");
}

Var log_softmax(Var x, std::size_t axis) {
  Tape& t = x.tape();
  const NArray& xv = x.value();
  if (axis >= xv.rank())
    throw ShapeError("log_softmax: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(xv.shape()));
  Tape::Node node;
  node.op = Op::log_softmax;
  node.in = {x.id(), 0};
  node.n_in = 1;
  node.axis = axis;
  node.value = NArray(xv.shape());
  const AxisLayout l = axis_layout(xv.shape(), axis);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.len * l.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l.len; ++k) mx = std::max(mx, xv[base + k * l.inner]);
      double s = 0.0;
      for (std::size_t k = 0; k < l.len; ++k) s += std::exp(xv[base + k * l.inner] - mx);
      const double lse = mx + std::log(s);
      for (std::size_t k = 0; k < l.len; ++k)
        node.value[base + k * l.inner] = xv[base + k * l.inner] - lse;
    }
  }
  node.requires_grad = t.nodes_[x.id()].requires_grad;
  return t.push(std::move(node), "log_softmax");
}

Var gather(Var x, const std::vector<std::size_t>& indices) {
  Tape& t = x.tape();
  const NArray& xv = x.value();
  if (xv.rank() != 2 || xv.dim(0) != indices.size())
    throw ShapeError("gather: shape " + shape_string(xv.shape()) + " vs indices (" +
                     std::to_string(indices.size()) + ")");
  Tape::Node node;
  node.op = Op::gather;
  node.in = {x.id(), 0};
  node.n_in = 1;
  node.indices = indices;
  node.value = NArray(Shape{indices.size()});
  const std::size_t cols = xv.dim(1);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= cols)
      throw ShapeError("gather: index " + std::to_string(indices[r]) + " out of range for shape " +
                       shape_string(xv.shape()));
    node.value[r] = xv[r * cols + indices[r]];
  }
  node.requires_grad = t.nodes_[x.id()].requires_grad;
  return t.push(std::move(node), "gather");
}

Var sum(Var x) {
  Tape& t = x.tape();
  Tape::Node node;
  node.op = Op::sum;
  node.in = {x.id(), 0};
  node.n_in = 1;
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  node.value = NArray::scalar(s);
  node.requires_grad = t.nodes_[x.id()].requires_grad;
  return t.push(std::move(node), "sum");
}

Var mean(Var x) {
  Tape& t = x.tape();
  const NArray& xv = x.value();
  if (xv.size() == 0) throw ShapeError("mean: empty array");
  Tape::Node node;
  node.op = Op::mean;
  node.in = {x.id(), 0};
  node.n_in = 1;
  double s = 0.0;
  for (double v : xv.values()) s += v;
  node.value = NArray::scalar(s / static_cast<double>(xv.size()));
  node.requires_grad = t.nodes_[x.id()].requires_grad;
  return t.push(std::move(node), "mean");
}

Var sum(Var x, std::size_t axis) {
  Tape& t = x.tape();
  const NArray& xv = x.value();
  if (xv.rank() != 2 || axis > 1)
    throw ShapeError("sum: axis " + std::to_string(axis) + " unsupported for shape " +
                     shape_string(xv.shape()));
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tape::Node node;
  node.op = Op::sum_axis;
  node.in = {x.id(), 0};
  node.n_in = 1;
  node.axis = axis;
  node.value = NArray(Shape{axis == 1 ? rows : cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) node.value[axis == 1 ? r : c] += xv[r * cols + c];
  node.requires_grad = t.nodes_[x.id()].requires_grad;
  return t.push(std::move(node), "sum");
}

Var clip(Var x, double lo, double hi) {
  if (!(lo <= hi))
    throw std::invalid_argument("clip: lo (" + std::to_string(lo) + ") must not exceed hi (" +
                                std::to_string(hi) + ")");
  Tape& t = x.tape();
  const NArray& xv = x.value();
  Tape::Node node;
  node.op = Op::clip;
  node.in = {x.id(), 0};
  node.n_in = 1;
  node.s0 = lo;
  node.s1 = hi;
  node.value = NArray(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) node.value[i] = std::clamp(xv[i], lo, hi);
  node.requires_grad = t.nodes_[x.id()].requires_grad;
  return t.push(std::move(node), "clip");
}

Var minimum(Var a, Var b) {
  Tape& t = same_tape(a, b, "minimum");
  require_same(a.value(), b.value(), "minimum");
  const NArray& av = a.value();
  const NArray& bv = b.value();
  Tape::Node node;
  node.op = Op::minimum;
  node.in = {a.id(), b.id()};
  node.n_in = 2;
  node.value = NArray(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) node.value[i] = av[i] <= bv[i] ? av[i] : bv[i];
  node.requires_grad = t.nodes_[a.id()].requires_grad || t.nodes_[b.id()].requires_grad;
  return t.push(std::move(node), "minimum");
}

}  // namespace advp
