#include "stylecore/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <memory>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stylecore/error.hpp"
#include "stylecore/image.hpp"

namespace stylecore::ad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (int d : shape_) {
    require(d >= 0, ErrorKind::InvalidArgument, "tensor dimensions must be non-negative");
  }
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    raise(ErrorKind::ShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_string(shape_));
  }
}

double Tensor::item() const {
  require(data_.size() == 1, ErrorKind::ShapeMismatch, "item() needs a single-element tensor");
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_numel(shape) == data_.size(), ErrorKind::ShapeMismatch,
          "reshape must preserve element count");
  return Tensor(std::move(shape), data_);
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
  require(!consumed_, ErrorKind::InvalidArgument, "tape already consumed by backward()");
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    require(p.tape() == this, ErrorKind::InvalidArgument, "operands live on different tapes");
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || requires_grad(p.id());
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor* Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return &n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
  Tensor* buf = grad_buffer(id);
  if (buf == nullptr) return;
  require(buf->numel() == g.numel(), ErrorKind::ShapeMismatch,
          "gradient shape differs from value shape");
  auto& dst = buf->storage();
  const auto& src = g.storage();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
  require(loss.tape() == this, ErrorKind::InvalidArgument, "loss belongs to another tape");
  require(!consumed_, ErrorKind::InvalidArgument,
          "backward() already ran on this tape; re-record the graph");
  require(value(loss.id()).numel() == 1, ErrorKind::ShapeMismatch,
          "backward() needs a scalar loss");
  consumed_ = true;
  Tensor* seed = grad_buffer(loss.id());
  if (seed == nullptr) return;
  seed->storage()[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape());
}

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const Var& v : vars) {
    require(v.valid(), ErrorKind::InvalidArgument, "uninitialized variable");
    if (t == nullptr) t = v.tape();
    require(v.tape() == t, ErrorKind::InvalidArgument, "operands live on different tapes");
  }
  return *t;
}

namespace {

// Output shape plus, for each operand, the flat source offset of every output
// element. Offsets are only materialised when shapes actually differ.
struct Broadcast {
  Shape out;
  std::vector<int> a_index;
  std::vector<int> b_index;
  bool same = false;
  bool b_scalar = false;
  bool a_scalar = false;
};

std::vector<int> broadcast_offsets(const Shape& out, const Shape& in) {
  const std::size_t rank = out.size();
  Shape padded(rank, 1);
  std::copy(in.begin(), in.end(), padded.begin() + static_cast<long>(rank - in.size()));
  std::vector<std::size_t> in_stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t d = rank; d-- > 0;) {
    in_stride[d] = padded[d] == 1 ? 0 : s;
    s *= static_cast<std::size_t>(padded[d]);
  }
  const std::size_t total = shape_numel(out);
  std::vector<int> offsets(total);
  std::vector<int> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < total; ++i) {
    offsets[i] = static_cast<int>(offset);
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      offset += in_stride[d];
      if (counter[d] < out[d]) break;
      offset -= in_stride[d] * static_cast<std::size_t>(counter[d]);
      counter[d] = 0;
    }
  }
  return offsets;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  for (std::size_t d = 0; d < rank; ++d) {
    const int da = d + a.size() >= rank ? a[d + a.size() - rank] : 1;
    const int db = d + b.size() >= rank ? b[d + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) {
      raise(ErrorKind::ShapeMismatch,
            "cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    plan.out[d] = std::max(da, db);
  }
  plan.a_scalar = shape_numel(a) == 1;
  plan.b_scalar = shape_numel(b) == 1;
  if (!plan.a_scalar) plan.a_index = broadcast_offsets(plan.out, a);
  if (!plan.b_scalar) plan.b_index = broadcast_offsets(plan.out, b);
  return plan;
}

inline std::size_t src_of(const Broadcast& p, bool is_a, std::size_t i) {
  if (p.same) return i;
  if (is_a) return p.a_scalar ? 0 : static_cast<std::size_t>(p.a_index[i]);
  return p.b_scalar ? 0 : static_cast<std::size_t>(p.b_index[i]);
}

template <typename Fwd, typename GradA, typename GradB>
Var binary_op(Var a, Var b, Fwd fwd, GradA grad_a, GradB grad_b) {
  Tape& t = tape_of({a, b});
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape()));
  const auto& av = a.value().storage();
  const auto& bv = b.value().storage();
  Tensor out(plan->out);
  auto& o = out.storage();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = fwd(av[src_of(*plan, true, i)], bv[src_of(*plan, false, i)]);
  }
  const int ia = a.id();
  const int ib = b.id();
  const int iout = static_cast<int>(t.size());
  return t.record(std::move(out), {a, b},
                  [plan, ia, ib, iout, grad_a, grad_b](Tape& tp, const Tensor& g) {
                    const auto& x = tp.value(ia).storage();
                    const auto& y = tp.value(ib).storage();
                    const auto& z = tp.value(iout).storage();
                    Tensor* ga = tp.grad_buffer(ia);
                    Tensor* gb = tp.grad_buffer(ib);
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                      const std::size_t sa = src_of(*plan, true, i);
                      const std::size_t sb = src_of(*plan, false, i);
                      if (ga) ga->storage()[sa] += grad_a(g[i], x[sa], y[sb], z[i]);
                      if (gb) gb->storage()[sb] += grad_b(g[i], x[sa], y[sb], z[i]);
                    }
                  });
}

template <typename Fwd, typename Grad>
Var unary_op(Var a, Fwd fwd, Grad grad) {
  Tape& t = *a.tape();
  const auto& av = a.value().storage();
  Tensor out(a.shape());
  auto& o = out.storage();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(av[i]);
  const int ia = a.id();
  const int iout = static_cast<int>(t.size());
  return t.record(std::move(out), {a}, [ia, iout, grad](Tape& tp, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    if (!ga) return;
    const auto& x = tp.value(ia).storage();
    const auto& z = tp.value(iout).storage();
    auto& dst = ga->storage();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += grad(g[i], x[i], z[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double) { return g; },
      [](double g, double, double, double) { return g; });
}

Var sub(Var a, Var b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double) { return g; },
      [](double g, double, double, double) { return -g; });
}

Var mul(Var a, Var b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y, double) { return g * y; },
      [](double g, double x, double, double) { return g * x; });
}

Var div(Var a, Var b) {
  for (double v : b.value().storage()) {
    if (v == 0.0) raise(ErrorKind::DivisionByZero, "division by zero in div()");
  }
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double g, double, double y, double) { return g / y; },
      [](double g, double, double y, double z) { return -g * z / y; });
}

Var maximum(Var a, Var b) {
  return binary_op(
      a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double g, double x, double y, double) { return x >= y ? g : 0.0; },
      [](double g, double x, double y, double) { return x >= y ? 0.0 : g; });
}

Var add_scalar(Var a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; }, [](double g, double, double) { return g; });
}

Var scale(Var a, double c) {
  return unary_op(
      a, [c](double x) { return x * c; }, [c](double g, double, double) { return g * c; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var square(Var a) {
  return unary_op(
      a, [](double x) { return x * x; },
      [](double g, double x, double) { return 2.0 * g * x; });
}

Var sqrt(Var a) {
  for (double v : a.value().storage()) {
    require(v >= 0.0, ErrorKind::InvalidArgument, "sqrt of a negative value");
  }
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double g, double, double z) { return z > 0.0 ? 0.5 * g / z : 0.0; });
}

Var abs(Var a) {
  return unary_op(
      a, [](double x) { return std::abs(x); },
      [](double g, double x, double) { return x > 0.0 ? g : (x < 0.0 ? -g : 0.0); });
}

Var leaky_relu(Var a, double slope) {
  return unary_op(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double g, double x, double) { return x > 0.0 ? g : slope * g; });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.value().storage()) s += v;
  const int ia = a.id();
  return t.record(Tensor::scalar(s), {a}, [ia](Tape& tp, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    if (!ga) return;
    for (auto& v : ga->storage()) v += g[0];
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().numel();
  require(n > 0, ErrorKind::InvalidArgument, "mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

namespace {

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  require(axis >= 0 && axis < static_cast<int>(shape.size()), ErrorKind::InvalidArgument,
          "axis out of range");
  AxisSplit s;
  for (int d = 0; d < axis; ++d) s.outer *= static_cast<std::size_t>(shape[static_cast<std::size_t>(d)]);
  s.len = static_cast<std::size_t>(shape[static_cast<std::size_t>(axis)]);
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < shape.size(); ++d) {
    s.inner *= static_cast<std::size_t>(shape[d]);
  }
  return s;
}

}  // namespace

Var sum(Var a, int axis) {
  Tape& t = *a.tape();
  const AxisSplit s = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = 1;
  Tensor out(out_shape);
  const auto& x = a.value().storage();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.len; ++k) {
      const std::size_t base = (o * s.len + k) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += x[base + i];
    }
  }
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, s](Tape& tp, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    if (!ga) return;
    auto& d = ga->storage();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t k = 0; k < s.len; ++k) {
        const std::size_t base = (o * s.len + k) * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) d[base + i] += g[o * s.inner + i];
      }
    }
  });
}

Var mean(Var a, int axis) {
  const int len = a.dim(axis);
  require(len > 0, ErrorKind::InvalidArgument, "mean over an empty axis");
  return scale(sum(a, axis), 1.0 / len);
}

namespace {

ArgReduce arg_reduce(Var a, int axis, std::span<const unsigned char> allowed, bool take_min) {
  require(a.value().rank() == 2, ErrorKind::ShapeMismatch, "min/max reduction expects 2-D input");
  require(axis == 0 || axis == 1, ErrorKind::InvalidArgument, "axis must be 0 or 1");
  const int rows = a.dim(0);
  const int cols = a.dim(1);
  require(allowed.empty() || allowed.size() == a.value().numel(), ErrorKind::ShapeMismatch,
          "mask size must match the reduced tensor");
  const auto& x = a.value().storage();
  const int slices = axis == 1 ? rows : cols;
  const int len = axis == 1 ? cols : rows;
  std::vector<int> index(static_cast<std::size_t>(slices), -1);
  Tensor out(axis == 1 ? Shape{rows, 1} : Shape{1, cols});
  for (int s = 0; s < slices; ++s) {
    int best = -1;
    double best_v = 0.0;
    for (int k = 0; k < len; ++k) {
      const std::size_t flat = axis == 1 ? static_cast<std::size_t>(s) * cols + k
                                         : static_cast<std::size_t>(k) * cols + s;
      if (!allowed.empty() && allowed[flat] == 0) continue;
      const double v = x[flat];
      if (best < 0 || (take_min ? v < best_v : v > best_v)) {
        best = k;
        best_v = v;
      }
    }
    if (best < 0) {
      raise(ErrorKind::Infeasible,
            std::string("every entry of a ") + (axis == 1 ? "row" : "column") +
                " is excluded from the reduction");
    }
    index[static_cast<std::size_t>(s)] = best;
    out[static_cast<std::size_t>(s)] = best_v;
  }
  Tape& t = *a.tape();
  const int ia = a.id();
  auto shared_index = std::make_shared<std::vector<int>>(index);
  Var v = t.record(std::move(out), {a}, [ia, axis, cols, shared_index](Tape& tp, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    if (!ga) return;
    const auto& idx = *shared_index;
    for (std::size_t s = 0; s < idx.size(); ++s) {
      const std::size_t flat = axis == 1 ? s * static_cast<std::size_t>(cols) + static_cast<std::size_t>(idx[s])
                                         : static_cast<std::size_t>(idx[s]) * static_cast<std::size_t>(cols) + s;
      ga->storage()[flat] += g[s];
    }
  });
  return {v, std::move(index)};
}

}  // namespace

ArgReduce min_reduce(Var a, int axis, std::span<const unsigned char> allowed) {
  return arg_reduce(a, axis, allowed, true);
}

ArgReduce max_reduce(Var a, int axis, std::span<const unsigned char> allowed) {
  return arg_reduce(a, axis, allowed, false);
}

Var reshape(Var a, Shape shape) {
  Tape& t = *a.tape();
  Tensor out = a.value().reshaped(std::move(shape));
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia](Tape& tp, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    if (!ga) return;
    for (std::size_t i = 0; i < g.numel(); ++i) ga->storage()[i] += g[i];
  });
}

Var transpose(Var a) {
  require(a.value().rank() == 2, ErrorKind::ShapeMismatch, "transpose expects a 2-D tensor");
  Tape& t = *a.tape();
  const int r = a.dim(0);
  const int c = a.dim(1);
  Tensor out({c, r});
  ConstMapMatrix src(a.value().storage().data(), r, c);
  MapMatrix(out.storage().data(), c, r) = src.transpose();
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, r, c](Tape& tp, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    if (!ga) return;
    MapMatrix(ga->storage().data(), r, c) += ConstMapMatrix(g.storage().data(), c, r).transpose();
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  require(!parts.empty(), ErrorKind::InvalidArgument, "concat of an empty list");
  Tape& t = *parts.front().tape();
  const Shape& ref = parts.front().shape();
  require(axis >= 0 && axis < static_cast<int>(ref.size()), ErrorKind::InvalidArgument,
          "concat axis out of range");
  Shape out_shape = ref;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const Var& p : parts) {
    require(p.tape() == &t, ErrorKind::InvalidArgument, "operands live on different tapes");
    const Shape& s = p.shape();
    require(s.size() == ref.size(), ErrorKind::ShapeMismatch, "concat rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != axis && s[d] != ref[d]) {
        raise(ErrorKind::ShapeMismatch, "concat: " + shape_string(s) + " vs " + shape_string(ref));
      }
    }
    out_shape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
  }
  const AxisSplit so = split_axis(out_shape, axis);
  Tensor out(out_shape);
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> lens;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t len = static_cast<std::size_t>(p.dim(axis));
    const auto& x = p.value().storage();
    for (std::size_t o = 0; o < so.outer; ++o) {
      std::copy_n(x.begin() + static_cast<long>(o * len * so.inner), len * so.inner,
                  out.storage().begin() + static_cast<long>((o * so.len + offset) * so.inner));
    }
    ids.push_back(p.id());
    offsets.push_back(offset);
    lens.push_back(len);
    offset += len;
  }
  return t.record(std::move(out), parts, [ids, offsets, lens, so](Tape& tp, const Tensor& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor* gp = tp.grad_buffer(ids[k]);
      if (!gp) continue;
      for (std::size_t o = 0; o < so.outer; ++o) {
        const double* src = g.storage().data() + (o * so.len + offsets[k]) * so.inner;
        double* dst = gp->storage().data() + o * lens[k] * so.inner;
        for (std::size_t i = 0; i < lens[k] * so.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var gather_rows(Var a, std::span<const int> rows) {
  require(a.value().rank() >= 1, ErrorKind::ShapeMismatch, "gather_rows needs rank >= 1");
  Tape& t = *a.tape();
  const int n = a.dim(0);
  const std::size_t row = n == 0 ? 0 : a.value().numel() / static_cast<std::size_t>(n);
  Shape out_shape = a.shape();
  out_shape[0] = static_cast<int>(rows.size());
  Tensor out(out_shape);
  const auto& x = a.value().storage();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] >= 0 && rows[r] < n, ErrorKind::InvalidArgument, "gather index out of range");
    std::copy_n(x.begin() + static_cast<long>(static_cast<std::size_t>(rows[r]) * row), row,
                out.storage().begin() + static_cast<long>(r * row));
  }
  auto idx = std::make_shared<std::vector<int>>(rows.begin(), rows.end());
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, idx, row](Tape& tp, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    if (!ga) return;
    for (std::size_t r = 0; r < idx->size(); ++r) {
      double* dst = ga->storage().data() + static_cast<std::size_t>((*idx)[r]) * row;
      const double* src = g.storage().data() + r * row;
      for (std::size_t i = 0; i < row; ++i) dst[i] += src[i];
    }
  });
}

Var slice_cols(Var a, int begin, int end) {
  require(a.value().rank() == 2, ErrorKind::ShapeMismatch, "slice_cols expects a 2-D tensor");
  const int rows = a.dim(0);
  const int cols = a.dim(1);
  require(0 <= begin && begin < end && end <= cols, ErrorKind::InvalidArgument,
          "column slice out of range");
  Tape& t = *a.tape();
  const int w = end - begin;
  Tensor out({rows, w});
  ConstMapMatrix src(a.value().storage().data(), rows, cols);
  MapMatrix(out.storage().data(), rows, w) = src.middleCols(begin, w);
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, rows, cols, begin, w](Tape& tp, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    if (!ga) return;
    MapMatrix(ga->storage().data(), rows, cols).middleCols(begin, w) +=
        ConstMapMatrix(g.storage().data(), rows, w);
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require(a.value().rank() == 2 && b.value().rank() == 2, ErrorKind::ShapeMismatch,
          "matmul expects 2-D operands");
  const int n = a.dim(0);
  const int k = a.dim(1);
  const int m = b.dim(1);
  if (b.dim(0) != k) {
    raise(ErrorKind::ShapeMismatch,
          "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out({n, m});
  MapMatrix(out.storage().data(), n, m).noalias() =
      ConstMapMatrix(a.value().storage().data(), n, k) *
      ConstMapMatrix(b.value().storage().data(), k, m);
  const int ia = a.id();
  const int ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib, n, k, m](Tape& tp, const Tensor& g) {
    ConstMapMatrix gm(g.storage().data(), n, m);
    if (Tensor* ga = tp.grad_buffer(ia)) {
      MapMatrix(ga->storage().data(), n, k).noalias() +=
          gm * ConstMapMatrix(tp.value(ib).storage().data(), k, m).transpose();
    }
    if (Tensor* gb = tp.grad_buffer(ib)) {
      MapMatrix(gb->storage().data(), k, m).noalias() +=
          ConstMapMatrix(tp.value(ia).storage().data(), n, k).transpose() * gm;
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require(a.value().rank() == 2 && b.value().rank() == 2, ErrorKind::ShapeMismatch,
          "matmul_nt expects 2-D operands");
  const int n = a.dim(0);
  const int k = a.dim(1);
  const int m = b.dim(0);
  if (b.dim(1) != k) {
    raise(ErrorKind::ShapeMismatch,
          "matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  }
  Tensor out({n, m});
  MapMatrix(out.storage().data(), n, m).noalias() =
      ConstMapMatrix(a.value().storage().data(), n, k) *
      ConstMapMatrix(b.value().storage().data(), m, k).transpose();
  const int ia = a.id();
  const int ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib, n, k, m](Tape& tp, const Tensor& g) {
    ConstMapMatrix gm(g.storage().data(), n, m);
    if (Tensor* ga = tp.grad_buffer(ia)) {
      MapMatrix(ga->storage().data(), n, k).noalias() +=
          gm * ConstMapMatrix(tp.value(ib).storage().data(), m, k);
    }
    if (Tensor* gb = tp.grad_buffer(ib)) {
      MapMatrix(gb->storage().data(), m, k).noalias() +=
          gm.transpose() * ConstMapMatrix(tp.value(ia).storage().data(), n, k);
    }
  });
}

namespace {

struct ConvGeometry {
  int cin, h, w, cout, k, stride, pad, ho, wo;
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t plane = static_cast<std::size_t>(g.ho) * g.wo;
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = cols + (static_cast<std::size_t>(c) * g.k * g.k + ky * g.k + kx) * plane;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix < 0 || ix >= g.w) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* x) {
  const std::size_t plane = static_cast<std::size_t>(g.ho) * g.wo;
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row =
            cols + (static_cast<std::size_t>(c) * g.k * g.k + ky * g.k + kx) * plane;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.wo;
          double* dst = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var kernel, int stride, int padding) {
  Tape& t = tape_of({x, kernel});
  require(x.value().rank() == 3, ErrorKind::ShapeMismatch, "conv2d input must be [C,H,W]");
  require(kernel.value().rank() == 4, ErrorKind::ShapeMismatch,
          "conv2d kernel must be [Cout,Cin,k,k]");
  require(stride >= 1 && padding >= 0, ErrorKind::InvalidArgument, "invalid stride/padding");
  ConvGeometry g{};
  g.cin = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.cout = kernel.dim(0);
  g.k = kernel.dim(2);
  g.stride = stride;
  g.pad = padding;
  require(kernel.dim(1) == g.cin, ErrorKind::ShapeMismatch, "conv2d channel mismatch");
  require(kernel.dim(3) == g.k && g.k % 2 == 1, ErrorKind::ShapeMismatch,
          "conv2d kernel must be square and odd-sized");
  g.ho = (g.h + 2 * padding - g.k) / stride + 1;
  g.wo = (g.w + 2 * padding - g.k) / stride + 1;
  require(g.ho >= 1 && g.wo >= 1, ErrorKind::ShapeMismatch, "conv2d output would be empty");
  const int patch = g.cin * g.k * g.k;
  const int plane = g.ho * g.wo;
  std::vector<double> cols(static_cast<std::size_t>(patch) * plane);
  im2col(x.value().storage().data(), g, cols.data());
  Tensor out({g.cout, g.ho, g.wo});
  MapMatrix(out.storage().data(), g.cout, plane).noalias() =
      ConstMapMatrix(kernel.value().storage().data(), g.cout, patch) *
      ConstMapMatrix(cols.data(), patch, plane);
  const int ix = x.id();
  const int ik = kernel.id();
  return t.record(std::move(out), {x, kernel}, [ix, ik, g, patch, plane](Tape& tp, const Tensor& grad) {
    ConstMapMatrix gm(grad.storage().data(), g.cout, plane);
    Tensor* gx = tp.grad_buffer(ix);
    Tensor* gk = tp.grad_buffer(ik);
    if (gk) {
      std::vector<double> cols(static_cast<std::size_t>(patch) * plane);
      im2col(tp.value(ix).storage().data(), g, cols.data());
      MapMatrix(gk->storage().data(), g.cout, patch).noalias() +=
          gm * ConstMapMatrix(cols.data(), patch, plane).transpose();
    }
    if (gx) {
      std::vector<double> dcols(static_cast<std::size_t>(patch) * plane);
      MapMatrix(dcols.data(), patch, plane).noalias() =
          ConstMapMatrix(tp.value(ik).storage().data(), g.cout, patch).transpose() * gm;
      col2im(dcols.data(), g, gx->storage().data());
    }
  });
}

Var avg_pool2(Var x) {
  require(x.value().rank() == 3, ErrorKind::ShapeMismatch, "avg_pool2 input must be [C,H,W]");
  Tape& t = *x.tape();
  const int c = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  const int ho = (h + 1) / 2;
  const int wo = (w + 1) / 2;
  Tensor out({c, ho, wo});
  const auto& v = x.value().storage();
  for (int k = 0; k < c; ++k) {
    const double* src = v.data() + static_cast<std::size_t>(k) * h * w;
    double* dst = out.storage().data() + static_cast<std::size_t>(k) * ho * wo;
    for (int y = 0; y < ho; ++y) {
      const int y0 = 2 * y;
      const int y1 = std::min(y0 + 1, h - 1);
      for (int xx = 0; xx < wo; ++xx) {
        const int x0 = 2 * xx;
        const int x1 = std::min(x0 + 1, w - 1);
        dst[y * wo + xx] =
            0.25 * (src[y0 * w + x0] + src[y0 * w + x1] + src[y1 * w + x0] + src[y1 * w + x1]);
      }
    }
  }
  const int ia = x.id();
  return t.record(std::move(out), {x}, [ia, c, h, w, ho, wo](Tape& tp, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    if (!ga) return;
    for (int k = 0; k < c; ++k) {
      double* dst = ga->storage().data() + static_cast<std::size_t>(k) * h * w;
      const double* src = g.storage().data() + static_cast<std::size_t>(k) * ho * wo;
      for (int y = 0; y < ho; ++y) {
        const int y0 = 2 * y;
        const int y1 = std::min(y0 + 1, h - 1);
        for (int xx = 0; xx < wo; ++xx) {
          const int x0 = 2 * xx;
          const int x1 = std::min(x0 + 1, w - 1);
          const double q = 0.25 * src[y * wo + xx];
          dst[y0 * w + x0] += q;
          dst[y0 * w + x1] += q;
          dst[y1 * w + x0] += q;
          dst[y1 * w + x1] += q;
        }
      }
    }
  });
}

Var bilinear_resize(Var x, int h, int w) {
  require(x.value().rank() == 3, ErrorKind::ShapeMismatch, "bilinear_resize input must be [C,H,W]");
  Tape& t = *x.tape();
  const int c = x.dim(0);
  const int ih = x.dim(1);
  const int iw = x.dim(2);
  if (ih == h && iw == w) return x;
  auto ty = std::make_shared<std::vector<LinearTap>>(linear_taps(ih, h));
  auto tx = std::make_shared<std::vector<LinearTap>>(linear_taps(iw, w));
  Tensor out({c, h, w});
  const auto& v = x.value().storage();
  for (int k = 0; k < c; ++k) {
    const double* src = v.data() + static_cast<std::size_t>(k) * ih * iw;
    double* dst = out.storage().data() + static_cast<std::size_t>(k) * h * w;
    for (int y = 0; y < h; ++y) {
      const LinearTap& a = (*ty)[static_cast<std::size_t>(y)];
      for (int xx = 0; xx < w; ++xx) {
        const LinearTap& b = (*tx)[static_cast<std::size_t>(xx)];
        const double top = (1.0 - b.weight) * src[a.lo * iw + b.lo] + b.weight * src[a.lo * iw + b.hi];
        const double bot = (1.0 - b.weight) * src[a.hi * iw + b.lo] + b.weight * src[a.hi * iw + b.hi];
        dst[y * w + xx] = (1.0 - a.weight) * top + a.weight * bot;
      }
    }
  }
  const int ia = x.id();
  return t.record(std::move(out), {x}, [ia, c, ih, iw, h, w, ty, tx](Tape& tp, const Tensor& g) {
    Tensor* ga = tp.grad_buffer(ia);
    if (!ga) return;
    for (int k = 0; k < c; ++k) {
      double* dst = ga->storage().data() + static_cast<std::size_t>(k) * ih * iw;
      const double* src = g.storage().data() + static_cast<std::size_t>(k) * h * w;
      for (int y = 0; y < h; ++y) {
        const LinearTap& a = (*ty)[static_cast<std::size_t>(y)];
        for (int xx = 0; xx < w; ++xx) {
          const LinearTap& b = (*tx)[static_cast<std::size_t>(xx)];
          const double gv = src[y * w + xx];
          dst[a.lo * iw + b.lo] += gv * (1.0 - a.weight) * (1.0 - b.weight);
          dst[a.lo * iw + b.hi] += gv * (1.0 - a.weight) * b.weight;
          dst[a.hi * iw + b.lo] += gv * a.weight * (1.0 - b.weight);
          dst[a.hi * iw + b.hi] += gv * a.weight * b.weight;
        }
      }
    }
  });
}

namespace {

struct SamplePoint {
  int x0, x1, y0, y1;
  double fx, fy;
  bool clamped_x, clamped_y;
};

SamplePoint sample_point(double sx, double sy, int w, int h) {
  SamplePoint p{};
  p.clamped_x = sx < 0.0 || sx > w - 1;
  p.clamped_y = sy < 0.0 || sy > h - 1;
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  p.x0 = static_cast<int>(std::floor(sx));
  p.y0 = static_cast<int>(std::floor(sy));
  p.x1 = std::min(p.x0 + 1, w - 1);
  p.y1 = std::min(p.y0 + 1, h - 1);
  p.fx = sx - p.x0;
  p.fy = sy - p.y0;
  return p;
}

}  // namespace

Var warp_bilinear(Var img, Var flow) {
  Tape& t = tape_of({img, flow});
  require(img.value().rank() == 3, ErrorKind::ShapeMismatch, "warp image must be [C,H,W]");
  const int c = img.dim(0);
  const int h = img.dim(1);
  const int w = img.dim(2);
  require(flow.value().rank() == 3 && flow.dim(0) == h && flow.dim(1) == w && flow.dim(2) == 2,
          ErrorKind::ShapeMismatch, "flow must be [H,W,2] matching the image");
  Tensor out({c, h, w});
  const auto& iv = img.value().storage();
  const auto& fv = flow.value().storage();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t q = static_cast<std::size_t>(y) * w + x;
      const SamplePoint p = sample_point(x + fv[2 * q], y + fv[2 * q + 1], w, h);
      for (int k = 0; k < c; ++k) {
        const double* s = iv.data() + static_cast<std::size_t>(k) * h * w;
        const double top = (1.0 - p.fx) * s[p.y0 * w + p.x0] + p.fx * s[p.y0 * w + p.x1];
        const double bot = (1.0 - p.fx) * s[p.y1 * w + p.x0] + p.fx * s[p.y1 * w + p.x1];
        out[static_cast<std::size_t>(k) * h * w + q] = (1.0 - p.fy) * top + p.fy * bot;
      }
    }
  }
  const int ii = img.id();
  const int ifl = flow.id();
  return t.record(std::move(out), {img, flow}, [ii, ifl, c, h, w](Tape& tp, const Tensor& g) {
    Tensor* gi = tp.grad_buffer(ii);
    Tensor* gf = tp.grad_buffer(ifl);
    const auto& iv2 = tp.value(ii).storage();
    const auto& fv2 = tp.value(ifl).storage();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t q = static_cast<std::size_t>(y) * w + x;
        const SamplePoint p = sample_point(x + fv2[2 * q], y + fv2[2 * q + 1], w, h);
        double dsx = 0.0;
        double dsy = 0.0;
        for (int k = 0; k < c; ++k) {
          const std::size_t base = static_cast<std::size_t>(k) * h * w;
          const double gv = g[base + q];
          if (gi) {
            double* d = gi->storage().data() + base;
            d[p.y0 * w + p.x0] += gv * (1.0 - p.fx) * (1.0 - p.fy);
            d[p.y0 * w + p.x1] += gv * p.fx * (1.0 - p.fy);
            d[p.y1 * w + p.x0] += gv * (1.0 - p.fx) * p.fy;
            d[p.y1 * w + p.x1] += gv * p.fx * p.fy;
          }
          if (gf) {
            const double* s = iv2.data() + base;
            const double v00 = s[p.y0 * w + p.x0];
            const double v01 = s[p.y0 * w + p.x1];
            const double v10 = s[p.y1 * w + p.x0];
            const double v11 = s[p.y1 * w + p.x1];
            dsx += gv * ((1.0 - p.fy) * (v01 - v00) + p.fy * (v11 - v10));
            dsy += gv * ((1.0 - p.fx) * (v10 - v00) + p.fx * (v11 - v01));
          }
        }
        if (gf) {
          if (!p.clamped_x && p.x1 != p.x0) gf->storage()[2 * q] += dsx;
          if (!p.clamped_y && p.y1 != p.y0) gf->storage()[2 * q + 1] += dsy;
        }
      }
    }
  });
}

void Rmsprop::step(std::vector<Tensor*> params, const std::vector<Tensor>& grads) {
  require(params.size() == grads.size(), ErrorKind::ShapeMismatch,
          "rmsprop: parameter and gradient counts differ");
  if (sq_.empty()) {
    for (Tensor* p : params) sq_.emplace_back(p->numel(), 0.0);
  }
  require(sq_.size() == params.size(), ErrorKind::ShapeMismatch,
          "rmsprop: parameter list changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k]->storage();
    const auto& g = grads[k].storage();
    auto& s = sq_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      s[i] = cfg_.decay * s[i] + (1.0 - cfg_.decay) * g[i] * g[i];
      p[i] -= cfg_.lr * g[i] / (std::sqrt(s[i]) + cfg_.eps);
    }
  }
}

void Adam::step(std::vector<Tensor*> params, const std::vector<Tensor>& grads) {
  require(params.size() == grads.size(), ErrorKind::ShapeMismatch,
          "adam: parameter and gradient counts differ");
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.emplace_back(p->numel(), 0.0);
      v_.emplace_back(p->numel(), 0.0);
    }
  }
  require(m_.size() == params.size(), ErrorKind::ShapeMismatch,
          "adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k]->storage();
    const auto& g = grads[k].storage();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
      v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mh = m_[k][i] / c1;
      const double vh = v_[k][i] / c2;
      p[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

FdReport finite_diff_report(const ScalarFn& f, const Tensor& x, double eps,
                            std::span<const std::size_t> coords) {
  require(eps > 0.0, ErrorKind::InvalidArgument, "finite-difference step must be positive");
  Tensor analytic;
  {
    Tape tape;
    Var leaf = tape.leaf(x);
    Var loss = f(tape, leaf);
    tape.backward(loss);
    analytic = tape.grad(leaf);
  }
  auto eval = [&f](const Tensor& at) {
    Tape tape;
    return f(tape, tape.constant(at)).value().item();
  };
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(x.numel());
    std::iota(all.begin(), all.end(), std::size_t{0});
    coords = all;
  }
  FdReport report;
  Tensor probe = x;
  for (std::size_t i : coords) {
    require(i < x.numel(), ErrorKind::InvalidArgument, "coordinate out of range");
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = eval(probe);
    probe[i] = orig - eps;
    const double fm = eval(probe);
    probe[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8);
    if (err > report.max_rel_error || (i == coords.front() && report.max_rel_error == 0.0)) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
  }
  return report;
}

double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps) {
  return finite_diff_report(f, x, eps).max_rel_error;
}

}  // namespace stylecore::ad
