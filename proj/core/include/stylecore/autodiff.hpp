#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stylecore::ad {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major value. Images use [C, H, W]; sample sets use [n, D].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t numel() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double item() const;

  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  int dim(int axis) const { return value().dim(axis); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Receives the upstream gradient of a node and accumulates into its parents
/// via Tape::accumulate.
using BackwardFn = std::function<void(Tape&, const Tensor& upstream)>;

/// Records a computation graph. Nodes are appended in creation order, which
/// is already a topological order, so backward walks ids downwards once.
/// A tape is single-threaded; independent tapes may live on different threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  /// Registers an op. requires_grad is inherited from the parents; `backward`
  /// is only kept when some parent needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }

  /// Adds `g` into the gradient buffer of node `id` (no-op for constants).
  void accumulate(int id, const Tensor& g);
  /// Mutable gradient buffer, zero-initialized on first use; nullptr for
  /// nodes that do not require gradients.
  Tensor* grad_buffer(int id);

  /// Populates gradients of every reachable node. The loss must be a scalar;
  /// calling backward twice on one tape is an error.
  void backward(Var loss);

  /// Gradient of a leaf (zeros if the leaf did not influence the loss).
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<int> parents;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

Tape& tape_of(std::initializer_list<Var> vars);

// ---- elementwise (numpy-style broadcasting) --------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Throws DivisionByZero if any denominator is exactly zero.
Var div(Var a, Var b);
/// Elementwise max; ties select `a`.
Var maximum(Var a, Var b);

Var add_scalar(Var a, double c);
Var scale(Var a, double c);
Var neg(Var a);
Var square(Var a);
/// Gradient at 0 is taken as 0.
Var sqrt(Var a);
/// Gradient at 0 is taken as 0.
Var abs(Var a);
Var leaky_relu(Var a, double slope);

// ---- reductions ------------------------------------------------------------
Var sum(Var a);
Var mean(Var a);
/// Reduces one axis to size 1 (shape rank is preserved).
Var sum(Var a, int axis);
Var mean(Var a, int axis);

struct ArgReduce {
  Var value;
  std::vector<int> index;  // selected position along the reduced axis
};

/// Min over `axis` of a 2-D tensor. Entries whose mask byte is 0 are
/// excluded; an all-excluded slice throws Infeasible. First index wins ties.
ArgReduce min_reduce(Var a, int axis, std::span<const unsigned char> allowed = {});
ArgReduce max_reduce(Var a, int axis, std::span<const unsigned char> allowed = {});

// ---- shape / indexing ------------------------------------------------------
Var reshape(Var a, Shape shape);
Var transpose(Var a);  // 2-D
Var concat(const std::vector<Var>& parts, int axis);
/// Selects rows (axis 0) by index; repeated indices accumulate gradients.
Var gather_rows(Var a, std::span<const int> rows);
/// Columns [begin, end) of a 2-D tensor.
Var slice_cols(Var a, int begin, int end);

// ---- linear algebra --------------------------------------------------------
Var matmul(Var a, Var b);
/// a * b^T without materialising the transpose.
Var matmul_nt(Var a, Var b);

// ---- image ops on [C, H, W] ------------------------------------------------
/// Zero padding; kernel is [Cout, Cin, k, k] with odd k.
Var conv2d(Var x, Var kernel, int stride, int padding);
/// 2x box average, ceil-sized (matches stylecore::downsample_box2).
Var avg_pool2(Var x);
/// Bilinear resize with half-pixel centers and clamp-to-border.
Var bilinear_resize(Var x, int h, int w);
/// out(c, y, x) = bilinear(img, c, y + flow(y,x,1), x + flow(y,x,0)); flow is
/// [H, W, 2] holding (dx, dy). Samples outside the raster clamp to the border.
Var warp_bilinear(Var img, Var flow);

// ---- optimizers ------------------------------------------------------------
struct RmspropConfig {
  double lr = 0.002;
  double decay = 0.99;
  double eps = 1e-8;
};

class Rmsprop {
 public:
  explicit Rmsprop(RmspropConfig cfg) : cfg_(cfg) {}
  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads);
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  RmspropConfig cfg_;
  std::vector<std::vector<double>> sq_;
};

struct AdamConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads);
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// ---- gradient checking -----------------------------------------------------
using ScalarFn = std::function<Var(Tape&, Var)>;

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares the reverse-mode gradient of f at x with central differences.
/// Error per coordinate is |analytic - numeric| / (|analytic| + 1e-8).
/// `coords` restricts the check to a subset (all coordinates when empty).
FdReport finite_diff_report(const ScalarFn& f, const Tensor& x, double eps,
                            std::span<const std::size_t> coords = {});
double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps);

}  // namespace stylecore::ad
