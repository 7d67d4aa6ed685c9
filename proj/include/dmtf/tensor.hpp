#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace dmtf::nd {

using Shape = std::vector<int>;

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized like data once the tensor joins a graph
  bool requires_grad = false;
  uint64_t tape_id = 0;

  void ensure_grad();
};

// Value-semantics handle over shared storage. All arithmetic is 64-bit;
// persistence narrows to 32-bit floats (see checkpoint.hpp).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t size() const;
  int rows() const;  // 2-D convenience
  int cols() const;

  std::vector<double>& data();
  const std::vector<double>& data() const;
  double value() const;            // scalar tensors only
  double at(int r, int c) const;   // 2-D convenience

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);
  bool has_grad() const;
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor make_tensor(Shape shape, std::vector<double> data);
};

struct NamedParam {
  std::string name;
  Tensor value;
};

// Records ops executed while it is alive (one tape per thread). Nodes are
// stored in execution order, so reverse iteration is a valid topological
// order for the backward pass. One backward per tape.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void backward(const Tensor& loss);

  size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  uint64_t id() const { return id_; }

  static GradTape* active();

  void push_node(std::function<void()> fn);

 private:
  std::vector<std::function<void()>> nodes_;
  uint64_t id_ = 0;
  bool consumed_ = false;
};

// ---- ops ----------------------------------------------------------------
// Every op is functional (fresh output tensor) and registers its backward
// closure on the active tape when any input is tracked.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add_rowvec(const Tensor& a, const Tensor& bias);  // [m x n] + [n]

Tensor softmax_lastdim(const Tensor& x);
Tensor log_softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

Tensor relu(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp_t(const Tensor& x);
Tensor abs_t(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor min_t(const Tensor& a, const Tensor& b);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor sum_lastdim(const Tensor& x);    // [m x n] -> [m]
Tensor mean_rows(const Tensor& x);      // [m x n] -> [1 x n]
Tensor gather_lastdim(const Tensor& x, const std::vector<int>& idx);  // [m x n] -> [m]
Tensor select_element(const Tensor& x, int r, int c);                 // -> scalar

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& x, Shape shape);

// Splits an {H, W, C} image into non-overlapping P x P patches; token t is
// patch (t / (W/P), t % (W/P)) flattened in (dy, dx, c) order.
Tensor patchify(const Tensor& image, int patch);

// Populates gradients of every tracked tensor upstream of a scalar loss.
void backward(GradTape& tape, const Tensor& loss);

// Narrow to 32-bit float and widen back; used to keep persisted state exact.
inline double snap_f32(double x) { return static_cast<double>(static_cast<float>(x)); }
void snap_f32_inplace(std::vector<double>& values);

}  // namespace dmtf::nd
