#include "dmtf/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "dmtf/errors.hpp"

namespace dmtf::nd {

namespace {

thread_local GradTape* g_active_tape = nullptr;
std::atomic<uint64_t> g_tape_counter{1};

bool tracked(const Tensor& t, const GradTape* tape) {
  if (!t.defined()) return false;
  if (t.requires_grad()) return true;
  return tape != nullptr && t.impl()->tape_id == tape->id();
}

// Marks the output as part of the live graph and registers the backward
// closure. `fn` must accumulate (+=) into input grads. Template so that the
// std::function wrapper is only materialized when a tape is recording.
template <typename F>
void record(Tensor& out, std::initializer_list<const Tensor*> inputs, F&& fn) {
  GradTape* tape = GradTape::active();
  if (tape == nullptr) return;
  bool any = false;
  for (const Tensor* in : inputs) {
    if (tracked(*in, tape)) {
      any = true;
      break;
    }
  }
  if (!any) return;
  out.impl()->tape_id = tape->id();
  out.impl()->ensure_grad();
  for (const Tensor* in : inputs) {
    if (tracked(*in, tape)) in->impl()->ensure_grad();
  }
  tape->push_node(std::function<void()>(std::forward<F>(fn)));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void check_2d(const Tensor& a, const char* op) {
  if (a.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(a.shape()));
  }
}

int last_extent(const Tensor& x, const char* op) {
  if (x.shape().empty() || x.shape().back() <= 0) {
    throw ShapeError(std::string(op) + ": empty last dimension in " + shape_str(x.shape()));
  }
  return x.shape().back();
}

}  // namespace

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

Tensor make_tensor(Shape shape, std::vector<double> data) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape.empty()) throw ShapeError("tensor shape must not be empty");
  if (static_cast<int64_t>(data.size()) != shape_size(shape)) {
    throw ShapeError("data size " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> d(static_cast<size_t>(shape_size(shape)), 0.0);
  return make_tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> d(static_cast<size_t>(shape_size(shape)), value);
  return make_tensor(std::move(shape), std::move(d));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  return make_tensor(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value) { return make_tensor({1}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }

int64_t Tensor::size() const { return static_cast<int64_t>(impl_->data.size()); }

int Tensor::rows() const {
  check_2d(*this, "rows");
  return impl_->shape[0];
}

int Tensor::cols() const {
  check_2d(*this, "cols");
  return impl_->shape[1];
}

std::vector<double>& Tensor::data() { return impl_->data; }
const std::vector<double>& Tensor::data() const { return impl_->data; }

double Tensor::value() const {
  if (size() != 1) throw ShapeError("value(): tensor is not scalar: " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(int r, int c) const {
  check_2d(*this, "at");
  return impl_->data[static_cast<size_t>(r) * impl_->shape[1] + c];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
  impl_->requires_grad = v;
  if (v) impl_->ensure_grad();
  return *this;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size(); }

std::vector<double>& Tensor::grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.assign(impl_->data.size(), 0.0);
}

// ---- tape ----------------------------------------------------------------

GradTape::GradTape() {
  if (g_active_tape != nullptr) {
    throw std::logic_error("a GradTape is already active on this thread");
  }
  id_ = g_tape_counter.fetch_add(1);
  g_active_tape = this;
}

GradTape::~GradTape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::push_node(std::function<void()> fn) {
  if (consumed_) throw std::logic_error("recording an op on a consumed tape");
  nodes_.push_back(std::move(fn));
}

void GradTape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("backward called twice on the same tape");
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar");
  }
  if (loss.impl()->tape_id != id_) {
    throw std::logic_error("backward: loss was not produced on this tape");
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  consumed_ = true;
}

void backward(GradTape& tape, const Tensor& loss) { tape.backward(loss); }

void snap_f32_inplace(std::vector<double>& values) {
  for (double& v : values) v = snap_f32(v);
}

// ---- elementwise ops ------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Tensor c = make_tensor(a.shape(), std::move(out));
  auto ai = a.impl(), bi = b.impl(), ci = c.impl();
  GradTape* tape = GradTape::active();
  bool ta = tracked(a, tape), tb = tracked(b, tape);
  record(c, {&a, &b}, [ai, bi, ci, ta, tb] {
    for (size_t i = 0; i < ci->grad.size(); ++i) {
      if (ta) ai->grad[i] += ci->grad[i];
      if (tb) bi->grad[i] += ci->grad[i];
    }
  });
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  Tensor c = make_tensor(a.shape(), std::move(out));
  auto ai = a.impl(), bi = b.impl(), ci = c.impl();
  GradTape* tape = GradTape::active();
  bool ta = tracked(a, tape), tb = tracked(b, tape);
  record(c, {&a, &b}, [ai, bi, ci, ta, tb] {
    for (size_t i = 0; i < ci->grad.size(); ++i) {
      if (ta) ai->grad[i] += ci->grad[i];
      if (tb) bi->grad[i] -= ci->grad[i];
    }
  });
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor c = make_tensor(a.shape(), std::move(out));
  auto ai = a.impl(), bi = b.impl(), ci = c.impl();
  GradTape* tape = GradTape::active();
  bool ta = tracked(a, tape), tb = tracked(b, tape);
  record(c, {&a, &b}, [ai, bi, ci, ta, tb] {
    for (size_t i = 0; i < ci->grad.size(); ++i) {
      if (ta) ai->grad[i] += ci->grad[i] * bi->data[i];
      if (tb) bi->grad[i] += ci->grad[i] * ai->data[i];
    }
  });
  return c;
}

Tensor scale(const Tensor& a, double cst) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * cst;
  Tensor c = make_tensor(a.shape(), std::move(out));
  auto ai = a.impl(), ci = c.impl();
  record(c, {&a}, [ai, ci, cst] {
    for (size_t i = 0; i < ci->grad.size(); ++i) ai->grad[i] += ci->grad[i] * cst;
  });
  return c;
}

Tensor add_scalar(const Tensor& a, double cst) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + cst;
  Tensor c = make_tensor(a.shape(), std::move(out));
  auto ai = a.impl(), ci = c.impl();
  record(c, {&a}, [ai, ci] {
    for (size_t i = 0; i < ci->grad.size(); ++i) ai->grad[i] += ci->grad[i];
  });
  return c;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  const int m = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (int i = 0; i < m; ++i) {
    double* po = out.data() + static_cast<size_t>(i) * n;
    const double* par = pa + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = par[p];
      const double* pbr = pb + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) po[j] += av * pbr[j];
    }
  }
  Tensor c = make_tensor({m, n}, std::move(out));
  auto ai = a.impl(), bi = b.impl(), ci = c.impl();
  GradTape* tape = GradTape::active();
  bool ta = tracked(a, tape), tb = tracked(b, tape);
  record(c, {&a, &b}, [ai, bi, ci, m, k, n, ta, tb] {
    const double* g = ci->grad.data();
    if (ta) {
      // dA[i,p] += sum_j g[i,j] * B[p,j]
      double* da = ai->grad.data();
      const double* pb = bi->data.data();
      for (int i = 0; i < m; ++i) {
        const double* gr = g + static_cast<size_t>(i) * n;
        double* dar = da + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
          const double* pbr = pb + static_cast<size_t>(p) * n;
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += gr[j] * pbr[j];
          dar[p] += acc;
        }
      }
    }
    if (tb) {
      // dB[p,j] += sum_i A[i,p] * g[i,j]
      double* db = bi->grad.data();
      const double* pa = ai->data.data();
      for (int i = 0; i < m; ++i) {
        const double* gr = g + static_cast<size_t>(i) * n;
        const double* par = pa + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
          const double av = par[p];
          double* dbr = db + static_cast<size_t>(p) * n;
          for (int j = 0; j < n; ++j) dbr[j] += av * gr[j];
        }
      }
    }
  });
  return c;
}

Tensor transpose(const Tensor& a) {
  check_2d(a, "transpose");
  const int m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = a.data()[static_cast<size_t>(i) * n + j];
  Tensor c = make_tensor({n, m}, std::move(out));
  auto ai = a.impl(), ci = c.impl();
  record(c, {&a}, [ai, ci, m, n] {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        ai->grad[static_cast<size_t>(i) * n + j] += ci->grad[static_cast<size_t>(j) * m + i];
  });
  return c;
}

Tensor add_rowvec(const Tensor& a, const Tensor& bias) {
  check_2d(a, "add_rowvec");
  if (bias.shape().size() != 1 || bias.shape()[0] != a.shape()[1]) {
    throw ShapeError("add_rowvec: bias " + shape_str(bias.shape()) + " does not match " +
                     shape_str(a.shape()));
  }
  const int m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(a.data().size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(i) * n + j] = a.data()[static_cast<size_t>(i) * n + j] + bias.data()[j];
  Tensor c = make_tensor(a.shape(), std::move(out));
  auto ai = a.impl(), bi = bias.impl(), ci = c.impl();
  GradTape* tape = GradTape::active();
  bool ta = tracked(a, tape), tb = tracked(bias, tape);
  record(c, {&a, &bias}, [ai, bi, ci, m, n, ta, tb] {
    for (int i = 0; i < m; ++i) {
      const double* gr = ci->grad.data() + static_cast<size_t>(i) * n;
      if (ta) {
        double* da = ai->grad.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) da[j] += gr[j];
      }
      if (tb) {
        for (int j = 0; j < n; ++j) bi->grad[j] += gr[j];
      }
    }
  });
  return c;
}

// ---- softmax family --------------------------------------------------------

Tensor softmax_lastdim(const Tensor& x) {
  const int n = last_extent(x, "softmax_lastdim");
  const size_t slices = x.data().size() / n;
  std::vector<double> out(x.data().size());
  for (size_t s = 0; s < slices; ++s) {
    const double* xs = x.data().data() + s * n;
    double* os = out.data() + s * n;
    double mx = xs[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xs[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      os[j] = std::exp(xs[j] - mx);
      sum += os[j];
    }
    for (int j = 0; j < n; ++j) os[j] /= sum;
  }
  Tensor y = make_tensor(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi, n, slices] {
    for (size_t s = 0; s < slices; ++s) {
      const double* ys = yi->data.data() + s * n;
      const double* gs = yi->grad.data() + s * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += gs[j] * ys[j];
      double* dx = xi->grad.data() + s * n;
      for (int j = 0; j < n; ++j) dx[j] += ys[j] * (gs[j] - dot);
    }
  });
  return y;
}

Tensor log_softmax_lastdim(const Tensor& x) {
  const int n = last_extent(x, "log_softmax_lastdim");
  const size_t slices = x.data().size() / n;
  std::vector<double> out(x.data().size());
  for (size_t s = 0; s < slices; ++s) {
    const double* xs = x.data().data() + s * n;
    double* os = out.data() + s * n;
    double mx = xs[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xs[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += std::exp(xs[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < n; ++j) os[j] = xs[j] - lse;
  }
  Tensor y = make_tensor(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi, n, slices] {
    for (size_t s = 0; s < slices; ++s) {
      const double* ys = yi->data.data() + s * n;
      const double* gs = yi->grad.data() + s * n;
      double gsum = 0.0;
      for (int j = 0; j < n; ++j) gsum += gs[j];
      double* dx = xi->grad.data() + s * n;
      for (int j = 0; j < n; ++j) dx[j] += gs[j] - std::exp(ys[j]) * gsum;
    }
  });
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const int n = last_extent(x, "layer_norm");
  if (gain.shape().size() != 1 || gain.shape()[0] != n || bias.shape() != gain.shape()) {
    throw ShapeError("layer_norm: gain/bias must be 1-D of the last extent");
  }
  if (!(eps > 0.0)) throw ShapeError("layer_norm: eps must be positive");
  const size_t slices = x.data().size() / n;
  std::vector<double> out(x.data().size());
  std::vector<double> xhat(x.data().size());
  std::vector<double> inv_std(slices);
  for (size_t s = 0; s < slices; ++s) {
    const double* xs = x.data().data() + s * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += xs[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xs[j] - mean;
      var += d * d;
    }
    var /= n;
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[s] = istd;
    for (int j = 0; j < n; ++j) {
      const double h = (xs[j] - mean) * istd;
      xhat[s * n + j] = h;
      out[s * n + j] = gain.data()[j] * h + bias.data()[j];
    }
  }
  Tensor y = make_tensor(x.shape(), std::move(out));
  auto xi = x.impl(), gi = gain.impl(), bi = bias.impl(), yi = y.impl();
  GradTape* tape = GradTape::active();
  bool tx = tracked(x, tape), tg = tracked(gain, tape), tb = tracked(bias, tape);
  record(y, {&x, &gain, &bias},
         [xi, gi, bi, yi, n, slices, xhat = std::move(xhat), inv_std = std::move(inv_std), tx, tg, tb] {
           for (size_t s = 0; s < slices; ++s) {
             const double* gs = yi->grad.data() + s * n;
             const double* hs = xhat.data() + s * n;
             if (tg || tb) {
               for (int j = 0; j < n; ++j) {
                 if (tg) gi->grad[j] += gs[j] * hs[j];
                 if (tb) bi->grad[j] += gs[j];
               }
             }
             if (tx) {
               // dx = istd * (gy - mean(gy) - xhat * mean(gy * xhat)), gy = g * gain
               double m1 = 0.0, m2 = 0.0;
               for (int j = 0; j < n; ++j) {
                 const double gy = gs[j] * gi->data[j];
                 m1 += gy;
                 m2 += gy * hs[j];
               }
               m1 /= n;
               m2 /= n;
               double* dx = xi->grad.data() + s * n;
               for (int j = 0; j < n; ++j) {
                 const double gy = gs[j] * gi->data[j];
                 dx[j] += inv_std[s] * (gy - m1 - hs[j] * m2);
               }
             }
           }
         });
  return y;
}

// ---- pointwise nonlinearities ----------------------------------------------

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  Tensor y = make_tensor(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi] {
    for (size_t i = 0; i < yi->grad.size(); ++i)
      if (xi->data[i] > 0.0) xi->grad[i] += yi->grad[i];
  });
  return y;
}

Tensor tanh_t(const Tensor& x) {
  std::vector<double> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  Tensor y = make_tensor(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi] {
    for (size_t i = 0; i < yi->grad.size(); ++i)
      xi->grad[i] += yi->grad[i] * (1.0 - yi->data[i] * yi->data[i]);
  });
  return y;
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Tensor y = make_tensor(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi] {
    for (size_t i = 0; i < yi->grad.size(); ++i)
      xi->grad[i] += yi->grad[i] * yi->data[i] * (1.0 - yi->data[i]);
  });
  return y;
}

Tensor exp_t(const Tensor& x) {
  std::vector<double> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.data()[i]);
  Tensor y = make_tensor(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi] {
    for (size_t i = 0; i < yi->grad.size(); ++i) xi->grad[i] += yi->grad[i] * yi->data[i];
  });
  return y;
}

Tensor abs_t(const Tensor& x) {
  std::vector<double> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x.data()[i]);
  Tensor y = make_tensor(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi] {
    for (size_t i = 0; i < yi->grad.size(); ++i) {
      const double s = xi->data[i] > 0.0 ? 1.0 : (xi->data[i] < 0.0 ? -1.0 : 0.0);
      xi->grad[i] += yi->grad[i] * s;
    }
  });
  return y;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw ShapeError("clamp: lo must not exceed hi");
  std::vector<double> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, x.data()[i]));
  Tensor y = make_tensor(x.shape(), std::move(out));
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi, lo, hi] {
    for (size_t i = 0; i < yi->grad.size(); ++i)
      if (xi->data[i] > lo && xi->data[i] < hi) xi->grad[i] += yi->grad[i];
  });
  return y;
}

Tensor min_t(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "min_t");
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.data()[i], b.data()[i]);
  Tensor c = make_tensor(a.shape(), std::move(out));
  auto ai = a.impl(), bi = b.impl(), ci = c.impl();
  GradTape* tape = GradTape::active();
  bool ta = tracked(a, tape), tb = tracked(b, tape);
  record(c, {&a, &b}, [ai, bi, ci, ta, tb] {
    for (size_t i = 0; i < ci->grad.size(); ++i) {
      if (ai->data[i] <= bi->data[i]) {
        if (ta) ai->grad[i] += ci->grad[i];
      } else if (tb) {
        bi->grad[i] += ci->grad[i];
      }
    }
  });
  return c;
}

// ---- reductions / indexing --------------------------------------------------

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = Tensor::scalar(s);
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi] {
    const double g = yi->grad[0];
    for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
  });
  return y;
}

Tensor mean_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  Tensor y = Tensor::scalar(s * inv);
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi, inv] {
    const double g = yi->grad[0] * inv;
    for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
  });
  return y;
}

Tensor sum_lastdim(const Tensor& x) {
  check_2d(x, "sum_lastdim");
  const int m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[i] += x.data()[static_cast<size_t>(i) * n + j];
  Tensor y = make_tensor({m}, std::move(out));
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi, m, n] {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) xi->grad[static_cast<size_t>(i) * n + j] += yi->grad[i];
  });
  return y;
}

Tensor mean_rows(const Tensor& x) {
  check_2d(x, "mean_rows");
  const int m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[j] += x.data()[static_cast<size_t>(i) * n + j];
  for (double& v : out) v /= m;
  Tensor y = make_tensor({1, n}, std::move(out));
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi, m, n] {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) xi->grad[static_cast<size_t>(i) * n + j] += yi->grad[j] / m;
  });
  return y;
}

Tensor gather_lastdim(const Tensor& x, const std::vector<int>& idx) {
  check_2d(x, "gather_lastdim");
  const int m = x.shape()[0], n = x.shape()[1];
  if (static_cast<int>(idx.size()) != m) throw ShapeError("gather_lastdim: index count != rows");
  std::vector<double> out(m);
  for (int i = 0; i < m; ++i) {
    if (idx[i] < 0 || idx[i] >= n) throw ShapeError("gather_lastdim: index out of range");
    out[i] = x.data()[static_cast<size_t>(i) * n + idx[i]];
  }
  Tensor y = make_tensor({m}, std::move(out));
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi, idx, m, n] {
    for (int i = 0; i < m; ++i) xi->grad[static_cast<size_t>(i) * n + idx[i]] += yi->grad[i];
  });
  return y;
}

Tensor select_element(const Tensor& x, int r, int c) {
  check_2d(x, "select_element");
  const int m = x.shape()[0], n = x.shape()[1];
  if (r < 0 || r >= m || c < 0 || c >= n) throw ShapeError("select_element: index out of range");
  Tensor y = Tensor::scalar(x.data()[static_cast<size_t>(r) * n + c]);
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi, r, c, n] { xi->grad[static_cast<size_t>(r) * n + c] += yi->grad[0]; });
  return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  std::vector<const Tensor*> alive;
  for (const Tensor& p : parts)
    if (p.defined() && p.shape()[0] > 0) alive.push_back(&p);
  if (alive.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const int n = alive[0]->cols();
  int m = 0;
  for (const Tensor* p : alive) {
    if (p->cols() != n) throw ShapeError("concat_rows: column counts differ");
    m += p->rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(m) * n);
  for (const Tensor* p : alive) out.insert(out.end(), p->data().begin(), p->data().end());
  Tensor y = make_tensor({m, n}, std::move(out));

  GradTape* tape = GradTape::active();
  std::vector<std::shared_ptr<TensorImpl>> impls;
  std::vector<bool> trk;
  bool any = false;
  for (const Tensor* p : alive) {
    impls.push_back(p->impl());
    const bool t = tracked(*p, tape);
    trk.push_back(t);
    any = any || t;
  }
  if (tape && any) {
    auto yi = y.impl();
    y.impl()->tape_id = tape->id();
    y.impl()->ensure_grad();
    for (size_t i = 0; i < impls.size(); ++i)
      if (trk[i]) impls[i]->ensure_grad();
    tape->push_node([impls, trk, yi] {
      size_t off = 0;
      for (size_t p = 0; p < impls.size(); ++p) {
        const size_t len = impls[p]->data.size();
        if (trk[p]) {
          for (size_t i = 0; i < len; ++i) impls[p]->grad[i] += yi->grad[off + i];
        }
        off += len;
      }
    });
  }
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  std::vector<const Tensor*> alive;
  for (const Tensor& p : parts)
    if (p.defined() && p.shape()[1] > 0) alive.push_back(&p);
  if (alive.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const int m = alive[0]->rows();
  int n = 0;
  std::vector<int> widths;
  for (const Tensor* p : alive) {
    if (p->rows() != m) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(p->cols());
    n += p->cols();
  }
  std::vector<double> out(static_cast<size_t>(m) * n);
  {
    int col0 = 0;
    for (size_t p = 0; p < alive.size(); ++p) {
      const int w = widths[p];
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j)
          out[static_cast<size_t>(i) * n + col0 + j] = alive[p]->data()[static_cast<size_t>(i) * w + j];
      col0 += w;
    }
  }
  Tensor y = make_tensor({m, n}, std::move(out));

  GradTape* tape = GradTape::active();
  std::vector<std::shared_ptr<TensorImpl>> impls;
  std::vector<bool> trk;
  bool any = false;
  for (const Tensor* p : alive) {
    impls.push_back(p->impl());
    const bool t = tracked(*p, tape);
    trk.push_back(t);
    any = any || t;
  }
  if (tape && any) {
    auto yi = y.impl();
    y.impl()->tape_id = tape->id();
    y.impl()->ensure_grad();
    for (size_t i = 0; i < impls.size(); ++i)
      if (trk[i]) impls[i]->ensure_grad();
    tape->push_node([impls, trk, widths, yi, m, n] {
      int col0 = 0;
      for (size_t p = 0; p < impls.size(); ++p) {
        const int w = widths[p];
        if (trk[p]) {
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
              impls[p]->grad[static_cast<size_t>(i) * w + j] += yi->grad[static_cast<size_t>(i) * n + col0 + j];
        }
        col0 += w;
      }
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: size mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor y = make_tensor(std::move(shape), x.data());
  auto xi = x.impl(), yi = y.impl();
  record(y, {&x}, [xi, yi] {
    for (size_t i = 0; i < yi->grad.size(); ++i) xi->grad[i] += yi->grad[i];
  });
  return y;
}

Tensor patchify(const Tensor& image, int patch) {
  if (image.shape().size() != 3) {
    throw ShapeError("patchify: expected {H, W, C} image, got " + shape_str(image.shape()));
  }
  const int h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  if (patch <= 0 || h % patch != 0 || w % patch != 0) {
    throw ShapeError("patchify: image " + shape_str(image.shape()) + " not divisible by patch " +
                     std::to_string(patch));
  }
  const int ph = h / patch, pw = w / patch;
  const int tokens = ph * pw;
  const int dim = patch * patch * c;
  std::vector<int> src(static_cast<size_t>(tokens) * dim);
  for (int pr = 0; pr < ph; ++pr)
    for (int pc = 0; pc < pw; ++pc) {
      const int t = pr * pw + pc;
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx)
          for (int ch = 0; ch < c; ++ch) {
            const int col = (dy * patch + dx) * c + ch;
            src[static_cast<size_t>(t) * dim + col] = ((pr * patch + dy) * w + (pc * patch + dx)) * c + ch;
          }
    }
  std::vector<double> out(src.size());
  for (size_t i = 0; i < src.size(); ++i) out[i] = image.data()[src[i]];
  Tensor y = make_tensor({tokens, dim}, std::move(out));
  auto xi = image.impl(), yi = y.impl();
  record(y, {&image}, [xi, yi, src = std::move(src)] {
    for (size_t i = 0; i < src.size(); ++i) xi->grad[src[i]] += yi->grad[i];
  });
  return y;
}

}  // namespace dmtf::nd
