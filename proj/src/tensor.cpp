#include "gsat/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace gsat {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const RowMatrix>;
using MapMut = Eigen::Map<RowMatrix>;

thread_local bool tl_grad_enabled = true;

std::vector<double>& grad_of(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

bool tracks(std::initializer_list<const Tensor*> inputs) {
  if (!tl_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

MapConst view(const TensorImpl& t, std::size_t rows, std::size_t cols) {
  return MapConst(t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MapMut grad_view(TensorImpl& t, std::size_t rows, std::size_t cols) {
  return MapMut(grad_of(t).data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

std::size_t rows_of(const Shape& s) {
  if (s.size() <= 1) return 1;
  return shape_numel(s) / s.back();
}

std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

// How an operand maps onto the broadcast output grid.
enum class Bcast { kFull, kRow, kCol, kScalar };

struct BroadcastPlan {
  Shape out_shape;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Bcast a = Bcast::kFull;
  Bcast b = Bcast::kFull;
};

Bcast classify(const Tensor& t, std::size_t rows, std::size_t cols) {
  if (t.numel() == rows * cols && t.rows() == rows) return Bcast::kFull;
  if (t.numel() == 1) return Bcast::kScalar;
  if (t.rows() == 1 && t.cols() == cols) return Bcast::kRow;
  if (t.cols() == 1 && t.rows() == rows) return Bcast::kCol;
  throw DimensionError("incompatible shapes");
}

BroadcastPlan plan_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  BroadcastPlan plan;
  const Tensor& big = a.numel() >= b.numel() ? a : b;
  plan.out_shape = big.shape();
  plan.rows = big.rows();
  plan.cols = big.cols();
  try {
    plan.a = classify(a, plan.rows, plan.cols);
    plan.b = classify(b, plan.rows, plan.cols);
  } catch (const DimensionError&) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  return plan;
}

inline std::size_t bindex(Bcast kind, std::size_t i, std::size_t j, std::size_t cols) {
  switch (kind) {
    case Bcast::kFull:
      return i * cols + j;
    case Bcast::kRow:
      return j;
    case Bcast::kCol:
      return i;
    case Bcast::kScalar:
      return 0;
  }
  return 0;
}

enum class BinaryKind { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  require_defined(a, name);
  require_defined(b, name);
  const BroadcastPlan plan = plan_broadcast(a, b, name);
  const std::size_t R = plan.rows;
  const std::size_t C = plan.cols;
  std::vector<double> out(R * C);
  const auto& ad = a.impl()->data;
  const auto& bd = b.impl()->data;
  if (plan.a == Bcast::kFull && plan.b == Bcast::kFull) {
    for (std::size_t k = 0; k < out.size(); ++k) {
      switch (kind) {
        case BinaryKind::kAdd: out[k] = ad[k] + bd[k]; break;
        case BinaryKind::kSub: out[k] = ad[k] - bd[k]; break;
        case BinaryKind::kMul: out[k] = ad[k] * bd[k]; break;
      }
    }
  } else {
    for (std::size_t i = 0; i < R; ++i) {
      for (std::size_t j = 0; j < C; ++j) {
        const double x = ad[bindex(plan.a, i, j, C)];
        const double y = bd[bindex(plan.b, i, j, C)];
        double& o = out[i * C + j];
        switch (kind) {
          case BinaryKind::kAdd: o = x + y; break;
          case BinaryKind::kSub: o = x - y; break;
          case BinaryKind::kMul: o = x * y; break;
        }
      }
    }
  }
  Tensor result(plan.out_shape, std::move(out));
  if (tracks({&a, &b})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), ah = a.handle(), bh = b.handle(), plan, kind]() {
      if (o->grad.empty()) return;
      const auto& go = o->grad;
      const std::size_t C = plan.cols;
      if (ah->requires_grad) {
        auto& ga = grad_of(*ah);
        for (std::size_t i = 0; i < plan.rows; ++i) {
          for (std::size_t j = 0; j < C; ++j) {
            const double g = go[i * C + j];
            const double d = kind == BinaryKind::kMul ? g * bh->data[bindex(plan.b, i, j, C)] : g;
            ga[bindex(plan.a, i, j, C)] += d;
          }
        }
      }
      if (bh->requires_grad) {
        auto& gb = grad_of(*bh);
        for (std::size_t i = 0; i < plan.rows; ++i) {
          for (std::size_t j = 0; j < C; ++j) {
            const double g = go[i * C + j];
            double d = g;
            if (kind == BinaryKind::kSub) d = -g;
            if (kind == BinaryKind::kMul) d = g * ah->data[bindex(plan.a, i, j, C)];
            gb[bindex(plan.b, i, j, C)] += d;
          }
        }
      }
    });
  }
  return result;
}

// Unary op whose derivative is expressible from input x and output y.
template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, const char* name, Forward f, Derivative df) {
  require_defined(a, name);
  std::vector<double> out(a.numel());
  const auto& ad = a.impl()->data;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(ad[k]);
  Tensor result(a.shape(), std::move(out));
  if (tracks({&a})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), ah = a.handle(), df]() {
      if (o->grad.empty()) return;
      auto& ga = grad_of(*ah);
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += o->grad[k] * df(ah->data[k], o->data[k]);
    });
  }
  return result;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : impl_(std::make_shared<TensorImpl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_to_string(shape));
  }
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) : impl_(std::make_shared<TensorImpl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_to_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_to_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{}, std::vector<double>{value}, requires_grad); }

std::size_t Tensor::rows() const { return rows_of(impl_->shape); }
std::size_t Tensor::cols() const { return cols_of(impl_->shape); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

std::vector<double>& Tensor::grad_buffer() { return grad_of(*impl_); }

Tensor Tensor::clone() const {
  Tensor copy(impl_->shape, impl_->data, impl_->requires_grad);
  copy.impl_->grad = impl_->grad;
  return copy;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

GradientTape& GradientTape::current() {
  thread_local GradientTape tape;
  return tape;
}

void GradientTape::replay_reverse() {
  // Closures may not record new entries, so iterating by index is safe.
  for (std::size_t i = entries_.size(); i-- > 0;) entries_[i]();
  entries_.clear();
}

bool grad_enabled() { return tl_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(tl_grad_enabled) { tl_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { tl_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_to_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw ContractError("backward: loss is not connected to any parameter");
  NoGradGuard guard;
  grad_of(*loss.impl())[0] += 1.0;
  GradientTape::current().replay_reverse();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor result(Shape{m, n});
  MapMut(result.mutable_data().data(), m, n).noalias() = view(*a.impl(), m, k) * view(*b.impl(), k, n);
  if (tracks({&a, &b})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), ah = a.handle(), bh = b.handle(), m, k, n]() {
      if (o->grad.empty()) return;
      MapConst go(o->grad.data(), m, n);
      if (ah->requires_grad) grad_view(*ah, m, k).noalias() += go * view(*bh, k, n).transpose();
      if (bh->requires_grad) grad_view(*bh, k, n).noalias() += view(*ah, m, k).transpose() * go;
    });
  }
  return result;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined(x, "linear");
  require_defined(weight, "linear");
  if (x.rank() != 2 || weight.rank() != 2 || x.cols() != weight.cols()) {
    throw DimensionError("linear: shape mismatch " + shape_to_string(x.shape()) + " x " +
                         shape_to_string(weight.shape()) + "^T");
  }
  const std::size_t m = x.rows(), k = x.cols(), n = weight.rows();
  if (bias.defined() && bias.numel() != n) {
    throw DimensionError("linear: bias " + shape_to_string(bias.shape()) + " does not match output width " +
                         std::to_string(n));
  }
  Tensor result(Shape{m, n});
  MapMut out(result.mutable_data().data(), m, n);
  out.noalias() = view(*x.impl(), m, k) * view(*weight.impl(), n, k).transpose();
  if (bias.defined()) out.rowwise() += view(*bias.impl(), 1, n).row(0);
  if (tracks({&x, &weight, &bias})) {
    result.set_requires_grad(true);
    GradientTape::current().record(
        [o = result.handle(), xh = x.handle(), wh = weight.handle(), bh = bias.handle(), m, k, n]() {
          if (o->grad.empty()) return;
          MapConst go(o->grad.data(), m, n);
          if (xh->requires_grad) grad_view(*xh, m, k).noalias() += go * view(*wh, n, k);
          if (wh->requires_grad) grad_view(*wh, n, k).noalias() += go.transpose() * view(*xh, m, k);
          if (bh && bh->requires_grad) grad_view(*bh, 1, n) += go.colwise().sum();
        });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_to_string(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  Tensor result(Shape{n, m});
  MapMut(result.mutable_data().data(), n, m) = view(*a.impl(), m, n).transpose();
  if (tracks({&a})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), ah = a.handle(), m, n]() {
      if (o->grad.empty()) return;
      grad_view(*ah, m, n) += MapConst(o->grad.data(), n, m).transpose();
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kMul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor elementwise(ElementwiseOp op, std::span<const Tensor> args) {
  const std::size_t want = (op == ElementwiseOp::kAdd || op == ElementwiseOp::kMul) ? 2 : 1;
  if (args.size() != want) {
    throw ContractError("elementwise: expected " + std::to_string(want) + " arguments, got " +
                        std::to_string(args.size()));
  }
  switch (op) {
    case ElementwiseOp::kAdd: return add(args[0], args[1]);
    case ElementwiseOp::kMul: return mul(args[0], args[1]);
    case ElementwiseOp::kTanh: return tanh(args[0]);
    case ElementwiseOp::kSigmoid: return sigmoid(args[0]);
    case ElementwiseOp::kRelu: return relu(args[0]);
  }
  throw ContractError("elementwise: unknown op");
}

Tensor softmax_masked(const Tensor& x, const Mask& mask) {
  require_defined(x, "softmax_masked");
  if (mask.size() != x.numel()) {
    throw DimensionError("softmax_masked: mask length " + std::to_string(mask.size()) + " does not match " +
                         shape_to_string(x.shape()));
  }
  const std::size_t R = x.rows(), C = x.cols();
  const auto& xd = x.impl()->data;
  std::vector<double> out(xd.size(), 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < C; ++c) {
      if (mask[r * C + c]) {
        peak = std::max(peak, xd[r * C + c]);
        any = true;
      }
    }
    if (!any) throw ContractError("softmax_masked: row " + std::to_string(r) + " has every position masked");
    double total = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      if (mask[r * C + c]) {
        out[r * C + c] = std::exp(xd[r * C + c] - peak);
        total += out[r * C + c];
      }
    }
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] /= total;
  }
  Tensor result(x.shape(), std::move(out));
  if (tracks({&x})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), xh = x.handle(), R, C]() {
      if (o->grad.empty()) return;
      auto& gx = grad_of(*xh);
      for (std::size_t r = 0; r < R; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += o->grad[r * C + c] * o->data[r * C + c];
        // Masked entries have y == 0 and so receive no gradient.
        for (std::size_t c = 0; c < C; ++c) {
          gx[r * C + c] += o->data[r * C + c] * (o->grad[r * C + c] - dot);
        }
      }
    });
  }
  return result;
}

Tensor softmax(const Tensor& x) {
  require_defined(x, "softmax");
  return softmax_masked(x, Mask(x.numel(), 1));
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor result = Tensor::scalar(total);
  if (tracks({&a})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), ah = a.handle()]() {
      if (o->grad.empty()) return;
      auto& ga = grad_of(*ah);
      for (double& g : ga) g += o->grad[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
  }
  Tensor result(std::move(shape), a.impl()->data);
  if (tracks({&a})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), ah = a.handle()]() {
      if (o->grad.empty()) return;
      auto& ga = grad_of(*ah);
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += o->grad[k];
    });
  }
  return result;
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  require_defined(a, "slice_rows");
  if (a.rank() != 2 || count == 0 || start + count > a.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_to_string(a.shape()));
  }
  const std::size_t C = a.cols();
  const auto first = a.impl()->data.begin() + static_cast<std::ptrdiff_t>(start * C);
  Tensor result(Shape{count, C}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * C)));
  if (tracks({&a})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), ah = a.handle(), start, C]() {
      if (o->grad.empty()) return;
      auto& ga = grad_of(*ah);
      for (std::size_t k = 0; k < o->grad.size(); ++k) ga[start * C + k] += o->grad[k];
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_defined(a, "slice_cols");
  if (a.rank() > 2 || count == 0 || start + count > a.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_to_string(a.shape()));
  }
  const std::size_t R = a.rows(), C = a.cols();
  std::vector<double> out(R * count);
  for (std::size_t r = 0; r < R; ++r) {
    std::copy_n(a.impl()->data.begin() + static_cast<std::ptrdiff_t>(r * C + start), count,
                out.begin() + static_cast<std::ptrdiff_t>(r * count));
  }
  Tensor result(Shape{R, count}, std::move(out));
  if (tracks({&a})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), ah = a.handle(), start, count, R, C]() {
      if (o->grad.empty()) return;
      auto& ga = grad_of(*ah);
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < count; ++c) ga[r * C + start + c] += o->grad[r * count + c];
      }
    });
  }
  return result;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t R = parts[0].rows();
  std::size_t total = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    require_defined(p, "concat_cols");
    if (p.rows() != R) {
      throw DimensionError("concat_cols: row mismatch " + shape_to_string(parts[0].shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    total += p.cols();
    any_grad = any_grad || p.requires_grad();
  }
  std::vector<double> out(R * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t C = p.cols();
    for (std::size_t r = 0; r < R; ++r) {
      std::copy_n(p.impl()->data.begin() + static_cast<std::ptrdiff_t>(r * C), C,
                  out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += C;
  }
  Tensor result(Shape{R, total}, std::move(out));
  if (any_grad && grad_enabled()) {
    result.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorImpl>> handles;
    for (const Tensor& p : parts) handles.push_back(p.handle());
    GradientTape::current().record([o = result.handle(), handles = std::move(handles), R, total]() {
      if (o->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& h : handles) {
        const std::size_t C = cols_of(h->shape);
        if (h->requires_grad) {
          auto& g = grad_of(*h);
          for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t c = 0; c < C; ++c) g[r * C + c] += o->grad[r * total + offset + c];
          }
        }
        offset += C;
      }
    });
  }
  return result;
}

Tensor repeat_rows(const Tensor& row, std::size_t rows) {
  require_defined(row, "repeat_rows");
  if (row.rows() != 1 || rows == 0) {
    throw DimensionError("repeat_rows: expected a single row, got " + shape_to_string(row.shape()));
  }
  const std::size_t C = row.cols();
  std::vector<double> out(rows * C);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(row.impl()->data.begin(), C, out.begin() + r * C);
  Tensor result(Shape{rows, C}, std::move(out));
  if (tracks({&row})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), rh = row.handle(), rows, C]() {
      if (o->grad.empty()) return;
      auto& g = grad_of(*rh);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < C; ++c) g[c] += o->grad[r * C + c];
      }
    });
  }
  return result;
}

Tensor stack_time(std::span<const Tensor> steps) {
  if (steps.empty()) throw ContractError("stack_time: no steps");
  const std::size_t T = steps.size();
  const std::size_t B = steps[0].rows();
  const std::size_t N = steps[0].cols();
  bool any_grad = false;
  for (const Tensor& s : steps) {
    require_defined(s, "stack_time");
    if (s.rows() != B || s.cols() != N) {
      throw DimensionError("stack_time: step shape " + shape_to_string(s.shape()) + " differs from " +
                           shape_to_string(steps[0].shape()));
    }
    any_grad = any_grad || s.requires_grad();
  }
  std::vector<double> out(B * T * N);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& sd = steps[t].impl()->data;
    for (std::size_t b = 0; b < B; ++b) std::copy_n(sd.begin() + b * N, N, out.begin() + (b * T + t) * N);
  }
  Tensor result(Shape{B * T, N}, std::move(out));
  if (any_grad && grad_enabled()) {
    result.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorImpl>> handles;
    for (const Tensor& s : steps) handles.push_back(s.handle());
    GradientTape::current().record([o = result.handle(), handles = std::move(handles), B, T, N]() {
      if (o->grad.empty()) return;
      for (std::size_t t = 0; t < T; ++t) {
        if (!handles[t]->requires_grad) continue;
        auto& g = grad_of(*handles[t]);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t n = 0; n < N; ++n) g[b * N + n] += o->grad[(b * T + t) * N + n];
        }
      }
    });
  }
  return result;
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, std::int32_t padding_id) {
  require_defined(table, "embedding");
  if (table.rank() != 2) throw DimensionError("embedding: table must be rank 2");
  if (ids.empty()) throw ContractError("embedding: empty id list");
  const std::size_t V = table.rows(), D = table.cols();
  std::vector<double> out(ids.size() * D, 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) {
      throw ContractError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of size " +
                          std::to_string(V));
    }
    if (ids[i] == padding_id) continue;
    std::copy_n(table.impl()->data.begin() + static_cast<std::ptrdiff_t>(ids[i]) * D, D, out.begin() + i * D);
  }
  Tensor result(Shape{ids.size(), D}, std::move(out));
  if (tracks({&table})) {
    result.set_requires_grad(true);
    GradientTape::current().record(
        [o = result.handle(), th = table.handle(), ids = std::vector<std::int32_t>(ids.begin(), ids.end()), D,
         padding_id]() {
          if (o->grad.empty()) return;
          auto& g = grad_of(*th);
          for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] == padding_id) continue;
            const std::size_t row = static_cast<std::size_t>(ids[i]) * D;
            for (std::size_t d = 0; d < D; ++d) g[row + d] += o->grad[i * D + d];
          }
        });
  }
  return result;
}

Tensor embedding_bag_sum(const Tensor& table, const std::vector<std::vector<std::int32_t>>& bags) {
  require_defined(table, "embedding_bag_sum");
  if (bags.empty()) throw ContractError("embedding_bag_sum: no bags");
  const std::size_t V = table.rows(), D = table.cols();
  std::vector<double> out(bags.size() * D, 0.0);
  for (std::size_t b = 0; b < bags.size(); ++b) {
    for (std::int32_t id : bags[b]) {
      if (id < 0 || static_cast<std::size_t>(id) >= V) {
        throw ContractError("embedding_bag_sum: id " + std::to_string(id) + " outside vocabulary");
      }
      for (std::size_t d = 0; d < D; ++d) out[b * D + d] += table.impl()->data[static_cast<std::size_t>(id) * D + d];
    }
  }
  Tensor result(Shape{bags.size(), D}, std::move(out));
  if (tracks({&table})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), th = table.handle(), bags, D]() {
      if (o->grad.empty()) return;
      auto& g = grad_of(*th);
      for (std::size_t b = 0; b < bags.size(); ++b) {
        for (std::int32_t id : bags[b]) {
          for (std::size_t d = 0; d < D; ++d) g[static_cast<std::size_t>(id) * D + d] += o->grad[b * D + d];
        }
      }
    });
  }
  return result;
}

Tensor attention_pool(const Tensor& alpha, const Tensor& states) {
  require_defined(alpha, "attention_pool");
  require_defined(states, "attention_pool");
  const std::size_t B = alpha.rows(), T = alpha.cols(), N = states.cols();
  if (states.rows() != B * T) {
    throw DimensionError("attention_pool: weights " + shape_to_string(alpha.shape()) + " do not match states " +
                         shape_to_string(states.shape()));
  }
  std::vector<double> out(B * N, 0.0);
  const auto& ad = alpha.impl()->data;
  const auto& sd = states.impl()->data;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      const double w = ad[b * T + t];
      if (w == 0.0) continue;
      for (std::size_t n = 0; n < N; ++n) out[b * N + n] += w * sd[(b * T + t) * N + n];
    }
  }
  Tensor result(Shape{B, N}, std::move(out));
  if (tracks({&alpha, &states})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), ah = alpha.handle(), sh = states.handle(), B, T, N]() {
      if (o->grad.empty()) return;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t row = (b * T + t) * N;
          if (ah->requires_grad) {
            double dot = 0.0;
            for (std::size_t n = 0; n < N; ++n) dot += o->grad[b * N + n] * sh->data[row + n];
            grad_of(*ah)[b * T + t] += dot;
          }
          if (sh->requires_grad) {
            const double w = ah->data[b * T + t];
            auto& gs = grad_of(*sh);
            for (std::size_t n = 0; n < N; ++n) gs[row + n] += w * o->grad[b * N + n];
          }
        }
      }
    });
  }
  return result;
}

Tensor cross_entropy_logits(const Tensor& logits, std::span<const int> targets) {
  require_defined(logits, "cross_entropy_logits");
  const std::size_t R = logits.rows(), C = logits.cols();
  if (targets.size() != R) {
    throw DimensionError("cross_entropy_logits: " + std::to_string(targets.size()) + " targets for " +
                         shape_to_string(logits.shape()));
  }
  const auto& x = logits.impl()->data;
  std::vector<double> probs(R * C, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= C) {
      throw ContractError("cross_entropy_logits: target " + std::to_string(targets[r]) + " out of range");
    }
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) peak = std::max(peak, x[r * C + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(x[r * C + c] - peak);
    const double log_z = peak + std::log(z);
    for (std::size_t c = 0; c < C; ++c) probs[r * C + c] = std::exp(x[r * C + c] - log_z);
    total += log_z - x[r * C + static_cast<std::size_t>(targets[r])];
  }
  Tensor result = Tensor::scalar(total);
  if (tracks({&logits})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), lh = logits.handle(), probs = std::move(probs),
                                    targets = std::vector<int>(targets.begin(), targets.end()), R, C]() {
      if (o->grad.empty()) return;
      auto& g = grad_of(*lh);
      const double go = o->grad[0];
      for (std::size_t r = 0; r < R; ++r) {
        if (targets[r] < 0) continue;
        for (std::size_t c = 0; c < C; ++c) {
          const double indicator = static_cast<int>(c) == targets[r] ? 1.0 : 0.0;
          g[r * C + c] += go * (probs[r * C + c] - indicator);
        }
      }
    });
  }
  return result;
}

Tensor bce_with_logits(const Tensor& scores, std::span<const double> targets) {
  require_defined(scores, "bce_with_logits");
  if (targets.size() != scores.numel()) {
    throw DimensionError("bce_with_logits: " + std::to_string(targets.size()) + " targets for " +
                         shape_to_string(scores.shape()));
  }
  const auto& x = scores.impl()->data;
  double total = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) total += softplus(x[k]) - targets[k] * x[k];
  Tensor result = Tensor::scalar(total);
  if (tracks({&scores})) {
    result.set_requires_grad(true);
    GradientTape::current().record([o = result.handle(), sh = scores.handle(),
                                    targets = std::vector<double>(targets.begin(), targets.end())]() {
      if (o->grad.empty()) return;
      auto& g = grad_of(*sh);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += o->grad[0] * (stable_sigmoid(sh->data[k]) - targets[k]);
    });
  }
  return result;
}

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64* rng) {
  require_defined(x, "dropout");
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  if (rng == nullptr) throw ContractError("dropout: training mode needs a random generator");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> factors(x.numel());
  for (double& f : factors) f = uniform(*rng) < rate ? 0.0 : keep_scale;
  return mul(x, Tensor(x.shape(), std::move(factors)));
}

}  // namespace gsat
