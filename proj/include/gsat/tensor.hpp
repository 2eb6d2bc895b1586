#pragma once

// Dense row-major float64 tensors with tape-based reverse-mode autodiff.
//
// Every op that sees at least one input with requires_grad() (and runs while
// gradient recording is enabled) appends a backward closure to the calling
// thread's GradientTape. backward(loss) replays that tape in reverse and
// then clears it. Tensors are shared handles: copying a Tensor aliases the
// same storage, use clone() for a deep copy.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gsat/errors.hpp"

namespace gsat {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty means "no gradient yet"
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor parameter(Shape shape, std::vector<double> data) {
    return Tensor(std::move(shape), std::move(data), true);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  // 2-D view: rank-1 [n] is a single row, a scalar is 1x1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t row, std::size_t col) const { return impl_->data[row * cols() + col]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad; }
  // Allocates a zero gradient buffer on first use.
  std::vector<double>& grad_buffer();
  void zero_grad() { impl_->grad.clear(); }

  Tensor clone() const;
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

class GradientTape {
 public:
  using Backward = std::function<void()>;

  // The tape of the calling thread.
  static GradientTape& current();

  void record(Backward backward) { entries_.push_back(std::move(backward)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }
  // Runs every recorded closure once, newest first, then clears.
  void replay_reverse();

 private:
  std::vector<Backward> entries_;
};

bool grad_enabled();

// Disables recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Seeds the loss gradient with 1 and propagates through the current tape.
void backward(const Tensor& loss);

using Mask = std::vector<std::uint8_t>;

Tensor matmul(const Tensor& a, const Tensor& b);
// x [m x k] times weight [n x k] transposed, plus optional bias [n].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor());
Tensor transpose(const Tensor& a);

// Binary ops broadcast same-shape, scalar-with-tensor, a [1 x n] row against
// [m x n], or a [m x 1] column against [m x n].
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

enum class ElementwiseOp { kAdd, kMul, kTanh, kSigmoid, kRelu };
Tensor elementwise(ElementwiseOp op, std::span<const Tensor> args);

// Row-wise softmax over unmasked entries (rank 1 is a single row). Masked
// entries are exactly 0. Every row needs one unmasked entry.
Tensor softmax_masked(const Tensor& x, const Mask& mask);
Tensor softmax(const Tensor& x);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
// Repeats a one-row tensor (or scalar) into [rows x n].
Tensor repeat_rows(const Tensor& row, std::size_t rows);

// T tensors of shape [B x n], one per time step, into a batch-major
// [B*T x n] matrix whose row b*T + t holds step t of sequence b.
Tensor stack_time(std::span<const Tensor> steps);

// Row lookup into table [V x d]. Rows equal to padding_id read as zeros and
// never receive gradient.
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, std::int32_t padding_id = -1);
// One output row per bag: the sum of the table rows listed in the bag.
Tensor embedding_bag_sum(const Tensor& table, const std::vector<std::vector<std::int32_t>>& bags);

// alpha [B x T], states [B*T x n] batch-major: out[b] = sum_t alpha[b,t] * states[b*T+t].
Tensor attention_pool(const Tensor& alpha, const Tensor& states);

// Sum over rows of -log softmax(logits[row])[target]; negative targets are skipped.
Tensor cross_entropy_logits(const Tensor& logits, std::span<const int> targets);
// Sum of binary cross-entropy between sigmoid(scores) and targets in [0,1].
Tensor bce_with_logits(const Tensor& scores, std::span<const double> targets);

// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64* rng);

}  // namespace gsat
