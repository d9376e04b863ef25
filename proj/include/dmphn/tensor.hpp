#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmphn/rng.hpp"

namespace dmphn {

struct Shape {
  std::int64_t n = 0, c = 0, h = 0, w = 0;

  std::int64_t numel() const { return n * c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

// When enabled, every op scans its output for NaN/Inf and throws. Off by
// default; tests and debugging turn it on.
void set_finite_checks(bool on);
bool finite_checks();

template <typename T>
class Tape;

// Dense NCHW tensor with shared storage. Copies are shallow; ops never
// mutate their inputs, so sharing is safe. Gradient tracking happens on an
// external tape: a tensor carries only the id of the tape node that produced
// it, plus the epoch of that tape so stale ids are never misread.
template <typename T>
class Tensor {
 public:
  Tensor() : data_(std::make_shared<std::vector<T>>()) {}
  explicit Tensor(Shape s)
      : shape_(s),
        data_(std::make_shared<std::vector<T>>(
            static_cast<std::size_t>(check_shape(s).numel()), T(0))) {}
  Tensor(Shape s, std::vector<T> values);

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, T value);
  static Tensor scalar(T value) { return full({1, 1, 1, 1}, value); }
  static Tensor uniform(Shape s, Rng& rng, T lo, T hi);

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return shape_.numel(); }

  const T* data() const { return data_->data(); }
  T* data() { return data_->data(); }
  const std::vector<T>& vec() const { return *data_; }
  const std::shared_ptr<std::vector<T>>& storage() const { return data_; }

  T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return (*data_)[static_cast<std::size_t>(
        ((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
  }
  T item() const {
    if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar");
    return (*data_)[0];
  }

  // Tape bookkeeping. node < 0 means untracked.
  int node() const { return node_; }
  std::uint64_t tape_epoch() const { return epoch_; }
  void bind(int node, std::uint64_t epoch) {
    node_ = node;
    epoch_ = epoch;
  }

 private:
  static const Shape& check_shape(const Shape& s);

  Shape shape_{};
  std::shared_ptr<std::vector<T>> data_;
  int node_ = -1;
  std::uint64_t epoch_ = 0;
};

// Reverse-mode tape. Usage:
//   Tape<float> tape;            // activates for this thread while alive
//   tape.watch(param);           // register leaves
//   ... build loss ...
//   tape.backward(loss);         // one reverse sweep, single use
//   Tensor<float> g = tape.grad(param);
template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, const std::vector<T>&)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void watch(Tensor<T>& t);
  void backward(const Tensor<T>& loss);
  Tensor<T> grad(const Tensor<T>& t) const;
  bool consumed() const { return consumed_; }
  std::uint64_t epoch() const { return epoch_; }

  // --- used by ops ---
  bool tracks(const Tensor<T>& t) const {
    return t.node() >= 0 && t.tape_epoch() == epoch_;
  }
  // Registers a node and returns its id; ops then bind() it to their output.
  int record(Shape out_shape, BackFn backfn);
  // Adds g into the stored gradient for node (allocating zeros on demand).
  void accumulate(int node, const std::vector<T>& g);
  const std::vector<T>* grad_at(int node) const;

 private:
  struct Node {
    Shape shape;
    BackFn backfn;  // empty for leaves
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  bool consumed_ = false;
  std::uint64_t epoch_ = 0;
  Tape* prev_active_ = nullptr;
};

// ---- ops (all record onto the active tape when inputs are tracked) ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Cross-correlation, weights [Cout, Cin, kh, kw], bias [1, Cout, 1, 1].
// Supported: kh == kw in {1, 3, 4, 5}, stride in {1, 2}, pad >= 0.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad);

// Transposed conv, weights [Cin, Cout, kh, kw]; output spatial size is
// (H - 1) * stride - 2 * pad + kh.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b, int stride, int pad);

// Splits [N, C, H, W] into a rows x cols grid of equal patches, row-major.
// H % rows == 0 and W % cols == 0 or it throws.
template <typename T>
std::vector<Tensor<T>> split_grid(const Tensor<T>& x, int rows, int cols);

// Inverse of split_grid: reassembles patches (row-major) into one tensor.
template <typename T>
Tensor<T> concat_grid(const std::vector<Tensor<T>>& patches, int rows,
                      int cols);

// 0.5 * mean((a - b)^2), accumulated in double. Scalar output.
template <typename T>
Tensor<T> mse_half(const Tensor<T>& a, const Tensor<T>& b);

// Bilinear resize by a factor of exactly 2 or 1/2 (align_corners = false).
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x);
template <typename T>
Tensor<T> downsample2x(const Tensor<T>& x);

// Central-difference gradient of f w.r.t. x, one forward pair per element.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f,
                           const Tensor<T>& x, T eps);

// max|a - b| / (max(max|a|, max|b|) + 1e-12); the relative-error metric used
// by the gradient checks.
template <typename T>
double rel_error(const Tensor<T>& a, const Tensor<T>& b);

void check_finite_or_throw(const float* p, std::int64_t n, const char* op);
void check_finite_or_throw(const double* p, std::int64_t n, const char* op);

}  // namespace dmphn
