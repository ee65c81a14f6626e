#ifndef VRNN_TENSOR_HPP
#define VRNN_TENSOR_HPP

#include <functional>
#include <string>
#include <vector>

#include "vrnn/errors.hpp"

namespace vrnn {

class Tape;

// Dense row-major tensor of doubles. Value-semantic; `node` is a handle into
// the tape that produced it (-1 when untracked, i.e. a constant).
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> v;
  int node = -1;

  Tensor() = default;
  Tensor(std::vector<size_t> s, std::vector<double> values);

  static Tensor zeros(std::vector<size_t> s);
  static Tensor full(std::vector<size_t> s, double value);
  static Tensor scalar(double value);

  size_t numel() const { return v.size(); }
  size_t rank() const { return shape.size(); }
  size_t rows() const;
  size_t cols() const;
  double item() const;
  double& at(size_t i, size_t j);
  double at(size_t i, size_t j) const;
};

std::string shape_str(const std::vector<size_t>& s);

// Recorded computation for one forward pass. Nodes are stored in creation
// order, which is a topological order of the graph. A tape is confined to one
// thread from forward through backward().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& upstream)>;

  // Register a tracked copy of `value` as a leaf (parameters, inputs).
  Tensor leaf(const Tensor& value);

  int record(const char* kind, std::vector<size_t> out_shape, std::vector<int> parents,
             BackwardFn fn);

  // Reverse sweep from a scalar loss. Gradients accumulate by addition where a
  // node fans out; d(loss)/d(loss) = 1.
  void backward(const Tensor& loss);

  bool has_grad(const Tensor& x) const;
  const Tensor& grad(const Tensor& x) const;
  const Tensor& grad(int node) const;
  void accumulate(int node, const Tensor& g);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* kind;
    std::vector<size_t> shape;
    std::vector<int> parents;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;  // empty v == not yet allocated
};

// --- forward ops (recorded when tape != nullptr) ---

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor transpose(const Tensor& a, Tape* tape = nullptr);

Tensor exp(const Tensor& x, Tape* tape = nullptr);
Tensor log(const Tensor& x, Tape* tape = nullptr);
Tensor tanh(const Tensor& x, Tape* tape = nullptr);
Tensor sigmoid(const Tensor& x, Tape* tape = nullptr);
Tensor relu(const Tensor& x, Tape* tape = nullptr);
Tensor softplus(const Tensor& x, Tape* tape = nullptr);
Tensor neg(const Tensor& x, Tape* tape = nullptr);
Tensor square(const Tensor& x, Tape* tape = nullptr);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor div(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

// y = x * s + c elementwise with scalar constants.
Tensor affine(const Tensor& x, double s, double c, Tape* tape = nullptr);
// Gradient passes through only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi, Tape* tape = nullptr);

Tensor sum(const Tensor& x, size_t axis, Tape* tape = nullptr);
Tensor mean(const Tensor& x, size_t axis, Tape* tape = nullptr);
Tensor logsumexp(const Tensor& x, size_t axis, Tape* tape = nullptr);

Tensor concat(const std::vector<Tensor>& parts, size_t axis, Tape* tape = nullptr);
Tensor concat(const Tensor& a, const Tensor& b, size_t axis, Tape* tape = nullptr);
// Half-open [lo, hi) range along `axis`.
Tensor slice(const Tensor& x, size_t axis, size_t lo, size_t hi, Tape* tape = nullptr);
Tensor reshape(const Tensor& x, std::vector<size_t> new_shape, Tape* tape = nullptr);
// [m] -> [m x n], each row constant. Backward sums over columns.
Tensor tile_cols(const Tensor& x, size_t n, Tape* tape = nullptr);

// Enum dispatch mirrors of the op families above.
enum class UnaryKind { Exp, Log, Tanh, Sigmoid, Relu, Softplus, Neg, Square };
enum class BinaryKind { Add, Sub, Mul, Div };
enum class ReduceKind { Sum, Mean, LogSumExp };

Tensor unary(UnaryKind kind, const Tensor& x, Tape* tape = nullptr);
Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor reduce(ReduceKind kind, const Tensor& x, size_t axis, Tape* tape = nullptr);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued function of one tensor. NaN anywhere propagates into the
// returned value so any tolerance check fails.
double grad_check(const std::function<Tensor(const Tensor&, Tape&)>& f, const Tensor& x,
                  double step = 1e-5);

}  // namespace vrnn

#endif
