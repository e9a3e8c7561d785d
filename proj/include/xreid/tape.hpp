#pragma once

#include <functional>
#include <vector>

#include "xreid/common.hpp"
#include "xreid/errors.hpp"

namespace xreid::tape {

/// Minimal reverse-mode autodiff over dense matrices. Every recorded
/// operation pairs its forward value with a vector-Jacobian closure; calling
/// backward() on a scalar output replays the closures in reverse. One Tape
/// instance corresponds to one forward pass and is not thread-shared.
class Tape;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Var leaf(Mat value, bool requires_grad = false);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient accumulated for v (zeros if untouched). Valid after backward().
  Mat grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and back-propagates.
  void backward(Var out);

  // --- elementwise / linear algebra ---
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  Var add_row_broadcast(Var a, Var row);  // row: 1 x C added to every row of a
  Var elu(Var a);
  Var leaky_relu(Var a, double slope);

  // --- structural ---
  Var gather_rows(Var a, std::vector<int> rows);
  Var scatter_rows(Var a, std::vector<int> rows, int total_rows);
  Var concat_cols(const std::vector<Var>& xs);
  Var sum(Var a);  // 1x1

  /// Records an externally computed op. `backward` receives the upstream
  /// gradient of `value` and must accumulate into the inputs' grads via
  /// accumulate(). Use for fused ops with hand-written VJPs.
  Var custom(const std::vector<Var>& inputs, Mat value,
             std::function<void(Tape&, const Mat&)> backward);

  /// Adds `g` into the gradient buffer of `v` (no-op for non-grad paths).
  void accumulate(Var v, const Mat& g);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;  // lazily sized
    bool requires_grad = false;
    bool grad_live = false;
    std::function<void(Tape&, const Mat&)> backward;
  };

  Var record(Mat value, bool requires_grad,
             std::function<void(Tape&, const Mat&)> backward);
  Mat& grad_buffer(int id);

  std::vector<Node> nodes_;
};

}  // namespace xreid::tape
