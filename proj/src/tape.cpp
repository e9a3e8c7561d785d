#include "xreid/tape.hpp"

#include <cmath>

namespace xreid::tape {

Var Tape::leaf(Mat value, bool requires_grad) {
  return record(std::move(value), requires_grad, nullptr);
}

Var Tape::record(Mat value, bool requires_grad,
                 std::function<void(Tape&, const Mat&)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{int(nodes_.size()) - 1};
}

Mat& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (!n.grad_live) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad_live = true;
  }
  return n.grad;
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad_live) return n.grad;
  return Mat::Zero(n.value.rows(), n.value.cols());
}

void Tape::accumulate(Var v, const Mat& g) {
  if (!nodes_[v.id].requires_grad) return;
  grad_buffer(v.id) += g;
}

void Tape::backward(Var out) {
  const Node& o = nodes_[out.id];
  if (o.value.rows() != 1 || o.value.cols() != 1)
    throw InvalidArgument("backward() expects a 1x1 output");
  grad_buffer(out.id)(0, 0) += 1.0;
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad_live || !n.backward || !n.requires_grad) continue;
    n.backward(*this, n.grad);
  }
}

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  Mat out;
  if (!trans_a && !trans_b) out = av * bv;
  else if (!trans_a) out = av * bv.transpose();
  else if (!trans_b) out = av.transpose() * bv;
  else out = av.transpose() * bv.transpose();
  const bool rg = requires_grad(a) || requires_grad(b);
  return record(out, rg, [=](Tape& t, const Mat& g) {
    const Mat& A = t.value(a);
    const Mat& B = t.value(b);
    if (t.requires_grad(a)) {
      Mat ga;
      if (!trans_a && !trans_b) ga = g * B.transpose();
      else if (!trans_a && trans_b) ga = g * B;
      else if (trans_a && !trans_b) ga = (B * g.transpose()).eval();
      else ga = (B.transpose() * g.transpose()).eval();
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Mat gb;
      if (!trans_a && !trans_b) gb = A.transpose() * g;
      else if (!trans_a && trans_b) gb = (g.transpose() * A).eval();
      else if (trans_a && !trans_b) gb = A * g;
      else gb = (g.transpose() * A.transpose()).eval();
      t.accumulate(b, gb);
    }
  });
}

Var Tape::transpose(Var a) {
  return record(value(a).transpose(), requires_grad(a),
                [=](Tape& t, const Mat& g) { t.accumulate(a, g.transpose()); });
}

Var Tape::add(Var a, Var b) {
  const bool rg = requires_grad(a) || requires_grad(b);
  return record(value(a) + value(b), rg, [=](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var Tape::sub(Var a, Var b) {
  const bool rg = requires_grad(a) || requires_grad(b);
  return record(value(a) - value(b), rg, [=](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var Tape::hadamard(Var a, Var b) {
  const bool rg = requires_grad(a) || requires_grad(b);
  return record(value(a).cwiseProduct(value(b)), rg, [=](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct(t.value(b)));
    t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var Tape::scale(Var a, double s) {
  return record(s * value(a), requires_grad(a), [=](Tape& t, const Mat& g) {
    t.accumulate(a, s * g);
  });
}

Var Tape::add_row_broadcast(Var a, Var row) {
  const Mat& av = value(a);
  const Mat& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw DimensionMismatch("broadcast row must be 1 x cols(a)");
  Mat out = av;
  out.rowwise() += rv.row(0);
  const bool rg = requires_grad(a) || requires_grad(row);
  return record(out, rg, [=](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(row, g.colwise().sum());
  });
}

Var Tape::elu(Var a) {
  const Mat& av = value(a);
  Mat out = av.unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  return record(out, requires_grad(a), [=](Tape& t, const Mat& g) {
    const Mat& x = t.value(a);
    Mat gx = g;
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j)
        if (x(i, j) <= 0.0) gx(i, j) *= std::exp(x(i, j));
    t.accumulate(a, gx);
  });
}

Var Tape::leaky_relu(Var a, double slope) {
  const Mat& av = value(a);
  Mat out = av.unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return record(out, requires_grad(a), [=](Tape& t, const Mat& g) {
    const Mat& x = t.value(a);
    Mat gx = g;
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j)
        if (x(i, j) <= 0.0) gx(i, j) *= slope;
    t.accumulate(a, gx);
  });
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
  const Mat& av = value(a);
  Mat out(rows.size(), av.cols());
  for (size_t r = 0; r < rows.size(); ++r) out.row(long(r)) = av.row(rows[r]);
  return record(out, requires_grad(a),
                [a, rows = std::move(rows)](Tape& t, const Mat& g) {
                  Mat ga = Mat::Zero(t.value(a).rows(), t.value(a).cols());
                  for (size_t r = 0; r < rows.size(); ++r)
                    ga.row(rows[r]) += g.row(long(r));
                  t.accumulate(a, ga);
                });
}

Var Tape::scatter_rows(Var a, std::vector<int> rows, int total_rows) {
  const Mat& av = value(a);
  if (int(rows.size()) != av.rows())
    throw DimensionMismatch("scatter_rows index count != rows(a)");
  Mat out = Mat::Zero(total_rows, av.cols());
  for (size_t r = 0; r < rows.size(); ++r) out.row(rows[r]) += av.row(long(r));
  return record(out, requires_grad(a),
                [a, rows = std::move(rows)](Tape& t, const Mat& g) {
                  Mat ga(rows.size(), g.cols());
                  for (size_t r = 0; r < rows.size(); ++r)
                    ga.row(long(r)) = g.row(rows[r]);
                  t.accumulate(a, ga);
                });
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidArgument("concat_cols needs at least one input");
  long rows = value(xs[0]).rows();
  long cols = 0;
  bool rg = false;
  for (Var x : xs) {
    if (value(x).rows() != rows)
      throw DimensionMismatch("concat_cols inputs must share row count");
    cols += value(x).cols();
    rg = rg || requires_grad(x);
  }
  Mat out(rows, cols);
  long off = 0;
  for (Var x : xs) {
    out.middleCols(off, value(x).cols()) = value(x);
    off += value(x).cols();
  }
  return record(out, rg, [xs](Tape& t, const Mat& g) {
    long off = 0;
    for (Var x : xs) {
      const long w = t.value(x).cols();
      t.accumulate(x, g.middleCols(off, w));
      off += w;
    }
  });
}

Var Tape::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  return record(out, requires_grad(a), [=](Tape& t, const Mat& g) {
    t.accumulate(a, Mat::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
  });
}

Var Tape::custom(const std::vector<Var>& inputs, Mat value,
                 std::function<void(Tape&, const Mat&)> backward) {
  bool rg = false;
  for (Var v : inputs) rg = rg || requires_grad(v);
  return record(std::move(value), rg, rg ? std::move(backward) : nullptr);
}

}  // namespace xreid::tape
