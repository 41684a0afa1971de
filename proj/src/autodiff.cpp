#include "edgemask/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

#include "edgemask/graph.hpp"

namespace edgemask::ad {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

std::vector<Index> copy_indices(std::span<const Index> idx) { return {idx.begin(), idx.end()}; }

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

Matrix Var::grad() const {
  const Matrix& g = tape_->grad(id_);
  if (g.size() == 0) return Matrix::Zero(value().rows(), value().cols());
  return g;
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& p : parents) needs = needs || p.requires_grad();
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(fn) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("backward: root must be a scalar");
  backward(root, Matrix::Ones(1, 1));
}

void Tape::backward(Var root, const Matrix& seed) {
  if (!nodes_[root.id()].requires_grad) return;
  accumulate(root.id(), seed);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, i);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.resize(0, 0);
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return a.tape().push(a.value() + b.value(), {a, b}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    t.accumulate(ai, t.grad(self));
    t.accumulate(bi, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return a.tape().push(a.value() - b.value(), {a, b}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    t.accumulate(ai, t.grad(self));
    t.accumulate(bi, -t.grad(self));
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().push(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ai)) t.accumulate(ai, g.cwiseProduct(t.value(bi)));
    if (t.requires_grad(bi)) t.accumulate(bi, g.cwiseProduct(t.value(ai)));
  });
}

Var scale(Var a, double c) {
  return a.tape().push(a.value() * c, {a}, [ai = a.id(), c](Tape& t, std::size_t self) {
    t.accumulate(ai, t.grad(self) * c);
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: row shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape().push(std::move(out), {a, row}, [ai = a.id(), ri = row.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ai, g);
    if (t.requires_grad(ri)) t.accumulate(ri, g.colwise().sum());
  });
}

Var scale_rows(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("scale_rows: column shape mismatch");
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return a.tape().push(std::move(out), {a, col}, [ai = a.id(), ci = col.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ai)) t.accumulate(ai, (g.array().colwise() * t.value(ci).col(0).array()).matrix());
    if (t.requires_grad(ci)) t.accumulate(ci, g.cwiseProduct(t.value(ai)).rowwise().sum());
  });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return a.tape().push(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ai)) t.accumulate(ai, g * t.value(bi).transpose());
    if (t.requires_grad(bi)) t.accumulate(bi, t.value(ai).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix out = a.value() * b.value().transpose();
  return a.tape().push(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ai)) t.accumulate(ai, g * t.value(bi));
    if (t.requires_grad(bi)) t.accumulate(bi, g.transpose() * t.value(ai));
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape().push(std::move(out), {a}, [ai = a.id()](Tape& t, std::size_t self) {
    t.accumulate(ai, (t.value(ai).array() > 0.0).select(t.grad(self), 0.0).matrix());
  });
}

Var elu(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  return a.tape().push(std::move(out), {a}, [ai = a.id()](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ai);
    Matrix d = x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
    t.accumulate(ai, t.grad(self).cwiseProduct(d));
  });
}

Var leaky_relu(Var a, double slope) {
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return a.tape().push(std::move(out), {a}, [ai = a.id(), slope](Tape& t, std::size_t self) {
    Matrix d = t.value(ai).unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    t.accumulate(ai, t.grad(self).cwiseProduct(d));
  });
}

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return a.tape().push(std::move(out), {a}, [ai = a.id()](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    t.accumulate(ai, t.grad(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var slice_cols(Var a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  Matrix out = a.value().middleCols(begin, count);
  return a.tape().push(std::move(out), {a}, [ai = a.id(), begin, count](Tape& t, std::size_t self) {
    Matrix g = Matrix::Zero(t.value(ai).rows(), t.value(ai).cols());
    g.middleCols(begin, count) = t.grad(self);
    t.accumulate(ai, g);
  });
}

Var concat_cols(Var a, Var b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row count mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return a.tape().push(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Index ca = t.value(ai).cols();
    t.accumulate(ai, g.leftCols(ca));
    t.accumulate(bi, g.rightCols(g.cols() - ca));
  });
}

Var concat_rows(Var a, Var b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("concat_rows: column count mismatch");
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a.value(), b.value();
  return a.tape().push(std::move(out), {a, b}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Index ra = t.value(ai).rows();
    t.accumulate(ai, g.topRows(ra));
    t.accumulate(bi, g.bottomRows(g.rows() - ra));
  });
}

Var gather_rows(Var a, std::span<const Index> idx) {
  const Matrix& v = a.value();
  Matrix out(static_cast<Index>(idx.size()), v.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= v.rows()) throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Index>(r)) = v.row(idx[r]);
  }
  return a.tape().push(std::move(out), {a}, [ai = a.id(), ids = copy_indices(idx)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix acc = Matrix::Zero(t.value(ai).rows(), t.value(ai).cols());
    for (std::size_t r = 0; r < ids.size(); ++r) acc.row(ids[r]) += g.row(static_cast<Index>(r));
    t.accumulate(ai, acc);
  });
}

Var scatter_add_rows(Var a, std::span<const Index> idx, Index num_rows) {
  const Matrix& v = a.value();
  if (static_cast<Index>(idx.size()) != v.rows()) throw std::invalid_argument("scatter_add_rows: index length mismatch");
  Matrix out = Matrix::Zero(num_rows, v.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= num_rows) throw std::out_of_range("scatter_add_rows: index out of range");
    out.row(idx[r]) += v.row(static_cast<Index>(r));
  }
  return a.tape().push(std::move(out), {a}, [ai = a.id(), ids = copy_indices(idx)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix acc(static_cast<Index>(ids.size()), g.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) acc.row(static_cast<Index>(r)) = g.row(ids[r]);
    t.accumulate(ai, acc);
  });
}

Var head_dot(Var z, Var attn) {
  const Index heads = attn.rows();
  const Index d = attn.cols();
  if (z.cols() != heads * d) throw std::invalid_argument("head_dot: width is not heads * head_dim");
  const Matrix& zv = z.value();
  const Matrix& av = attn.value();
  Matrix out(zv.rows(), heads);
  for (Index h = 0; h < heads; ++h) out.col(h) = zv.middleCols(h * d, d) * av.row(h).transpose();
  return z.tape().push(std::move(out), {z, attn}, [zi = z.id(), ai = attn.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& zv = t.value(zi);
    const Matrix& av = t.value(ai);
    const Index heads = av.rows();
    const Index d = av.cols();
    if (t.requires_grad(zi)) {
      Matrix gz(zv.rows(), zv.cols());
      for (Index h = 0; h < heads; ++h) gz.middleCols(h * d, d) = g.col(h) * av.row(h);
      t.accumulate(zi, gz);
    }
    if (t.requires_grad(ai)) {
      Matrix ga(heads, d);
      for (Index h = 0; h < heads; ++h) ga.row(h) = g.col(h).transpose() * zv.middleCols(h * d, d);
      t.accumulate(ai, ga);
    }
  });
}

Var head_scale(Var z, Var coef) {
  const Index heads = coef.cols();
  if (coef.rows() != z.rows() || heads == 0 || z.cols() % heads != 0) {
    throw std::invalid_argument("head_scale: shape mismatch");
  }
  const Index d = z.cols() / heads;
  Matrix out = z.value();
  for (Index h = 0; h < heads; ++h) {
    out.middleCols(h * d, d).array().colwise() *= coef.value().col(h).array();
  }
  return z.tape().push(std::move(out), {z, coef}, [zi = z.id(), ci = coef.id(), d](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& zv = t.value(zi);
    const Matrix& cv = t.value(ci);
    const Index heads = cv.cols();
    if (t.requires_grad(zi)) {
      Matrix gz = g;
      for (Index h = 0; h < heads; ++h) gz.middleCols(h * d, d).array().colwise() *= cv.col(h).array();
      t.accumulate(zi, gz);
    }
    if (t.requires_grad(ci)) {
      Matrix gc(cv.rows(), heads);
      for (Index h = 0; h < heads; ++h) {
        gc.col(h) = g.middleCols(h * d, d).cwiseProduct(zv.middleCols(h * d, d)).rowwise().sum();
      }
      t.accumulate(ci, gc);
    }
  });
}

Var head_mean(Var z, Index heads) {
  if (heads <= 0 || z.cols() % heads != 0) throw std::invalid_argument("head_mean: width is not a multiple of heads");
  const Index d = z.cols() / heads;
  Matrix out = Matrix::Zero(z.rows(), d);
  for (Index h = 0; h < heads; ++h) out += z.value().middleCols(h * d, d);
  out /= static_cast<double>(heads);
  return z.tape().push(std::move(out), {z}, [zi = z.id(), heads, d](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix gz(g.rows(), heads * d);
    for (Index h = 0; h < heads; ++h) gz.middleCols(h * d, d) = g / static_cast<double>(heads);
    t.accumulate(zi, gz);
  });
}

Matrix segment_softmax_values(const Matrix& logits, std::span<const Index> segment, Index num_segments) {
  if (static_cast<Index>(segment.size()) != logits.rows()) throw std::invalid_argument("segment_softmax: length mismatch");
  const Index cols = logits.cols();
  Matrix seg_max = Matrix::Constant(num_segments, cols, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < segment.size(); ++r) {
    if (segment[r] < 0 || segment[r] >= num_segments) throw std::out_of_range("segment_softmax: segment id");
    seg_max.row(segment[r]) = seg_max.row(segment[r]).cwiseMax(logits.row(static_cast<Index>(r)));
  }
  Matrix out(logits.rows(), cols);
  Matrix seg_sum = Matrix::Zero(num_segments, cols);
  for (std::size_t r = 0; r < segment.size(); ++r) {
    const auto rr = static_cast<Index>(r);
    out.row(rr) = (logits.row(rr) - seg_max.row(segment[r])).array().exp().matrix();
    seg_sum.row(segment[r]) += out.row(rr);
  }
  for (std::size_t r = 0; r < segment.size(); ++r) {
    out.row(static_cast<Index>(r)).array() /= seg_sum.row(segment[r]).array();
  }
  return out;
}

Var segment_softmax(Var logits, std::span<const Index> segment, Index num_segments) {
  Matrix out = segment_softmax_values(logits.value(), segment, num_segments);
  return logits.tape().push(
      std::move(out), {logits},
      [li = logits.id(), seg = copy_indices(segment), num_segments](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& y = t.value(self);
        Matrix dot = Matrix::Zero(num_segments, y.cols());
        Matrix gy = g.cwiseProduct(y);
        for (std::size_t r = 0; r < seg.size(); ++r) dot.row(seg[r]) += gy.row(static_cast<Index>(r));
        Matrix gl(y.rows(), y.cols());
        for (std::size_t r = 0; r < seg.size(); ++r) {
          const auto rr = static_cast<Index>(r);
          gl.row(rr) = y.row(rr).cwiseProduct(g.row(rr) - dot.row(seg[r]));
        }
        t.accumulate(li, gl);
      });
}

Var sum_all(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().push(std::move(out), {a}, [ai = a.id()](Tape& t, std::size_t self) {
    const Matrix& v = t.value(ai);
    t.accumulate(ai, Matrix::Constant(v.rows(), v.cols(), t.grad(self)(0, 0)));
  });
}

Var mean_all(Var a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean_all: empty input");
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return a.tape().push(std::move(out), {a}, [ai = a.id(), n](Tape& t, std::size_t self) {
    const Matrix& v = t.value(ai);
    t.accumulate(ai, Matrix::Constant(v.rows(), v.cols(), t.grad(self)(0, 0) / n));
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Matrix& z = logits.value();
  if (static_cast<Index>(labels.size()) != z.rows()) throw std::invalid_argument("cross_entropy: label count mismatch");
  Matrix prob(z.rows(), z.cols());
  double total = 0.0;
  std::size_t count = 0;
  for (Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    prob.row(i) = (z.row(i).array() - mx).exp().matrix();
    const double sum = prob.row(i).sum();
    prob.row(i) /= sum;
    const int y = labels[static_cast<std::size_t>(i)];
    if (y == kUnlabeled) continue;
    if (y < 0 || y >= z.cols()) throw std::out_of_range("cross_entropy: label outside class range");
    total += -(z(i, y) - mx - std::log(sum));
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: no labeled nodes");
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(count);
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape().push(std::move(out), {logits},
                            [li = logits.id(), prob = std::move(prob), ys = std::move(ys), count](Tape& t,
                                                                                                  std::size_t self) {
                              const double scale = t.grad(self)(0, 0) / static_cast<double>(count);
                              Matrix g = Matrix::Zero(prob.rows(), prob.cols());
                              for (Index i = 0; i < prob.rows(); ++i) {
                                const int y = ys[static_cast<std::size_t>(i)];
                                if (y == kUnlabeled) continue;
                                g.row(i) = prob.row(i) * scale;
                                g(i, y) -= scale;
                              }
                              t.accumulate(li, g);
                            });
}

}  // namespace edgemask::ad
