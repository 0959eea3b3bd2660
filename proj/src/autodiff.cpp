#include "contexthoi/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace contexthoi::ad {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch [" + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + "] vs [" +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + "]");
  }
}

// Numerically stable log(1 + exp(x)).
double softplus_scalar(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
  if (node_->has_grad()) return node_->grad;
  return Matrix::Zero(rows(), cols());
}

double Var::scalar() const {
  require(rows() == 1 && cols() == 1, "Var::scalar: value is not 1x1");
  return node_->value(0, 0);
}

void Var::zero_grad() { node_->grad.resize(0, 0); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Matrix value, std::vector<Var> parents, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node());
      node->backward = std::move(fn);
    }
  }
  return Var(std::move(node));
}

void backward(const Var& output, const Matrix& seed) {
  if (!output.requires_grad()) return;
  require(seed.rows() == output.rows() && seed.cols() == output.cols(), "backward: seed shape");

  // Iterative post-order DFS; reversed it is a valid reverse topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(output.node().get(), 0);
  visited.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  output.node()->accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->has_grad()) node->backward(*node);
  }
  // Intermediate gradients are not needed once propagated; leaves keep theirs.
  for (Node* node : order) {
    if (node->backward) node->grad.resize(0, 0);
  }
}

void backward(const Var& output) {
  require(output.rows() == 1 && output.cols() == 1, "backward: output must be 1x1");
  backward(output, Matrix::Ones(1, 1));
}

Var constant(Matrix value) { return Var(std::move(value), false); }

Var scalar_constant(double v) { return Var(Matrix::Constant(1, 1, v), false); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(-n.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) pa->accumulate(n.grad.cwiseProduct(pb->value));
    if (pb->requires_grad) pb->accumulate(n.grad.cwiseProduct(pa->value));
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  return make_result(a.value().cwiseQuotient(b.value()), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) pa->accumulate(n.grad.cwiseQuotient(pb->value));
    if (pb->requires_grad) {
      pb->accumulate(-n.grad.cwiseProduct(n.value).cwiseQuotient(pb->value));
    }
  });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {a, row}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad.colwise().sum());
  });
}

Var add_col(const Var& a, const Var& col) {
  require(col.cols() == 1 && col.rows() == a.rows(), "add_col: shape mismatch");
  Matrix out = a.value().colwise() + col.value().col(0);
  return make_result(std::move(out), {a, col}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad.rowwise().sum());
  });
}

Var scale_rows(const Var& a, const Var& col) {
  require(col.cols() == 1 && col.rows() == a.rows(), "scale_rows: shape mismatch");
  Matrix out = col.value().col(0).asDiagonal() * a.value();
  return make_result(std::move(out), {a, col}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pc = n.parents[1];
    if (pa->requires_grad) pa->accumulate(pc->value.col(0).asDiagonal() * n.grad);
    if (pc->requires_grad) pc->accumulate(n.grad.cwiseProduct(pa->value).rowwise().sum());
  });
}

Var scale_by(const Var& a, const Var& s) {
  require(s.rows() == 1 && s.cols() == 1, "scale_by: scale must be 1x1");
  const double k = s.value()(0, 0);
  return make_result(a.value() * k, {a, s}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& ps = n.parents[1];
    if (pa->requires_grad) pa->accumulate(n.grad * ps->value(0, 0));
    if (ps->requires_grad) {
      ps->accumulate(Matrix::Constant(1, 1, n.grad.cwiseProduct(pa->value).sum()));
    }
  });
}

Var scale(const Var& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& n) { n.parents[0]->accumulate(n.grad * s); });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return make_result(std::move(out), {a}, [](Node& n) { n.parents[0]->accumulate(n.grad); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var reciprocal(const Var& a) {
  Matrix out = a.value().cwiseInverse();
  return make_result(std::move(out), {a}, [](Node& n) {
    n.parents[0]->accumulate(-n.grad.cwiseProduct(n.value).cwiseProduct(n.value));
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  return make_result(a.value() * b.value(), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) pa->accumulate(n.grad * pb->value.transpose());
    if (pb->requires_grad) pb->accumulate(pa->value.transpose() * n.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  return make_result(a.value() * b.value().transpose(), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) pa->accumulate(n.grad * pb->value);
    if (pb->requires_grad) pb->accumulate(n.grad.transpose() * pa->value);
  });
}

Var matmul_tn(const Var& a, const Var& b) {
  require(a.rows() == b.rows(), "matmul_tn: inner dimension mismatch");
  return make_result(a.value().transpose() * b.value(), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) pa->accumulate(pb->value * n.grad.transpose());
    if (pb->requires_grad) pb->accumulate(pa->value * n.grad);
  });
}

Var transpose(const Var& a) {
  return make_result(a.value().transpose(), {a},
                     [](Node& n) { n.parents[0]->accumulate(n.grad.transpose()); });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_result(std::move(out), {a}, [](Node& n) {
    const Matrix& x = n.parents[0]->value;
    n.parents[0]->accumulate((x.array() > 0.0).select(n.grad, 0.0));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return sigmoid_scalar(x); });
  return make_result(std::move(out), {a}, [](Node& n) {
    n.parents[0]->accumulate(
        (n.grad.array() * n.value.array() * (1.0 - n.value.array())).matrix());
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp();
  return make_result(std::move(out), {a}, [](Node& n) {
    n.parents[0]->accumulate(n.grad.cwiseProduct(n.value));
  });
}

Var log(const Var& a) {
  Matrix out = a.value().array().log();
  return make_result(std::move(out), {a}, [](Node& n) {
    n.parents[0]->accumulate(n.grad.cwiseQuotient(n.parents[0]->value));
  });
}

Var abs(const Var& a) {
  return make_result(a.value().cwiseAbs(), {a}, [](Node& n) {
    const Matrix& x = n.parents[0]->value;
    Matrix sign = x.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
    n.parents[0]->accumulate(n.grad.cwiseProduct(sign));
  });
}

Var sqrt(const Var& a) {
  Matrix out = a.value().cwiseSqrt();
  return make_result(std::move(out), {a}, [](Node& n) {
    n.parents[0]->accumulate((0.5 * n.grad.array() / n.value.array()).matrix());
  });
}

Var square(const Var& a) {
  return make_result(a.value().cwiseAbs2(), {a}, [](Node& n) {
    n.parents[0]->accumulate(2.0 * n.grad.cwiseProduct(n.parents[0]->value));
  });
}

Var softplus(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return softplus_scalar(x); });
  return make_result(std::move(out), {a}, [](Node& n) {
    Matrix s = n.parents[0]->value.unaryExpr([](double x) { return sigmoid_scalar(x); });
    n.parents[0]->accumulate(n.grad.cwiseProduct(s));
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return make_result(std::move(out), {a}, [](Node& n) {
    const Matrix& y = n.value;
    Eigen::VectorXd dot = n.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.cwiseProduct(n.grad.colwise() - dot);
    n.parents[0]->accumulate(g);
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm_rows: gamma shape");
  require(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm_rows: beta shape");
  const Index n = x.rows();
  const Index m = x.cols();
  Matrix xhat(n, m);
  Eigen::VectorXd inv_std(n);
  for (Index i = 0; i < n; ++i) {
    const double mu = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& nd) {
                       auto& px = nd.parents[0];
                       auto& pg = nd.parents[1];
                       auto& pb = nd.parents[2];
                       if (pg->requires_grad) {
                         pg->accumulate(nd.grad.cwiseProduct(xhat).colwise().sum());
                       }
                       if (pb->requires_grad) pb->accumulate(nd.grad.colwise().sum());
                       if (px->requires_grad) {
                         Matrix dxhat =
                             (nd.grad.array().rowwise() * pg->value.row(0).array()).matrix();
                         Eigen::VectorXd mean_d = dxhat.rowwise().mean();
                         Eigen::VectorXd mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
                         Matrix dx = dxhat;
                         dx.colwise() -= mean_d;
                         dx -= xhat.cwiseProduct(mean_dx.replicate(1, xhat.cols()));
                         px->accumulate(inv_std.asDiagonal() * dx);
                       }
                     });
}

Var sum(const Var& a) {
  return make_result(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& n) {
    const auto& p = n.parents[0];
    p->accumulate(Matrix::Constant(p->value.rows(), p->value.cols(), n.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  require(a.value().size() > 0, "mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var row_sum(const Var& a) {
  return make_result(a.value().rowwise().sum(), {a}, [](Node& n) {
    const auto& p = n.parents[0];
    p->accumulate(n.grad.replicate(1, p->value.cols()));
  });
}

Var col_sum(const Var& a) {
  return make_result(a.value().colwise().sum(), {a}, [](Node& n) {
    const auto& p = n.parents[0];
    p->accumulate(n.grad.replicate(p->value.rows(), 1));
  });
}

Var normalize_cols(const Var& a) {
  Eigen::RowVectorXd sums = a.value().colwise().sum();
  Eigen::RowVectorXd inv = sums.unaryExpr([](double s) { return s != 0.0 ? 1.0 / s : 0.0; });
  Matrix out = a.value() * inv.asDiagonal();
  return make_result(std::move(out), {a}, [inv = std::move(inv)](Node& n) {
    // y = x / s  =>  dx = (dy - sum_i(dy * y)) / s
    Eigen::RowVectorXd dot = n.grad.cwiseProduct(n.value).colwise().sum();
    Matrix g = (n.grad.rowwise() - dot) * inv.asDiagonal();
    n.parents[0]->accumulate(g);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return make_result(std::move(out), parts, [](Node& n) {
    Index off = 0;
    for (auto& p : n.parents) {
      const Index r = p->value.rows();
      if (p->requires_grad) p->accumulate(n.grad.middleRows(off, r));
      off += r;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return make_result(std::move(out), parts, [](Node& n) {
    Index off = 0;
    for (auto& p : n.parents) {
      const Index c = p->value.cols();
      if (p->requires_grad) p->accumulate(n.grad.middleCols(off, c));
      off += c;
    }
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  return make_result(a.value().middleRows(start, count), {a}, [start, count](Node& n) {
    const auto& p = n.parents[0];
    Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
    g.middleRows(start, count) = n.grad;
    p->accumulate(g);
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  return make_result(a.value().middleCols(start, count), {a}, [start, count](Node& n) {
    const auto& p = n.parents[0];
    Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
    g.middleCols(start, count) = n.grad;
    p->accumulate(g);
  });
}

Var gather_rows(const Var& a, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < a.rows(), "gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  return make_result(std::move(out), {a}, [rows](Node& n) {
    const auto& p = n.parents[0];
    Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
    for (size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += n.grad.row(static_cast<Index>(i));
    p->accumulate(g);
  });
}

Var im2col(const Var& image, Index height, Index width, Index kernel, Index stride, Index pad) {
  require(image.rows() == height * width, "im2col: row count must equal height*width");
  require(stride > 0 && kernel > 0, "im2col: kernel and stride must be positive");
  const Index channels = image.cols();
  const Index out_h = (height + 2 * pad - kernel) / stride + 1;
  const Index out_w = (width + 2 * pad - kernel) / stride + 1;
  require(out_h > 0 && out_w > 0, "im2col: image smaller than kernel");
  Matrix out = Matrix::Zero(out_h * out_w, kernel * kernel * channels);
  const Matrix& src = image.value();
  for (Index oy = 0; oy < out_h; ++oy) {
    for (Index ox = 0; ox < out_w; ++ox) {
      const Index r = oy * out_w + ox;
      for (Index ky = 0; ky < kernel; ++ky) {
        const Index iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= height) continue;
        for (Index kx = 0; kx < kernel; ++kx) {
          const Index ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= width) continue;
          out.block(r, (ky * kernel + kx) * channels, 1, channels) = src.row(iy * width + ix);
        }
      }
    }
  }
  return make_result(std::move(out), {image}, [=](Node& n) {
    const auto& p = n.parents[0];
    Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
    for (Index oy = 0; oy < out_h; ++oy) {
      for (Index ox = 0; ox < out_w; ++ox) {
        const Index r = oy * out_w + ox;
        for (Index ky = 0; ky < kernel; ++ky) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          for (Index kx = 0; kx < kernel; ++kx) {
            const Index ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= width) continue;
            g.row(iy * width + ix) += n.grad.block(r, (ky * kernel + kx) * channels, 1, channels);
          }
        }
      }
    }
    p->accumulate(g);
  });
}

Var cross_entropy(const Var& logits, const std::vector<Index>& targets,
                  const Eigen::VectorXd& class_weights) {
  const Index n = logits.rows();
  const Index k = logits.cols();
  require(static_cast<Index>(targets.size()) == n, "cross_entropy: target count");
  require(class_weights.size() == k, "cross_entropy: weight count");
  Matrix prob(n, k);
  double total = 0.0;
  double weight_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    require(targets[i] >= 0 && targets[i] < k, "cross_entropy: target out of range");
    const double m = logits.value().row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.value().row(i).array() - m).exp();
    const double z = e.sum();
    prob.row(i) = e / z;
    const double w = class_weights(targets[i]);
    total += w * (std::log(z) + m - logits.value()(i, targets[i]));
    weight_sum += w;
  }
  require(weight_sum > 0.0, "cross_entropy: zero total weight");
  return make_result(Matrix::Constant(1, 1, total / weight_sum), {logits},
                     [prob = std::move(prob), targets, class_weights, weight_sum](Node& nd) {
                       Matrix g = prob;
                       for (Index i = 0; i < g.rows(); ++i) {
                         g(i, targets[i]) -= 1.0;
                         g.row(i) *= class_weights(targets[i]) / weight_sum;
                       }
                       nd.parents[0]->accumulate(g * nd.grad(0, 0));
                     });
}

Var sigmoid_focal_loss(const Var& logits, const Matrix& targets, double alpha, double gamma) {
  require(targets.rows() == logits.rows() && targets.cols() == logits.cols(),
          "sigmoid_focal_loss: target shape");
  const Matrix& x = logits.value();
  Matrix dloss(x.rows(), x.cols());
  double total = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const double v = x(i, j);
      const double t = targets(i, j);
      const double p = sigmoid_scalar(v);
      const double log_p = -softplus_scalar(-v);
      const double log_1mp = -softplus_scalar(v);
      const double pos = -alpha * std::pow(1.0 - p, gamma) * log_p;
      const double neg = -(1.0 - alpha) * std::pow(p, gamma) * log_1mp;
      total += t * pos + (1.0 - t) * neg;
      const double dpos =
          alpha * (gamma * std::pow(1.0 - p, gamma) * p * log_p - std::pow(1.0 - p, gamma + 1.0));
      const double dneg = (1.0 - alpha) * (std::pow(p, gamma + 1.0) -
                                           gamma * std::pow(p, gamma) * (1.0 - p) * log_1mp);
      dloss(i, j) = t * dpos + (1.0 - t) * dneg;
    }
  }
  return make_result(Matrix::Constant(1, 1, total), {logits},
                     [dloss = std::move(dloss)](Node& n) {
                       n.parents[0]->accumulate(dloss * n.grad(0, 0));
                     });
}

}  // namespace contexthoi::ad
