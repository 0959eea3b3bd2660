#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every value is a 2-D matrix. A forward pass records a graph of Nodes; calling
// backward() on a scalar result walks the graph in reverse topological order
// and accumulates gradients into every node that requires them. Leaves created
// through a ParameterStore persist across passes; intermediate nodes die with
// the last Var referencing them.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace contexthoi::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;

  void accumulate(const Matrix& g);
  bool has_grad() const { return grad.size() != 0; }
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  // Zero matrix of matching shape when nothing has been accumulated.
  Matrix grad() const;
  double scalar() const;

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  const NodePtr& node() const { return node_; }
  void zero_grad();

 private:
  NodePtr node_;
};

// Builds a result node; attaches `fn` only when some parent needs gradients
// and gradient recording is enabled.
Var make_result(Matrix value, std::vector<Var> parents, BackwardFn fn);

void backward(const Var& output, const Matrix& seed);
// `output` must be 1x1.
void backward(const Var& output);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Var constant(Matrix value);
Var scalar_constant(double v);

// Elementwise, equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

// a[n,m] + row[1,m] broadcast down the rows.
Var add_row(const Var& a, const Var& row);
// a[n,m] + col[n,1] broadcast across the columns.
Var add_col(const Var& a, const Var& col);
// a[n,m] scaled row-wise by col[n,1].
Var scale_rows(const Var& a, const Var& col);
// a scaled by a 1x1 variable.
Var scale_by(const Var& a, const Var& s);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var reciprocal(const Var& a);

Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
// a^T * b
Var matmul_tn(const Var& a, const Var& b);
Var transpose(const Var& a);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var softplus(const Var& a);

Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);
Var col_sum(const Var& a);
// a[i,j] / sum_i a[i,j]; columns summing to zero stay zero.
Var normalize_cols(const Var& a);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& a, Index start, Index count);
Var slice_cols(const Var& a, Index start, Index count);
Var gather_rows(const Var& a, const std::vector<Index>& rows);

// Unfolds an image stored as [height*width, channels] (row-major pixel order)
// into patches [out_h*out_w, kernel*kernel*channels] for convolution by matmul.
Var im2col(const Var& image, Index height, Index width, Index kernel, Index stride, Index pad);

// Mean over logits rows of weighted softmax cross-entropy; weights index by
// target class and the result is normalized by the sum of the used weights.
Var cross_entropy(const Var& logits, const std::vector<Index>& targets,
                  const Eigen::VectorXd& class_weights);

// Sum of the sigmoid focal loss over all entries; targets in {0,1}.
Var sigmoid_focal_loss(const Var& logits, const Matrix& targets, double alpha, double gamma);

}  // namespace contexthoi::ad
