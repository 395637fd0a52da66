#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "polyroom/error.hpp"

/// Minimal reverse-mode automatic differentiation over dense f64 tensors.
///
/// A Tensor is a handle to a graph node. Ops record their inputs and a
/// backward closure when any input requires a gradient; Tensor::backward()
/// walks the recorded graph in reverse topological order and accumulates
/// into every reachable node's grad buffer. There is no broadcasting apart
/// from add_bias(); reshape explicitly.
namespace polyroom::ag {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> inputs;
  BackwardFn backward;

  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value) { return from({}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<double> data() { return node_->value; }
  std::span<const double> data() const { return node_->value; }
  // Gradient buffer; zeros if nothing has been accumulated yet.
  std::span<double> grad() { return node_->grad_buffer(); }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  double item() const;

  // Seeds d(self)/d(self) = 1; self must hold a single element.
  void backward();
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Builds a result node wired to its inputs. backward is dropped when no
// input needs a gradient. Used by every op, including fused losses elsewhere.
Tensor make_result(const char* op, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   BackwardFn backward);

// Elementwise and structural ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // bias over the last axis
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);  // rank 2
Tensor permute(const Tensor& a, const std::vector<std::size_t>& order);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows);  // along axis 0

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor bmm(const Tensor& a, const Tensor& b);     // [B,m,k] x [B,k,n]
// x [..., in] * W [in, out] + b [out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// softmax(q k^T / sqrt(dh)) v over [B,T,dh] x [B,S,dh] x [B,S,dh].
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Bilinear lookup of grid [H, W, G*C] at points [P, G, 2] given in
/// normalised [0, 1] image coordinates (pixel centres at (i + 0.5) / W).
/// Group g reads channels [g*C, (g+1)*C). Points are clamped to the border
/// cell centres, and the gradient along a clamped axis is zero.
/// Returns [P, G, C]. A rank-2 points tensor [P, 2] means G = 1 and the
/// result is [P, C].
Tensor bilinear_sample(const Tensor& grid, const Tensor& points);

// x [Ci, H, W], w [Co, Ci, k, k], b [Co]; zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t padding);

// Reductions and losses.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor l1(const Tensor& x, const Tensor& y);  // mean |x - y|
// Mean over rows of -log softmax(logits[r])[target[r]].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// [R, 2] coordinates in [0, 1] -> [R, d]: first d/2 channels encode x,
// the rest y, as interleaved sin/cos of 2*pi*c / temperature^(2i/(d/2)).
Tensor sinusoidal_embed(const Tensor& coords, std::size_t d, double temperature = 10000.0);

// Score-buffer bookkeeping for scaled_dot_attention (per thread).
struct AttentionStats {
  std::size_t calls = 0;
  std::size_t score_elements = 0;  // sum of B*T*S over calls
  std::size_t peak_elements = 0;   // largest single B*T*S
};
AttentionStats& attention_stats();
void reset_attention_stats();

/// Central-difference gradient check of a scalar closure.
///
/// Returns max over every input coordinate of
/// |analytic - numeric| / max(1, |numeric|). Throws kContract if f does not
/// return a single element.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h = 1e-5);

}  // namespace polyroom::ag
