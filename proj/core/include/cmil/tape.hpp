#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "cmil/tensor.hpp"

namespace cmil {

class Tape;

// Handle into a Tape. Cheap to copy; only meaningful for the tape that
// produced it.
struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode computation graph. Nodes are appended in evaluation order,
// which is also the topological order used by backward(). One tape per
// training step; parameters are bound as cached leaves via param() so the
// optimizer can look gradients up by parameter address afterwards.
//
// backward() accumulates into existing gradient buffers; call zero_grad()
// between independent backward passes.
class Tape {
 public:
  Value leaf(Tensor t);
  Value constant(Tensor t);
  Value scalar(double v) { return constant(Tensor::scalar(v)); }
  // Grad-tracked leaf tied to an external parameter tensor; repeated calls
  // with the same tensor return the same node.
  Value param(Tensor& t);

  const Tensor& val(Value v) const;
  const Tensor& grad(Value v) const;
  // Gradient of a bound parameter, or nullptr if it never entered this tape.
  const Tensor* grad_of(const Tensor& p) const;

  void backward(Value loss);
  void zero_grad();
  std::size_t size() const { return nodes_.size(); }

  // Elementwise / scalar ops.
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value neg(Value a);
  Value add_scalar(Value a, double c);
  Value mul_scalar(Value a, double c);
  Value tanh_(Value a);
  Value sigmoid(Value a);
  Value exp_(Value a);
  Value log_(Value a);
  Value softplus(Value a);
  Value square(Value a);
  Value sqrt_(Value a);
  Value elu(Value a);
  Value clamp(Value a, double lo, double hi);
  Value minimum(Value a, Value b);
  Value maximum(Value a, Value b);

  // Matrix / shape ops (rank-2 semantics).
  Value matmul(Value a, Value b);
  Value add_row(Value x, Value bias);    // bias [1 x m] broadcast over rows
  Value row_scale(Value x, Value c);     // c [B x 1] scales each row
  Value concat_cols(Value a, Value b);
  Value slice_cols(Value a, int c0, int c1);
  Value rowsum(Value a);                 // [B x m] -> [B x 1]
  Value sum_all(Value a);                // -> [1 x 1]
  Value mean_all(Value a);               // -> [1 x 1]

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Tape&)> back;  // empty for leaves and constants
  };

  Value push(Tensor value, bool requires_grad, std::function<void(Tape&)> back);
  Node& node(Value v);
  const Node& node(Value v) const;
  bool rg(Value v) const { return node(v).requires_grad; }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> bound_;
};

// Diagonal Gaussian over a tape: mean and log-std of identical shape.
struct GaussianValue {
  Value mean;
  Value logstd;
};

// Closed-form diagonal-Gaussian KL, summed over dimensions: [B x d] -> [B x 1].
Value gaussian_kl(Tape& t, const GaussianValue& p, const GaussianValue& q);
// Exact log-density of x under p, summed over dimensions: [B x d] -> [B x 1].
Value gaussian_logprob(Tape& t, const GaussianValue& p, Value x);
// Reparameterized sample mean + exp(logstd) * eps for a fixed unit draw.
Value gaussian_rsample(Tape& t, const GaussianValue& p, const Tensor& eps);

}  // namespace cmil
