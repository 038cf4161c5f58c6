#include "cmil/tape.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace cmil {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                                shape_str(b));
}

// C += A * B, row-major, A [n x k], B [k x m].
using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                              Eigen::RowMajor>>;
using MutMatMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void gemm_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  MutMatMap(c, n, m).noalias() += MatMap(a, n, k) * MatMap(b, k, m);
}

// C += A^T * B, A [n x k], B [n x m], C [k x m].
void gemm_at_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  MutMatMap(c, k, m).noalias() += MatMap(a, n, k).transpose() * MatMap(b, n, m);
}

// C += A * B^T, A [n x k], B [m x k], C [n x m].
void gemm_bt_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  MutMatMap(c, n, m).noalias() += MatMap(a, n, k) * MatMap(b, m, k).transpose();
}

}  // namespace

Value Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> back) {
  Node n;
  n.grad = Tensor::zeros(value.shape);
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Value v) {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: invalid value handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Value v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: invalid value handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Value Tape::leaf(Tensor t) { return push(std::move(t), true, {}); }
Value Tape::constant(Tensor t) { return push(std::move(t), false, {}); }

Value Tape::param(Tensor& t) {
  auto it = bound_.find(&t);
  if (it != bound_.end()) return Value{it->second};
  Value v = leaf(t);
  bound_.emplace(&t, v.id);
  return v;
}

const Tensor& Tape::val(Value v) const { return node(v).value; }
const Tensor& Tape::grad(Value v) const { return node(v).grad; }

const Tensor* Tape::grad_of(const Tensor& p) const {
  auto it = bound_.find(&p);
  if (it == bound_.end()) return nullptr;
  return &nodes_[static_cast<std::size_t>(it->second)].grad;
}

void Tape::backward(Value loss) {
  Node& l = node(loss);
  if (l.value.size() != 1)
    throw std::invalid_argument("Tape::backward: loss must be a scalar, got " +
                                shape_str(l.value));
  l.grad.data[0] += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.back) n.back(*this);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_)
    for (double& g : n.grad.data) g = 0.0;
}

// ---- elementwise ----

Value Tape::add(Value a, Value b) {
  const Tensor &ta = val(a), &tb = val(b);
  require_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a) || rg(b), [a, b, o](Tape& t) {
    const Tensor& g = t.grad(o);
    if (t.rg(a))
      for (std::size_t i = 0; i < g.size(); ++i) t.node(a).grad.data[i] += g.data[i];
    if (t.rg(b))
      for (std::size_t i = 0; i < g.size(); ++i) t.node(b).grad.data[i] += g.data[i];
  });
}

Value Tape::sub(Value a, Value b) {
  const Tensor &ta = val(a), &tb = val(b);
  require_same_shape(ta, tb, "sub");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= tb.data[i];
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a) || rg(b), [a, b, o](Tape& t) {
    const Tensor& g = t.grad(o);
    if (t.rg(a))
      for (std::size_t i = 0; i < g.size(); ++i) t.node(a).grad.data[i] += g.data[i];
    if (t.rg(b))
      for (std::size_t i = 0; i < g.size(); ++i) t.node(b).grad.data[i] -= g.data[i];
  });
}

Value Tape::mul(Value a, Value b) {
  const Tensor &ta = val(a), &tb = val(b);
  require_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= tb.data[i];
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a) || rg(b), [a, b, o](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor &ta = t.val(a), &tb = t.val(b);
    if (t.rg(a))
      for (std::size_t i = 0; i < g.size(); ++i) t.node(a).grad.data[i] += g.data[i] * tb.data[i];
    if (t.rg(b))
      for (std::size_t i = 0; i < g.size(); ++i) t.node(b).grad.data[i] += g.data[i] * ta.data[i];
  });
}

Value Tape::neg(Value a) { return mul_scalar(a, -1.0); }

Value Tape::add_scalar(Value a, double c) {
  Tensor out = val(a);
  for (double& x : out.data) x += c;
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o](Tape& t) {
    const Tensor& g = t.grad(o);
    for (std::size_t i = 0; i < g.size(); ++i) t.node(a).grad.data[i] += g.data[i];
  });
}

Value Tape::mul_scalar(Value a, double c) {
  Tensor out = val(a);
  for (double& x : out.data) x *= c;
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o, c](Tape& t) {
    const Tensor& g = t.grad(o);
    for (std::size_t i = 0; i < g.size(); ++i) t.node(a).grad.data[i] += c * g.data[i];
  });
}

Value Tape::tanh_(Value a) {
  Tensor out = val(a);
  for (double& x : out.data) x = std::tanh(x);
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor& y = t.val(o);
    for (std::size_t i = 0; i < g.size(); ++i)
      t.node(a).grad.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Value Tape::sigmoid(Value a) {
  Tensor out = val(a);
  for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor& y = t.val(o);
    for (std::size_t i = 0; i < g.size(); ++i)
      t.node(a).grad.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Value Tape::exp_(Value a) {
  Tensor out = val(a);
  for (double& x : out.data) x = std::exp(x);
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor& y = t.val(o);
    for (std::size_t i = 0; i < g.size(); ++i) t.node(a).grad.data[i] += g.data[i] * y.data[i];
  });
}

Value Tape::log_(Value a) {
  Tensor out = val(a);
  for (double& x : out.data) x = std::log(x);
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor& x = t.val(a);
    for (std::size_t i = 0; i < g.size(); ++i) t.node(a).grad.data[i] += g.data[i] / x.data[i];
  });
}

Value Tape::softplus(Value a) {
  Tensor out = val(a);
  for (double& x : out.data) x = x > 30.0 ? x : std::log1p(std::exp(x));
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor& x = t.val(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      t.node(a).grad.data[i] += g.data[i] / (1.0 + std::exp(-x.data[i]));
  });
}

Value Tape::square(Value a) {
  Tensor out = val(a);
  for (double& x : out.data) x *= x;
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor& x = t.val(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      t.node(a).grad.data[i] += 2.0 * g.data[i] * x.data[i];
  });
}

Value Tape::sqrt_(Value a) {
  Tensor out = val(a);
  for (double& x : out.data) x = std::sqrt(x);
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor& y = t.val(o);
    // Subgradient 0 at y == 0 (all-identical ensemble members).
    for (std::size_t i = 0; i < g.size(); ++i)
      if (y.data[i] > 0.0) t.node(a).grad.data[i] += 0.5 * g.data[i] / y.data[i];
  });
}

Value Tape::elu(Value a) {
  Tensor out = val(a);
  for (double& x : out.data) x = x > 0.0 ? x : std::expm1(x);
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor& x = t.val(a);
    const Tensor& y = t.val(o);
    for (std::size_t i = 0; i < g.size(); ++i)
      t.node(a).grad.data[i] += g.data[i] * (x.data[i] > 0.0 ? 1.0 : y.data[i] + 1.0);
  });
}

Value Tape::clamp(Value a, double lo, double hi) {
  Tensor out = val(a);
  for (double& x : out.data) x = x < lo ? lo : (x > hi ? hi : x);
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o, lo, hi](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor& x = t.val(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.data[i] > lo && x.data[i] < hi) t.node(a).grad.data[i] += g.data[i];
  });
}

Value Tape::minimum(Value a, Value b) {
  const Tensor &ta = val(a), &tb = val(b);
  require_same_shape(ta, tb, "minimum");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = ta.data[i] <= tb.data[i] ? ta.data[i] : tb.data[i];
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a) || rg(b), [a, b, o](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor &ta = t.val(a), &tb = t.val(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (ta.data[i] <= tb.data[i]) {
        if (t.rg(a)) t.node(a).grad.data[i] += g.data[i];
      } else if (t.rg(b)) {
        t.node(b).grad.data[i] += g.data[i];
      }
    }
  });
}

Value Tape::maximum(Value a, Value b) {
  const Tensor &ta = val(a), &tb = val(b);
  require_same_shape(ta, tb, "maximum");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = ta.data[i] >= tb.data[i] ? ta.data[i] : tb.data[i];
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a) || rg(b), [a, b, o](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor &ta = t.val(a), &tb = t.val(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (ta.data[i] >= tb.data[i]) {
        if (t.rg(a)) t.node(a).grad.data[i] += g.data[i];
      } else if (t.rg(b)) {
        t.node(b).grad.data[i] += g.data[i];
      }
    }
  });
}

// ---- matrix / shape ----

Value Tape::matmul(Value a, Value b) {
  const Tensor &ta = val(a), &tb = val(b);
  const int n = ta.rows(), k = ta.cols(), k2 = tb.rows(), m = tb.cols();
  if (k != k2)
    throw std::invalid_argument("matmul: inner dimensions disagree " + shape_str(ta) + " vs " +
                                shape_str(tb));
  Tensor out = Tensor::zeros({n, m});
  gemm_acc(ta.data.data(), tb.data.data(), out.data.data(), n, k, m);
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a) || rg(b), [a, b, o, n, k, m](Tape& t) {
    const Tensor& g = t.grad(o);
    if (t.rg(a))
      gemm_bt_acc(g.data.data(), t.val(b).data.data(), t.node(a).grad.data.data(), n, m, k);
    if (t.rg(b))
      gemm_at_acc(t.val(a).data.data(), g.data.data(), t.node(b).grad.data.data(), n, k, m);
  });
}

Value Tape::add_row(Value x, Value bias) {
  const Tensor &tx = val(x), &tb = val(bias);
  const int n = tx.rows(), m = tx.cols();
  if (tb.size() != static_cast<std::size_t>(m))
    throw std::invalid_argument("add_row: bias length " + shape_str(tb) + " vs cols " +
                                std::to_string(m));
  Tensor out = tx;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) += tb.data[static_cast<std::size_t>(j)];
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(x) || rg(bias), [x, bias, o, n, m](Tape& t) {
    const Tensor& g = t.grad(o);
    if (t.rg(x))
      for (std::size_t i = 0; i < g.size(); ++i) t.node(x).grad.data[i] += g.data[i];
    if (t.rg(bias)) {
      Tensor& gb = t.node(bias).grad;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gb.data[static_cast<std::size_t>(j)] += g.at(i, j);
    }
  });
}

Value Tape::row_scale(Value x, Value c) {
  const Tensor &tx = val(x), &tc = val(c);
  const int n = tx.rows(), m = tx.cols();
  if (tc.rows() != n || tc.cols() != 1)
    throw std::invalid_argument("row_scale: expected [" + std::to_string(n) + "x1], got " +
                                shape_str(tc));
  Tensor out = tx;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) *= tc.data[static_cast<std::size_t>(i)];
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(x) || rg(c), [x, c, o, n, m](Tape& t) {
    const Tensor& g = t.grad(o);
    const Tensor &tx = t.val(x), &tc = t.val(c);
    if (t.rg(x)) {
      Tensor& gx = t.node(x).grad;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gx.at(i, j) += g.at(i, j) * tc.data[static_cast<std::size_t>(i)];
    }
    if (t.rg(c)) {
      Tensor& gc = t.node(c).grad;
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += g.at(i, j) * tx.at(i, j);
        gc.data[static_cast<std::size_t>(i)] += s;
      }
    }
  });
}

Value Tape::concat_cols(Value a, Value b) {
  const Tensor &ta = val(a), &tb = val(b);
  const int n = ta.rows(), ma = ta.cols(), mb = tb.cols();
  if (tb.rows() != n)
    throw std::invalid_argument("concat_cols: row mismatch " + shape_str(ta) + " vs " +
                                shape_str(tb));
  Tensor out = Tensor::zeros({n, ma + mb});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < ma; ++j) out.at(i, j) = ta.at(i, j);
    for (int j = 0; j < mb; ++j) out.at(i, ma + j) = tb.at(i, j);
  }
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a) || rg(b), [a, b, o, n, ma, mb](Tape& t) {
    const Tensor& g = t.grad(o);
    if (t.rg(a)) {
      Tensor& ga = t.node(a).grad;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < ma; ++j) ga.at(i, j) += g.at(i, j);
    }
    if (t.rg(b)) {
      Tensor& gb = t.node(b).grad;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < mb; ++j) gb.at(i, j) += g.at(i, ma + j);
    }
  });
}

Value Tape::slice_cols(Value a, int c0, int c1) {
  const Tensor& ta = val(a);
  const int n = ta.rows(), m = ta.cols();
  if (c0 < 0 || c1 > m || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," +
                                std::to_string(c1) + ") for " + shape_str(ta));
  Tensor out = Tensor::zeros({n, c1 - c0});
  for (int i = 0; i < n; ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = ta.at(i, j);
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o, n, c0, c1](Tape& t) {
    const Tensor& g = t.grad(o);
    Tensor& ga = t.node(a).grad;
    for (int i = 0; i < n; ++i)
      for (int j = c0; j < c1; ++j) ga.at(i, j) += g.at(i, j - c0);
  });
}

Value Tape::rowsum(Value a) {
  const Tensor& ta = val(a);
  const int n = ta.rows(), m = ta.cols();
  Tensor out = Tensor::zeros({n, 1});
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += ta.at(i, j);
    out.data[static_cast<std::size_t>(i)] = s;
  }
  Value o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [a, o, n, m](Tape& t) {
    const Tensor& g = t.grad(o);
    Tensor& ga = t.node(a).grad;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ga.at(i, j) += g.data[static_cast<std::size_t>(i)];
  });
}

Value Tape::sum_all(Value a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (double x : ta.data) s += x;
  Value o{static_cast<int>(nodes_.size())};
  return push(Tensor::scalar(s), rg(a), [a, o](Tape& t) {
    const double g = t.grad(o).data[0];
    for (double& x : t.node(a).grad.data) x += g;
  });
}

Value Tape::mean_all(Value a) {
  const Tensor& ta = val(a);
  const double inv = 1.0 / static_cast<double>(ta.size());
  double s = 0.0;
  for (double x : ta.data) s += x;
  Value o{static_cast<int>(nodes_.size())};
  return push(Tensor::scalar(s * inv), rg(a), [a, o, inv](Tape& t) {
    const double g = t.grad(o).data[0] * inv;
    for (double& x : t.node(a).grad.data) x += g;
  });
}

// ---- Gaussian helpers ----

Value gaussian_kl(Tape& t, const GaussianValue& p, const GaussianValue& q) {
  require_same_shape(t.val(p.mean), t.val(q.mean), "gaussian_kl");
  require_same_shape(t.val(p.logstd), t.val(q.logstd), "gaussian_kl");
  // KL = log sq - log sp + (sp^2 + (mp-mq)^2) / (2 sq^2) - 1/2, per dimension.
  Value var_p = t.exp_(t.mul_scalar(p.logstd, 2.0));
  Value inv_var_q = t.exp_(t.mul_scalar(q.logstd, -2.0));
  Value dm2 = t.square(t.sub(p.mean, q.mean));
  Value quad = t.mul_scalar(t.mul(t.add(var_p, dm2), inv_var_q), 0.5);
  Value terms = t.add_scalar(t.add(t.sub(q.logstd, p.logstd), quad), -0.5);
  return t.rowsum(terms);
}

Value gaussian_logprob(Tape& t, const GaussianValue& p, Value x) {
  require_same_shape(t.val(p.mean), t.val(x), "gaussian_logprob");
  constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2*pi)
  Value inv_var = t.exp_(t.mul_scalar(p.logstd, -2.0));
  Value quad = t.mul_scalar(t.mul(t.square(t.sub(x, p.mean)), inv_var), -0.5);
  Value terms = t.add_scalar(t.sub(quad, p.logstd), -kHalfLog2Pi);
  return t.rowsum(terms);
}

Value gaussian_rsample(Tape& t, const GaussianValue& p, const Tensor& eps) {
  require_same_shape(t.val(p.mean), eps, "gaussian_rsample");
  return t.add(p.mean, t.mul(t.exp_(p.logstd), t.constant(eps)));
}

}  // namespace cmil
