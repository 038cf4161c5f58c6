#include "cmil/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace cmil {

MLP::MLP(std::vector<int> sizes, Rng& rng, Activation act) : sizes_(std::move(sizes)), act_(act) {
  if (sizes_.size() < 2) throw std::invalid_argument("MLP: need at least input and output sizes");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int n_in = sizes_[l], n_out = sizes_[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
    Tensor w = Tensor::zeros({n_in, n_out});
    for (double& x : w.data) x = rng.uniform(-bound, bound);
    weights_.push_back(std::move(w));
    biases_.push_back(Tensor::zeros({1, n_out}));
  }
}

Value MLP::forward(Tape& t, Value input) const {
  if (t.val(input).cols() != sizes_.front())
    throw std::invalid_argument("MLP::forward: input has " +
                                std::to_string(t.val(input).cols()) + " columns, expected " +
                                std::to_string(sizes_.front()));
  Value h = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = t.add_row(t.matmul(h, t.param(weights_[l])), t.param(biases_[l]));
    if (l + 1 < weights_.size())
      h = act_ == Activation::ELU ? t.elu(h) : t.tanh_(h);
  }
  return h;
}

Tensor MLP::forward_eval(const Tensor& input) const {
  if (input.cols() != sizes_.front())
    throw std::invalid_argument("MLP::forward_eval: input has " + std::to_string(input.cols()) +
                                " columns, expected " + std::to_string(sizes_.front()));
  const int n = input.rows();
  Tensor h = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Tensor& w = weights_[l];
    const Tensor& b = biases_[l];
    const int k = w.rows(), m = w.cols();
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) out.at(i, j) = b.data[static_cast<std::size_t>(j)];
      for (int p = 0; p < k; ++p) {
        const double hv = h.at(i, p);
        if (hv == 0.0) continue;
        for (int j = 0; j < m; ++j) out.at(i, j) += hv * w.at(p, j);
      }
    }
    if (l + 1 < weights_.size()) {
      if (act_ == Activation::ELU)
        for (double& x : out.data) x = x > 0.0 ? x : std::expm1(x);
      else
        for (double& x : out.data) x = std::tanh(x);
    }
    h = std::move(out);
  }
  return h;
}

std::vector<NamedParam> MLP::params(const std::string& prefix) {
  std::vector<NamedParam> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back({prefix + ".w" + std::to_string(l), &weights_[l]});
    out.push_back({prefix + ".b" + std::to_string(l), &biases_[l]});
  }
  return out;
}

std::size_t MLP::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

Tensor Gaussian::sample(Rng& rng) const {
  Tensor out = mean;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] += std::exp(logstd.data[i]) * rng.normal();
  return out;
}

Tensor Gaussian::stddev() const {
  Tensor out = logstd;
  for (double& x : out.data) x = std::exp(x);
  return out;
}

GaussianMLP::GaussianMLP(int in_dim, std::vector<int> hidden, int out_dim, Rng& rng)
    : out_dim_(out_dim) {
  std::vector<int> sizes;
  sizes.push_back(in_dim);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(2 * out_dim);
  net_ = MLP(std::move(sizes), rng);
}

GaussianValue GaussianMLP::forward(Tape& t, Value input) const {
  Value raw = net_.forward(t, input);
  GaussianValue g;
  g.mean = t.slice_cols(raw, 0, out_dim_);
  g.logstd = t.clamp(t.slice_cols(raw, out_dim_, 2 * out_dim_), kLogStdMin, kLogStdMax);
  return g;
}

Gaussian GaussianMLP::forward_eval(const Tensor& input) const {
  Tensor raw = net_.forward_eval(input);
  const int n = raw.rows();
  Gaussian g{Tensor::zeros({n, out_dim_}), Tensor::zeros({n, out_dim_})};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out_dim_; ++j) {
      g.mean.at(i, j) = raw.at(i, j);
      double ls = raw.at(i, out_dim_ + j);
      g.logstd.at(i, j) = ls < kLogStdMin ? kLogStdMin : (ls > kLogStdMax ? kLogStdMax : ls);
    }
  return g;
}

Value GaussianMLP::mean_head(Tape& t, Value input) const {
  return t.slice_cols(net_.forward(t, input), 0, out_dim_);
}

double gaussian_kl_eval(const Gaussian& p, const Gaussian& q) {
  if (!p.mean.same_shape(q.mean)) throw std::invalid_argument("gaussian_kl_eval: shape mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.mean.size(); ++i) {
    const double lp = p.logstd.data[i], lq = q.logstd.data[i];
    const double dm = p.mean.data[i] - q.mean.data[i];
    kl += lq - lp + 0.5 * (std::exp(2.0 * lp) + dm * dm) * std::exp(-2.0 * lq) - 0.5;
  }
  return kl;
}

double gaussian_logprob_eval(const Gaussian& p, const Tensor& x) {
  if (!p.mean.same_shape(x)) throw std::invalid_argument("gaussian_logprob_eval: shape mismatch");
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.data[i] - p.mean.data[i];
    lp += -kHalfLog2Pi - p.logstd.data[i] - 0.5 * d * d * std::exp(-2.0 * p.logstd.data[i]);
  }
  return lp;
}

}  // namespace cmil
