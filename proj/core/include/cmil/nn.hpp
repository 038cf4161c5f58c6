#pragma once

#include <string>
#include <vector>

#include "cmil/tape.hpp"

namespace cmil {

enum class Activation { ELU, Tanh };

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

// Fully connected net with ELU (default) hidden activations and a linear
// output layer. Weights use uniform fan-in initialization.
class MLP {
 public:
  MLP() = default;
  MLP(std::vector<int> sizes, Rng& rng, Activation act = Activation::ELU);

  Value forward(Tape& t, Value input) const;
  Tensor forward_eval(const Tensor& input) const;

  int in_dim() const { return sizes_.front(); }
  int out_dim() const { return sizes_.back(); }
  std::vector<NamedParam> params(const std::string& prefix);
  std::size_t param_count() const;

 private:
  std::vector<int> sizes_;
  Activation act_ = Activation::ELU;
  // mutable so a const forward pass can bind parameters onto the tape.
  mutable std::vector<Tensor> weights_;  // [n_in x n_out] each
  mutable std::vector<Tensor> biases_;   // [1 x n_out]
};

// Numeric (untaped) diagonal Gaussian.
struct Gaussian {
  Tensor mean;
  Tensor logstd;

  Tensor sample(Rng& rng) const;
  Tensor stddev() const;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// MLP whose output parameterizes a diagonal Gaussian: the first half of the
// output columns is the mean, the second half the log-std, clamped to
// [kLogStdMin, kLogStdMax].
class GaussianMLP {
 public:
  GaussianMLP() = default;
  GaussianMLP(int in_dim, std::vector<int> hidden, int out_dim, Rng& rng);

  GaussianValue forward(Tape& t, Value input) const;
  Gaussian forward_eval(const Tensor& input) const;
  // Mean head only, on tape; used for the ensemble disagreement estimator.
  Value mean_head(Tape& t, Value input) const;

  int in_dim() const { return net_.in_dim(); }
  int out_dim() const { return out_dim_; }
  std::vector<NamedParam> params(const std::string& prefix) { return net_.params(prefix); }

 private:
  MLP net_;
  int out_dim_ = 0;
};

// Numeric counterparts of the taped Gaussian ops (for eval paths and tests).
double gaussian_kl_eval(const Gaussian& p, const Gaussian& q);
double gaussian_logprob_eval(const Gaussian& p, const Tensor& x);

}  // namespace cmil
