#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmil/rng.hpp"

namespace cmil {

// Dense row-major tensor of 64-bit floats. Rank is usually 2 ([rows x cols]);
// scalars are stored as shape {1, 1}.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::size_t>(numel(shape)) != data.size())
      throw std::invalid_argument("Tensor: data length does not match shape");
  }

  static long long numel(const std::vector<int>& s) {
    long long n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  }

  static Tensor full(std::vector<int> s, double v) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
  }

  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }

  static Tensor randn(std::vector<int> s, Rng& rng, double stddev = 1.0) {
    Tensor t = zeros(std::move(s));
    for (double& x : t.data) x = stddev * rng.normal();
    return t;
  }

  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const {
    int c = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
  }
  std::size_t size() const { return data.size(); }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  double item() const {
    if (data.size() != 1) throw std::invalid_argument("Tensor::item: not a scalar");
    return data[0];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline std::string shape_str(const Tensor& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

}  // namespace cmil
