#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "fedtrace/errors.hpp"

namespace fedtrace {

// Row-major dense tensor of 64-bit floats. Sizes here are desk-scale; clarity
// and exact reproducibility outrank throughput tricks.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), 0.0);
  }

  static long long count(const std::vector<int>& s) {
    long long n = 1;
    for (int d : s) {
      if (d <= 0) throw InternalError("tensor dimension must be positive");
      n *= d;
    }
    return n;
  }

  size_t size() const { return data.size(); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * dim(1) + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * dim(1) + c]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool operator==(const Tensor&) const = default;
};

// Named parameter collection. The order of entries is the canonical flat
// layout used by aggregation, clipping and checkpoints.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  void add(std::string name, Tensor t) {
    names.push_back(std::move(name));
    tensors.push_back(std::move(t));
  }
  size_t flat_size() const {
    size_t n = 0;
    for (const Tensor& t : tensors) n += t.size();
    return n;
  }
  Tensor& operator[](size_t i) { return tensors[i]; }
  const Tensor& operator[](size_t i) const { return tensors[i]; }
  size_t count() const { return tensors.size(); }

  ParamSet zeros_like() const {
    ParamSet out;
    out.names = names;
    out.tensors.reserve(tensors.size());
    for (const Tensor& t : tensors) out.tensors.emplace_back(t.shape);
    return out;
  }

  bool same_layout(const ParamSet& other) const {
    if (names != other.names || tensors.size() != other.tensors.size()) return false;
    for (size_t i = 0; i < tensors.size(); ++i)
      if (!tensors[i].same_shape(other.tensors[i])) return false;
    return true;
  }

  bool operator==(const ParamSet&) const = default;
};

// y += a * x over every coordinate; layouts must match.
void axpy(double a, const ParamSet& x, ParamSet& y);
void scale(double a, ParamSet& x);
double l2_norm(const ParamSet& x);

} // namespace fedtrace
