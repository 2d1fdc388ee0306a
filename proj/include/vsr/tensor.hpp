#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "vsr/errors.hpp"

namespace vsr {

// Dense row-major array. Training and inference run at float; the gradient
// checker instantiates the same code at double.
template <typename T>
struct TensorT {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  TensorT() = default;
  TensorT(std::vector<std::size_t> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
  }

  static TensorT zeros(std::vector<std::size_t> s) { return TensorT(std::move(s)); }

  static TensorT from_rows(std::size_t r, std::size_t c, std::vector<T> d) {
    TensorT t;
    t.shape = {r, c};
    if (d.size() != r * c) throw shape_error("from_rows: data length " + std::to_string(d.size()) +
                                             " != " + std::to_string(r * c));
    t.data = std::move(d);
    return t;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }

  std::size_t rows() const {
    if (shape.empty()) return 1;
    return shape[0];
  }
  std::size_t cols() const {
    if (shape.size() < 2) return shape.empty() ? 1 : shape[0];
    return shape[1];
  }

  T& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  T* row_ptr(std::size_t i) { return data.data() + i * cols(); }
  const T* row_ptr(std::size_t i) const { return data.data() + i * cols(); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

template <typename From, typename To>
TensorT<To> cast_tensor(const TensorT<From>& a) {
  TensorT<To> out;
  out.shape = a.shape;
  out.data.resize(a.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = static_cast<To>(a.data[i]);
  return out;
}

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) r += "x";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

// A learnable quantity: value, accumulated gradient of the same shape, and a
// trainable flag set by the tuning partition.
template <typename T>
struct ParameterT {
  TensorT<T> value;
  TensorT<T> grad;
  bool trainable = true;

  ParameterT() = default;
  explicit ParameterT(TensorT<T> v) : value(std::move(v)) { grad = TensorT<T>::zeros(value.shape); }

  void reset_grad() { grad.fill(T(0)); }
  std::size_t numel() const { return value.numel(); }
};

using Tensor = TensorT<float>;
using Parameter = ParameterT<float>;

}  // namespace vsr
