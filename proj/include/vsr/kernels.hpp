#pragma once

#include <cmath>
#include <cstddef>

#include "vsr/tensor.hpp"

// Pure dense kernels. Every reduction runs left-to-right in index order so a
// result is bit-reproducible and the incremental (one row at a time) paths
// agree with the batched ones.

namespace vsr::kern {

// C[n x q] = A[n x p] * B[p x q]
template <typename T>
void matmul_nn(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& c) {
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  if (b.rows() != p) throw shape_error("matmul: " + shape_str(a.shape) + " x " + shape_str(b.shape));
  c.shape = {n, q};
  c.data.assign(n * q, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a.row_ptr(i);
    T* crow = c.row_ptr(i);
    for (std::size_t k = 0; k < p; ++k) {
      const T av = arow[k];
      const T* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < q; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[n x m] = A[n x p] * B[m x p]^T
template <typename T>
void matmul_nt(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& c) {
  const std::size_t n = a.rows(), p = a.cols(), m = b.rows();
  if (b.cols() != p) throw shape_error("matmul_nt: " + shape_str(a.shape) + " x " + shape_str(b.shape));
  c.shape = {n, m};
  c.data.assign(n * m, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a.row_ptr(i);
    T* crow = c.row_ptr(i);
    for (std::size_t j = 0; j < m; ++j) {
      const T* brow = b.row_ptr(j);
      T acc = T(0);
      for (std::size_t k = 0; k < p; ++k) acc += arow[k] * brow[k];
      crow[j] = acc;
    }
  }
}

// C[p x q] = A[n x p]^T * B[n x q]
template <typename T>
void matmul_tn(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& c) {
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  if (b.rows() != n) throw shape_error("matmul_tn: " + shape_str(a.shape) + " x " + shape_str(b.shape));
  c.shape = {p, q};
  c.data.assign(p * q, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a.row_ptr(i);
    const T* brow = b.row_ptr(i);
    for (std::size_t k = 0; k < p; ++k) {
      const T av = arow[k];
      T* crow = c.data.data() + k * q;
      for (std::size_t j = 0; j < q; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void add_row_inplace(TensorT<T>& x, const TensorT<T>& bias) {
  const std::size_t n = x.rows(), q = x.cols();
  if (bias.numel() != q) throw shape_error("bias length " + std::to_string(bias.numel()) +
                                           " vs cols " + std::to_string(q));
  for (std::size_t i = 0; i < n; ++i) {
    T* row = x.row_ptr(i);
    for (std::size_t j = 0; j < q; ++j) row[j] += bias.data[j];
  }
}

// out[i,j] = sum_k x[i,k] W[k,j] + b[j]
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b) {
  TensorT<T> out;
  matmul_nn(x, w, out);
  if (b) add_row_inplace(out, *b);
  return out;
}

// y[d] = x[d] * W[d x q] + b, single-row form used by the streaming step
template <typename T>
void linear_row(const T* x, const TensorT<T>& w, const TensorT<T>* b, T* y) {
  const std::size_t p = w.rows(), q = w.cols();
  for (std::size_t j = 0; j < q; ++j) y[j] = b ? b->data[j] : T(0);
  for (std::size_t k = 0; k < p; ++k) {
    const T xv = x[k];
    const T* wrow = w.row_ptr(k);
    for (std::size_t j = 0; j < q; ++j) y[j] += xv * wrow[j];
  }
}

// Per-row normalization with population (divide-by-d) variance.
template <typename T>
void layer_norm_row(const T* x, std::size_t d, const T* gamma, const T* beta, T eps, T* y) {
  T mean = T(0);
  for (std::size_t j = 0; j < d; ++j) mean += x[j];
  mean /= static_cast<T>(d);
  T var = T(0);
  for (std::size_t j = 0; j < d; ++j) {
    const T c = x[j] - mean;
    var += c * c;
  }
  var /= static_cast<T>(d);
  const T rstd = T(1) / std::sqrt(var + eps);
  for (std::size_t j = 0; j < d; ++j) y[j] = (x[j] - mean) * rstd * gamma[j] + beta[j];
}

template <typename T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta, T eps) {
  const std::size_t d = x.cols();
  if (gamma.numel() != d || beta.numel() != d) throw shape_error("layer_norm gain/shift length");
  TensorT<T> out;
  out.shape = x.shape;
  out.data.resize(x.data.size());
  for (std::size_t i = 0; i < x.rows(); ++i)
    layer_norm_row(x.row_ptr(i), d, gamma.data.data(), beta.data.data(), eps, out.row_ptr(i));
  return out;
}

// Max-subtracted softmax over a contiguous range, in place.
template <typename T>
void softmax_inplace(T* x, std::size_t n) {
  T mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
  T sum = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    sum += x[i];
  }
  const T inv = T(1) / sum;
  for (std::size_t i = 0; i < n; ++i) x[i] *= inv;
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& x) {
  TensorT<T> out = x;
  softmax_inplace(out.data.data(), out.data.size());
  return out;
}

// -log softmax(logits)[target]
template <typename T>
T cross_entropy(const TensorT<T>& logits, std::size_t target) {
  const std::size_t k = logits.numel();
  if (target >= k) throw index_error("cross_entropy target " + std::to_string(target) +
                                     " out of range " + std::to_string(k));
  const T* x = logits.data.data();
  T mx = x[0];
  for (std::size_t i = 1; i < k; ++i) mx = x[i] > mx ? x[i] : mx;
  T sum = T(0);
  for (std::size_t i = 0; i < k; ++i) sum += std::exp(x[i] - mx);
  return mx + std::log(sum) - x[target];
}

// GPT-style tanh approximation; smooth, exact derivative available.
template <typename T>
T gelu(T x) {
  const T c = T(0.7978845608028654);  // sqrt(2/pi)
  const T u = c * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_grad(T x) {
  const T c = T(0.7978845608028654);
  const T u = c * (x + T(0.044715) * x * x * x);
  const T t = std::tanh(u);
  const T du = c * (T(1) + T(3) * T(0.044715) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

template <typename T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

// Single-query multi-head attention over packed key/value rows.
//   k, v:        [(prefix + real) x d] rows, prefix rows first
//   real_limit:  number of attendable real rows (= all cached rows for a step)
//   prefix_gate: additive score bias on prefix columns
//   probs_out:   optional, heads x (prefix + real_limit) attention weights
template <typename T>
void attend_row(const T* q, const TensorT<T>& k, const TensorT<T>& v, std::size_t d, int heads,
                std::size_t prefix, std::size_t real_limit, T prefix_gate, T* ctx, T* probs_out,
                std::vector<T>* scratch = nullptr) {
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t span = prefix + real_limit;
  std::vector<T> local;
  std::vector<T>& scores = scratch ? *scratch : local;
  scores.resize(span);
  for (int h = 0; h < heads; ++h) {
    const std::size_t base = static_cast<std::size_t>(h) * dh;
    for (std::size_t j = 0; j < span; ++j) {
      const T* krow = k.row_ptr(j) + base;
      T acc = T(0);
      for (std::size_t c = 0; c < dh; ++c) acc += q[base + c] * krow[c];
      scores[j] = acc * inv_sqrt + (j < prefix ? prefix_gate : T(0));
    }
    softmax_inplace(scores.data(), span);
    for (std::size_t c = 0; c < dh; ++c) ctx[base + c] = T(0);
    for (std::size_t j = 0; j < span; ++j) {
      const T p = scores[j];
      const T* vrow = v.row_ptr(j) + base;
      for (std::size_t c = 0; c < dh; ++c) ctx[base + c] += p * vrow[c];
    }
    if (probs_out) {
      T* prow = probs_out + static_cast<std::size_t>(h) * span;
      for (std::size_t j = 0; j < span; ++j) prow[j] = scores[j];
    }
  }
}

}  // namespace vsr::kern
