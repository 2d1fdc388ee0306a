#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vsr/kernels.hpp"
#include "vsr/rng.hpp"
#include "vsr/tensor.hpp"

// Reverse-mode tape. Forward values are computed by the kernels (so recorded
// and non-recorded code paths share one arithmetic), backward closures are
// stored per node and replayed in reverse creation order.
//
// Gradients of a node are materialized only if some ancestor is a trainable
// parameter. backward() clears node gradients first, so calling it repeatedly
// accumulates additively into ParameterT::grad and nothing else.

namespace vsr {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class GraphT {
 public:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;  // empty until first write
    bool needs_grad = false;
    ParameterT<T>* param = nullptr;
    std::vector<int> parents;
    std::function<void(GraphT&, int)> backward_fn;
  };

  bool recording = true;   // false: inference-only graph, no closures kept
  bool train_mode = false; // enables dropout

  Var param(ParameterT<T>& p) {
    Node nd;
    nd.value = p.value;
    nd.param = &p;
    nd.needs_grad = recording && p.trainable;
    nodes_.push_back(std::move(nd));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var constant(TensorT<T> v) {
    Node nd;
    nd.value = std::move(v);
    nodes_.push_back(std::move(nd));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var make_op(TensorT<T> value, std::vector<int> parents,
              std::function<void(GraphT&, int)> bw) {
    Node nd;
    nd.value = std::move(value);
    nd.parents = std::move(parents);
    if (recording) {
      for (int p : nd.parents)
        if (nodes_[p].needs_grad) nd.needs_grad = true;
      if (nd.needs_grad) nd.backward_fn = std::move(bw);
    }
    nodes_.push_back(std::move(nd));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const TensorT<T>& val(Var v) const { return nodes_[v.id].value; }
  Node& node(int id) { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  TensorT<T>& grad_buf(int id) {
    Node& nd = nodes_[id];
    if (nd.grad.data.empty()) nd.grad = TensorT<T>::zeros(nd.value.shape);
    return nd.grad;
  }
  bool has_grad(int id) const { return !nodes_[id].grad.data.empty(); }

  // Propagates d(loss)/d(node) for every recorded node, then (by default)
  // adds leaf gradients into their parameters.
  void backward(Var loss, bool accumulate_into_params = true) {
    if (!recording) throw contract_error("backward on a non-recording graph");
    Node& ln = nodes_[loss.id];
    if (ln.value.numel() != 1) throw contract_error("backward requires a scalar loss");
    for (Node& nd : nodes_) nd.grad.data.clear();
    grad_buf(loss.id).data[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& nd = nodes_[i];
      if (!nd.needs_grad || nd.grad.data.empty() || !nd.backward_fn) continue;
      nd.backward_fn(*this, i);
    }
    if (accumulate_into_params) accumulate_param_grads();
  }

  // Separate so a multi-sample trainer can run backward passes concurrently
  // and still add into shared parameters in a fixed order.
  void accumulate_param_grads() {
    for (Node& nd : nodes_) {
      if (!nd.param || !nd.param->trainable || nd.grad.data.empty()) continue;
      auto& g = nd.param->grad.data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad.data[i];
    }
  }

 private:
  std::vector<Node> nodes_;
};

namespace ag {

template <typename T>
void add_into(TensorT<T>& dst, const TensorT<T>& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

// ---- linear algebra ----

template <typename T>
Var matmul(GraphT<T>& g, Var a, Var b) {
  TensorT<T> out;
  kern::matmul_nn(g.val(a), g.val(b), out);
  return g.make_op(std::move(out), {a.id, b.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    const auto& dy = nd.grad;
    const int ai = nd.parents[0], bi = nd.parents[1];
    if (gg.node(ai).needs_grad) {
      TensorT<T> da;
      kern::matmul_nt(dy, gg.node(bi).value, da);
      add_into(gg.grad_buf(ai), da);
    }
    if (gg.node(bi).needs_grad) {
      TensorT<T> db;
      kern::matmul_tn(gg.node(ai).value, dy, db);
      add_into(gg.grad_buf(bi), db);
    }
  });
}

// a [n x p] * b[m x p]^T
template <typename T>
Var matmul_nt(GraphT<T>& g, Var a, Var b) {
  TensorT<T> out;
  kern::matmul_nt(g.val(a), g.val(b), out);
  return g.make_op(std::move(out), {a.id, b.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    const auto& dy = nd.grad;
    const int ai = nd.parents[0], bi = nd.parents[1];
    if (gg.node(ai).needs_grad) {
      TensorT<T> da;
      kern::matmul_nn(dy, gg.node(bi).value, da);
      add_into(gg.grad_buf(ai), da);
    }
    if (gg.node(bi).needs_grad) {
      TensorT<T> db;
      kern::matmul_tn(dy, gg.node(ai).value, db);
      add_into(gg.grad_buf(bi), db);
    }
  });
}

template <typename T>
Var linear(GraphT<T>& g, Var x, Var w, Var b) {
  TensorT<T> out = kern::linear(g.val(x), g.val(w), b.valid() ? &g.val(b) : nullptr);
  std::vector<int> parents = {x.id, w.id};
  if (b.valid()) parents.push_back(b.id);
  return g.make_op(std::move(out), std::move(parents), [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    const auto& dy = nd.grad;
    const int xi = nd.parents[0], wi = nd.parents[1];
    if (gg.node(xi).needs_grad) {
      TensorT<T> dx;
      kern::matmul_nt(dy, gg.node(wi).value, dx);
      add_into(gg.grad_buf(xi), dx);
    }
    if (gg.node(wi).needs_grad) {
      TensorT<T> dw;
      kern::matmul_tn(gg.node(xi).value, dy, dw);
      add_into(gg.grad_buf(wi), dw);
    }
    if (nd.parents.size() > 2 && gg.node(nd.parents[2]).needs_grad) {
      auto& db = gg.grad_buf(nd.parents[2]);
      const std::size_t n = dy.rows(), q = dy.cols();
      for (std::size_t i = 0; i < n; ++i) {
        const T* row = dy.row_ptr(i);
        for (std::size_t j = 0; j < q; ++j) db.data[j] += row[j];
      }
    }
  });
}

// ---- pointwise ----

template <typename T>
Var add(GraphT<T>& g, Var a, Var b) {
  if (!g.val(a).same_shape(g.val(b)))
    throw shape_error("add: " + shape_str(g.val(a).shape) + " vs " + shape_str(g.val(b).shape));
  TensorT<T> out = g.val(a);
  add_into(out, g.val(b));
  return g.make_op(std::move(out), {a.id, b.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    for (int p : nd.parents)
      if (gg.node(p).needs_grad) add_into(gg.grad_buf(p), nd.grad);
  });
}

template <typename T>
Var sub(GraphT<T>& g, Var a, Var b) {
  if (!g.val(a).same_shape(g.val(b))) throw shape_error("sub shape mismatch");
  TensorT<T> out = g.val(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= g.val(b).data[i];
  return g.make_op(std::move(out), {a.id, b.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (gg.node(nd.parents[0]).needs_grad) add_into(gg.grad_buf(nd.parents[0]), nd.grad);
    if (gg.node(nd.parents[1]).needs_grad) {
      auto& db = gg.grad_buf(nd.parents[1]);
      for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] -= nd.grad.data[i];
    }
  });
}

template <typename T>
Var mul(GraphT<T>& g, Var a, Var b) {
  if (!g.val(a).same_shape(g.val(b))) throw shape_error("mul shape mismatch");
  TensorT<T> out = g.val(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= g.val(b).data[i];
  return g.make_op(std::move(out), {a.id, b.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    const int ai = nd.parents[0], bi = nd.parents[1];
    if (gg.node(ai).needs_grad) {
      auto& da = gg.grad_buf(ai);
      const auto& bv = gg.node(bi).value;
      for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += nd.grad.data[i] * bv.data[i];
    }
    if (gg.node(bi).needs_grad) {
      auto& db = gg.grad_buf(bi);
      const auto& av = gg.node(ai).value;
      for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] += nd.grad.data[i] * av.data[i];
    }
  });
}

template <typename T>
Var div(GraphT<T>& g, Var a, Var b) {
  if (!g.val(a).same_shape(g.val(b))) throw shape_error("div shape mismatch");
  TensorT<T> out = g.val(a);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= g.val(b).data[i];
  return g.make_op(std::move(out), {a.id, b.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    const int ai = nd.parents[0], bi = nd.parents[1];
    const auto& av = gg.node(ai).value;
    const auto& bv = gg.node(bi).value;
    if (gg.node(ai).needs_grad) {
      auto& da = gg.grad_buf(ai);
      for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += nd.grad.data[i] / bv.data[i];
    }
    if (gg.node(bi).needs_grad) {
      auto& db = gg.grad_buf(bi);
      for (std::size_t i = 0; i < db.data.size(); ++i)
        db.data[i] -= nd.grad.data[i] * av.data[i] / (bv.data[i] * bv.data[i]);
    }
  });
}

template <typename T>
Var scale(GraphT<T>& g, Var a, T c) {
  TensorT<T> out = g.val(a);
  for (T& v : out.data) v *= c;
  return g.make_op(std::move(out), {a.id}, [c](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (!gg.node(nd.parents[0]).needs_grad) return;
    auto& da = gg.grad_buf(nd.parents[0]);
    for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += c * nd.grad.data[i];
  });
}

template <typename T>
Var add_const(GraphT<T>& g, Var a, T c) {
  TensorT<T> out = g.val(a);
  for (T& v : out.data) v += c;
  return g.make_op(std::move(out), {a.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (gg.node(nd.parents[0]).needs_grad) add_into(gg.grad_buf(nd.parents[0]), nd.grad);
  });
}

template <typename T>
Var gelu(GraphT<T>& g, Var a) {
  TensorT<T> out = g.val(a);
  for (T& v : out.data) v = kern::gelu(v);
  return g.make_op(std::move(out), {a.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (!gg.node(nd.parents[0]).needs_grad) return;
    auto& da = gg.grad_buf(nd.parents[0]);
    const auto& x = gg.node(nd.parents[0]).value;
    for (std::size_t i = 0; i < da.data.size(); ++i)
      da.data[i] += nd.grad.data[i] * kern::gelu_grad(x.data[i]);
  });
}

template <typename T>
Var relu(GraphT<T>& g, Var a) {
  TensorT<T> out = g.val(a);
  for (T& v : out.data) v = v > T(0) ? v : T(0);
  return g.make_op(std::move(out), {a.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (!gg.node(nd.parents[0]).needs_grad) return;
    auto& da = gg.grad_buf(nd.parents[0]);
    const auto& x = gg.node(nd.parents[0]).value;
    for (std::size_t i = 0; i < da.data.size(); ++i)
      if (x.data[i] > T(0)) da.data[i] += nd.grad.data[i];
  });
}

template <typename T>
Var sigmoid(GraphT<T>& g, Var a) {
  TensorT<T> out = g.val(a);
  for (T& v : out.data) v = kern::sigmoid(v);
  return g.make_op(std::move(out), {a.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (!gg.node(nd.parents[0]).needs_grad) return;
    auto& da = gg.grad_buf(nd.parents[0]);
    const auto& y = nd.value;
    for (std::size_t i = 0; i < da.data.size(); ++i)
      da.data[i] += nd.grad.data[i] * y.data[i] * (T(1) - y.data[i]);
  });
}

template <typename T>
Var abs_(GraphT<T>& g, Var a) {
  TensorT<T> out = g.val(a);
  for (T& v : out.data) v = v < T(0) ? -v : v;
  return g.make_op(std::move(out), {a.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (!gg.node(nd.parents[0]).needs_grad) return;
    auto& da = gg.grad_buf(nd.parents[0]);
    const auto& x = gg.node(nd.parents[0]).value;
    for (std::size_t i = 0; i < da.data.size(); ++i) {
      if (x.data[i] > T(0)) da.data[i] += nd.grad.data[i];
      else if (x.data[i] < T(0)) da.data[i] -= nd.grad.data[i];
    }
  });
}

// Elementwise min/max; ties route the subgradient to the first operand.
template <typename T>
Var min_(GraphT<T>& g, Var a, Var b) {
  TensorT<T> out = g.val(a);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = out.data[i] <= g.val(b).data[i] ? out.data[i] : g.val(b).data[i];
  return g.make_op(std::move(out), {a.id, b.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    const auto& av = gg.node(nd.parents[0]).value;
    const auto& bv = gg.node(nd.parents[1]).value;
    for (std::size_t i = 0; i < av.data.size(); ++i) {
      const int target = av.data[i] <= bv.data[i] ? nd.parents[0] : nd.parents[1];
      if (gg.node(target).needs_grad) gg.grad_buf(target).data[i] += nd.grad.data[i];
    }
  });
}

template <typename T>
Var max_(GraphT<T>& g, Var a, Var b) {
  TensorT<T> out = g.val(a);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = out.data[i] >= g.val(b).data[i] ? out.data[i] : g.val(b).data[i];
  return g.make_op(std::move(out), {a.id, b.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    const auto& av = gg.node(nd.parents[0]).value;
    const auto& bv = gg.node(nd.parents[1]).value;
    for (std::size_t i = 0; i < av.data.size(); ++i) {
      const int target = av.data[i] >= bv.data[i] ? nd.parents[0] : nd.parents[1];
      if (gg.node(target).needs_grad) gg.grad_buf(target).data[i] += nd.grad.data[i];
    }
  });
}

template <typename T>
Var sum_all(GraphT<T>& g, Var a) {
  T acc = T(0);
  for (T v : g.val(a).data) acc += v;
  TensorT<T> out({std::size_t(1), std::size_t(1)}, acc);
  return g.make_op(std::move(out), {a.id}, [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (!gg.node(nd.parents[0]).needs_grad) return;
    auto& da = gg.grad_buf(nd.parents[0]);
    for (T& v : da.data) v += nd.grad.data[0];
  });
}

// ---- structure ----

template <typename T>
Var concat_rows(GraphT<T>& g, const std::vector<Var>& parts) {
  if (parts.empty()) throw argument_error("concat_rows: empty");
  const std::size_t c = g.val(parts[0]).cols();
  std::size_t total = 0;
  for (Var p : parts) {
    if (g.val(p).cols() != c) throw shape_error("concat_rows column mismatch");
    total += g.val(p).rows();
  }
  TensorT<T> out({total, c});
  std::size_t r = 0;
  std::vector<int> parents;
  for (Var p : parts) {
    const auto& v = g.val(p);
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + r * c);
    r += v.rows();
    parents.push_back(p.id);
  }
  return g.make_op(std::move(out), std::move(parents), [](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    const std::size_t c2 = nd.value.cols();
    std::size_t row = 0;
    for (int p : nd.parents) {
      const std::size_t pr = gg.node(p).value.rows();
      if (gg.node(p).needs_grad) {
        auto& dp = gg.grad_buf(p);
        for (std::size_t i = 0; i < pr * c2; ++i) dp.data[i] += nd.grad.data[row * c2 + i];
      }
      row += pr;
    }
  });
}

template <typename T>
Var slice_rows(GraphT<T>& g, Var a, std::size_t r0, std::size_t r1) {
  const auto& v = g.val(a);
  if (r1 > v.rows() || r0 > r1) throw index_error("slice_rows range");
  const std::size_t c = v.cols();
  TensorT<T> out({r1 - r0, c});
  std::copy(v.data.begin() + r0 * c, v.data.begin() + r1 * c, out.data.begin());
  return g.make_op(std::move(out), {a.id}, [r0](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (!gg.node(nd.parents[0]).needs_grad) return;
    auto& da = gg.grad_buf(nd.parents[0]);
    const std::size_t c2 = nd.value.cols();
    for (std::size_t i = 0; i < nd.value.numel(); ++i) da.data[r0 * c2 + i] += nd.grad.data[i];
  });
}

template <typename T>
Var row(GraphT<T>& g, Var a, std::size_t i) {
  return slice_rows(g, a, i, i + 1);
}

// Row lookup into an embedding table; backward scatter-adds.
template <typename T>
Var embedding(GraphT<T>& g, Var table, const std::vector<int>& ids) {
  const auto& tb = g.val(table);
  const std::size_t d = tb.cols();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= tb.rows())
      throw index_error("embedding id " + std::to_string(id) + " out of range " +
                        std::to_string(tb.rows()));
  TensorT<T> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(tb.row_ptr(ids[i]), tb.row_ptr(ids[i]) + d, out.row_ptr(i));
  return g.make_op(std::move(out), {table.id}, [ids](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (!gg.node(nd.parents[0]).needs_grad) return;
    auto& dt = gg.grad_buf(nd.parents[0]);
    const std::size_t d2 = nd.value.cols();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d2; ++j)
        dt.data[static_cast<std::size_t>(ids[i]) * d2 + j] += nd.grad.data[i * d2 + j];
  });
}

// ---- normalization / attention / losses ----

template <typename T>
Var layer_norm(GraphT<T>& g, Var x, Var gamma, Var beta, T eps) {
  const auto& xv = g.val(x);
  const std::size_t n = xv.rows(), d = xv.cols();
  if (g.val(gamma).numel() != d || g.val(beta).numel() != d)
    throw shape_error("layer_norm gain/shift length");
  auto stats = std::make_shared<std::vector<T>>(2 * n);  // mean, rstd per row
  TensorT<T> out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const T* xr = xv.row_ptr(i);
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      const T c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T rstd = T(1) / std::sqrt(var + eps);
    (*stats)[2 * i] = mean;
    (*stats)[2 * i + 1] = rstd;
    T* yr = out.row_ptr(i);
    const auto& gm = g.val(gamma);
    const auto& bt = g.val(beta);
    for (std::size_t j = 0; j < d; ++j) yr[j] = (xr[j] - mean) * rstd * gm.data[j] + bt.data[j];
  }
  return g.make_op(std::move(out), {x.id, gamma.id, beta.id},
                   [stats](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    const int xi = nd.parents[0], gi = nd.parents[1], bi = nd.parents[2];
    const auto& xv2 = gg.node(xi).value;
    const auto& gm = gg.node(gi).value;
    const std::size_t n2 = xv2.rows(), d2 = xv2.cols();
    const bool want_x = gg.node(xi).needs_grad;
    const bool want_g = gg.node(gi).needs_grad;
    const bool want_b = gg.node(bi).needs_grad;
    for (std::size_t i = 0; i < n2; ++i) {
      const T mean = (*stats)[2 * i];
      const T rstd = (*stats)[2 * i + 1];
      const T* xr = xv2.row_ptr(i);
      const T* dyr = nd.grad.row_ptr(i);
      if (want_g || want_b) {
        for (std::size_t j = 0; j < d2; ++j) {
          const T xhat = (xr[j] - mean) * rstd;
          if (want_g) gg.grad_buf(gi).data[j] += dyr[j] * xhat;
          if (want_b) gg.grad_buf(bi).data[j] += dyr[j];
        }
      }
      if (want_x) {
        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
        for (std::size_t j = 0; j < d2; ++j) {
          const T xhat = (xr[j] - mean) * rstd;
          const T dxhat = dyr[j] * gm.data[j];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
        const T inv_d = T(1) / static_cast<T>(d2);
        auto& dx = gg.grad_buf(xi);
        for (std::size_t j = 0; j < d2; ++j) {
          const T xhat = (xr[j] - mean) * rstd;
          const T dxhat = dyr[j] * gm.data[j];
          dx.data[i * d2 + j] += rstd * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
        }
      }
    }
  });
}

// Fused multi-head attention.
//   q:      [t x d] query rows (real tokens only)
//   k, v:   [(prefix + t) x d], prefix rows first
//   causal: query i attends prefix rows plus real rows 0..i; otherwise all rows
//   gate:   additive score bias on prefix columns (constant)
// Attention probabilities are kept for the backward pass.
template <typename T>
Var attention(GraphT<T>& g, Var q, Var k, Var v, int heads, std::size_t prefix, bool causal,
              T gate) {
  const auto& qv = g.val(q);
  const auto& kv = g.val(k);
  const auto& vv = g.val(v);
  const std::size_t t = qv.rows(), d = qv.cols();
  if (kv.rows() != prefix + t || vv.rows() != prefix + t)
    throw shape_error("attention: key/value rows " + std::to_string(kv.rows()) +
                      " != prefix + queries " + std::to_string(prefix + t));
  if (d % static_cast<std::size_t>(heads) != 0) throw shape_error("hidden not divisible by heads");

  struct Saved {
    std::vector<T> probs;             // ragged: per row, heads x span(row)
    std::vector<std::size_t> offset;  // per row start into probs
    std::vector<std::size_t> span;
  };
  auto saved = std::make_shared<Saved>();
  saved->offset.resize(t);
  saved->span.resize(t);
  std::size_t total = 0;
  for (std::size_t i = 0; i < t; ++i) {
    saved->offset[i] = total;
    saved->span[i] = prefix + (causal ? i + 1 : t);
    total += static_cast<std::size_t>(heads) * saved->span[i];
  }
  saved->probs.resize(total);

  TensorT<T> out({t, d});
  std::vector<T> scratch;
  for (std::size_t i = 0; i < t; ++i) {
    kern::attend_row(qv.row_ptr(i), kv, vv, d, heads, prefix, saved->span[i] - prefix, gate,
                     out.row_ptr(i), saved->probs.data() + saved->offset[i], &scratch);
  }

  return g.make_op(std::move(out), {q.id, k.id, v.id}, [heads, prefix, saved](GraphT<T>& gg,
                                                                              int self) {
    auto& nd = gg.node(self);
    const int qi = nd.parents[0], ki = nd.parents[1], vi = nd.parents[2];
    const auto& qv2 = gg.node(qi).value;
    const auto& kv2 = gg.node(ki).value;
    const auto& vv2 = gg.node(vi).value;
    const std::size_t t2 = qv2.rows(), d2 = qv2.cols();
    const std::size_t dh = d2 / static_cast<std::size_t>(heads);
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    const bool want_q = gg.node(qi).needs_grad;
    const bool want_k = gg.node(ki).needs_grad;
    const bool want_v = gg.node(vi).needs_grad;
    TensorT<T>* dq = want_q ? &gg.grad_buf(qi) : nullptr;
    TensorT<T>* dk = want_k ? &gg.grad_buf(ki) : nullptr;
    TensorT<T>* dv = want_v ? &gg.grad_buf(vi) : nullptr;
    std::vector<T> dp, ds;
    for (std::size_t i = 0; i < t2; ++i) {
      const std::size_t span = saved->span[i];
      const T* dyr = nd.grad.row_ptr(i);
      for (int h = 0; h < heads; ++h) {
        const std::size_t base = static_cast<std::size_t>(h) * dh;
        const T* p = saved->probs.data() + saved->offset[i] + static_cast<std::size_t>(h) * span;
        dp.assign(span, T(0));
        for (std::size_t j = 0; j < span; ++j) {
          const T* vrow = vv2.row_ptr(j) + base;
          T acc = T(0);
          for (std::size_t c = 0; c < dh; ++c) acc += dyr[base + c] * vrow[c];
          dp[j] = acc;
        }
        T dot = T(0);
        for (std::size_t j = 0; j < span; ++j) dot += p[j] * dp[j];
        ds.assign(span, T(0));
        for (std::size_t j = 0; j < span; ++j) ds[j] = p[j] * (dp[j] - dot);
        if (dq) {
          T* dqr = dq->row_ptr(i) + base;
          for (std::size_t j = 0; j < span; ++j) {
            const T s = ds[j] * inv_sqrt;
            const T* krow = kv2.row_ptr(j) + base;
            for (std::size_t c = 0; c < dh; ++c) dqr[c] += s * krow[c];
          }
        }
        if (dk) {
          const T* qr = qv2.row_ptr(i) + base;
          for (std::size_t j = 0; j < span; ++j) {
            const T s = ds[j] * inv_sqrt;
            T* dkr = dk->row_ptr(j) + base;
            for (std::size_t c = 0; c < dh; ++c) dkr[c] += s * qr[c];
          }
        }
        if (dv) {
          for (std::size_t j = 0; j < span; ++j) {
            T* dvr = dv->row_ptr(j) + base;
            for (std::size_t c = 0; c < dh; ++c) dvr[c] += p[j] * dyr[base + c];
          }
        }
        (void)prefix;
      }
    }
  });
}

// Mean cross-entropy over rows; target -1 masks a row out.
template <typename T>
Var ce_rows(GraphT<T>& g, Var logits, const std::vector<int>& targets) {
  const auto& lv = g.val(logits);
  const std::size_t n = lv.rows(), kcls = lv.cols();
  if (targets.size() != n) throw shape_error("ce_rows target count");
  auto probs = std::make_shared<TensorT<T>>(std::vector<std::size_t>{n, kcls});
  std::size_t count = 0;
  T loss = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] < 0) continue;
    if (static_cast<std::size_t>(targets[i]) >= kcls)
      throw index_error("ce_rows target " + std::to_string(targets[i]));
    const T* x = lv.row_ptr(i);
    T mx = x[0];
    for (std::size_t j = 1; j < kcls; ++j) mx = x[j] > mx ? x[j] : mx;
    T sum = T(0);
    T* pr = probs->row_ptr(i);
    for (std::size_t j = 0; j < kcls; ++j) {
      pr[j] = std::exp(x[j] - mx);
      sum += pr[j];
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < kcls; ++j) pr[j] *= inv;
    loss += mx + std::log(sum) - x[targets[i]];
    ++count;
  }
  if (count == 0) throw argument_error("ce_rows: every row masked");
  loss /= static_cast<T>(count);
  TensorT<T> out({std::size_t(1), std::size_t(1)}, loss);
  return g.make_op(std::move(out), {logits.id}, [targets, probs, count](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (!gg.node(nd.parents[0]).needs_grad) return;
    auto& dl = gg.grad_buf(nd.parents[0]);
    const T go = nd.grad.data[0] / static_cast<T>(count);
    const std::size_t kcls2 = probs->cols();
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i] < 0) continue;
      const T* pr = probs->row_ptr(i);
      T* dr = dl.row_ptr(i);
      for (std::size_t j = 0; j < kcls2; ++j) dr[j] += go * pr[j];
      dr[static_cast<std::size_t>(targets[i])] -= go;
    }
  });
}

// Mean binary cross-entropy on logits; mask 0 drops a row.
template <typename T>
Var bce_rows(GraphT<T>& g, Var logits, const std::vector<T>& targets,
             const std::vector<int>& mask) {
  const auto& lv = g.val(logits);
  const std::size_t n = lv.numel();
  if (targets.size() != n || mask.size() != n) throw shape_error("bce_rows target count");
  std::size_t count = 0;
  T loss = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const T x = lv.data[i];
    const T t = targets[i];
    loss += (x > T(0) ? x : T(0)) - x * t + std::log1p(std::exp(-(x < T(0) ? -x : x)));
    ++count;
  }
  if (count == 0) throw argument_error("bce_rows: every row masked");
  loss /= static_cast<T>(count);
  TensorT<T> out({std::size_t(1), std::size_t(1)}, loss);
  return g.make_op(std::move(out), {logits.id}, [targets, mask, count](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (!gg.node(nd.parents[0]).needs_grad) return;
    auto& dl = gg.grad_buf(nd.parents[0]);
    const auto& lv2 = gg.node(nd.parents[0]).value;
    const T go = nd.grad.data[0] / static_cast<T>(count);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (!mask[i]) continue;
      dl.data[i] += go * (kern::sigmoid(lv2.data[i]) - targets[i]);
    }
  });
}

// Inverted dropout; identity unless the graph is in train mode.
template <typename T>
Var dropout(GraphT<T>& g, Var x, T rate, Rng& rng) {
  if (!g.train_mode || rate <= T(0)) return x;
  const auto& xv = g.val(x);
  auto mask = std::make_shared<std::vector<T>>(xv.numel());
  const T keep = T(1) - rate;
  const T inv_keep = T(1) / keep;
  TensorT<T> out = xv;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const T m = static_cast<T>(rng.uniform()) < keep ? inv_keep : T(0);
    (*mask)[i] = m;
    out.data[i] *= m;
  }
  return g.make_op(std::move(out), {x.id}, [mask](GraphT<T>& gg, int self) {
    auto& nd = gg.node(self);
    if (!gg.node(nd.parents[0]).needs_grad) return;
    auto& dx = gg.grad_buf(nd.parents[0]);
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += nd.grad.data[i] * (*mask)[i];
  });
}

template <typename T>
Var sum_list(GraphT<T>& g, const std::vector<Var>& terms) {
  if (terms.empty()) throw argument_error("sum_list: empty");
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(g, acc, terms[i]);
  return acc;
}

}  // namespace ag

using Graph = GraphT<float>;
using GraphD = GraphT<double>;

}  // namespace vsr
