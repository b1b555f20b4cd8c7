// SPDX-License-Identifier: Apache-2.0
#include "prodembed/tape.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace prodembed::num {

namespace {
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

MapC mat(const Tensor& t) { return MapC(t.data(), t.rows(), t.cols()); }
MapM mat(Tensor& t) { return MapM(t.data(), t.rows(), t.cols()); }
MapC block(const Tensor& t, std::int64_t row0, std::int64_t nrows) {
  return MapC(t.data() + row0 * t.cols(), nrows, t.cols());
}
MapM block(Tensor& t, std::int64_t row0, std::int64_t nrows) {
  return MapM(t.data() + row0 * t.cols(), nrows, t.cols());
}
}  // namespace

void GradTape::check(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("GradTape: invalid var");
}

Tensor& GradTape::grad_buf(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_alloced) {
    n.grad = Tensor(val(id).shape());
    n.grad_alloced = true;
  }
  return n.grad;
}

GradTape::Var GradTape::param(Tensor* storage) {
  if (storage == nullptr || storage->empty()) throw std::invalid_argument("GradTape::param: null/empty tensor");
  auto it = param_ids_.find(storage);
  if (it != param_ids_.end()) {
    if (!nodes_[static_cast<std::size_t>(it->second)].needs_grad)
      throw std::logic_error("GradTape::param: tensor already registered as read-only input");
    return Var{it->second};
  }
  Node n;
  n.external = storage;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_ids_.emplace(storage, id);
  return Var{id};
}

GradTape::Var GradTape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

GradTape::Var GradTape::input(const Tensor* storage) {
  if (storage == nullptr || storage->empty()) throw std::invalid_argument("GradTape::input: null/empty tensor");
  auto it = param_ids_.find(storage);
  if (it != param_ids_.end()) return Var{it->second};
  Node n;
  n.external = storage;
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_ids_.emplace(storage, id);
  return Var{id};
}

const Tensor& GradTape::value(Var v) const {
  check(v);
  return val(v.id);
}

double GradTape::scalar_value(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw std::invalid_argument("GradTape::scalar_value: not a scalar");
  return t[0];
}

bool GradTape::has_grad(Var v) const {
  check(v);
  return nodes_[static_cast<std::size_t>(v.id)].grad_alloced;
}

const Tensor& GradTape::grad(Var v) const {
  check(v);
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.grad_alloced) throw std::logic_error("GradTape::grad: no gradient recorded (call backward first)");
  return n.grad;
}

#define PE_EMIT_NODE(VALUE, NEEDS, BACK)                          \
  do {                                                            \
    Node nn;                                                      \
    nn.value = (VALUE);                                           \
    nn.needs_grad = (NEEDS);                                      \
    if (nn.needs_grad) nn.back = (BACK);                          \
    nodes_.push_back(std::move(nn));                              \
    return Var{static_cast<int>(nodes_.size()) - 1};              \
  } while (0)

GradTape::Var GradTape::lookup(Var table, std::vector<int> indices) {
  check(table);
  const Tensor& tb = val(table.id);
  const int d = tb.cols();
  const std::int64_t vrows = tb.rows();
  Tensor out({static_cast<int>(indices.size()), d});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int idx = indices[r];
    if (idx < 0 || idx >= vrows) throw std::invalid_argument("lookup: index out of range");
    std::copy_n(tb.data() + static_cast<std::int64_t>(idx) * d, d, out.data() + static_cast<std::int64_t>(r) * d);
  }
  const int tid = table.id;
  auto idx = std::make_shared<std::vector<int>>(std::move(indices));
  PE_EMIT_NODE(std::move(out), needs(table), ([tid, idx](GradTape& t, int self) {
                 const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
                 Tensor& gt = t.grad_buf(tid);
                 const int d2 = gt.cols();
                 for (std::size_t r = 0; r < idx->size(); ++r) {
                   double* dst = gt.data() + static_cast<std::int64_t>((*idx)[r]) * d2;
                   const double* src = g.data() + static_cast<std::int64_t>(r) * d2;
                   for (int c = 0; c < d2; ++c) dst[c] += src[c];
                 }
               }));
}

GradTape::Var GradTape::gather_rows(Var x, std::vector<int> rows) { return lookup(x, std::move(rows)); }

GradTape::Var GradTape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  check(a);
  check(b);
  if (trans_a && trans_b) throw std::invalid_argument("matmul: double transpose unsupported");
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  const std::int64_t m = trans_a ? A.cols() : A.rows();
  const std::int64_t ka = trans_a ? A.rows() : A.cols();
  const std::int64_t kb = trans_b ? B.cols() : B.rows();
  const std::int64_t n = trans_b ? B.rows() : B.cols();
  if (ka != kb)
    throw std::invalid_argument("matmul: inner dims mismatch " + A.shape_str() + " x " + B.shape_str());
  Tensor out({static_cast<int>(m), static_cast<int>(n)});
  if (!trans_a && !trans_b)
    mat(out).noalias() = mat(A) * mat(B);
  else if (!trans_a && trans_b)
    mat(out).noalias() = mat(A) * mat(B).transpose();
  else
    mat(out).noalias() = mat(A).transpose() * mat(B);
  const int ida = a.id, idb = b.id;
  const bool na = needs(a), nb = needs(b);
  PE_EMIT_NODE(std::move(out), na || nb, ([ida, idb, trans_a, trans_b, na, nb](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 const Tensor& A2 = t.val(ida);
                 const Tensor& B2 = t.val(idb);
                 if (!trans_a && !trans_b) {
                   if (na) mat(t.grad_buf(ida)).noalias() += mat(G) * mat(B2).transpose();
                   if (nb) mat(t.grad_buf(idb)).noalias() += mat(A2).transpose() * mat(G);
                 } else if (!trans_a && trans_b) {
                   if (na) mat(t.grad_buf(ida)).noalias() += mat(G) * mat(B2);
                   if (nb) mat(t.grad_buf(idb)).noalias() += mat(G).transpose() * mat(A2);
                 } else {
                   if (na) mat(t.grad_buf(ida)).noalias() += mat(B2) * mat(G).transpose();
                   if (nb) mat(t.grad_buf(idb)).noalias() += mat(A2) * mat(G);
                 }
               }));
}

GradTape::Var GradTape::add(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
  Tensor out(A.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  const int ida = a.id, idb = b.id;
  const bool na = needs(a), nb = needs(b);
  PE_EMIT_NODE(std::move(out), na || nb, ([ida, idb, na, nb](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 if (na) {
                   Tensor& ga = t.grad_buf(ida);
                   for (std::int64_t i = 0; i < G.size(); ++i) ga[i] += G[i];
                 }
                 if (nb) {
                   Tensor& gb = t.grad_buf(idb);
                   for (std::int64_t i = 0; i < G.size(); ++i) gb[i] += G[i];
                 }
               }));
}

GradTape::Var GradTape::add_bias(Var x, Var bias) {
  check(x);
  check(bias);
  const Tensor& X = val(x.id);
  const Tensor& B = val(bias.id);
  if (B.size() != X.cols()) throw std::invalid_argument("add_bias: bias length mismatch");
  Tensor out(X.shape());
  const int d = X.cols();
  for (std::int64_t r = 0; r < X.rows(); ++r)
    for (int c = 0; c < d; ++c) out[r * d + c] = X[r * d + c] + B[c];
  const int idx = x.id, idb = bias.id;
  const bool nx = needs(x), nb = needs(bias);
  PE_EMIT_NODE(std::move(out), nx || nb, ([idx, idb, nx, nb, d](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 if (nx) {
                   Tensor& gx = t.grad_buf(idx);
                   for (std::int64_t i = 0; i < G.size(); ++i) gx[i] += G[i];
                 }
                 if (nb) {
                   Tensor& gb = t.grad_buf(idb);
                   for (std::int64_t r = 0; r < G.rows(); ++r)
                     for (int c = 0; c < d; ++c) gb[c] += G[r * d + c];
                 }
               }));
}

GradTape::Var GradTape::scale(Var x, double c) {
  check(x);
  const Tensor& X = val(x.id);
  Tensor out(X.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = X[i] * c;
  const int idx = x.id;
  PE_EMIT_NODE(std::move(out), needs(x), ([idx, c](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 Tensor& gx = t.grad_buf(idx);
                 for (std::int64_t i = 0; i < G.size(); ++i) gx[i] += c * G[i];
               }));
}

GradTape::Var GradTape::mul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  if (!A.same_shape(B)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out(A.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  const int ida = a.id, idb = b.id;
  const bool na = needs(a), nb = needs(b);
  PE_EMIT_NODE(std::move(out), na || nb, ([ida, idb, na, nb](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 const Tensor& A2 = t.val(ida);
                 const Tensor& B2 = t.val(idb);
                 if (na) {
                   Tensor& ga = t.grad_buf(ida);
                   for (std::int64_t i = 0; i < G.size(); ++i) ga[i] += B2[i] * G[i];
                 }
                 if (nb) {
                   Tensor& gb = t.grad_buf(idb);
                   for (std::int64_t i = 0; i < G.size(); ++i) gb[i] += A2[i] * G[i];
                 }
               }));
}

GradTape::Var GradTape::relu(Var x) {
  check(x);
  const Tensor& X = val(x.id);
  Tensor out(X.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
  const int idx = x.id;
  PE_EMIT_NODE(std::move(out), needs(x), ([idx](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 const Tensor& X2 = t.val(idx);
                 Tensor& gx = t.grad_buf(idx);
                 for (std::int64_t i = 0; i < G.size(); ++i)
                   if (X2[i] > 0.0) gx[i] += G[i];
               }));
}

GradTape::Var GradTape::tanh(Var x) {
  check(x);
  const Tensor& X = val(x.id);
  Tensor out(X.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(X[i]);
  const int idx = x.id;
  PE_EMIT_NODE(std::move(out), needs(x), ([idx](GradTape& t, int self) {
                 const Node& n = t.nodes_[static_cast<std::size_t>(self)];
                 Tensor& gx = t.grad_buf(idx);
                 for (std::int64_t i = 0; i < n.grad.size(); ++i)
                   gx[i] += (1.0 - n.value[i] * n.value[i]) * n.grad[i];
               }));
}

GradTape::Var GradTape::sigmoid(Var x) {
  check(x);
  const Tensor& X = val(x.id);
  Tensor out(X.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-X[i]));
  const int idx = x.id;
  PE_EMIT_NODE(std::move(out), needs(x), ([idx](GradTape& t, int self) {
                 const Node& n = t.nodes_[static_cast<std::size_t>(self)];
                 Tensor& gx = t.grad_buf(idx);
                 for (std::int64_t i = 0; i < n.grad.size(); ++i)
                   gx[i] += n.value[i] * (1.0 - n.value[i]) * n.grad[i];
               }));
}

GradTape::Var GradTape::layer_norm(Var x, Var gain, Var bias, double eps) {
  check(x);
  check(gain);
  check(bias);
  const Tensor& X = val(x.id);
  const Tensor& G = val(gain.id);
  const Tensor& B = val(bias.id);
  const int d = X.cols();
  if (G.size() != d || B.size() != d) throw std::invalid_argument("layer_norm: gain/bias length mismatch");
  const std::int64_t rows = X.rows();
  Tensor out(X.shape());
  auto xhat = std::make_shared<Tensor>(X.shape());
  auto inv_s = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xp = X.data() + r * d;
    double mu = 0.0;
    for (int c = 0; c < d; ++c) mu += xp[c];
    mu /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) var += (xp[c] - mu) * (xp[c] - mu);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_s)[static_cast<std::size_t>(r)] = is;
    double* hp = xhat->data() + r * d;
    double* op = out.data() + r * d;
    for (int c = 0; c < d; ++c) {
      hp[c] = (xp[c] - mu) * is;
      op[c] = G[c] * hp[c] + B[c];
    }
  }
  const int idx = x.id, idg = gain.id, idb = bias.id;
  const bool nx = needs(x), ng = needs(gain), nb = needs(bias);
  PE_EMIT_NODE(std::move(out), nx || ng || nb, ([=](GradTape& t, int self) {
                 const Tensor& dy = t.nodes_[static_cast<std::size_t>(self)].grad;
                 const Tensor& Gv = t.val(idg);
                 const std::int64_t R = dy.rows();
                 const int D = dy.cols();
                 if (ng) {
                   Tensor& gg = t.grad_buf(idg);
                   for (std::int64_t r = 0; r < R; ++r) {
                     const double* dyp = dy.data() + r * D;
                     const double* hp = xhat->data() + r * D;
                     for (int c = 0; c < D; ++c) gg[c] += dyp[c] * hp[c];
                   }
                 }
                 if (nb) {
                   Tensor& gb = t.grad_buf(idb);
                   for (std::int64_t r = 0; r < R; ++r) {
                     const double* dyp = dy.data() + r * D;
                     for (int c = 0; c < D; ++c) gb[c] += dyp[c];
                   }
                 }
                 if (nx) {
                   Tensor& gx = t.grad_buf(idx);
                   std::vector<double> dxh(static_cast<std::size_t>(D));
                   for (std::int64_t r = 0; r < R; ++r) {
                     const double* dyp = dy.data() + r * D;
                     const double* hp = xhat->data() + r * D;
                     double sum_dxh = 0.0, sum_dxh_h = 0.0;
                     for (int c = 0; c < D; ++c) {
                       dxh[static_cast<std::size_t>(c)] = dyp[c] * Gv[c];
                       sum_dxh += dxh[static_cast<std::size_t>(c)];
                       sum_dxh_h += dxh[static_cast<std::size_t>(c)] * hp[c];
                     }
                     const double is = (*inv_s)[static_cast<std::size_t>(r)];
                     double* gxp = gx.data() + r * D;
                     for (int c = 0; c < D; ++c)
                       gxp[c] += is * (dxh[static_cast<std::size_t>(c)] - sum_dxh / D - hp[c] * sum_dxh_h / D);
                   }
                 }
               }));
}

GradTape::Var GradTape::softmax_rows(Var x) {
  check(x);
  Tensor out = softmax(val(x.id));
  const int idx = x.id;
  PE_EMIT_NODE(std::move(out), needs(x), ([idx](GradTape& t, int self) {
                 const Node& n = t.nodes_[static_cast<std::size_t>(self)];
                 Tensor& gx = t.grad_buf(idx);
                 const std::int64_t R = n.value.rows();
                 const int D = n.value.cols();
                 for (std::int64_t r = 0; r < R; ++r) {
                   const double* y = n.value.data() + r * D;
                   const double* dy = n.grad.data() + r * D;
                   double dot = 0.0;
                   for (int c = 0; c < D; ++c) dot += dy[c] * y[c];
                   double* g = gx.data() + r * D;
                   for (int c = 0; c < D; ++c) g[c] += y[c] * (dy[c] - dot);
                 }
               }));
}

GradTape::Var GradTape::dropout(Var x, double p, Rng& rng, bool enabled) {
  check(x);
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
  const Tensor& X = val(x.id);
  if (!enabled || p == 0.0) {
    Tensor out = X;
    const int idx = x.id;
    PE_EMIT_NODE(std::move(out), needs(x), ([idx](GradTape& t, int self) {
                   const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                   Tensor& gx = t.grad_buf(idx);
                   for (std::int64_t i = 0; i < G.size(); ++i) gx[i] += G[i];
                 }));
  }
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(static_cast<std::size_t>(X.size()));
  Tensor out(X.shape());
  for (std::int64_t i = 0; i < X.size(); ++i) {
    const double m = rng.uniform() < p ? 0.0 : keep_scale;
    (*mask)[static_cast<std::size_t>(i)] = m;
    out[i] = X[i] * m;
  }
  const int idx = x.id;
  PE_EMIT_NODE(std::move(out), needs(x), ([idx, mask](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 Tensor& gx = t.grad_buf(idx);
                 for (std::int64_t i = 0; i < G.size(); ++i) gx[i] += (*mask)[static_cast<std::size_t>(i)] * G[i];
               }));
}

GradTape::Var GradTape::slice_cols(Var x, int from, int to) {
  check(x);
  const Tensor& X = val(x.id);
  const int d = X.cols();
  if (from < 0 || to > d || from >= to) throw std::invalid_argument("slice_cols: bad range");
  const int w = to - from;
  Tensor out({static_cast<int>(X.rows()), w});
  for (std::int64_t r = 0; r < X.rows(); ++r)
    std::copy_n(X.data() + r * d + from, w, out.data() + r * w);
  const int idx = x.id;
  PE_EMIT_NODE(std::move(out), needs(x), ([idx, from, w, d](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 Tensor& gx = t.grad_buf(idx);
                 for (std::int64_t r = 0; r < G.rows(); ++r)
                   for (int c = 0; c < w; ++c) gx[r * d + from + c] += G[r * w + c];
               }));
}

GradTape::Var GradTape::sum(Var x) {
  check(x);
  const Tensor& X = val(x.id);
  long double s = 0.0L;
  for (std::int64_t i = 0; i < X.size(); ++i) s += X[i];
  const int idx = x.id;
  PE_EMIT_NODE(Tensor::scalar(static_cast<double>(s)), needs(x), ([idx](GradTape& t, int self) {
                 const double g = t.nodes_[static_cast<std::size_t>(self)].grad[0];
                 Tensor& gx = t.grad_buf(idx);
                 for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += g;
               }));
}

GradTape::Var GradTape::split_heads(Var x, int batch, int len, int heads) {
  check(x);
  const Tensor& X = val(x.id);
  const int d = X.cols();
  if (d % heads != 0 || X.rows() != static_cast<std::int64_t>(batch) * len)
    throw std::invalid_argument("split_heads: shape mismatch");
  const int hd = d / heads;
  Tensor out({batch * heads * len, hd});
  for (int b = 0; b < batch; ++b)
    for (int l = 0; l < len; ++l) {
      const double* src = X.data() + (static_cast<std::int64_t>(b) * len + l) * d;
      for (int h = 0; h < heads; ++h) {
        double* dst = out.data() + ((static_cast<std::int64_t>(b) * heads + h) * len + l) * hd;
        std::copy_n(src + h * hd, hd, dst);
      }
    }
  const int idx = x.id;
  PE_EMIT_NODE(std::move(out), needs(x), ([idx, batch, len, heads, hd, d](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 Tensor& gx = t.grad_buf(idx);
                 for (int b = 0; b < batch; ++b)
                   for (int l = 0; l < len; ++l) {
                     double* dst = gx.data() + (static_cast<std::int64_t>(b) * len + l) * d;
                     for (int h = 0; h < heads; ++h) {
                       const double* src = G.data() + ((static_cast<std::int64_t>(b) * heads + h) * len + l) * hd;
                       for (int c = 0; c < hd; ++c) dst[h * hd + c] += src[c];
                     }
                   }
               }));
}

GradTape::Var GradTape::merge_heads(Var x, int batch, int len, int heads) {
  check(x);
  const Tensor& X = val(x.id);
  const int hd = X.cols();
  if (X.rows() != static_cast<std::int64_t>(batch) * heads * len)
    throw std::invalid_argument("merge_heads: shape mismatch");
  const int d = heads * hd;
  Tensor out({batch * len, d});
  for (int b = 0; b < batch; ++b)
    for (int h = 0; h < heads; ++h)
      for (int l = 0; l < len; ++l) {
        const double* src = X.data() + ((static_cast<std::int64_t>(b) * heads + h) * len + l) * hd;
        double* dst = out.data() + (static_cast<std::int64_t>(b) * len + l) * d + h * hd;
        std::copy_n(src, hd, dst);
      }
  const int idx = x.id;
  PE_EMIT_NODE(std::move(out), needs(x), ([idx, batch, len, heads, hd, d](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 Tensor& gx = t.grad_buf(idx);
                 for (int b = 0; b < batch; ++b)
                   for (int h = 0; h < heads; ++h)
                     for (int l = 0; l < len; ++l) {
                       double* dst = gx.data() + ((static_cast<std::int64_t>(b) * heads + h) * len + l) * hd;
                       const double* src = G.data() + (static_cast<std::int64_t>(b) * len + l) * d + h * hd;
                       for (int c = 0; c < hd; ++c) dst[c] += src[c];
                     }
               }));
}

GradTape::Var GradTape::attn_scores(Var q, Var k, int blocks, int len, double scl) {
  check(q);
  check(k);
  const Tensor& Q = val(q.id);
  const Tensor& K = val(k.id);
  if (Q.rows() != static_cast<std::int64_t>(blocks) * len || !Q.same_shape(K))
    throw std::invalid_argument("attn_scores: shape mismatch");
  Tensor out({blocks * len, len});
  for (int b = 0; b < blocks; ++b)
    block(out, static_cast<std::int64_t>(b) * len, len).noalias() =
        scl * (block(Q, static_cast<std::int64_t>(b) * len, len) *
               block(K, static_cast<std::int64_t>(b) * len, len).transpose());
  const int idq = q.id, idk = k.id;
  const bool nq = needs(q), nk = needs(k);
  PE_EMIT_NODE(std::move(out), nq || nk, ([idq, idk, blocks, len, scl, nq, nk](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 const Tensor& Q2 = t.val(idq);
                 const Tensor& K2 = t.val(idk);
                 for (int b = 0; b < blocks; ++b) {
                   const std::int64_t r0 = static_cast<std::int64_t>(b) * len;
                   if (nq)
                     block(t.grad_buf(idq), r0, len).noalias() += scl * (block(G, r0, len) * block(K2, r0, len));
                   if (nk)
                     block(t.grad_buf(idk), r0, len).noalias() +=
                         scl * (block(G, r0, len).transpose() * block(Q2, r0, len));
                 }
               }));
}

GradTape::Var GradTape::attn_apply(Var probs, Var v, int blocks, int len) {
  check(probs);
  check(v);
  const Tensor& P = val(probs.id);
  const Tensor& V = val(v.id);
  if (P.rows() != static_cast<std::int64_t>(blocks) * len || P.cols() != len ||
      V.rows() != static_cast<std::int64_t>(blocks) * len)
    throw std::invalid_argument("attn_apply: shape mismatch");
  Tensor out({blocks * len, V.cols()});
  for (int b = 0; b < blocks; ++b) {
    const std::int64_t r0 = static_cast<std::int64_t>(b) * len;
    block(out, r0, len).noalias() = block(P, r0, len) * block(V, r0, len);
  }
  const int idp = probs.id, idv = v.id;
  const bool np = needs(probs), nv = needs(v);
  PE_EMIT_NODE(std::move(out), np || nv, ([idp, idv, blocks, len, np, nv](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 const Tensor& P2 = t.val(idp);
                 const Tensor& V2 = t.val(idv);
                 for (int b = 0; b < blocks; ++b) {
                   const std::int64_t r0 = static_cast<std::int64_t>(b) * len;
                   if (np)
                     block(t.grad_buf(idp), r0, len).noalias() +=
                         block(G, r0, len) * block(V2, r0, len).transpose();
                   if (nv)
                     block(t.grad_buf(idv), r0, len).noalias() +=
                         block(P2, r0, len).transpose() * block(G, r0, len);
                 }
               }));
}

GradTape::Var GradTape::masked_mean_pool(Var x, int batch, int len, const std::vector<std::uint8_t>& pad_flags) {
  check(x);
  const Tensor& X = val(x.id);
  const int d = X.cols();
  if (X.rows() != static_cast<std::int64_t>(batch) * len ||
      pad_flags.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(len))
    throw std::invalid_argument("masked_mean_pool: shape mismatch");
  Tensor out({batch, d});
  auto counts = std::make_shared<std::vector<double>>(static_cast<std::size_t>(batch), 0.0);
  auto pads = std::make_shared<std::vector<std::uint8_t>>(pad_flags);
  for (int b = 0; b < batch; ++b) {
    double* op = out.data() + static_cast<std::int64_t>(b) * d;
    int n = 0;
    for (int l = 0; l < len; ++l) {
      if (pad_flags[static_cast<std::size_t>(b) * len + l]) continue;
      const double* xp = X.data() + (static_cast<std::int64_t>(b) * len + l) * d;
      for (int c = 0; c < d; ++c) op[c] += xp[c];
      ++n;
    }
    if (n == 0) throw std::invalid_argument("masked_mean_pool: all positions padded in a row");
    (*counts)[static_cast<std::size_t>(b)] = n;
    for (int c = 0; c < d; ++c) op[c] /= n;
  }
  const int idx = x.id;
  PE_EMIT_NODE(std::move(out), needs(x), ([idx, batch, len, d, counts, pads](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 Tensor& gx = t.grad_buf(idx);
                 for (int b = 0; b < batch; ++b) {
                   const double inv = 1.0 / (*counts)[static_cast<std::size_t>(b)];
                   const double* gp = G.data() + static_cast<std::int64_t>(b) * d;
                   for (int l = 0; l < len; ++l) {
                     if ((*pads)[static_cast<std::size_t>(b) * len + l]) continue;
                     double* xp = gx.data() + (static_cast<std::int64_t>(b) * len + l) * d;
                     for (int c = 0; c < d; ++c) xp[c] += gp[c] * inv;
                   }
                 }
               }));
}

GradTape::Var GradTape::layer_weighted_sum(Var feats, Var w, int batch, int layers) {
  check(feats);
  check(w);
  const Tensor& F = val(feats.id);
  const Tensor& W = val(w.id);
  const int d = F.cols();
  if (F.rows() != static_cast<std::int64_t>(batch) * layers || W.size() != layers)
    throw std::invalid_argument("layer_weighted_sum: shape mismatch");
  Tensor out({batch, d});
  for (int b = 0; b < batch; ++b) {
    double* op = out.data() + static_cast<std::int64_t>(b) * d;
    for (int i = 0; i < layers; ++i) {
      const double wi = W[i];
      const double* fp = F.data() + (static_cast<std::int64_t>(b) * layers + i) * d;
      for (int c = 0; c < d; ++c) op[c] += wi * fp[c];
    }
  }
  const int idf = feats.id, idw = w.id;
  const bool nf = needs(feats), nw = needs(w);
  PE_EMIT_NODE(std::move(out), nf || nw, ([idf, idw, batch, layers, d, nf, nw](GradTape& t, int self) {
                 const Tensor& G = t.nodes_[static_cast<std::size_t>(self)].grad;
                 const Tensor& F2 = t.val(idf);
                 const Tensor& W2 = t.val(idw);
                 for (int b = 0; b < batch; ++b) {
                   const double* gp = G.data() + static_cast<std::int64_t>(b) * d;
                   for (int i = 0; i < layers; ++i) {
                     const double* fp = F2.data() + (static_cast<std::int64_t>(b) * layers + i) * d;
                     if (nw) {
                       double dot = 0.0;
                       for (int c = 0; c < d; ++c) dot += gp[c] * fp[c];
                       t.grad_buf(idw)[i] += dot;
                     }
                     if (nf) {
                       double* fg = t.grad_buf(idf).data() + (static_cast<std::int64_t>(b) * layers + i) * d;
                       for (int c = 0; c < d; ++c) fg[c] += W2[i] * gp[c];
                     }
                   }
                 }
               }));
}

GradTape::Var GradTape::cross_entropy_mean(Var logits, std::vector<int> targets) {
  std::vector<std::uint8_t> flags(targets.size(), 1);
  return masked_cross_entropy(logits, std::move(targets), std::move(flags));
}

GradTape::Var GradTape::masked_cross_entropy(Var logits, std::vector<int> targets,
                                             std::vector<std::uint8_t> mask_flags) {
  check(logits);
  const Tensor& X = val(logits.id);
  const std::int64_t rows = X.rows();
  const int vocab = X.cols();
  if (static_cast<std::int64_t>(targets.size()) != rows || static_cast<std::int64_t>(mask_flags.size()) != rows)
    throw std::invalid_argument("masked_cross_entropy: targets/mask length mismatch");
  auto probs = std::make_shared<Tensor>(std::vector<int>{static_cast<int>(rows), vocab});
  long double sum = 0.0L;
  std::int64_t n = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    if (!mask_flags[static_cast<std::size_t>(r)]) continue;
    const int tgt = targets[static_cast<std::size_t>(r)];
    if (tgt < 0 || tgt >= vocab) throw std::invalid_argument("masked_cross_entropy: target out of range");
    const double* x = X.data() + r * vocab;
    double m = x[0];
    for (int c = 1; c < vocab; ++c) m = std::max(m, x[c]);
    double z = 0.0;
    double* pp = probs->data() + r * vocab;
    for (int c = 0; c < vocab; ++c) {
      pp[c] = std::exp(x[c] - m);
      z += pp[c];
    }
    const double inv = 1.0 / z;
    for (int c = 0; c < vocab; ++c) pp[c] *= inv;
    sum += (m + std::log(z)) - x[tgt];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("masked_cross_entropy: no masked positions (loss undefined)");
  const double loss = static_cast<double>(sum / n);
  const int idl = logits.id;
  auto tg = std::make_shared<std::vector<int>>(std::move(targets));
  auto fl = std::make_shared<std::vector<std::uint8_t>>(std::move(mask_flags));
  const double inv_n = 1.0 / static_cast<double>(n);
  PE_EMIT_NODE(Tensor::scalar(loss), needs(logits), ([idl, tg, fl, probs, inv_n, vocab](GradTape& t, int self) {
                 const double g = t.nodes_[static_cast<std::size_t>(self)].grad[0];
                 Tensor& gl = t.grad_buf(idl);
                 const std::int64_t R = gl.rows();
                 for (std::int64_t r = 0; r < R; ++r) {
                   if (!(*fl)[static_cast<std::size_t>(r)]) continue;  // untouched: exactly zero
                   const double* pp = probs->data() + r * vocab;
                   double* gp = gl.data() + r * vocab;
                   const double s = g * inv_n;
                   for (int c = 0; c < vocab; ++c) gp[c] += s * pp[c];
                   gp[(*tg)[static_cast<std::size_t>(r)]] -= s;
                 }
               }));
}

GradTape::Var GradTape::bce_with_logits(Var logits, std::vector<double> labels) {
  check(logits);
  const Tensor& Z = val(logits.id);
  const std::int64_t n = Z.size();
  if (static_cast<std::int64_t>(labels.size()) != n)
    throw std::invalid_argument("bce_with_logits: labels length mismatch");
  if (n == 0) throw std::invalid_argument("bce_with_logits: empty batch");
  long double sum = 0.0L;
  for (std::int64_t i = 0; i < n; ++i) {
    const double z = Z[i], y = labels[static_cast<std::size_t>(i)];
    sum += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  const int idz = logits.id;
  auto lb = std::make_shared<std::vector<double>>(std::move(labels));
  const double inv_n = 1.0 / static_cast<double>(n);
  PE_EMIT_NODE(Tensor::scalar(static_cast<double>(sum / n)), needs(logits),
               ([idz, lb, inv_n](GradTape& t, int self) {
                 const double g = t.nodes_[static_cast<std::size_t>(self)].grad[0];
                 const Tensor& Z2 = t.val(idz);
                 Tensor& gz = t.grad_buf(idz);
                 for (std::int64_t i = 0; i < Z2.size(); ++i) {
                   const double p = 1.0 / (1.0 + std::exp(-Z2[i]));
                   gz[i] += g * inv_n * (p - (*lb)[static_cast<std::size_t>(i)]);
                 }
               }));
}

void GradTape::backward(Var loss) {
  check(loss);
  if (backward_done_) throw std::logic_error("GradTape::backward: already ran");
  backward_done_ = true;
  if (value(loss).size() != 1) throw std::invalid_argument("GradTape::backward: loss must be scalar");
  // Params always end up with a gradient buffer, zero when unused by the loss.
  for (const auto& [ptr, id] : param_ids_) {
    (void)ptr;
    if (nodes_[static_cast<std::size_t>(id)].needs_grad) grad_buf(id);
  }
  grad_buf(loss.id)[0] = 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back && n.needs_grad && n.grad_alloced) n.back(*this, i);
  }
}

}  // namespace prodembed::num
