#include "chapterkit/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "chapterkit/errors.hpp"
#include "chapterkit/rng.hpp"

namespace chapterkit::autograd {

namespace {

constexpr double kProbClamp = 1e-7;

void require(bool cond, ErrorCode code, const char* msg) {
  if (!cond) throw Error(code, msg);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_slot(int i) {
  Node& n = nodes_[i];
  if (n.grad.empty()) n.grad = Tensor(val(i).shape());
  return n.grad;
}

const Tensor& Tape::value(Var v) const { return val(v.index); }

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_[v.index];
  return n.grad.empty() ? empty_ : n.grad;
}

bool Tape::requires_grad(Var v) const { return nodes_[v.index].requires_grad; }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.op = "leaf";
  return push(std::move(n));
}

Var Tape::param(const Tensor* value) {
  auto it = param_index_.find(value);
  if (it != param_index_.end()) return Var{it->second};
  Node n;
  n.external = value;
  n.requires_grad = true;
  n.op = "param";
  Var v = push(std::move(n));
  param_index_[value] = v.index;
  return v;
}

const Tensor* Tape::param_grad(const Tensor* value) const {
  auto it = param_index_.find(value);
  if (it == param_index_.end()) return nullptr;
  const Node& n = nodes_[static_cast<size_t>(it->second)];
  return n.grad.empty() ? nullptr : &n.grad;
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a.index);
  const Tensor& tb = val(b.index);
  require(ta.same_shape(tb), ErrorCode::ShapeMismatch, "add shapes differ");
  Node n;
  n.op = "add";
  n.value = ta;
  n.value.add_in_place(tb);
  n.requires_grad = wants(a.index) || wants(b.index);
  int ai = a.index, bi = b.index;
  Var out{static_cast<int>(nodes_.size())};
  int oi = out.index;
  n.backprop = [this, ai, bi, oi] {
    const Tensor& g = nodes_[oi].grad;
    if (wants(ai)) grad_slot(ai).add_in_place(g);
    if (wants(bi)) grad_slot(bi).add_in_place(g);
  };
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = val(a.index);
  const Tensor& tb = val(b.index);
  require(ta.same_shape(tb), ErrorCode::ShapeMismatch, "mul shapes differ");
  Node n;
  n.op = "mul";
  n.value = Tensor(ta.shape());
  for (size_t i = 0; i < ta.numel(); ++i) n.value.at(i) = ta.at(i) * tb.at(i);
  n.requires_grad = wants(a.index) || wants(b.index);
  int ai = a.index, bi = b.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, ai, bi, oi] {
    const Tensor& g = nodes_[oi].grad;
    if (wants(ai)) {
      Tensor& da = grad_slot(ai);
      const Tensor& tb2 = val(bi);
      for (size_t i = 0; i < g.numel(); ++i) da.at(i) += g.at(i) * tb2.at(i);
    }
    if (wants(bi)) {
      Tensor& db = grad_slot(bi);
      const Tensor& ta2 = val(ai);
      for (size_t i = 0; i < g.numel(); ++i) db.at(i) += g.at(i) * ta2.at(i);
    }
  };
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  const Tensor& ta = val(a.index);
  Node n;
  n.op = "scale";
  n.value = Tensor(ta.shape());
  for (size_t i = 0; i < ta.numel(); ++i) n.value.at(i) = ta.at(i) * s;
  n.requires_grad = wants(a.index);
  int ai = a.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, ai, oi, s] {
    if (!wants(ai)) return;
    const Tensor& g = nodes_[oi].grad;
    Tensor& da = grad_slot(ai);
    for (size_t i = 0; i < g.numel(); ++i) da.at(i) += g.at(i) * s;
  };
  return push(std::move(n));
}

Var Tape::add_rowvec(Var a, Var bias) {
  const Tensor& ta = val(a.index);
  const Tensor& tb = val(bias.index);
  require(ta.cols() == tb.numel(), ErrorCode::ShapeMismatch,
          "bias width does not match");
  Node n;
  n.op = "add_rowvec";
  n.value = ta;
  size_t rows = ta.numel() / ta.cols(), cols = ta.cols();
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) n.value.at(r * cols + c) += tb.at(c);
  n.requires_grad = wants(a.index) || wants(bias.index);
  int ai = a.index, bi = bias.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, ai, bi, oi, rows, cols] {
    const Tensor& g = nodes_[oi].grad;
    if (wants(ai)) grad_slot(ai).add_in_place(g);
    if (wants(bi)) {
      Tensor& db = grad_slot(bi);
      for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) db.at(c) += g.at(r * cols + c);
    }
  };
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = val(a.index);
  const Tensor& tb = val(b.index);
  require(ta.ndim() == 2 && tb.ndim() == 2, ErrorCode::ShapeMismatch,
          "matmul expects rank-2 tensors");
  size_t m = ta.shape()[0], k = ta.shape()[1];
  size_t k2 = tb.shape()[0], p = tb.shape()[1];
  require(k == k2, ErrorCode::ShapeMismatch, "matmul inner dims differ");
  Node n;
  n.op = "matmul";
  n.value = Tensor({m, p});
  {
    const double* A = ta.data();
    const double* B = tb.data();
    double* C = n.value.data();
    for (size_t i = 0; i < m; ++i)
      for (size_t t = 0; t < k; ++t) {
        double av = A[i * k + t];
        const double* brow = B + t * p;
        double* crow = C + i * p;
        for (size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
      }
  }
  n.requires_grad = wants(a.index) || wants(b.index);
  int ai = a.index, bi = b.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, ai, bi, oi, m, k, p] {
    const Tensor& g = nodes_[oi].grad;
    if (wants(ai)) {
      // dA = g . B^T
      Tensor& da = grad_slot(ai);
      const double* B = val(bi).data();
      const double* G = g.data();
      double* DA = da.data();
      for (size_t i = 0; i < m; ++i)
        for (size_t t = 0; t < k; ++t) {
          const double* grow = G + i * p;
          const double* brow = B + t * p;
          double acc = 0.0;
          for (size_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
          DA[i * k + t] += acc;
        }
    }
    if (wants(bi)) {
      // dB = A^T . g
      Tensor& db = grad_slot(bi);
      const double* A = val(ai).data();
      const double* G = g.data();
      double* DB = db.data();
      for (size_t i = 0; i < m; ++i)
        for (size_t t = 0; t < k; ++t) {
          double av = A[i * k + t];
          const double* grow = G + i * p;
          double* dbrow = DB + t * p;
          for (size_t j = 0; j < p; ++j) dbrow[j] += av * grow[j];
        }
    }
  };
  return push(std::move(n));
}

Var Tape::softmax(Var x) {
  const Tensor& tx = val(x.index);
  size_t cols = tx.cols();
  size_t rows = tx.numel() / cols;
  Node n;
  n.op = "softmax";
  n.value = Tensor(tx.shape());
  for (size_t r = 0; r < rows; ++r) {
    const double* in = tx.data() + r * cols;
    double* out = n.value.data() + r * cols;
    double mx = in[0];
    for (size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double denom = 0.0;
    for (size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      denom += out[c];
    }
    for (size_t c = 0; c < cols; ++c) out[c] /= denom;
  }
  n.requires_grad = wants(x.index);
  int xi = x.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, xi, oi, rows, cols] {
    if (!wants(xi)) return;
    const Tensor& g = nodes_[oi].grad;
    const Tensor& y = nodes_[oi].value;
    Tensor& dx = grad_slot(xi);
    for (size_t r = 0; r < rows; ++r) {
      const double* grow = g.data() + r * cols;
      const double* yrow = y.data() + r * cols;
      double dot = 0.0;
      for (size_t c = 0; c < cols; ++c) dot += grow[c] * yrow[c];
      double* drow = dx.data() + r * cols;
      for (size_t c = 0; c < cols; ++c) drow[c] += yrow[c] * (grow[c] - dot);
    }
  };
  return push(std::move(n));
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& tx = val(x.index);
  const Tensor& tg = val(gain.index);
  const Tensor& tb = val(bias.index);
  size_t cols = tx.cols();
  size_t rows = tx.numel() / cols;
  require(tg.numel() == cols && tb.numel() == cols, ErrorCode::ShapeMismatch,
          "layer_norm gain/bias width");
  Node n;
  n.op = "layer_norm";
  n.value = Tensor(tx.shape());
  Tensor xhat({rows, cols});
  Tensor inv_sd({rows});
  for (size_t r = 0; r < rows; ++r) {
    const double* in = tx.data() + r * cols;
    double mean = 0.0;
    for (size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (size_t c = 0; c < cols; ++c) {
      double d = in[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    double isd = 1.0 / std::sqrt(var + eps);
    inv_sd.at(r) = isd;
    for (size_t c = 0; c < cols; ++c) {
      double h = (in[c] - mean) * isd;
      xhat.at(r, c) = h;
      n.value.at(r * cols + c) = tg.at(c) * h + tb.at(c);
    }
  }
  n.requires_grad = wants(x.index) || wants(gain.index) || wants(bias.index);
  int xi = x.index, gi = gain.index, bi = bias.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, xi, gi, bi, oi, rows, cols, xhat = std::move(xhat),
                inv_sd = std::move(inv_sd)] {
    const Tensor& g = nodes_[oi].grad;
    if (wants(gi)) {
      Tensor& dg = grad_slot(gi);
      for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c)
          dg.at(c) += g.at(r * cols + c) * xhat.at(r, c);
    }
    if (wants(bi)) {
      Tensor& db = grad_slot(bi);
      for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) db.at(c) += g.at(r * cols + c);
    }
    if (wants(xi)) {
      const Tensor& tg2 = val(gi);
      Tensor& dx = grad_slot(xi);
      for (size_t r = 0; r < rows; ++r) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (size_t c = 0; c < cols; ++c) {
          double dh = g.at(r * cols + c) * tg2.at(c);
          mean_dh += dh;
          mean_dh_h += dh * xhat.at(r, c);
        }
        mean_dh /= static_cast<double>(cols);
        mean_dh_h /= static_cast<double>(cols);
        for (size_t c = 0; c < cols; ++c) {
          double dh = g.at(r * cols + c) * tg2.at(c);
          dx.at(r, c) +=
              inv_sd.at(r) * (dh - mean_dh - xhat.at(r, c) * mean_dh_h);
        }
      }
    }
  };
  return push(std::move(n));
}

Var Tape::rope_rotate(Var x, double base) {
  const Tensor& tx = val(x.index);
  require(tx.ndim() == 2, ErrorCode::ShapeMismatch, "rope expects rank-2");
  size_t rows = tx.shape()[0], d = tx.shape()[1];
  require(d % 2 == 0, ErrorCode::OddDimension, "rope width must be even");
  // Angles depend only on (position, pair); cache cos/sin for backward.
  Tensor cosines({rows, d / 2});
  Tensor sines({rows, d / 2});
  Node n;
  n.op = "rope_rotate";
  n.value = Tensor(tx.shape());
  for (size_t m = 0; m < rows; ++m) {
    for (size_t i = 0; i < d / 2; ++i) {
      double theta =
          std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      double angle = static_cast<double>(m) * theta;
      double ca = std::cos(angle), sa = std::sin(angle);
      cosines.at(m, i) = ca;
      sines.at(m, i) = sa;
      double x0 = tx.at(m, 2 * i), x1 = tx.at(m, 2 * i + 1);
      n.value.at(m * d + 2 * i) = x0 * ca - x1 * sa;
      n.value.at(m * d + 2 * i + 1) = x0 * sa + x1 * ca;
    }
  }
  n.requires_grad = wants(x.index);
  int xi = x.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, xi, oi, rows, d, cosines = std::move(cosines),
                sines = std::move(sines)] {
    if (!wants(xi)) return;
    const Tensor& g = nodes_[oi].grad;
    Tensor& dx = grad_slot(xi);
    for (size_t m = 0; m < rows; ++m)
      for (size_t i = 0; i < d / 2; ++i) {
        double ca = cosines.at(m, i), sa = sines.at(m, i);
        double g0 = g.at(m * d + 2 * i), g1 = g.at(m * d + 2 * i + 1);
        // Inverse rotation on the upstream gradient.
        dx.at(m, 2 * i) += g0 * ca + g1 * sa;
        dx.at(m, 2 * i + 1) += -g0 * sa + g1 * ca;
      }
  };
  return push(std::move(n));
}

Var Tape::masked_attention(Var q, Var k, Var v, const BoolMatrix& mask) {
  const Tensor& tq = val(q.index);
  const Tensor& tk = val(k.index);
  const Tensor& tv = val(v.index);
  require(tq.ndim() == 2 && tk.ndim() == 2 && tv.ndim() == 2,
          ErrorCode::ShapeMismatch, "attention expects rank-2");
  size_t nrows = tq.shape()[0], dh = tq.shape()[1];
  require(tk.shape()[0] == nrows && tk.shape()[1] == dh &&
              tv.shape()[0] == nrows && tv.shape()[1] == dh,
          ErrorCode::ShapeMismatch, "attention q/k/v shapes differ");
  require(mask.size() == nrows, ErrorCode::ShapeMismatch,
          "attention mask size");
  for (size_t i = 0; i < nrows; ++i)
    require(mask.at(i, i), ErrorCode::ShapeMismatch,
            "attention mask must keep self visible");

  double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  // Scores and weights exist only for allowed positions; a masked
  // position never enters any sum, which keeps outputs bit-identical
  // under perturbations beyond the mask.
  Tensor weights({nrows, nrows});
  Node n;
  n.op = "masked_attention";
  n.value = Tensor({nrows, dh});
  std::vector<double> row_scores(nrows);
  for (size_t i = 0; i < nrows; ++i) {
    double mx = -1e300;
    for (size_t j = 0; j < nrows; ++j) {
      if (!mask.at(i, j)) continue;
      double s = 0.0;
      for (size_t c = 0; c < dh; ++c) s += tq.at(i, c) * tk.at(j, c);
      s *= inv_scale;
      row_scores[j] = s;
      mx = std::max(mx, s);
    }
    double denom = 0.0;
    for (size_t j = 0; j < nrows; ++j) {
      if (!mask.at(i, j)) continue;
      double w = std::exp(row_scores[j] - mx);
      weights.at(i, j) = w;
      denom += w;
    }
    for (size_t j = 0; j < nrows; ++j) {
      if (!mask.at(i, j)) continue;
      double w = weights.at(i, j) / denom;
      weights.at(i, j) = w;
      for (size_t c = 0; c < dh; ++c) n.value.at(i * dh + c) += w * tv.at(j, c);
    }
  }
  n.requires_grad = wants(q.index) || wants(k.index) || wants(v.index);
  int qi = q.index, ki = k.index, vi = v.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, qi, ki, vi, oi, nrows, dh, inv_scale, mask,
                weights = std::move(weights)] {
    const Tensor& g = nodes_[oi].grad;
    const Tensor& tq2 = val(qi);
    const Tensor& tk2 = val(ki);
    const Tensor& tv2 = val(vi);
    bool wq = wants(qi), wk = wants(ki), wv = wants(vi);
    Tensor* dq = wq ? &grad_slot(qi) : nullptr;
    Tensor* dk = wk ? &grad_slot(ki) : nullptr;
    Tensor* dv = wv ? &grad_slot(vi) : nullptr;
    std::vector<double> dw(nrows);
    for (size_t i = 0; i < nrows; ++i) {
      // dL/dw_ij and the softmax Jacobian contraction, allowed j only.
      double dot = 0.0;
      for (size_t j = 0; j < nrows; ++j) {
        if (!mask.at(i, j)) continue;
        double acc = 0.0;
        for (size_t c = 0; c < dh; ++c) acc += g.at(i * dh + c) * tv2.at(j, c);
        dw[j] = acc;
        dot += weights.at(i, j) * acc;
        if (wv)
          for (size_t c = 0; c < dh; ++c)
            dv->at(j, c) += weights.at(i, j) * g.at(i * dh + c);
      }
      if (!wq && !wk) continue;
      for (size_t j = 0; j < nrows; ++j) {
        if (!mask.at(i, j)) continue;
        double ds = weights.at(i, j) * (dw[j] - dot) * inv_scale;
        if (wq)
          for (size_t c = 0; c < dh; ++c) dq->at(i, c) += ds * tk2.at(j, c);
        if (wk)
          for (size_t c = 0; c < dh; ++c) dk->at(j, c) += ds * tq2.at(i, c);
      }
    }
  };
  return push(std::move(n));
}

Var Tape::mean_pool(Var x, const std::vector<uint8_t>& valid) {
  const Tensor& tx = val(x.index);
  require(tx.ndim() == 2, ErrorCode::ShapeMismatch, "mean_pool expects rank-2");
  size_t rows = tx.shape()[0], cols = tx.shape()[1];
  require(valid.size() == rows, ErrorCode::ShapeMismatch,
          "mean_pool mask length");
  size_t count = 0;
  for (uint8_t f : valid) count += f ? 1 : 0;
  require(count > 0, ErrorCode::AllMasked, "mean_pool over no valid rows");
  Node n;
  n.op = "mean_pool";
  n.value = Tensor({cols});
  for (size_t r = 0; r < rows; ++r) {
    if (!valid[r]) continue;
    for (size_t c = 0; c < cols; ++c) n.value.at(c) += tx.at(r, c);
  }
  double inv = 1.0 / static_cast<double>(count);
  for (size_t c = 0; c < cols; ++c) n.value.at(c) *= inv;
  n.requires_grad = wants(x.index);
  int xi = x.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, xi, oi, rows, cols, inv, valid] {
    if (!wants(xi)) return;
    const Tensor& g = nodes_[oi].grad;
    Tensor& dx = grad_slot(xi);
    for (size_t r = 0; r < rows; ++r) {
      if (!valid[r]) continue;
      for (size_t c = 0; c < cols; ++c) dx.at(r, c) += g.at(c) * inv;
    }
  };
  return push(std::move(n));
}

Var Tape::rows_gather(Var table, const std::vector<int>& ids) {
  const Tensor& tt = val(table.index);
  require(tt.ndim() == 2, ErrorCode::ShapeMismatch, "gather expects rank-2");
  size_t vocab = tt.shape()[0], cols = tt.shape()[1];
  Node n;
  n.op = "rows_gather";
  n.value = Tensor({ids.size(), cols});
  for (size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] >= 0 && static_cast<size_t>(ids[r]) < vocab,
            ErrorCode::ShapeMismatch, "gather id out of range");
    for (size_t c = 0; c < cols; ++c)
      n.value.at(r * cols + c) = tt.at(static_cast<size_t>(ids[r]), c);
  }
  n.requires_grad = wants(table.index);
  int ti = table.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, ti, oi, ids, cols] {
    if (!wants(ti)) return;
    const Tensor& g = nodes_[oi].grad;
    Tensor& dt = grad_slot(ti);
    for (size_t r = 0; r < ids.size(); ++r)
      for (size_t c = 0; c < cols; ++c)
        dt.at(static_cast<size_t>(ids[r]), c) += g.at(r * cols + c);
  };
  return push(std::move(n));
}

Var Tape::col_slice(Var x, size_t begin, size_t width) {
  const Tensor& tx = val(x.index);
  require(tx.ndim() == 2, ErrorCode::ShapeMismatch, "col_slice expects rank-2");
  size_t rows = tx.shape()[0], cols = tx.shape()[1];
  require(begin + width <= cols, ErrorCode::ShapeMismatch,
          "col_slice out of range");
  Node n;
  n.op = "col_slice";
  n.value = Tensor({rows, width});
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < width; ++c)
      n.value.at(r * width + c) = tx.at(r, begin + c);
  n.requires_grad = wants(x.index);
  int xi = x.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, xi, oi, rows, width, begin] {
    if (!wants(xi)) return;
    const Tensor& g = nodes_[oi].grad;
    Tensor& dx = grad_slot(xi);
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < width; ++c)
        dx.at(r, begin + c) += g.at(r * width + c);
  };
  return push(std::move(n));
}

Var Tape::col_concat(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::ShapeMismatch, "col_concat of nothing");
  size_t rows = val(parts[0].index).shape()[0];
  size_t total = 0;
  for (Var p : parts) {
    const Tensor& tp = val(p.index);
    require(tp.ndim() == 2 && tp.shape()[0] == rows, ErrorCode::ShapeMismatch,
            "col_concat row mismatch");
    total += tp.shape()[1];
  }
  Node n;
  n.op = "col_concat";
  n.value = Tensor({rows, total});
  size_t off = 0;
  std::vector<int> idx;
  std::vector<size_t> widths;
  for (Var p : parts) {
    const Tensor& tp = val(p.index);
    size_t w = tp.shape()[1];
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < w; ++c)
        n.value.at(r * total + off + c) = tp.at(r, c);
    idx.push_back(p.index);
    widths.push_back(w);
    off += w;
    n.requires_grad = n.requires_grad || wants(p.index);
  }
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, oi, rows, total, idx, widths] {
    const Tensor& g = nodes_[oi].grad;
    size_t off2 = 0;
    for (size_t p = 0; p < idx.size(); ++p) {
      if (wants(idx[p])) {
        Tensor& dp = grad_slot(idx[p]);
        for (size_t r = 0; r < rows; ++r)
          for (size_t c = 0; c < widths[p]; ++c)
            dp.at(r, c) += g.at(r * total + off2 + c);
      }
      off2 += widths[p];
    }
  };
  return push(std::move(n));
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  require(!rows.empty(), ErrorCode::ShapeMismatch, "stack_rows of nothing");
  size_t cols = val(rows[0].index).numel();
  Node n;
  n.op = "stack_rows";
  n.value = Tensor({rows.size(), cols});
  std::vector<int> idx;
  for (size_t r = 0; r < rows.size(); ++r) {
    const Tensor& tr = val(rows[r].index);
    require(tr.numel() == cols, ErrorCode::ShapeMismatch,
            "stack_rows width mismatch");
    for (size_t c = 0; c < cols; ++c) n.value.at(r * cols + c) = tr.at(c);
    idx.push_back(rows[r].index);
    n.requires_grad = n.requires_grad || wants(rows[r].index);
  }
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, oi, idx, cols] {
    const Tensor& g = nodes_[oi].grad;
    for (size_t r = 0; r < idx.size(); ++r) {
      if (!wants(idx[r])) continue;
      Tensor& dr = grad_slot(idx[r]);
      for (size_t c = 0; c < cols; ++c) dr.at(c) += g.at(r * cols + c);
    }
  };
  return push(std::move(n));
}

Var Tape::row_slice(Var x, size_t begin, size_t count) {
  const Tensor& tx = val(x.index);
  size_t cols = tx.cols();
  size_t rows = tx.numel() / cols;
  require(begin + count <= rows, ErrorCode::ShapeMismatch,
          "row_slice out of range");
  Node n;
  n.op = "row_slice";
  n.value = tx.ndim() == 2 ? Tensor({count, cols}) : Tensor({count});
  for (size_t r = 0; r < count; ++r)
    for (size_t c = 0; c < cols; ++c)
      n.value.at(r * cols + c) = tx.at((begin + r) * cols + c);
  n.requires_grad = wants(x.index);
  int xi = x.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, xi, oi, begin, count, cols] {
    if (!wants(xi)) return;
    const Tensor& g = nodes_[oi].grad;
    Tensor& dx = grad_slot(xi);
    for (size_t r = 0; r < count; ++r)
      for (size_t c = 0; c < cols; ++c)
        dx.at((begin + r) * cols + c) += g.at(r * cols + c);
  };
  return push(std::move(n));
}

Var Tape::gelu(Var x) {
  const Tensor& tx = val(x.index);
  Node n;
  n.op = "gelu";
  n.value = Tensor(tx.shape());
  for (size_t i = 0; i < tx.numel(); ++i) {
    double v = tx.at(i);
    n.value.at(i) = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  }
  n.requires_grad = wants(x.index);
  int xi = x.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, xi, oi] {
    if (!wants(xi)) return;
    const Tensor& g = nodes_[oi].grad;
    const Tensor& tx2 = val(xi);
    Tensor& dx = grad_slot(xi);
    for (size_t i = 0; i < tx2.numel(); ++i) {
      double v = tx2.at(i);
      double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
      dx.at(i) += g.at(i) * (cdf + v * pdf);
    }
  };
  return push(std::move(n));
}

Var Tape::sigmoid(Var x) {
  const Tensor& tx = val(x.index);
  Node n;
  n.op = "sigmoid";
  n.value = Tensor(tx.shape());
  for (size_t i = 0; i < tx.numel(); ++i)
    n.value.at(i) = stable_sigmoid(tx.at(i));
  n.requires_grad = wants(x.index);
  int xi = x.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, xi, oi] {
    if (!wants(xi)) return;
    const Tensor& g = nodes_[oi].grad;
    const Tensor& y = nodes_[oi].value;
    Tensor& dx = grad_slot(xi);
    for (size_t i = 0; i < y.numel(); ++i)
      dx.at(i) += g.at(i) * y.at(i) * (1.0 - y.at(i));
  };
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  const Tensor& tx = val(x.index);
  Node n;
  n.op = "sum";
  double acc = 0.0;
  for (size_t i = 0; i < tx.numel(); ++i) acc += tx.at(i);
  n.value = Tensor::scalar(acc);
  n.requires_grad = wants(x.index);
  int xi = x.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, xi, oi] {
    if (!wants(xi)) return;
    double g = nodes_[oi].grad.at(0);
    Tensor& dx = grad_slot(xi);
    for (size_t i = 0; i < dx.numel(); ++i) dx.at(i) += g;
  };
  return push(std::move(n));
}

Var Tape::detach(Var x) {
  Node n;
  n.op = "detach";
  n.value = val(x.index);
  n.requires_grad = false;
  return push(std::move(n));
}

Var Tape::dropout(Var x, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  const Tensor& tx = val(x.index);
  std::vector<uint8_t> keep(tx.numel());
  double inv_keep = 1.0 / (1.0 - rate);
  Node n;
  n.op = "dropout";
  n.value = Tensor(tx.shape());
  for (size_t i = 0; i < tx.numel(); ++i) {
    keep[i] = rng.uniform() >= rate ? 1 : 0;
    n.value.at(i) = keep[i] ? tx.at(i) * inv_keep : 0.0;
  }
  n.requires_grad = wants(x.index);
  int xi = x.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, xi, oi, keep = std::move(keep), inv_keep] {
    if (!wants(xi)) return;
    const Tensor& g = nodes_[oi].grad;
    Tensor& dx = grad_slot(xi);
    for (size_t i = 0; i < g.numel(); ++i)
      if (keep[i]) dx.at(i) += g.at(i) * inv_keep;
  };
  return push(std::move(n));
}

Var Tape::weighted_bce(Var probs, const std::vector<int>& labels, double w0,
                       double w1) {
  const Tensor& tp = val(probs.index);
  require(tp.numel() == labels.size(), ErrorCode::ShapeMismatch,
          "weighted_bce label count");
  require(tp.numel() > 0, ErrorCode::ShapeMismatch, "weighted_bce empty input");
  double weight_sum = 0.0;
  double acc = 0.0;
  std::vector<double> clamped(tp.numel());
  for (size_t i = 0; i < tp.numel(); ++i) {
    double p = std::clamp(tp.at(i), kProbClamp, 1.0 - kProbClamp);
    clamped[i] = p;
    double w = labels[i] ? w1 : w0;
    weight_sum += w;
    acc += labels[i] ? w * std::log(p) : w * std::log(1.0 - p);
  }
  Node n;
  n.op = "weighted_bce";
  n.value = Tensor::scalar(-acc / weight_sum);
  n.requires_grad = wants(probs.index);
  int pi = probs.index;
  int oi = static_cast<int>(nodes_.size());
  n.backprop = [this, pi, oi, labels, weight_sum, w0, w1,
                clamped = std::move(clamped)] {
    if (!wants(pi)) return;
    double g = nodes_[oi].grad.at(0);
    const Tensor& tp2 = val(pi);
    Tensor& dp = grad_slot(pi);
    for (size_t i = 0; i < tp2.numel(); ++i) {
      // Zero gradient where the clamp is active.
      if (tp2.at(i) < kProbClamp || tp2.at(i) > 1.0 - kProbClamp) continue;
      double p = clamped[i];
      double w = labels[i] ? w1 : w0;
      double d = labels[i] ? -w / p : w / (1.0 - p);
      dp.at(i) += g * d / weight_sum;
    }
  };
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  if (backward_done_)
    throw Error(ErrorCode::DoubleBackward, "backward already ran on this tape");
  const Tensor& lv = val(loss.index);
  if (lv.numel() != 1)
    throw Error(ErrorCode::NonScalarLoss, "backward requires a scalar loss");
  backward_done_ = true;
  grad_slot(loss.index).at(0) = 1.0;
  for (int i = loss.index; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backprop) continue;
    n.backprop();
  }
}

double grad_check(const GraphBuilder& f, const std::vector<Tensor>& inputs,
                  double h_scale) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t, true));
  Var loss = f(tape, leaves);
  tape.backward(loss);

  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t2;
    std::vector<Var> ls;
    ls.reserve(xs.size());
    for (const Tensor& x : xs) ls.push_back(t2.leaf(x, false));
    Var l = f(t2, ls);
    return t2.value(l).item();
  };

  double max_err = 0.0;
  std::vector<Tensor> work = inputs;
  for (size_t t = 0; t < inputs.size(); ++t) {
    const Tensor& analytic = tape.grad(leaves[t]);
    for (size_t i = 0; i < inputs[t].numel(); ++i) {
      double x0 = inputs[t].at(i);
      double h = h_scale * std::max(1.0, std::abs(x0));
      work[t].at(i) = x0 + h;
      double up = eval(work);
      work[t].at(i) = x0 - h;
      double down = eval(work);
      work[t].at(i) = x0;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic.empty() ? 0.0 : analytic.at(i);
      double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace chapterkit::autograd
