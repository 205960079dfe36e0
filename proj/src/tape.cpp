// Copyright 2026 The HotFlip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hotflip/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hotflip::diff {

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw ContractError("Var does not belong to this tape");
  }
  return nodes_[v.id];
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(value), {}, recording_ ? std::move(back) : nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

std::vector<double>& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

const std::vector<double>* Tape::grad_if_any(int id) const {
  const Node& n = nodes_[id];
  return n.grad.empty() ? nullptr : &n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor::zeros(n.value.shape());
  return Tensor(n.value.shape(), n.grad);
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
  if (!node(a).value.same_shape(node(b).value)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + node(a).value.shape_str() +
                     " vs " + node(b).value.shape_str());
  }
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor(x.shape(), std::move(out)), [a, b, oid](Tape& t) {
    const auto* g = t.grad_if_any(oid);
    if (!g) return;
    auto& ga = t.grad_buf(a.id);
    for (std::size_t i = 0; i < g->size(); ++i) ga[i] += (*g)[i];
    auto& gb = t.grad_buf(b.id);
    for (std::size_t i = 0; i < g->size(); ++i) gb[i] += (*g)[i];
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor(x.shape(), std::move(out)), [a, b, oid](Tape& t) {
    const auto* g = t.grad_if_any(oid);
    if (!g) return;
    auto& ga = t.grad_buf(a.id);
    for (std::size_t i = 0; i < g->size(); ++i) ga[i] += (*g)[i];
    auto& gb = t.grad_buf(b.id);
    for (std::size_t i = 0; i < g->size(); ++i) gb[i] -= (*g)[i];
  });
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor(x.shape(), std::move(out)), [a, b, oid](Tape& t) {
    const auto* g = t.grad_if_any(oid);
    if (!g) return;
    const Tensor& xv = t.nodes_[a.id].value;
    const Tensor& yv = t.nodes_[b.id].value;
    {
      auto& ga = t.grad_buf(a.id);
      for (std::size_t i = 0; i < g->size(); ++i) ga[i] += (*g)[i] * yv[i];
    }
    {
      auto& gb = t.grad_buf(b.id);
      for (std::size_t i = 0; i < g->size(); ++i) gb[i] += (*g)[i] * xv[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  const Tensor& x = node(a).value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * c;
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor(x.shape(), std::move(out)), [a, c, oid](Tape& t) {
    const auto* g = t.grad_if_any(oid);
    if (!g) return;
    auto& ga = t.grad_buf(a.id);
    for (std::size_t i = 0; i < g->size(); ++i) ga[i] += (*g)[i] * c;
  });
}

Var Tape::map_unary(Var a, double (*f)(double), double (*df)(double, double)) {
  const Tensor& x = node(a).value;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor(x.shape(), std::move(out)), [a, df, oid](Tape& t) {
    const auto* g = t.grad_if_any(oid);
    if (!g) return;
    const Tensor& xv = t.nodes_[a.id].value;
    const Tensor& yv = t.nodes_[oid].value;
    auto& ga = t.grad_buf(a.id);
    for (std::size_t i = 0; i < g->size(); ++i) ga[i] += (*g)[i] * df(xv[i], yv[i]);
  });
}

Var Tape::tanh(Var a) {
  return map_unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var Tape::sigmoid(Var a) {
  return map_unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var Tape::relu(Var a) {
  return map_unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Tape::sum(Var a) {
  const Tensor& x = node(a).value;
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor::scalar(s), [a, oid](Tape& t) {
    const auto* g = t.grad_if_any(oid);
    if (!g) return;
    const double gv = (*g)[0];
    auto& ga = t.grad_buf(a.id);
    for (double& v : ga) v += gv;
  });
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& x = node(a).value;
  const Tensor& y = node(b).value;
  if (x.rank() != 2 || y.rank() != 2) {
    throw ShapeError("matmul: expects rank-2 operands, got " + x.shape_str() + " and " +
                     y.shape_str());
  }
  if (x.dim(1) != y.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree, " + x.shape_str() + " vs " +
                     y.shape_str());
  }
  const std::size_t p = x.dim(0), q = x.dim(1), r = y.dim(1);
  std::vector<double> out(p * r, 0.0);
  {
    const double* xd = x.data();
    const double* yd = y.data();
    for (std::size_t i = 0; i < p; ++i) {
      double* orow = out.data() + i * r;
      for (std::size_t k = 0; k < q; ++k) {
        const double xv = xd[i * q + k];
        if (xv == 0.0) continue;  // one-hot rows are the common case
        const double* yrow = yd + k * r;
        for (std::size_t j = 0; j < r; ++j) orow[j] += xv * yrow[j];
      }
    }
  }
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor({p, r}, std::move(out)), [a, b, oid, p, q, r](Tape& t) {
    const auto* g = t.grad_if_any(oid);
    if (!g) return;
    const double* gd = g->data();
    const double* xd = t.nodes_[a.id].value.data();
    const double* yd = t.nodes_[b.id].value.data();
    {
      // ga += g . b^T
      auto& ga = t.grad_buf(a.id);
      for (std::size_t i = 0; i < p; ++i) {
        const double* grow = gd + i * r;
        double* garow = ga.data() + i * q;
        for (std::size_t k = 0; k < q; ++k) {
          const double* yrow = yd + k * r;
          double acc = 0.0;
          for (std::size_t j = 0; j < r; ++j) acc += grow[j] * yrow[j];
          garow[k] += acc;
        }
      }
    }
    {
      // gb += a^T . g
      auto& gb = t.grad_buf(b.id);
      for (std::size_t i = 0; i < p; ++i) {
        const double* grow = gd + i * r;
        for (std::size_t k = 0; k < q; ++k) {
          const double xv = xd[i * q + k];
          if (xv == 0.0) continue;
          double* gbrow = gb.data() + k * r;
          for (std::size_t j = 0; j < r; ++j) gbrow[j] += xv * grow[j];
        }
      }
    }
  });
}

Var Tape::affine(Var x, Var w, Var b) {
  const Tensor& xv = node(x).value;
  const Tensor& wv = node(w).value;
  const Tensor& bv = node(b).value;
  if (xv.rank() != 1 || wv.rank() != 2 || bv.rank() != 1) {
    throw ShapeError("affine: expects x:[q], w:[q x r], b:[r]");
  }
  const std::size_t q = xv.dim(0), r = wv.dim(1);
  if (wv.dim(0) != q || bv.dim(0) != r) {
    throw ShapeError("affine: shapes disagree, x " + xv.shape_str() + ", w " +
                     wv.shape_str() + ", b " + bv.shape_str());
  }
  std::vector<double> out(bv.vec());
  {
    const double* xd = xv.data();
    const double* wd = wv.data();
    for (std::size_t i = 0; i < q; ++i) {
      const double a = xd[i];
      if (a == 0.0) continue;
      const double* wrow = wd + i * r;
      for (std::size_t j = 0; j < r; ++j) out[j] += a * wrow[j];
    }
  }
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor({r}, std::move(out)), [x, w, b, oid, q, r](Tape& t) {
    const auto* g = t.grad_if_any(oid);
    if (!g) return;
    const double* gd = g->data();
    const double* xd = t.nodes_[x.id].value.data();
    const double* wd = t.nodes_[w.id].value.data();
    {
      auto& gx = t.grad_buf(x.id);
      for (std::size_t i = 0; i < q; ++i) {
        const double* wrow = wd + i * r;
        double acc = 0.0;
        for (std::size_t j = 0; j < r; ++j) acc += gd[j] * wrow[j];
        gx[i] += acc;
      }
    }
    {
      auto& gw = t.grad_buf(w.id);
      for (std::size_t i = 0; i < q; ++i) {
        const double a = xd[i];
        if (a == 0.0) continue;
        double* gwrow = gw.data() + i * r;
        for (std::size_t j = 0; j < r; ++j) gwrow[j] += a * gd[j];
      }
    }
    {
      auto& gb = t.grad_buf(b.id);
      for (std::size_t j = 0; j < r; ++j) gb[j] += gd[j];
    }
  });
}

Var Tape::conv1d(Var input, Var kernels) {
  const Tensor& xv = node(input).value;
  const Tensor& kv = node(kernels).value;
  if (xv.rank() != 2 || kv.rank() != 3) {
    throw ShapeError("conv1d: expects input:[T x C], kernels:[W x C x O]");
  }
  const std::size_t T = xv.dim(0), C = xv.dim(1);
  const std::size_t W = kv.dim(0), O = kv.dim(2);
  if (kv.dim(1) != C) {
    throw ShapeError("conv1d: channel mismatch, input " + xv.shape_str() + ", kernels " +
                     kv.shape_str());
  }
  if (T < W) {
    throw ShapeError("conv1d: input length " + std::to_string(T) +
                     " shorter than kernel width " + std::to_string(W));
  }
  const std::size_t TO = T - W + 1;
  std::vector<double> out(TO * O, 0.0);
  {
    const double* xd = xv.data();
    const double* kd = kv.data();
    for (std::size_t t = 0; t < TO; ++t) {
      double* orow = out.data() + t * O;
      for (std::size_t w = 0; w < W; ++w) {
        const double* xrow = xd + (t + w) * C;
        const double* kslab = kd + w * C * O;
        for (std::size_t c = 0; c < C; ++c) {
          const double a = xrow[c];
          if (a == 0.0) continue;
          const double* krow = kslab + c * O;
          for (std::size_t o = 0; o < O; ++o) orow[o] += a * krow[o];
        }
      }
    }
  }
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor({TO, O}, std::move(out)),
              [input, kernels, oid, TO, W, C, O](Tape& t) {
                const auto* g = t.grad_if_any(oid);
                if (!g) return;
                const double* gd = g->data();
                const double* xd = t.nodes_[input.id].value.data();
                const double* kd = t.nodes_[kernels.id].value.data();
                {
                  auto& gx = t.grad_buf(input.id);
                  for (std::size_t tt = 0; tt < TO; ++tt) {
                    const double* grow = gd + tt * O;
                    for (std::size_t w = 0; w < W; ++w) {
                      double* gxrow = gx.data() + (tt + w) * C;
                      const double* kslab = kd + w * C * O;
                      for (std::size_t c = 0; c < C; ++c) {
                        const double* krow = kslab + c * O;
                        double acc = 0.0;
                        for (std::size_t o = 0; o < O; ++o) acc += grow[o] * krow[o];
                        gxrow[c] += acc;
                      }
                    }
                  }
                }
                {
                  auto& gk = t.grad_buf(kernels.id);
                  for (std::size_t tt = 0; tt < TO; ++tt) {
                    const double* grow = gd + tt * O;
                    for (std::size_t w = 0; w < W; ++w) {
                      const double* xrow = xd + (tt + w) * C;
                      double* gkslab = gk.data() + w * C * O;
                      for (std::size_t c = 0; c < C; ++c) {
                        const double a = xrow[c];
                        if (a == 0.0) continue;
                        double* gkrow = gkslab + c * O;
                        for (std::size_t o = 0; o < O; ++o) gkrow[o] += a * grow[o];
                      }
                    }
                  }
                }
              });
}

Var Tape::max_over_time(Var a) {
  const Tensor& x = node(a).value;
  if (x.rank() != 2) throw ShapeError("max_over_time: expects [T x C]");
  const std::size_t T = x.dim(0), C = x.dim(1);
  if (T == 0) throw ShapeError("max_over_time: empty time axis");
  std::vector<double> out(C);
  std::vector<std::size_t> arg(C, 0);
  for (std::size_t c = 0; c < C; ++c) {
    double best = x.at2(0, c);
    std::size_t bt = 0;
    for (std::size_t t = 1; t < T; ++t) {
      const double v = x.at2(t, c);
      if (v > best) {  // strict: ties keep the lowest t
        best = v;
        bt = t;
      }
    }
    out[c] = best;
    arg[c] = bt;
  }
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor({C}, std::move(out)), [a, oid, C, arg = std::move(arg)](Tape& t) {
    const auto* g = t.grad_if_any(oid);
    if (!g) return;
    auto& ga = t.grad_buf(a.id);
    for (std::size_t c = 0; c < C; ++c) ga[arg[c] * C + c] += (*g)[c];
  });
}

Var Tape::concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  std::size_t total = 0;
  for (Var p : parts) {
    if (node(p).value.rank() != 1) throw ShapeError("concat: expects rank-1 parts");
    total += node(p).value.size();
  }
  std::vector<double> out;
  out.reserve(total);
  for (Var p : parts) {
    const auto& v = node(p).value.vec();
    out.insert(out.end(), v.begin(), v.end());
  }
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor({total}, std::move(out)), [parts, oid](Tape& t) {
    const auto* g = t.grad_if_any(oid);
    if (!g) return;
    std::size_t off = 0;
    for (Var p : parts) {
      auto& gp = t.grad_buf(p.id);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += (*g)[off + i];
      off += gp.size();
    }
  });
}

std::vector<double> Tape::softmax(const Tensor& logits) {
  if (logits.rank() != 1) throw ShapeError("softmax: expects rank-1 logits");
  const std::size_t n = logits.size();
  double m = logits[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, logits[i]);
  std::vector<double> p(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

Var Tape::softmax_cross_entropy(Var logits, int label) {
  const Tensor& x = node(logits).value;
  if (x.rank() != 1) throw ShapeError("softmax_cross_entropy: expects rank-1 logits");
  if (label < 0 || static_cast<std::size_t>(label) >= x.size()) {
    throw NumericError("softmax_cross_entropy: label " + std::to_string(label) +
                       " out of range for " + std::to_string(x.size()) + " classes");
  }
  const std::size_t n = x.size();
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(x[i] - m);
  const double loss = m + std::log(z) - x[label];
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) probs[i] = std::exp(x[i] - m) / z;
  const int oid = static_cast<int>(nodes_.size());
  return push(Tensor::scalar(loss),
              [logits, label, oid, probs = std::move(probs)](Tape& t) {
                const auto* g = t.grad_if_any(oid);
                if (!g) return;
                const double gv = (*g)[0];
                auto& gl = t.grad_buf(logits.id);
                for (std::size_t i = 0; i < gl.size(); ++i) {
                  const double onehot = (static_cast<int>(i) == label) ? 1.0 : 0.0;
                  gl[i] += gv * (probs[i] - onehot);
                }
              });
}

void Tape::backward(Var loss) {
  if (!recording_) throw ContractError("backward on a non-recording tape");
  if (consumed_) throw ContractError("backward: record already consumed");
  const Node& ln = node(loss);
  if (!ln.value.is_scalar()) {
    throw ContractError("backward: loss must be scalar, got " + ln.value.shape_str());
  }
  grad_buf(loss.id)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back(*this);
  }
  consumed_ = true;
}

}  // namespace hotflip::diff
