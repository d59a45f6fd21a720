#include "tpcap/autograd.hpp"

#include <cmath>

namespace tpcap {

Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.grad = Mat(n.value.rows, n.value.cols);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Mat v) { return push(std::move(v), false, nullptr); }

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{it->second};
  if (!p.materialized) {
    throw ConfigError("parameter used before materialization: " + p.name);
  }
  Var v = push(p.value, p.trainable, nullptr);
  nodes_[v.id].bound_param = &p;
  param_nodes_[&p] = v.id;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  Mat out = tpcap::matmul(av, bv);
  const bool ng = needs_grad(a) || needs_grad(b);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[r.id].back = [a, b, r](Tape& t) {
      const Mat& g = t.grad(r);
      if (t.needs_grad(a)) matmul_nt_acc(g, t.value(b), t.grad(a));
      if (t.needs_grad(b)) matmul_tn_acc(t.value(a), g, t.grad(b));
    };
  }
  return r;
}

Var Tape::matmul_nt(Var a, Var b) {
  Mat out = tpcap::matmul_nt(value(a), value(b));
  const bool ng = needs_grad(a) || needs_grad(b);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[r.id].back = [a, b, r](Tape& t) {
      // C = A B^T: dA += dC * B ; dB += dC^T * A
      const Mat& g = t.grad(r);
      if (t.needs_grad(a)) matmul_acc(g, t.value(b), t.grad(a));
      if (t.needs_grad(b)) matmul_tn_acc(g, t.value(a), t.grad(b));
    };
  }
  return r;
}

Var Tape::add(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
  Mat out = av + bv;
  const bool ng = needs_grad(a) || needs_grad(b);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[r.id].back = [a, b, r](Tape& t) {
      const Mat& g = t.grad(r);
      if (t.needs_grad(a)) add_inplace(t.grad(a), g);
      if (t.needs_grad(b)) add_inplace(t.grad(b), g);
    };
  }
  return r;
}

Var Tape::add_row(Var a, Var bias) {
  const Mat& av = value(a);
  const Mat& bv = value(bias);
  if (bv.rows != 1 || bv.cols != av.cols) {
    throw ShapeError("add_row: bias must be 1 x cols");
  }
  Mat out = av;
  for (int i = 0; i < out.rows; ++i) {
    double* row = out.row_ptr(i);
    for (int j = 0; j < out.cols; ++j) row[j] += bv.data[j];
  }
  const bool ng = needs_grad(a) || needs_grad(bias);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[r.id].back = [a, bias, r](Tape& t) {
      const Mat& g = t.grad(r);
      if (t.needs_grad(a)) add_inplace(t.grad(a), g);
      if (t.needs_grad(bias)) {
        Mat& bg = t.grad(bias);
        for (int i = 0; i < g.rows; ++i) {
          const double* row = g.row_ptr(i);
          for (int j = 0; j < g.cols; ++j) bg.data[j] += row[j];
        }
      }
    };
  }
  return r;
}

Var Tape::scale(Var a, double s) {
  Mat out = value(a) * s;
  const bool ng = needs_grad(a);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[r.id].back = [a, s, r](Tape& t) {
      const Mat& g = t.grad(r);
      Mat& ag = t.grad(a);
      for (size_t i = 0; i < ag.data.size(); ++i) ag.data[i] += g.data[i] * s;
    };
  }
  return r;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty");
  int rows = 0;
  const int cols = value(parts[0]).cols;
  bool ng = false;
  for (Var p : parts) {
    if (value(p).cols != cols) throw ShapeError("concat_rows: cols mismatch");
    rows += value(p).rows;
    ng = ng || needs_grad(p);
  }
  Mat out(rows, cols);
  int r0 = 0;
  for (Var p : parts) {
    const Mat& pv = value(p);
    for (int i = 0; i < pv.rows; ++i) {
      std::copy(pv.row_ptr(i), pv.row_ptr(i) + cols, out.row_ptr(r0 + i));
    }
    r0 += pv.rows;
  }
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    std::vector<Var> ps = parts;
    nodes_[r.id].back = [ps, r](Tape& t) {
      const Mat& g = t.grad(r);
      int row = 0;
      for (Var p : ps) {
        const int pr = t.value(p).rows;
        if (t.needs_grad(p)) {
          Mat& pg = t.grad(p);
          for (int i = 0; i < pr; ++i) {
            const double* src = g.row_ptr(row + i);
            double* dst = pg.row_ptr(i);
            for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
          }
        }
        row += pr;
      }
    };
  }
  return r;
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  const Mat& av = value(a);
  if (r0 < 0 || r1 > av.rows || r0 > r1) {
    throw ShapeError("slice_rows: bad range");
  }
  Mat out(r1 - r0, av.cols);
  for (int i = r0; i < r1; ++i) {
    std::copy(av.row_ptr(i), av.row_ptr(i) + av.cols, out.row_ptr(i - r0));
  }
  const bool ng = needs_grad(a);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[r.id].back = [a, r0, r](Tape& t) {
      const Mat& g = t.grad(r);
      Mat& ag = t.grad(a);
      for (int i = 0; i < g.rows; ++i) {
        const double* src = g.row_ptr(i);
        double* dst = ag.row_ptr(r0 + i);
        for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
      }
    };
  }
  return r;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty");
  const int rows = value(parts[0]).rows;
  int cols = 0;
  bool ng = false;
  for (Var p : parts) {
    if (value(p).rows != rows) throw ShapeError("concat_cols: rows mismatch");
    cols += value(p).cols;
    ng = ng || needs_grad(p);
  }
  Mat out(rows, cols);
  int c0 = 0;
  for (Var p : parts) {
    const Mat& pv = value(p);
    for (int i = 0; i < rows; ++i) {
      std::copy(pv.row_ptr(i), pv.row_ptr(i) + pv.cols, out.row_ptr(i) + c0);
    }
    c0 += pv.cols;
  }
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    std::vector<Var> ps = parts;
    nodes_[r.id].back = [ps, r](Tape& t) {
      const Mat& g = t.grad(r);
      int col = 0;
      for (Var p : ps) {
        const int pc = t.value(p).cols;
        if (t.needs_grad(p)) {
          Mat& pg = t.grad(p);
          for (int i = 0; i < g.rows; ++i) {
            const double* src = g.row_ptr(i) + col;
            double* dst = pg.row_ptr(i);
            for (int j = 0; j < pc; ++j) dst[j] += src[j];
          }
        }
        col += pc;
      }
    };
  }
  return r;
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const Mat& av = value(a);
  if (c0 < 0 || c1 > av.cols || c0 > c1) {
    throw ShapeError("slice_cols: bad range");
  }
  Mat out(av.rows, c1 - c0);
  for (int i = 0; i < av.rows; ++i) {
    std::copy(av.row_ptr(i) + c0, av.row_ptr(i) + c1, out.row_ptr(i));
  }
  const bool ng = needs_grad(a);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[r.id].back = [a, c0, r](Tape& t) {
      const Mat& g = t.grad(r);
      Mat& ag = t.grad(a);
      for (int i = 0; i < g.rows; ++i) {
        const double* src = g.row_ptr(i);
        double* dst = ag.row_ptr(i) + c0;
        for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
      }
    };
  }
  return r;
}

static void softmax_row(const double* x, double* y, int lo, int hi, int n) {
  double mx = x[lo];
  for (int j = lo; j < hi; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) y[j] = 0.0;
  for (int j = lo; j < hi; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  for (int j = lo; j < hi; ++j) y[j] /= sum;
}

static void softmax_backward_row(const double* y, const double* gy, double* gx,
                                 int lo, int hi) {
  double dot = 0.0;
  for (int j = lo; j < hi; ++j) dot += gy[j] * y[j];
  for (int j = lo; j < hi; ++j) gx[j] += y[j] * (gy[j] - dot);
}

Var Tape::softmax_rows(Var a) {
  const Mat& av = value(a);
  Mat out(av.rows, av.cols);
  for (int i = 0; i < av.rows; ++i) {
    softmax_row(av.row_ptr(i), out.row_ptr(i), 0, av.cols, av.cols);
  }
  const bool ng = needs_grad(a);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[r.id].back = [a, r](Tape& t) {
      const Mat& y = t.value(r);
      const Mat& g = t.grad(r);
      Mat& ag = t.grad(a);
      for (int i = 0; i < y.rows; ++i) {
        softmax_backward_row(y.row_ptr(i), g.row_ptr(i), ag.row_ptr(i), 0,
                             y.cols);
      }
    };
  }
  return r;
}

Var Tape::softmax_causal(Var a) {
  const Mat& av = value(a);
  if (av.rows != av.cols) throw ShapeError("softmax_causal: square required");
  Mat out(av.rows, av.cols);
  for (int i = 0; i < av.rows; ++i) {
    softmax_row(av.row_ptr(i), out.row_ptr(i), 0, i + 1, av.cols);
  }
  const bool ng = needs_grad(a);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[r.id].back = [a, r](Tape& t) {
      const Mat& y = t.value(r);
      const Mat& g = t.grad(r);
      Mat& ag = t.grad(a);
      for (int i = 0; i < y.rows; ++i) {
        softmax_backward_row(y.row_ptr(i), g.row_ptr(i), ag.row_ptr(i), 0,
                             i + 1);
      }
    };
  }
  return r;
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Mat& xv = value(x);
  const int C = xv.cols;
  if (value(gamma).cols != C || value(beta).cols != C) {
    throw ShapeError("layer_norm: gamma/beta width mismatch");
  }
  Mat out(xv.rows, C);
  Mat xhat(xv.rows, C);
  std::vector<double> inv_sigma(xv.rows);
  const double* gm = value(gamma).row_ptr(0);
  const double* bt = value(beta).row_ptr(0);
  for (int i = 0; i < xv.rows; ++i) {
    const double* row = xv.row_ptr(i);
    double mu = 0.0;
    for (int j = 0; j < C; ++j) mu += row[j];
    mu /= C;
    double var = 0.0;
    for (int j = 0; j < C; ++j) {
      const double d = row[j] - mu;
      var += d * d;
    }
    var /= C;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = is;
    double* hrow = xhat.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (int j = 0; j < C; ++j) {
      hrow[j] = (row[j] - mu) * is;
      orow[j] = hrow[j] * gm[j] + bt[j];
    }
  }
  const bool ng = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    auto xh = std::make_shared<Mat>(std::move(xhat));
    auto is = std::make_shared<std::vector<double>>(std::move(inv_sigma));
    nodes_[r.id].back = [x, gamma, beta, r, xh, is](Tape& t) {
      const Mat& g = t.grad(r);
      const int C = g.cols;
      const double* gm = t.value(gamma).row_ptr(0);
      for (int i = 0; i < g.rows; ++i) {
        const double* grow = g.row_ptr(i);
        const double* hrow = xh->row_ptr(i);
        if (t.needs_grad(gamma)) {
          double* gg = t.grad(gamma).row_ptr(0);
          for (int j = 0; j < C; ++j) gg[j] += grow[j] * hrow[j];
        }
        if (t.needs_grad(beta)) {
          double* gb = t.grad(beta).row_ptr(0);
          for (int j = 0; j < C; ++j) gb[j] += grow[j];
        }
        if (t.needs_grad(x)) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (int j = 0; j < C; ++j) {
            const double dh = grow[j] * gm[j];
            mean_dh += dh;
            mean_dh_h += dh * hrow[j];
          }
          mean_dh /= C;
          mean_dh_h /= C;
          double* gx = t.grad(x).row_ptr(i);
          const double s = (*is)[i];
          for (int j = 0; j < C; ++j) {
            const double dh = grow[j] * gm[j];
            gx[j] += s * (dh - mean_dh - hrow[j] * mean_dh_h);
          }
        }
      }
    };
  }
  return r;
}

Var Tape::gelu(Var a) {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  const Mat& av = value(a);
  Mat out(av.rows, av.cols);
  for (size_t i = 0; i < av.data.size(); ++i) {
    const double x = av.data[i];
    const double u = kC * (x + kA * x * x * x);
    out.data[i] = 0.5 * x * (1.0 + std::tanh(u));
  }
  const bool ng = needs_grad(a);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    nodes_[r.id].back = [a, r](Tape& t) {
      const Mat& xv = t.value(a);
      const Mat& g = t.grad(r);
      Mat& ag = t.grad(a);
      for (size_t i = 0; i < xv.data.size(); ++i) {
        const double x = xv.data[i];
        const double u = kC * (x + kA * x * x * x);
        const double th = std::tanh(u);
        const double du = kC * (1.0 + 3.0 * kA * x * x);
        const double d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
        ag.data[i] += g.data[i] * d;
      }
    };
  }
  return r;
}

Var Tape::embed(Var table, const std::vector<int>& ids) {
  const Mat& tv = value(table);
  for (int id : ids) {
    if (id < 0 || id >= tv.rows) {
      throw InputError("embed: token id out of range: " + std::to_string(id));
    }
  }
  Mat out(static_cast<int>(ids.size()), tv.cols);
  for (size_t i = 0; i < ids.size(); ++i) {
    std::copy(tv.row_ptr(ids[i]), tv.row_ptr(ids[i]) + tv.cols,
              out.row_ptr(static_cast<int>(i)));
  }
  const bool ng = needs_grad(table);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    std::vector<int> idv = ids;
    nodes_[r.id].back = [table, idv, r](Tape& t) {
      const Mat& g = t.grad(r);
      Mat& tg = t.grad(table);
      for (size_t i = 0; i < idv.size(); ++i) {
        const double* src = g.row_ptr(static_cast<int>(i));
        double* dst = tg.row_ptr(idv[i]);
        for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
      }
    };
  }
  return r;
}

Var Tape::cross_entropy_sum(Var logits, const std::vector<int>& rows,
                            const std::vector<int>& targets) {
  if (rows.size() != targets.size()) {
    throw InputError("cross_entropy_sum: rows/targets length mismatch");
  }
  const Mat& lv = value(logits);
  double loss = 0.0;
  for (size_t k = 0; k < rows.size(); ++k) {
    const int ri = rows[k];
    const int ti = targets[k];
    if (ri < 0 || ri >= lv.rows) throw InputError("cross_entropy: bad row");
    if (ti < 0 || ti >= lv.cols) throw InputError("cross_entropy: bad target");
    const double* row = lv.row_ptr(ri);
    double mx = row[0];
    for (int j = 1; j < lv.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < lv.cols; ++j) sum += std::exp(row[j] - mx);
    loss += (std::log(sum) + mx) - row[ti];
  }
  Mat out(1, 1);
  out.data[0] = loss;
  const bool ng = needs_grad(logits);
  Var r = push(std::move(out), ng, nullptr);
  if (ng) {
    std::vector<int> rv = rows, tv = targets;
    nodes_[r.id].back = [logits, rv, tv, r](Tape& t) {
      const double gscale = t.grad(r).data[0];
      const Mat& lvv = t.value(logits);
      Mat& lg = t.grad(logits);
      for (size_t k = 0; k < rv.size(); ++k) {
        const int ri = rv[k];
        const double* row = lvv.row_ptr(ri);
        double mx = row[0];
        for (int j = 1; j < lvv.cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < lvv.cols; ++j) sum += std::exp(row[j] - mx);
        double* grow = lg.row_ptr(ri);
        for (int j = 0; j < lvv.cols; ++j) {
          const double p = std::exp(row[j] - mx) / sum;
          grow[j] += gscale * (p - (j == tv[k] ? 1.0 : 0.0));
        }
      }
    };
  }
  return r;
}

Var Tape::affine(Var x, Parameter& w, Parameter& b) {
  return add_row(matmul(x, param(w)), param(b));
}

void Tape::backward(Var root) {
  const Mat& rv = value(root);
  if (rv.rows != 1 || rv.cols != 1) {
    throw ShapeError("backward: root must be a 1x1 scalar");
  }
  if (!needs_grad(root)) return;
  grad(root).data[0] = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.needs_grad && n.back) n.back(*this);
  }
  // Flush leaf gradients into their parameters.
  for (auto& [p, id] : param_nodes_) {
    Node& n = nodes_[id];
    if (n.needs_grad && n.bound_param) {
      add_inplace(n.bound_param->grad, n.grad);
    }
  }
}

Var attention(Tape& t, Var q_in, Var kv_in, const AttnParams& w, int n_heads,
              bool causal) {
  const int d = t.value(q_in).cols;
  if (d != w.wq->rows() || d % n_heads != 0) {
    throw ShapeError("attention: width mismatch");
  }
  const int dh = d / n_heads;
  Var q = t.affine(q_in, *w.wq, *w.bq);
  Var k = t.affine(kv_in, *w.wk, *w.bk);
  Var v = t.affine(kv_in, *w.wv, *w.bv);
  std::vector<Var> heads;
  heads.reserve(n_heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < n_heads; ++h) {
    Var qh = t.slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = t.slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = t.slice_cols(v, h * dh, (h + 1) * dh);
    Var scores = t.scale(t.matmul_nt(qh, kh), inv_sqrt);
    Var probs = causal ? t.softmax_causal(scores) : t.softmax_rows(scores);
    heads.push_back(t.matmul(probs, vh));
  }
  Var merged = n_heads == 1 ? heads[0] : t.concat_cols(heads);
  return t.affine(merged, *w.wo, *w.bo);
}

AttnParams declare_attention(ParameterRegistry& reg, const std::string& prefix,
                             int d, bool trainable) {
  AttnParams w;
  w.wq = &reg.declare(prefix + ".wq", {d, d}, trainable);
  w.bq = &reg.declare(prefix + ".bq", {1, d}, trainable);
  w.wk = &reg.declare(prefix + ".wk", {d, d}, trainable);
  w.bk = &reg.declare(prefix + ".bk", {1, d}, trainable);
  w.wv = &reg.declare(prefix + ".wv", {d, d}, trainable);
  w.bv = &reg.declare(prefix + ".bv", {1, d}, trainable);
  w.wo = &reg.declare(prefix + ".wo", {d, d}, trainable);
  w.bo = &reg.declare(prefix + ".bo", {1, d}, trainable);
  return w;
}

void init_attention(const AttnParams& w, Rng& rng, double std) {
  ParameterRegistry::init_gaussian(*w.wq, rng, std);
  ParameterRegistry::init_zeros(*w.bq);
  ParameterRegistry::init_gaussian(*w.wk, rng, std);
  ParameterRegistry::init_zeros(*w.bk);
  ParameterRegistry::init_gaussian(*w.wv, rng, std);
  ParameterRegistry::init_zeros(*w.bv);
  ParameterRegistry::init_gaussian(*w.wo, rng, std);
  ParameterRegistry::init_zeros(*w.bo);
}

}  // namespace tpcap
