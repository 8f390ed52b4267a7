// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "e2est/errors.hpp"
#include "eigen_maps.hpp"

namespace e2est::ops {

using detail::as_mat;
using detail::as_row;

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

Tensor mat_like(const Tensor& t) { return Tensor::matrix(t.rows(), t.cols()); }

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  return g.emit("matmul", std::move(out), {a, b}, [a, b](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(a)) as_mat(g.grad(a)).noalias() += as_mat(dy) * as_mat(g.value(b)).transpose();
    if (g.requires_grad(b)) as_mat(g.grad(b)).noalias() += as_mat(g.value(a)).transpose() * as_mat(dy);
  });
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("add", av, bv);
  Tensor out = mat_like(av);
  as_mat(out) = as_mat(av) + as_mat(bv);
  return g.emit("add", std::move(out), {a, b}, [a, b](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(a)) as_mat(g.grad(a)) += as_mat(dy);
    if (g.requires_grad(b)) as_mat(g.grad(b)) += as_mat(dy);
  });
}

Var sub(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("sub", av, bv);
  Tensor out = mat_like(av);
  as_mat(out) = as_mat(av) - as_mat(bv);
  return g.emit("sub", std::move(out), {a, b}, [a, b](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(a)) as_mat(g.grad(a)) += as_mat(dy);
    if (g.requires_grad(b)) as_mat(g.grad(b)) -= as_mat(dy);
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("mul", av, bv);
  Tensor out = mat_like(av);
  as_mat(out) = as_mat(av).cwiseProduct(as_mat(bv));
  return g.emit("mul", std::move(out), {a, b}, [a, b](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(a)) as_mat(g.grad(a)) += as_mat(dy).cwiseProduct(as_mat(g.value(b)));
    if (g.requires_grad(b)) as_mat(g.grad(b)) += as_mat(dy).cwiseProduct(as_mat(g.value(a)));
  });
}

Var add_row(Graph& g, Var a, Var row) {
  const Tensor& av = g.value(a);
  const Tensor& rv = g.value(row);
  if (rv.size() != av.cols()) shape_fail("add_row", av, rv);
  Tensor out = mat_like(av);
  as_mat(out) = as_mat(av).rowwise() + as_row(rv);
  return g.emit("add_row", std::move(out), {a, row}, [a, row](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(a)) as_mat(g.grad(a)) += as_mat(dy);
    if (g.requires_grad(row)) {
      Tensor& dr = g.grad(row);
      as_row(dr) += as_mat(dy).colwise().sum();
    }
  });
}

Var scale(Graph& g, Var a, double s) {
  const Tensor& av = g.value(a);
  Tensor out = mat_like(av);
  as_mat(out) = as_mat(av) * s;
  return g.emit("scale", std::move(out), {a}, [a, s](Graph& g, Var self) {
    as_mat(g.grad(a)) += as_mat(g.grad(self)) * s;
  });
}

Var sigmoid(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  Tensor out = mat_like(av);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigm(av[i]);
  return g.emit("sigmoid", std::move(out), {a}, [a](Graph& g, Var self) {
    const Tensor& y = g.value(self);
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(a);
    for (std::size_t i = 0; i < y.size(); ++i) da[i] += dy[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  Tensor out = mat_like(av);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  return g.emit("tanh", std::move(out), {a}, [a](Graph& g, Var self) {
    const Tensor& y = g.value(self);
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(a);
    for (std::size_t i = 0; i < y.size(); ++i) da[i] += dy[i] * (1.0 - y[i] * y[i]);
  });
}

Var sum(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  double s = 0.0;
  for (double v : av.data()) s += v;
  return g.emit("sum", Tensor::scalar(s), {a}, [a](Graph& g, Var self) {
    const double d = g.grad(self)[0];
    for (double& v : g.grad(a).storage()) v += d;
  });
}

Var concat_cols(Graph& g, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = g.value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (g.value(p).rows() != rows) shape_fail("concat_cols", g.value(parts[0]), g.value(p));
    cols += g.value(p).cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = g.value(p);
    as_mat(out).middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(pv.cols())) = as_mat(pv);
    off += pv.cols();
  }
  return g.emit("concat_cols", std::move(out), parts, [parts](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t c = g.value(p).cols();
      if (g.requires_grad(p)) {
        as_mat(g.grad(p)) += as_mat(dy).middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(c));
      }
      off += c;
    }
  });
}

Var slice_cols(Graph& g, Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = g.value(a);
  if (count == 0 || begin + count > av.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of " + shape_str(av.shape()));
  }
  Tensor out = Tensor::matrix(av.rows(), count);
  as_mat(out) = as_mat(av).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  return g.emit("slice_cols", std::move(out), {a}, [a, begin, count](Graph& g, Var self) {
    as_mat(g.grad(a)).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        as_mat(g.grad(self));
  });
}

Var concat_rows(Graph& g, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = g.value(parts[0]).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (g.value(p).cols() != cols) shape_fail("concat_rows", g.value(parts[0]), g.value(p));
    rows += g.value(p).rows();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = g.value(p);
    std::copy(pv.data().begin(), pv.data().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(off * cols));
    off += pv.rows();
  }
  return g.emit("concat_rows", std::move(out), parts, [parts](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t n = g.value(p).size();
      if (g.requires_grad(p)) {
        Tensor& dp = g.grad(p);
        for (std::size_t i = 0; i < n; ++i) dp[i] += dy[off + i];
      }
      off += n;
    }
  });
}

Var slice_rows(Graph& g, Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = g.value(a);
  if (count == 0 || begin + count > av.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of " + shape_str(av.shape()));
  }
  const std::size_t cols = av.cols();
  Tensor out = Tensor::matrix(count, cols);
  std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(begin * cols), count * cols, out.storage().begin());
  return g.emit("slice_rows", std::move(out), {a}, [a, begin, cols](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(a);
    for (std::size_t i = 0; i < dy.size(); ++i) da[begin * cols + i] += dy[i];
  });
}

Var gather_rows(Graph& g, Var table, std::span<const std::size_t> ids) {
  const Tensor& tv = g.value(table);
  const std::size_t cols = tv.cols();
  if (ids.empty()) throw ShapeError("gather_rows: empty id list");
  Tensor out = Tensor::matrix(ids.size(), cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[r]) + " out of range for table with " +
                       std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(ids[r] * cols), cols,
                out.storage().begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return g.emit("gather_rows", std::move(out), {table}, [table, idx = std::move(idx), cols](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    Tensor& dt = g.grad(table);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) dt[idx[r] * cols + c] += dy[r * cols + c];
    }
  });
}

Var scale_rows(Graph& g, Var a, std::span<const double> weights) {
  const Tensor& av = g.value(a);
  if (weights.size() != av.rows()) throw ShapeError("scale_rows: weight count does not match rows");
  const std::size_t cols = av.cols();
  Tensor out = mat_like(av);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = av[r * cols + c] * weights[r];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return g.emit("scale_rows", std::move(out), {a}, [a, w = std::move(w), cols](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(a);
    for (std::size_t r = 0; r < w.size(); ++r) {
      if (w[r] == 0.0) continue;
      for (std::size_t c = 0; c < cols; ++c) da[r * cols + c] += dy[r * cols + c] * w[r];
    }
  });
}

Var mul_const(Graph& g, Var a, const Tensor& c) {
  const Tensor& av = g.value(a);
  if (av.size() != c.size()) shape_fail("mul_const", av, c);
  Tensor out = mat_like(av);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c[i];
  return g.emit("mul_const", std::move(out), {a}, [a, c](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(a);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * c[i];
  });
}

Var select_batch(Graph& g, Var a, std::size_t steps, std::size_t old_batch, std::span<const std::size_t> index) {
  const Tensor& av = g.value(a);
  if (av.rows() != steps * old_batch) throw ShapeError("select_batch: rows do not match steps * batch");
  const std::size_t cols = av.cols();
  const std::size_t nb = index.size();
  if (nb == 0) throw ShapeError("select_batch: empty index");
  Tensor out = Tensor::matrix(steps * nb, cols);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (index[j] >= old_batch) throw ShapeError("select_batch: index out of range");
      std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>((t * old_batch + index[j]) * cols), cols,
                  out.storage().begin() + static_cast<std::ptrdiff_t>((t * nb + j) * cols));
    }
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return g.emit("select_batch", std::move(out), {a},
                [a, idx = std::move(idx), steps, old_batch, cols](Graph& g, Var self) {
                  const Tensor& dy = g.grad(self);
                  Tensor& da = g.grad(a);
                  const std::size_t nb = idx.size();
                  for (std::size_t t = 0; t < steps; ++t) {
                    for (std::size_t j = 0; j < nb; ++j) {
                      for (std::size_t c = 0; c < cols; ++c) {
                        da[(t * old_batch + idx[j]) * cols + c] += dy[(t * nb + j) * cols + c];
                      }
                    }
                  }
                });
}

Var log_softmax_rows(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Tensor out = mat_like(av);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data().data() + r * cols;
    double m = *std::max_element(x, x + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(x[c] - m);
    const double lse = m + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c] - lse;
  }
  return g.emit("log_softmax_rows", std::move(out), {a}, [a, rows, cols](Graph& g, Var self) {
    const Tensor& y = g.value(self);
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(a);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += dy[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) da[r * cols + c] += dy[r * cols + c] - std::exp(y[r * cols + c]) * s;
    }
  });
}

Var smoothed_nll(Graph& g, Var logp, std::span<const int> targets, double eps) {
  const Tensor& lp = g.value(logp);
  const std::size_t rows = lp.rows();
  const std::size_t vocab = lp.cols();
  if (targets.size() != rows) throw ShapeError("smoothed_nll: target count does not match rows");
  if (eps < 0.0 || eps >= 1.0) throw ShapeError("smoothed_nll: smoothing must lie in [0, 1)");
  const double off = eps / static_cast<double>(vocab);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= vocab) throw ShapeError("smoothed_nll: target id out of range");
    const double* x = lp.data().data() + r * vocab;
    double row_sum = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) row_sum += x[c];
    loss -= (1.0 - eps) * x[targets[r]] + off * row_sum;
  }
  std::vector<int> tg(targets.begin(), targets.end());
  return g.emit("smoothed_nll", Tensor::scalar(loss), {logp},
                [logp, tg = std::move(tg), eps, off, vocab](Graph& g, Var self) {
                  const double d = g.grad(self)[0];
                  Tensor& dl = g.grad(logp);
                  for (std::size_t r = 0; r < tg.size(); ++r) {
                    if (tg[r] < 0) continue;
                    for (std::size_t c = 0; c < vocab; ++c) dl[r * vocab + c] -= d * off;
                    dl[r * vocab + static_cast<std::size_t>(tg[r])] -= d * (1.0 - eps);
                  }
                });
}

Var lstm_cell(Graph& g, Var gates, Var c_prev) {
  const Tensor& gv = g.value(gates);
  const Tensor& cp = g.value(c_prev);
  const std::size_t batch = cp.rows();
  const std::size_t hid = cp.cols();
  if (gv.rows() != batch || gv.cols() != 4 * hid) shape_fail("lstm_cell", gv, cp);
  // act = [i | f | g | o] activations, tc = tanh(c')
  Tensor act = mat_like(gv);
  Tensor tc = Tensor::matrix(batch, hid);
  Tensor out = Tensor::matrix(batch, 2 * hid);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = gv.data().data() + b * 4 * hid;
    double* a = act.storage().data() + b * 4 * hid;
    for (std::size_t k = 0; k < hid; ++k) {
      a[k] = sigm(z[k]);
      a[hid + k] = sigm(z[hid + k]);
      a[2 * hid + k] = std::tanh(z[2 * hid + k]);
      a[3 * hid + k] = sigm(z[3 * hid + k]);
      const double c = a[hid + k] * cp(b, k) + a[k] * a[2 * hid + k];
      const double t = std::tanh(c);
      tc(b, k) = t;
      out(b, k) = a[3 * hid + k] * t;
      out(b, hid + k) = c;
    }
  }
  return g.emit("lstm_cell", std::move(out), {gates, c_prev},
                [gates, c_prev, act = std::move(act), tc = std::move(tc), batch, hid](Graph& g, Var self) {
                  const Tensor& dy = g.grad(self);
                  const Tensor& cp = g.value(c_prev);
                  const bool want_g = g.requires_grad(gates);
                  const bool want_c = g.requires_grad(c_prev);
                  Tensor* dg = want_g ? &g.grad(gates) : nullptr;
                  Tensor* dc_prev = want_c ? &g.grad(c_prev) : nullptr;
                  for (std::size_t b = 0; b < batch; ++b) {
                    const double* a = act.data().data() + b * 4 * hid;
                    for (std::size_t k = 0; k < hid; ++k) {
                      const double ig = a[k], fg = a[hid + k], cg = a[2 * hid + k], og = a[3 * hid + k];
                      const double t = tc(b, k);
                      const double dh = dy[b * 2 * hid + k];
                      const double dc = dy[b * 2 * hid + hid + k] + dh * og * (1.0 - t * t);
                      if (dg) {
                        double* d = dg->storage().data() + b * 4 * hid;
                        d[k] += dc * cg * ig * (1.0 - ig);
                        d[hid + k] += dc * cp(b, k) * fg * (1.0 - fg);
                        d[2 * hid + k] += dc * ig * (1.0 - cg * cg);
                        d[3 * hid + k] += dh * t * og * (1.0 - og);
                      }
                      if (dc_prev) (*dc_prev)(b, k) += dc * fg;
                    }
                  }
                });
}

Var max_pool_time(Graph& g, Var x, std::size_t batch, std::span<const std::size_t> lengths, std::size_t pool,
                  std::vector<std::size_t>& out_lengths) {
  const Tensor& xv = g.value(x);
  if (pool == 0) throw ShapeError("max_pool_time: pool size must be positive");
  if (batch == 0 || xv.rows() % batch != 0 || lengths.size() != batch) {
    throw ShapeError("max_pool_time: rows are not a multiple of the batch size");
  }
  const std::size_t steps = xv.rows() / batch;
  const std::size_t cols = xv.cols();
  const std::size_t out_steps = (steps + pool - 1) / pool;
  out_lengths.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    if (lengths[b] == 0 || lengths[b] > steps) throw ShapeError("max_pool_time: invalid sequence length");
    out_lengths[b] = (lengths[b] + pool - 1) / pool;
  }
  Tensor out = Tensor::matrix(out_steps * batch, cols);
  // argmax source row per output entry; npos marks padding
  std::vector<std::size_t> src(out.size(), static_cast<std::size_t>(-1));
  for (std::size_t t2 = 0; t2 < out_steps; ++t2) {
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t t0 = t2 * pool;
      if (t0 >= lengths[b]) continue;
      const std::size_t t1 = std::min(t0 + pool, lengths[b]);
      for (std::size_t c = 0; c < cols; ++c) {
        std::size_t best = t0 * batch + b;
        for (std::size_t t = t0 + 1; t < t1; ++t) {
          if (xv(t * batch + b, c) > xv(best, c)) best = t * batch + b;
        }
        out(t2 * batch + b, c) = xv(best, c);
        src[(t2 * batch + b) * cols + c] = best;
      }
    }
  }
  return g.emit("max_pool_time", std::move(out), {x}, [x, src = std::move(src), cols](Graph& g, Var self) {
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(x);
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i] != static_cast<std::size_t>(-1)) dx[src[i] * cols + i % cols] += dy[i];
    }
  });
}

Var attention_energies(Graph& g, Var keys, Var query, Var feedback, Var u, Var bias, Var v, std::size_t batch,
                       std::span<const std::size_t> lengths) {
  const Tensor& kv = g.value(keys);
  const Tensor& qv = g.value(query);
  const Tensor& fv = g.value(feedback);
  const Tensor& uv = g.value(u);
  const Tensor& bv = g.value(bias);
  const Tensor& vv = g.value(v);
  const std::size_t dim = kv.cols();
  if (batch == 0 || kv.rows() % batch != 0) throw ShapeError("attention_energies: keys rows not divisible by batch");
  const std::size_t steps = kv.rows() / batch;
  if (qv.rows() != batch || qv.cols() != dim) shape_fail("attention_energies(query)", kv, qv);
  if (fv.rows() != batch || fv.cols() != steps) shape_fail("attention_energies(feedback)", kv, fv);
  if (uv.size() != dim || bv.size() != dim || vv.size() != dim) shape_fail("attention_energies(params)", kv, vv);
  if (lengths.size() != batch) throw ShapeError("attention_energies: length count does not match batch");

  Tensor out = Tensor::matrix(batch, steps);
  Tensor z = Tensor::matrix(steps * batch, dim);  // tanh activations
  for (std::size_t b = 0; b < batch; ++b) {
    if (lengths[b] == 0 || lengths[b] > steps) throw ShapeError("attention_energies: invalid memory length");
    for (std::size_t t = 0; t < lengths[b]; ++t) {
      const std::size_t r = t * batch + b;
      const double fb = fv(b, t);
      double e = 0.0;
      for (std::size_t a = 0; a < dim; ++a) {
        const double zz = std::tanh(kv(r, a) + qv(b, a) + fb * uv[a] + bv[a]);
        z(r, a) = zz;
        e += vv[a] * zz;
      }
      out(b, t) = e;
    }
  }
  std::vector<std::size_t> lens(lengths.begin(), lengths.end());
  return g.emit("attention_energies", std::move(out), {keys, query, feedback, u, bias, v},
                [keys, query, feedback, u, bias, v, batch, dim, z = std::move(z), lens = std::move(lens)](Graph& g,
                                                                                                     Var self) {
                  const Tensor& de = g.grad(self);
                  const Tensor& fv = g.value(feedback);
                  const Tensor& uv = g.value(u);
                  const Tensor& vv = g.value(v);
                  Tensor* dk = g.requires_grad(keys) ? &g.grad(keys) : nullptr;
                  Tensor* dq = g.requires_grad(query) ? &g.grad(query) : nullptr;
                  Tensor* df = g.requires_grad(feedback) ? &g.grad(feedback) : nullptr;
                  Tensor* du = g.requires_grad(u) ? &g.grad(u) : nullptr;
                  Tensor* db = g.requires_grad(bias) ? &g.grad(bias) : nullptr;
                  Tensor* dv = g.requires_grad(v) ? &g.grad(v) : nullptr;
                  for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t t = 0; t < lens[b]; ++t) {
                      const std::size_t r = t * batch + b;
                      const double d = de(b, t);
                      if (d == 0.0) continue;
                      const double fb = fv(b, t);
                      double dfb = 0.0;
                      for (std::size_t a = 0; a < dim; ++a) {
                        const double zz = z(r, a);
                        const double dz = d * vv[a] * (1.0 - zz * zz);
                        if (dk) (*dk)(r, a) += dz;
                        if (dq) (*dq)(b, a) += dz;
                        if (du) (*du)[a] += dz * fb;
                        if (db) (*db)[a] += dz;
                        if (dv) (*dv)[a] += d * zz;
                        dfb += dz * uv[a];
                      }
                      if (df) (*df)(b, t) += dfb;
                    }
                  }
                });
}

Var masked_softmax(Graph& g, Var energies, std::span<const std::size_t> lengths) {
  const Tensor& ev = g.value(energies);
  const std::size_t batch = ev.rows();
  const std::size_t steps = ev.cols();
  if (lengths.size() != batch) throw ShapeError("masked_softmax: length count does not match rows");
  Tensor out = mat_like(ev);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = lengths[b];
    if (n == 0 || n > steps) throw ShapeError("masked_softmax: invalid length");
    double m = ev(b, 0);
    for (std::size_t t = 1; t < n; ++t) m = std::max(m, ev(b, t));
    double s = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      out(b, t) = std::exp(ev(b, t) - m);
      s += out(b, t);
    }
    for (std::size_t t = 0; t < n; ++t) out(b, t) /= s;
  }
  std::vector<std::size_t> lens(lengths.begin(), lengths.end());
  return g.emit("masked_softmax", std::move(out), {energies}, [energies, lens = std::move(lens)](Graph& g, Var self) {
    const Tensor& y = g.value(self);
    const Tensor& dy = g.grad(self);
    Tensor& de = g.grad(energies);
    for (std::size_t b = 0; b < lens.size(); ++b) {
      double dot = 0.0;
      for (std::size_t t = 0; t < lens[b]; ++t) dot += y(b, t) * dy(b, t);
      for (std::size_t t = 0; t < lens[b]; ++t) de(b, t) += y(b, t) * (dy(b, t) - dot);
    }
  });
}

Var attention_context(Graph& g, Var alpha, Var memory, std::size_t batch) {
  const Tensor& av = g.value(alpha);
  const Tensor& mv = g.value(memory);
  if (batch == 0 || av.rows() != batch || mv.rows() != av.cols() * batch) {
    shape_fail("attention_context", av, mv);
  }
  const std::size_t steps = av.cols();
  const std::size_t dim = mv.cols();
  Tensor out = Tensor::matrix(batch, dim);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      const double w = av(b, t);
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < dim; ++k) out(b, k) += w * mv(t * batch + b, k);
    }
  }
  return g.emit("attention_context", std::move(out), {alpha, memory},
                [alpha, memory, batch, steps, dim](Graph& g, Var self) {
                  const Tensor& dc = g.grad(self);
                  const Tensor& av = g.value(alpha);
                  const Tensor& mv = g.value(memory);
                  Tensor* da = g.requires_grad(alpha) ? &g.grad(alpha) : nullptr;
                  Tensor* dm = g.requires_grad(memory) ? &g.grad(memory) : nullptr;
                  for (std::size_t t = 0; t < steps; ++t) {
                    for (std::size_t b = 0; b < batch; ++b) {
                      const std::size_t r = t * batch + b;
                      if (da) {
                        double s = 0.0;
                        for (std::size_t k = 0; k < dim; ++k) s += dc(b, k) * mv(r, k);
                        (*da)(b, t) += s;
                      }
                      if (dm) {
                        const double w = av(b, t);
                        if (w == 0.0) continue;
                        for (std::size_t k = 0; k < dim; ++k) (*dm)(r, k) += w * dc(b, k);
                      }
                    }
                  }
                });
}

}  // namespace e2est::ops
