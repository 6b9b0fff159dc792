#include "dcn/ops.hpp"

#include <algorithm>
#include <cmath>

namespace dcn::ops {

namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw std::logic_error("op applied to an invalid Var");
  return *a.graph;
}

void same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw std::logic_error("ops on Vars from different graphs");
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

// dst += src * alpha elementwise
void axpy(Tensor& dst, const Tensor& src, double alpha = 1.0) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += alpha * s[i];
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return g.custom(std::move(out), {a}, [deriv](Graph& gr, int self) {
    const int in = gr.inputs(self)[0];
    if (!gr.requires_grad(in)) return;
    const Tensor& y = gr.value(self);
    const Tensor& x = gr.value(in);
    const Tensor& dy = gr.grad_ref(self);
    Tensor& dx = gr.grad_ref(in);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  same_graph(a, b);
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix("matmul", A);
  require_matrix("matmul", B);
  if (A.cols() != B.rows()) mismatch("matmul", A, B);
  return g.custom(matmul_plain(A, B), {a, b}, [](Graph& gr, int self) {
    const int ia = gr.inputs(self)[0], ib = gr.inputs(self)[1];
    const Tensor& A = gr.value(ia);
    const Tensor& B = gr.value(ib);
    const Tensor& dC = gr.grad_ref(self);
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (gr.requires_grad(ia)) {
      Tensor& dA = gr.grad_ref(ia);  // dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += dC[i * n + j] * B[p * n + j];
          dA[i * k + p] += acc;
        }
    }
    if (gr.requires_grad(ib)) {
      Tensor& dB = gr.grad_ref(ib);  // A^T * dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * dC[i * n + j];
        }
    }
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  require_matrix("transpose", a.value());
  return g.custom(a.value().transposed(), {a}, [](Graph& gr, int self) {
    const int in = gr.inputs(self)[0];
    const Tensor& dy = gr.grad_ref(self);
    Tensor& dx = gr.grad_ref(in);
    const std::size_t r = dx.rows(), c = dx.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += dy[j * r + i];
  });
}

Var add(Var a, Var b) {
  same_graph(a, b);
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) mismatch("add", A, B);
  Tensor out = A;
  axpy(out, B);
  return g.custom(std::move(out), {a, b}, [](Graph& gr, int self) {
    for (int in : gr.inputs(self))
      if (gr.requires_grad(in)) axpy(gr.grad_ref(in), gr.grad_ref(self));
  });
}

Var sub(Var a, Var b) {
  same_graph(a, b);
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) mismatch("sub", A, B);
  Tensor out = A;
  axpy(out, B, -1.0);
  return g.custom(std::move(out), {a, b}, [](Graph& gr, int self) {
    const int ia = gr.inputs(self)[0], ib = gr.inputs(self)[1];
    if (gr.requires_grad(ia)) axpy(gr.grad_ref(ia), gr.grad_ref(self));
    if (gr.requires_grad(ib)) axpy(gr.grad_ref(ib), gr.grad_ref(self), -1.0);
  });
}

Var mul(Var a, Var b) {
  same_graph(a, b);
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) mismatch("mul", A, B);
  Tensor out(A.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  return g.custom(std::move(out), {a, b}, [](Graph& gr, int self) {
    const int ia = gr.inputs(self)[0], ib = gr.inputs(self)[1];
    const Tensor& dy = gr.grad_ref(self);
    if (gr.requires_grad(ia)) {
      Tensor& da = gr.grad_ref(ia);
      const Tensor& B = gr.value(ib);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * B[i];
    }
    if (gr.requires_grad(ib)) {
      Tensor& db = gr.grad_ref(ib);
      const Tensor& A = gr.value(ia);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * A[i];
    }
  });
}

Var scale(Var a, double s) {
  Graph& g = graph_of(a);
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  return g.custom(std::move(out), {a}, [s](Graph& gr, int self) {
    axpy(gr.grad_ref(gr.inputs(self)[0]), gr.grad_ref(self), s);
  });
}

Var add_bias(Var a, Var b) {
  same_graph(a, b);
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix("add_bias", A);
  if (B.size() != A.rows() || B.cols() != 1) mismatch("add_bias", A, B);
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out = A;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += B[i];
  return g.custom(std::move(out), {a, b}, [m, n](Graph& gr, int self) {
    const int ia = gr.inputs(self)[0], ib = gr.inputs(self)[1];
    const Tensor& dy = gr.grad_ref(self);
    if (gr.requires_grad(ia)) axpy(gr.grad_ref(ia), dy);
    if (gr.requires_grad(ib)) {
      Tensor& db = gr.grad_ref(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) db[i] += dy[i * n + j];
    }
  });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var softmax_rows(Var a, double divisor) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix("softmax_rows", x);
  if (!(divisor > 0.0)) throw DimensionError("softmax_rows: divisor must be positive");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data() + i * n;
    double* o = out.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp((row[j] - mx) / divisor);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return g.custom(std::move(out), {a}, [m, n, divisor](Graph& gr, int self) {
    const Tensor& y = gr.value(self);
    const Tensor& dy = gr.grad_ref(self);
    Tensor& dx = gr.grad_ref(gr.inputs(self)[0]);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        dx[i * n + j] += y[i * n + j] * (dy[i * n + j] - dot) / divisor;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Graph& g = graph_of(parts[0]);
  const std::size_t n = parts[0].value().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_graph(parts[0], p);
    require_matrix("concat_rows", p.value());
    if (p.value().cols() != n) mismatch("concat_rows", parts[0].value(), p.value());
    total += p.value().rows();
  }
  Tensor out({total, n});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + offset);
    offset += p.value().size();
  }
  return g.custom(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [](Graph& gr, int self) {
    const Tensor& dy = gr.grad_ref(self);
    std::size_t offset = 0;
    for (int in : gr.inputs(self)) {
      const std::size_t len = gr.value(in).size();
      if (gr.requires_grad(in)) {
        Tensor& dx = gr.grad_ref(in);
        for (std::size_t i = 0; i < len; ++i) dx[i] += dy[offset + i];
      }
      offset += len;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Graph& g = graph_of(parts[0]);
  const std::size_t m = parts[0].value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_graph(parts[0], p);
    require_matrix("concat_cols", p.value());
    if (p.value().rows() != m) mismatch("concat_cols", parts[0].value(), p.value());
    total += p.value().cols();
  }
  Tensor out({m, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t c = v.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy(v.data() + i * c, v.data() + (i + 1) * c, out.data() + i * total + offset);
    offset += c;
  }
  return g.custom(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [m, total](Graph& gr, int self) {
    const Tensor& dy = gr.grad_ref(self);
    std::size_t offset = 0;
    for (int in : gr.inputs(self)) {
      const std::size_t c = gr.value(in).cols();
      if (gr.requires_grad(in)) {
        Tensor& dx = gr.grad_ref(in);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += dy[i * total + offset + j];
      }
      offset += c;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix("slice_rows", x);
  if (count == 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_str(x.shape()));
  }
  const std::size_t n = x.cols();
  Tensor out({count, n});
  std::copy(x.data() + begin * n, x.data() + (begin + count) * n, out.data());
  return g.custom(std::move(out), {a}, [begin, n](Graph& gr, int self) {
    const Tensor& dy = gr.grad_ref(self);
    Tensor& dx = gr.grad_ref(gr.inputs(self)[0]);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[begin * n + i] += dy[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix("slice_cols", x);
  if (count == 0 || begin + count > x.cols()) {
    throw DimensionError("slice_cols: cols [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_str(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i)
    std::copy(x.data() + i * n + begin, x.data() + i * n + begin + count, out.data() + i * count);
  return g.custom(std::move(out), {a}, [begin, count, m, n](Graph& gr, int self) {
    const Tensor& dy = gr.grad_ref(self);
    Tensor& dx = gr.grad_ref(gr.inputs(self)[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) dx[i * n + begin + j] += dy[i * count + j];
  });
}

Var reshape(Var a, Shape shape) {
  Graph& g = graph_of(a);
  return g.custom(a.value().reshaped(std::move(shape)), {a}, [](Graph& gr, int self) {
    axpy(gr.grad_ref(gr.inputs(self)[0]), gr.grad_ref(self));
  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return g.custom(Tensor({1}, total), {a}, [](Graph& gr, int self) {
    const double dy = gr.grad_ref(self)[0];
    for (auto& v : gr.grad_ref(gr.inputs(self)[0]).values()) v += dy;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var l2_normalize_cols(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  require_matrix("l2_normalize_cols", x);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) norms[j] += x[i * n + j] * x[i * n + j];
  for (auto& v : norms) v = std::sqrt(v);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] / std::max(norms[j], kL2Floor);
  return g.custom(std::move(out), {a}, [m, n, norms = std::move(norms)](Graph& gr, int self) {
    const Tensor& y = gr.value(self);
    const Tensor& dy = gr.grad_ref(self);
    Tensor& dx = gr.grad_ref(gr.inputs(self)[0]);
    for (std::size_t j = 0; j < n; ++j) {
      if (norms[j] <= kL2Floor) {
        // constant denominator below the floor
        for (std::size_t i = 0; i < m; ++i) dx[i * n + j] += dy[i * n + j] / kL2Floor;
        continue;
      }
      double dot = 0.0;
      for (std::size_t i = 0; i < m; ++i) dot += dy[i * n + j] * y[i * n + j];
      for (std::size_t i = 0; i < m; ++i)
        dx[i * n + j] += (dy[i * n + j] - y[i * n + j] * dot) / norms[j];
    }
  });
}

Var max_pool2d(Var a, std::size_t window) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  Tensor out = max_pool2d_plain(x, window);
  // argmax per output cell for routing the gradient
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h / window, ow = w / window;
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        std::size_t best = (ch * h + y * window) * w + xx * window;
        for (std::size_t dy = 0; dy < window; ++dy)
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = (ch * h + y * window + dy) * w + xx * window + dx;
            if (x[idx] > x[best]) best = idx;
          }
        argmax[(ch * oh + y) * ow + xx] = best;
      }
  return g.custom(std::move(out), {a}, [argmax = std::move(argmax)](Graph& gr, int self) {
    const Tensor& dy = gr.grad_ref(self);
    Tensor& dx = gr.grad_ref(gr.inputs(self)[0]);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  });
}

Var weighted_sum(std::span<const Var> xs, Var w) {
  if (xs.empty()) throw DimensionError("weighted_sum: no inputs");
  Graph& g = graph_of(w);
  if (w.value().size() != xs.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(xs.size()) + " inputs but weights " +
                         shape_str(w.value().shape()));
  }
  const Shape& shape = xs[0].value().shape();
  Tensor out(shape);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    same_graph(w, xs[j]);
    if (xs[j].value().shape() != shape) mismatch("weighted_sum", xs[0].value(), xs[j].value());
    axpy(out, xs[j].value(), w.value()[j]);
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  inputs.push_back(w);
  return g.custom(std::move(out), std::move(inputs), [k = xs.size()](Graph& gr, int self) {
    const auto& ins = gr.inputs(self);
    const int iw = ins[k];
    const Tensor& dy = gr.grad_ref(self);
    const Tensor& wv = gr.value(iw);
    for (std::size_t j = 0; j < k; ++j) {
      if (gr.requires_grad(ins[j])) axpy(gr.grad_ref(ins[j]), dy, wv[j]);
    }
    if (gr.requires_grad(iw)) {
      Tensor& dw = gr.grad_ref(iw);
      for (std::size_t j = 0; j < k; ++j) {
        const Tensor& x = gr.value(ins[j]);
        double dot = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) dot += dy[i] * x[i];
        dw[j] += dot;
      }
    }
  });
}

Var bce_loss(Var scores, const Tensor& targets) {
  Graph& g = graph_of(scores);
  const Tensor& s = scores.value();
  if (s.size() != targets.size()) mismatch("bce_loss", s, targets);
  for (double t : targets.values()) {
    if (!(t >= 0.0 && t <= 1.0)) throw InputError("bce_loss: target outside [0,1]");
  }
  const std::size_t n = s.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(s[i], kProbClamp, 1.0 - kProbClamp);
    total -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  return g.custom(Tensor({1}, total / static_cast<double>(n)), {scores},
                  [targets, n](Graph& gr, int self) {
                    const double dy = gr.grad_ref(self)[0];
                    const int in = gr.inputs(self)[0];
                    const Tensor& s = gr.value(in);
                    Tensor& ds = gr.grad_ref(in);
                    for (std::size_t i = 0; i < n; ++i) {
                      // clamp is flat outside its range
                      if (s[i] < kProbClamp || s[i] > 1.0 - kProbClamp) continue;
                      const double p = s[i];
                      ds[i] += dy * (-(targets[i] / p) + (1.0 - targets[i]) / (1.0 - p)) /
                               static_cast<double>(n);
                    }
                  });
}

}  // namespace dcn::ops
