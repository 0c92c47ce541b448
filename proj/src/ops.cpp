#include "har/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace har::ops {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

double sigmoid_scalar(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Tape& tape, Var a, Var b) {
  const Tensor& A = tape.value(a);
  const Tensor& B = tape.value(b);
  require_rank(A, 2, "matmul", "lhs");
  require_rank(B, 2, "matmul", "rhs");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + to_string(A.shape()) + " x " +
                         to_string(B.shape()));
  }
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.raw() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.at(i, p);
      const double* brow = B.raw() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return tape.record(std::move(out), tape.needs_grad({a, b}),
                     [a, b, m, k, n](Tape& t, const Tensor&, const Tensor& g) {
                       const Tensor& A = t.value(a);
                       const Tensor& B = t.value(b);
                       if (t.needs_grad(a)) {
                         Tensor& ga = t.grad_buffer(a);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < n; ++j) s += g.at(i, j) * B.at(p, j);
                             ga.at(i, p) += s;
                           }
                       }
                       if (t.needs_grad(b)) {
                         Tensor& gb = t.grad_buffer(b);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double av = A.at(i, p);
                             for (std::size_t j = 0; j < n; ++j) gb.at(p, j) += av * g.at(i, j);
                           }
                       }
                     });
}

Var linear(Tape& tape, Var weight, Var x, Var bias) {
  const Tensor& W = tape.value(weight);
  const Tensor& X = tape.value(x);
  require_rank(W, 2, "linear", "weight");
  require_rank(X, 1, "linear", "input");
  const std::size_t out_dim = W.dim(0), in_dim = W.dim(1);
  if (X.dim(0) != in_dim) {
    throw DimensionError("linear: weight " + to_string(W.shape()) + " cannot take input " + to_string(X.shape()));
  }
  Tensor out(Shape{out_dim});
  if (bias.valid()) {
    const Tensor& B = tape.value(bias);
    if (B.shape() != out.shape()) {
      throw DimensionError("linear: bias " + to_string(B.shape()) + " does not match output " +
                           to_string(out.shape()));
    }
    std::copy(B.data().begin(), B.data().end(), out.data().begin());
  }
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double* row = W.raw() + o * in_dim;
    double s = 0.0;
    for (std::size_t i = 0; i < in_dim; ++i) s += row[i] * X[i];
    out[o] += s;
  }
  return tape.record(std::move(out), tape.needs_grad({weight, x, bias}),
                     [weight, x, bias, out_dim, in_dim](Tape& t, const Tensor&, const Tensor& g) {
                       const Tensor& W = t.value(weight);
                       const Tensor& X = t.value(x);
                       if (t.needs_grad(weight)) {
                         Tensor& gw = t.grad_buffer(weight);
                         for (std::size_t o = 0; o < out_dim; ++o) {
                           const double go = g[o];
                           if (go == 0.0) continue;
                           double* row = gw.raw() + o * in_dim;
                           for (std::size_t i = 0; i < in_dim; ++i) row[i] += go * X[i];
                         }
                       }
                       if (t.needs_grad(x)) {
                         Tensor& gx = t.grad_buffer(x);
                         for (std::size_t o = 0; o < out_dim; ++o) {
                           const double go = g[o];
                           if (go == 0.0) continue;
                           const double* row = W.raw() + o * in_dim;
                           for (std::size_t i = 0; i < in_dim; ++i) gx[i] += go * row[i];
                         }
                       }
                       if (bias.valid() && t.needs_grad(bias)) t.grad_buffer(bias) += g;
                     });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& A = tape.value(a);
  const Tensor& B = tape.value(b);
  require_same_shape(A, B, "add");
  Tensor out = A;
  out += B;
  return tape.record(std::move(out), tape.needs_grad({a, b}), [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (t.needs_grad(a)) t.grad_buffer(a) += g;
    if (t.needs_grad(b)) t.grad_buffer(b) += g;
  });
}

Var sub(Tape& tape, Var a, Var b) {
  const Tensor& A = tape.value(a);
  const Tensor& B = tape.value(b);
  require_same_shape(A, B, "sub");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return tape.record(std::move(out), tape.needs_grad({a, b}), [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (t.needs_grad(a)) t.grad_buffer(a) += g;
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& A = tape.value(a);
  const Tensor& B = tape.value(b);
  require_same_shape(A, B, "mul");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return tape.record(std::move(out), tape.needs_grad({a, b}), [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (t.needs_grad(a)) {
      const Tensor& B = t.value(b);
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (t.needs_grad(b)) {
      const Tensor& A = t.value(a);
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

Var scale(Tape& tape, Var a, double factor) {
  Tensor out = tape.value(a);
  out *= factor;
  return tape.record(std::move(out), tape.needs_grad(a), [a, factor](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var sum(Tape& tape, Var a) {
  return tape.record(Tensor::scalar(tape.value(a).sum()), tape.needs_grad(a),
                     [a](Tape& t, const Tensor&, const Tensor& g) {
                       for (auto& v : t.grad_buffer(a).data()) v += g[0];
                     });
}

Var relu(Tape& tape, Var x) {
  Tensor out = tape.value(x);
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return tape.record(std::move(out), tape.needs_grad(x), [x](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (y[i] > 0.0) gx[i] += g[i];
  });
}

Var tanh(Tape& tape, Var x) {
  Tensor out = tape.value(x);
  for (auto& v : out.data()) v = std::tanh(v);
  return tape.record(std::move(out), tape.needs_grad(x), [x](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Tape& tape, Var x) {
  Tensor out = tape.value(x);
  for (auto& v : out.data()) v = sigmoid_scalar(v);
  return tape.record(std::move(out), tape.needs_grad(x), [x](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax(Tape& tape, Var x) {
  const Tensor& X = tape.value(x);
  require_rank(X, 1, "softmax", "input");
  Tensor out = X;
  const double peak = *std::max_element(out.data().begin(), out.data().end());
  double total = 0.0;
  for (auto& v : out.data()) {
    v = std::exp(v - peak);
    total += v;
  }
  out *= 1.0 / total;
  return tape.record(std::move(out), tape.needs_grad(x), [x](Tape& t, const Tensor& y, const Tensor& g) {
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - dot);
  });
}

Var cross_entropy(Tape& tape, Var probs, std::size_t label) {
  const Tensor& P = tape.value(probs);
  require_rank(P, 1, "cross_entropy", "probabilities");
  if (label >= P.size()) {
    throw DimensionError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                         std::to_string(P.size()) + " classes");
  }
  const double p = P[label];
  const double loss = -std::log(std::max(p, kProbabilityFloor));
  return tape.record(Tensor::scalar(loss), tape.needs_grad(probs),
                     [probs, label, p](Tape& t, const Tensor&, const Tensor& g) {
                       if (p > kProbabilityFloor) t.grad_buffer(probs)[label] -= g[0] / p;
                     });
}

Var conv2d(Tape& tape, Var input, Var kernels, std::size_t stride, std::size_t padding) {
  return conv2d(tape, input, kernels, Var{}, stride, padding);
}

Var conv2d(Tape& tape, Var input, Var kernels, Var bias, std::size_t stride, std::size_t padding) {
  const Tensor& X = tape.value(input);
  const Tensor& K = tape.value(kernels);
  require_rank(X, 3, "conv2d", "input");
  if (K.rank() != 4) throw DimensionError("conv2d: kernels must have rank 4, got " + to_string(K.shape()));
  if (stride == 0) throw DimensionError("conv2d: stride must be at least 1");
  const std::size_t cin = X.dim(0), h = X.dim(1), w = X.dim(2);
  const std::size_t cout = K.dim(0), kh = K.dim(2), kw = K.dim(3);
  if (K.dim(1) != cin) {
    throw DimensionError("conv2d: kernels " + to_string(K.shape()) + " expect " + std::to_string(K.dim(1)) +
                         " input channels, input is " + to_string(X.shape()));
  }
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw DimensionError("conv2d: kernels " + to_string(K.shape()) + " larger than padded input " +
                         to_string(X.shape()) + " with padding " + std::to_string(padding));
  }
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
  Tensor out(Shape{cout, oh, ow});
  if (bias.valid()) {
    const Tensor& B = tape.value(bias);
    if (B.shape() != Shape{cout}) {
      throw DimensionError("conv2d: bias " + to_string(B.shape()) + " does not match " + std::to_string(cout) +
                           " output channels");
    }
    for (std::size_t co = 0; co < cout; ++co)
      std::fill_n(out.raw() + co * oh * ow, oh * ow, B[co]);
  }
  const auto ipad = static_cast<std::ptrdiff_t>(padding);
  const auto ih = static_cast<std::ptrdiff_t>(h), iw = static_cast<std::ptrdiff_t>(w);

  // Visits every (output, input, kernel) triple whose input cell is in bounds.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t ki = 0; ki < kh; ++ki)
          for (std::size_t kj = 0; kj < kw; ++kj) {
            const std::size_t kidx = ((co * cin + ci) * kh + ki) * kw + kj;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - ipad;
              if (iy < 0 || iy >= ih) continue;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kj) - ipad;
                if (ix < 0 || ix >= iw) continue;
                const std::size_t xidx = (ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
                fn((co * oh + oy) * ow + ox, xidx, kidx);
              }
            }
          }
  };

  for_each_tap([&](std::size_t o, std::size_t xi, std::size_t ki) { out[o] += X[xi] * K[ki]; });

  return tape.record(std::move(out), tape.needs_grad({input, kernels, bias}),
                     [input, kernels, bias, for_each_tap, cout, oh, ow](Tape& t, const Tensor&, const Tensor& g) {
                       const Tensor& X = t.value(input);
                       const Tensor& K = t.value(kernels);
                       const bool gi = t.needs_grad(input), gk = t.needs_grad(kernels);
                       Tensor* gx = gi ? &t.grad_buffer(input) : nullptr;
                       Tensor* gkern = gk ? &t.grad_buffer(kernels) : nullptr;
                       if (gi || gk) {
                         for_each_tap([&](std::size_t o, std::size_t xi, std::size_t ki) {
                           const double go = g[o];
                           if (gx) (*gx)[xi] += go * K[ki];
                           if (gkern) (*gkern)[ki] += go * X[xi];
                         });
                       }
                       if (bias.valid() && t.needs_grad(bias)) {
                         Tensor& gb = t.grad_buffer(bias);
                         for (std::size_t co = 0; co < cout; ++co)
                           for (std::size_t i = 0; i < oh * ow; ++i) gb[co] += g[co * oh * ow + i];
                       }
                     });
}

Var maxpool2d(Tape& tape, Var input, std::size_t window, std::size_t stride) {
  const Tensor& X = tape.value(input);
  require_rank(X, 3, "maxpool2d", "input");
  if (stride == 0) throw DimensionError("maxpool2d: stride must be at least 1");
  const std::size_t c = X.dim(0), h = X.dim(1), w = X.dim(2);
  if (window == 0 || window > h || window > w) {
    throw DimensionError("maxpool2d: window " + std::to_string(window) + " exceeds input " + to_string(X.shape()));
  }
  const std::size_t oh = (h - window) / stride + 1;
  const std::size_t ow = (w - window) / stride + 1;
  Tensor out(Shape{c, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (ch * h + oy * stride) * w + ox * stride;
        for (std::size_t dy = 0; dy < window; ++dy)
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = (ch * h + oy * stride + dy) * w + ox * stride + dx;
            if (X[idx] > X[best]) best = idx;
          }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        out[o] = X[best];
        argmax[o] = best;
      }
  return tape.record(std::move(out), tape.needs_grad(input),
                     [input, argmax = std::move(argmax)](Tape& t, const Tensor&, const Tensor& g) {
                       Tensor& gx = t.grad_buffer(input);
                       for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
                     });
}

Var reshape(Tape& tape, Var x, Shape shape) {
  Tensor out = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(out), tape.needs_grad(x), [x](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var detach(Tape& tape, Var x) { return tape.constant(tape.value(x)); }

Var gaussian_log_prob(Tape& tape, Var mean, const Tensor& sample, double stddev) {
  const Tensor& mu = tape.value(mean);
  require_same_shape(mu, sample, "gaussian_log_prob");
  if (!(stddev > 0.0)) throw DimensionError("gaussian_log_prob: standard deviation must be positive");
  const double var = stddev * stddev;
  const double norm = -std::log(stddev) - 0.5 * std::log(2.0 * std::numbers::pi);
  double lp = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double d = sample[i] - mu[i];
    lp += -d * d / (2.0 * var) + norm;
  }
  return tape.record(Tensor::scalar(lp), tape.needs_grad(mean),
                     [mean, sample, var](Tape& t, const Tensor&, const Tensor& g) {
                       const Tensor& mu = t.value(mean);
                       Tensor& gm = t.grad_buffer(mean);
                       for (std::size_t i = 0; i < mu.size(); ++i) gm[i] += g[0] * (sample[i] - mu[i]) / var;
                     });
}

Var squared_error(Tape& tape, Var prediction, double target) {
  const Tensor& P = tape.value(prediction);
  if (P.size() != 1) throw DimensionError("squared_error: prediction must be a scalar, got " + to_string(P.shape()));
  const double d = P[0] - target;
  return tape.record(Tensor::scalar(d * d), tape.needs_grad(prediction),
                     [prediction, d](Tape& t, const Tensor&, const Tensor& g) {
                       t.grad_buffer(prediction)[0] += 2.0 * d * g[0];
                     });
}

LstmState lstm_cell(Tape& tape, Var x, LstmState state, Var weight, Var bias) {
  const Tensor& X = tape.value(x);
  const Tensor& H = tape.value(state.h);
  const Tensor& C = tape.value(state.c);
  const Tensor& W = tape.value(weight);
  const Tensor& B = tape.value(bias);
  require_rank(X, 1, "lstm_cell", "input");
  require_rank(H, 1, "lstm_cell", "hidden state");
  require_rank(W, 2, "lstm_cell", "weight");
  const std::size_t din = X.size(), d = H.size();
  if (C.shape() != H.shape() || W.dim(0) != 4 * d || W.dim(1) != din + d || B.shape() != Shape{4 * d}) {
    throw DimensionError("lstm_cell: weight " + to_string(W.shape()) + ", bias " + to_string(B.shape()) +
                         " incompatible with input " + to_string(X.shape()) + ", hidden " + to_string(H.shape()) +
                         ", cell " + to_string(C.shape()));
  }
  const std::size_t cols = din + d;

  // Gate activations [i | f | g | o].
  Tensor gates = B;
  for (std::size_t r = 0; r < 4 * d; ++r) {
    const double* row = W.raw() + r * cols;
    double s = 0.0;
    for (std::size_t j = 0; j < din; ++j) s += row[j] * X[j];
    for (std::size_t j = 0; j < d; ++j) s += row[din + j] * H[j];
    gates[r] += s;
  }
  for (std::size_t r = 0; r < 4 * d; ++r) {
    gates[r] = (r >= 2 * d && r < 3 * d) ? std::tanh(gates[r]) : sigmoid_scalar(gates[r]);
  }
  const Var hin = state.h;
  const Var gate_var = tape.record(
      std::move(gates), tape.needs_grad({x, hin, weight, bias}),
      [x, hin, weight, bias, din, d, cols](Tape& t, const Tensor& a, const Tensor& g) {
        Tensor dz(Shape{4 * d});
        for (std::size_t r = 0; r < 4 * d; ++r) {
          const bool candidate = r >= 2 * d && r < 3 * d;
          dz[r] = g[r] * (candidate ? 1.0 - a[r] * a[r] : a[r] * (1.0 - a[r]));
        }
        const Tensor& X = t.value(x);
        const Tensor& H = t.value(hin);
        const Tensor& W = t.value(weight);
        if (t.needs_grad(weight)) {
          Tensor& gw = t.grad_buffer(weight);
          for (std::size_t r = 0; r < 4 * d; ++r) {
            const double dr = dz[r];
            if (dr == 0.0) continue;
            double* row = gw.raw() + r * cols;
            for (std::size_t j = 0; j < din; ++j) row[j] += dr * X[j];
            for (std::size_t j = 0; j < d; ++j) row[din + j] += dr * H[j];
          }
        }
        if (t.needs_grad(bias)) t.grad_buffer(bias) += dz;
        const bool gx = t.needs_grad(x), gh = t.needs_grad(hin);
        if (gx || gh) {
          Tensor* bx = gx ? &t.grad_buffer(x) : nullptr;
          Tensor* bh = gh ? &t.grad_buffer(hin) : nullptr;
          for (std::size_t r = 0; r < 4 * d; ++r) {
            const double dr = dz[r];
            if (dr == 0.0) continue;
            const double* row = W.raw() + r * cols;
            if (bx)
              for (std::size_t j = 0; j < din; ++j) (*bx)[j] += dr * row[j];
            if (bh)
              for (std::size_t j = 0; j < d; ++j) (*bh)[j] += dr * row[din + j];
          }
        }
      });

  // c' = f * c + i * g
  // Recording may reallocate node storage; re-read the inputs.
  const Tensor& A = tape.value(gate_var);
  const Tensor& Cprev = tape.value(state.c);
  Tensor cnext(Shape{d});
  for (std::size_t j = 0; j < d; ++j) cnext[j] = A[d + j] * Cprev[j] + A[j] * A[2 * d + j];
  const Var cin = state.c;
  const Var c_var = tape.record(std::move(cnext), tape.needs_grad({gate_var, cin}),
                                [gate_var, cin, d](Tape& t, const Tensor&, const Tensor& g) {
                                  const Tensor& A = t.value(gate_var);
                                  const Tensor& C = t.value(cin);
                                  if (t.needs_grad(gate_var)) {
                                    Tensor& ga = t.grad_buffer(gate_var);
                                    for (std::size_t j = 0; j < d; ++j) {
                                      ga[j] += g[j] * A[2 * d + j];
                                      ga[d + j] += g[j] * C[j];
                                      ga[2 * d + j] += g[j] * A[j];
                                    }
                                  }
                                  if (t.needs_grad(cin)) {
                                    Tensor& gc = t.grad_buffer(cin);
                                    for (std::size_t j = 0; j < d; ++j) gc[j] += g[j] * A[d + j];
                                  }
                                });

  // h' = o * tanh(c')
  const Tensor& A2 = tape.value(gate_var);
  const Tensor& Cn = tape.value(c_var);
  Tensor hnext(Shape{d});
  for (std::size_t j = 0; j < d; ++j) hnext[j] = A2[3 * d + j] * std::tanh(Cn[j]);
  const Var h_var = tape.record(std::move(hnext), tape.needs_grad({gate_var, c_var}),
                                [gate_var, c_var, d](Tape& t, const Tensor&, const Tensor& g) {
                                  const Tensor& A = t.value(gate_var);
                                  const Tensor& Cn = t.value(c_var);
                                  const bool ga_needed = t.needs_grad(gate_var), gc_needed = t.needs_grad(c_var);
                                  Tensor* ga = ga_needed ? &t.grad_buffer(gate_var) : nullptr;
                                  Tensor* gc = gc_needed ? &t.grad_buffer(c_var) : nullptr;
                                  for (std::size_t j = 0; j < d; ++j) {
                                    const double th = std::tanh(Cn[j]);
                                    if (ga) (*ga)[3 * d + j] += g[j] * th;
                                    if (gc) (*gc)[j] += g[j] * A[3 * d + j] * (1.0 - th * th);
                                  }
                                });
  return {h_var, c_var};
}

}  // namespace har::ops
