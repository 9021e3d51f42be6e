#include "eagle/ops.hpp"

#include <algorithm>
#include <cmath>

#include "eagle/error.hpp"

namespace eagle {

void update_running_stats(BatchNormState& state, std::span<const double> batch_mean,
                          std::span<const double> batch_unbiased_var) {
  auto rm = state.running_mean.data();
  auto rv = state.running_var.data();
  for (std::size_t j = 0; j < rm.size(); ++j) {
    rm[j] = (1.0 - kBatchNormMomentum) * rm[j] + kBatchNormMomentum * batch_mean[j];
    rv[j] = (1.0 - kBatchNormMomentum) * rv[j] + kBatchNormMomentum * batch_unbiased_var[j];
  }
}

namespace ops {

namespace {

void require_matrix(const Tensor& a, const char* what) {
  if (a.rank() != 2) fail(ErrorCode::ShapeMismatch, std::string(what) + " expects a matrix, got " + shape_str(a.shape()));
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  Tensor out = eagle::matmul(av, bv);
  return t.record("matmul", std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, eagle::matmul(g, transpose(tp.value(b))));
    if (tp.requires_grad(b)) tp.accumulate(b, eagle::matmul(transpose(tp.value(a)), g));
  });
}

Var add_bias(Tape& t, Var x, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(bias);
  require_matrix(xv, "add_bias");
  if (bv.size() != xv.cols())
    fail(ErrorCode::ShapeMismatch, "bias " + shape_str(bv.shape()) + " for input " + shape_str(xv.shape()));
  Tensor out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  return t.record("add_bias", std::move(out), {x, bias}, [x, bias](Tape& tp, const Tensor& g) {
    tp.accumulate(x, g);
    if (tp.requires_grad(bias)) {
      Tensor gb = Tensor::zeros_like(tp.value(bias));
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
      tp.accumulate(bias, gb);
    }
  });
}

Var add(Tape& t, Var a, Var b) {
  Tensor out = t.value(a);
  out += t.value(b);
  return t.record("add", std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv)) fail(ErrorCode::ShapeMismatch, "mul " + shape_str(av.shape()) + " * " + shape_str(bv.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record("mul", std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    Tensor ga = g, gb = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] *= bv[i];
      gb[i] *= av[i];
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Var scale(Tape& t, Var a, double s) {
  Tensor out = t.value(a);
  out *= s;
  return t.record("scale", std::move(out), {a}, [a, s](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    ga *= s;
    tp.accumulate(a, ga);
  });
}

Var mul_const(Tape& t, Var a, const Tensor& c) {
  const Tensor& av = t.value(a);
  if (!av.same_shape(c)) fail(ErrorCode::ShapeMismatch, "mul_const " + shape_str(av.shape()) + " * " + shape_str(c.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return t.record("mul_const", std::move(out), {a}, [a, c](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= c[i];
    tp.accumulate(a, ga);
  });
}

Var relu(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (auto& v : out.data()) v = std::max(v, 0.0);
  return t.record("relu", std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(a);
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (av[i] <= 0.0) ga[i] = 0.0;
    tp.accumulate(a, ga);
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.value(a).data()) s += v;
  return t.record("sum", Tensor::scalar(s), {a}, [a](Tape& tp, const Tensor& g) {
    tp.accumulate(a, Tensor(tp.value(a).shape(), g.item()));
  });
}

Var mean(Tape& t, Var a) {
  const double n = static_cast<double>(t.value(a).size());
  return scale(t, sum(t, a), 1.0 / n);
}

Var logsumexp(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  const double lse = eagle::logsumexp(av.data());
  return t.record("logsumexp", Tensor::scalar(lse), {a}, [a, lse](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(a);
    Tensor ga = Tensor::zeros_like(av);
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] = g.item() * std::exp(av[i] - lse);
    tp.accumulate(a, ga);
  });
}

Var reshape(Tape& t, Var a, Shape shape) {
  Tensor out = t.value(a).reshaped(std::move(shape));
  return t.record("reshape", std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g.reshaped(tp.value(a).shape()));
  });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorCode::EmptyInput, "concat_cols of nothing");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    const Tensor& pv = t.value(p);
    require_matrix(pv, "concat_cols");
    if (pv.rows() != rows) fail(ErrorCode::ShapeMismatch, "concat_cols row mismatch");
    cols += pv.cols();
  }
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = t.value(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
    off += pv.cols();
  }
  return t.record("concat_cols", std::move(out), parts, [parts](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& pv = tp.value(p);
      if (tp.requires_grad(p)) {
        Tensor gp = Tensor::zeros_like(pv);
        for (std::size_t i = 0; i < pv.rows(); ++i)
          for (std::size_t j = 0; j < pv.cols(); ++j) gp(i, j) = g(i, off + j);
        tp.accumulate(p, gp);
      }
      off += pv.cols();
    }
  });
}

Var slice_cols(Tape& t, Var a, std::size_t start, std::size_t width) {
  const Tensor& av = t.value(a);
  require_matrix(av, "slice_cols");
  if (width == 0 || start + width > av.cols()) fail(ErrorCode::ShapeMismatch, "slice_cols out of range");
  Tensor out({av.rows(), width});
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < width; ++j) out(i, j) = av(i, start + j);
  return t.record("slice_cols", std::move(out), {a}, [a, start, width](Tape& tp, const Tensor& g) {
    Tensor ga = Tensor::zeros_like(tp.value(a));
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < width; ++j) ga(i, start + j) = g(i, j);
    tp.accumulate(a, ga);
  });
}

Var interleave_rows(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorCode::EmptyInput, "interleave_rows of nothing");
  const Tensor& first = t.value(parts[0]);
  require_matrix(first, "interleave_rows");
  const std::size_t b = first.rows(), d = first.cols(), k = parts.size();
  for (Var p : parts)
    if (!t.value(p).same_shape(first))
      fail(ErrorCode::ShapeMismatch, "interleave_rows needs equal shapes, got " + shape_str(t.value(p).shape()) +
                                         " vs " + shape_str(first.shape()));
  Tensor out({b * k, d});
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor& pv = t.value(parts[i]);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < d; ++c) out(r * k + i, c) = pv(r, c);
  }
  return t.record("interleave_rows", std::move(out), parts, [parts, b, d, k](Tape& tp, const Tensor& g) {
    for (std::size_t i = 0; i < k; ++i) {
      if (!tp.requires_grad(parts[i])) continue;
      Tensor gp({b, d});
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t c = 0; c < d; ++c) gp(r, c) = g(r * k + i, c);
      tp.accumulate(parts[i], gp);
    }
  });
}

namespace {

Var batchnorm_impl(Tape& t, Var x, Var gamma, Var beta, const BatchNormState& state, BatchNormState* update,
                   Mode mode) {
  const Tensor& xv = t.value(x);
  require_matrix(xv, "batchnorm");
  const std::size_t b = xv.rows(), d = xv.cols();
  const Tensor& gv = t.value(gamma);
  const Tensor& bv = t.value(beta);
  if (gv.size() != d || bv.size() != d || state.running_mean.size() != d || state.running_var.size() != d)
    fail(ErrorCode::ShapeMismatch, "batchnorm parameters do not match width " + std::to_string(d));
  if (mode == Mode::Train && b < 2)
    fail(ErrorCode::BatchTooSmall, "batchnorm in train mode needs at least 2 rows, got " + std::to_string(b));

  std::vector<double> mu(d, 0.0), inv_std(d, 0.0);
  if (mode == Mode::Train) {
    std::vector<double> var(d, 0.0), unbiased(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < b; ++i) m += xv(i, j);
      m /= static_cast<double>(b);
      double ss = 0.0;
      for (std::size_t i = 0; i < b; ++i) ss += (xv(i, j) - m) * (xv(i, j) - m);
      mu[j] = m;
      var[j] = ss / static_cast<double>(b);
      unbiased[j] = ss / static_cast<double>(b - 1);
      inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNormEps);
    }
    update_running_stats(*update, mu, unbiased);
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      mu[j] = state.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + kBatchNormEps);
    }
  }

  Tensor xhat({b, d});
  Tensor out({b, d});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (xv(i, j) - mu[j]) * inv_std[j];
      out(i, j) = gv[j] * xhat(i, j) + bv[j];
    }

  const bool batch_stats = mode == Mode::Train;
  return t.record(
      "batchnorm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, batch_stats, b, d](Tape& tp, const Tensor& g) {
        const Tensor& gv = tp.value(gamma);
        std::vector<double> sum_g(d, 0.0), sum_gx(d, 0.0);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            sum_g[j] += g(i, j);
            sum_gx[j] += g(i, j) * xhat(i, j);
          }
        if (tp.requires_grad(gamma)) tp.accumulate(gamma, Tensor(tp.value(gamma).shape(), sum_gx));
        if (tp.requires_grad(beta)) tp.accumulate(beta, Tensor(tp.value(beta).shape(), sum_g));
        if (tp.requires_grad(x)) {
          Tensor gx({b, d});
          const double nb = static_cast<double>(b);
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j) {
              if (batch_stats)
                gx(i, j) = gv[j] * inv_std[j] / nb * (nb * g(i, j) - sum_g[j] - xhat(i, j) * sum_gx[j]);
              else
                gx(i, j) = gv[j] * inv_std[j] * g(i, j);
            }
          tp.accumulate(x, gx);
        }
      });
}

}  // namespace

Var batchnorm(Tape& t, Var x, Var gamma, Var beta, BatchNormState& state, Mode mode) {
  return batchnorm_impl(t, x, gamma, beta, state, &state, mode);
}

Var batchnorm(Tape& t, Var x, Var gamma, Var beta, const BatchNormState& state) {
  return batchnorm_impl(t, x, gamma, beta, state, nullptr, Mode::Eval);
}

Var dropout(Tape& t, Var x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) fail(ErrorCode::InvalidProbability, "dropout probability " + std::to_string(p));
  if (mode == Mode::Eval || p == 0.0) return x;
  Tensor mask = Tensor::zeros_like(t.value(x));
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask.data()) m = rng.uniform() < p ? 0.0 : keep;
  return mul_const(t, x, mask);
}

AttentionOutput scaled_dot_product_attention(Tape& t, Var q, Var k, Var v, std::size_t heads, std::size_t seq,
                                             double dropout_p, Mode mode, Rng& rng) {
  const Tensor& qv = t.value(q);
  const Tensor& kv = t.value(k);
  const Tensor& vv = t.value(v);
  require_matrix(qv, "attention");
  if (!qv.same_shape(kv) || !qv.same_shape(vv))
    fail(ErrorCode::ShapeMismatch, "attention q/k/v shapes differ");
  const std::size_t d = qv.cols();
  if (heads == 0 || d % heads != 0)
    fail(ErrorCode::HeadDivisibility, "width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  if (seq == 0 || qv.rows() % seq != 0) fail(ErrorCode::ShapeMismatch, "rows not a multiple of sequence length");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    fail(ErrorCode::InvalidProbability, "attention dropout probability " + std::to_string(dropout_p));
  const std::size_t groups = qv.rows() / seq;
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor weights({groups, heads, seq, seq});
  Tensor mask(weights.shape(), 1.0);
  if (mode == Mode::Train && dropout_p > 0.0) {
    const double keep = 1.0 / (1.0 - dropout_p);
    for (auto& m : mask.data()) m = rng.uniform() < dropout_p ? 0.0 : keep;
  }
  Tensor out({groups * seq, d});
  auto widx = [heads, seq](std::size_t g, std::size_t h, std::size_t i, std::size_t j) {
    return ((g * heads + h) * seq + i) * seq + j;
  };
  std::vector<double> row(seq);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh;
      for (std::size_t i = 0; i < seq; ++i) {
        for (std::size_t j = 0; j < seq; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qv(g * seq + i, c0 + c) * kv(g * seq + j, c0 + c);
          row[j] = s * inv_sqrt;
        }
        const double lse = eagle::logsumexp(row);
        for (std::size_t j = 0; j < seq; ++j) weights[widx(g, h, i, j)] = std::exp(row[j] - lse);
        for (std::size_t j = 0; j < seq; ++j) {
          const double a = weights[widx(g, h, i, j)] * mask[widx(g, h, i, j)];
          if (a == 0.0) continue;
          for (std::size_t c = 0; c < dh; ++c) out(g * seq + i, c0 + c) += a * vv(g * seq + j, c0 + c);
        }
      }
    }

  Var result = t.record(
      "attention", std::move(out), {q, k, v},
      [q, k, v, weights, mask, groups, heads, seq, dh, inv_sqrt, widx](Tape& tp, const Tensor& go) {
        const Tensor& qv = tp.value(q);
        const Tensor& kv = tp.value(k);
        const Tensor& vv = tp.value(v);
        Tensor gq = Tensor::zeros_like(qv), gk = Tensor::zeros_like(kv), gv = Tensor::zeros_like(vv);
        std::vector<double> dA(seq), dS(seq);
        for (std::size_t g = 0; g < groups; ++g)
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dh;
            for (std::size_t i = 0; i < seq; ++i) {
              const std::size_t ri = g * seq + i;
              // dA'_ij = dO_i . V_j ; dA = dA' * mask
              for (std::size_t j = 0; j < seq; ++j) {
                const std::size_t rj = g * seq + j;
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += go(ri, c0 + c) * vv(rj, c0 + c);
                const double m = mask[widx(g, h, i, j)];
                dA[j] = s * m;
                const double a = weights[widx(g, h, i, j)] * m;
                for (std::size_t c = 0; c < dh; ++c) gv(rj, c0 + c) += a * go(ri, c0 + c);
              }
              double dot = 0.0;
              for (std::size_t j = 0; j < seq; ++j) dot += dA[j] * weights[widx(g, h, i, j)];
              for (std::size_t j = 0; j < seq; ++j)
                dS[j] = weights[widx(g, h, i, j)] * (dA[j] - dot) * inv_sqrt;
              for (std::size_t j = 0; j < seq; ++j) {
                const std::size_t rj = g * seq + j;
                for (std::size_t c = 0; c < dh; ++c) {
                  gq(ri, c0 + c) += dS[j] * kv(rj, c0 + c);
                  gk(rj, c0 + c) += dS[j] * qv(ri, c0 + c);
                }
              }
            }
          }
        tp.accumulate(q, gq);
        tp.accumulate(k, gk);
        tp.accumulate(v, gv);
      });
  return {result, std::move(weights)};
}

AttentionOutput multi_head_attention(Tape& t, Var q, Var k, Var v, const AttentionProjections& proj,
                                     std::size_t heads, std::size_t seq, double dropout_p, Mode mode, Rng& rng) {
  const Var qp = linear(t, q, proj.query);
  const Var kp = linear(t, k, proj.key);
  const Var vp = linear(t, v, proj.value);
  AttentionOutput attn = scaled_dot_product_attention(t, qp, kp, vp, heads, seq, dropout_p, mode, rng);
  attn.out = linear(t, attn.out, proj.output);
  return attn;
}

}  // namespace ops
}  // namespace eagle
