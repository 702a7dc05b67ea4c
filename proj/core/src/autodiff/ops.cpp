#include "a3s/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "a3s/errors.hpp"

namespace a3s::ops {
namespace {

bool any_grad(std::initializer_list<const Tensor*> inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

Tensor make_output(Shape shape, std::vector<double> data, bool requires_grad) {
#ifndef NDEBUG
  for (double v : data)
    if (!std::isfinite(v)) throw InvariantError("non-finite value produced by an operation");
#endif
  return Tensor::from_unchecked(std::move(shape), std::move(data), requires_grad);
}

// Gradient buffer of an input that wants one; empty span otherwise.
std::span<double> grad_of(Tensor t) {
  if (!t.defined() || !t.requires_grad()) return {};
  return t.mutable_grad();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d via im2col

namespace {

// Dense kernels over row-major matrices, blocked four rows at a time so each
// streamed row is reused from registers.

// out[m,n] += a[m,k] * b[k,n]
void gemm_accumulate(double* out, const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double *o0 = out + i * n, *o1 = o0 + n, *o2 = o1 + n, *o3 = o2 + n;
    for (std::size_t r = 0; r < k; ++r) {
      const double w0 = a[i * k + r], w1 = a[(i + 1) * k + r], w2 = a[(i + 2) * k + r], w3 = a[(i + 3) * k + r];
      const double* br = b + r * n;
      for (std::size_t p = 0; p < n; ++p) {
        const double v = br[p];
        o0[p] += w0 * v;
        o1[p] += w1 * v;
        o2[p] += w2 * v;
        o3[p] += w3 * v;
      }
    }
  }
  for (; i < m; ++i)
    for (std::size_t r = 0; r < k; ++r) {
      const double w = a[i * k + r];
      const double* br = b + r * n;
      double* o = out + i * n;
      for (std::size_t p = 0; p < n; ++p) o[p] += w * br[p];
    }
}

// out[m,k] += a[m,n] * b[k,n]^T
void gemm_abt_accumulate(double* out, const double* a, const double* b, std::size_t m, std::size_t k,
                         std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double *a0 = a + i * n, *a1 = a0 + n, *a2 = a1 + n, *a3 = a2 + n;
    for (std::size_t r = 0; r < k; ++r) {
      const double* br = b + r * n;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
      for (std::size_t p = 0; p < n; ++p) {
        s0 += a0[p] * br[p];
        s1 += a1[p] * br[p];
        s2 += a2[p] * br[p];
        s3 += a3[p] * br[p];
      }
      out[i * k + r] += s0;
      out[(i + 1) * k + r] += s1;
      out[(i + 2) * k + r] += s2;
      out[(i + 3) * k + r] += s3;
    }
  }
  for (; i < m; ++i)
    for (std::size_t r = 0; r < k; ++r) {
      const double *ar = a + i * n, *br = b + r * n;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t p = 0; p < n; ++p) s += ar[p] * br[p];
      out[i * k + r] += s;
    }
}

// out[k,n] += a[m,k]^T * b[m,n]
void gemm_atb_accumulate(double* out, const double* a, const double* b, std::size_t m, std::size_t k,
                         std::size_t n) {
  std::size_t r = 0;
  for (; r + 4 <= k; r += 4) {
    double *o0 = out + r * n, *o1 = o0 + n, *o2 = o1 + n, *o3 = o2 + n;
    for (std::size_t i = 0; i < m; ++i) {
      const double w0 = a[i * k + r], w1 = a[i * k + r + 1], w2 = a[i * k + r + 2], w3 = a[i * k + r + 3];
      const double* bi = b + i * n;
      for (std::size_t p = 0; p < n; ++p) {
        const double v = bi[p];
        o0[p] += w0 * v;
        o1[p] += w1 * v;
        o2[p] += w2 * v;
        o3[p] += w3 * v;
      }
    }
  }
  for (; r < k; ++r)
    for (std::size_t i = 0; i < m; ++i) {
      const double w = a[i * k + r];
      const double* bi = b + i * n;
      double* o = out + r * n;
      for (std::size_t p = 0; p < n; ++p) o[p] += w * bi[p];
    }
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad) {
  require(input.rank() == 4, "conv2d: input must be [n,c,h,w], got " + shape_str(input.shape()));
  require(weight.rank() == 4, "conv2d: weight must be [c_out,c_in,k,k], got " + shape_str(weight.shape()));
  const std::size_t n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t c_out = weight.dim(0), k = weight.dim(2);
  require(weight.dim(1) == c_in, "conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                     " input channels, input has " + std::to_string(c_in));
  require(weight.dim(3) == k, "conv2d: kernel must be square");
  require(bias.defined() && bias.rank() == 1 && bias.dim(0) == c_out,
          "conv2d: bias must be [c_out]");
  if (stride < 1 || pad < 0) throw ConfigError("conv2d: stride must be >= 1 and pad >= 0");
  const long span_h = static_cast<long>(h) + 2 * pad - static_cast<long>(k);
  const long span_w = static_cast<long>(w) + 2 * pad - static_cast<long>(k);
  if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0)
    throw ConfigError("conv2d: output size (" + std::to_string(h) + "+2*" + std::to_string(pad) +
                      "-" + std::to_string(k) + ")/" + std::to_string(stride) +
                      "+1 is not integral");
  const std::size_t oh = static_cast<std::size_t>(span_h / stride) + 1;
  const std::size_t ow = static_cast<std::size_t>(span_w / stride) + 1;
  const std::size_t rows = c_in * k * k, cols = oh * ow;

  auto col_buf = std::make_shared<std::vector<double>>(n * rows * cols, 0.0);
  const auto x = input.data();
  for (std::size_t b = 0; b < n; ++b) {
    double* col = col_buf->data() + b * rows * cols;
    for (std::size_t ci = 0; ci < c_in; ++ci)
      for (std::size_t ki = 0; ki < k; ++ki)
        for (std::size_t kj = 0; kj < k; ++kj) {
          double* dst = col + ((ci * k + ki) * k + kj) * cols;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ki);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            const double* src = x.data() + ((b * c_in + ci) * h + static_cast<std::size_t>(iy)) * w;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kj);
              if (ix >= 0 && ix < static_cast<long>(w)) dst[oy * ow + ox] = src[ix];
            }
          }
        }
  }

  std::vector<double> out(n * c_out * cols);
  const auto wd = weight.data();
  const auto bd = bias.data();
  for (std::size_t b = 0; b < n; ++b) {
    const double* col = col_buf->data() + b * rows * cols;
    double* o = out.data() + b * c_out * cols;
    for (std::size_t co = 0; co < c_out; ++co) std::fill(o + co * cols, o + (co + 1) * cols, bd[co]);
    gemm_accumulate(o, wd.data(), col, c_out, rows, cols);
  }

  const bool rg = any_grad({&input, &weight, &bias});
  Tensor result = make_output({n, c_out, oh, ow}, std::move(out), rg);
  if (rg) {
    tape.record("conv2d", {input, weight, bias}, result,
                [=, input = input, weight = weight, bias = bias, result = result]() {
                  const auto go = result.grad();
                  auto gw = grad_of(weight);
                  auto gb = grad_of(bias);
                  auto gx = grad_of(input);
                  const auto wv = weight.data();
                  std::vector<double> dcol(gx.empty() ? 0 : rows * cols);
                  for (std::size_t b = 0; b < n; ++b) {
                    const double* col = col_buf->data() + b * rows * cols;
                    const double* g = go.data() + b * c_out * cols;
                    if (!gb.empty())
                      for (std::size_t co = 0; co < c_out; ++co)
                        gb[co] += std::accumulate(g + co * cols, g + (co + 1) * cols, 0.0);
                    if (!gw.empty())
                      gemm_abt_accumulate(gw.data(), g, col, c_out, rows, cols);
                    if (gx.empty()) continue;
                    std::fill(dcol.begin(), dcol.end(), 0.0);
                    gemm_atb_accumulate(dcol.data(), wv.data(), g, c_out, rows, cols);
                    for (std::size_t ci = 0; ci < c_in; ++ci)
                      for (std::size_t ki = 0; ki < k; ++ki)
                        for (std::size_t kj = 0; kj < k; ++kj) {
                          const double* src = dcol.data() + ((ci * k + ki) * k + kj) * cols;
                          for (std::size_t oy = 0; oy < oh; ++oy) {
                            const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ki);
                            if (iy < 0 || iy >= static_cast<long>(h)) continue;
                            double* dst = gx.data() + ((b * c_in + ci) * h + static_cast<std::size_t>(iy)) * w;
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                              const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kj);
                              if (ix >= 0 && ix < static_cast<long>(w)) dst[ix] += src[oy * ow + ox];
                            }
                          }
                        }
                  }
                });
  }
  return result;
}

// ---------------------------------------------------------------------------

Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require(input.rank() == 2 && weight.rank() == 2,
          "linear: expected input [n,p] and weight [q,p], got " + shape_str(input.shape()) + " and " +
              shape_str(weight.shape()));
  const std::size_t n = input.dim(0), p = input.dim(1), q = weight.dim(0);
  require(weight.dim(1) == p, "linear: inner dimensions differ (" + std::to_string(p) + " vs " +
                                  std::to_string(weight.dim(1)) + ")");
  if (bias.defined()) require(bias.rank() == 1 && bias.dim(0) == q, "linear: bias must be [q]");
  std::vector<double> out(n * q);
  const auto x = input.data(), wd = weight.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j) {
      double acc = bias.defined() ? bias.data()[j] : 0.0;
      const double* xr = x.data() + i * p;
      const double* wr = wd.data() + j * p;
#pragma omp simd reduction(+ : acc)
      for (std::size_t t = 0; t < p; ++t) acc += xr[t] * wr[t];
      out[i * q + j] = acc;
    }
  const bool rg = any_grad({&input, &weight, &bias});
  Tensor result = make_output({n, q}, std::move(out), rg);
  if (rg) {
    tape.record("linear", {input, weight, bias}, result,
                [=, input = input, weight = weight, bias = bias, result = result]() {
                  const auto g = result.grad();
                  auto gx = grad_of(input);
                  auto gw = grad_of(weight);
                  auto gb = grad_of(bias);
                  const auto xv = input.data(), wv = weight.data();
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < q; ++j) {
                      const double gij = g[i * q + j];
                      if (gij == 0.0) continue;
                      if (!gb.empty()) gb[j] += gij;
                      if (!gw.empty())
                        for (std::size_t t = 0; t < p; ++t) gw[j * p + t] += gij * xv[i * p + t];
                      if (!gx.empty())
                        for (std::size_t t = 0; t < p; ++t) gx[i * p + t] += gij * wv[j * p + t];
                    }
                });
  }
  return result;
}

// ---------------------------------------------------------------------------
// elementwise

namespace {
template <typename Fwd, typename Deriv>
Tensor unary(Tape& tape, const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  const bool rg = x.requires_grad();
  Tensor result = make_output(x.shape(), std::move(out), rg);
  if (rg) {
    tape.record(name, {x}, result, [x = x, result = result, deriv]() {
      auto gx = grad_of(x);
      const auto g = result.grad();
      const auto xv = x.data(), yv = result.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
    });
  }
  return result;
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, "relu", x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary(tape, "sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary(
      tape, "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor affine(Tape& tape, const Tensor& x, double factor, double offset) {
  return unary(
      tape, "affine", x, [=](double v) { return factor * v + offset; },
      [=](double, double) { return factor; });
}

namespace {
template <typename Fwd, typename Da, typename Db>
Tensor binary(Tape& tape, const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  require_same_shape(a, b, name);
  std::vector<double> out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const bool rg = any_grad({&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), rg);
  if (rg) {
    tape.record(name, {a, b}, result, [a = a, b = b, result = result, da, db]() {
      const auto g = result.grad();
      const auto av = a.data(), bv = b.data();
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * da(av[i], bv[i]);
      auto gb = grad_of(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * db(av[i], bv[i]);
    });
  }
  return result;
}
}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(
      tape, "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(
      tape, "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(
      tape, "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(Tape& tape, const Tensor& x) {
  const auto xv = x.data();
  const bool rg = x.requires_grad();
  Tensor result = make_output({}, {std::accumulate(xv.begin(), xv.end(), 0.0)}, rg);
  if (rg) {
    tape.record("sum", {x}, result, [x = x, result = result]() {
      const double g = result.grad()[0];
      for (double& v : grad_of(x)) v += g;
    });
  }
  return result;
}

Tensor mean(Tape& tape, const Tensor& x) {
  const auto xv = x.data();
  const double count = static_cast<double>(x.numel());
  const bool rg = x.requires_grad();
  Tensor result = make_output({}, {std::accumulate(xv.begin(), xv.end(), 0.0) / count}, rg);
  if (rg) {
    tape.record("mean", {x}, result, [x = x, result = result, count]() {
      const double g = result.grad()[0] / count;
      for (double& v : grad_of(x)) v += g;
    });
  }
  return result;
}

Tensor weighted_sum(Tape& tape, std::span<const Tensor> terms, std::span<const double> weights) {
  require(terms.size() == weights.size(), "weighted_sum: terms and weights differ in length");
  double total = 0.0;
  bool rg = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(terms[i].numel() == 1, "weighted_sum: terms must be scalars");
    total += weights[i] * terms[i].item();
    rg = rg || terms[i].requires_grad();
  }
  Tensor result = make_output({}, {total}, rg);
  if (rg) {
    std::vector<Tensor> ins(terms.begin(), terms.end());
    std::vector<double> ws(weights.begin(), weights.end());
    tape.record("weighted_sum", ins, result, [ins, ws, result = result]() {
      const double g = result.grad()[0];
      for (std::size_t i = 0; i < ins.size(); ++i) {
        auto gi = grad_of(ins[i]);
        if (!gi.empty()) gi[0] += ws[i] * g;
      }
    });
  }
  return result;
}

Tensor mean_pool_height(Tape& tape, const Tensor& input) {
  require(input.rank() == 4, "mean_pool_height: input must be [n,c,h,w]");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  std::vector<double> out(n * c * w, 0.0);
  const auto x = input.data();
  for (std::size_t nc = 0; nc < n * c; ++nc)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t col = 0; col < w; ++col) out[nc * w + col] += x[(nc * h + y) * w + col];
  for (double& v : out) v /= static_cast<double>(h);
  const bool rg = input.requires_grad();
  Tensor result = make_output({n, c, 1, w}, std::move(out), rg);
  if (rg) {
    tape.record("mean_pool_height", {input}, result, [=, input = input, result = result]() {
      auto gx = grad_of(input);
      const auto g = result.grad();
      const double inv = 1.0 / static_cast<double>(h);
      for (std::size_t nc = 0; nc < n * c; ++nc)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t col = 0; col < w; ++col) gx[(nc * h + y) * w + col] += g[nc * w + col] * inv;
    });
  }
  return result;
}

// ---------------------------------------------------------------------------

Tensor bilinear_sample(Tape& tape, const Tensor& feature_map, const Tensor& grid) {
  require(feature_map.rank() == 3, "bilinear_sample: feature map must be [c,h,w]");
  require(grid.rank() == 2 && grid.dim(1) == 2, "bilinear_sample: grid must be [p,2]");
  const std::size_t c = feature_map.dim(0), h = feature_map.dim(1), w = feature_map.dim(2);
  const std::size_t p = grid.dim(0);
  const auto f = feature_map.data();
  const auto gv = grid.data();

  auto at = [&](std::span<const double> map, std::size_t ch, long y, long x) -> double {
    if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return 0.0;
    return map[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)];
  };

  std::vector<double> out(c * p);
  for (std::size_t i = 0; i < p; ++i) {
    const double x = gv[2 * i], y = gv[2 * i + 1];
    const double fx = std::floor(x), fy = std::floor(y);
    const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
    const double ax = x - fx, ay = y - fy;
    for (std::size_t ch = 0; ch < c; ++ch) {
      out[ch * p + i] = (1 - ay) * ((1 - ax) * at(f, ch, y0, x0) + ax * at(f, ch, y0, x0 + 1)) +
                        ay * ((1 - ax) * at(f, ch, y0 + 1, x0) + ax * at(f, ch, y0 + 1, x0 + 1));
    }
  }
  const bool rg = any_grad({&feature_map, &grid});
  Tensor result = make_output({c, p}, std::move(out), rg);
  if (rg) {
    tape.record("bilinear_sample", {feature_map, grid}, result,
                [c, h, w, p, feature_map = feature_map, grid = grid, result = result]() {
                  const auto g = result.grad();
                  auto gf = grad_of(feature_map);
                  auto gg = grad_of(grid);
                  const auto fm = feature_map.data();
                  const auto gd = grid.data();
                  auto at = [&](std::span<const double> map, std::size_t ch, long y, long x) -> double {
                    if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return 0.0;
                    return map[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)];
                  };
                  auto scatter = [&](std::size_t ch, long y, long x, double v) {
                    if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return;
                    gf[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)] += v;
                  };
                  for (std::size_t i = 0; i < p; ++i) {
                    const double x = gd[2 * i], y = gd[2 * i + 1];
                    const double fx = std::floor(x), fy = std::floor(y);
                    const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
                    const double ax = x - fx, ay = y - fy;
                    double dx = 0.0, dy = 0.0;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                      const double gi = g[ch * p + i];
                      if (gi == 0.0) continue;
                      if (!gf.empty()) {
                        scatter(ch, y0, x0, gi * (1 - ay) * (1 - ax));
                        scatter(ch, y0, x0 + 1, gi * (1 - ay) * ax);
                        scatter(ch, y0 + 1, x0, gi * ay * (1 - ax));
                        scatter(ch, y0 + 1, x0 + 1, gi * ay * ax);
                      }
                      if (!gg.empty()) {
                        const double v00 = at(fm, ch, y0, x0), v01 = at(fm, ch, y0, x0 + 1);
                        const double v10 = at(fm, ch, y0 + 1, x0), v11 = at(fm, ch, y0 + 1, x0 + 1);
                        dx += gi * ((1 - ay) * (v01 - v00) + ay * (v11 - v10));
                        dy += gi * ((1 - ax) * (v10 - v00) + ax * (v11 - v01));
                      }
                    }
                    if (!gg.empty()) {
                      gg[2 * i] += dx;
                      gg[2 * i + 1] += dy;
                    }
                  }
                });
  }
  return result;
}

// ---------------------------------------------------------------------------
// losses

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets) {
  require(logits.rank() == 2, "softmax_cross_entropy: logits must be [n,k]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  require(targets.size() == n, "softmax_cross_entropy: one target per row required");
  for (int t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= k)
      throw InputError("softmax_cross_entropy: target index " + std::to_string(t) +
                       " outside [0," + std::to_string(k) + ")");
  const auto z = logits.data();
  auto probs = std::make_shared<std::vector<double>>(n * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] = std::exp(row[j] - lse);
    loss += lse - row[targets[i]];
  }
  loss /= static_cast<double>(n);
  const bool rg = logits.requires_grad();
  Tensor result = make_output({}, {loss}, rg);
  if (rg) {
    std::vector<int> tg(targets.begin(), targets.end());
    tape.record("softmax_cross_entropy", {logits}, result,
                [=, logits = logits, result = result]() {
                  auto gz = grad_of(logits);
                  const double g = result.grad()[0] / static_cast<double>(n);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                      const double onehot = static_cast<int>(j) == tg[i] ? 1.0 : 0.0;
                      gz[i * k + j] += g * ((*probs)[i * k + j] - onehot);
                    }
                });
  }
  return result;
}

Tensor binary_cross_entropy(Tape& tape, const Tensor& prob, const Tensor& labels) {
  require(prob.numel() == labels.numel(), "binary_cross_entropy: prob and labels differ in size");
  const std::size_t n = prob.numel();
  const auto p = prob.data(), y = labels.data();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pc = std::clamp(p[i], kBceEpsilon, 1.0 - kBceEpsilon);
    loss -= y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc);
  }
  loss /= static_cast<double>(n);
  const bool rg = prob.requires_grad();
  Tensor result = make_output({}, {loss}, rg);
  if (rg) {
    tape.record("binary_cross_entropy", {prob, labels}, result,
                [=, prob = prob, labels = labels, result = result]() {
                  auto gp = grad_of(prob);
                  const double g = result.grad()[0] / static_cast<double>(n);
                  const auto pv = prob.data(), yv = labels.data();
                  for (std::size_t i = 0; i < n; ++i) {
                    if (pv[i] < kBceEpsilon || pv[i] > 1.0 - kBceEpsilon) continue;
                    gp[i] += g * (-yv[i] / pv[i] + (1.0 - yv[i]) / (1.0 - pv[i]));
                  }
                });
  }
  return result;
}

Tensor l1_loss(Tape& tape, const Tensor& pred, const Tensor& target, const Tensor& mask) {
  require_same_shape(pred, target, "l1_loss");
  if (mask.defined()) require(mask.numel() == pred.numel(), "l1_loss: mask size mismatch");
  const auto pv = pred.data(), tv = target.data();
  double total = 0.0, count = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (mask.defined() && mask.data()[i] == 0.0) continue;
    total += std::abs(pv[i] - tv[i]);
    count += 1.0;
  }
  const double value = count > 0 ? total / count : 0.0;
  const bool rg = any_grad({&pred, &target});
  Tensor result = make_output({}, {value}, rg);
  if (rg && count > 0) {
    tape.record("l1_loss", {pred, target}, result,
                [=, pred = pred, target = target, mask = mask, result = result]() {
                  const double g = result.grad()[0] / count;
                  auto gp = grad_of(pred);
                  auto gt = grad_of(target);
                  const auto pv = pred.data(), tv = target.data();
                  for (std::size_t i = 0; i < pv.size(); ++i) {
                    if (mask.defined() && mask.data()[i] == 0.0) continue;
                    const double d = pv[i] - tv[i];
                    const double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                    if (!gp.empty()) gp[i] += g * s;
                    if (!gt.empty()) gt[i] -= g * s;
                  }
                });
  }
  return result;
}

Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  const auto pv = pred.data(), tv = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) total += (pv[i] - tv[i]) * (pv[i] - tv[i]);
  const double count = static_cast<double>(pv.size());
  const bool rg = any_grad({&pred, &target});
  Tensor result = make_output({}, {total / count}, rg);
  if (rg) {
    tape.record("mse_loss", {pred, target}, result,
                [=, pred = pred, target = target, result = result]() {
                  const double g = result.grad()[0] * 2.0 / count;
                  auto gp = grad_of(pred);
                  auto gt = grad_of(target);
                  const auto pv = pred.data(), tv = target.data();
                  for (std::size_t i = 0; i < pv.size(); ++i) {
                    const double d = pv[i] - tv[i];
                    if (!gp.empty()) gp[i] += g * d;
                    if (!gt.empty()) gt[i] -= g * d;
                  }
                });
  }
  return result;
}

// ---------------------------------------------------------------------------
// shape manipulation

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  const bool rg = x.requires_grad();
  Tensor result = make_output(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), rg);
  if (rg) {
    tape.record("reshape", {x}, result, [x = x, result = result]() {
      auto gx = grad_of(x);
      const auto g = result.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

Tensor transpose(Tape& tape, const Tensor& x) {
  require(x.rank() == 2, "transpose: input must be 2-D");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  const auto xv = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  const bool rg = x.requires_grad();
  Tensor result = make_output({c, r}, std::move(out), rg);
  if (rg) {
    tape.record("transpose", {x}, result, [=, x = x, result = result]() {
      auto gx = grad_of(x);
      const auto g = result.grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    });
  }
  return result;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows: nothing to concatenate");
  Shape shape = parts[0].shape();
  require(!shape.empty(), "concat_rows: inputs must have rank >= 1");
  const Shape trailing(shape.begin() + 1, shape.end());
  std::size_t rows = 0;
  std::vector<double> out;
  bool rg = false;
  for (const auto& t : parts) {
    require(t.rank() == shape.size() && Shape(t.shape().begin() + 1, t.shape().end()) == trailing,
            "concat_rows: trailing dimensions differ");
    rows += t.dim(0);
    out.insert(out.end(), t.data().begin(), t.data().end());
    rg = rg || t.requires_grad();
  }
  shape[0] = rows;
  Tensor result = make_output(std::move(shape), std::move(out), rg);
  if (rg) {
    std::vector<Tensor> ins(parts.begin(), parts.end());
    tape.record("concat_rows", ins, result, [ins, result = result]() {
      const auto g = result.grad();
      std::size_t offset = 0;
      for (const auto& t : ins) {
        auto gt = grad_of(t);
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[offset + i];
        offset += t.numel();
      }
    });
  }
  return result;
}

Tensor stack(Tape& tape, std::span<const Tensor> parts) {
  require(!parts.empty(), "stack: nothing to stack");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const auto& t : parts) {
    require(t.shape() == parts[0].shape(), "stack: shapes differ");
    Shape s{1};
    s.insert(s.end(), t.shape().begin(), t.shape().end());
    lifted.push_back(reshape(tape, t, std::move(s)));
  }
  return concat_rows(tape, lifted);
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  bool rg = false;
  for (const auto& t : parts) {
    require(t.rank() == 2 && t.dim(0) == rows, "concat_cols: inputs must be 2-D with equal rows");
    cols += t.dim(1);
    rg = rg || t.requires_grad();
  }
  std::vector<double> out(rows * cols);
  std::size_t off = 0;
  for (const auto& t : parts) {
    const std::size_t tc = t.dim(1);
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(t.data().data() + i * tc, tc, out.data() + i * cols + off);
    off += tc;
  }
  Tensor result = make_output({rows, cols}, std::move(out), rg);
  if (rg) {
    std::vector<Tensor> ins(parts.begin(), parts.end());
    tape.record("concat_cols", ins, result, [ins, rows, cols, result = result]() {
      const auto g = result.grad();
      std::size_t off = 0;
      for (const auto& t : ins) {
        const std::size_t tc = t.dim(1);
        auto gt = grad_of(t);
        if (!gt.empty())
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < tc; ++j) gt[i * tc + j] += g[i * cols + off + j];
        off += tc;
      }
    });
  }
  return result;
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> indices) {
  require(table.rank() == 2, "embedding: table must be [v,e]");
  const std::size_t v = table.dim(0), e = table.dim(1);
  std::vector<double> out;
  out.reserve(indices.size() * e);
  for (int idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= v)
      throw InputError("embedding: index " + std::to_string(idx) + " out of range");
    const double* row = table.data().data() + static_cast<std::size_t>(idx) * e;
    out.insert(out.end(), row, row + e);
  }
  const bool rg = table.requires_grad();
  Tensor result = make_output({indices.size(), e}, std::move(out), rg);
  if (rg) {
    std::vector<int> idx(indices.begin(), indices.end());
    tape.record("embedding", {table}, result, [=, table = table, result = result]() {
      auto gt = grad_of(table);
      const auto g = result.grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < e; ++j) gt[static_cast<std::size_t>(idx[i]) * e + j] += g[i * e + j];
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// fused recurrent pieces

Tensor additive_attention(Tape& tape, const Tensor& keys, const Tensor& query, const Tensor& v,
                          const Tensor& values, std::vector<double>* weights_out) {
  require(keys.rank() == 2 && values.rank() == 2 && keys.dim(0) == values.dim(0),
          "additive_attention: keys [T,a] and values [T,c] must share T");
  const std::size_t steps = keys.dim(0), a = keys.dim(1), c = values.dim(1);
  require(query.numel() == a && v.numel() == a, "additive_attention: query and v must have a entries");
  const auto kv = keys.data(), qv = query.data(), vv = v.data(), val = values.data();

  auto hidden = std::make_shared<std::vector<double>>(steps * a);
  auto alpha = std::make_shared<std::vector<double>>(steps);
  std::vector<double> score(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < a; ++j) {
      const double u = std::tanh(kv[t * a + j] + qv[j]);
      (*hidden)[t * a + j] = u;
      s += vv[j] * u;
    }
    score[t] = s;
  }
  const double mx = *std::max_element(score.begin(), score.end());
  double z = 0.0;
  for (std::size_t t = 0; t < steps; ++t) z += ((*alpha)[t] = std::exp(score[t] - mx));
  for (double& w : *alpha) w /= z;
  if (weights_out) *weights_out = *alpha;

  std::vector<double> ctx(c, 0.0);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t j = 0; j < c; ++j) ctx[j] += (*alpha)[t] * val[t * c + j];

  const bool rg = any_grad({&keys, &query, &v, &values});
  Tensor result = make_output({1, c}, std::move(ctx), rg);
  if (rg) {
    tape.record("additive_attention", {keys, query, v, values}, result,
                [=, keys = keys, query = query, v = v, values = values, result = result]() {
                  const auto g = result.grad();
                  const auto val = values.data(), vv = v.data();
                  auto gk = grad_of(keys);
                  auto gq = grad_of(query);
                  auto gv = grad_of(v);
                  auto gval = grad_of(values);
                  std::vector<double> dalpha(steps, 0.0);
                  double weighted = 0.0;
                  for (std::size_t t = 0; t < steps; ++t) {
                    for (std::size_t j = 0; j < c; ++j) {
                      dalpha[t] += g[j] * val[t * c + j];
                      if (!gval.empty()) gval[t * c + j] += (*alpha)[t] * g[j];
                    }
                    weighted += (*alpha)[t] * dalpha[t];
                  }
                  for (std::size_t t = 0; t < steps; ++t) {
                    const double ds = (*alpha)[t] * (dalpha[t] - weighted);
                    for (std::size_t j = 0; j < a; ++j) {
                      const double u = (*hidden)[t * a + j];
                      if (!gv.empty()) gv[j] += ds * u;
                      const double dpre = ds * vv[j] * (1.0 - u * u);
                      if (!gk.empty()) gk[t * a + j] += dpre;
                      if (!gq.empty()) gq[j] += dpre;
                    }
                  }
                });
  }
  return result;
}

Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const Tensor& w_ih,
                const Tensor& w_hh, const Tensor& b_ih, const Tensor& b_hh) {
  require(x.rank() == 2 && h.rank() == 2 && x.dim(0) == h.dim(0), "gru_cell: x [n,in], h [n,hid]");
  const std::size_t n = x.dim(0), in = x.dim(1), hid = h.dim(1);
  require(w_ih.rank() == 2 && w_ih.dim(0) == 3 * hid && w_ih.dim(1) == in, "gru_cell: w_ih must be [3*hid,in]");
  require(w_hh.rank() == 2 && w_hh.dim(0) == 3 * hid && w_hh.dim(1) == hid, "gru_cell: w_hh must be [3*hid,hid]");
  require(b_ih.numel() == 3 * hid && b_hh.numel() == 3 * hid, "gru_cell: biases must be [3*hid]");

  const auto xv = x.data(), hv = h.data(), wi = w_ih.data(), wh = w_hh.data();
  const auto bi = b_ih.data(), bh = b_hh.data();
  // Cached per row: gi (3*hid), gh (3*hid), r, z, n.
  auto gi = std::make_shared<std::vector<double>>(n * 3 * hid);
  auto gh = std::make_shared<std::vector<double>>(n * 3 * hid);
  auto gates = std::make_shared<std::vector<double>>(n * 3 * hid);
  std::vector<double> out(n * hid);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t r = 0; r < 3 * hid; ++r) {
      double si = bi[r], sh = bh[r];
      for (std::size_t t = 0; t < in; ++t) si += wi[r * in + t] * xv[b * in + t];
      for (std::size_t t = 0; t < hid; ++t) sh += wh[r * hid + t] * hv[b * hid + t];
      (*gi)[b * 3 * hid + r] = si;
      (*gh)[b * 3 * hid + r] = sh;
    }
    for (std::size_t j = 0; j < hid; ++j) {
      const double* gib = gi->data() + b * 3 * hid;
      const double* ghb = gh->data() + b * 3 * hid;
      const double rr = 1.0 / (1.0 + std::exp(-(gib[j] + ghb[j])));
      const double zz = 1.0 / (1.0 + std::exp(-(gib[hid + j] + ghb[hid + j])));
      const double nn = std::tanh(gib[2 * hid + j] + rr * ghb[2 * hid + j]);
      (*gates)[b * 3 * hid + j] = rr;
      (*gates)[b * 3 * hid + hid + j] = zz;
      (*gates)[b * 3 * hid + 2 * hid + j] = nn;
      out[b * hid + j] = (1.0 - zz) * nn + zz * hv[b * hid + j];
    }
  }
  const bool rg = any_grad({&x, &h, &w_ih, &w_hh, &b_ih, &b_hh});
  Tensor result = make_output({n, hid}, std::move(out), rg);
  if (rg) {
    tape.record("gru_cell", {x, h, w_ih, w_hh, b_ih, b_hh}, result,
                [=, x = x, h = h, w_ih = w_ih, w_hh = w_hh, b_ih = b_ih, b_hh = b_hh, result = result]() {
                  const auto g = result.grad();
                  const auto xv = x.data(), hv = h.data(), wi = w_ih.data(), wh = w_hh.data();
                  auto gx = grad_of(x);
                  auto ghid = grad_of(h);
                  auto gwi = grad_of(w_ih);
                  auto gwh = grad_of(w_hh);
                  auto gbi = grad_of(b_ih);
                  auto gbh = grad_of(b_hh);
                  std::vector<double> dgi(3 * hid), dgh(3 * hid);
                  for (std::size_t b = 0; b < n; ++b) {
                    const double* gt = gates->data() + b * 3 * hid;
                    const double* ghb = gh->data() + b * 3 * hid;
                    for (std::size_t j = 0; j < hid; ++j) {
                      const double rr = gt[j], zz = gt[hid + j], nn = gt[2 * hid + j];
                      const double go = g[b * hid + j];
                      const double dn = go * (1.0 - zz);
                      const double dz = go * (hv[b * hid + j] - nn);
                      if (!ghid.empty()) ghid[b * hid + j] += go * zz;
                      const double dpre_n = dn * (1.0 - nn * nn);
                      const double dr = dpre_n * ghb[2 * hid + j];
                      const double dpre_z = dz * zz * (1.0 - zz);
                      const double dpre_r = dr * rr * (1.0 - rr);
                      dgi[j] = dpre_r;
                      dgh[j] = dpre_r;
                      dgi[hid + j] = dpre_z;
                      dgh[hid + j] = dpre_z;
                      dgi[2 * hid + j] = dpre_n;
                      dgh[2 * hid + j] = dpre_n * rr;
                    }
                    for (std::size_t r = 0; r < 3 * hid; ++r) {
                      if (!gbi.empty()) gbi[r] += dgi[r];
                      if (!gbh.empty()) gbh[r] += dgh[r];
                      for (std::size_t t = 0; t < in; ++t) {
                        if (!gwi.empty()) gwi[r * in + t] += dgi[r] * xv[b * in + t];
                        if (!gx.empty()) gx[b * in + t] += dgi[r] * wi[r * in + t];
                      }
                      for (std::size_t t = 0; t < hid; ++t) {
                        if (!gwh.empty()) gwh[r * hid + t] += dgh[r] * hv[b * hid + t];
                        if (!ghid.empty()) ghid[b * hid + t] += dgh[r] * wh[r * hid + t];
                      }
                    }
                  }
                });
  }
  return result;
}

}  // namespace a3s::ops
