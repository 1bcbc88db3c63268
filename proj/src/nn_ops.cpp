#include "slimseiz/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "slimseiz/errors.hpp"

namespace slimseiz::nn {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeMismatch(std::string(op) + ": shapes differ");
}

// Dot product with eight independent double accumulators. The lane split is
// part of the definition (fixed order, reproducible) and lets the compiler
// vectorize what a strict left-to-right reduction would keep scalar.
double dot_lanes(const float* a, const float* b, int n) {
  double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l)
      lane[l] += static_cast<double>(a[i + l]) * b[i + l];
  double acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
               ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double sigmoid(double v) {
  if (v >= 0.0) {
    const double e = std::exp(-v);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double softplus(double v) {
  if (v > 20.0) return v;
  if (v < -20.0) return std::exp(v);
  return std::log1p(std::exp(v));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_op_output(a.shape(), "add", {a, b}, [a, b](const Tensor& o) {
    const float* go = o.grad();
    const std::int64_t n = o.size();
    if (a.requires_grad()) {
      float* ga = const_cast<Tensor&>(a).grad();
      for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i];
    }
    if (b.requires_grad()) {
      float* gb = const_cast<Tensor&>(b).grad();
      for (std::int64_t i = 0; i < n; ++i) gb[i] += go[i];
    }
  });
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  for (std::int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] + pb[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_op_output(a.shape(), "mul", {a, b}, [a, b](const Tensor& o) {
    const float* go = o.grad();
    const float* pa = a.data();
    const float* pb = b.data();
    const std::int64_t n = o.size();
    if (a.requires_grad()) {
      float* ga = const_cast<Tensor&>(a).grad();
      for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i] * pb[i];
    }
    if (b.requires_grad()) {
      float* gb = const_cast<Tensor&>(b).grad();
      for (std::int64_t i = 0; i < n; ++i) gb[i] += go[i] * pa[i];
    }
  });
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  for (std::int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] * pb[i];
  return out;
}

Tensor scale_add(const Tensor& a, const Tensor& b, double lambda) {
  check_same_shape(a, b, "scale_add");
  const float lam = static_cast<float>(lambda);
  Tensor out =
      make_op_output(a.shape(), "scale_add", {a, b}, [a, b, lam](const Tensor& o) {
        const float* go = o.grad();
        const std::int64_t n = o.size();
        if (a.requires_grad()) {
          float* ga = const_cast<Tensor&>(a).grad();
          for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i];
        }
        if (b.requires_grad()) {
          float* gb = const_cast<Tensor&>(b).grad();
          for (std::int64_t i = 0; i < n; ++i) gb[i] += go[i] * lam;
        }
      });
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  for (std::int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] + lam * pb[i];
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = make_op_output(x.shape(), "relu", {x}, [x](const Tensor& o) {
    if (!x.requires_grad()) return;
    const float* go = o.grad();
    const float* px = x.data();
    float* gx = const_cast<Tensor&>(x).grad();
    for (std::int64_t i = 0; i < o.size(); ++i)
      if (px[i] > 0.0f) gx[i] += go[i];
  });
  const float* px = x.data();
  float* po = out.data();
  for (std::int64_t i = 0; i < x.size(); ++i) po[i] = px[i] > 0.0f ? px[i] : 0.0f;
  return out;
}

Tensor silu(const Tensor& x) {
  Tensor out = make_op_output(x.shape(), "silu", {x}, [x](const Tensor& o) {
    if (!x.requires_grad()) return;
    const float* go = o.grad();
    const float* px = x.data();
    float* gx = const_cast<Tensor&>(x).grad();
    for (std::int64_t i = 0; i < o.size(); ++i) {
      const double s = sigmoid(px[i]);
      gx[i] += static_cast<float>(go[i] * s * (1.0 + px[i] * (1.0 - s)));
    }
  });
  const float* px = x.data();
  float* po = out.data();
  for (std::int64_t i = 0; i < x.size(); ++i)
    po[i] = static_cast<float>(px[i] * sigmoid(px[i]));
  return out;
}

Tensor fc(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || b.rank() != 1)
    throw ShapeMismatch("fc: weight must be rank 2 and bias rank 1");
  const int d_out = w.dim(0);
  const int d_in = w.dim(1);
  if (b.dim(0) != d_out) throw ShapeMismatch("fc: bias length mismatch");
  if (x.dim(x.rank() - 1) != d_in)
    throw ShapeMismatch("fc: input feature dimension mismatch");
  const std::int64_t rows = x.size() / d_in;

  std::vector<int> out_shape = x.shape();
  out_shape.back() = d_out;
  Tensor out = make_op_output(
      std::move(out_shape), "fc", {x, w, b},
      [x, w, b, rows, d_in, d_out](const Tensor& o) {
        const float* go = o.grad();
        const float* px = x.data();
        const float* pw = w.data();
        if (x.requires_grad()) {
          float* gx = const_cast<Tensor&>(x).grad();
          for (std::int64_t r = 0; r < rows; ++r) {
            const float* gr = go + r * d_out;
            float* gxr = gx + r * d_in;
            for (int o_i = 0; o_i < d_out; ++o_i) {
              const float g = gr[o_i];
              const float* wr = pw + static_cast<std::int64_t>(o_i) * d_in;
              for (int i = 0; i < d_in; ++i) gxr[i] += g * wr[i];
            }
          }
        }
        if (w.requires_grad() || b.requires_grad()) {
          std::vector<double> dw(static_cast<std::size_t>(d_out) * d_in, 0.0);
          std::vector<double> db(static_cast<std::size_t>(d_out), 0.0);
          for (std::int64_t r = 0; r < rows; ++r) {
            const float* gr = go + r * d_out;
            const float* xr = px + r * d_in;
            for (int o_i = 0; o_i < d_out; ++o_i) {
              const double g = gr[o_i];
              db[static_cast<std::size_t>(o_i)] += g;
              double* dwr = dw.data() + static_cast<std::size_t>(o_i) * d_in;
              for (int i = 0; i < d_in; ++i) dwr[i] += g * xr[i];
            }
          }
          if (w.requires_grad()) {
            float* gw = const_cast<Tensor&>(w).grad();
            for (std::int64_t i = 0; i < w.size(); ++i)
              gw[i] += static_cast<float>(dw[static_cast<std::size_t>(i)]);
          }
          if (b.requires_grad()) {
            float* gb = const_cast<Tensor&>(b).grad();
            for (int i = 0; i < d_out; ++i)
              gb[i] += static_cast<float>(db[static_cast<std::size_t>(i)]);
          }
        }
      });

  const float* px = x.data();
  const float* pw = w.data();
  const float* pb = b.data();
  float* po = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* xr = px + r * d_in;
    float* orow = po + r * d_out;
    for (int o_i = 0; o_i < d_out; ++o_i) {
      const float* wr = pw + static_cast<std::int64_t>(o_i) * d_in;
      float acc = 0.0f;
      for (int i = 0; i < d_in; ++i) acc += xr[i] * wr[i];
      orow[o_i] = acc + pb[o_i];
    }
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding) {
  if (x.rank() != 3 || w.rank() != 3 || b.rank() != 1)
    throw ShapeMismatch("conv1d: x and w must be rank 3, b rank 1");
  const int batch = x.dim(0);
  const int c_in = x.dim(1);
  const int len = x.dim(2);
  const int c_out = w.dim(0);
  const int kernel = w.dim(2);
  if (w.dim(1) != c_in) throw ShapeMismatch("conv1d: input channel mismatch");
  if (b.dim(0) != c_out) throw ShapeMismatch("conv1d: bias length mismatch");
  if (stride < 1 || padding < 0) throw ShapeMismatch("conv1d: bad stride/padding");
  if (kernel > len + 2 * padding)
    throw ShapeMismatch("conv1d: kernel longer than padded input");
  const int l_out = (len + 2 * padding - kernel) / stride + 1;
  const int l_pad = len + 2 * padding;

  // Zero-padded copy of x; inner loops then run contiguously.
  auto xpad = std::make_shared<std::vector<float>>(
      static_cast<std::size_t>(batch) * c_in * l_pad, 0.0f);
  {
    const float* px = x.data();
    for (int bi = 0; bi < batch; ++bi)
      for (int c = 0; c < c_in; ++c)
        std::copy(px + (static_cast<std::int64_t>(bi) * c_in + c) * len,
                  px + (static_cast<std::int64_t>(bi) * c_in + c) * len + len,
                  xpad->data() +
                      (static_cast<std::int64_t>(bi) * c_in + c) * l_pad + padding);
  }

  Tensor out = make_op_output(
      {batch, c_out, l_out}, "conv1d", {x, w, b},
      [x, w, b, xpad, batch, c_in, len, c_out, kernel, stride, padding, l_out,
       l_pad](const Tensor& o) {
        const float* go = o.grad();
        const float* pw = w.data();
        if (x.requires_grad()) {
          float* gx = const_cast<Tensor&>(x).grad();
          std::vector<float> gpad(static_cast<std::size_t>(c_in) * l_pad);
          for (int bi = 0; bi < batch; ++bi) {
            std::fill(gpad.begin(), gpad.end(), 0.0f);
            for (int oc = 0; oc < c_out; ++oc) {
              const float* grow =
                  go + (static_cast<std::int64_t>(bi) * c_out + oc) * l_out;
              for (int c = 0; c < c_in; ++c) {
                float* gprow = gpad.data() + static_cast<std::int64_t>(c) * l_pad;
                const float* wrow =
                    pw + (static_cast<std::int64_t>(oc) * c_in + c) * kernel;
                for (int k = 0; k < kernel; ++k) {
                  const float wv = wrow[k];
                  if (stride == 1) {
                    float* gp = gprow + k;
                    for (int t = 0; t < l_out; ++t) gp[t] += wv * grow[t];
                  } else {
                    for (int t = 0; t < l_out; ++t)
                      gprow[t * stride + k] += wv * grow[t];
                  }
                }
              }
            }
            for (int c = 0; c < c_in; ++c) {
              float* gxr = gx + (static_cast<std::int64_t>(bi) * c_in + c) * len;
              const float* gprow =
                  gpad.data() + static_cast<std::int64_t>(c) * l_pad + padding;
              for (int t = 0; t < len; ++t) gxr[t] += gprow[t];
            }
          }
        }
        if (w.requires_grad() || b.requires_grad()) {
          std::vector<double> dw(static_cast<std::size_t>(w.size()), 0.0);
          std::vector<double> db(static_cast<std::size_t>(c_out), 0.0);
          for (int bi = 0; bi < batch; ++bi) {
            for (int oc = 0; oc < c_out; ++oc) {
              const float* grow =
                  go + (static_cast<std::int64_t>(bi) * c_out + oc) * l_out;
              double bacc = 0.0;
              for (int t = 0; t < l_out; ++t) bacc += grow[t];
              db[static_cast<std::size_t>(oc)] += bacc;
              for (int c = 0; c < c_in; ++c) {
                const float* xrow =
                    xpad->data() + (static_cast<std::int64_t>(bi) * c_in + c) * l_pad;
                double* dwrow =
                    dw.data() + (static_cast<std::int64_t>(oc) * c_in + c) * kernel;
                for (int k = 0; k < kernel; ++k) {
                  if (stride == 1) {
                    dwrow[k] += dot_lanes(grow, xrow + k, l_out);
                  } else {
                    double acc = 0.0;
                    for (int t = 0; t < l_out; ++t)
                      acc += static_cast<double>(grow[t]) * xrow[t * stride + k];
                    dwrow[k] += acc;
                  }
                }
              }
            }
          }
          if (w.requires_grad()) {
            float* gw = const_cast<Tensor&>(w).grad();
            for (std::int64_t i = 0; i < w.size(); ++i)
              gw[i] += static_cast<float>(dw[static_cast<std::size_t>(i)]);
          }
          if (b.requires_grad()) {
            float* gb = const_cast<Tensor&>(b).grad();
            for (int i = 0; i < c_out; ++i)
              gb[i] += static_cast<float>(db[static_cast<std::size_t>(i)]);
          }
        }
      });

  const float* pw = w.data();
  const float* pb = b.data();
  float* po = out.data();
  for (int bi = 0; bi < batch; ++bi) {
    for (int oc = 0; oc < c_out; ++oc) {
      float* orow = po + (static_cast<std::int64_t>(bi) * c_out + oc) * l_out;
      std::fill(orow, orow + l_out, pb[oc]);
      for (int c = 0; c < c_in; ++c) {
        const float* xrow =
            xpad->data() + (static_cast<std::int64_t>(bi) * c_in + c) * l_pad;
        const float* wrow = pw + (static_cast<std::int64_t>(oc) * c_in + c) * kernel;
        for (int k = 0; k < kernel; ++k) {
          const float wv = wrow[k];
          if (stride == 1) {
            const float* xs = xrow + k;
            for (int t = 0; t < l_out; ++t) orow[t] += wv * xs[t];
          } else {
            for (int t = 0; t < l_out; ++t) orow[t] += wv * xrow[t * stride + k];
          }
        }
      }
    }
  }
  return out;
}

Tensor dwconv_causal(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 3 || w.rank() != 2 || b.rank() != 1)
    throw ShapeMismatch("dwconv_causal: x rank 3, w rank 2, b rank 1");
  const int batch = x.dim(0);
  const int len = x.dim(1);
  const int ch = x.dim(2);
  const int kernel = w.dim(1);
  if (w.dim(0) != ch || b.dim(0) != ch)
    throw ShapeMismatch("dwconv_causal: channel mismatch");

  Tensor out = make_op_output(
      x.shape(), "dwconv_causal", {x, w, b},
      [x, w, b, batch, len, ch, kernel](const Tensor& o) {
        const float* go = o.grad();
        const float* px = x.data();
        const float* pw = w.data();
        if (x.requires_grad()) {
          float* gx = const_cast<Tensor&>(x).grad();
          for (int bi = 0; bi < batch; ++bi) {
            for (int t = 0; t < len; ++t) {
              const float* grow =
                  go + (static_cast<std::int64_t>(bi) * len + t) * ch;
              for (int k = 0; k < kernel; ++k) {
                const int tt = t - kernel + 1 + k;
                if (tt < 0) continue;
                float* gxr = gx + (static_cast<std::int64_t>(bi) * len + tt) * ch;
                for (int c = 0; c < ch; ++c)
                  gxr[c] += pw[static_cast<std::int64_t>(c) * kernel + k] * grow[c];
              }
            }
          }
        }
        if (w.requires_grad() || b.requires_grad()) {
          std::vector<double> dw(static_cast<std::size_t>(ch) * kernel, 0.0);
          std::vector<double> db(static_cast<std::size_t>(ch), 0.0);
          for (int bi = 0; bi < batch; ++bi) {
            for (int t = 0; t < len; ++t) {
              const float* grow =
                  go + (static_cast<std::int64_t>(bi) * len + t) * ch;
              for (int c = 0; c < ch; ++c) db[static_cast<std::size_t>(c)] += grow[c];
              for (int k = 0; k < kernel; ++k) {
                const int tt = t - kernel + 1 + k;
                if (tt < 0) continue;
                const float* xr =
                    px + (static_cast<std::int64_t>(bi) * len + tt) * ch;
                for (int c = 0; c < ch; ++c)
                  dw[static_cast<std::size_t>(c) * kernel + k] +=
                      static_cast<double>(grow[c]) * xr[c];
              }
            }
          }
          if (w.requires_grad()) {
            float* gw = const_cast<Tensor&>(w).grad();
            for (std::int64_t i = 0; i < w.size(); ++i)
              gw[i] += static_cast<float>(dw[static_cast<std::size_t>(i)]);
          }
          if (b.requires_grad()) {
            float* gb = const_cast<Tensor&>(b).grad();
            for (int c = 0; c < ch; ++c)
              gb[c] += static_cast<float>(db[static_cast<std::size_t>(c)]);
          }
        }
      });

  const float* px = x.data();
  const float* pw = w.data();
  const float* pb = b.data();
  float* po = out.data();
  for (int bi = 0; bi < batch; ++bi) {
    for (int t = 0; t < len; ++t) {
      float* orow = po + (static_cast<std::int64_t>(bi) * len + t) * ch;
      for (int c = 0; c < ch; ++c) orow[c] = pb[c];
      for (int k = 0; k < kernel; ++k) {
        const int tt = t - kernel + 1 + k;
        if (tt < 0) continue;
        const float* xr = px + (static_cast<std::int64_t>(bi) * len + tt) * ch;
        for (int c = 0; c < ch; ++c)
          orow[c] += pw[static_cast<std::int64_t>(c) * kernel + k] * xr[c];
      }
    }
  }
  return out;
}

Tensor maxpool1d(const Tensor& x, int window, int stride) {
  if (x.rank() != 3) throw ShapeMismatch("maxpool1d: input must be rank 3");
  if (window < 1 || stride < 1) throw ShapeMismatch("maxpool1d: bad window/stride");
  const int batch = x.dim(0);
  const int ch = x.dim(1);
  const int len = x.dim(2);
  if (window > len) throw ShapeMismatch("maxpool1d: window longer than input");
  const int l_out = (len - window) / stride + 1;

  auto argmax = std::make_shared<std::vector<int>>(
      static_cast<std::size_t>(batch) * ch * l_out);
  Tensor out = make_op_output(
      {batch, ch, l_out}, "maxpool1d", {x},
      [x, argmax, batch, ch, len, l_out](const Tensor& o) {
        if (!x.requires_grad()) return;
        const float* go = o.grad();
        float* gx = const_cast<Tensor&>(x).grad();
        const std::int64_t rows = static_cast<std::int64_t>(batch) * ch;
        for (std::int64_t r = 0; r < rows; ++r) {
          const float* grow = go + r * l_out;
          float* gxr = gx + r * len;
          const int* arow = argmax->data() + r * l_out;
          for (int t = 0; t < l_out; ++t) gxr[arow[t]] += grow[t];
        }
      });

  const float* px = x.data();
  float* po = out.data();
  const std::int64_t rows = static_cast<std::int64_t>(batch) * ch;
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* xr = px + r * len;
    float* orow = po + r * l_out;
    int* arow = argmax->data() + r * l_out;
    for (int t = 0; t < l_out; ++t) {
      const int start = t * stride;
      int best = start;
      float best_v = xr[start];
      for (int k = 1; k < window; ++k)
        if (xr[start + k] > best_v) {  // strict: first maximum wins ties
          best_v = xr[start + k];
          best = start + k;
        }
      orow[t] = best_v;
      arow[t] = best;
    }
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 3) throw ShapeMismatch("global_avg_pool: input must be rank 3");
  const int batch = x.dim(0);
  const int ch = x.dim(1);
  const int len = x.dim(2);
  Tensor out = make_op_output(
      {batch, ch}, "global_avg_pool", {x}, [x, batch, ch, len](const Tensor& o) {
        if (!x.requires_grad()) return;
        const float* go = o.grad();
        float* gx = const_cast<Tensor&>(x).grad();
        const float inv = 1.0f / static_cast<float>(len);
        const std::int64_t rows = static_cast<std::int64_t>(batch) * ch;
        for (std::int64_t r = 0; r < rows; ++r) {
          const float g = go[r] * inv;
          float* gxr = gx + r * len;
          for (int t = 0; t < len; ++t) gxr[t] += g;
        }
      });
  const float* px = x.data();
  float* po = out.data();
  const std::int64_t rows = static_cast<std::int64_t>(batch) * ch;
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* xr = px + r * len;
    double acc = 0.0;
    for (int t = 0; t < len; ++t) acc += xr[t];
    po[r] = static_cast<float>(acc / len);
  }
  return out;
}

namespace {

Tensor transpose23(const Tensor& x, const char* name) {
  const int batch = x.dim(0);
  const int d1 = x.dim(1);
  const int d2 = x.dim(2);
  Tensor out = make_op_output(
      {batch, d2, d1}, name, {x}, [x, batch, d1, d2](const Tensor& o) {
        if (!x.requires_grad()) return;
        const float* go = o.grad();
        float* gx = const_cast<Tensor&>(x).grad();
        for (int bi = 0; bi < batch; ++bi) {
          const float* gb = go + static_cast<std::int64_t>(bi) * d1 * d2;
          float* gxb = gx + static_cast<std::int64_t>(bi) * d1 * d2;
          for (int i = 0; i < d1; ++i)
            for (int j = 0; j < d2; ++j)
              gxb[static_cast<std::int64_t>(i) * d2 + j] +=
                  gb[static_cast<std::int64_t>(j) * d1 + i];
        }
      });
  const float* px = x.data();
  float* po = out.data();
  for (int bi = 0; bi < batch; ++bi) {
    const float* xb = px + static_cast<std::int64_t>(bi) * d1 * d2;
    float* ob = po + static_cast<std::int64_t>(bi) * d1 * d2;
    for (int i = 0; i < d1; ++i)
      for (int j = 0; j < d2; ++j)
        ob[static_cast<std::int64_t>(j) * d1 + i] =
            xb[static_cast<std::int64_t>(i) * d2 + j];
  }
  return out;
}

}  // namespace

Tensor transpose_cl(const Tensor& x) {
  if (x.rank() != 3) throw ShapeMismatch("transpose_cl: input must be rank 3");
  return transpose23(x, "transpose_cl");
}

Tensor transpose_lc(const Tensor& x) {
  if (x.rank() != 3) throw ShapeMismatch("transpose_lc: input must be rank 3");
  return transpose23(x, "transpose_lc");
}

Tensor ssm_scan(const Tensor& x, const SsmParams& p) {
  if (x.rank() != 3) throw ShapeMismatch("ssm_scan: input must be [B, L, D]");
  const int batch = x.dim(0);
  const int len = x.dim(1);
  const int d_inner = x.dim(2);
  const int n_state = p.a_log.dim(1);
  const int dt_rank = p.dt_down.dim(0);
  if (p.a_log.dim(0) != d_inner || p.proj_b.dim(0) != n_state ||
      p.proj_b.dim(1) != d_inner || p.proj_c.dim(0) != n_state ||
      p.proj_c.dim(1) != d_inner || p.dt_down.dim(1) != d_inner ||
      p.dt_up.dim(0) != d_inner || p.dt_up.dim(1) != dt_rank ||
      p.dt_bias.dim(0) != d_inner || p.skip_d.dim(0) != d_inner)
    throw ShapeMismatch("ssm_scan: parameter shapes are inconsistent");

  const std::int64_t bl = static_cast<std::int64_t>(batch) * len;
  // Cached forward intermediates (double precision) for the backward pass.
  auto delta = std::make_shared<std::vector<double>>(bl * d_inner);
  auto dt_pre = std::make_shared<std::vector<double>>(bl * d_inner);
  auto dt_low = std::make_shared<std::vector<double>>(bl * dt_rank);
  auto bt = std::make_shared<std::vector<double>>(bl * n_state);
  auto ct = std::make_shared<std::vector<double>>(bl * n_state);
  auto abar = std::make_shared<std::vector<double>>(bl * d_inner * n_state);
  auto h_hist = std::make_shared<std::vector<double>>(bl * d_inner * n_state);

  const float* px = x.data();
  const float* pa_log = p.a_log.data();
  const float* pproj_b = p.proj_b.data();
  const float* pproj_c = p.proj_c.data();
  const float* pdt_down = p.dt_down.data();
  const float* pdt_up = p.dt_up.data();
  const float* pdt_bias = p.dt_bias.data();
  const float* pskip = p.skip_d.data();

  std::vector<double> a_neg(static_cast<std::size_t>(d_inner) * n_state);
  for (std::size_t i = 0; i < a_neg.size(); ++i)
    a_neg[i] = -std::exp(static_cast<double>(pa_log[i]));

  SsmParams params = p;
  Tensor out = make_op_output(
      x.shape(), "ssm_scan",
      {x, p.a_log, p.proj_b, p.proj_c, p.dt_down, p.dt_up, p.dt_bias, p.skip_d},
      [x, params, delta, dt_pre, dt_low, bt, ct, abar, h_hist, a_neg, batch,
       len, d_inner, n_state, dt_rank](const Tensor& o) {
        const float* go = o.grad();
        const float* px = x.data();
        const float* pproj_b = params.proj_b.data();
        const float* pproj_c = params.proj_c.data();
        const float* pdt_down = params.dt_down.data();
        const float* pdt_up = params.dt_up.data();
        const float* pskip = params.skip_d.data();

        const std::size_t dn = static_cast<std::size_t>(d_inner) * n_state;
        std::vector<double> g_a_log(dn, 0.0);
        std::vector<double> g_proj_b(static_cast<std::size_t>(n_state) * d_inner, 0.0);
        std::vector<double> g_proj_c(static_cast<std::size_t>(n_state) * d_inner, 0.0);
        std::vector<double> g_dt_down(static_cast<std::size_t>(dt_rank) * d_inner, 0.0);
        std::vector<double> g_dt_up(static_cast<std::size_t>(d_inner) * dt_rank, 0.0);
        std::vector<double> g_dt_bias(static_cast<std::size_t>(d_inner), 0.0);
        std::vector<double> g_skip(static_cast<std::size_t>(d_inner), 0.0);
        const bool need_gx = x.requires_grad();
        float* gx = need_gx ? const_cast<Tensor&>(x).grad() : nullptr;

        std::vector<double> dh(dn);          // dL/dh_t carried backward
        std::vector<double> d_delta(static_cast<std::size_t>(d_inner));
        std::vector<double> d_bt(static_cast<std::size_t>(n_state));
        std::vector<double> d_ct(static_cast<std::size_t>(n_state));
        std::vector<double> d_dt_low(static_cast<std::size_t>(dt_rank));
        std::vector<double> dx_row(static_cast<std::size_t>(d_inner));

        for (int bi = 0; bi < batch; ++bi) {
          std::fill(dh.begin(), dh.end(), 0.0);
          for (int t = len - 1; t >= 0; --t) {
            const std::int64_t row = static_cast<std::int64_t>(bi) * len + t;
            const float* grow = go + row * d_inner;
            const float* xrow = px + row * d_inner;
            const double* h_row = h_hist->data() + row * d_inner * n_state;
            const double* h_prev =
                t > 0 ? h_hist->data() + (row - 1) * d_inner * n_state : nullptr;
            const double* abar_row = abar->data() + row * d_inner * n_state;
            const double* bt_row = bt->data() + row * n_state;
            const double* ct_row = ct->data() + row * n_state;
            const double* delta_row = delta->data() + row * d_inner;
            const double* dt_pre_row = dt_pre->data() + row * d_inner;
            const double* dt_low_row = dt_low->data() + row * dt_rank;

            std::fill(d_delta.begin(), d_delta.end(), 0.0);
            std::fill(d_bt.begin(), d_bt.end(), 0.0);
            std::fill(d_ct.begin(), d_ct.end(), 0.0);
            std::fill(dx_row.begin(), dx_row.end(), 0.0);

            // y_t = <C_t, h_t> + D x_t
            for (int d = 0; d < d_inner; ++d) {
              const double g = grow[d];
              g_skip[static_cast<std::size_t>(d)] += g * xrow[d];
              dx_row[static_cast<std::size_t>(d)] += g * pskip[d];
              const double* h_d = h_row + static_cast<std::int64_t>(d) * n_state;
              for (int s = 0; s < n_state; ++s) d_ct[static_cast<std::size_t>(s)] += g * h_d[s];
            }
            // dh_t = dy_t C_t + carried term
            for (int d = 0; d < d_inner; ++d) {
              const double g = grow[d];
              double* dh_d = dh.data() + static_cast<std::int64_t>(d) * n_state;
              for (int s = 0; s < n_state; ++s) dh_d[s] += g * ct_row[s];
            }
            // h_t = Abar h_{t-1} + delta B_t x_t
            for (int d = 0; d < d_inner; ++d) {
              double* dh_d = dh.data() + static_cast<std::int64_t>(d) * n_state;
              const double* abar_d = abar_row + static_cast<std::int64_t>(d) * n_state;
              const double xv = xrow[d];
              const double dv = delta_row[d];
              double d_delta_acc = 0.0;
              double dx_acc = 0.0;
              for (int s = 0; s < n_state; ++s) {
                const double dh_v = dh_d[s];
                const double hp = h_prev ? h_prev[static_cast<std::int64_t>(d) * n_state + s] : 0.0;
                // through Abar = exp(delta A)
                const double d_abar = dh_v * hp;
                const double a = a_neg[static_cast<std::size_t>(d) * n_state + s];
                d_delta_acc += d_abar * abar_d[s] * a;
                g_a_log[static_cast<std::size_t>(d) * n_state + s] +=
                    d_abar * abar_d[s] * dv * a;  // dA/da_log = A
                // through delta B_t x_t
                d_delta_acc += dh_v * bt_row[s] * xv;
                d_bt[static_cast<std::size_t>(s)] += dh_v * dv * xv;
                dx_acc += dh_v * dv * bt_row[s];
                // carry to h_{t-1}
                dh_d[s] = dh_v * abar_d[s];
              }
              d_delta[static_cast<std::size_t>(d)] += d_delta_acc;
              dx_row[static_cast<std::size_t>(d)] += dx_acc;
            }
            // delta = softplus(dt_pre); dt_pre = dt_up dt_low + dt_bias
            std::fill(d_dt_low.begin(), d_dt_low.end(), 0.0);
            for (int d = 0; d < d_inner; ++d) {
              const double d_pre =
                  d_delta[static_cast<std::size_t>(d)] * sigmoid(dt_pre_row[d]);
              g_dt_bias[static_cast<std::size_t>(d)] += d_pre;
              for (int r = 0; r < dt_rank; ++r) {
                g_dt_up[static_cast<std::size_t>(d) * dt_rank + r] +=
                    d_pre * dt_low_row[r];
                d_dt_low[static_cast<std::size_t>(r)] +=
                    d_pre * pdt_up[static_cast<std::int64_t>(d) * dt_rank + r];
              }
            }
            for (int r = 0; r < dt_rank; ++r) {
              const double g = d_dt_low[static_cast<std::size_t>(r)];
              for (int d = 0; d < d_inner; ++d) {
                g_dt_down[static_cast<std::size_t>(r) * d_inner + d] += g * xrow[d];
                dx_row[static_cast<std::size_t>(d)] +=
                    g * pdt_down[static_cast<std::int64_t>(r) * d_inner + d];
              }
            }
            // B_t = proj_b x_t, C_t = proj_c x_t
            for (int s = 0; s < n_state; ++s) {
              const double gb = d_bt[static_cast<std::size_t>(s)];
              const double gc = d_ct[static_cast<std::size_t>(s)];
              for (int d = 0; d < d_inner; ++d) {
                g_proj_b[static_cast<std::size_t>(s) * d_inner + d] += gb * xrow[d];
                g_proj_c[static_cast<std::size_t>(s) * d_inner + d] += gc * xrow[d];
                dx_row[static_cast<std::size_t>(d)] +=
                    gb * pproj_b[static_cast<std::int64_t>(s) * d_inner + d] +
                    gc * pproj_c[static_cast<std::int64_t>(s) * d_inner + d];
              }
            }
            if (need_gx) {
              float* gxr = gx + row * d_inner;
              for (int d = 0; d < d_inner; ++d)
                gxr[d] += static_cast<float>(dx_row[static_cast<std::size_t>(d)]);
            }
          }
        }

        auto flush = [](const Tensor& t, const std::vector<double>& acc) {
          if (!t.requires_grad()) return;
          float* g = const_cast<Tensor&>(t).grad();
          for (std::size_t i = 0; i < acc.size(); ++i)
            g[i] += static_cast<float>(acc[i]);
        };
        flush(params.a_log, g_a_log);
        flush(params.proj_b, g_proj_b);
        flush(params.proj_c, g_proj_c);
        flush(params.dt_down, g_dt_down);
        flush(params.dt_up, g_dt_up);
        flush(params.dt_bias, g_dt_bias);
        flush(params.skip_d, g_skip);
      });

  float* po = out.data();
  std::vector<double> h(static_cast<std::size_t>(d_inner) * n_state);
  bool finite = true;
  for (int bi = 0; bi < batch; ++bi) {
    std::fill(h.begin(), h.end(), 0.0);
    for (int t = 0; t < len; ++t) {
      const std::int64_t row = static_cast<std::int64_t>(bi) * len + t;
      const float* xrow = px + row * d_inner;
      double* dt_low_row = dt_low->data() + row * dt_rank;
      for (int r = 0; r < dt_rank; ++r) {
        double acc = 0.0;
        const float* wr = pdt_down + static_cast<std::int64_t>(r) * d_inner;
        for (int d = 0; d < d_inner; ++d) acc += static_cast<double>(wr[d]) * xrow[d];
        dt_low_row[r] = acc;
      }
      double* bt_row = bt->data() + row * n_state;
      double* ct_row = ct->data() + row * n_state;
      for (int s = 0; s < n_state; ++s) {
        double acc_b = 0.0, acc_c = 0.0;
        const float* wb = pproj_b + static_cast<std::int64_t>(s) * d_inner;
        const float* wc = pproj_c + static_cast<std::int64_t>(s) * d_inner;
        for (int d = 0; d < d_inner; ++d) {
          acc_b += static_cast<double>(wb[d]) * xrow[d];
          acc_c += static_cast<double>(wc[d]) * xrow[d];
        }
        bt_row[s] = acc_b;
        ct_row[s] = acc_c;
      }
      double* delta_row = delta->data() + row * d_inner;
      double* dt_pre_row = dt_pre->data() + row * d_inner;
      double* abar_row = abar->data() + row * d_inner * n_state;
      double* h_row = h_hist->data() + row * d_inner * n_state;
      float* orow = po + row * d_inner;
      for (int d = 0; d < d_inner; ++d) {
        double pre = pdt_bias[d];
        const float* ur = pdt_up + static_cast<std::int64_t>(d) * dt_rank;
        for (int r = 0; r < dt_rank; ++r) pre += static_cast<double>(ur[r]) * dt_low_row[r];
        dt_pre_row[d] = pre;
        const double dv = softplus(pre);
        delta_row[d] = dv;
        const double xv = xrow[d];
        double* h_d = h.data() + static_cast<std::int64_t>(d) * n_state;
        double* abar_d = abar_row + static_cast<std::int64_t>(d) * n_state;
        double y = static_cast<double>(pskip[d]) * xv;
        for (int s = 0; s < n_state; ++s) {
          const double ab = std::exp(dv * a_neg[static_cast<std::size_t>(d) * n_state + s]);
          abar_d[s] = ab;
          h_d[s] = ab * h_d[s] + dv * bt_row[s] * xv;
          y += ct_row[s] * h_d[s];
        }
        std::copy(h_d, h_d + n_state, h_row + static_cast<std::int64_t>(d) * n_state);
        orow[d] = static_cast<float>(y);
        finite = finite && std::isfinite(y);
      }
    }
  }
  if (!finite) throw NonFinite("ssm_scan produced a non-finite output");
  return out;
}

std::vector<Tensor> MambaParams::tensors() const {
  std::vector<Tensor> out = {w_in, b_in};
  if (use_gate) {
    out.push_back(w_gate);
    out.push_back(b_gate);
  }
  out.push_back(conv_w);
  out.push_back(conv_b);
  for (const auto& t : ssm.tensors()) out.push_back(t);
  out.push_back(w_out);
  out.push_back(b_out);
  return out;
}

Tensor mamba_block(const Tensor& x, const MambaParams& p) {
  if (x.rank() != 3) throw ShapeMismatch("mamba_block: input must be [B, L, M]");
  if (p.w_in.dim(1) != x.dim(2))
    throw ShapeMismatch("mamba_block: model width mismatch");
  Tensor main = fc(x, p.w_in, p.b_in);
  main = dwconv_causal(main, p.conv_w, p.conv_b);
  main = silu(main);
  main = ssm_scan(main, p.ssm);
  if (p.use_gate) {
    const Tensor gate = silu(fc(x, p.w_gate, p.b_gate));
    main = mul(main, gate);
  }
  const Tensor projected = fc(main, p.w_out, p.b_out);
  return add(projected, x);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeMismatch("cross_entropy: logits must be [B, C]");
  const int batch = logits.dim(0);
  const int classes = logits.dim(1);
  if (static_cast<std::size_t>(batch) != labels.size())
    throw LengthMismatch("cross_entropy: label count mismatch");
  for (int l : labels)
    if (l < 0 || l >= classes) throw Error("cross_entropy: label out of range");

  auto probs = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(batch) * classes);
  std::vector<int> owned_labels(labels.begin(), labels.end());
  Tensor out = make_op_output(
      {1}, "cross_entropy", {logits},
      [logits, probs, owned_labels, batch, classes](const Tensor& o) {
        if (!logits.requires_grad()) return;
        const float g = o.grad()[0];
        float* gl = const_cast<Tensor&>(logits).grad();
        const double inv_b = 1.0 / batch;
        for (int bi = 0; bi < batch; ++bi) {
          for (int c = 0; c < classes; ++c) {
            const double p = (*probs)[static_cast<std::size_t>(bi) * classes + c];
            const double target = c == owned_labels[static_cast<std::size_t>(bi)] ? 1.0 : 0.0;
            gl[static_cast<std::int64_t>(bi) * classes + c] +=
                static_cast<float>(g * (p - target) * inv_b);
          }
        }
      });

  const float* pl = logits.data();
  double loss = 0.0;
  for (int bi = 0; bi < batch; ++bi) {
    const float* row = pl + static_cast<std::int64_t>(bi) * classes;
    double mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(row[c] - mx);
    const double log_denom = std::log(denom) + mx;
    for (int c = 0; c < classes; ++c)
      (*probs)[static_cast<std::size_t>(bi) * classes + c] =
          std::exp(row[c] - log_denom);
    loss -= static_cast<double>(row[owned_labels[static_cast<std::size_t>(bi)]]) - log_denom;
  }
  if (!std::isfinite(loss)) throw NonFinite("cross_entropy is not finite");
  out.data()[0] = static_cast<float>(loss / batch);
  return out;
}

Tensor supcon_loss(const Tensor& embeddings, std::span<const int> labels,
                   double tau) {
  if (embeddings.rank() != 2)
    throw ShapeMismatch("supcon_loss: embeddings must be [B, d]");
  const int batch = embeddings.dim(0);
  const int dim = embeddings.dim(1);
  if (static_cast<std::size_t>(batch) != labels.size())
    throw LengthMismatch("supcon_loss: label count mismatch");
  if (batch < 2) throw NoPositives("supcon_loss: need at least 2 embeddings");
  if (tau <= 0.0) throw Error("supcon_loss: tau must be positive");

  std::vector<int> owned_labels(labels.begin(), labels.end());
  std::vector<int> positive_count(static_cast<std::size_t>(batch), 0);
  int anchors = 0;
  for (int i = 0; i < batch; ++i) {
    for (int j = 0; j < batch; ++j)
      if (j != i && owned_labels[static_cast<std::size_t>(j)] ==
                        owned_labels[static_cast<std::size_t>(i)])
        ++positive_count[static_cast<std::size_t>(i)];
    if (positive_count[static_cast<std::size_t>(i)] > 0) ++anchors;
  }
  if (anchors == 0)
    throw NoPositives("supcon_loss: no anchor has a same-label positive");

  // Normalized embeddings and norms, kept for the backward pass.
  auto z = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(batch) * dim);
  auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(batch));
  auto soft = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(batch) * batch, 0.0);  // exp(s_ij)/denom_i

  const float* pe = embeddings.data();
  for (int i = 0; i < batch; ++i) {
    double norm = 0.0;
    const float* row = pe + static_cast<std::int64_t>(i) * dim;
    for (int d = 0; d < dim; ++d) norm += static_cast<double>(row[d]) * row[d];
    norm = std::sqrt(std::max(norm, 1e-24));
    (*norms)[static_cast<std::size_t>(i)] = norm;
    for (int d = 0; d < dim; ++d)
      (*z)[static_cast<std::size_t>(i) * dim + d] = row[d] / norm;
  }

  double loss = 0.0;
  for (int i = 0; i < batch; ++i) {
    if (positive_count[static_cast<std::size_t>(i)] == 0) continue;
    std::vector<double> sims(static_cast<std::size_t>(batch), 0.0);
    double mx = -1e300;
    for (int j = 0; j < batch; ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (int d = 0; d < dim; ++d)
        s += (*z)[static_cast<std::size_t>(i) * dim + d] *
             (*z)[static_cast<std::size_t>(j) * dim + d];
      sims[static_cast<std::size_t>(j)] = s / tau;
      mx = std::max(mx, sims[static_cast<std::size_t>(j)]);
    }
    double denom = 0.0;
    for (int j = 0; j < batch; ++j)
      if (j != i) denom += std::exp(sims[static_cast<std::size_t>(j)] - mx);
    const double log_denom = std::log(denom) + mx;
    for (int j = 0; j < batch; ++j) {
      if (j == i) continue;
      (*soft)[static_cast<std::size_t>(i) * batch + j] =
          std::exp(sims[static_cast<std::size_t>(j)] - log_denom);
      if (owned_labels[static_cast<std::size_t>(j)] ==
          owned_labels[static_cast<std::size_t>(i)])
        loss += (log_denom - sims[static_cast<std::size_t>(j)]) /
                positive_count[static_cast<std::size_t>(i)];
    }
  }
  loss /= anchors;
  if (!std::isfinite(loss)) throw NonFinite("supcon_loss is not finite");

  Tensor out = make_op_output(
      {1}, "supcon_loss", {embeddings},
      [embeddings, z, norms, soft, owned_labels, positive_count, anchors, batch,
       dim, tau](const Tensor& o) {
        if (!embeddings.requires_grad()) return;
        const double g_out = o.grad()[0];
        float* ge = const_cast<Tensor&>(embeddings).grad();
        // dL/ds_ij for j != i, with s_ij = z_i . z_j / tau.
        auto coeff = [&](int i, int j) -> double {
          if (i == j || positive_count[static_cast<std::size_t>(i)] == 0) return 0.0;
          const double same = owned_labels[static_cast<std::size_t>(i)] ==
                                      owned_labels[static_cast<std::size_t>(j)]
                                  ? 1.0 / positive_count[static_cast<std::size_t>(i)]
                                  : 0.0;
          return ((*soft)[static_cast<std::size_t>(i) * batch + j] - same) / anchors;
        };
        for (int k = 0; k < batch; ++k) {
          // dz_k = (1/tau) sum_j (coeff(k,j) + coeff(j,k)) z_j
          std::vector<double> dz(static_cast<std::size_t>(dim), 0.0);
          for (int j = 0; j < batch; ++j) {
            const double c = coeff(k, j) + coeff(j, k);
            if (c == 0.0) continue;
            for (int d = 0; d < dim; ++d)
              dz[static_cast<std::size_t>(d)] +=
                  c * (*z)[static_cast<std::size_t>(j) * dim + d];
          }
          // Through normalization: dv = (dz - (z.dz) z) / ||v||
          double zdz = 0.0;
          for (int d = 0; d < dim; ++d)
            zdz += dz[static_cast<std::size_t>(d)] *
                   (*z)[static_cast<std::size_t>(k) * dim + d];
          const double inv_norm = 1.0 / (*norms)[static_cast<std::size_t>(k)];
          for (int d = 0; d < dim; ++d) {
            const double dv =
                (dz[static_cast<std::size_t>(d)] -
                 zdz * (*z)[static_cast<std::size_t>(k) * dim + d]) *
                inv_norm / tau;
            ge[static_cast<std::int64_t>(k) * dim + d] +=
                static_cast<float>(g_out * dv);
          }
        }
      });
  out.data()[0] = static_cast<float>(loss);
  return out;
}

}  // namespace slimseiz::nn
