#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rgait/errors.hpp"
#include "rgait/nn/tensor.hpp"
#include "rgait/rng.hpp"

namespace rgait::nn {

// Trainable buffer: value + accumulated gradient.
template <class T>
struct Param {
  std::vector<T> w, g;

  void init(std::size_t size) {
    w.assign(size, T(0));
    g.assign(size, T(0));
  }
  void zero_grad() { std::fill(g.begin(), g.end(), T(0)); }
  std::size_t size() const { return w.size(); }
};

using ParamRefs = std::vector<void*>;  // opaque; optimizers are typed below

// ---------------------------------------------------------------------------
// Conv2d: stride 1, odd kernel, zero padding k/2 ("same").

template <class T>
struct Conv2d {
  int in_c = 0, out_c = 0, k = 3;
  bool use_bias = true;
  Param<T> weight;  // [out_c][in_c][k][k]
  Param<T> bias;    // [out_c]

  void init(int in, int out, int kernel, Rng& rng, bool with_bias = true) {
    in_c = in;
    out_c = out;
    k = kernel;
    use_bias = with_bias;
    weight.init(static_cast<std::size_t>(out) * in * k * k);
    bias.init(with_bias ? out : 0);
    const double std = std::sqrt(2.0 / (static_cast<double>(in) * k * k));
    for (auto& v : weight.w) v = static_cast<T>(rng.normal(0.0, std));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.c != in_c) throw model_error("conv: channel mismatch");
    const int pad = k / 2;
    Tensor<T> y(x.n, out_c, x.h, x.w);
    for (int b = 0; b < x.n; ++b)
      for (int oc = 0; oc < out_c; ++oc) {
        T* yp = y.plane(b, oc);
        if (use_bias) std::fill(yp, yp + x.h * x.w, bias.w[oc]);
        for (int ic = 0; ic < in_c; ++ic) {
          const T* xp = x.plane(b, ic);
          const T* wrow = &weight.w[((static_cast<std::size_t>(oc) * in_c) + ic) * k * k];
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const T wv = wrow[ky * k + kx];
              if (wv == T(0)) continue;
              const int dy = ky - pad, dx = kx - pad;
              const int i0 = std::max(0, -dy), i1 = std::min(x.h, x.h - dy);
              const int j0 = std::max(0, -dx), j1 = std::min(x.w, x.w - dx);
              for (int i = i0; i < i1; ++i) {
                T* yr = yp + i * x.w;
                const T* xr = xp + (i + dy) * x.w + dx;
                for (int j = j0; j < j1; ++j) yr[j] += wv * xr[j];
              }
            }
        }
      }
    return y;
  }

  // Accumulates weight/bias gradients, returns dL/dx.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
    const int pad = k / 2;
    Tensor<T> dx = Tensor<T>::zeros_like(x);
    for (int b = 0; b < x.n; ++b)
      for (int oc = 0; oc < out_c; ++oc) {
        const T* gp = dy.plane(b, oc);
        if (use_bias) {
          T acc = 0;
          for (int i = 0; i < x.h * x.w; ++i) acc += gp[i];
          bias.g[oc] += acc;
        }
        for (int ic = 0; ic < in_c; ++ic) {
          const T* xp = x.plane(b, ic);
          T* dxp = dx.plane(b, ic);
          const std::size_t wbase = ((static_cast<std::size_t>(oc) * in_c) + ic) * k * k;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int dyo = ky - pad, dxo = kx - pad;
              const int i0 = std::max(0, -dyo), i1 = std::min(x.h, x.h - dyo);
              const int j0 = std::max(0, -dxo), j1 = std::min(x.w, x.w - dxo);
              T wacc = 0;
              const T wv = weight.w[wbase + ky * k + kx];
              for (int i = i0; i < i1; ++i) {
                const T* gr = gp + i * x.w;
                const T* xr = xp + (i + dyo) * x.w + dxo;
                T* dxr = dxp + (i + dyo) * x.w + dxo;
                for (int j = j0; j < j1; ++j) {
                  wacc += gr[j] * xr[j];
                  dxr[j] += wv * gr[j];
                }
              }
              weight.g[wbase + ky * k + kx] += wacc;
            }
        }
      }
    return dx;
  }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&weight);
    if (use_bias) out.push_back(&bias);
  }

  std::size_t param_count() const { return weight.size() + bias.size(); }
};

// ---------------------------------------------------------------------------
// Dense over flattened inputs.

template <class T>
struct Dense {
  int in_n = 0, out_n = 0;
  Param<T> weight;  // [out][in]
  Param<T> bias;

  void init(int in, int out, Rng& rng) {
    in_n = in;
    out_n = out;
    weight.init(static_cast<std::size_t>(in) * out);
    bias.init(out);
    const double std = std::sqrt(2.0 / in);
    for (auto& v : weight.w) v = static_cast<T>(rng.normal(0.0, std));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.c * x.h * x.w != in_n) throw model_error("dense: input size mismatch");
    Tensor<T> y(x.n, out_n, 1, 1);
    for (int b = 0; b < x.n; ++b) {
      const T* xp = x.data() + static_cast<std::size_t>(b) * in_n;
      for (int o = 0; o < out_n; ++o) {
        const T* wr = &weight.w[static_cast<std::size_t>(o) * in_n];
        T acc = bias.w[o];
        for (int i = 0; i < in_n; ++i) acc += wr[i] * xp[i];
        y.v[static_cast<std::size_t>(b) * out_n + o] = acc;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dx = Tensor<T>::zeros_like(x);
    for (int b = 0; b < x.n; ++b) {
      const T* xp = x.data() + static_cast<std::size_t>(b) * in_n;
      T* dxp = dx.data() + static_cast<std::size_t>(b) * in_n;
      const T* gp = dy.data() + static_cast<std::size_t>(b) * out_n;
      for (int o = 0; o < out_n; ++o) {
        const T g = gp[o];
        bias.g[o] += g;
        T* wg = &weight.g[static_cast<std::size_t>(o) * in_n];
        const T* wr = &weight.w[static_cast<std::size_t>(o) * in_n];
        for (int i = 0; i < in_n; ++i) {
          wg[i] += g * xp[i];
          dxp[i] += g * wr[i];
        }
      }
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  std::size_t param_count() const { return weight.size() + bias.size(); }
};

// ---------------------------------------------------------------------------
// BatchNorm over (n, h, w) per channel. Training normalizes with batch
// statistics and maintains running averages for inference.

template <class T>
struct BatchNorm2d {
  int channels = 0;
  T momentum = static_cast<T>(0.1);
  T eps = static_cast<T>(1e-5);
  Param<T> gamma, beta;
  std::vector<T> running_mean, running_var;

  struct Cache {
    Tensor<T> xhat;
    std::vector<T> invstd;
    int m = 0;
  };

  void init(int c) {
    channels = c;
    gamma.init(c);
    beta.init(c);
    std::fill(gamma.w.begin(), gamma.w.end(), T(1));
    running_mean.assign(c, T(0));
    running_var.assign(c, T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache, bool train) {
    if (x.c != channels) throw model_error("batchnorm: channel mismatch");
    if (train && !cache) throw model_error("batchnorm: training requires a cache");
    Tensor<T> y = Tensor<T>::zeros_like(x);
    const int m = x.n * x.h * x.w;
    if (train) {
      cache->xhat = Tensor<T>::zeros_like(x);
      cache->invstd.assign(channels, T(0));
      cache->m = m;
      for (int ch = 0; ch < channels; ++ch) {
        T mean = 0;
        for (int b = 0; b < x.n; ++b) {
          const T* xp = x.plane(b, ch);
          for (int i = 0; i < x.h * x.w; ++i) mean += xp[i];
        }
        mean /= static_cast<T>(m);
        T var = 0;
        for (int b = 0; b < x.n; ++b) {
          const T* xp = x.plane(b, ch);
          for (int i = 0; i < x.h * x.w; ++i) {
            const T d = xp[i] - mean;
            var += d * d;
          }
        }
        var /= static_cast<T>(m);
        const T invstd = T(1) / std::sqrt(var + eps);
        cache->invstd[ch] = invstd;
        for (int b = 0; b < x.n; ++b) {
          const T* xp = x.plane(b, ch);
          T* xh = cache->xhat.plane(b, ch);
          T* yp = y.plane(b, ch);
          for (int i = 0; i < x.h * x.w; ++i) {
            xh[i] = (xp[i] - mean) * invstd;
            yp[i] = gamma.w[ch] * xh[i] + beta.w[ch];
          }
        }
        const T unbiased = m > 1 ? var * static_cast<T>(m) / static_cast<T>(m - 1) : var;
        running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mean;
        running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
      }
    } else {
      for (int ch = 0; ch < channels; ++ch) {
        const T invstd = T(1) / std::sqrt(running_var[ch] + eps);
        const T scale = gamma.w[ch] * invstd;
        const T shift = beta.w[ch] - scale * running_mean[ch];
        for (int b = 0; b < x.n; ++b) {
          const T* xp = x.plane(b, ch);
          T* yp = y.plane(b, ch);
          for (int i = 0; i < x.h * x.w; ++i) yp[i] = scale * xp[i] + shift;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& dy) {
    Tensor<T> dx = Tensor<T>::zeros_like(dy);
    const int m = cache.m;
    for (int ch = 0; ch < channels; ++ch) {
      T sum_dy = 0, sum_dy_xhat = 0;
      for (int b = 0; b < dy.n; ++b) {
        const T* gp = dy.plane(b, ch);
        const T* xh = cache.xhat.plane(b, ch);
        for (int i = 0; i < dy.h * dy.w; ++i) {
          sum_dy += gp[i];
          sum_dy_xhat += gp[i] * xh[i];
        }
      }
      gamma.g[ch] += sum_dy_xhat;
      beta.g[ch] += sum_dy;
      const T scale = gamma.w[ch] * cache.invstd[ch] / static_cast<T>(m);
      for (int b = 0; b < dy.n; ++b) {
        const T* gp = dy.plane(b, ch);
        const T* xh = cache.xhat.plane(b, ch);
        T* dxp = dx.plane(b, ch);
        for (int i = 0; i < dy.h * dy.w; ++i)
          dxp[i] = scale * (static_cast<T>(m) * gp[i] - sum_dy - xh[i] * sum_dy_xhat);
      }
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  std::size_t param_count() const { return gamma.size() + beta.size(); }
};

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Ties resolve to the first maximum.

template <class T>
struct MaxPool2 {
  struct Cache {
    std::vector<std::int32_t> argmax;  // flat index into the input plane
    int in_h = 0, in_w = 0;
  };

  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw model_error("maxpool: odd input dimensions");
    const int oh = x.h / 2, ow = x.w / 2;
    Tensor<T> y(x.n, x.c, oh, ow);
    if (cache) {
      cache->argmax.assign(y.size(), 0);
      cache->in_h = x.h;
      cache->in_w = x.w;
    }
    std::size_t oi = 0;
    for (int b = 0; b < x.n; ++b)
      for (int ch = 0; ch < x.c; ++ch) {
        const T* xp = x.plane(b, ch);
        T* yp = y.plane(b, ch);
        for (int i = 0; i < oh; ++i)
          for (int j = 0; j < ow; ++j, ++oi) {
            const int base = 2 * i * x.w + 2 * j;
            int best = base;
            T bv = xp[base];
            const int cands[3] = {base + 1, base + x.w, base + x.w + 1};
            for (int cand : cands)
              if (xp[cand] > bv) {
                bv = xp[cand];
                best = cand;
              }
            yp[i * ow + j] = bv;
            if (cache) cache->argmax[oi] = best;
          }
      }
    return y;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& dy) const {
    Tensor<T> dx(dy.n, dy.c, cache.in_h, cache.in_w);
    std::size_t oi = 0;
    for (int b = 0; b < dy.n; ++b)
      for (int ch = 0; ch < dy.c; ++ch) {
        const T* gp = dy.plane(b, ch);
        T* dxp = dx.plane(b, ch);
        for (int i = 0; i < dy.h * dy.w; ++i, ++oi) dxp[cache.argmax[oi]] += gp[i];
      }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Inverted dropout; identity at inference.

template <class T>
struct Dropout {
  T p = static_cast<T>(0.2);

  struct Cache {
    std::vector<std::uint8_t> keep;
  };

  Tensor<T> forward(const Tensor<T>& x, Cache* cache, bool train, Rng* rng) const {
    if (!train || p <= T(0)) {
      if (cache) cache->keep.clear();
      return x;
    }
    Tensor<T> y = Tensor<T>::zeros_like(x);
    cache->keep.assign(x.size(), 0);
    const T scale = T(1) / (T(1) - p);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const bool keep = rng->uniform() >= static_cast<double>(p);
      cache->keep[i] = keep;
      y.v[i] = keep ? x.v[i] * scale : T(0);
    }
    return y;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& dy) const {
    if (cache.keep.empty()) return dy;
    Tensor<T> dx = Tensor<T>::zeros_like(dy);
    const T scale = T(1) / (T(1) - p);
    for (std::size_t i = 0; i < dy.size(); ++i)
      dx.v[i] = cache.keep[i] ? dy.v[i] * scale : T(0);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Activations and resampling.

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.v) v = v > T(0) ? v : T(0);
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx = Tensor<T>::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) dx.v[i] = x.v[i] > T(0) ? dy.v[i] : T(0);
  return dx;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.v) v = T(1) / (T(1) + std::exp(-v));
  return y;
}

// dy * y * (1 - y), with y = sigmoid(x).
template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx = Tensor<T>::zeros_like(y);
  for (std::size_t i = 0; i < y.size(); ++i) dx.v[i] = dy.v[i] * y.v[i] * (T(1) - y.v[i]);
  return dx;
}

template <class T>
Tensor<T> upsample2(const Tensor<T>& x) {  // nearest neighbor, x2
  Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
  for (int b = 0; b < x.n; ++b)
    for (int ch = 0; ch < x.c; ++ch) {
      const T* xp = x.plane(b, ch);
      T* yp = y.plane(b, ch);
      for (int i = 0; i < y.h; ++i)
        for (int j = 0; j < y.w; ++j) yp[i * y.w + j] = xp[(i / 2) * x.w + (j / 2)];
    }
  return y;
}

template <class T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
  for (int b = 0; b < dy.n; ++b)
    for (int ch = 0; ch < dy.c; ++ch) {
      const T* gp = dy.plane(b, ch);
      T* dxp = dx.plane(b, ch);
      for (int i = 0; i < dy.h; ++i)
        for (int j = 0; j < dy.w; ++j) dxp[(i / 2) * dx.w + (j / 2)] += gp[i * dy.w + j];
    }
  return dx;
}

// ---------------------------------------------------------------------------
// RMSprop: s <- rho*s + (1-rho)*g^2 ; w <- w - lr*g/(sqrt(s)+eps).

template <class T>
struct RmsProp {
  T lr = static_cast<T>(1e-3);
  T rho = static_cast<T>(0.9);
  T eps = static_cast<T>(1e-8);

  std::vector<Param<T>*> params;
  std::vector<std::vector<T>> sq;

  void attach(std::vector<Param<T>*> ps) {
    params = std::move(ps);
    sq.clear();
    for (auto* p : params) sq.emplace_back(p->size(), T(0));
  }

  void step() {
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      auto& p = *params[pi];
      auto& s = sq[pi];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const T g = p.g[i];
        s[i] = rho * s[i] + (T(1) - rho) * g * g;
        p.w[i] -= lr * g / (std::sqrt(s[i]) + eps);
      }
      p.zero_grad();
    }
  }

  void zero_grad() {
    for (auto* p : params) p->zero_grad();
  }
};

}  // namespace rgait::nn
