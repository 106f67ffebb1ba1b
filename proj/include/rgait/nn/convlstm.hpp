#pragma once

#include <cmath>

#include "rgait/nn/layers.hpp"
#include "rgait/nn/tensor.hpp"

namespace rgait::nn {

// Convolutional LSTM cell: gate pre-activations are convolutions of the
// input and the previous hidden state; gate channel order is [i | f | o | g].
template <class T>
struct ConvLstm {
  int in_c = 0, hid_c = 0, k = 3;
  Conv2d<T> wx;  // in_c  -> 4*hid_c, carries the gate bias
  Conv2d<T> wh;  // hid_c -> 4*hid_c, no bias

  struct State {
    Tensor<T> h, c;
  };

  struct Cache {
    Tensor<T> x, h_prev, c_prev;
    Tensor<T> i, f, o, g, tanh_c;
  };

  void init(int in, int hid, int kernel, Rng& rng) {
    in_c = in;
    hid_c = hid;
    k = kernel;
    wx.init(in, 4 * hid, kernel, rng, /*with_bias=*/true);
    wh.init(hid, 4 * hid, kernel, rng, /*with_bias=*/false);
    // Glorot for gate kernels; forget-gate bias starts at 1.
    const double limit_x = std::sqrt(6.0 / ((in + 4.0 * hid) * kernel * kernel));
    const double limit_h = std::sqrt(6.0 / ((hid + 4.0 * hid) * kernel * kernel));
    Rng r2(rng.next_u64());
    for (auto& v : wx.weight.w) v = static_cast<T>(r2.uniform(-limit_x, limit_x));
    for (auto& v : wh.weight.w) v = static_cast<T>(r2.uniform(-limit_h, limit_h));
    for (int ch = hid; ch < 2 * hid; ++ch) wx.bias.w[ch] = T(1);
  }

  State initial_state(int batch, int height, int width) const {
    return {Tensor<T>(batch, hid_c, height, width), Tensor<T>(batch, hid_c, height, width)};
  }

  State step(const Tensor<T>& x, const State& prev, Cache* cache) const {
    Tensor<T> z = wx.forward(x);
    add_inplace(z, wh.forward(prev.h));
    Tensor<T> gi = sigmoid(slice_channels(z, 0, hid_c));
    Tensor<T> gf = sigmoid(slice_channels(z, hid_c, 2 * hid_c));
    Tensor<T> go = sigmoid(slice_channels(z, 2 * hid_c, 3 * hid_c));
    Tensor<T> gg = slice_channels(z, 3 * hid_c, 4 * hid_c);
    for (auto& v : gg.v) v = std::tanh(v);

    State next;
    next.c = Tensor<T>::zeros_like(prev.c);
    next.h = Tensor<T>::zeros_like(prev.h);
    Tensor<T> tanh_c = Tensor<T>::zeros_like(prev.c);
    for (std::size_t idx = 0; idx < next.c.size(); ++idx) {
      next.c.v[idx] = gf.v[idx] * prev.c.v[idx] + gi.v[idx] * gg.v[idx];
      tanh_c.v[idx] = std::tanh(next.c.v[idx]);
      next.h.v[idx] = go.v[idx] * tanh_c.v[idx];
    }
    if (cache) {
      cache->x = x;
      cache->h_prev = prev.h;
      cache->c_prev = prev.c;
      cache->i = std::move(gi);
      cache->f = std::move(gf);
      cache->o = std::move(go);
      cache->g = std::move(gg);
      cache->tanh_c = std::move(tanh_c);
    }
    return next;
  }

  // One BPTT step. dh/dc are gradients w.r.t. this step's outputs; the
  // function accumulates kernel gradients and emits gradients for the
  // step input and the previous state.
  void backward_step(const Cache& cache, const Tensor<T>& dh, const Tensor<T>& dc,
                     Tensor<T>& dx_out, Tensor<T>& dh_prev_out, Tensor<T>& dc_prev_out) {
    Tensor<T> dz(cache.x.n, 4 * hid_c, cache.x.h, cache.x.w);
    dc_prev_out = Tensor<T>::zeros_like(cache.c_prev);

    // Offsets of the four gate blocks inside dz, per sample.
    const int plane = cache.x.h * cache.x.w;
    auto gate_ptr = [&](Tensor<T>& t, int b, int gate) {
      return t.data() + ((static_cast<std::size_t>(b) * 4 + gate) * hid_c) * plane;
    };

    for (int b = 0; b < cache.x.n; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * hid_c * plane;
      T* dzi = gate_ptr(dz, b, 0);
      T* dzf = gate_ptr(dz, b, 1);
      T* dzo = gate_ptr(dz, b, 2);
      T* dzg = gate_ptr(dz, b, 3);
      for (std::size_t idx = 0; idx < static_cast<std::size_t>(hid_c) * plane; ++idx) {
        const std::size_t a = base + idx;
        const T tc = cache.tanh_c.v[a];
        const T dct = dc.v[a] + dh.v[a] * cache.o.v[a] * (T(1) - tc * tc);
        const T di = dct * cache.g.v[a];
        const T df = dct * cache.c_prev.v[a];
        const T do_ = dh.v[a] * tc;
        const T dg = dct * cache.i.v[a];
        dzi[idx] = di * cache.i.v[a] * (T(1) - cache.i.v[a]);
        dzf[idx] = df * cache.f.v[a] * (T(1) - cache.f.v[a]);
        dzo[idx] = do_ * cache.o.v[a] * (T(1) - cache.o.v[a]);
        dzg[idx] = dg * (T(1) - cache.g.v[a] * cache.g.v[a]);
        dc_prev_out.v[a] = dct * cache.f.v[a];
      }
    }
    dx_out = wx.backward(cache.x, dz);
    dh_prev_out = wh.backward(cache.h_prev, dz);
  }

  void collect(std::vector<Param<T>*>& out) {
    wx.collect(out);
    wh.collect(out);
  }

  std::size_t param_count() const { return wx.param_count() + wh.param_count(); }
};

}  // namespace rgait::nn
