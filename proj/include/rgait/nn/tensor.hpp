#pragma once

#include <cstddef>
#include <vector>

#include "rgait/errors.hpp"

namespace rgait::nn {

// Dense NCHW tensor.
template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

  std::size_t size() const { return v.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& at(int i, int ch, int y, int x) {
    return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  T at(int i, int ch, int y, int x) const {
    return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }

  T* plane(int i, int ch) {
    return v.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
  }
  const T* plane(int i, int ch) const {
    return v.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.n, o.c, o.h, o.w); }
};

template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw model_error("tensor add: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.v[i] += b.v[i];
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) throw model_error("concat: shape mismatch");
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    for (int ch = 0; ch < a.c; ++ch)
      std::copy(a.plane(i, ch), a.plane(i, ch) + a.h * a.w, out.plane(i, ch));
    for (int ch = 0; ch < b.c; ++ch)
      std::copy(b.plane(i, ch), b.plane(i, ch) + b.h * b.w, out.plane(i, a.c + ch));
  }
  return out;
}

// Channel slice [c0, c1) of x.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int c1) {
  Tensor<T> out(x.n, c1 - c0, x.h, x.w);
  for (int i = 0; i < x.n; ++i)
    for (int ch = c0; ch < c1; ++ch)
      std::copy(x.plane(i, ch), x.plane(i, ch) + x.h * x.w, out.plane(i, ch - c0));
  return out;
}

}  // namespace rgait::nn
