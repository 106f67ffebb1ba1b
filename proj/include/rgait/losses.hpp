#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "rgait/errors.hpp"
#include "rgait/frame.hpp"

namespace rgait {

inline constexpr double kProbClip = 1e-7;  // keeps every log() argument positive

template <class T>
T clip_prob(T p) {
  const T lo = static_cast<T>(kProbClip);
  const T hi = static_cast<T>(1.0 - kProbClip);
  return p < lo ? lo : (p > hi ? hi : p);
}

// Two-class cross-entropy on the normalized occlusion probabilities,
// y = 1 for the occluded class.
template <class T>
T detection_loss(T p1, T p2, int y) {
  p1 = clip_prob(p1);
  p2 = clip_prob(p2);
  return -static_cast<T>(y) * std::log(p1) - static_cast<T>(1 - y) * std::log(p2);
}

// Pixel-wise binary cross-entropy, averaged over pixels.
template <class T>
T rec_loss(std::span<const T> pred, std::span<const T> gt) {
  if (pred.size() != gt.size()) throw data_error("rec_loss: dimension mismatch");
  if (pred.empty()) throw data_error("rec_loss: empty input");
  T acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T p = clip_prob(pred[i]);
    acc += -gt[i] * std::log(p) - (1 - gt[i]) * std::log(1 - p);
  }
  return acc / static_cast<T>(pred.size());
}

// Soft dice overlap: 2*sum(p*q) / (sum(p^2) + sum(q^2)), in [0, 1];
// two empty masks count as a perfect match.
template <class T>
T dice_coeff(std::span<const T> pred, std::span<const T> gt) {
  if (pred.size() != gt.size()) throw data_error("dice_coeff: dimension mismatch");
  T inter = 0, pp = 0, qq = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] * gt[i];
    pp += pred[i] * pred[i];
    qq += gt[i] * gt[i];
  }
  const T denom = pp + qq;
  if (denom == 0) return 1;
  return 2 * inter / denom;
}

// Weighted training objective: l1 * BCE + l2 * dice. With the default
// weights (1, -1) the dice term is maximized; the minimum is -1 at a
// (clipped-)perfect reconstruction.
template <class T>
T total_loss(std::span<const T> pred, std::span<const T> gt, T l1, T l2) {
  return l1 * rec_loss(pred, gt) + l2 * dice_coeff(pred, gt);
}

// Analytic d(total_loss)/d(pred), for the unclipped interior. Matches
// central finite differences on predictions away from {0, 1}.
template <class T>
std::vector<T> total_loss_grad(std::span<const T> pred, std::span<const T> gt, T l1, T l2) {
  if (pred.size() != gt.size()) throw data_error("total_loss_grad: dimension mismatch");
  const std::size_t n = pred.size();
  T inter = 0, pp = 0, qq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    inter += pred[i] * gt[i];
    pp += pred[i] * pred[i];
    qq += gt[i] * gt[i];
  }
  const T denom = pp + qq;
  std::vector<T> grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T p = clip_prob(pred[i]);
    const T dbce = (-gt[i] / p + (1 - gt[i]) / (1 - p)) / static_cast<T>(n);
    T ddice = 0;
    if (denom != 0) ddice = 2 * (gt[i] * denom - 2 * pred[i] * inter) / (denom * denom);
    grad[i] = l1 * dbce + l2 * ddice;
  }
  return grad;
}

// Frame-based convenience overloads (compute in double).

namespace detail {
inline std::vector<double> to_doubles(const SilhouetteFrame& f) {
  return std::vector<double>(f.pixels.begin(), f.pixels.end());
}
}  // namespace detail

inline double rec_loss(const SilhouetteFrame& pred, const SilhouetteFrame& gt) {
  if (!pred.same_shape(gt)) throw data_error("rec_loss: dimension mismatch");
  const auto p = detail::to_doubles(pred), q = detail::to_doubles(gt);
  return rec_loss<double>(p, q);
}

inline double dice_coeff(const SilhouetteFrame& pred, const SilhouetteFrame& gt) {
  if (!pred.same_shape(gt)) throw data_error("dice_coeff: dimension mismatch");
  const auto p = detail::to_doubles(pred), q = detail::to_doubles(gt);
  return dice_coeff<double>(p, q);
}

inline double total_loss(const SilhouetteFrame& pred, const SilhouetteFrame& gt, double l1,
                         double l2) {
  if (!pred.same_shape(gt)) throw data_error("total_loss: dimension mismatch");
  const auto p = detail::to_doubles(pred), q = detail::to_doubles(gt);
  return total_loss<double>(p, q, l1, l2);
}

}  // namespace rgait
