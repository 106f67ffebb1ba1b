#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rgait/errors.hpp"

namespace rgait {

// One silhouette image. Pixels are row-major in [0, 1]; binary after
// validation, real-valued for model outputs and energy images.
struct SilhouetteFrame {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  SilhouetteFrame() = default;
  SilhouetteFrame(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {
    if (h <= 0 || w <= 0) throw data_error("frame dimensions must be positive");
  }

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  std::size_t size() const { return pixels.size(); }

  bool same_shape(const SilhouetteFrame& o) const {
    return height == o.height && width == o.width;
  }

  bool is_binary() const {
    for (float p : pixels)
      if (p != 0.0f && p != 1.0f) return false;
    return true;
  }

  bool is_blank() const {
    for (float p : pixels)
      if (p != 0.0f) return false;
    return true;
  }

  friend bool operator==(const SilhouetteFrame& a, const SilhouetteFrame& b) {
    return a.height == b.height && a.width == b.width && a.pixels == b.pixels;
  }
};

// Ordered frames of one gait sequence plus an optional per-frame occlusion
// mask (true = occluded). All frames share one (height, width).
struct SilhouetteSequence {
  std::string subject_id;
  std::string sequence_id;
  std::vector<SilhouetteFrame> frames;
  std::optional<std::vector<bool>> occlusion_mask;

  int length() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }

  // Enforces the shared-dimension and mask-length invariants.
  void check() const {
    for (const auto& f : frames)
      if (!f.same_shape(frames.front()))
        throw data_error("sequence '" + sequence_id + "': frame dimension mismatch");
    if (occlusion_mask && occlusion_mask->size() != frames.size())
      throw data_error("sequence '" + sequence_id + "': mask length != frame count");
  }

  friend bool operator==(const SilhouetteSequence& a, const SilhouetteSequence& b) {
    return a.subject_id == b.subject_id && a.sequence_id == b.sequence_id &&
           a.frames == b.frames && a.occlusion_mask == b.occlusion_mask;
  }
};

struct BinarizeReport {
  SilhouetteFrame frame;
  double moved_fraction = 0.0;  // pixels displaced by more than the tolerance
};

// Snap every pixel to {0, 1} by thresholding at 0.5 (0.5 itself maps to 1)
// and report the fraction of pixels that moved more than `tolerance`.
inline BinarizeReport validate_binary(const SilhouetteFrame& frame, double tolerance) {
  BinarizeReport out;
  out.frame = frame;
  std::size_t moved = 0;
  for (auto& p : out.frame.pixels) {
    const float snapped = (p >= 0.5f) ? 1.0f : 0.0f;
    if (std::abs(static_cast<double>(p) - snapped) > tolerance) ++moved;
    p = snapped;
  }
  out.moved_fraction = out.frame.pixels.empty()
                           ? 0.0
                           : static_cast<double>(moved) / static_cast<double>(out.frame.size());
  return out;
}

namespace detail {

struct Bbox {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open
  int h() const { return y1 - y0; }
  int w() const { return x1 - x0; }
  bool empty() const { return y1 <= y0 || x1 <= x0; }
};

inline Bbox foreground_bbox(const SilhouetteFrame& f) {
  int ymin = f.height, ymax = -1, xmin = f.width, xmax = -1;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      if (f.at(y, x) != 0.0f) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
      }
  if (ymax < 0) return {};
  return {ymin, xmin, ymax + 1, xmax + 1};
}

// Rescale a binary region with OR-pooling: an output pixel is foreground when
// any input pixel in its covering cell is. This keeps the scaled blob's
// bounding box spanning the full output extent in both up- and down-scaling,
// which is what makes normalize_frame idempotent.
inline SilhouetteFrame or_scale(const SilhouetteFrame& src, const Bbox& bb, int out_h, int out_w) {
  SilhouetteFrame dst(out_h, out_w, 0.0f);
  const double ry = static_cast<double>(bb.h()) / out_h;
  const double rx = static_cast<double>(bb.w()) / out_w;
  for (int y = 0; y < out_h; ++y) {
    int sy0 = static_cast<int>(std::floor(y * ry));
    int sy1 = std::max(sy0 + 1, static_cast<int>(std::ceil((y + 1) * ry)));
    sy1 = std::min(sy1, bb.h());
    for (int x = 0; x < out_w; ++x) {
      int sx0 = static_cast<int>(std::floor(x * rx));
      int sx1 = std::max(sx0 + 1, static_cast<int>(std::ceil((x + 1) * rx)));
      sx1 = std::min(sx1, bb.w());
      float v = 0.0f;
      for (int sy = sy0; sy < sy1 && v == 0.0f; ++sy)
        for (int sx = sx0; sx < sx1; ++sx)
          if (src.at(bb.y0 + sy, bb.x0 + sx) != 0.0f) {
            v = 1.0f;
            break;
          }
      dst.at(y, x) = v;
    }
  }
  return dst;
}

}  // namespace detail

// Binarize, crop to the foreground bounding box, scale by a single factor so
// the blob fits the target (height-fit unless the blob is too wide), center,
// pad with background. Blank frames map to blank frames.
inline SilhouetteFrame normalize_frame(const SilhouetteFrame& frame, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0) throw config_error("normalize_frame: target dimension <= 0");
  const SilhouetteFrame bin = validate_binary(frame, 0.0).frame;
  const detail::Bbox bb = detail::foreground_bbox(bin);
  if (bb.empty()) return SilhouetteFrame(target_h, target_w, 0.0f);

  const double scale = std::min(static_cast<double>(target_h) / bb.h(),
                                static_cast<double>(target_w) / bb.w());
  const int out_h = std::clamp(static_cast<int>(std::llround(bb.h() * scale)), 1, target_h);
  const int out_w = std::clamp(static_cast<int>(std::llround(bb.w() * scale)), 1, target_w);

  const SilhouetteFrame scaled = detail::or_scale(bin, bb, out_h, out_w);

  SilhouetteFrame out(target_h, target_w, 0.0f);
  const int oy = (target_h - out_h) / 2;
  const int ox = (target_w - out_w) / 2;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) out.at(oy + y, ox + x) = scaled.at(y, x);
  return out;
}

}  // namespace rgait
