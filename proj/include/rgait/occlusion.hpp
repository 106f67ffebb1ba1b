#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "rgait/errors.hpp"
#include "rgait/frame.hpp"
#include "rgait/rng.hpp"

namespace rgait {

// Controlled synthetic occlusion: blacken a random subset of frames so the
// occluded fraction of the whole sequence lands in [degree_low, degree_high),
// never touching the first n_initial_clean frames.
struct OcclusionSpec {
  double degree_low = 0.0;
  double degree_high = 0.5;
  int n_initial_clean = 0;
  std::uint64_t seed = 0;

  void check() const {
    if (!(degree_low >= 0.0 && degree_low < degree_high && degree_high <= 0.5))
      throw config_error("occlusion spec: need 0 <= degree_low < degree_high <= 0.5");
    if (n_initial_clean < 0) throw config_error("occlusion spec: n_initial_clean < 0");
  }
};

namespace detail {

// Admissible blackened-frame counts for a sequence of length n:
// m/n in [lo, hi), i.e. m in [ceil(lo*n), ceil(hi*n) - 1].
inline std::pair<int, int> admissible_count_range(double lo, double hi, int n) {
  const int m_min = static_cast<int>(std::ceil(lo * n));
  const int m_max = static_cast<int>(std::ceil(hi * n)) - 1;
  return {m_min, m_max};
}

}  // namespace detail

inline SilhouetteSequence occlude_sequence(const SilhouetteSequence& seq,
                                           const OcclusionSpec& spec) {
  spec.check();
  seq.check();
  if (seq.occlusion_mask) throw data_error("occlude_sequence: sequence already carries a mask");
  const int n = seq.length();
  if (n <= spec.n_initial_clean)
    throw data_error("occlude_sequence: n_initial_clean >= sequence length");

  auto [m_min, m_max] = detail::admissible_count_range(spec.degree_low, spec.degree_high, n);
  const int available = n - spec.n_initial_clean;
  m_max = std::min(m_max, available);
  if (m_min > m_max)
    throw data_error("occlude_sequence: infeasible spec (no admissible occlusion count)");

  Rng rng(spec.seed);
  const int m = static_cast<int>(rng.uniform_int(m_min, m_max));

  std::vector<int> positions(available);
  std::iota(positions.begin(), positions.end(), spec.n_initial_clean);
  rng.shuffle(positions.begin(), positions.end());

  SilhouetteSequence out = seq;
  std::vector<bool> mask(n, false);
  for (int i = 0; i < m; ++i) {
    const int idx = positions[i];
    out.frames[idx] = SilhouetteFrame(seq.height(), seq.width(), 0.0f);
    mask[idx] = true;
  }
  out.occlusion_mask = std::move(mask);
  return out;
}

// Canonical reporting bins: [0,0.1], (0.1,0.2], (0.2,0.3], (0.3,0.4], (0.4,0.5].
inline std::string degree_bin(const std::vector<bool>& mask) {
  if (mask.empty()) throw data_error("degree_bin: empty mask");
  const double frac = static_cast<double>(std::count(mask.begin(), mask.end(), true)) /
                      static_cast<double>(mask.size());
  if (frac <= 0.1) return "≤10%";  // <=10%
  if (frac <= 0.2) return "10-20%";
  if (frac <= 0.3) return "20-30%";
  if (frac <= 0.4) return "30-40%";
  if (frac <= 0.5) return "40-50%";
  throw data_error("degree_bin: occlusion fraction > 0.5");
}

struct OcclusionReport {
  std::vector<int> differing_indices;
  bool consistent = false;  // differing frames are blank and match the mask
};

inline OcclusionReport verify_occlusion(const SilhouetteSequence& original,
                                        const SilhouetteSequence& occluded) {
  if (original.length() != occluded.length())
    throw data_error("verify_occlusion: length mismatch");
  if (original.height() != occluded.height() || original.width() != occluded.width())
    throw data_error("verify_occlusion: dimension mismatch");

  OcclusionReport report;
  report.consistent = true;
  for (int i = 0; i < original.length(); ++i) {
    if (!(original.frames[i] == occluded.frames[i])) {
      report.differing_indices.push_back(i);
      if (!occluded.frames[i].is_blank()) report.consistent = false;
    }
  }
  const std::vector<bool> empty_mask(static_cast<std::size_t>(original.length()), false);
  const std::vector<bool>& mask = occluded.occlusion_mask ? *occluded.occlusion_mask : empty_mask;
  for (int i = 0; i < original.length(); ++i) {
    const bool differs =
        std::binary_search(report.differing_indices.begin(), report.differing_indices.end(), i);
    const bool masked = mask[static_cast<std::size_t>(i)];
    // A masked frame that happens to equal the original must itself be blank.
    if (differs && !masked) report.consistent = false;
    if (masked && !differs && !occluded.frames[i].is_blank()) report.consistent = false;
  }
  return report;
}

}  // namespace rgait
