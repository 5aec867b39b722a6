// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "vtg/common.hpp"

namespace vtg {

// A time interval in frame units. Interval measure is end - start (real-line
// length), which is what all IoU-style ratios below use.
struct Segment {
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;

  double length() const { return end - start; }
};

inline double intersection_1d(const Segment& a, const Segment& b) {
  return std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

inline double iou_1d(const Segment& a, const Segment& b) {
  const double inter = intersection_1d(a, b);
  const double uni = a.length() + b.length() - inter;
  if (uni <= 0.0) {
    // Two degenerate (zero-length) intervals: identical points count as a match.
    return (a.start == b.start && a.end == b.end) ? 1.0 : 0.0;
  }
  return inter / uni;
}

// Intersection over prediction length; 1.0 whenever the prediction lies inside
// the ground truth.
inline double iop_1d(const Segment& pred, const Segment& gt) {
  if (pred.length() <= 0.0) {
    return (intersection_1d(pred, gt) > 0.0 || (pred.start >= gt.start && pred.end <= gt.end))
               ? 1.0
               : 0.0;
  }
  return intersection_1d(pred, gt) / pred.length();
}

// Generalized IoU on intervals: IoU - (|hull| - |union|) / |hull|, in (-1, 1].
template <class S>
S giou_1d_impl(S a_start, S a_end, S b_start, S b_end) {
  const S inter = std::max(S(0), std::min(a_end, b_end) - std::max(a_start, b_start));
  const S len_a = a_end - a_start;
  const S len_b = b_end - b_start;
  const S uni = len_a + len_b - inter;
  const S hull = std::max(a_end, b_end) - std::min(a_start, b_start);
  if (hull <= S(0)) {
    return S(1);  // both degenerate at the same point
  }
  const S iou = uni > S(0) ? inter / uni : S(0);
  return iou - (hull - uni) / hull;
}

inline double giou_1d(const Segment& a, const Segment& b) {
  return giou_1d_impl<double>(a.start, a.end, b.start, b.end);
}

}  // namespace vtg
