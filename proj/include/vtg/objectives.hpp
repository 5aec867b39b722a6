// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "vtg/common.hpp"
#include "vtg/segment.hpp"

namespace vtg {

struct LossWeights {
  double lambda_text = 1.0;
  double lambda_l1 = 1.0;
  double lambda_iou = 1.0;
};

// Composed objective: total = lambda_text * text + ce + (lambda_l1 * l1 +
// lambda_iou * giou).
struct LossBundle {
  double text = 0.0;
  double ce = 0.0;
  double l1 = 0.0;
  double giou = 0.0;
  double total = 0.0;
  LossWeights weights;
};

inline LossBundle total_loss(double text, double ce, double l1, double giou,
                             const LossWeights& w) {
  LossBundle b;
  b.text = text;
  b.ce = ce;
  b.l1 = l1;
  b.giou = giou;
  b.weights = w;
  b.total = w.lambda_text * text + ce + (w.lambda_l1 * l1 + w.lambda_iou * giou);
  if (!std::isfinite(b.total)) {
    throw Error(ErrorCategory::runtime, "non-finite loss");
  }
  return b;
}

// Mean negative log-likelihood over masked positions; targets[i] is the token
// that logits row i should predict. d_logits, when non-null, receives the
// gradient (softmax minus one-hot over the mask, averaged).
template <class S>
S text_loss(const Mat<S>& logits, const std::vector<int>& targets, const std::vector<uint8_t>& mask,
            Mat<S>* d_logits = nullptr) {
  const int L = static_cast<int>(logits.rows());
  const int V = static_cast<int>(logits.cols());
  if (static_cast<int>(targets.size()) != L || static_cast<int>(mask.size()) != L) {
    throw Error(ErrorCategory::data, "targets/mask do not align with logits rows");
  }
  int count = 0;
  for (uint8_t m : mask) count += m ? 1 : 0;
  if (count == 0) {
    throw Error(ErrorCategory::data, "text loss mask is empty");
  }
  if (d_logits) *d_logits = Mat<S>::Zero(L, V);
  S loss = S(0);
  Vec<S> p(V);
  for (int i = 0; i < L; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    const int target = targets[static_cast<size_t>(i)];
    if (target < 0 || target >= V) {
      throw Error(ErrorCategory::data, "target id out of vocabulary");
    }
    const S mx = logits.row(i).maxCoeff();
    p = (logits.row(i).array() - mx).exp().matrix().transpose();
    const S z = p.sum();
    loss -= std::log(p(target) / z);
    if (d_logits) {
      d_logits->row(i) = (p / z).transpose() / static_cast<S>(count);
      (*d_logits)(i, target) -= S(1) / static_cast<S>(count);
    }
  }
  return loss / static_cast<S>(count);
}

// Foreground frame labels under the round-outward rule: frames in
// [floor(start), ceil(end)] are foreground.
inline std::vector<uint8_t> fg_labels(const Segment& gt, int n) {
  std::vector<uint8_t> labels(static_cast<size_t>(n), 0);
  const int lo = std::max(0, static_cast<int>(std::floor(gt.start)));
  const int hi = std::min(n - 1, static_cast<int>(std::ceil(gt.end)));
  for (int i = lo; i <= hi; ++i) labels[static_cast<size_t>(i)] = 1;
  return labels;
}

// Mean binary cross-entropy over frames. The internal clamp keeps the log and
// its gradient finite at the scalar type's resolution; interior gradients are
// unaffected.
template <class S>
S indicator_loss(const Vec<S>& probs, const std::vector<uint8_t>& labels, Vec<S>* d_probs = nullptr) {
  const int n = static_cast<int>(probs.size());
  if (static_cast<int>(labels.size()) != n) {
    throw Error(ErrorCategory::data, "labels do not align with probs");
  }
  const S eps = std::numeric_limits<S>::epsilon();
  if (d_probs) *d_probs = Vec<S>::Zero(n);
  S loss = S(0);
  for (int i = 0; i < n; ++i) {
    const S p = std::clamp(probs(i), eps, S(1) - eps);
    const S y = labels[static_cast<size_t>(i)] ? S(1) : S(0);
    loss -= y * std::log(p) + (S(1) - y) * std::log(S(1) - p);
    if (d_probs) {
      (*d_probs)(i) = (p - y) / (p * (S(1) - p)) / static_cast<S>(n);
    }
  }
  return loss / static_cast<S>(n);
}

template <class S>
S smooth_l1(S x) {
  const S ax = std::abs(x);
  return ax < S(1) ? S(0.5) * x * x : ax - S(0.5);
}

template <class S>
S smooth_l1_grad(S x) {
  if (x > S(1)) return S(1);
  if (x < S(-1)) return S(-1);
  return x;
}

// giou value plus derivatives w.r.t. the first interval's endpoints.
template <class S>
S giou_1d_with_grad(S s, S e, S gs, S ge, S& d_s, S& d_e) {
  const S inter = std::max(S(0), std::min(e, ge) - std::max(s, gs));
  const S uni = (e - s) + (ge - gs) - inter;
  const S hull = std::max(e, ge) - std::min(s, gs);
  d_s = S(0);
  d_e = S(0);
  if (hull <= S(0)) return S(1);

  const S di_ds = (inter > S(0) && s > gs) ? S(-1) : S(0);
  const S di_de = (inter > S(0) && e < ge) ? S(1) : S(0);
  const S du_ds = S(-1) - di_ds;
  const S du_de = S(1) - di_de;
  const S dh_ds = s < gs ? S(-1) : S(0);
  const S dh_de = e > ge ? S(1) : S(0);

  S iou = S(0), diou_ds = S(0), diou_de = S(0);
  if (uni > S(0)) {
    iou = inter / uni;
    diou_ds = (di_ds * uni - inter * du_ds) / (uni * uni);
    diou_de = (di_de * uni - inter * du_de) / (uni * uni);
  }
  // penalty = (hull - uni) / hull; d penalty = -(du*hull - uni*dh)/hull^2
  const S dpen_ds = -(du_ds * hull - uni * dh_ds) / (hull * hull);
  const S dpen_de = -(du_de * hull - uni * dh_de) / (hull * hull);
  d_s = diou_ds - dpen_ds;
  d_e = diou_de - dpen_de;
  return iou - (hull - uni) / hull;
}

struct BoundaryLoss {
  double l1 = 0.0;
  double giou = 0.0;
};

// Smooth-L1 between predicted and true offsets (d_i = (i - start, end - i)),
// averaged over foreground frames and both components, plus the mean
// (1 - gIoU) of the per-frame decoded interval [i - left, i + right] against
// the ground truth, over foreground frames only. The two gradient outputs are
// separate so callers can weight the terms independently.
template <class S>
BoundaryLoss boundary_loss(const Mat<S>& offsets, const Segment& gt, Mat<S>* d_l1 = nullptr,
                           Mat<S>* d_giou = nullptr) {
  const int n = static_cast<int>(offsets.rows());
  if (offsets.cols() != 2) {
    throw Error(ErrorCategory::data, "offsets must have two columns");
  }
  const std::vector<uint8_t> fg = fg_labels(gt, n);
  int fg_count = 0;
  for (uint8_t v : fg) fg_count += v;
  if (fg_count == 0) {
    throw Error(ErrorCategory::data, "ground truth has no foreground frames");
  }
  if (d_l1) *d_l1 = Mat<S>::Zero(n, 2);
  if (d_giou) *d_giou = Mat<S>::Zero(n, 2);

  S l1 = S(0);
  S giou_term = S(0);
  const S inv_l1 = S(1) / static_cast<S>(2 * fg_count);
  const S inv_fg = S(1) / static_cast<S>(fg_count);
  for (int i = 0; i < n; ++i) {
    if (!fg[static_cast<size_t>(i)]) continue;
    const S true_left = static_cast<S>(i) - static_cast<S>(gt.start);
    const S true_right = static_cast<S>(gt.end) - static_cast<S>(i);
    const S rl = offsets(i, 0) - true_left;
    const S rr = offsets(i, 1) - true_right;
    l1 += smooth_l1(rl) + smooth_l1(rr);
    const S bs = static_cast<S>(i) - offsets(i, 0);
    const S be = static_cast<S>(i) + offsets(i, 1);
    S dgs, dge;
    const S g = giou_1d_with_grad<S>(bs, be, static_cast<S>(gt.start), static_cast<S>(gt.end),
                                     dgs, dge);
    giou_term += S(1) - g;
    if (d_l1) {
      (*d_l1)(i, 0) += smooth_l1_grad(rl) * inv_l1;
      (*d_l1)(i, 1) += smooth_l1_grad(rr) * inv_l1;
    }
    if (d_giou) {
      // b_start = i - left, b_end = i + right
      (*d_giou)(i, 0) += dgs * inv_fg;   // d(1-g)/d left = -dg/db_s * (-1)
      (*d_giou)(i, 1) += -dge * inv_fg;  // d(1-g)/d right = -dg/db_e * (+1)
    }
  }
  BoundaryLoss out;
  out.l1 = static_cast<double>(l1) / (2.0 * fg_count);
  out.giou = static_cast<double>(giou_term) / fg_count;
  return out;
}

// The i-th emitted <LOC> pairs with the i-th ground-truth segment; surplus on
// either side carries no boundary loss.
inline std::vector<std::pair<int, int>> match_locs(int n_locs, int n_gts) {
  std::vector<std::pair<int, int>> pairs;
  const int m = std::min(n_locs, n_gts);
  pairs.reserve(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) pairs.emplace_back(i, i);
  return pairs;
}

}  // namespace vtg
