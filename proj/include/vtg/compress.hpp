// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtg/common.hpp"
#include "vtg/features.hpp"

namespace vtg {

struct CompressParams {
  int u = 4;             // GOP count
  int k = 48;            // key tokens per IDR frame
  int c = 16;            // context tokens per IDR frame
  float sim_threshold = 0.8f;  // cosine cutoff for GOP boundary expansion

  int w() const { return k + c; }  // S-token budget per GOP

  void validate(int p) const {
    if (u < 1 || k < 1 || c < 0) {
      throw Error(ErrorCategory::config, "compress params require u >= 1, k >= 1, c >= 0");
    }
    if (k + c > p) {
      throw Error(ErrorCategory::config, "k + c must not exceed patches per frame");
    }
    if (sim_threshold < -1.0f || sim_threshold > 1.0f) {
      throw Error(ErrorCategory::config, "sim_threshold must lie in [-1, 1]");
    }
  }
};

// A group of pictures: a contiguous frame run anchored by its IDR frame.
struct Gop {
  int idr = 0;
  int first = 0;
  int last = 0;  // inclusive

  int span() const { return last - first + 1; }
};

// IDR frames are uniform samples; boundaries then grow outward from each IDR
// one frame per round while the frame stays cosine-similar to its IDR class
// token. Frames no expansion reaches are attached to the nearest IDR by index
// (ties to the lower GOP). Members of each GOP always form a contiguous range.
inline std::vector<Gop> partition_gops(const FrameFeatureSet& f, const CompressParams& params) {
  params.validate(f.p);
  const int n = f.n;
  const int u = params.u;
  if (u > n) {
    throw Error(ErrorCategory::config, "u exceeds frame count");
  }

  std::vector<int> idr(static_cast<size_t>(u));
  for (int g = 0; g < u; ++g) {
    idr[static_cast<size_t>(g)] = static_cast<int>((2 * g + 1) * static_cast<int64_t>(n) / (2 * u));
  }

  std::vector<int> owner(static_cast<size_t>(n), -1);
  for (int g = 0; g < u; ++g) owner[static_cast<size_t>(idr[static_cast<size_t>(g)])] = g;

  auto similar = [&](int g, int frame) {
    const Vecf a = f.cls.row(idr[static_cast<size_t>(g)]).transpose();
    const Vecf b = f.cls.row(frame).transpose();
    return cosine_sim<float>(a, b) >= params.sim_threshold;
  };

  for (int r = 1; r < n; ++r) {
    bool progress = false;
    for (int g = 0; g < u; ++g) {
      for (int dir : {-1, +1}) {
        const int frame = idr[static_cast<size_t>(g)] + dir * r;
        const int inward = frame - dir;
        if (frame < 0 || frame >= n) continue;
        if (owner[static_cast<size_t>(frame)] != -1) continue;
        if (owner[static_cast<size_t>(inward)] != g) continue;  // contiguity from the IDR
        if (!similar(g, frame)) continue;
        owner[static_cast<size_t>(frame)] = g;
        progress = true;
      }
    }
    if (!progress) break;
  }

  for (int i = 0; i < n; ++i) {
    if (owner[static_cast<size_t>(i)] != -1) continue;
    int best = 0;
    int best_dist = std::abs(i - idr[0]);
    for (int g = 1; g < u; ++g) {
      const int dist = std::abs(i - idr[static_cast<size_t>(g)]);
      if (dist < best_dist) {
        best = g;
        best_dist = dist;
      }
    }
    owner[static_cast<size_t>(i)] = best;
  }

  std::vector<Gop> gops(static_cast<size_t>(u));
  for (int g = 0; g < u; ++g) {
    gops[static_cast<size_t>(g)] = Gop{idr[static_cast<size_t>(g)], n, -1};
  }
  for (int i = 0; i < n; ++i) {
    Gop& gop = gops[static_cast<size_t>(owner[static_cast<size_t>(i)])];
    gop.first = std::min(gop.first, i);
    gop.last = std::max(gop.last, i);
  }
  for (int g = 0; g < u; ++g) {
    const Gop& gop = gops[static_cast<size_t>(g)];
    for (int i = gop.first; i <= gop.last; ++i) {
      if (owner[static_cast<size_t>(i)] != g) {
        throw Error(ErrorCategory::runtime, "GOP members are not contiguous");
      }
    }
  }
  return gops;
}

struct TokenSelection {
  std::vector<int> key_ids;      // patch indices within the IDR frame
  std::vector<int> context_ids;  // patch indices within the IDR frame, disjoint from key_ids
};

// Key tokens: top-k IDR patches by CLS attention (ties to the lower patch
// index). Context tokens: c patches uniformly strided over the remaining ones.
inline TokenSelection select_key_tokens(const FrameFeatureSet& f, const Gop& gop,
                                        const CompressParams& params) {
  params.validate(f.p);
  const int p = f.p;
  std::vector<int> order(static_cast<size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  const auto attn_row = f.attn.row(gop.idr);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return attn_row(a) > attn_row(b); });

  TokenSelection sel;
  sel.key_ids.assign(order.begin(), order.begin() + params.k);
  std::sort(sel.key_ids.begin(), sel.key_ids.end());

  std::vector<int> remaining;
  remaining.reserve(static_cast<size_t>(p - params.k));
  std::vector<bool> is_key(static_cast<size_t>(p), false);
  for (int id : sel.key_ids) is_key[static_cast<size_t>(id)] = true;
  for (int j = 0; j < p; ++j) {
    if (!is_key[static_cast<size_t>(j)]) remaining.push_back(j);
  }
  const int q = static_cast<int>(remaining.size());
  for (int t = 0; t < params.c; ++t) {
    sel.context_ids.push_back(remaining[static_cast<size_t>(t * q / params.c)]);
  }
  return sel;
}

// Group labels for every (frame, patch) in the GOP, as a [span x p] matrix.
// Group g is seeded by the g-th selected token (keys first, then context);
// each patch joins the group of its most cosine-similar selected token, ties
// to the lower group id.
using GroupLabels = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline GroupLabels assign_groups(const FrameFeatureSet& f, const Gop& gop,
                                 const TokenSelection& sel) {
  const int p = f.p;
  const int w = static_cast<int>(sel.key_ids.size() + sel.context_ids.size());
  Matf selected(w, f.feat_dim);
  int row = 0;
  for (int id : sel.key_ids) {
    selected.row(row++) = f.patches.row(static_cast<Eigen::Index>(gop.idr) * p + id);
  }
  for (int id : sel.context_ids) {
    selected.row(row++) = f.patches.row(static_cast<Eigen::Index>(gop.idr) * p + id);
  }
  Vecf sel_norms = selected.rowwise().norm();

  GroupLabels groups(gop.span(), p);
  for (int t = gop.first; t <= gop.last; ++t) {
    for (int j = 0; j < p; ++j) {
      const auto patch = f.patches.row(static_cast<Eigen::Index>(t) * p + j);
      const float pn = patch.norm();
      int best = 0;
      float best_sim = -2.0f;
      for (int g = 0; g < w; ++g) {
        float sim = 0.0f;
        if (pn > 0.0f && sel_norms(g) > 0.0f) {
          sim = patch.dot(selected.row(g)) / (pn * sel_norms(g));
        }
        if (sim > best_sim) {
          best_sim = sim;
          best = g;
        }
      }
      groups(t - gop.first, j) = best;
    }
  }
  return groups;
}

using RemovedMask = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Static-patch removal: a non-IDR token is dropped when its group label equals
// the label of the token one frame step toward the IDR at the same spatial
// coordinate. Runs of repeated labels therefore collapse onto the IDR frame,
// which is never dropped.
inline RemovedMask remove_static(const Gop& gop, const GroupLabels& groups) {
  const int span = gop.span();
  const int p = static_cast<int>(groups.cols());
  RemovedMask removed = RemovedMask::Zero(span, p);
  for (int t = gop.first; t <= gop.last; ++t) {
    if (t == gop.idr) continue;
    const int inward = t < gop.idr ? t + 1 : t - 1;
    for (int j = 0; j < p; ++j) {
      if (groups(t - gop.first, j) == groups(inward - gop.first, j)) {
        removed(t - gop.first, j) = 1;
      }
    }
  }
  return removed;
}

// Mean of each group's surviving tokens, ordered by group id; empty groups
// (possible when duplicate selected tokens tie-break into one group) emit
// nothing.
inline Matf merge_tokens(const FrameFeatureSet& f, const Gop& gop, const GroupLabels& groups,
                         const RemovedMask& removed, int w) {
  const int p = f.p;
  Matf sums = Matf::Zero(w, f.feat_dim);
  std::vector<int> counts(static_cast<size_t>(w), 0);
  for (int t = gop.first; t <= gop.last; ++t) {
    for (int j = 0; j < p; ++j) {
      if (removed(t - gop.first, j)) continue;
      const int g = groups(t - gop.first, j);
      sums.row(g) += f.patches.row(static_cast<Eigen::Index>(t) * p + j);
      ++counts[static_cast<size_t>(g)];
    }
  }
  int non_empty = 0;
  for (int g = 0; g < w; ++g) {
    if (counts[static_cast<size_t>(g)] > 0) ++non_empty;
  }
  Matf out(non_empty, f.feat_dim);
  int row = 0;
  for (int g = 0; g < w; ++g) {
    if (counts[static_cast<size_t>(g)] > 0) {
      out.row(row++) = sums.row(g) / static_cast<float>(counts[static_cast<size_t>(g)]);
    }
  }
  return out;
}

struct GopTrace {
  int first = 0;
  int last = 0;
  int idr = 0;
  int kept = 0;     // surviving tokens fed into merging
  int removed = 0;  // statically removed tokens
  int groups = 0;   // non-empty groups = S-tokens emitted
};

struct CompressResult {
  Matf s_tokens;  // [m x feat_dim], ordered by (GOP, group id)
  std::vector<GopTrace> trace;

  int m() const { return static_cast<int>(s_tokens.rows()); }

  nlohmann::json trace_json() const {
    nlohmann::json per_gop = nlohmann::json::array();
    for (const auto& t : trace) {
      per_gop.push_back({{"first", t.first},
                         {"last", t.last},
                         {"idr", t.idr},
                         {"kept", t.kept},
                         {"removed", t.removed},
                         {"groups", t.groups}});
    }
    return {{"per_gop", per_gop}, {"m", m()}};
  }
};

// Full pipeline: partition into GOPs, per GOP select key/context tokens,
// group, drop static patches, merge; S-tokens are concatenated in GOP order.
// Pure function of (features, params).
inline CompressResult compress(const FrameFeatureSet& f, const CompressParams& params) {
  f.validate();
  const std::vector<Gop> gops = partition_gops(f, params);
  const int w = params.w();

  CompressResult result;
  std::vector<Matf> parts;
  int total_rows = 0;
  for (const Gop& gop : gops) {
    const TokenSelection sel = select_key_tokens(f, gop, params);
    const GroupLabels groups = assign_groups(f, gop, sel);
    const RemovedMask removed = remove_static(gop, groups);
    Matf merged = merge_tokens(f, gop, groups, removed, w);

    GopTrace t;
    t.first = gop.first;
    t.last = gop.last;
    t.idr = gop.idr;
    t.removed = static_cast<int>(removed.cast<int>().sum());
    t.kept = gop.span() * f.p - t.removed;
    t.groups = static_cast<int>(merged.rows());
    result.trace.push_back(t);
    total_rows += t.groups;
    parts.push_back(std::move(merged));
  }

  result.s_tokens.resize(total_rows, f.feat_dim);
  int row = 0;
  for (const Matf& part : parts) {
    result.s_tokens.middleRows(row, part.rows()) = part;
    row += static_cast<int>(part.rows());
  }
  return result;
}

// S-token container reuses the feature container with p = 1: the tokens go in
// cls, patches duplicates them, attn is all-ones.
inline FrameFeatureSet s_tokens_as_features(const Matf& s_tokens) {
  FrameFeatureSet f;
  f.n = static_cast<int>(s_tokens.rows());
  f.p = 1;
  f.feat_dim = static_cast<int>(s_tokens.cols());
  f.cls = s_tokens;
  f.patches = s_tokens;
  f.attn = Matf::Ones(f.n, 1);
  return f;
}

}  // namespace vtg
