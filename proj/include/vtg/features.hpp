// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtg/common.hpp"
#include "vtg/segment.hpp"
#include "vtg/tensor_io.hpp"

namespace vtg {

// Per-frame visual features: one class-token vector per frame, p patch-token
// vectors per frame, and the per-frame attention of the class token over its
// patches. Stands in for a frozen image encoder; precomputed features from a
// real encoder can be loaded through the same container.
struct FrameFeatureSet {
  int n = 0;         // frames
  int p = 0;         // patches per frame
  int feat_dim = 0;  // feature width
  Matf cls;          // [n x feat_dim]
  Matf patches;      // [n*p x feat_dim], row i*p+j is patch j of frame i
  Matf attn;         // [n x p], rows are non-negative and sum to 1

  Eigen::Ref<const Matf> frame_patches(int i) const { return patches.middleRows(i * p, p); }

  void validate() const {
    if (n < 1 || p < 1 || feat_dim < 1) {
      throw Error(ErrorCategory::data, "feature set requires n >= 1, p >= 1, feat_dim >= 1");
    }
    if (cls.rows() != n || cls.cols() != feat_dim) {
      throw Error(ErrorCategory::data, "cls shape mismatch");
    }
    if (patches.rows() != static_cast<Eigen::Index>(n) * p || patches.cols() != feat_dim) {
      throw Error(ErrorCategory::data, "patches shape mismatch");
    }
    if (attn.rows() != n || attn.cols() != p) {
      throw Error(ErrorCategory::data, "attn shape mismatch");
    }
    for (int i = 0; i < n; ++i) {
      if ((attn.row(i).array() < 0.0f).any()) {
        throw Error(ErrorCategory::data, "attn not non-negative at frame " + std::to_string(i));
      }
      if (std::abs(attn.row(i).sum() - 1.0f) > 1e-5f) {
        throw Error(ErrorCategory::data, "attn not normalized at frame " + std::to_string(i));
      }
    }
  }
};

// An event occupying frames [start, end] (inclusive, integer frame indices)
// rendered with a class signature.
struct SyntheticEvent {
  Segment span;  // frame units
  int class_id = 0;
};

struct SyntheticVideoSpec {
  int n_frames = 100;
  int grid_rows = 4;
  int grid_cols = 4;
  std::vector<SyntheticEvent> events;
  int background_class = 0;
  float noise_sigma = 0.1f;
  uint64_t seed = 0;
  int feat_dim = 64;

  int patches() const { return grid_rows * grid_cols; }

  void validate() const {
    if (n_frames < 1 || grid_rows < 1 || grid_cols < 1 || feat_dim < 1) {
      throw Error(ErrorCategory::data, "invalid synthetic video spec");
    }
    for (const auto& e : events) {
      if (e.span.start < 0.0 || e.span.end > n_frames - 1 || e.span.end < e.span.start) {
        throw Error(ErrorCategory::data, "event segment out of range or degenerate");
      }
    }
  }
};

// Class signature: a fixed orthogonal basis vector per class id, unit scale.
inline Vecf class_signature(int class_id, int feat_dim) {
  Vecf v = Vecf::Zero(feat_dim);
  v[class_id % feat_dim] = 1.0f;
  return v;
}

// Fixed (non-learned) rotation applied to the attention-weighted patch mean to
// form the class token. Deterministic per feat_dim; exposed so the closed form
//   cls_i = P * sum_j attn_ij * patch_ij
// can be re-checked from outside.
inline const Matf& fixed_cls_projection(int feat_dim) {
  static std::vector<std::pair<int, Matf>> cache;
  for (auto& [dim, mat] : cache) {
    if (dim == feat_dim) return mat;
  }
  Rng rng(0xF1A7C0DE);
  Matf m(feat_dim, feat_dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<float>(rng.normal());
  }
  // Gram-Schmidt on rows -> orthonormal rotation.
  for (int i = 0; i < feat_dim; ++i) {
    for (int j = 0; j < i; ++j) {
      m.row(i) -= m.row(i).dot(m.row(j)) * m.row(j);
    }
    m.row(i) /= m.row(i).norm();
  }
  cache.emplace_back(feat_dim, std::move(m));
  return cache.back().second;
}

namespace detail {
constexpr float kAttnTemperature = 0.1f;

inline std::pair<int, int> event_patch_block(const SyntheticVideoSpec& spec, size_t event_index) {
  const int p = spec.patches();
  const int block = std::max(1, p / 4);
  Rng rng = Rng(spec.seed).fork(0xB10C + event_index);
  const int start = static_cast<int>(rng.below(static_cast<uint64_t>(p - block + 1)));
  return {start, block};
}
}  // namespace detail

// Toy encoder. Pure function of the spec: background patches carry the
// background class signature, frames inside an event carry the event class
// signature in a contiguous patch block, all plus Gaussian noise. The class
// token is the attention-weighted patch mean passed through the fixed
// projection; attention is a softmax over patch similarity with the frame's
// mean-centered aggregate, which concentrates it on event patches.
inline FrameFeatureSet encode_synthetic(const SyntheticVideoSpec& spec) {
  spec.validate();
  const int n = spec.n_frames;
  const int p = spec.patches();
  const int fd = spec.feat_dim;

  // frame -> class id; conflicting overlaps are rejected.
  std::vector<int> frame_class(static_cast<size_t>(n), spec.background_class);
  std::vector<int> frame_event(static_cast<size_t>(n), -1);
  for (size_t e = 0; e < spec.events.size(); ++e) {
    const auto& ev = spec.events[e];
    const int lo = static_cast<int>(std::floor(ev.span.start));
    const int hi = static_cast<int>(std::ceil(ev.span.end));
    for (int i = lo; i <= hi && i < n; ++i) {
      if (frame_event[static_cast<size_t>(i)] >= 0 &&
          frame_class[static_cast<size_t>(i)] != ev.class_id) {
        throw Error(ErrorCategory::data,
                    "overlapping events with conflicting class ids at frame " + std::to_string(i));
      }
      frame_class[static_cast<size_t>(i)] = ev.class_id;
      frame_event[static_cast<size_t>(i)] = static_cast<int>(e);
    }
  }

  FrameFeatureSet f;
  f.n = n;
  f.p = p;
  f.feat_dim = fd;
  f.patches.resize(static_cast<Eigen::Index>(n) * p, fd);
  f.attn.resize(n, p);
  f.cls.resize(n, fd);

  Rng noise_rng = Rng(spec.seed).fork(0x7015E);
  const Vecf bg_sig = class_signature(spec.background_class, fd);
  for (int i = 0; i < n; ++i) {
    const int ev = frame_event[static_cast<size_t>(i)];
    int block_start = -1;
    int block_len = 0;
    Vecf ev_sig;
    if (ev >= 0) {
      std::tie(block_start, block_len) = detail::event_patch_block(spec, static_cast<size_t>(ev));
      ev_sig = class_signature(frame_class[static_cast<size_t>(i)], fd);
    }
    for (int j = 0; j < p; ++j) {
      const bool in_block = ev >= 0 && j >= block_start && j < block_start + block_len;
      auto row = f.patches.row(static_cast<Eigen::Index>(i) * p + j);
      row = (in_block ? ev_sig : bg_sig).transpose();
      if (spec.noise_sigma > 0.0f) {
        for (int c = 0; c < fd; ++c) {
          row(c) += static_cast<float>(noise_rng.normal(0.0, spec.noise_sigma));
        }
      }
    }
  }

  // Attention: scores are patch . (frame mean - global mean), softmaxed at a
  // fixed temperature. On background-only noise-free frames the probe is zero
  // and attention degenerates to uniform.
  Vecf global_mean = f.patches.colwise().mean().transpose();
  for (int i = 0; i < n; ++i) {
    Vecf probe = f.frame_patches(i).colwise().mean().transpose() - global_mean;
    Vecf scores = f.frame_patches(i) * probe / detail::kAttnTemperature;
    const float mx = scores.maxCoeff();
    Vecf ex = (scores.array() - mx).exp().matrix();
    f.attn.row(i) = (ex / ex.sum()).transpose();
    f.cls.row(i) =
        (fixed_cls_projection(fd) * (f.frame_patches(i).transpose() * ex / ex.sum())).transpose();
  }
  f.validate();
  return f;
}

// Feature container: one line of JSON {n, p, feat_dim, dtype, byte_order}
// followed by raw little-endian float32 arrays in order (cls, patches, attn).
inline void save_features(const std::filesystem::path& path, const FrameFeatureSet& f) {
  f.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw Error(ErrorCategory::io, "cannot open for write: " + path.string());
  }
  nlohmann::json header{
      {"n", f.n}, {"p", f.p}, {"feat_dim", f.feat_dim}, {"dtype", "f32"}, {"byte_order", "le"}};
  os << header.dump() << '\n';
  write_f32_array(os, f.cls.data(), static_cast<size_t>(f.cls.size()));
  write_f32_array(os, f.patches.data(), static_cast<size_t>(f.patches.size()));
  write_f32_array(os, f.attn.data(), static_cast<size_t>(f.attn.size()));
  if (!os) {
    throw Error(ErrorCategory::io, "write failed: " + path.string());
  }
}

inline FrameFeatureSet load_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(ErrorCategory::io, "cannot open: " + path.string());
  }
  std::string line;
  if (!std::getline(is, line)) {
    throw Error(ErrorCategory::data, "missing container header");
  }
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded()) {
    throw Error(ErrorCategory::data, "container header is not valid JSON");
  }
  for (const char* key : {"n", "p", "feat_dim", "dtype", "byte_order"}) {
    if (!header.contains(key)) {
      throw Error(ErrorCategory::data, std::string("container header missing field: ") + key);
    }
  }
  if (header["dtype"] != "f32" || header["byte_order"] != "le") {
    throw Error(ErrorCategory::data, "unsupported dtype/byte_order");
  }
  FrameFeatureSet f;
  f.n = header["n"].get<int>();
  f.p = header["p"].get<int>();
  f.feat_dim = header["feat_dim"].get<int>();
  if (f.n < 1 || f.p < 1 || f.feat_dim < 1) {
    throw Error(ErrorCategory::data, "container header has non-positive dims");
  }
  f.cls.resize(f.n, f.feat_dim);
  f.patches.resize(static_cast<Eigen::Index>(f.n) * f.p, f.feat_dim);
  f.attn.resize(f.n, f.p);
  read_f32_array(is, f.cls.data(), static_cast<size_t>(f.cls.size()), "cls");
  read_f32_array(is, f.patches.data(), static_cast<size_t>(f.patches.size()), "patches");
  read_f32_array(is, f.attn.data(), static_cast<size_t>(f.attn.size()), "attn");
  f.validate();
  return f;
}

}  // namespace vtg
