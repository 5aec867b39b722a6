// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "vtg/common.hpp"
#include "vtg/segment.hpp"

namespace vtg {

enum class ReweightMode { add, concat, self_atten };

inline ReweightMode reweight_mode_from_string(const std::string& s) {
  if (s == "add") return ReweightMode::add;
  if (s == "concat") return ReweightMode::concat;
  if (s == "self_atten") return ReweightMode::self_atten;
  throw Error(ErrorCategory::config, "unknown reweight mode: " + s);
}

inline const char* to_string(ReweightMode m) {
  switch (m) {
    case ReweightMode::add: return "add";
    case ReweightMode::concat: return "concat";
    case ReweightMode::self_atten: return "self_atten";
  }
  return "add";
}

struct HeadConfig {
  int d = 128;
  ReweightMode mode = ReweightMode::add;
  bool mlp_relu = true;  // identity nonlinearity is used by tests only
  uint64_t init_seed = 2;
};

namespace headdetail {

template <class S>
S softplus(S x) {
  if (x > S(30)) return x;
  return std::log1p(std::exp(x));
}

template <class S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

// Temporal conv, kernel 3, same zero padding. Weight layout: [out x 3*in],
// taps ordered (-1, 0, +1); w(o, t*in + c) multiplies x(i+t-1, c).
template <class S>
Mat<S> conv3_forward(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b) {
  const int n = static_cast<int>(x.rows());
  const int in = static_cast<int>(x.cols());
  const int out = static_cast<int>(w.rows());
  Mat<S> y(n, out);
  for (int i = 0; i < n; ++i) {
    y.row(i) = b.row(0);
    for (int t = 0; t < 3; ++t) {
      const int j = i + t - 1;
      if (j < 0 || j >= n) continue;
      y.row(i).noalias() += x.row(j) * w.middleCols(t * in, in).transpose();
    }
  }
  return y;
}

template <class S>
void conv3_backward(const Mat<S>& dy, const Mat<S>& x, const Mat<S>& w, Mat<S>& dx_accum,
                    Mat<S>* dw, Mat<S>* db) {
  const int n = static_cast<int>(x.rows());
  const int in = static_cast<int>(x.cols());
  for (int i = 0; i < n; ++i) {
    if (db) db->row(0) += dy.row(i);
    for (int t = 0; t < 3; ++t) {
      const int j = i + t - 1;
      if (j < 0 || j >= n) continue;
      if (dw) dw->middleCols(t * in, in).noalias() += dy.row(i).transpose() * x.row(j);
      dx_accum.row(j).noalias() += dy.row(i) * w.middleCols(t * in, in);
    }
  }
}

}  // namespace headdetail

// Conv branch: three kernel-3 layers with d channels and ReLU, then a
// pointwise projection to `channels` outputs. Shared by the indicator (one
// channel, sigmoid) and boundary (two channels, softplus) branches.
template <class S>
struct ConvBranch {
  std::vector<Mat<S>> w;  // 3 x [d x 3d]
  std::vector<Mat<S>> b;  // 3 x [1 x d]
  Mat<S> proj_w;          // [channels x d]
  Mat<S> proj_b;          // [1 x channels]

  void init(int d, int channels, Rng& rng) {
    const double sigma = 1.0 / std::sqrt(3.0 * d);
    w.resize(3);
    b.resize(3);
    for (int l = 0; l < 3; ++l) {
      w[static_cast<size_t>(l)].resize(d, 3 * d);
      for (Eigen::Index i = 0; i < w[static_cast<size_t>(l)].size(); ++i) {
        w[static_cast<size_t>(l)].data()[i] = static_cast<S>(rng.normal(0.0, sigma));
      }
      b[static_cast<size_t>(l)] = Mat<S>::Zero(1, d);
    }
    proj_w = Mat<S>::Zero(channels, d);  // zero head: neutral predictions at init
    proj_b = Mat<S>::Zero(1, channels);
  }

  struct Cache {
    std::vector<Mat<S>> pre;   // pre-ReLU per conv layer
    std::vector<Mat<S>> act;   // post-ReLU per conv layer
    Mat<S> logits;             // [n x channels]
  };

  Mat<S> forward(const Mat<S>& x, Cache* cache) const {
    Mat<S> cur = x;
    Cache local;
    Cache& c = cache ? *cache : local;
    c.pre.resize(3);
    c.act.resize(3);
    for (int l = 0; l < 3; ++l) {
      c.pre[static_cast<size_t>(l)] =
          headdetail::conv3_forward(cur, w[static_cast<size_t>(l)], b[static_cast<size_t>(l)]);
      c.act[static_cast<size_t>(l)] =
          c.pre[static_cast<size_t>(l)].unaryExpr([](S v) { return v > S(0) ? v : S(0); });
      cur = c.act[static_cast<size_t>(l)];
    }
    c.logits.resize(x.rows(), proj_w.rows());
    c.logits.noalias() = cur * proj_w.transpose();
    c.logits.rowwise() += proj_b.row(0);
    return c.logits;
  }

  struct Grads {
    std::vector<Mat<S>> w, b;
    Mat<S> proj_w, proj_b;

    void init_like(const ConvBranch& br) {
      w.resize(3);
      b.resize(3);
      for (int l = 0; l < 3; ++l) {
        w[static_cast<size_t>(l)] = Mat<S>::Zero(br.w[static_cast<size_t>(l)].rows(),
                                                 br.w[static_cast<size_t>(l)].cols());
        b[static_cast<size_t>(l)] = Mat<S>::Zero(1, br.b[static_cast<size_t>(l)].cols());
      }
      proj_w = Mat<S>::Zero(br.proj_w.rows(), br.proj_w.cols());
      proj_b = Mat<S>::Zero(1, br.proj_b.cols());
    }
  };

  void backward(const Mat<S>& dlogits, const Mat<S>& x, const Cache& c, Mat<S>& dx_accum,
                Grads* g) const {
    if (g) {
      g->proj_w.noalias() += dlogits.transpose() * c.act[2];
      g->proj_b.noalias() += dlogits.colwise().sum();
    }
    Mat<S> dcur = dlogits * proj_w;
    for (int l = 2; l >= 0; --l) {
      Mat<S> dpre = dcur.binaryExpr(c.pre[static_cast<size_t>(l)],
                                    [](S gv, S pv) { return pv > S(0) ? gv : S(0); });
      const Mat<S>& input = l == 0 ? x : c.act[static_cast<size_t>(l - 1)];
      Mat<S> dinput = Mat<S>::Zero(input.rows(), input.cols());
      headdetail::conv3_backward(dpre, input, w[static_cast<size_t>(l)], dinput,
                                 g ? &g->w[static_cast<size_t>(l)] : nullptr,
                                 g ? &g->b[static_cast<size_t>(l)] : nullptr);
      dcur = std::move(dinput);
    }
    dx_accum += dcur;
  }
};

// The lightweight temporal expert head: <LOC> hidden -> h_loc via a 2-layer
// MLP, T-token reweighting, and the indicator / boundary conv branches.
template <class S>
class TemporalHead {
 public:
  explicit TemporalHead(const HeadConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.init_seed);
    const int d = cfg.d;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    mlp_w1_ = gaussian(d, d, sd, rng);
    mlp_b1_ = Mat<S>::Zero(1, d);
    mlp_w2_ = gaussian(d, d, sd, rng);
    mlp_b2_ = Mat<S>::Zero(1, d);
    concat_w_ = gaussian(d, 2 * d, 1.0 / std::sqrt(2.0 * d), rng);
    concat_b_ = Mat<S>::Zero(1, d);
    attn_wq_ = gaussian(d, d, sd, rng);
    attn_wk_ = gaussian(d, d, sd, rng);
    attn_wv_ = gaussian(d, d, sd, rng);
    attn_wo_ = gaussian(d, d, sd, rng);
    indicator_.init(d, 1, rng);
    boundary_.init(d, 2, rng);
  }

  const HeadConfig& config() const { return cfg_; }

  struct Cache {
    Mat<S> h;       // [1 x d] <LOC> hidden
    Mat<S> h1, a1, h_loc;
    Mat<S> x_t;     // [n x d]
    Mat<S> xw;      // reweighted T-tokens
    // concat mode
    Mat<S> z;
    // self-attention mode
    Mat<S> sa_q, sa_k, sa_v, sa_ctx;
    Vec<S> sa_probs;
    typename ConvBranch<S>::Cache ind, bnd;
    Vec<S> probs;        // [n]
    Mat<S> offsets;      // [n x 2]
  };

  Mat<S> project_loc(const Mat<S>& h, Cache* cache = nullptr) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.h = h;
    c.h1 = h * mlp_w1_.transpose();
    c.h1.rowwise() += mlp_b1_.row(0);
    c.a1 = cfg_.mlp_relu ? Mat<S>(c.h1.unaryExpr([](S v) { return v > S(0) ? v : S(0); })) : c.h1;
    c.h_loc = c.a1 * mlp_w2_.transpose();
    c.h_loc.rowwise() += mlp_b2_.row(0);
    return c.h_loc;
  }

  Mat<S> reweight(const Mat<S>& x_t, const Mat<S>& h_loc, Cache* cache = nullptr) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.x_t = x_t;
    const int n = static_cast<int>(x_t.rows());
    const int d = cfg_.d;
    switch (cfg_.mode) {
      case ReweightMode::add:
        c.xw = x_t;
        c.xw.rowwise() += h_loc.row(0);
        break;
      case ReweightMode::concat: {
        c.z.resize(n, 2 * d);
        c.z.leftCols(d) = x_t;
        c.z.rightCols(d) = h_loc.row(0).replicate(n, 1);
        c.xw.noalias() = c.z * concat_w_.transpose();
        c.xw.rowwise() += concat_b_.row(0);
        break;
      }
      case ReweightMode::self_atten: {
        c.sa_q = h_loc * attn_wq_.transpose();           // [1 x d]
        c.sa_k.noalias() = x_t * attn_wk_.transpose();   // [n x d]
        c.sa_v.noalias() = x_t * attn_wv_.transpose();   // [n x d]
        Vec<S> scores = c.sa_k * c.sa_q.row(0).transpose() / std::sqrt(static_cast<S>(d));
        const S mx = scores.maxCoeff();
        Vec<S> ex = (scores.array() - mx).exp().matrix();
        c.sa_probs = ex / ex.sum();
        c.sa_ctx = c.sa_probs.transpose() * c.sa_v;       // [1 x d]
        c.xw = x_t;
        c.xw.rowwise() += (c.sa_ctx * attn_wo_.transpose()).row(0);
        break;
      }
    }
    return c.xw;
  }

  Vec<S> indicator(const Mat<S>& x, typename ConvBranch<S>::Cache* cache = nullptr) const {
    typename ConvBranch<S>::Cache local;
    auto& c = cache ? *cache : local;
    Mat<S> logits = indicator_.forward(x, &c);
    Vec<S> probs(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) probs(i) = headdetail::sigmoid(logits(i, 0));
    return probs;
  }

  Mat<S> boundary(const Mat<S>& x, typename ConvBranch<S>::Cache* cache = nullptr) const {
    typename ConvBranch<S>::Cache local;
    auto& c = cache ? *cache : local;
    Mat<S> logits = boundary_.forward(x, &c);
    return logits.unaryExpr([](S v) { return headdetail::softplus(v); });
  }

  // Full head pass from the <LOC> hidden state and the encoded T-tokens.
  Cache forward(const Mat<S>& x_t, const Mat<S>& h) const {
    Cache c;
    project_loc(h, &c);
    reweight(x_t, c.h_loc, &c);
    c.probs = indicator(c.xw, &c.ind);
    c.offsets = boundary(c.xw, &c.bnd);
    return c;
  }

  struct Grads {
    Mat<S> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    Mat<S> concat_w, concat_b;
    Mat<S> attn_wq, attn_wk, attn_wv, attn_wo;
    typename ConvBranch<S>::Grads ind, bnd;
  };

  Grads zero_grads() const {
    Grads g;
    g.mlp_w1 = Mat<S>::Zero(cfg_.d, cfg_.d);
    g.mlp_b1 = Mat<S>::Zero(1, cfg_.d);
    g.mlp_w2 = Mat<S>::Zero(cfg_.d, cfg_.d);
    g.mlp_b2 = Mat<S>::Zero(1, cfg_.d);
    g.concat_w = Mat<S>::Zero(cfg_.d, 2 * cfg_.d);
    g.concat_b = Mat<S>::Zero(1, cfg_.d);
    g.attn_wq = Mat<S>::Zero(cfg_.d, cfg_.d);
    g.attn_wk = Mat<S>::Zero(cfg_.d, cfg_.d);
    g.attn_wv = Mat<S>::Zero(cfg_.d, cfg_.d);
    g.attn_wo = Mat<S>::Zero(cfg_.d, cfg_.d);
    g.ind.init_like(indicator_);
    g.bnd.init_like(boundary_);
    return g;
  }

  // dprobs/doffsets are gradients w.r.t. the head outputs; accumulates into
  // dx_t (encoded T-tokens) and dh (<LOC> hidden) plus parameter grads.
  void backward(const Cache& c, const Vec<S>& dprobs, const Mat<S>& doffsets, Grads& g,
                Mat<S>& dx_t, Mat<S>& dh) const {
    const int n = static_cast<int>(c.x_t.rows());
    const int d = cfg_.d;

    // sigmoid / softplus pointwise backward to branch logits
    Mat<S> dind_logits(n, 1);
    for (int i = 0; i < n; ++i) {
      const S p = c.probs(i);
      dind_logits(i, 0) = dprobs(i) * p * (S(1) - p);
    }
    Mat<S> dbnd_logits =
        doffsets.binaryExpr(c.bnd.logits, [](S gv, S lv) { return gv * headdetail::sigmoid(lv); });

    Mat<S> dxw = Mat<S>::Zero(n, d);
    indicator_.backward(dind_logits, c.xw, c.ind, dxw, &g.ind);
    boundary_.backward(dbnd_logits, c.xw, c.bnd, dxw, &g.bnd);

    // reweight backward
    Mat<S> dh_loc = Mat<S>::Zero(1, d);
    switch (cfg_.mode) {
      case ReweightMode::add:
        dx_t += dxw;
        dh_loc.row(0) += dxw.colwise().sum();
        break;
      case ReweightMode::concat: {
        g.concat_w.noalias() += dxw.transpose() * c.z;
        g.concat_b.noalias() += dxw.colwise().sum();
        Mat<S> dz = dxw * concat_w_;
        dx_t += dz.leftCols(d);
        dh_loc.row(0) += dz.rightCols(d).colwise().sum();
        break;
      }
      case ReweightMode::self_atten: {
        dx_t += dxw;
        Mat<S> dproj = dxw.colwise().sum();  // [1 x d], broadcast add backward
        g.attn_wo.noalias() += dproj.transpose() * c.sa_ctx;
        Mat<S> dctx = dproj * attn_wo_;
        Vec<S> da = c.sa_v * dctx.row(0).transpose();
        Mat<S> dv = c.sa_probs * dctx;
        const S dot = da.dot(c.sa_probs);
        Vec<S> dscores = (da.array() - dot).matrix().cwiseProduct(c.sa_probs);
        const S inv_sqrt_d = S(1) / std::sqrt(static_cast<S>(d));
        Mat<S> dk = dscores * c.sa_q * inv_sqrt_d;
        Mat<S> dq = (dscores.transpose() * c.sa_k) * inv_sqrt_d;
        g.attn_wk.noalias() += dk.transpose() * c.x_t;
        g.attn_wv.noalias() += dv.transpose() * c.x_t;
        g.attn_wq.noalias() += dq.transpose() * c.h_loc;
        dx_t.noalias() += dk * attn_wk_;
        dx_t.noalias() += dv * attn_wv_;
        dh_loc.noalias() += dq * attn_wq_;
        break;
      }
    }

    // project_loc backward
    g.mlp_w2.noalias() += dh_loc.transpose() * c.a1;
    g.mlp_b2.noalias() += dh_loc;
    Mat<S> da1 = dh_loc * mlp_w2_;
    Mat<S> dh1 = cfg_.mlp_relu
                     ? Mat<S>(da1.binaryExpr(c.h1, [](S gv, S pv) { return pv > S(0) ? gv : S(0); }))
                     : da1;
    g.mlp_w1.noalias() += dh1.transpose() * c.h;
    g.mlp_b1.noalias() += dh1;
    dh.noalias() += dh1 * mlp_w1_;
  }

  struct ParamRef {
    std::string name;
    Mat<S>* tensor;
  };

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    out.push_back({"head.mlp.w1", &mlp_w1_});
    out.push_back({"head.mlp.b1", &mlp_b1_});
    out.push_back({"head.mlp.w2", &mlp_w2_});
    out.push_back({"head.mlp.b2", &mlp_b2_});
    if (cfg_.mode == ReweightMode::concat) {
      out.push_back({"head.concat.w", &concat_w_});
      out.push_back({"head.concat.b", &concat_b_});
    }
    if (cfg_.mode == ReweightMode::self_atten) {
      out.push_back({"head.attn.wq", &attn_wq_});
      out.push_back({"head.attn.wk", &attn_wk_});
      out.push_back({"head.attn.wv", &attn_wv_});
      out.push_back({"head.attn.wo", &attn_wo_});
    }
    for (int l = 0; l < 3; ++l) {
      out.push_back({"head.ind.w" + std::to_string(l), &indicator_.w[static_cast<size_t>(l)]});
      out.push_back({"head.ind.b" + std::to_string(l), &indicator_.b[static_cast<size_t>(l)]});
      out.push_back({"head.bnd.w" + std::to_string(l), &boundary_.w[static_cast<size_t>(l)]});
      out.push_back({"head.bnd.b" + std::to_string(l), &boundary_.b[static_cast<size_t>(l)]});
    }
    out.push_back({"head.ind.proj_w", &indicator_.proj_w});
    out.push_back({"head.ind.proj_b", &indicator_.proj_b});
    out.push_back({"head.bnd.proj_w", &boundary_.proj_w});
    out.push_back({"head.bnd.proj_b", &boundary_.proj_b});
    return out;
  }

  // Gradient tensors in the same order as params().
  static void collect_grads(const HeadConfig& cfg, Grads& g, std::vector<Mat<S>*>& out) {
    out.push_back(&g.mlp_w1);
    out.push_back(&g.mlp_b1);
    out.push_back(&g.mlp_w2);
    out.push_back(&g.mlp_b2);
    if (cfg.mode == ReweightMode::concat) {
      out.push_back(&g.concat_w);
      out.push_back(&g.concat_b);
    }
    if (cfg.mode == ReweightMode::self_atten) {
      out.push_back(&g.attn_wq);
      out.push_back(&g.attn_wk);
      out.push_back(&g.attn_wv);
      out.push_back(&g.attn_wo);
    }
    for (int l = 0; l < 3; ++l) {
      out.push_back(&g.ind.w[static_cast<size_t>(l)]);
      out.push_back(&g.ind.b[static_cast<size_t>(l)]);
      out.push_back(&g.bnd.w[static_cast<size_t>(l)]);
      out.push_back(&g.bnd.b[static_cast<size_t>(l)]);
    }
    out.push_back(&g.ind.proj_w);
    out.push_back(&g.ind.proj_b);
    out.push_back(&g.bnd.proj_w);
    out.push_back(&g.bnd.proj_b);
  }

  // Test hooks: direct access for constructing identity/zero configurations.
  Mat<S>& mlp_w1() { return mlp_w1_; }
  Mat<S>& mlp_b1() { return mlp_b1_; }
  Mat<S>& mlp_w2() { return mlp_w2_; }
  Mat<S>& mlp_b2() { return mlp_b2_; }
  Mat<S>& concat_w() { return concat_w_; }
  Mat<S>& concat_b() { return concat_b_; }
  ConvBranch<S>& indicator_branch() { return indicator_; }
  ConvBranch<S>& boundary_branch() { return boundary_; }

 private:
  static Mat<S> gaussian(Eigen::Index rows, Eigen::Index cols, double sigma, Rng& rng) {
    Mat<S> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.normal(0.0, sigma));
    return m;
  }

  HeadConfig cfg_;
  Mat<S> mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
  Mat<S> concat_w_, concat_b_;
  Mat<S> attn_wq_, attn_wk_, attn_wv_, attn_wo_;
  ConvBranch<S> indicator_;
  ConvBranch<S> boundary_;
};

// Per-frame candidates [i - left, i + right] scored by the indicator, sorted
// by score (ties to the lower frame), greedy NMS, top_k survivors.
template <class S>
std::vector<Segment> decode_segments(const Vec<S>& probs, const Mat<S>& offsets, int top_k,
                                     double nms_iou = 0.7) {
  if (top_k < 1) throw Error(ErrorCategory::config, "top_k must be >= 1");
  const int n = static_cast<int>(probs.size());
  if (offsets.rows() != n || offsets.cols() != 2) {
    throw Error(ErrorCategory::data, "offsets do not align with probs");
  }
  std::vector<Segment> candidates(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Segment s;
    s.start = std::clamp(static_cast<double>(i) - static_cast<double>(offsets(i, 0)), 0.0,
                         static_cast<double>(n - 1));
    s.end = std::clamp(static_cast<double>(i) + static_cast<double>(offsets(i, 1)), 0.0,
                       static_cast<double>(n - 1));
    if (s.end < s.start) std::swap(s.start, s.end);
    s.score = static_cast<double>(probs(i));
    candidates[static_cast<size_t>(i)] = s;
  }
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return candidates[static_cast<size_t>(a)].score > candidates[static_cast<size_t>(b)].score;
  });
  std::vector<Segment> kept;
  for (int idx : order) {
    const Segment& cand = candidates[static_cast<size_t>(idx)];
    bool suppressed = false;
    for (const Segment& k : kept) {
      if (iou_1d(cand, k) >= nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept.push_back(cand);
      if (static_cast<int>(kept.size()) == top_k) break;
    }
  }
  return kept;
}

// Saliency is the indicator probability itself, per frame.
template <class S>
Vec<S> saliency(const Vec<S>& probs) {
  return probs;
}

// Mean-pool per-frame saliency into fixed-length clips. Frame i sits at time
// (i + 0.5) * duration / n; a clip with no frame inherits the nearest frame's
// score.
template <class S>
std::vector<double> clip_scores(const Vec<S>& frame_saliency, double duration_s,
                                double clip_len_s = 2.0) {
  const int n = static_cast<int>(frame_saliency.size());
  if (n == 0 || duration_s <= 0.0 || clip_len_s <= 0.0) {
    throw Error(ErrorCategory::data, "invalid clip pooling inputs");
  }
  const int clips = static_cast<int>(std::ceil(duration_s / clip_len_s));
  std::vector<double> sums(static_cast<size_t>(clips), 0.0);
  std::vector<int> counts(static_cast<size_t>(clips), 0);
  std::vector<double> times(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    times[static_cast<size_t>(i)] = (i + 0.5) * duration_s / n;
    int c = std::min(clips - 1, static_cast<int>(times[static_cast<size_t>(i)] / clip_len_s));
    sums[static_cast<size_t>(c)] += static_cast<double>(frame_saliency(i));
    counts[static_cast<size_t>(c)] += 1;
  }
  std::vector<double> out(static_cast<size_t>(clips));
  for (int c = 0; c < clips; ++c) {
    if (counts[static_cast<size_t>(c)] > 0) {
      out[static_cast<size_t>(c)] = sums[static_cast<size_t>(c)] / counts[static_cast<size_t>(c)];
    } else {
      const double center = (c + 0.5) * clip_len_s;
      int best = 0;
      for (int i = 1; i < n; ++i) {
        if (std::abs(times[static_cast<size_t>(i)] - center) <
            std::abs(times[static_cast<size_t>(best)] - center)) {
          best = i;
        }
      }
      out[static_cast<size_t>(c)] = static_cast<double>(frame_saliency(best));
    }
  }
  return out;
}

}  // namespace vtg
