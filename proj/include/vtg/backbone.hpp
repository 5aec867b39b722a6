// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtg/common.hpp"
#include "vtg/tensor_io.hpp"

namespace vtg {

enum class Role : uint8_t { T, S, Text, Loc };

// Rank split between the two experts. The overall rank budget is fixed;
// alpha_split moves rank from the spatial to the temporal adapter.
struct DualAdapterConfig {
  int total_rank = 64;
  double alpha_split = 0.5;
  double lora_alpha = 64.0;

  int temporal_rank() const { return static_cast<int>(std::lround(total_rank * alpha_split)); }
  int spatial_rank() const { return total_rank - temporal_rank(); }
};

struct ModelConfig {
  int n_layers = 4;
  int d = 128;
  int n_heads = 4;
  int context = 1024;
  int mlp_hidden = 256;
  int feat_dim = 64;
  int vocab = 0;  // includes <LOC>, which is always the last id
  DualAdapterConfig adapter;
  bool adapt_q = true;
  bool adapt_k = false;
  bool adapt_v = true;
  bool adapt_o = false;
  bool adapt_mlp = false;
  bool train_gphi = true;
  uint64_t init_seed = 1;

  int loc_id() const { return vocab - 1; }
  int head_dim() const { return d / n_heads; }

  nlohmann::json to_json() const {
    return {{"n_layers", n_layers},
            {"d", d},
            {"n_heads", n_heads},
            {"context", context},
            {"mlp_hidden", mlp_hidden},
            {"feat_dim", feat_dim},
            {"vocab", vocab},
            {"adapter",
             {{"total_rank", adapter.total_rank},
              {"alpha_split", adapter.alpha_split},
              {"lora_alpha", adapter.lora_alpha}}},
            {"adapt_q", adapt_q},
            {"adapt_k", adapt_k},
            {"adapt_v", adapt_v},
            {"adapt_o", adapt_o},
            {"adapt_mlp", adapt_mlp},
            {"train_gphi", train_gphi},
            {"init_seed", init_seed}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_layers = j.at("n_layers").get<int>();
    c.d = j.at("d").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.context = j.at("context").get<int>();
    c.mlp_hidden = j.at("mlp_hidden").get<int>();
    c.feat_dim = j.at("feat_dim").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.adapter.total_rank = j.at("adapter").at("total_rank").get<int>();
    c.adapter.alpha_split = j.at("adapter").at("alpha_split").get<double>();
    c.adapter.lora_alpha = j.at("adapter").at("lora_alpha").get<double>();
    c.adapt_q = j.at("adapt_q").get<bool>();
    c.adapt_k = j.at("adapt_k").get<bool>();
    c.adapt_v = j.at("adapt_v").get<bool>();
    c.adapt_o = j.at("adapt_o").get<bool>();
    c.adapt_mlp = j.at("adapt_mlp").get<bool>();
    c.train_gphi = j.at("train_gphi").get<bool>();
    c.init_seed = j.at("init_seed").get<uint64_t>();
    return c;
  }
};

// Input sequence for the decoder: row-per-token embeddings with role tags.
// T positions form a contiguous prefix, then S positions, then text.
template <class S>
struct TokenStream {
  Mat<S> embeddings;          // [L x d]
  std::vector<Role> roles;    // length L
  std::vector<int> token_ids;  // -1 at visual positions
  Mat<S> raw_visual;          // [(n_t+n_s) x feat_dim], kept for the adapter backward
  int n_t = 0;
  int n_s = 0;

  int length() const { return static_cast<int>(embeddings.rows()); }

  void validate() const {
    const int L = length();
    if (static_cast<int>(roles.size()) != L || static_cast<int>(token_ids.size()) != L) {
      throw Error(ErrorCategory::data, "stream roles/ids do not match embedding rows");
    }
    for (int i = 0; i < L; ++i) {
      const Role r = roles[static_cast<size_t>(i)];
      if (i < n_t && r != Role::T) throw Error(ErrorCategory::data, "T prefix violated");
      if (i >= n_t && i < n_t + n_s && r != Role::S)
        throw Error(ErrorCategory::data, "S block violated");
      if (i >= n_t + n_s && (r == Role::T || r == Role::S))
        throw Error(ErrorCategory::data, "visual role found in text block");
    }
  }
};

// One expert pair of low-rank factors for a base projection W [out x in].
// Delta weights are B*A scaled by lora_alpha/rank; rank 0 disables an expert.
template <class S>
struct Adapter {
  bool active = false;
  Mat<S> a_t, b_t;  // [r_t x in], [out x r_t]
  Mat<S> a_s, b_s;  // [r_s x in], [out x r_s]
  S scale_t = S(0);
  S scale_s = S(0);

  void init(int out, int in, const DualAdapterConfig& cfg, Rng& rng) {
    active = true;
    const int rt = cfg.temporal_rank();
    const int rs = cfg.spatial_rank();
    const double sa = 1.0 / std::sqrt(static_cast<double>(in));
    a_t.resize(rt, in);
    b_t = Mat<S>::Zero(out, rt);
    for (Eigen::Index i = 0; i < a_t.size(); ++i)
      a_t.data()[i] = static_cast<S>(rng.normal(0.0, sa));
    a_s.resize(rs, in);
    b_s = Mat<S>::Zero(out, rs);
    for (Eigen::Index i = 0; i < a_s.size(); ++i)
      a_s.data()[i] = static_cast<S>(rng.normal(0.0, sa));
    scale_t = rt > 0 ? static_cast<S>(cfg.lora_alpha / rt) : S(0);
    scale_s = rs > 0 ? static_cast<S>(cfg.lora_alpha / rs) : S(0);
  }
};

template <class S>
struct AdapterGrad {
  Mat<S> a_t, b_t, a_s, b_s;

  void init_like(const Adapter<S>& a) {
    a_t = Mat<S>::Zero(a.a_t.rows(), a.a_t.cols());
    b_t = Mat<S>::Zero(a.b_t.rows(), a.b_t.cols());
    a_s = Mat<S>::Zero(a.a_s.rows(), a.a_s.cols());
    b_s = Mat<S>::Zero(a.b_s.rows(), a.b_s.cols());
  }
};

// Row routing for the two experts, derived from role tags: the temporal
// adapter sees T rows only, the spatial adapter sees S and text rows
// (<LOC> is a text row for routing purposes).
struct RoutedRows {
  std::vector<int> t_rows;
  std::vector<int> s_rows;

  static RoutedRows from_roles(const std::vector<Role>& roles) {
    RoutedRows r;
    for (size_t i = 0; i < roles.size(); ++i) {
      if (roles[i] == Role::T) {
        r.t_rows.push_back(static_cast<int>(i));
      } else {
        r.s_rows.push_back(static_cast<int>(i));
      }
    }
    return r;
  }
};

namespace detail {

template <class S>
Mat<S> gather_rows(const Mat<S>& x, const std::vector<int>& rows) {
  Mat<S> out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

template <class S>
void scatter_add_rows(Mat<S>& x, const std::vector<int>& rows, const Mat<S>& values) {
  for (size_t i = 0; i < rows.size(); ++i) x.row(rows[i]) += values.row(static_cast<Eigen::Index>(i));
}

}  // namespace detail

// y = x W^T everywhere, plus the temporal delta at T rows and the spatial
// delta at the remaining rows. Rows outside an expert's route are not touched
// by that expert's parameters at all, which keeps the isolation bitwise.
template <class S>
Mat<S> dual_lora_forward(const Mat<S>& x, const Mat<S>& w, const Adapter<S>& ad,
                         const RoutedRows& routed) {
  Mat<S> y(x.rows(), w.rows());
  y.noalias() = x * w.transpose();
  if (!ad.active) return y;
  if (ad.a_t.rows() > 0 && !routed.t_rows.empty()) {
    Mat<S> xt = detail::gather_rows(x, routed.t_rows);
    Mat<S> yt = (xt * ad.a_t.transpose()) * ad.b_t.transpose() * ad.scale_t;
    detail::scatter_add_rows(y, routed.t_rows, yt);
  }
  if (ad.a_s.rows() > 0 && !routed.s_rows.empty()) {
    Mat<S> xs = detail::gather_rows(x, routed.s_rows);
    Mat<S> ys = (xs * ad.a_s.transpose()) * ad.b_s.transpose() * ad.scale_s;
    detail::scatter_add_rows(y, routed.s_rows, ys);
  }
  return y;
}

// Spec-facing form: route by per-row role tags.
template <class S>
Mat<S> dual_lora_linear(const Mat<S>& x, const std::vector<Role>& roles, const Mat<S>& w,
                        const Adapter<S>& ad) {
  if (static_cast<Eigen::Index>(roles.size()) != x.rows()) {
    throw Error(ErrorCategory::data, "roles do not align with input rows");
  }
  return dual_lora_forward(x, w, ad, RoutedRows::from_roles(roles));
}

// Backward: accumulates dx and, when grads is non-null, adapter factor grads.
// Base weights receive no gradient (frozen).
template <class S>
void dual_lora_backward(const Mat<S>& dy, const Mat<S>& x, const Mat<S>& w, const Adapter<S>& ad,
                        const RoutedRows& routed, Mat<S>& dx_accum, AdapterGrad<S>* grads) {
  dx_accum.noalias() += dy * w;
  if (!ad.active) return;
  if (ad.a_t.rows() > 0 && !routed.t_rows.empty()) {
    Mat<S> xt = detail::gather_rows(x, routed.t_rows);
    Mat<S> dyt = detail::gather_rows(dy, routed.t_rows);
    Mat<S> z = xt * ad.a_t.transpose();              // [nt x r]
    Mat<S> dz = (dyt * ad.b_t) * ad.scale_t;         // [nt x r]
    if (grads) {
      grads->a_t.noalias() += dz.transpose() * xt;
      grads->b_t.noalias() += (dyt.transpose() * z) * ad.scale_t;
    }
    Mat<S> dxt = dz * ad.a_t;
    detail::scatter_add_rows(dx_accum, routed.t_rows, dxt);
  }
  if (ad.a_s.rows() > 0 && !routed.s_rows.empty()) {
    Mat<S> xs = detail::gather_rows(x, routed.s_rows);
    Mat<S> dys = detail::gather_rows(dy, routed.s_rows);
    Mat<S> z = xs * ad.a_s.transpose();
    Mat<S> dz = (dys * ad.b_s) * ad.scale_s;
    if (grads) {
      grads->a_s.noalias() += dz.transpose() * xs;
      grads->b_s.noalias() += (dys.transpose() * z) * ad.scale_s;
    }
    Mat<S> dxs = dz * ad.a_s;
    detail::scatter_add_rows(dx_accum, routed.s_rows, dxs);
  }
}

namespace detail {

template <class S>
void rmsnorm_forward(const Mat<S>& x, Mat<S>& y, Vec<S>& inv_rms) {
  const S eps = static_cast<S>(1e-6);
  inv_rms.resize(x.rows());
  y.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S ms = x.row(i).squaredNorm() / static_cast<S>(x.cols());
    inv_rms(i) = S(1) / std::sqrt(ms + eps);
    y.row(i) = x.row(i) * inv_rms(i);
  }
}

template <class S>
void rmsnorm_backward(const Mat<S>& dy, const Mat<S>& y, const Vec<S>& inv_rms, Mat<S>& dx_accum) {
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const S dot = dy.row(i).dot(y.row(i)) / static_cast<S>(dy.cols());
    dx_accum.row(i) += (dy.row(i) - y.row(i) * dot) * inv_rms(i);
  }
}

template <class S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x / std::sqrt(S(2))));
}

template <class S>
S gelu_grad(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x / std::sqrt(S(2))));
  const S pdf = std::exp(-x * x / S(2)) / std::sqrt(S(2) * static_cast<S>(M_PI));
  return cdf + x * pdf;
}

}  // namespace detail

template <class S>
struct LayerCache {
  Mat<S> x_in;      // residual stream at layer entry
  Mat<S> ln1_out;   // attention branch input
  Vec<S> inv1;
  Mat<S> q, k, v;   // post-adapter projections
  std::vector<Mat<S>> probs;  // per-head [L x L] causal softmax
  Mat<S> att;       // concatenated head outputs
  Mat<S> x_mid;     // after attention residual
  Mat<S> ln2_out;
  Vec<S> inv2;
  Mat<S> h_pre;     // MLP pre-activation
  Mat<S> h_act;
};

template <class S>
struct ForwardCache {
  RoutedRows routed;
  Mat<S> x0;  // embeddings + positions
  std::vector<LayerCache<S>> layers;
  Mat<S> final_in;
  Mat<S> hidden;  // final RMS-normed states, rows feed both logits and the head
  Vec<S> inv_final;
  Mat<S> logits;  // empty unless requested
};

enum class LogitsMode { none, all };

template <class S>
struct ModelGrads {
  std::vector<std::array<AdapterGrad<S>, 6>> layers;  // q, k, v, o, mlp1, mlp2
  Mat<S> gphi_w, gphi_b;
  Mat<S> loc_emb;
};

template <class S>
class Model {
 public:
  struct Layer {
    Mat<S> wq, wk, wv, wo;  // [d x d]
    Mat<S> w1;              // [mlp x d]
    Mat<S> w2;              // [d x mlp]
    Adapter<S> aq, ak, av, ao, a1, a2;
  };

  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.vocab < 2) throw Error(ErrorCategory::config, "vocab must include <LOC> and a base token");
    if (cfg.d % cfg.n_heads != 0) throw Error(ErrorCategory::config, "d must divide by n_heads");
    // Separate init streams so the frozen base is identical across adapter
    // configurations with the same seed.
    Rng base_rng = Rng(cfg.init_seed).fork(1);
    Rng adapter_rng = Rng(cfg.init_seed).fork(2);
    const int d = cfg.d;

    embed_base_ = gaussian(cfg.vocab - 1, d, 0.1, base_rng);
    loc_emb_ = embed_base_.colwise().mean();  // mean of base vocab rows
    pos_ = sinusoidal(cfg.context, d);
    gphi_w_ =
        gaussian(d, cfg.feat_dim, 1.0 / std::sqrt(static_cast<double>(cfg.feat_dim)), base_rng);
    gphi_b_ = Mat<S>::Zero(1, d);

    layers_.resize(static_cast<size_t>(cfg.n_layers));
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    const double sm = 1.0 / std::sqrt(static_cast<double>(cfg.mlp_hidden));
    for (auto& layer : layers_) {
      layer.wq = gaussian(d, d, sd, base_rng);
      layer.wk = gaussian(d, d, sd, base_rng);
      layer.wv = gaussian(d, d, sd, base_rng);
      layer.wo = gaussian(d, d, sd, base_rng);
      layer.w1 = gaussian(cfg.mlp_hidden, d, sd, base_rng);
      layer.w2 = gaussian(d, cfg.mlp_hidden, sm, base_rng);
      if (cfg.adapt_q) layer.aq.init(d, d, cfg.adapter, adapter_rng);
      if (cfg.adapt_k) layer.ak.init(d, d, cfg.adapter, adapter_rng);
      if (cfg.adapt_v) layer.av.init(d, d, cfg.adapter, adapter_rng);
      if (cfg.adapt_o) layer.ao.init(d, d, cfg.adapter, adapter_rng);
      if (cfg.adapt_mlp) {
        layer.a1.init(cfg.mlp_hidden, d, cfg.adapter, adapter_rng);
        layer.a2.init(d, cfg.mlp_hidden, cfg.adapter, adapter_rng);
      }
    }
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  Mat<S>& loc_embedding() { return loc_emb_; }
  const Mat<S>& loc_embedding() const { return loc_emb_; }
  const Mat<S>& base_embedding() const { return embed_base_; }
  const Mat<S>& pos_embedding() const { return pos_; }
  Mat<S>& gphi_w() { return gphi_w_; }
  Mat<S>& gphi_b() { return gphi_b_; }

  // Eq.-5 style shared affine map for both visual token families.
  Mat<S> project_visual(const Mat<S>& t_tokens, const Mat<S>& s_tokens) const {
    if ((t_tokens.rows() > 0 && t_tokens.cols() != cfg_.feat_dim) ||
        (s_tokens.rows() > 0 && s_tokens.cols() != cfg_.feat_dim)) {
      throw Error(ErrorCategory::data, "visual feature width does not match feat_dim");
    }
    Mat<S> out(t_tokens.rows() + s_tokens.rows(), cfg_.d);
    if (t_tokens.rows() > 0) {
      out.topRows(t_tokens.rows()).noalias() = t_tokens * gphi_w_.transpose();
    }
    if (s_tokens.rows() > 0) {
      out.bottomRows(s_tokens.rows()).noalias() = s_tokens * gphi_w_.transpose();
    }
    out.rowwise() += gphi_b_.row(0);
    return out;
  }

  Mat<S> token_embedding(int id) const {
    if (id == cfg_.loc_id()) return loc_emb_;
    if (id < 0 || id >= cfg_.vocab - 1) {
      throw Error(ErrorCategory::data, "token id out of range: " + std::to_string(id));
    }
    return embed_base_.row(id);
  }

  TokenStream<S> make_stream(const Mat<S>& t_tokens, const Mat<S>& s_tokens,
                             const std::vector<int>& text_ids) const {
    TokenStream<S> stream;
    stream.n_t = static_cast<int>(t_tokens.rows());
    stream.n_s = static_cast<int>(s_tokens.rows());
    const int L = stream.n_t + stream.n_s + static_cast<int>(text_ids.size());
    stream.embeddings.resize(L, cfg_.d);
    stream.embeddings.topRows(stream.n_t + stream.n_s) = project_visual(t_tokens, s_tokens);
    stream.raw_visual.resize(stream.n_t + stream.n_s, cfg_.feat_dim);
    stream.raw_visual.topRows(stream.n_t) = t_tokens;
    stream.raw_visual.bottomRows(stream.n_s) = s_tokens;
    stream.roles.assign(static_cast<size_t>(L), Role::Text);
    stream.token_ids.assign(static_cast<size_t>(L), -1);
    for (int i = 0; i < stream.n_t; ++i) stream.roles[static_cast<size_t>(i)] = Role::T;
    for (int i = stream.n_t; i < stream.n_t + stream.n_s; ++i)
      stream.roles[static_cast<size_t>(i)] = Role::S;
    for (size_t t = 0; t < text_ids.size(); ++t) {
      const int pos = stream.n_t + stream.n_s + static_cast<int>(t);
      const int id = text_ids[t];
      stream.embeddings.row(pos) = token_embedding(id);
      stream.token_ids[static_cast<size_t>(pos)] = id;
      if (id == cfg_.loc_id()) stream.roles[static_cast<size_t>(pos)] = Role::Loc;
    }
    stream.validate();
    return stream;
  }

  void append_token(TokenStream<S>& stream, int id) const {
    const Eigen::Index L = stream.embeddings.rows();
    stream.embeddings.conservativeResize(L + 1, cfg_.d);
    stream.embeddings.row(L) = token_embedding(id);
    stream.roles.push_back(id == cfg_.loc_id() ? Role::Loc : Role::Text);
    stream.token_ids.push_back(id);
  }

  ForwardCache<S> forward(const TokenStream<S>& stream, LogitsMode logits_mode) const {
    const int L = stream.length();
    if (L > cfg_.context) {
      throw Error(ErrorCategory::data, "stream length exceeds model context");
    }
    const int d = cfg_.d;
    const int H = cfg_.n_heads;
    const int hd = cfg_.head_dim();
    const S alpha = S(1) / std::sqrt(static_cast<S>(hd));

    ForwardCache<S> cache;
    cache.routed = RoutedRows::from_roles(stream.roles);
    cache.x0 = stream.embeddings + pos_.topRows(L);

    Mat<S> x = cache.x0;
    cache.layers.resize(static_cast<size_t>(cfg_.n_layers));
    for (int li = 0; li < cfg_.n_layers; ++li) {
      const Layer& layer = layers_[static_cast<size_t>(li)];
      LayerCache<S>& lc = cache.layers[static_cast<size_t>(li)];
      lc.x_in = x;
      detail::rmsnorm_forward(x, lc.ln1_out, lc.inv1);
      lc.q = dual_lora_forward(lc.ln1_out, layer.wq, layer.aq, cache.routed);
      lc.k = dual_lora_forward(lc.ln1_out, layer.wk, layer.ak, cache.routed);
      lc.v = dual_lora_forward(lc.ln1_out, layer.wv, layer.av, cache.routed);

      lc.att.resize(L, d);
      lc.probs.resize(static_cast<size_t>(H));
      for (int h = 0; h < H; ++h) {
        auto qh = lc.q.middleCols(h * hd, hd);
        auto kh = lc.k.middleCols(h * hd, hd);
        auto vh = lc.v.middleCols(h * hd, hd);
        Mat<S>& probs = lc.probs[static_cast<size_t>(h)];
        probs.resize(L, L);
        probs.noalias() = qh * kh.transpose() * alpha;
        for (int i = 0; i < L; ++i) {
          auto row = probs.row(i);
          S mx = row(0);
          for (int j = 1; j <= i; ++j) mx = std::max(mx, row(j));
          S sum = S(0);
          for (int j = 0; j <= i; ++j) {
            row(j) = std::exp(row(j) - mx);
            sum += row(j);
          }
          for (int j = 0; j <= i; ++j) row(j) /= sum;
          for (int j = i + 1; j < L; ++j) row(j) = S(0);
        }
        lc.att.middleCols(h * hd, hd).noalias() = probs * vh;
      }

      Mat<S> o = dual_lora_forward(lc.att, layer.wo, layer.ao, cache.routed);
      lc.x_mid = x + o;
      detail::rmsnorm_forward(lc.x_mid, lc.ln2_out, lc.inv2);
      lc.h_pre = dual_lora_forward(lc.ln2_out, layer.w1, layer.a1, cache.routed);
      lc.h_act = lc.h_pre.unaryExpr([](S v) { return detail::gelu(v); });
      Mat<S> mlp_out = dual_lora_forward(lc.h_act, layer.w2, layer.a2, cache.routed);
      x = lc.x_mid + mlp_out;
    }

    cache.final_in = x;
    detail::rmsnorm_forward(x, cache.hidden, cache.inv_final);
    if (logits_mode == LogitsMode::all) {
      cache.logits.resize(L, cfg_.vocab);
      cache.logits.leftCols(cfg_.vocab - 1).noalias() = cache.hidden * embed_base_.transpose();
      cache.logits.col(cfg_.vocab - 1).noalias() = cache.hidden * loc_emb_.row(0).transpose();
    }
    return cache;
  }

  // Logits for a single row of the final hidden state (greedy decoding path).
  Vec<S> logits_for(const Mat<S>& hidden, int row) const {
    Vec<S> out(cfg_.vocab);
    out.head(cfg_.vocab - 1).noalias() = embed_base_ * hidden.row(row).transpose();
    out(cfg_.vocab - 1) = hidden.row(row).dot(loc_emb_.row(0));
    return out;
  }

  ModelGrads<S> zero_grads() const {
    ModelGrads<S> g;
    g.layers.resize(static_cast<size_t>(cfg_.n_layers));
    for (int li = 0; li < cfg_.n_layers; ++li) {
      const Layer& layer = layers_[static_cast<size_t>(li)];
      const Adapter<S>* ads[6] = {&layer.aq, &layer.ak, &layer.av, &layer.ao, &layer.a1, &layer.a2};
      for (int p = 0; p < 6; ++p) {
        if (ads[p]->active) g.layers[static_cast<size_t>(li)][static_cast<size_t>(p)].init_like(*ads[p]);
      }
    }
    g.gphi_w = Mat<S>::Zero(gphi_w_.rows(), gphi_w_.cols());
    g.gphi_b = Mat<S>::Zero(1, cfg_.d);
    g.loc_emb = Mat<S>::Zero(1, cfg_.d);
    return g;
  }

  // Reverse pass. d_logits may be empty when no text loss applies; d_hidden
  // carries extra seeds on the final hidden states (temporal-head path).
  // Gradients accumulate into `grads`; frozen base parameters get none.
  void backward(const TokenStream<S>& stream, const ForwardCache<S>& cache, const Mat<S>& d_logits,
                const Mat<S>& d_hidden, ModelGrads<S>& grads) const {
    const int L = stream.length();
    const int d = cfg_.d;
    const int H = cfg_.n_heads;
    const int hd = cfg_.head_dim();
    const S alpha = S(1) / std::sqrt(static_cast<S>(hd));

    Mat<S> df = Mat<S>::Zero(L, d);
    if (d_hidden.size() > 0) df = d_hidden;
    if (d_logits.size() > 0) {
      df.noalias() += d_logits.leftCols(cfg_.vocab - 1) * embed_base_;
      df.noalias() += d_logits.col(cfg_.vocab - 1) * loc_emb_;
      grads.loc_emb.noalias() += d_logits.col(cfg_.vocab - 1).transpose() * cache.hidden;
    }

    Mat<S> dx = Mat<S>::Zero(L, d);
    detail::rmsnorm_backward(df, cache.hidden, cache.inv_final, dx);

    for (int li = cfg_.n_layers - 1; li >= 0; --li) {
      const Layer& layer = layers_[static_cast<size_t>(li)];
      const LayerCache<S>& lc = cache.layers[static_cast<size_t>(li)];
      auto& lg = grads.layers[static_cast<size_t>(li)];

      // MLP branch: x = x_mid + lora(gelu(lora(ln2_out)))
      Mat<S> dh_act = Mat<S>::Zero(L, cfg_.mlp_hidden);
      dual_lora_backward(dx, lc.h_act, layer.w2, layer.a2, cache.routed, dh_act,
                         layer.a2.active ? &lg[5] : nullptr);
      Mat<S> dh_pre =
          dh_act.binaryExpr(lc.h_pre, [](S g, S x) { return g * detail::gelu_grad(x); });
      Mat<S> dln2 = Mat<S>::Zero(L, d);
      dual_lora_backward(dh_pre, lc.ln2_out, layer.w1, layer.a1, cache.routed, dln2,
                         layer.a1.active ? &lg[4] : nullptr);
      Mat<S> dx_mid = dx;  // residual
      detail::rmsnorm_backward(dln2, lc.ln2_out, lc.inv2, dx_mid);

      // Attention branch: x_mid = x_in + lora(att)
      Mat<S> datt = Mat<S>::Zero(L, d);
      dual_lora_backward(dx_mid, lc.att, layer.wo, layer.ao, cache.routed, datt,
                         layer.ao.active ? &lg[3] : nullptr);

      Mat<S> dq = Mat<S>::Zero(L, d);
      Mat<S> dk = Mat<S>::Zero(L, d);
      Mat<S> dv = Mat<S>::Zero(L, d);
      for (int h = 0; h < H; ++h) {
        const Mat<S>& probs = lc.probs[static_cast<size_t>(h)];
        auto datt_h = datt.middleCols(h * hd, hd);
        auto vh = lc.v.middleCols(h * hd, hd);
        Mat<S> dprobs(L, L);
        dprobs.noalias() = datt_h * vh.transpose();
        dv.middleCols(h * hd, hd).noalias() += probs.transpose() * datt_h;
        // softmax backward, causal rows
        Mat<S> dscores = Mat<S>::Zero(L, L);
        for (int i = 0; i < L; ++i) {
          S dot = S(0);
          for (int j = 0; j <= i; ++j) dot += dprobs(i, j) * probs(i, j);
          for (int j = 0; j <= i; ++j) dscores(i, j) = probs(i, j) * (dprobs(i, j) - dot);
        }
        auto qh = lc.q.middleCols(h * hd, hd);
        auto kh = lc.k.middleCols(h * hd, hd);
        dq.middleCols(h * hd, hd).noalias() += dscores * kh * alpha;
        dk.middleCols(h * hd, hd).noalias() += dscores.transpose() * qh * alpha;
      }

      Mat<S> dln1 = Mat<S>::Zero(L, d);
      dual_lora_backward(dq, lc.ln1_out, layer.wq, layer.aq, cache.routed, dln1,
                         layer.aq.active ? &lg[0] : nullptr);
      dual_lora_backward(dk, lc.ln1_out, layer.wk, layer.ak, cache.routed, dln1,
                         layer.ak.active ? &lg[1] : nullptr);
      dual_lora_backward(dv, lc.ln1_out, layer.wv, layer.av, cache.routed, dln1,
                         layer.av.active ? &lg[2] : nullptr);

      Mat<S> dx_in = dx_mid;  // residual
      detail::rmsnorm_backward(dln1, lc.ln1_out, lc.inv1, dx_in);
      dx = std::move(dx_in);
    }

    // Embedding backward: visual rows feed the vision-language adapter, text
    // rows feed only the trainable <LOC> row.
    const int n_vis = stream.n_t + stream.n_s;
    if (n_vis > 0) {
      grads.gphi_w.noalias() += dx.topRows(n_vis).transpose() * stream.raw_visual;
      grads.gphi_b.noalias() += dx.topRows(n_vis).colwise().sum();
    }
    for (int i = n_vis; i < L; ++i) {
      if (stream.token_ids[static_cast<size_t>(i)] == cfg_.loc_id()) {
        grads.loc_emb.row(0) += dx.row(i);
      }
    }
  }

  struct GenerateResult {
    std::vector<int> ids;      // generated tokens (without the prompt)
    Mat<S> loc_hidden;         // one row per emitted <LOC>, emission order
    Mat<S> hidden;             // final hidden states of the full sequence
    bool truncated = false;
  };

  // Greedy decoding. <LOC> hidden states are read from a final pass over the
  // complete sequence; causal masking makes them identical to the states seen
  // at emission time.
  GenerateResult generate(const TokenStream<S>& prompt_stream, int eos_id,
                          int max_len = 512) const {
    TokenStream<S> stream = prompt_stream;
    GenerateResult result;
    for (int step = 0; step < max_len; ++step) {
      if (stream.length() >= cfg_.context) {
        result.truncated = true;
        break;
      }
      ForwardCache<S> cache = forward(stream, LogitsMode::none);
      Vec<S> logits = logits_for(cache.hidden, stream.length() - 1);
      int best = 0;
      for (int v = 1; v < cfg_.vocab; ++v) {
        if (logits(v) > logits(best)) best = v;
      }
      result.ids.push_back(best);
      append_token(stream, best);
      if (best == eos_id) break;
    }
    if (!result.ids.empty() && result.ids.back() != eos_id && !result.truncated) {
      result.truncated = true;  // ran out of max_len
    }
    ForwardCache<S> cache = forward(stream, LogitsMode::none);
    result.hidden = cache.hidden;
    std::vector<int> loc_rows;
    for (int i = 0; i < stream.length(); ++i) {
      if (stream.token_ids[static_cast<size_t>(i)] == cfg_.loc_id()) loc_rows.push_back(i);
    }
    result.loc_hidden.resize(static_cast<Eigen::Index>(loc_rows.size()), cfg_.d);
    for (size_t i = 0; i < loc_rows.size(); ++i) {
      result.loc_hidden.row(static_cast<Eigen::Index>(i)) = cache.hidden.row(loc_rows[i]);
    }
    return result;
  }

  // Named parameter registry; order is the checkpoint and optimizer layout.
  struct ParamRef {
    std::string name;
    Mat<S>* tensor;
    bool trainable;
  };

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    out.push_back({"embed.base", &embed_base_, false});
    out.push_back({"embed.loc", &loc_emb_, true});
    out.push_back({"embed.pos", &pos_, false});
    out.push_back({"gphi.w", &gphi_w_, cfg_.train_gphi});
    out.push_back({"gphi.b", &gphi_b_, cfg_.train_gphi});
    for (int li = 0; li < cfg_.n_layers; ++li) {
      Layer& layer = layers_[static_cast<size_t>(li)];
      const std::string prefix = "layer" + std::to_string(li) + ".";
      out.push_back({prefix + "wq", &layer.wq, false});
      out.push_back({prefix + "wk", &layer.wk, false});
      out.push_back({prefix + "wv", &layer.wv, false});
      out.push_back({prefix + "wo", &layer.wo, false});
      out.push_back({prefix + "w1", &layer.w1, false});
      out.push_back({prefix + "w2", &layer.w2, false});
      Adapter<S>* ads[6] = {&layer.aq, &layer.ak, &layer.av, &layer.ao, &layer.a1, &layer.a2};
      const char* names[6] = {"q", "k", "v", "o", "mlp1", "mlp2"};
      for (int p = 0; p < 6; ++p) {
        if (!ads[p]->active) continue;
        const std::string ap = prefix + names[p] + ".";
        if (ads[p]->a_t.rows() > 0) {
          out.push_back({ap + "at", &ads[p]->a_t, true});
          out.push_back({ap + "bt", &ads[p]->b_t, true});
        }
        if (ads[p]->a_s.rows() > 0) {
          out.push_back({ap + "as", &ads[p]->a_s, true});
          out.push_back({ap + "bs", &ads[p]->b_s, true});
        }
      }
    }
    return out;
  }

  // Flattened trainable gradients in the same order as trainable params().
  static void collect_grads(const ModelConfig& cfg, ModelGrads<S>& g, std::vector<Mat<S>*>& out,
                            bool train_gphi) {
    out.push_back(&g.loc_emb);
    if (train_gphi) {
      out.push_back(&g.gphi_w);
      out.push_back(&g.gphi_b);
    }
    for (auto& layer : g.layers) {
      for (auto& ag : layer) {
        if (ag.a_t.size() > 0 || ag.b_t.size() > 0 || ag.a_s.size() > 0 || ag.b_s.size() > 0) {
          if (ag.a_t.rows() > 0) {
            out.push_back(&ag.a_t);
            out.push_back(&ag.b_t);
          }
          if (ag.a_s.rows() > 0) {
            out.push_back(&ag.a_s);
            out.push_back(&ag.b_s);
          }
        }
      }
    }
    (void)cfg;
  }

  void save_params(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& p : params()) {
      save_matrix(dir / (p.name + ".bin"), *p.tensor);
    }
  }

  void load_params(const std::filesystem::path& dir) {
    for (const auto& p : params()) {
      *p.tensor = load_matrix<S>(dir / (p.name + ".bin"));
    }
  }

 private:
  static Mat<S> gaussian(Eigen::Index rows, Eigen::Index cols, double sigma, Rng& rng) {
    Mat<S> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.normal(0.0, sigma));
    return m;
  }

  static Mat<S> sinusoidal(int context, int d) {
    Mat<S> p(context, d);
    for (int pos = 0; pos < context; ++pos) {
      for (int i = 0; i < d; i += 2) {
        const double rate = std::pow(10000.0, -static_cast<double>(i) / d);
        p(pos, i) = static_cast<S>(0.2 * std::sin(pos * rate));
        if (i + 1 < d) p(pos, i + 1) = static_cast<S>(0.2 * std::cos(pos * rate));
      }
    }
    return p;
  }

  ModelConfig cfg_;
  Mat<S> embed_base_;  // [vocab-1 x d], frozen
  Mat<S> loc_emb_;     // [1 x d], trainable
  Mat<S> pos_;         // [context x d], frozen
  Mat<S> gphi_w_;      // [d x feat_dim]
  Mat<S> gphi_b_;      // [1 x d]
  std::vector<Layer> layers_;
};

}  // namespace vtg
