// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "vtg/backbone.hpp"
#include "vtg/compress.hpp"
#include "vtg/dataset.hpp"
#include "vtg/temporal_head.hpp"
#include "vtg/tokenizer.hpp"
#include "vtg/trainer.hpp"

namespace vtg {

enum class Perturbation { none, shuffle_video, blank_video };

inline Perturbation perturbation_from_string(const std::string& s) {
  if (s == "none") return Perturbation::none;
  if (s == "shuffle") return Perturbation::shuffle_video;
  if (s == "blank") return Perturbation::blank_video;
  throw Error(ErrorCategory::config, "unknown perturbation: " + s);
}

inline const char* to_string(Perturbation p) {
  switch (p) {
    case Perturbation::none: return "none";
    case Perturbation::shuffle_video: return "shuffle";
    case Perturbation::blank_video: return "blank";
  }
  return "none";
}

// Frame-level input perturbations for the bias diagnostic. Shuffle permutes
// frames with a seeded permutation; blank zeroes features (attention becomes
// uniform so the container stays valid).
inline FrameFeatureSet perturb_features(const FrameFeatureSet& f, Perturbation mode,
                                        uint64_t seed) {
  if (mode == Perturbation::none) return f;
  FrameFeatureSet out = f;
  if (mode == Perturbation::blank_video) {
    out.cls.setZero();
    out.patches.setZero();
    out.attn.setConstant(1.0f / static_cast<float>(f.p));
    return out;
  }
  std::vector<int> perm(static_cast<size_t>(f.n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng(seed).shuffle(perm);
  for (int i = 0; i < f.n; ++i) {
    const int src = perm[static_cast<size_t>(i)];
    out.cls.row(i) = f.cls.row(src);
    out.attn.row(i) = f.attn.row(src);
    out.patches.middleRows(static_cast<Eigen::Index>(i) * f.p, f.p) =
        f.patches.middleRows(static_cast<Eigen::Index>(src) * f.p, f.p);
  }
  return out;
}

// A trained checkpoint ready for inference.
struct ModelBundle {
  RunConfig cfg;
  Tokenizer tok;
  Model<float> model;
  TemporalHead<float> head;

  static ModelBundle load(const std::filesystem::path& dir) {
    std::ifstream is(dir / "config.json");
    if (!is) throw Error(ErrorCategory::data, "missing checkpoint config: " + dir.string());
    nlohmann::json meta;
    is >> meta;
    RunConfig cfg = RunConfig::from_json(meta.at("run"));
    Tokenizer tok = Tokenizer::load(dir / "vocab.json");
    ModelConfig mc = cfg.model;
    mc.vocab = tok.vocab_size();
    HeadConfig hc = cfg.head;
    hc.d = mc.d;
    ModelBundle bundle{cfg, std::move(tok), Model<float>(mc), TemporalHead<float>(hc)};
    bundle.model.load_params(dir / "params");
    for (auto& p : bundle.head.params()) {
      *p.tensor = load_matrix<float>(dir / "params" / (p.name + ".bin"));
    }
    return bundle;
  }
};

struct Prediction {
  std::vector<Segment> segments;  // ranked, frame units
  Vecf frame_saliency;            // indicator probabilities (empty for ablation)
  std::string response;
  int loc_count = 0;
  bool fallback = false;  // no usable localization signal in the response
};

namespace detail {

inline std::optional<Segment> parse_text_timestamps(const std::string& text, int n_frames) {
  static const std::regex kPattern(R"(frames\s+(\d+)\s+to\s+(\d+))");
  std::smatch match;
  if (!std::regex_search(text, match, kPattern)) return std::nullopt;
  double s = std::stod(match[1].str());
  double e = std::stod(match[2].str());
  s = std::clamp(s, 0.0, static_cast<double>(n_frames - 1));
  e = std::clamp(e, 0.0, static_cast<double>(n_frames - 1));
  if (e < s) std::swap(s, e);
  return Segment{s, e, 1.0};
}

}  // namespace detail

// Grounding inference for one example: build the prompt stream, decode
// greedily, then either hand the first <LOC> hidden state to the temporal
// head or (ablation path) parse literal timestamps out of the response.
inline Prediction predict(ModelBundle& bundle, const TrainExample& ex,
                          const FrameFeatureSet& feats, int top_k = 1) {
  Prediction pred;
  const Matf t_tokens = feats.cls;
  CompressResult comp = compress(feats, bundle.cfg.compress);
  const std::vector<int> prompt_ids = bundle.tok.encode(ex.prompt);
  TokenStream<float> stream = bundle.model.make_stream(t_tokens, comp.s_tokens, prompt_ids);

  auto gen = bundle.model.generate(stream, bundle.tok.eos_id(), bundle.cfg.max_response_len);
  pred.response = bundle.tok.decode(gen.ids);
  pred.loc_count = static_cast<int>(gen.loc_hidden.rows());

  const int n = feats.n;
  if (bundle.cfg.use_temporal_head) {
    if (gen.loc_hidden.rows() == 0) {
      pred.fallback = true;
      pred.segments = {Segment{0.0, static_cast<double>(n - 1), 0.0}};
      return pred;
    }
    const Matf x_t = gen.hidden.topRows(n);
    const Matf h = gen.loc_hidden.row(0);
    auto cache = bundle.head.forward(x_t, h);
    pred.frame_saliency = saliency(cache.probs);
    pred.segments = decode_segments<float>(cache.probs, cache.offsets, top_k);
    return pred;
  }

  const auto parsed = detail::parse_text_timestamps(pred.response, n);
  if (!parsed) {
    pred.fallback = true;
    pred.segments = {Segment{0.0, static_cast<double>(n - 1), 0.0}};
    return pred;
  }
  pred.segments = {*parsed};
  return pred;
}

// Dense-captioning inference: one top-1 segment per emitted <LOC>, in
// emission order. The ablation path parses every "frames A to B" span.
inline Prediction predict_multi(ModelBundle& bundle, const TrainExample& ex,
                                const FrameFeatureSet& feats) {
  Prediction pred;
  const Matf t_tokens = feats.cls;
  CompressResult comp = compress(feats, bundle.cfg.compress);
  const std::vector<int> prompt_ids = bundle.tok.encode(ex.prompt);
  TokenStream<float> stream = bundle.model.make_stream(t_tokens, comp.s_tokens, prompt_ids);
  auto gen = bundle.model.generate(stream, bundle.tok.eos_id(), bundle.cfg.max_response_len);
  pred.response = bundle.tok.decode(gen.ids);
  pred.loc_count = static_cast<int>(gen.loc_hidden.rows());

  const int n = feats.n;
  if (bundle.cfg.use_temporal_head) {
    const Matf x_t = gen.hidden.topRows(n);
    for (Eigen::Index li = 0; li < gen.loc_hidden.rows(); ++li) {
      auto cache = bundle.head.forward(x_t, gen.loc_hidden.row(li));
      auto segs = decode_segments<float>(cache.probs, cache.offsets, 1);
      if (!segs.empty()) pred.segments.push_back(segs[0]);
      if (li == 0) pred.frame_saliency = saliency(cache.probs);
    }
    return pred;
  }

  std::string rest = pred.response;
  static const std::regex kPattern(R"(frames\s+(\d+)\s+to\s+(\d+))");
  std::smatch match;
  while (std::regex_search(rest, match, kPattern)) {
    double s = std::clamp(std::stod(match[1].str()), 0.0, static_cast<double>(n - 1));
    double e = std::clamp(std::stod(match[2].str()), 0.0, static_cast<double>(n - 1));
    if (e < s) std::swap(s, e);
    pred.segments.push_back(Segment{s, e, 1.0});
    rest = match.suffix();
  }
  pred.loc_count = static_cast<int>(pred.segments.size());
  if (pred.segments.empty()) pred.fallback = true;
  return pred;
}

// VQA inference: the generated response is the answer text.
inline std::string answer_question(ModelBundle& bundle, const TrainExample& ex,
                                   const FrameFeatureSet& feats) {
  const Matf t_tokens = feats.cls;
  CompressResult comp = compress(feats, bundle.cfg.compress);
  const std::vector<int> prompt_ids = bundle.tok.encode(ex.prompt);
  TokenStream<float> stream = bundle.model.make_stream(t_tokens, comp.s_tokens, prompt_ids);
  auto gen = bundle.model.generate(stream, bundle.tok.eos_id(), bundle.cfg.max_response_len);
  return bundle.tok.decode(gen.ids);
}

}  // namespace vtg
