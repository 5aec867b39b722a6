// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vtg/dataset.hpp"
#include "vtg/inference.hpp"
#include "vtg/metrics.hpp"

namespace vtg {

inline FrameFeatureSet features_for(const TrainExample& ex) {
  return ex.features_path.empty() ? encode_synthetic(ex.video) : load_features(ex.features_path);
}

inline uint64_t perturb_seed(uint64_t base, const std::string& id) { return base ^ fnv1a(id); }

// Temporal grounding evaluation: top-1 segment against the ground truth.
inline EvalReport run_eval_tg(ModelBundle& bundle, const std::vector<TrainExample>& examples,
                              Perturbation perturb = Perturbation::none, uint64_t seed = 17) {
  EvalReport report;
  report.task = "tg";
  report.perturb = to_string(perturb);
  std::vector<Segment> top1;
  std::vector<std::vector<Segment>> gts;
  for (const auto& ex : examples) {
    FrameFeatureSet feats = perturb_features(features_for(ex), perturb, perturb_seed(seed, ex.id));
    Prediction pred = predict(bundle, ex, feats, 1);
    const Segment p = pred.segments.empty() ? Segment{0, 0, 0} : pred.segments[0];
    top1.push_back(p);
    gts.push_back(ex.gt_segments);

    SampleRecord rec;
    rec.id = ex.id;
    rec.pred_start = p.start;
    rec.pred_end = p.end;
    rec.pred_score = p.score;
    if (!ex.gt_segments.empty()) {
      rec.gt_start = ex.gt_segments[0].start;
      rec.gt_end = ex.gt_segments[0].end;
    }
    rec.iou = max_iou_over_gts(p, ex.gt_segments);
    rec.iop = max_iop_over_gts(p, ex.gt_segments);
    rec.loc_count = pred.loc_count;
    rec.expected_locs = count_locs(ex.target);
    report.samples.push_back(rec);
  }
  const RecallResult rr = recall_at_iou(top1, gts);
  report.metrics["r1@0.3"] = rr.recall.at(0.3);
  report.metrics["r1@0.5"] = rr.recall.at(0.5);
  report.metrics["r1@0.7"] = rr.recall.at(0.7);
  report.metrics["miou"] = rr.miou;
  double loc_ok = 0.0;
  for (const auto& s : report.samples) loc_ok += s.loc_count == s.expected_locs ? 1.0 : 0.0;
  report.metrics["loc_count_acc"] = loc_ok / static_cast<double>(report.samples.size());
  return report;
}

// Highlight-detection evaluation. Clip labels are derived from the ground
// truth: a 2-second clip whose midpoint frame lies inside an event is labeled
// "Very Good" (4), otherwise 0.
inline std::vector<double> derive_clip_labels(const TrainExample& ex, double clip_len_s = 2.0) {
  const int n = ex.video.n_frames;
  const double duration = ex.duration_s > 0 ? ex.duration_s : static_cast<double>(n);
  const int clips = static_cast<int>(std::ceil(duration / clip_len_s));
  std::vector<double> labels(static_cast<size_t>(clips), 0.0);
  for (int c = 0; c < clips; ++c) {
    const double mid_t = (c + 0.5) * clip_len_s;
    const double frame = mid_t / duration * (n - 1);
    for (const auto& gt : ex.gt_segments) {
      if (frame >= gt.start && frame <= gt.end) {
        labels[static_cast<size_t>(c)] = 4.0;
        break;
      }
    }
  }
  return labels;
}

inline EvalReport run_eval_hd(ModelBundle& bundle, const std::vector<TrainExample>& examples,
                              Perturbation perturb = Perturbation::none, uint64_t seed = 17) {
  if (!bundle.cfg.use_temporal_head) {
    throw Error(ErrorCategory::config, "highlight evaluation requires the temporal head");
  }
  EvalReport report;
  report.task = "hd";
  report.perturb = to_string(perturb);
  std::vector<std::vector<double>> scores, labels;
  for (const auto& ex : examples) {
    FrameFeatureSet feats = perturb_features(features_for(ex), perturb, perturb_seed(seed, ex.id));
    Prediction pred = predict(bundle, ex, feats, 1);
    const double duration = ex.duration_s > 0 ? ex.duration_s : static_cast<double>(ex.video.n_frames);
    if (pred.frame_saliency.size() == 0) {
      pred.frame_saliency = Vecf::Constant(ex.video.n_frames, 0.5f);
    }
    scores.push_back(clip_scores(pred.frame_saliency, duration));
    labels.push_back(derive_clip_labels(ex));

    SampleRecord rec;
    rec.id = ex.id;
    if (!pred.segments.empty()) {
      rec.pred_start = pred.segments[0].start;
      rec.pred_end = pred.segments[0].end;
      rec.pred_score = pred.segments[0].score;
    }
    if (!ex.gt_segments.empty()) {
      rec.gt_start = ex.gt_segments[0].start;
      rec.gt_end = ex.gt_segments[0].end;
    }
    rec.iou = pred.segments.empty() ? 0.0 : max_iou_over_gts(pred.segments[0], ex.gt_segments);
    report.samples.push_back(rec);
  }
  const HdResult hd = hd_metrics(scores, labels);
  report.metrics["hd_map"] = hd.map;
  report.metrics["hit@1"] = hd.hit1;
  report.metrics["scored_queries"] = hd.scored_queries;
  return report;
}

// Dense-captioning localization: per-<LOC> segments paired with ground truths
// in order; caption text quality is out of scope.
inline EvalReport run_eval_dvc_loc(ModelBundle& bundle, const std::vector<TrainExample>& examples,
                                   Perturbation perturb = Perturbation::none, uint64_t seed = 17) {
  EvalReport report;
  report.task = "dvc_loc";
  report.perturb = to_string(perturb);
  double loc_count_acc = 0.0;
  double matched_iou_sum = 0.0, matched_r1_sum = 0.0;
  int matched_total = 0;
  for (const auto& ex : examples) {
    FrameFeatureSet feats = perturb_features(features_for(ex), perturb, perturb_seed(seed, ex.id));
    Prediction pred = predict_multi(bundle, ex, feats);
    const int expected = static_cast<int>(ex.gt_segments.size());
    loc_count_acc += pred.loc_count == expected ? 1.0 : 0.0;
    const auto pairs =
        match_locs(static_cast<int>(pred.segments.size()), expected);
    for (const auto& [pi, gi] : pairs) {
      const double iou = iou_1d(pred.segments[static_cast<size_t>(pi)],
                                ex.gt_segments[static_cast<size_t>(gi)]);
      matched_iou_sum += iou;
      matched_r1_sum += iou >= 0.5 ? 1.0 : 0.0;
      ++matched_total;
    }

    SampleRecord rec;
    rec.id = ex.id;
    if (!pred.segments.empty()) {
      rec.pred_start = pred.segments[0].start;
      rec.pred_end = pred.segments[0].end;
    }
    if (!ex.gt_segments.empty()) {
      rec.gt_start = ex.gt_segments[0].start;
      rec.gt_end = ex.gt_segments[0].end;
    }
    rec.iou = pairs.empty() ? 0.0
                            : iou_1d(pred.segments[0], ex.gt_segments[0]);
    rec.loc_count = pred.loc_count;
    rec.expected_locs = expected;
    report.samples.push_back(rec);
  }
  report.metrics["loc_count_acc"] = loc_count_acc / static_cast<double>(examples.size());
  report.metrics["matched_miou"] = matched_total > 0 ? matched_iou_sum / matched_total : 0.0;
  report.metrics["matched_r1@0.5"] = matched_total > 0 ? matched_r1_sum / matched_total : 0.0;
  return report;
}

// Grounded QA: answers come from the VQA prompt; the visual evidence segment
// comes from a zero-shot grounding prompt built from the predicted answer.
inline EvalReport run_eval_gqa(ModelBundle& bundle, const std::vector<TrainExample>& examples,
                               Perturbation perturb = Perturbation::none, uint64_t seed = 17) {
  EvalReport report;
  report.task = "gqa";
  report.perturb = to_string(perturb);
  std::vector<GqaSample> samples;
  for (const auto& ex : examples) {
    FrameFeatureSet feats = perturb_features(features_for(ex), perturb, perturb_seed(seed, ex.id));
    const std::string answer = answer_question(bundle, ex, feats);
    GqaSample gs;
    gs.answer_correct = answer == ex.answer;
    gs.gts = ex.gt_segments;

    TrainExample ground_ex = ex;
    Rng trng(perturb_seed(seed, ex.id));
    const auto rendered = render_template_tg(answer.empty() ? ex.query : answer, trng);
    ground_ex.prompt = rendered.prompt;
    Prediction pred = predict(bundle, ground_ex, feats, 1);
    gs.pred = pred.segments.empty() ? Segment{0, 0, 0} : pred.segments[0];
    samples.push_back(gs);

    SampleRecord rec;
    rec.id = ex.id;
    rec.pred_start = gs.pred.start;
    rec.pred_end = gs.pred.end;
    if (!ex.gt_segments.empty()) {
      rec.gt_start = ex.gt_segments[0].start;
      rec.gt_end = ex.gt_segments[0].end;
    }
    rec.iou = max_iou_over_gts(gs.pred, ex.gt_segments);
    rec.iop = max_iop_over_gts(gs.pred, ex.gt_segments);
    rec.answer_correct = gs.answer_correct ? 1 : 0;
    report.samples.push_back(rec);
  }
  const GqaResult gq = gqa_metrics(samples);
  report.metrics["acc@qa"] = gq.acc_qa;
  report.metrics["acc@gqa"] = gq.acc_gqa;
  report.metrics["iop@0.3"] = gq.iop_at.at(0.3);
  report.metrics["iop@0.5"] = gq.iop_at.at(0.5);
  report.metrics["miop"] = gq.miop;
  report.metrics["iou@0.3"] = gq.iou_at.at(0.3);
  report.metrics["iou@0.5"] = gq.iou_at.at(0.5);
  report.metrics["miou"] = gq.miou;
  return report;
}

inline EvalReport run_eval(ModelBundle& bundle, const std::vector<TrainExample>& examples,
                           const std::string& task, Perturbation perturb, uint64_t seed = 17) {
  if (examples.empty()) throw Error(ErrorCategory::data, "evaluation set is empty");
  if (task == "tg") return run_eval_tg(bundle, examples, perturb, seed);
  if (task == "hd") return run_eval_hd(bundle, examples, perturb, seed);
  if (task == "dvc_loc") return run_eval_dvc_loc(bundle, examples, perturb, seed);
  if (task == "gqa") return run_eval_gqa(bundle, examples, perturb, seed);
  throw Error(ErrorCategory::usage, "unknown eval task: " + task);
}

// ---------------------------------------------------------------------------
// Prediction-distribution diagnostic: how concentrated are top-1 predictions,
// and do they track the video when it is shuffled?

using GrounderFn =
    std::function<std::vector<Segment>(const TrainExample&, const FrameFeatureSet&)>;

inline GrounderFn grounder_from_bundle(ModelBundle& bundle) {
  return [&bundle](const TrainExample& ex, const FrameFeatureSet& feats) {
    return predict(bundle, ex, feats, 1).segments;
  };
}

// Runs grounding under a perturbation; emits the normalized (start, end)
// histogram, its top-1 mode share, and the fraction of samples whose
// prediction departs from the unperturbed one (IoU < 0.5).
inline EvalReport bias_diagnostic(const GrounderFn& grounder,
                                  const std::vector<TrainExample>& examples, Perturbation perturb,
                                  uint64_t seed = 17, int bins = 50) {
  if (examples.empty()) throw Error(ErrorCategory::data, "diagnostic set is empty");
  EvalReport report;
  report.task = "bias_diagnostic";
  report.perturb = to_string(perturb);
  report.histogram = Matd::Zero(bins, bins);

  int changed = 0;
  for (const auto& ex : examples) {
    const FrameFeatureSet base = features_for(ex);
    FrameFeatureSet feats = perturb_features(base, perturb, perturb_seed(seed, ex.id));
    const auto segs = grounder(ex, feats);
    const Segment p = segs.empty() ? Segment{0, 0, 0} : segs[0];
    const double denom = std::max(1.0, static_cast<double>(ex.video.n_frames - 1));
    const int r = std::min(bins - 1, static_cast<int>(std::clamp(p.start / denom, 0.0, 1.0) * bins));
    const int c = std::min(bins - 1, static_cast<int>(std::clamp(p.end / denom, 0.0, 1.0) * bins));
    report.histogram(r, c) += 1.0;

    if (perturb != Perturbation::none) {
      const auto base_segs = grounder(ex, base);
      const Segment bp = base_segs.empty() ? Segment{0, 0, 0} : base_segs[0];
      if (iou_1d(p, bp) < 0.5) ++changed;
    }

    SampleRecord rec;
    rec.id = ex.id;
    rec.pred_start = p.start;
    rec.pred_end = p.end;
    rec.pred_score = p.score;
    if (!ex.gt_segments.empty()) {
      rec.gt_start = ex.gt_segments[0].start;
      rec.gt_end = ex.gt_segments[0].end;
    }
    rec.iou = max_iou_over_gts(p, ex.gt_segments);
    report.samples.push_back(rec);
  }

  report.histogram /= static_cast<double>(examples.size());
  report.metrics["mode_share"] = report.histogram.maxCoeff();
  report.metrics["sensitivity"] =
      perturb == Perturbation::none ? 0.0 : static_cast<double>(changed) / examples.size();
  return report;
}

}  // namespace vtg
