// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtg/common.hpp"
#include "vtg/segment.hpp"

namespace vtg {

inline double max_iou_over_gts(const Segment& pred, const std::vector<Segment>& gts) {
  double best = 0.0;
  for (const auto& gt : gts) best = std::max(best, iou_1d(pred, gt));
  return best;
}

inline double max_iop_over_gts(const Segment& pred, const std::vector<Segment>& gts) {
  double best = 0.0;
  for (const auto& gt : gts) best = std::max(best, iop_1d(pred, gt));
  return best;
}

struct RecallResult {
  std::map<double, double> recall;  // threshold -> fraction
  double miou = 0.0;
};

// Recall@1 over IoU thresholds plus mean top-1 IoU. With multiple ground
// truths per sample the best-matching one counts.
inline RecallResult recall_at_iou(const std::vector<Segment>& top1,
                                  const std::vector<std::vector<Segment>>& gts,
                                  const std::vector<double>& thresholds = {0.3, 0.5, 0.7}) {
  if (top1.size() != gts.size() || top1.empty()) {
    throw Error(ErrorCategory::data, "recall_at_iou requires aligned, non-empty inputs");
  }
  RecallResult out;
  std::vector<double> ious(top1.size());
  for (size_t i = 0; i < top1.size(); ++i) {
    ious[i] = max_iou_over_gts(top1[i], gts[i]);
    out.miou += ious[i];
  }
  out.miou /= static_cast<double>(top1.size());
  for (double t : thresholds) {
    int hits = 0;
    for (double iou : ious) hits += iou >= t ? 1 : 0;
    out.recall[t] = static_cast<double>(hits) / static_cast<double>(top1.size());
  }
  return out;
}

// Average precision of one ranked prediction list against a gt set: greedy
// one-to-one matching in score order, VOC-style AP.
inline double average_precision(std::vector<Segment> preds, const std::vector<Segment>& gts,
                                double iou_threshold) {
  if (gts.empty()) return 0.0;
  std::stable_sort(preds.begin(), preds.end(),
                   [](const Segment& a, const Segment& b) { return a.score > b.score; });
  std::vector<bool> used(gts.size(), false);
  double ap = 0.0;
  int tp = 0;
  for (size_t k = 0; k < preds.size(); ++k) {
    int best = -1;
    double best_iou = 0.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double iou = iou_1d(preds[k], gts[g]);
      if (iou >= iou_threshold && iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[static_cast<size_t>(best)] = true;
      ++tp;
      ap += static_cast<double>(tp) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(gts.size());
}

struct MapResult {
  std::map<double, double> map_at;  // threshold -> mAP
  double map_avg = 0.0;             // mean over 0.5:0.05:0.95
};

inline MapResult map_at_iou(const std::vector<std::vector<Segment>>& ranked_preds,
                            const std::vector<std::vector<Segment>>& gts,
                            const std::vector<double>& report_thresholds = {0.5, 0.75}) {
  if (ranked_preds.size() != gts.size() || ranked_preds.empty()) {
    throw Error(ErrorCategory::data, "map_at_iou requires aligned, non-empty inputs");
  }
  MapResult out;
  auto mean_ap = [&](double threshold) {
    double sum = 0.0;
    int queries = 0;
    for (size_t q = 0; q < gts.size(); ++q) {
      if (gts[q].empty()) continue;
      sum += average_precision(ranked_preds[q], gts[q], threshold);
      ++queries;
    }
    return queries > 0 ? sum / queries : 0.0;
  };
  for (double t : report_thresholds) out.map_at[t] = mean_ap(t);
  double sweep = 0.0;
  int count = 0;
  for (double t = 0.5; t < 0.951; t += 0.05) {
    sweep += mean_ap(t);
    ++count;
  }
  out.map_avg = sweep / count;
  return out;
}

struct HdResult {
  double map = 0.0;
  double hit1 = 0.0;
  int scored_queries = 0;  // queries with at least one positive clip
};

// Highlight detection over per-clip scores: a clip is positive when its label
// reaches the "Very Good" threshold. HIT@1 asks whether the top-scored clip
// is positive; mAP ranks all clips. Queries without positives are skipped.
inline HdResult hd_metrics(const std::vector<std::vector<double>>& clip_scores,
                           const std::vector<std::vector<double>>& clip_labels,
                           double very_good = 4.0) {
  if (clip_scores.size() != clip_labels.size()) {
    throw Error(ErrorCategory::data, "hd_metrics requires aligned inputs");
  }
  double ap_sum = 0.0, hit_sum = 0.0;
  int scored = 0;
  for (size_t q = 0; q < clip_scores.size(); ++q) {
    const auto& scores = clip_scores[q];
    const auto& labels = clip_labels[q];
    if (scores.size() != labels.size() || scores.empty()) {
      throw Error(ErrorCategory::data, "clip scores/labels mismatch at query " + std::to_string(q));
    }
    int positives = 0;
    for (double l : labels) positives += l >= very_good ? 1 : 0;
    if (positives == 0) continue;
    ++scored;

    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    });
    hit_sum += labels[static_cast<size_t>(order[0])] >= very_good ? 1.0 : 0.0;

    double ap = 0.0;
    int tp = 0;
    for (size_t k = 0; k < order.size(); ++k) {
      if (labels[static_cast<size_t>(order[k])] >= very_good) {
        ++tp;
        ap += static_cast<double>(tp) / static_cast<double>(k + 1);
      }
    }
    ap_sum += ap / positives;
  }
  HdResult out;
  out.scored_queries = scored;
  if (scored > 0) {
    out.map = ap_sum / scored;
    out.hit1 = hit_sum / scored;
  }
  return out;
}

struct GqaSample {
  bool answer_correct = false;
  Segment pred;
  std::vector<Segment> gts;
};

struct GqaResult {
  double acc_qa = 0.0;
  double acc_gqa = 0.0;  // correct answer AND IoP >= 0.5
  std::map<double, double> iop_at;
  double miop = 0.0;
  std::map<double, double> iou_at;
  double miou = 0.0;
};

inline GqaResult gqa_metrics(const std::vector<GqaSample>& samples,
                             const std::vector<double>& thresholds = {0.3, 0.5}) {
  if (samples.empty()) throw Error(ErrorCategory::data, "gqa_metrics requires samples");
  GqaResult out;
  std::vector<double> iops, ious;
  for (const auto& s : samples) {
    const double iop = max_iop_over_gts(s.pred, s.gts);
    const double iou = max_iou_over_gts(s.pred, s.gts);
    iops.push_back(iop);
    ious.push_back(iou);
    out.acc_qa += s.answer_correct ? 1.0 : 0.0;
    out.acc_gqa += (s.answer_correct && iop >= 0.5) ? 1.0 : 0.0;
    out.miop += iop;
    out.miou += iou;
  }
  const double n = static_cast<double>(samples.size());
  out.acc_qa /= n;
  out.acc_gqa /= n;
  out.miop /= n;
  out.miou /= n;
  for (double t : thresholds) {
    int iop_hits = 0, iou_hits = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
      iop_hits += iops[i] >= t ? 1 : 0;
      iou_hits += ious[i] >= t ? 1 : 0;
    }
    out.iop_at[t] = iop_hits / n;
    out.iou_at[t] = iou_hits / n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report emission.

struct SampleRecord {
  std::string id;
  double pred_start = 0.0, pred_end = 0.0, pred_score = 0.0;
  double gt_start = 0.0, gt_end = 0.0;
  double iou = 0.0, iop = 0.0;
  int answer_correct = -1;  // -1: not a QA sample
  int loc_count = -1;
  int expected_locs = -1;
};

struct EvalReport {
  int schema = 1;
  std::string task;
  std::string perturb = "none";
  std::map<std::string, double> metrics;
  std::vector<SampleRecord> samples;
  Matd histogram;  // optional 2-D prediction histogram (bias diagnostic)

  nlohmann::json to_json() const {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, v] : metrics) m[k] = v;
    return {{"schema", schema},
            {"task", task},
            {"perturb", perturb},
            {"metrics", m},
            {"n_samples", samples.size()}};
  }
};

namespace detail {

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

// Writes report.json plus a per-sample CSV; the histogram, when present, goes
// to histogram.csv as (row, col, mass) triples. Byte-deterministic for a
// fixed report.
inline void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "report.json");
    if (!os) throw Error(ErrorCategory::io, "cannot write report.json");
    os << report.to_json().dump(2) << '\n';
  }
  {
    std::ofstream os(dir / "samples.csv");
    if (!os) throw Error(ErrorCategory::io, "cannot write samples.csv");
    os << "id,pred_start,pred_end,pred_score,gt_start,gt_end,iou,iop,answer_correct,loc_count,"
          "expected_locs\n";
    for (const auto& s : report.samples) {
      os << s.id << ',' << detail::csv_number(s.pred_start) << ',' << detail::csv_number(s.pred_end)
         << ',' << detail::csv_number(s.pred_score) << ',' << detail::csv_number(s.gt_start) << ','
         << detail::csv_number(s.gt_end) << ',' << detail::csv_number(s.iou) << ','
         << detail::csv_number(s.iop) << ',' << s.answer_correct << ',' << s.loc_count << ','
         << s.expected_locs << '\n';
    }
  }
  if (report.histogram.size() > 0) {
    std::ofstream os(dir / "histogram.csv");
    if (!os) throw Error(ErrorCategory::io, "cannot write histogram.csv");
    os << "row,col,mass\n";
    for (Eigen::Index r = 0; r < report.histogram.rows(); ++r) {
      for (Eigen::Index c = 0; c < report.histogram.cols(); ++c) {
        os << r << ',' << c << ',' << detail::csv_number(report.histogram(r, c)) << '\n';
      }
    }
  }
}

}  // namespace vtg
