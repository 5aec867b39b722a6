// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtg/common.hpp"
#include "vtg/features.hpp"
#include "vtg/segment.hpp"

namespace vtg {

enum class Task { TG, DVC, VQA };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::TG: return "tg";
    case Task::DVC: return "dvc";
    case Task::VQA: return "vqa";
  }
  return "tg";
}

inline Task task_from_string(const std::string& s) {
  if (s == "tg") return Task::TG;
  if (s == "dvc") return Task::DVC;
  if (s == "vqa") return Task::VQA;
  throw Error(ErrorCategory::config, "unknown task: " + s);
}

inline int count_locs(const std::string& text) {
  int count = 0;
  size_t pos = 0;
  while ((pos = text.find("<LOC>", pos)) != std::string::npos) {
    ++count;
    pos += 5;
  }
  return count;
}

struct TrainExample {
  std::string id;
  Task task = Task::TG;
  SyntheticVideoSpec video;   // inline toy-encoder spec
  std::string features_path;  // optional precomputed container instead
  std::string query;
  std::string prompt;
  std::string target;  // holds one <LOC> per ground-truth segment for TG/DVC
  std::vector<Segment> gt_segments;  // frame units
  std::vector<std::string> options;  // VQA choices
  std::string answer;                // VQA answer text
  double duration_s = 0.0;

  void validate() const {
    const int locs = count_locs(target);
    if (task == Task::VQA) {
      if (locs != 0) throw Error(ErrorCategory::data, "VQA target must not contain <LOC>");
    } else if (locs != static_cast<int>(gt_segments.size())) {
      throw Error(ErrorCategory::data,
                  "target <LOC> count does not match ground-truth segments in " + id);
    }
    for (const auto& seg : gt_segments) {
      if (seg.end < seg.start) throw Error(ErrorCategory::data, "degenerate gt segment in " + id);
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : video.events) {
      events.push_back({{"start", e.span.start}, {"end", e.span.end}, {"class_id", e.class_id}});
    }
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : gt_segments) segs.push_back({s.start, s.end});
    return {{"id", id},
            {"task", to_string(task)},
            {"video",
             {{"n_frames", video.n_frames},
              {"grid_rows", video.grid_rows},
              {"grid_cols", video.grid_cols},
              {"events", events},
              {"background_class", video.background_class},
              {"noise_sigma", video.noise_sigma},
              {"seed", video.seed},
              {"feat_dim", video.feat_dim}}},
            {"features_path", features_path},
            {"query", query},
            {"prompt", prompt},
            {"target", target},
            {"gt_segments", segs},
            {"options", options},
            {"answer", answer},
            {"duration_s", duration_s}};
  }

  static TrainExample from_json(const nlohmann::json& j) {
    TrainExample ex;
    ex.id = j.at("id").get<std::string>();
    ex.task = task_from_string(j.at("task").get<std::string>());
    const auto& v = j.at("video");
    ex.video.n_frames = v.at("n_frames").get<int>();
    ex.video.grid_rows = v.at("grid_rows").get<int>();
    ex.video.grid_cols = v.at("grid_cols").get<int>();
    ex.video.background_class = v.at("background_class").get<int>();
    ex.video.noise_sigma = v.at("noise_sigma").get<float>();
    ex.video.seed = v.at("seed").get<uint64_t>();
    ex.video.feat_dim = v.at("feat_dim").get<int>();
    for (const auto& e : v.at("events")) {
      ex.video.events.push_back(
          {Segment{e.at("start").get<double>(), e.at("end").get<double>()},
           e.at("class_id").get<int>()});
    }
    ex.features_path = j.value("features_path", "");
    ex.query = j.value("query", "");
    ex.prompt = j.at("prompt").get<std::string>();
    ex.target = j.at("target").get<std::string>();
    for (const auto& s : j.at("gt_segments")) {
      ex.gt_segments.push_back(Segment{s.at(0).get<double>(), s.at(1).get<double>()});
    }
    ex.options = j.value("options", std::vector<std::string>{});
    ex.answer = j.value("answer", "");
    ex.duration_s = j.value("duration_s", 0.0);
    ex.validate();
    return ex;
  }
};

// ---------------------------------------------------------------------------
// Boundary-aware templates. Each task family renders from a small pool of
// paraphrases; the grounding answer is always "During <LOC>." so localization
// stays with the temporal head.

inline std::string class_phrase(int class_id) { return "action_" + std::to_string(class_id); }

struct RenderedTemplate {
  std::string prompt;
  std::string target;
};

inline RenderedTemplate render_template_tg(const std::string& query, Rng& rng) {
  static const char* kPrompts[] = {
      "During which frames does %s happen?",
      "When does %s occur in the video?",
      "Identify the time span where %s takes place.",
  };
  const auto pick = rng.below(3);
  char buf[256];
  std::snprintf(buf, sizeof(buf), kPrompts[pick], query.c_str());
  return {buf, "During <LOC>."};
}

inline RenderedTemplate render_template_dvc(const std::vector<std::string>& captions, Rng& rng) {
  static const char* kPrompts[] = {
      "Describe the provided video in detail. Each sentence should begin with the timestamps.",
      "List every event in the video, one timestamped sentence per event.",
      "Give a dense description of the video with the time of each event.",
  };
  std::string target;
  for (size_t i = 0; i < captions.size(); ++i) {
    if (i > 0) target += " ";
    target += "During <LOC>, " + captions[i] + ".";
  }
  return {kPrompts[rng.below(3)], target};
}

inline RenderedTemplate render_template_vqa(const std::string& question,
                                            const std::vector<std::string>& options,
                                            const std::string& answer, Rng& rng) {
  static const char* kPrompts[] = {
      "%s Choose one of: %s.",
      "Answer the question. %s Options: %s.",
      "%s Pick the best option among: %s.",
  };
  std::string joined;
  for (size_t i = 0; i < options.size(); ++i) {
    if (i > 0) joined += ", ";
    joined += options[i];
  }
  const auto pick = rng.below(3);
  char buf[512];
  std::snprintf(buf, sizeof(buf), kPrompts[pick], question.c_str(), joined.c_str());
  return {buf, answer};
}

// Ablation rendering: <LOC> placeholders replaced by literal frame spans, the
// text-generation route to grounding.
inline std::string target_with_text_timestamps(const std::string& target,
                                               const std::vector<Segment>& gts) {
  std::string out = target;
  size_t pos = 0;
  size_t gi = 0;
  while ((pos = out.find("<LOC>", pos)) != std::string::npos && gi < gts.size()) {
    const int s = static_cast<int>(std::lround(gts[gi].start));
    const int e = static_cast<int>(std::lround(gts[gi].end));
    const std::string repl = "frames " + std::to_string(s) + " to " + std::to_string(e);
    out.replace(pos, 5, repl);
    pos += repl.size();
    ++gi;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic dataset generation.

struct SynthParams {
  int size = 1000;
  int n_frames = 100;
  int grid_rows = 4;
  int grid_cols = 4;
  int feat_dim = 64;
  int n_classes = 16;   // event classes 1..n_classes (0 is background)
  float noise_sigma = 0.1f;
  int min_events = 1;
  int max_events = 3;   // DVC only; TG and VQA place one event
  int min_len = 8;
  int max_len = 30;
  double fps = 1.0;     // duration_s = n_frames / fps
  std::vector<Task> tasks = {Task::TG};

  nlohmann::json to_json() const {
    std::vector<std::string> task_names;
    for (Task t : tasks) task_names.push_back(to_string(t));
    return {{"size", size},           {"n_frames", n_frames},   {"grid_rows", grid_rows},
            {"grid_cols", grid_cols}, {"feat_dim", feat_dim},   {"n_classes", n_classes},
            {"noise_sigma", noise_sigma}, {"min_events", min_events}, {"max_events", max_events},
            {"min_len", min_len},     {"max_len", max_len},     {"fps", fps},
            {"tasks", task_names}};
  }
};

enum class Split { train, val, test };

// 80/10/10 split keyed on the example id hash, independent of dataset order.
inline Split split_of(const std::string& id) {
  const uint64_t h = fnv1a(id) % 10;
  if (h < 8) return Split::train;
  if (h == 8) return Split::val;
  return Split::test;
}

namespace detail {

inline std::string render_query(int class_id, Rng& rng) {
  const std::string phrase = class_phrase(class_id);
  switch (rng.below(3)) {
    case 0: return "the " + phrase + " activity";
    case 1: return phrase;
    default: return "the moment of " + phrase;
  }
}

inline std::string render_caption(int class_id, Rng& rng) {
  const std::string phrase = class_phrase(class_id);
  switch (rng.below(2)) {
    case 0: return "the " + phrase + " event unfolds";
    default: return phrase + " takes place";
  }
}

// Non-overlapping event placement: segments drawn left to right with gaps.
inline std::vector<SyntheticEvent> place_events(const SynthParams& p, int count, Rng& rng) {
  std::vector<SyntheticEvent> events;
  int cursor = 0;
  for (int e = 0; e < count; ++e) {
    const int remaining_events = count - e;
    const int len = static_cast<int>(rng.range(p.min_len, p.max_len));
    const int slack = p.n_frames - cursor - remaining_events * (p.max_len + 2);
    const int start = cursor + static_cast<int>(rng.below(static_cast<uint64_t>(std::max(1, slack))));
    const int end = std::min(start + len - 1, p.n_frames - 2);
    if (end <= start) break;
    const int class_id = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(p.n_classes)));
    events.push_back({Segment{static_cast<double>(start), static_cast<double>(end)}, class_id});
    cursor = end + 2;
    if (cursor >= p.n_frames - p.min_len) break;
  }
  return events;
}

}  // namespace detail

inline std::vector<TrainExample> synth_dataset(const SynthParams& params, uint64_t seed) {
  if (params.min_len < 1 || params.max_len < params.min_len ||
      params.min_len + 2 >= params.n_frames) {
    throw Error(ErrorCategory::config, "event length range does not fit in n_frames");
  }
  std::vector<TrainExample> out;
  out.reserve(static_cast<size_t>(params.size));
  Rng root(seed);
  for (int i = 0; i < params.size; ++i) {
    Rng rng = root.fork(static_cast<uint64_t>(i));
    TrainExample ex;
    ex.id = "synth-" + std::to_string(seed) + "-" + std::to_string(i);
    ex.task = params.tasks[static_cast<size_t>(rng.below(params.tasks.size()))];
    ex.duration_s = params.n_frames / params.fps;

    ex.video.n_frames = params.n_frames;
    ex.video.grid_rows = params.grid_rows;
    ex.video.grid_cols = params.grid_cols;
    ex.video.feat_dim = params.feat_dim;
    ex.video.noise_sigma = params.noise_sigma;
    ex.video.background_class = 0;
    ex.video.seed = seed * 1000003ull + static_cast<uint64_t>(i);

    const int n_events =
        ex.task == Task::DVC ? static_cast<int>(rng.range(params.min_events, params.max_events)) : 1;
    ex.video.events = detail::place_events(params, n_events, rng);
    if (ex.video.events.empty()) {
      ex.video.events = {{Segment{2.0, static_cast<double>(2 + params.min_len)}, 1}};
    }

    switch (ex.task) {
      case Task::TG: {
        const auto& ev = ex.video.events[0];
        ex.query = detail::render_query(ev.class_id, rng);
        const auto rendered = render_template_tg(ex.query, rng);
        ex.prompt = rendered.prompt;
        ex.target = rendered.target;
        ex.gt_segments = {ev.span};
        break;
      }
      case Task::DVC: {
        std::vector<std::string> captions;
        for (const auto& ev : ex.video.events) {
          captions.push_back(detail::render_caption(ev.class_id, rng));
          ex.gt_segments.push_back(ev.span);
        }
        const auto rendered = render_template_dvc(captions, rng);
        ex.prompt = rendered.prompt;
        ex.target = rendered.target;
        break;
      }
      case Task::VQA: {
        const auto& ev = ex.video.events[0];
        ex.query = "Which action appears in this video?";
        ex.answer = class_phrase(ev.class_id);
        std::vector<int> distractors;
        while (distractors.size() < 3) {
          const int c = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(params.n_classes)));
          if (c == ev.class_id) continue;
          if (std::find(distractors.begin(), distractors.end(), c) != distractors.end()) continue;
          distractors.push_back(c);
        }
        ex.options = {ex.answer};
        for (int c : distractors) ex.options.push_back(class_phrase(c));
        rng.shuffle(ex.options);
        const auto rendered = render_template_vqa(ex.query, ex.options, ex.answer, rng);
        ex.prompt = rendered.prompt;
        ex.target = rendered.target;
        ex.gt_segments = {ev.span};  // grounding evidence for GQA-style eval
        break;
      }
    }
    ex.validate();
    out.push_back(std::move(ex));
  }
  return out;
}

inline void save_dataset(const std::filesystem::path& path, const std::vector<TrainExample>& data) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCategory::io, "cannot write dataset: " + path.string());
  for (const auto& ex : data) os << ex.to_json().dump() << '\n';
}

inline std::vector<TrainExample> load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCategory::data, "cannot open dataset: " + path.string());
  std::vector<TrainExample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCategory::data,
                  "dataset line " + std::to_string(line_no) + " is not valid JSON");
    }
    out.push_back(TrainExample::from_json(j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Annotation ingestion for the public benchmark formats. Features are
// supplied separately; these records carry metadata only.

enum class AnnotationFormat { charades_sta, qvhighlights, nextgqa };

inline AnnotationFormat annotation_format_from_string(const std::string& s) {
  if (s == "charades_sta") return AnnotationFormat::charades_sta;
  if (s == "qvhighlights") return AnnotationFormat::qvhighlights;
  if (s == "nextgqa") return AnnotationFormat::nextgqa;
  throw Error(ErrorCategory::config, "unknown annotation format: " + s);
}

struct AnnotationRecord {
  std::string video_id;
  std::string query;
  std::vector<Segment> segments_s;  // seconds
  double duration_s = 0.0;
  std::vector<double> saliency;  // per-clip scores (highlight detection)
  std::vector<std::string> options;
  std::string answer;
};

namespace detail {

inline std::vector<AnnotationRecord> ingest_charades(std::istream& is) {
  // Lines of the form: "<vid> <start> <end>##<query>"
  std::vector<AnnotationRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t sep = line.find("##");
    if (sep == std::string::npos) {
      throw Error(ErrorCategory::data,
                  "charades line " + std::to_string(line_no) + ": missing '##' separator");
    }
    std::istringstream head(line.substr(0, sep));
    AnnotationRecord rec;
    double start = 0, end = 0;
    if (!(head >> rec.video_id >> start >> end)) {
      throw Error(ErrorCategory::data,
                  "charades line " + std::to_string(line_no) + ": expected '<vid> <start> <end>'");
    }
    rec.query = line.substr(sep + 2);
    rec.segments_s = {Segment{start, end}};
    out.push_back(std::move(rec));
  }
  return out;
}

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* field,
                                           int line_no) {
  if (!j.contains(field)) {
    throw Error(ErrorCategory::data, "annotation line " + std::to_string(line_no) +
                                         ": missing field '" + field + "'");
  }
  return j.at(field);
}

inline std::vector<AnnotationRecord> ingest_qvhighlights(std::istream& is) {
  // JSON lines with qid/query/vid/duration/relevant_windows and optional
  // saliency_scores (per-clip annotator triples, averaged here).
  std::vector<AnnotationRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCategory::data,
                  "annotation line " + std::to_string(line_no) + " is not valid JSON");
    }
    AnnotationRecord rec;
    rec.video_id = require_field(j, "vid", line_no).get<std::string>();
    rec.query = require_field(j, "query", line_no).get<std::string>();
    rec.duration_s = require_field(j, "duration", line_no).get<double>();
    for (const auto& w : require_field(j, "relevant_windows", line_no)) {
      rec.segments_s.push_back(Segment{w.at(0).get<double>(), w.at(1).get<double>()});
    }
    if (j.contains("saliency_scores")) {
      for (const auto& clip : j["saliency_scores"]) {
        double sum = 0.0;
        for (const auto& v : clip) sum += v.get<double>();
        rec.saliency.push_back(clip.empty() ? 0.0 : sum / clip.size());
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<AnnotationRecord> ingest_nextgqa(std::istream& is) {
  // JSON lines: {"video_id", "question", "answer", "options", "segments",
  // "duration"} -- grounded QA records.
  std::vector<AnnotationRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCategory::data,
                  "annotation line " + std::to_string(line_no) + " is not valid JSON");
    }
    AnnotationRecord rec;
    rec.video_id = require_field(j, "video_id", line_no).get<std::string>();
    rec.query = require_field(j, "question", line_no).get<std::string>();
    rec.answer = require_field(j, "answer", line_no).get<std::string>();
    if (j.contains("options")) rec.options = j["options"].get<std::vector<std::string>>();
    for (const auto& s : require_field(j, "segments", line_no)) {
      rec.segments_s.push_back(Segment{s.at(0).get<double>(), s.at(1).get<double>()});
    }
    rec.duration_s = j.value("duration", 0.0);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace detail

inline std::vector<AnnotationRecord> ingest_annotations(AnnotationFormat format,
                                                        const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCategory::data, "cannot open annotations: " + path.string());
  switch (format) {
    case AnnotationFormat::charades_sta: return detail::ingest_charades(is);
    case AnnotationFormat::qvhighlights: return detail::ingest_qvhighlights(is);
    case AnnotationFormat::nextgqa: return detail::ingest_nextgqa(is);
  }
  return {};
}

// Seconds-to-frame conversion shared by training and evaluation.
inline double seconds_to_frame(double seconds, double duration_s, int n_frames) {
  if (duration_s <= 0.0) throw Error(ErrorCategory::data, "non-positive video duration");
  return std::round(seconds / duration_s * (n_frames - 1));
}

}  // namespace vtg
