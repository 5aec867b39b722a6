// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vtg/compress.hpp"
#include "vtg/dataset.hpp"
#include "vtg/eval_runner.hpp"
#include "vtg/features.hpp"
#include "vtg/inference.hpp"
#include "vtg/trainer.hpp"

namespace vtg::cli {

inline constexpr const char* kVersion = "0.1.0";

namespace detail {

inline uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return 0;
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    h = fnv1a(buf, static_cast<size_t>(is.gcount()), h);
    if (!is) break;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// defaults < config file < dotted-key overrides
inline nlohmann::json effective_config(const nlohmann::json& defaults, const std::string& config_path,
                                       const std::vector<std::string>& overrides) {
  nlohmann::json cfg = defaults;
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) throw Error(ErrorCategory::config, "cannot open config: " + config_path);
    nlohmann::json file_cfg = nlohmann::json::parse(is, nullptr, false);
    if (file_cfg.is_discarded()) {
      throw Error(ErrorCategory::config, "config is not valid JSON: " + config_path);
    }
    cfg.merge_patch(file_cfg);
  }
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCategory::usage, "override must be key=value: " + kv);
    }
    std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // plain string
    nlohmann::json* node = &cfg;
    size_t pos = 0;
    while (true) {
      const size_t dot = key.find('.', pos);
      const std::string part = key.substr(pos, dot - pos);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      pos = dot + 1;
    }
  }
  return cfg;
}

inline void write_run_artifacts(const std::filesystem::path& out_dir, const std::string& command,
                                const nlohmann::json& config, uint64_t seed,
                                const std::vector<std::filesystem::path>& inputs) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "effective-config.json");
    os << config.dump(2) << '\n';
  }
  nlohmann::json input_hashes = nlohmann::json::object();
  for (const auto& p : inputs) input_hashes[p.string()] = hex64(file_hash(p));
  nlohmann::json manifest{{"command", command},
                          {"version", kVersion},
                          {"seed", seed},
                          {"config_hash", hex64(fnv1a(config.dump()))},
                          {"inputs", input_hashes}};
  std::ofstream os(out_dir / "run-manifest.json");
  os << manifest.dump(2) << '\n';
}

inline std::vector<Task> parse_tasks(const std::string& csv) {
  std::vector<Task> tasks;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) tasks.push_back(task_from_string(item));
  }
  if (tasks.empty()) throw Error(ErrorCategory::usage, "no tasks given");
  return tasks;
}

inline std::vector<TrainExample> filter_split(std::vector<TrainExample> data,
                                              const std::string& split) {
  if (split == "all") return data;
  Split want;
  if (split == "train") {
    want = Split::train;
  } else if (split == "val") {
    want = Split::val;
  } else if (split == "test") {
    want = Split::test;
  } else {
    throw Error(ErrorCategory::usage, "unknown split: " + split);
  }
  std::vector<TrainExample> out;
  for (auto& ex : data) {
    if (split_of(ex.id) == want) out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------

inline int cmd_synth(const nlohmann::json& cfg, const std::filesystem::path& out_dir) {
  SynthParams params;
  params.size = cfg.value("size", params.size);
  params.n_frames = cfg.value("n_frames", params.n_frames);
  params.grid_rows = cfg.value("grid_rows", params.grid_rows);
  params.grid_cols = cfg.value("grid_cols", params.grid_cols);
  params.feat_dim = cfg.value("feat_dim", params.feat_dim);
  params.n_classes = cfg.value("n_classes", params.n_classes);
  params.noise_sigma = cfg.value("noise_sigma", params.noise_sigma);
  params.min_events = cfg.value("min_events", params.min_events);
  params.max_events = cfg.value("max_events", params.max_events);
  params.min_len = cfg.value("min_len", params.min_len);
  params.max_len = cfg.value("max_len", params.max_len);
  params.fps = cfg.value("fps", params.fps);
  params.tasks = parse_tasks(cfg.value("tasks", std::string("tg")));
  const uint64_t seed = cfg.value("seed", uint64_t{1});

  const auto data = synth_dataset(params, seed);
  save_dataset(out_dir / "dataset.jsonl", data);
  std::vector<TrainExample> train, val, test;
  for (const auto& ex : data) {
    switch (split_of(ex.id)) {
      case Split::train: train.push_back(ex); break;
      case Split::val: val.push_back(ex); break;
      case Split::test: test.push_back(ex); break;
    }
  }
  save_dataset(out_dir / "train.jsonl", train);
  save_dataset(out_dir / "val.jsonl", val);
  save_dataset(out_dir / "test.jsonl", test);
  nlohmann::json summary{{"size", data.size()},
                         {"train", train.size()},
                         {"val", val.size()},
                         {"test", test.size()},
                         {"dataset_hash", hex64(file_hash(out_dir / "dataset.jsonl"))}};
  std::cout << summary.dump() << '\n';
  return 0;
}

inline int cmd_compress(const nlohmann::json& cfg, const std::filesystem::path& features_path,
                        const std::filesystem::path& out_dir) {
  const FrameFeatureSet feats = load_features(features_path);
  CompressParams params;
  params.u = cfg.value("u", params.u);
  params.k = cfg.value("k", params.k);
  params.c = cfg.value("c", params.c);
  params.sim_threshold = cfg.value("tau", params.sim_threshold);
  const CompressResult result = compress(feats, params);
  save_features(out_dir / "s_tokens.bin", s_tokens_as_features(result.s_tokens));
  {
    std::ofstream os(out_dir / "trace.json");
    os << result.trace_json().dump(2) << '\n';
  }
  std::cout << nlohmann::json{{"m", result.m()}, {"n", feats.n},
                              {"llm_tokens", feats.n + result.m()}}
                   .dump()
            << '\n';
  return 0;
}

inline int cmd_train(const nlohmann::json& cfg, const std::filesystem::path& dataset_path,
                     const std::filesystem::path& out_dir, const std::string& resume_from) {
  std::vector<TrainExample> data = load_dataset(dataset_path);
  if (data.empty()) throw Error(ErrorCategory::data, "dataset is empty: " + dataset_path.string());

  if (!resume_from.empty()) {
    Trainer trainer = Trainer::load_checkpoint(resume_from, std::move(data));
    const auto logs = trainer.train(out_dir);
    std::cout << nlohmann::json{{"steps", trainer.global_step()},
                                {"final_total", logs.empty() ? 0.0 : logs.back().losses.total}}
                     .dump()
              << '\n';
    return 0;
  }

  RunConfig run_cfg = RunConfig::from_json(cfg);
  Tokenizer tok = Trainer::fit_tokenizer(run_cfg, data);
  Trainer trainer(run_cfg, tok, std::move(data));
  const auto logs = trainer.train(out_dir);
  std::cout << nlohmann::json{{"steps", trainer.global_step()},
                              {"final_total", logs.empty() ? 0.0 : logs.back().losses.total}}
                   .dump()
            << '\n';
  return 0;
}

inline int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                    const std::string& task, const std::string& perturb, const std::string& split,
                    uint64_t seed, const std::filesystem::path& out_dir) {
  ModelBundle bundle = ModelBundle::load(checkpoint);
  const auto examples = filter_split(load_dataset(dataset), split);
  if (examples.empty()) throw Error(ErrorCategory::data, "no examples in requested split");
  EvalReport report = run_eval(bundle, examples, task, perturbation_from_string(perturb), seed);
  write_report(report, out_dir);
  std::cout << report.to_json().dump() << '\n';
  return 0;
}

inline int cmd_diagnose(const std::filesystem::path& checkpoint,
                        const std::filesystem::path& dataset, const std::string& perturb,
                        const std::string& split, uint64_t seed,
                        const std::filesystem::path& out_dir) {
  ModelBundle bundle = ModelBundle::load(checkpoint);
  const auto examples = filter_split(load_dataset(dataset), split);
  if (examples.empty()) throw Error(ErrorCategory::data, "no examples in requested split");
  const auto grounder = grounder_from_bundle(bundle);
  std::vector<std::string> modes;
  if (perturb == "all") {
    modes = {"none", "shuffle", "blank"};
  } else {
    modes = {perturb};
  }
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& mode : modes) {
    EvalReport report =
        bias_diagnostic(grounder, examples, perturbation_from_string(mode), seed);
    write_report(report, out_dir / mode);
    summary[mode] = report.to_json();
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

}  // namespace detail

inline int run(int argc, char** argv) {
  CLI::App app{"Temporal video grounding lab: dual-expert adapters over a frozen decoder "
               "with a boundary-regression head and GOP token compression"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(0, 1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  bool dump_config = false;
  uint64_t seed = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--set", overrides, "dotted-key=value overrides")->take_all();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_flag("--dump-config", dump_config, "print the effective config and exit");
    cmd->add_option("--seed", seed, "run seed");
  };

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  int synth_size = 1000;
  std::string synth_tasks = "tg";
  synth->add_option("--size", synth_size, "number of examples");
  synth->add_option("--tasks", synth_tasks, "comma-separated task mix (tg,dvc,vqa)");
  add_common(synth);

  // compress
  auto* comp = app.add_subcommand("compress", "compress a feature container into S-tokens");
  std::string features_path;
  comp->add_option("--features", features_path, "feature container path");
  double comp_u = -1, comp_k = -1, comp_c = -1, comp_tau = -10;
  comp->add_option("--u", comp_u, "GOP count");
  comp->add_option("--k", comp_k, "key tokens per IDR frame");
  comp->add_option("--c", comp_c, "context tokens per IDR frame");
  comp->add_option("--tau", comp_tau, "similarity threshold");
  add_common(comp);

  // train
  auto* train = app.add_subcommand("train", "train adapters and the temporal head");
  std::string dataset_path;
  std::string resume_from;
  train->add_option("--dataset", dataset_path, "training dataset (JSONL)");
  train->add_option("--resume", resume_from, "checkpoint directory to resume from");
  add_common(train);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint, eval_task = "tg", eval_perturb = "none", eval_split = "all";
  std::string eval_dataset;
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  eval->add_option("--dataset", eval_dataset, "dataset (JSONL)")->required();
  eval->add_option("--task", eval_task, "tg|hd|dvc_loc|gqa");
  eval->add_option("--perturb", eval_perturb, "none|shuffle|blank");
  eval->add_option("--split", eval_split, "all|train|val|test");
  add_common(eval);

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "prediction-distribution bias diagnostic");
  std::string diag_checkpoint, diag_dataset, diag_perturb = "all", diag_split = "all";
  diag->add_option("--checkpoint", diag_checkpoint, "checkpoint directory")->required();
  diag->add_option("--dataset", diag_dataset, "dataset (JSONL)")->required();
  diag->add_option("--perturb", diag_perturb, "none|shuffle|blank|all");
  diag->add_option("--split", diag_split, "all|train|val|test");
  add_common(diag);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"category", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    if (synth->parsed()) {
      nlohmann::json defaults = SynthParams{}.to_json();
      defaults["seed"] = seed;
      defaults["size"] = synth_size;
      defaults["tasks"] = synth_tasks;
      nlohmann::json cfg = detail::effective_config(defaults, config_path, overrides);
      if (seed != 1) cfg["seed"] = seed;
      if (dump_config) {
        std::cout << cfg.dump(2) << '\n';
        return 0;
      }
      if (out_dir.empty()) throw Error(ErrorCategory::usage, "--out is required");
      detail::write_run_artifacts(out_dir, "synth", cfg, cfg.value("seed", uint64_t{1}), {});
      return detail::cmd_synth(cfg, out_dir);
    }
    if (comp->parsed()) {
      nlohmann::json defaults{{"u", 4}, {"k", 48}, {"c", 16}, {"tau", 0.8}};
      nlohmann::json cfg = detail::effective_config(defaults, config_path, overrides);
      if (comp_u >= 0) cfg["u"] = static_cast<int>(comp_u);
      if (comp_k >= 0) cfg["k"] = static_cast<int>(comp_k);
      if (comp_c >= 0) cfg["c"] = static_cast<int>(comp_c);
      if (comp_tau > -5) cfg["tau"] = comp_tau;
      if (dump_config) {
        std::cout << cfg.dump(2) << '\n';
        return 0;
      }
      if (features_path.empty()) throw Error(ErrorCategory::usage, "--features is required");
      if (out_dir.empty()) throw Error(ErrorCategory::usage, "--out is required");
      detail::write_run_artifacts(out_dir, "compress", cfg, 0, {features_path});
      return detail::cmd_compress(cfg, features_path, out_dir);
    }
    if (train->parsed()) {
      nlohmann::json cfg = detail::effective_config(RunConfig{}.to_json(), config_path, overrides);
      if (seed != 1) cfg["seed"] = seed;
      if (dump_config) {
        std::cout << cfg.dump(2) << '\n';
        return 0;
      }
      if (dataset_path.empty()) throw Error(ErrorCategory::usage, "--dataset is required");
      if (out_dir.empty()) throw Error(ErrorCategory::usage, "--out is required");
      detail::write_run_artifacts(out_dir, "train", cfg, cfg.value("seed", uint64_t{1}),
                                  {dataset_path});
      return detail::cmd_train(cfg, dataset_path, out_dir, resume_from);
    }
    if (eval->parsed()) {
      nlohmann::json cfg{{"checkpoint", checkpoint}, {"dataset", eval_dataset},
                         {"task", eval_task},        {"perturb", eval_perturb},
                         {"split", eval_split},      {"seed", seed}};
      if (dump_config) {
        std::cout << cfg.dump(2) << '\n';
        return 0;
      }
      if (out_dir.empty()) throw Error(ErrorCategory::usage, "--out is required");
      detail::write_run_artifacts(out_dir, "eval", cfg, seed, {eval_dataset});
      return detail::cmd_eval(checkpoint, eval_dataset, eval_task, eval_perturb, eval_split, seed,
                              out_dir);
    }
    if (diag->parsed()) {
      nlohmann::json cfg{{"checkpoint", diag_checkpoint}, {"dataset", diag_dataset},
                         {"perturb", diag_perturb},       {"split", diag_split},
                         {"seed", seed}};
      if (dump_config) {
        std::cout << cfg.dump(2) << '\n';
        return 0;
      }
      if (out_dir.empty()) throw Error(ErrorCategory::usage, "--out is required");
      detail::write_run_artifacts(out_dir, "diagnose", cfg, seed, {diag_dataset});
      return detail::cmd_diagnose(diag_checkpoint, diag_dataset, diag_perturb, diag_split, seed,
                                  out_dir);
    }
    std::cerr << nlohmann::json{{"category", "usage"}, {"message", "no subcommand given"}}.dump()
              << '\n';
    std::cerr << app.help() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"category", to_string(e.category())}, {"message", e.what()}}.dump()
              << '\n';
    return (e.category() == ErrorCategory::usage || e.category() == ErrorCategory::config) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"category", "runtime"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
}

}  // namespace vtg::cli
