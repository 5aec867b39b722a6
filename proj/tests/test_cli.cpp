// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vtg/cli.hpp"

namespace fs = std::filesystem;
using namespace vtg;

namespace {

int run_cli(std::vector<std::string> args, std::string* err_out = nullptr) {
  std::vector<char*> argv;
  args.insert(args.begin(), "vtg");
  for (auto& a : args) argv.push_back(a.data());

  std::ostringstream captured;
  std::streambuf* old_err = std::cerr.rdbuf(captured.rdbuf());
  std::ostringstream out_captured;
  std::streambuf* old_out = std::cout.rdbuf(out_captured.rdbuf());
  const int rc = vtg::cli::run(static_cast<int>(argv.size()), argv.data());
  std::cerr.rdbuf(old_err);
  std::cout.rdbuf(old_out);
  if (err_out) *err_out = captured.str();
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

const char* kTinyTrainConfig = R"({
  "model": {"n_layers": 2, "d": 48, "n_heads": 4, "context": 256, "mlp_hidden": 64,
            "feat_dim": 32, "vocab": 0,
            "adapter": {"total_rank": 16, "alpha_split": 0.5, "lora_alpha": 16.0},
            "adapt_q": true, "adapt_k": false, "adapt_v": true, "adapt_o": false,
            "adapt_mlp": false, "train_gphi": true, "init_seed": 1},
  "compress": {"u": 2, "k": 4, "c": 2, "tau": 0.8},
  "batch_size": 4, "epochs": 1, "lr": 0.001, "threads": 2
})";

}  // namespace

TEST_CASE("version flag exits cleanly") { CHECK(run_cli({"--version"}) == 0); }

TEST_CASE("unknown flags produce a usage error") {
  std::string err;
  CHECK(run_cli({"synth", "--no-such-flag"}, &err) == 2);
  CHECK(err.find("\"category\":\"usage\"") != std::string::npos);
}

TEST_CASE("missing subcommand is a usage error") {
  std::string err;
  CHECK(run_cli({}, &err) == 2);
}

TEST_CASE("synth runs are reproducible with identical manifests") {
  const fs::path d1 = fresh_dir("vtg_cli_synth1");
  const fs::path d2 = fresh_dir("vtg_cli_synth2");
  CHECK(run_cli({"synth", "--size", "20", "--seed", "3", "--out", d1.string()}) == 0);
  CHECK(run_cli({"synth", "--size", "20", "--seed", "3", "--out", d2.string()}) == 0);
  CHECK(slurp(d1 / "dataset.jsonl") == slurp(d2 / "dataset.jsonl"));
  CHECK(slurp(d1 / "run-manifest.json") == slurp(d2 / "run-manifest.json"));
  CHECK(fs::exists(d1 / "effective-config.json"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("train with a missing dataset exits 1 with category data") {
  const fs::path out = fresh_dir("vtg_cli_train_missing");
  std::string err;
  const int rc = run_cli({"train", "--dataset", "/nonexistent/data.jsonl", "--out", out.string()},
                         &err);
  CHECK(rc == 1);
  CHECK(err.find("\"category\":\"data\"") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("dump-config prints the effective configuration") {
  std::string err;
  CHECK(run_cli({"train", "--dump-config", "--set", "lr=0.5"}, &err) == 0);
}

TEST_CASE("full pipeline: synth, train, compress, eval, diagnose") {
  const fs::path data_dir = fresh_dir("vtg_cli_pipe_data");
  const fs::path train_dir = fresh_dir("vtg_cli_pipe_train");
  const fs::path eval_dir = fresh_dir("vtg_cli_pipe_eval");
  const fs::path eval_dir2 = fresh_dir("vtg_cli_pipe_eval2");
  const fs::path diag_dir = fresh_dir("vtg_cli_pipe_diag");
  const fs::path comp_dir = fresh_dir("vtg_cli_pipe_comp");

  // Small dataset matching the tiny model's feat_dim.
  CHECK(run_cli({"synth", "--size", "24", "--seed", "5", "--out", data_dir.string(), "--set",
                 "n_frames=40", "--set", "grid_rows=2", "--set", "grid_cols=4", "--set",
                 "feat_dim=32", "--set", "min_len=5", "--set", "max_len=12", "--set",
                 "n_classes=6"}) == 0);

  const fs::path cfg_path = data_dir / "train-config.json";
  {
    std::ofstream os(cfg_path);
    os << kTinyTrainConfig;
  }
  CHECK(run_cli({"train", "--config", cfg_path.string(), "--dataset",
                 (data_dir / "dataset.jsonl").string(), "--out", train_dir.string()}) == 0);
  CHECK(fs::exists(train_dir / "final" / "config.json"));
  CHECK(fs::exists(train_dir / "metrics.jsonl"));

  // Feature container for compress: reuse one example's synthetic features.
  {
    const auto data = load_dataset(data_dir / "dataset.jsonl");
    save_features(comp_dir / "features.bin", encode_synthetic(data[0].video));
  }
  CHECK(run_cli({"compress", "--features", (comp_dir / "features.bin").string(), "--u", "2",
                 "--k", "4", "--c", "2", "--out", comp_dir.string()}) == 0);
  CHECK(fs::exists(comp_dir / "s_tokens.bin"));
  CHECK(fs::exists(comp_dir / "trace.json"));

  // Evaluation report with all grounding fields present.
  CHECK(run_cli({"eval", "--checkpoint", (train_dir / "final").string(), "--dataset",
                 (data_dir / "dataset.jsonl").string(), "--task", "tg", "--out",
                 eval_dir.string()}) == 0);
  {
    std::ifstream is(eval_dir / "report.json");
    nlohmann::json report;
    is >> report;
    CHECK(report.at("schema") == 1);
    for (const char* key : {"r1@0.3", "r1@0.5", "r1@0.7", "miou"}) {
      CHECK(report.at("metrics").contains(key));
    }
  }

  // Identical eval runs produce byte-identical reports.
  CHECK(run_cli({"eval", "--checkpoint", (train_dir / "final").string(), "--dataset",
                 (data_dir / "dataset.jsonl").string(), "--task", "tg", "--out",
                 eval_dir2.string()}) == 0);
  CHECK(slurp(eval_dir / "report.json") == slurp(eval_dir2 / "report.json"));
  CHECK(slurp(eval_dir / "samples.csv") == slurp(eval_dir2 / "samples.csv"));
  CHECK(slurp(eval_dir / "run-manifest.json") == slurp(eval_dir2 / "run-manifest.json"));

  // Diagnostic across perturbations.
  CHECK(run_cli({"diagnose", "--checkpoint", (train_dir / "final").string(), "--dataset",
                 (data_dir / "dataset.jsonl").string(), "--perturb", "shuffle", "--out",
                 diag_dir.string()}) == 0);
  CHECK(fs::exists(diag_dir / "shuffle" / "report.json"));
  CHECK(fs::exists(diag_dir / "shuffle" / "histogram.csv"));

  for (const auto& d : {data_dir, train_dir, eval_dir, eval_dir2, diag_dir, comp_dir}) {
    fs::remove_all(d);
  }
}
