// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "vtg/eval_runner.hpp"
#include "vtg/inference.hpp"
#include "vtg/tokenizer.hpp"
#include "vtg/trainer.hpp"

namespace fs = std::filesystem;
using namespace vtg;
using Catch::Approx;

namespace {

// Small-but-real configuration; desk defaults are too heavy for unit tests.
RunConfig small_run_config() {
  RunConfig cfg;
  cfg.model.n_layers = 2;
  cfg.model.d = 48;
  cfg.model.n_heads = 4;
  cfg.model.mlp_hidden = 64;
  cfg.model.context = 256;
  cfg.model.feat_dim = 32;
  cfg.model.adapter.total_rank = 16;
  cfg.model.adapter.lora_alpha = 16.0;
  cfg.compress = CompressParams{2, 4, 2, 0.8f};
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.lr = 1e-3;
  cfg.seed = 11;
  cfg.threads = 2;
  return cfg;
}

std::vector<TrainExample> small_dataset(int size, uint64_t seed, std::vector<Task> tasks = {Task::TG}) {
  SynthParams p;
  p.size = size;
  p.n_frames = 40;
  p.grid_rows = 2;
  p.grid_cols = 4;
  p.feat_dim = 32;
  p.n_classes = 6;
  p.min_len = 5;
  p.max_len = 12;
  p.tasks = std::move(tasks);
  return synth_dataset(p, seed);
}

}  // namespace

TEST_CASE("tokenizer round-trips template text") {
  Tokenizer tok;
  tok.fit({"During which frames does action_3 happen?", "During <LOC>."});
  const auto ids = tok.encode("During <LOC>.");
  CHECK(tok.decode(ids) == "During <LOC>.");
  CHECK(std::count(ids.begin(), ids.end(), tok.loc_id()) == 1);

  // Byte fallback for unseen words.
  const auto unseen = tok.encode("zebra");
  CHECK(unseen.size() == 5);
  for (int id : unseen) CHECK(id < Tokenizer::kBytes);
  CHECK(tok.decode(unseen) == "zebra");

  const fs::path vocab_path = fs::temp_directory_path() / "vtg_vocab_test.json";
  tok.save(vocab_path);
  Tokenizer loaded = Tokenizer::load(vocab_path);
  CHECK(loaded.vocab_size() == tok.vocab_size());
  CHECK(loaded.encode("During <LOC>.") == ids);
  fs::remove(vocab_path);
}

TEST_CASE("<LOC> sits outside the base vocabulary range") {
  Tokenizer tok;
  tok.fit({"a b c"});
  CHECK(tok.loc_id() == tok.vocab_size() - 1);
  CHECK(tok.loc_id() > tok.eos_id());
}

TEST_CASE("learning-rate schedule warms up then decays to zero") {
  const double peak = lr_at_step(1.0, 10, 100, 0.1);
  CHECK(lr_at_step(1.0, 0, 100, 0.1) < 0.2);
  CHECK(peak == Approx(1.0).margin(0.11));
  CHECK(lr_at_step(1.0, 99, 100, 0.1) < 0.01);
  // Non-increasing after warmup.
  double last = peak;
  for (int s = 10; s < 100; s += 7) {
    const double lr = lr_at_step(1.0, s, 100, 0.1);
    CHECK(lr <= last + 1e-12);
    last = lr;
  }
}

TEST_CASE("AdamW minimizes a simple quadratic") {
  Matf x = Matf::Constant(1, 1, 9.0f);
  std::vector<Matf*> params = {&x};
  AdamW opt;
  opt.init(params, 0.9, 0.999, 1e-8, 0.0);
  for (int i = 0; i < 400; ++i) {
    Matf g = 2.0f * (x.array() - 3.0f).matrix();
    std::vector<Matf*> grads = {&g};
    opt.step(params, grads, 0.05);
  }
  CHECK(x(0, 0) == Approx(3.0f).margin(0.05));
}

TEST_CASE("teacher-forced <LOC> extraction positions match the target token indices") {
  RunConfig cfg = small_run_config();
  auto data = small_dataset(6, 5, {Task::DVC});
  Tokenizer tok = Trainer::fit_tokenizer(cfg, data);
  Trainer trainer(cfg, tok, data);

  const TrainExample& ex = data[0];
  const auto prompt_ids = tok.encode(ex.prompt);
  std::vector<int> target_ids = tok.encode(ex.target);
  target_ids.push_back(tok.eos_id());

  // Expected <LOC> positions in the stream, straight from the tokenization.
  const auto& tensors = trainer.example_tensors(0);
  const int base = static_cast<int>(tensors.t_tokens.rows() + tensors.s_tokens.rows() +
                                    prompt_ids.size());
  std::vector<int> expected;
  for (size_t i = 0; i < target_ids.size(); ++i) {
    if (target_ids[i] == tok.loc_id()) expected.push_back(base + static_cast<int>(i));
  }
  REQUIRE(static_cast<int>(expected.size()) == count_locs(ex.target));

  std::vector<int> all_ids = prompt_ids;
  all_ids.insert(all_ids.end(), target_ids.begin(), target_ids.end());
  auto stream = trainer.model().make_stream(tensors.t_tokens, tensors.s_tokens, all_ids);
  std::vector<int> found;
  for (int i = 0; i < stream.length(); ++i) {
    if (stream.token_ids[static_cast<size_t>(i)] == trainer.model().config().loc_id()) {
      found.push_back(i);
    }
  }
  CHECK(found == expected);
}

TEST_CASE("base parameters stay bitwise frozen through training steps") {
  RunConfig cfg = small_run_config();
  cfg.weights.lambda_text = 0.0;  // boundary-only updates
  auto data = small_dataset(8, 7);
  Tokenizer tok = Trainer::fit_tokenizer(cfg, data);
  Trainer trainer(cfg, tok, data);
  const auto snapshot = trainer.snapshot_frozen();

  std::vector<size_t> batch = {0, 1, 2, 3};
  trainer.train_step(batch, 1e-3);
  CHECK(trainer.frozen_unchanged(snapshot));

  // And with the text loss enabled.
  RunConfig cfg2 = small_run_config();
  Tokenizer tok2 = Trainer::fit_tokenizer(cfg2, data);
  Trainer trainer2(cfg2, tok2, data);
  const auto snapshot2 = trainer2.snapshot_frozen();
  for (int i = 0; i < 3; ++i) trainer2.train_step(batch, 1e-3);
  CHECK(trainer2.frozen_unchanged(snapshot2));
}

TEST_CASE("loss on a fixed batch decreases over 50 steps") {
  RunConfig cfg = small_run_config();
  auto data = small_dataset(4, 9);
  Tokenizer tok = Trainer::fit_tokenizer(cfg, data);
  Trainer trainer(cfg, tok, data);

  std::vector<size_t> batch = {0, 1, 2, 3};
  double first_avg = 0.0, last_avg = 0.0;
  for (int step = 0; step < 50; ++step) {
    const auto log = trainer.train_step(batch, 1e-3);
    if (step < 5) first_avg += log.losses.total / 5.0;
    if (step >= 45) last_avg += log.losses.total / 5.0;
  }
  CHECK(last_avg < first_avg);
}

TEST_CASE("training is deterministic given seed, config and data order") {
  RunConfig cfg = small_run_config();
  cfg.epochs = 1;
  auto data = small_dataset(10, 13);
  const fs::path dir_a = fs::temp_directory_path() / "vtg_train_det_a";
  const fs::path dir_b = fs::temp_directory_path() / "vtg_train_det_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  Tokenizer tok = Trainer::fit_tokenizer(cfg, data);
  Trainer a(cfg, tok, data);
  Trainer b(cfg, tok, data);
  const auto logs_a = a.train(dir_a);
  const auto logs_b = b.train(dir_b);
  REQUIRE(logs_a.size() == logs_b.size());
  for (size_t i = 0; i < logs_a.size(); ++i) {
    CHECK(logs_a[i].losses.total == logs_b[i].losses.total);
  }
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("resume from a checkpoint reproduces the uninterrupted run") {
  RunConfig cfg = small_run_config();
  cfg.epochs = 2;
  auto data = small_dataset(10, 15);
  Tokenizer tok = Trainer::fit_tokenizer(cfg, data);

  const fs::path full_dir = fs::temp_directory_path() / "vtg_resume_full";
  const fs::path part_dir = fs::temp_directory_path() / "vtg_resume_part";
  fs::remove_all(full_dir);
  fs::remove_all(part_dir);

  Trainer full(cfg, tok, data);
  const auto full_logs = full.train(full_dir);

  Trainer partial(cfg, tok, data);
  partial.train_until(1, part_dir);

  Trainer resumed = Trainer::load_checkpoint(part_dir / "epoch_1", data);
  REQUIRE(resumed.completed_epochs() == 1);
  const auto resumed_logs = resumed.train(part_dir);

  const size_t steps_per_epoch = full_logs.size() / 2;
  REQUIRE(resumed_logs.size() == steps_per_epoch);
  for (size_t i = 0; i < resumed_logs.size(); ++i) {
    CHECK(resumed_logs[i].losses.total ==
          Approx(full_logs[steps_per_epoch + i].losses.total).margin(1e-6));
  }
  fs::remove_all(full_dir);
  fs::remove_all(part_dir);
}

TEST_CASE("non-finite parameters abort with a runtime error") {
  RunConfig cfg = small_run_config();
  auto data = small_dataset(4, 17);
  Tokenizer tok = Trainer::fit_tokenizer(cfg, data);
  Trainer trainer(cfg, tok, data);
  trainer.model().loc_embedding().setConstant(std::numeric_limits<float>::infinity());
  std::vector<size_t> batch = {0, 1};
  CHECK_THROWS_AS(trainer.train_step(batch, 1e-3), Error);
}

TEST_CASE("checkpoints restore a usable inference bundle") {
  RunConfig cfg = small_run_config();
  auto data = small_dataset(8, 19);
  Tokenizer tok = Trainer::fit_tokenizer(cfg, data);
  Trainer trainer(cfg, tok, data);
  const fs::path dir = fs::temp_directory_path() / "vtg_bundle_test";
  fs::remove_all(dir);
  trainer.train(dir);

  ModelBundle bundle = ModelBundle::load(dir / "final");
  const FrameFeatureSet feats = features_for(data[0]);
  Prediction pred = predict(bundle, data[0], feats, 1);
  REQUIRE(pred.segments.size() == 1);
  CHECK(pred.segments[0].start >= 0.0);
  CHECK(pred.segments[0].end <= data[0].video.n_frames - 1);
  fs::remove_all(dir);
}
