// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtg/backbone.hpp"
#include "vtg/compress.hpp"
#include "vtg/dataset.hpp"
#include "vtg/objectives.hpp"
#include "vtg/temporal_head.hpp"
#include "vtg/tokenizer.hpp"

namespace vtg {

struct RunConfig {
  ModelConfig model;
  HeadConfig head;
  CompressParams compress{4, 12, 4, 0.8f};  // desk-scale; the paper-style row is u=4,k=48,c=16
  LossWeights weights;
  bool use_temporal_head = true;  // false: timestamps rendered as text (ablation)

  int batch_size = 8;
  double lr = 3e-4;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  // global norm; 0 disables
  int epochs = 5;
  double warmup_frac = 0.05;
  uint64_t seed = 1;
  int max_response_len = 512;
  int threads = 0;  // 0: hardware concurrency

  nlohmann::json to_json() const {
    return {{"model", model.to_json()},
            {"head",
             {{"mode", to_string(head.mode)}, {"init_seed", head.init_seed}}},
            {"compress",
             {{"u", compress.u},
              {"k", compress.k},
              {"c", compress.c},
              {"tau", compress.sim_threshold}}},
            {"weights",
             {{"lambda_text", weights.lambda_text},
              {"lambda_l1", weights.lambda_l1},
              {"lambda_iou", weights.lambda_iou}}},
            {"use_temporal_head", use_temporal_head},
            {"batch_size", batch_size},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},
            {"grad_clip", grad_clip},
            {"epochs", epochs},
            {"warmup_frac", warmup_frac},
            {"seed", seed},
            {"max_response_len", max_response_len},
            {"threads", threads}};
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("head")) {
      c.head.mode = reweight_mode_from_string(j.at("head").value("mode", "add"));
      c.head.init_seed = j.at("head").value("init_seed", uint64_t{2});
    }
    if (j.contains("compress")) {
      c.compress.u = j.at("compress").value("u", c.compress.u);
      c.compress.k = j.at("compress").value("k", c.compress.k);
      c.compress.c = j.at("compress").value("c", c.compress.c);
      c.compress.sim_threshold = j.at("compress").value("tau", c.compress.sim_threshold);
    }
    if (j.contains("weights")) {
      c.weights.lambda_text = j.at("weights").value("lambda_text", 1.0);
      c.weights.lambda_l1 = j.at("weights").value("lambda_l1", 1.0);
      c.weights.lambda_iou = j.at("weights").value("lambda_iou", 1.0);
    }
    c.use_temporal_head = j.value("use_temporal_head", true);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.epochs = j.value("epochs", c.epochs);
    c.warmup_frac = j.value("warmup_frac", c.warmup_frac);
    c.seed = j.value("seed", c.seed);
    c.max_response_len = j.value("max_response_len", c.max_response_len);
    c.threads = j.value("threads", c.threads);
    c.head.d = c.model.d;
    return c;
  }
};

// Cosine decay with linear warmup, decaying to zero.
inline double lr_at_step(double lr_max, int step, int total_steps, double warmup_frac) {
  const int warmup = std::max(1, static_cast<int>(std::lround(warmup_frac * total_steps)));
  if (step < warmup) return lr_max * (step + 1) / warmup;
  if (total_steps <= warmup) return lr_max;
  const double progress = static_cast<double>(step - warmup) / (total_steps - warmup);
  return lr_max * 0.5 * (1.0 + std::cos(M_PI * progress));
}

// AdamW over a fixed list of parameter tensors (decoupled weight decay).
class AdamW {
 public:
  void init(const std::vector<Matf*>& params, double beta1, double beta2, double eps, double wd) {
    beta1_ = beta1;
    beta2_ = beta2;
    eps_ = eps;
    wd_ = wd;
    t_ = 0;
    m_.clear();
    v_.clear();
    for (const Matf* p : params) {
      m_.push_back(Matf::Zero(p->rows(), p->cols()));
      v_.push_back(Matf::Zero(p->rows(), p->cols()));
    }
  }

  void step(const std::vector<Matf*>& params, const std::vector<Matf*>& grads, double lr) {
    ++t_;
    const float c1 = 1.0f - static_cast<float>(std::pow(beta1_, t_));
    const float c2 = 1.0f - static_cast<float>(std::pow(beta2_, t_));
    for (size_t i = 0; i < params.size(); ++i) {
      Matf& p = *params[i];
      const Matf& g = *grads[i];
      Matf& m = m_[i];
      Matf& v = v_[i];
      m = static_cast<float>(beta1_) * m + (1.0f - static_cast<float>(beta1_)) * g;
      v = static_cast<float>(beta2_) * v +
          (1.0f - static_cast<float>(beta2_)) * g.cwiseProduct(g);
      const Matf mhat = m / c1;
      const Matf denom = ((v / c2).array().sqrt() + static_cast<float>(eps_)).matrix();
      p -= static_cast<float>(lr) *
           (mhat.cwiseQuotient(denom) + static_cast<float>(wd_) * p);
    }
  }

  int64_t steps_taken() const { return t_; }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (size_t i = 0; i < m_.size(); ++i) {
      save_matrix(dir / ("m" + std::to_string(i) + ".bin"), m_[i]);
      save_matrix(dir / ("v" + std::to_string(i) + ".bin"), v_[i]);
    }
    nlohmann::json st{{"t", t_}, {"count", m_.size()}};
    std::ofstream os(dir / "state.json");
    os << st.dump() << '\n';
  }

  void load(const std::filesystem::path& dir) {
    std::ifstream is(dir / "state.json");
    if (!is) throw Error(ErrorCategory::io, "missing optimizer state: " + dir.string());
    nlohmann::json st;
    is >> st;
    t_ = st.at("t").get<int64_t>();
    const size_t count = st.at("count").get<size_t>();
    if (count != m_.size()) {
      throw Error(ErrorCategory::data, "optimizer state does not match parameter list");
    }
    for (size_t i = 0; i < count; ++i) {
      m_[i] = load_matrix<float>(dir / ("m" + std::to_string(i) + ".bin"));
      v_[i] = load_matrix<float>(dir / ("v" + std::to_string(i) + ".bin"));
    }
  }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, wd_ = 0.0;
  int64_t t_ = 0;
  std::vector<Matf> m_, v_;
};

namespace detail {

inline void add_adapter_grad(AdapterGrad<float>& into, const AdapterGrad<float>& from) {
  if (from.a_t.size() > 0) into.a_t += from.a_t;
  if (from.b_t.size() > 0) into.b_t += from.b_t;
  if (from.a_s.size() > 0) into.a_s += from.a_s;
  if (from.b_s.size() > 0) into.b_s += from.b_s;
}

inline void add_model_grads(ModelGrads<float>& into, const ModelGrads<float>& from) {
  for (size_t l = 0; l < into.layers.size(); ++l) {
    for (size_t p = 0; p < 6; ++p) add_adapter_grad(into.layers[l][p], from.layers[l][p]);
  }
  into.gphi_w += from.gphi_w;
  into.gphi_b += from.gphi_b;
  into.loc_emb += from.loc_emb;
}

inline void add_head_grads(TemporalHead<float>::Grads& into,
                           const TemporalHead<float>::Grads& from) {
  into.mlp_w1 += from.mlp_w1;
  into.mlp_b1 += from.mlp_b1;
  into.mlp_w2 += from.mlp_w2;
  into.mlp_b2 += from.mlp_b2;
  into.concat_w += from.concat_w;
  into.concat_b += from.concat_b;
  into.attn_wq += from.attn_wq;
  into.attn_wk += from.attn_wk;
  into.attn_wv += from.attn_wv;
  into.attn_wo += from.attn_wo;
  for (int l = 0; l < 3; ++l) {
    into.ind.w[static_cast<size_t>(l)] += from.ind.w[static_cast<size_t>(l)];
    into.ind.b[static_cast<size_t>(l)] += from.ind.b[static_cast<size_t>(l)];
    into.bnd.w[static_cast<size_t>(l)] += from.bnd.w[static_cast<size_t>(l)];
    into.bnd.b[static_cast<size_t>(l)] += from.bnd.b[static_cast<size_t>(l)];
  }
  into.ind.proj_w += from.ind.proj_w;
  into.ind.proj_b += from.ind.proj_b;
  into.bnd.proj_w += from.bnd.proj_w;
  into.bnd.proj_b += from.bnd.proj_b;
}

}  // namespace detail

struct StepLog {
  int step = 0;
  LossBundle losses;
  double lr = 0.0;
};

class Trainer {
 public:
  Trainer(const RunConfig& cfg, const Tokenizer& tok, std::vector<TrainExample> dataset)
      : cfg_(cfg),
        tok_(tok),
        model_(resolved_model_config(cfg, tok)),
        head_(resolved_head_config(cfg)),
        dataset_(std::move(dataset)) {
    feature_cache_.resize(dataset_.size());
    bind_optimizer();
    opt_.init(trainable_, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps, cfg_.weight_decay);
  }

  // Builds the tokenizer from the dataset's text surface. In the ablation
  // configuration every frame index becomes a vocabulary word so timestamp
  // text tokenizes to single tokens.
  static Tokenizer fit_tokenizer(const RunConfig& cfg, const std::vector<TrainExample>& data) {
    std::vector<std::string> corpus;
    for (const auto& ex : data) {
      corpus.push_back(ex.prompt);
      corpus.push_back(cfg.use_temporal_head
                           ? ex.target
                           : target_with_text_timestamps(ex.target, ex.gt_segments));
      for (const auto& opt : ex.options) corpus.push_back(opt);
    }
    if (!cfg.use_temporal_head) {
      int max_frames = 0;
      for (const auto& ex : data) max_frames = std::max(max_frames, ex.video.n_frames);
      std::string numbers = "frames to";
      for (int i = 0; i < max_frames; ++i) numbers += " " + std::to_string(i);
      corpus.push_back(numbers);
    }
    Tokenizer tok;
    tok.fit(corpus);
    return tok;
  }

  const RunConfig& config() const { return cfg_; }
  const Tokenizer& tokenizer() const { return tok_; }
  Model<float>& model() { return model_; }
  TemporalHead<float>& head() { return head_; }
  int completed_epochs() const { return epoch_; }
  int global_step() const { return step_; }

  struct ExampleTensors {
    Matf t_tokens;
    Matf s_tokens;
  };

  const ExampleTensors& example_tensors(size_t index) {
    auto& slot = feature_cache_[index];
    if (!slot) {
      const TrainExample& ex = dataset_[index];
      FrameFeatureSet feats = ex.features_path.empty() ? encode_synthetic(ex.video)
                                                       : load_features(ex.features_path);
      CompressResult comp = compress(feats, cfg_.compress);
      slot = ExampleTensors{feats.cls, std::move(comp.s_tokens)};
    }
    return *slot;
  }

  struct ExampleBackwardResult {
    ModelGrads<float> model_grads;
    TemporalHead<float>::Grads head_grads;
    double text = 0.0, ce = 0.0, l1 = 0.0, giou = 0.0;
    bool has_head_loss = false;
  };

  // Teacher-forced pass for one example, returning per-loss values and
  // gradients scaled for a batch of size `batch_size`.
  ExampleBackwardResult example_backward(size_t index, int batch_size) {
    const TrainExample& ex = dataset_[index];
    const ExampleTensors& tensors = example_tensors(index);

    const std::vector<int> prompt_ids = tok_.encode(ex.prompt);
    const std::string target_str = cfg_.use_temporal_head
                                       ? ex.target
                                       : target_with_text_timestamps(ex.target, ex.gt_segments);
    std::vector<int> target_ids = tok_.encode(target_str);
    target_ids.push_back(tok_.eos_id());

    std::vector<int> text_ids = prompt_ids;
    text_ids.insert(text_ids.end(), target_ids.begin(), target_ids.end());
    TokenStream<float> stream = model_.make_stream(tensors.t_tokens, tensors.s_tokens, text_ids);
    const int L = stream.length();
    const int n_vis = stream.n_t + stream.n_s;
    const int first_target = n_vis + static_cast<int>(prompt_ids.size());

    ForwardCache<float> cache = model_.forward(
        stream, cfg_.weights.lambda_text > 0.0 ? LogitsMode::all : LogitsMode::none);

    ExampleBackwardResult result;
    result.model_grads = model_.zero_grads();
    result.head_grads = head_.zero_grads();

    // Text loss: position j predicts token j+1 over the target span.
    Matf dlogits;
    if (cfg_.weights.lambda_text > 0.0) {
      std::vector<int> targets(static_cast<size_t>(L), 0);
      std::vector<uint8_t> mask(static_cast<size_t>(L), 0);
      for (int j = first_target - 1; j < L - 1; ++j) {
        targets[static_cast<size_t>(j)] = stream.token_ids[static_cast<size_t>(j + 1)];
        mask[static_cast<size_t>(j)] = 1;
      }
      Matf dl;
      result.text = text_loss<float>(cache.logits, targets, mask, &dl);
      dlogits = dl * static_cast<float>(cfg_.weights.lambda_text / batch_size);
    }

    // Temporal head losses at teacher-forced <LOC> positions.
    Matf d_hidden;
    if (cfg_.use_temporal_head && ex.task != Task::VQA && !ex.gt_segments.empty()) {
      std::vector<int> loc_rows;
      for (int i = first_target; i < L; ++i) {
        if (stream.token_ids[static_cast<size_t>(i)] == model_.config().loc_id()) {
          loc_rows.push_back(i);
        }
      }
      const auto pairs = match_locs(static_cast<int>(loc_rows.size()),
                                    static_cast<int>(ex.gt_segments.size()));
      if (!pairs.empty()) {
        d_hidden = Matf::Zero(L, model_.config().d);
        const int n_pairs = static_cast<int>(pairs.size());
        const float pair_scale = 1.0f / static_cast<float>(n_pairs * batch_size);
        const Matf x_t = cache.hidden.topRows(stream.n_t);
        for (const auto& [li, gi] : pairs) {
          const Segment& gt = ex.gt_segments[static_cast<size_t>(gi)];
          const Matf h = cache.hidden.row(loc_rows[static_cast<size_t>(li)]);
          auto head_cache = head_.forward(x_t, h);

          const auto labels = fg_labels(gt, stream.n_t);
          Vecf dprobs;
          result.ce += indicator_loss<float>(head_cache.probs, labels, &dprobs) / n_pairs;
          Matf d_l1, d_giou;
          const auto bl = boundary_loss<float>(head_cache.offsets, gt, &d_l1, &d_giou);
          result.l1 += bl.l1 / n_pairs;
          result.giou += bl.giou / n_pairs;

          dprobs *= pair_scale;
          Matf doffsets = d_l1 * static_cast<float>(cfg_.weights.lambda_l1 * pair_scale) +
                          d_giou * static_cast<float>(cfg_.weights.lambda_iou * pair_scale);
          Matf dx_t = Matf::Zero(stream.n_t, model_.config().d);
          Matf dh = Matf::Zero(1, model_.config().d);
          head_.backward(head_cache, dprobs, doffsets, result.head_grads, dx_t, dh);
          d_hidden.topRows(stream.n_t) += dx_t;
          d_hidden.row(loc_rows[static_cast<size_t>(li)]) += dh.row(0);
        }
        result.has_head_loss = true;
      }
    }

    model_.backward(stream, cache, dlogits, d_hidden, result.model_grads);
    return result;
  }

  // One optimizer step over a batch of dataset indices. Per-example gradients
  // are computed in parallel but merged in batch order, so results do not
  // depend on the thread count.
  StepLog train_step(const std::vector<size_t>& batch, double lr) {
    const int B = static_cast<int>(batch.size());
    std::vector<ExampleBackwardResult> results(static_cast<size_t>(B));

    int n_threads = cfg_.threads > 0 ? cfg_.threads
                                     : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min(n_threads, B));
    if (n_threads == 1) {
      for (int i = 0; i < B; ++i) results[static_cast<size_t>(i)] = example_backward(batch[static_cast<size_t>(i)], B);
    } else {
      // Feature tensors are materialized up front: the cache is not guarded.
      for (int i = 0; i < B; ++i) example_tensors(batch[static_cast<size_t>(i)]);
      std::vector<std::thread> workers;
      std::atomic<int> next{0};
      for (int w = 0; w < n_threads; ++w) {
        workers.emplace_back([&] {
          for (int i = next.fetch_add(1); i < B; i = next.fetch_add(1)) {
            results[static_cast<size_t>(i)] = example_backward(batch[static_cast<size_t>(i)], B);
          }
        });
      }
      for (auto& t : workers) t.join();
    }

    ModelGrads<float> model_grads = model_.zero_grads();
    auto head_grads = head_.zero_grads();
    double text = 0, ce = 0, l1 = 0, giou = 0;
    int head_examples = 0;
    for (const auto& r : results) {
      detail::add_model_grads(model_grads, r.model_grads);
      detail::add_head_grads(head_grads, r.head_grads);
      text += r.text / B;
      if (r.has_head_loss) {
        ce += r.ce;
        l1 += r.l1;
        giou += r.giou;
        ++head_examples;
      }
    }
    if (head_examples > 0) {
      ce /= head_examples;
      l1 /= head_examples;
      giou /= head_examples;
    }

    std::vector<Matf*> grads;
    Model<float>::collect_grads(model_.config(), model_grads, grads, model_.config().train_gphi);
    if (cfg_.use_temporal_head) {
      TemporalHead<float>::collect_grads(head_.config(), head_grads, grads);
    }

    double sq = 0.0;
    for (const Matf* g : grads) sq += static_cast<double>(g->squaredNorm());
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
      throw Error(ErrorCategory::runtime, "non-finite gradient norm");
    }
    if (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) {
      const float scale = static_cast<float>(cfg_.grad_clip / norm);
      for (Matf* g : grads) *g *= scale;
    }

    opt_.step(trainable_, grads, lr);

    StepLog log;
    log.step = step_;
    log.lr = lr;
    log.losses = total_loss(text, ce, l1, giou, cfg_.weights);  // throws on non-finite
    return log;
  }

  // Full training loop with per-epoch checkpoints and a JSON-lines metrics
  // log. Deterministic given (seed, config, dataset order).
  std::vector<StepLog> train(const std::filesystem::path& out_dir,
                             std::ostream* metrics_stream = nullptr) {
    return train_until(cfg_.epochs, out_dir, metrics_stream);
  }

  // Trains up to stop_epoch (bounded by the configured epoch budget); the
  // learning-rate schedule always spans the full budget, so an interrupted
  // run continues on the same trajectory after load_checkpoint.
  std::vector<StepLog> train_until(int stop_epoch, const std::filesystem::path& out_dir,
                                   std::ostream* metrics_stream = nullptr) {
    std::filesystem::create_directories(out_dir);
    std::ofstream metrics_file;
    if (!metrics_stream) {
      metrics_file.open(out_dir / "metrics.jsonl", epoch_ > 0 ? std::ios::app : std::ios::out);
      metrics_stream = &metrics_file;
    }

    std::vector<size_t> train_indices;
    for (size_t i = 0; i < dataset_.size(); ++i) train_indices.push_back(i);

    const int steps_per_epoch =
        static_cast<int>((train_indices.size() + cfg_.batch_size - 1) / cfg_.batch_size);
    const int total_steps = steps_per_epoch * cfg_.epochs;

    std::vector<StepLog> logs;
    const int last_epoch = std::min(stop_epoch, cfg_.epochs);
    while (epoch_ < last_epoch) {
      std::vector<size_t> order = train_indices;
      Rng(cfg_.seed).fork(0xE90C + static_cast<uint64_t>(epoch_)).shuffle(order);
      for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg_.batch_size)) {
        std::vector<size_t> batch(order.begin() + static_cast<long>(off),
                                  order.begin() + static_cast<long>(std::min(
                                                      off + static_cast<size_t>(cfg_.batch_size),
                                                      order.size())));
        const double lr = lr_at_step(cfg_.lr, step_, total_steps, cfg_.warmup_frac);
        StepLog log;
        try {
          log = train_step(batch, lr);
        } catch (const Error&) {
          nlohmann::json dump{{"step", step_},       {"epoch", epoch_},
                              {"lr", lr},            {"batch_size", batch.size()},
                              {"event", "nan_loss"}, {"seed", cfg_.seed}};
          (*metrics_stream) << dump.dump() << '\n';
          metrics_stream->flush();
          throw Error(ErrorCategory::runtime, "non-finite loss or gradient at step " +
                                                  std::to_string(step_) + "; diagnostics logged");
        }
        ++step_;
        log.step = step_;
        logs.push_back(log);
        (*metrics_stream) << nlohmann::json{{"step", log.step},
                                            {"text", log.losses.text},
                                            {"ce", log.losses.ce},
                                            {"l1", log.losses.l1},
                                            {"giou", log.losses.giou},
                                            {"total", log.losses.total},
                                            {"lr", log.lr}}
                                 .dump()
                          << '\n';
      }
      ++epoch_;
      save_checkpoint(out_dir / ("epoch_" + std::to_string(epoch_)));
    }
    if (epoch_ == cfg_.epochs) save_checkpoint(out_dir / "final");
    return logs;
  }

  void save_checkpoint(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json meta{{"run", cfg_.to_json()}, {"epoch", epoch_}, {"step", step_},
                        {"schema", 1}};
    std::ofstream os(dir / "config.json");
    os << meta.dump(2) << '\n';
    tok_.save(dir / "vocab.json");
    model_.save_params(dir / "params");
    for (auto& p : head_.params()) {
      save_matrix(dir / "params" / (p.name + ".bin"), *p.tensor);
    }
    opt_.save(dir / "optim");
  }

  static Trainer load_checkpoint(const std::filesystem::path& dir,
                                 std::vector<TrainExample> dataset) {
    std::ifstream is(dir / "config.json");
    if (!is) throw Error(ErrorCategory::data, "missing checkpoint config: " + dir.string());
    nlohmann::json meta;
    is >> meta;
    RunConfig cfg = RunConfig::from_json(meta.at("run"));
    Tokenizer tok = Tokenizer::load(dir / "vocab.json");
    Trainer trainer(cfg, tok, std::move(dataset));
    trainer.model_.load_params(dir / "params");
    for (auto& p : trainer.head_.params()) {
      *p.tensor = load_matrix<float>(dir / "params" / (p.name + ".bin"));
    }
    trainer.opt_.load(dir / "optim");
    trainer.epoch_ = meta.at("epoch").get<int>();
    trainer.step_ = meta.at("step").get<int>();
    return trainer;
  }

  // Bitwise snapshot of every frozen tensor, for the frozen-base contract.
  std::vector<Matf> snapshot_frozen() {
    std::vector<Matf> out;
    for (const auto& p : model_.params()) {
      if (!p.trainable) out.push_back(*p.tensor);
    }
    return out;
  }

  bool frozen_unchanged(const std::vector<Matf>& snapshot) {
    size_t i = 0;
    for (const auto& p : model_.params()) {
      if (p.trainable) continue;
      if (i >= snapshot.size()) return false;
      if (snapshot[i].rows() != p.tensor->rows() || snapshot[i].cols() != p.tensor->cols()) {
        return false;
      }
      if (std::memcmp(snapshot[i].data(), p.tensor->data(),
                      sizeof(float) * static_cast<size_t>(p.tensor->size())) != 0) {
        return false;
      }
      ++i;
    }
    return i == snapshot.size();
  }

 private:
  static ModelConfig resolved_model_config(const RunConfig& cfg, const Tokenizer& tok) {
    ModelConfig mc = cfg.model;
    mc.vocab = tok.vocab_size();
    return mc;
  }

  static HeadConfig resolved_head_config(const RunConfig& cfg) {
    HeadConfig hc = cfg.head;
    hc.d = cfg.model.d;
    return hc;
  }

  void bind_optimizer() {
    trainable_.clear();
    for (auto& p : model_.params()) {
      if (p.trainable) trainable_.push_back(p.tensor);
    }
    if (cfg_.use_temporal_head) {
      for (auto& p : head_.params()) trainable_.push_back(p.tensor);
    }
  }

  RunConfig cfg_;
  Tokenizer tok_;
  Model<float> model_;
  TemporalHead<float> head_;
  std::vector<TrainExample> dataset_;
  std::vector<std::optional<ExampleTensors>> feature_cache_;
  std::vector<Matf*> trainable_;
  AdamW opt_;
  int epoch_ = 0;
  int step_ = 0;
};

}  // namespace vtg
