// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support/gradcheck.hpp"
#include "vtg/objectives.hpp"
#include "vtg/temporal_head.hpp"

using namespace vtg;
using Catch::Approx;

namespace {

HeadConfig small_config(ReweightMode mode = ReweightMode::add) {
  HeadConfig cfg;
  cfg.d = 12;
  cfg.mode = mode;
  cfg.init_seed = 3;
  return cfg;
}

template <class S>
Mat<S> random_mat(int rows, int cols, uint64_t seed, double sigma = 1.0) {
  Rng rng(seed);
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.normal(0, sigma));
  return m;
}

// Naive sliding-window conv oracle for one layer (kernel 3, zero padding).
template <class S>
Mat<S> conv_oracle(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b) {
  const int n = static_cast<int>(x.rows());
  const int in = static_cast<int>(x.cols());
  const int out = static_cast<int>(w.rows());
  Mat<S> y(n, out);
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < out; ++o) {
      S acc = b(0, o);
      for (int t = 0; t < 3; ++t) {
        const int j = i + t - 1;
        if (j < 0 || j >= n) continue;
        for (int c = 0; c < in; ++c) acc += w(o, t * in + c) * x(j, c);
      }
      y(i, o) = acc;
    }
  }
  return y;
}

}  // namespace

TEST_CASE("project_loc degenerate and identity configurations") {
  HeadConfig cfg = small_config();

  SECTION("zero weights output the bias") {
    TemporalHead<double> head(cfg);
    head.mlp_w1().setZero();
    head.mlp_w2().setZero();
    Rng rng(5);
    for (Eigen::Index i = 0; i < head.mlp_b2().size(); ++i) head.mlp_b2().data()[i] = rng.normal();
    const Matd h = random_mat<double>(1, cfg.d, 7);
    const Matd h_loc = head.project_loc(h);
    CHECK((h_loc - head.mlp_b2()).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("identity configuration passes the input through") {
    HeadConfig id_cfg = cfg;
    id_cfg.mlp_relu = false;
    TemporalHead<double> head(id_cfg);
    head.mlp_w1() = Matd::Identity(cfg.d, cfg.d);
    head.mlp_w2() = Matd::Identity(cfg.d, cfg.d);
    head.mlp_b1().setZero();
    head.mlp_b2().setZero();
    const Matd h = random_mat<double>(1, cfg.d, 11);
    CHECK((head.project_loc(h) - h).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("random input matches a two-matmul oracle") {
    TemporalHead<double> head(cfg);
    const Matd h = random_mat<double>(1, cfg.d, 13);
    const Matd h_loc = head.project_loc(h);
    Matd h1 = h * head.mlp_w1().transpose() + head.mlp_b1();
    Matd a1 = h1.cwiseMax(0.0);
    Matd expected = a1 * head.mlp_w2().transpose() + head.mlp_b2();
    CHECK((h_loc - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("reweight modes") {
  SECTION("add with zero h_loc is the identity") {
    TemporalHead<double> head(small_config(ReweightMode::add));
    const Matd x = random_mat<double>(5, 12, 17);
    const Matd h_loc = Matd::Zero(1, 12);
    CHECK((head.reweight(x, h_loc) - x).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("add broadcast base case with one row") {
    TemporalHead<double> head(small_config(ReweightMode::add));
    const Matd x = random_mat<double>(1, 12, 19);
    const Matd h_loc = random_mat<double>(1, 12, 23);
    CHECK((head.reweight(x, h_loc) - (x + h_loc)).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("concat with [I | 0] projection returns x_t") {
    TemporalHead<double> head(small_config(ReweightMode::concat));
    head.concat_w().setZero();
    head.concat_w().leftCols(12) = Matd::Identity(12, 12);
    head.concat_b().setZero();
    const Matd x = random_mat<double>(4, 12, 29);
    const Matd h_loc = random_mat<double>(1, 12, 31);
    CHECK((head.reweight(x, h_loc) - x).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("unknown mode string is rejected") {
    CHECK_THROWS_AS(reweight_mode_from_string("multiply"), Error);
    CHECK(reweight_mode_from_string("self_atten") == ReweightMode::self_atten);
  }
}

TEST_CASE("indicator branch") {
  HeadConfig cfg = small_config();

  SECTION("all-zero weights give a constant sigmoid(bias)") {
    TemporalHead<double> head(cfg);
    auto& br = head.indicator_branch();
    for (auto& w : br.w) w.setZero();
    for (auto& b : br.b) b.setZero();
    br.proj_w.setZero();
    br.proj_b(0, 0) = 0.4;
    const Vecd probs = head.indicator(random_mat<double>(6, cfg.d, 37));
    const double expected = 1.0 / (1.0 + std::exp(-0.4));
    for (int i = 0; i < 6; ++i) CHECK(probs(i) == Approx(expected).epsilon(1e-12));
  }

  SECTION("outputs stay inside (0, 1)") {
    TemporalHead<double> head(cfg);
    auto& br = head.indicator_branch();
    br.proj_w = random_mat<double>(1, cfg.d, 41);
    const Vecd probs = head.indicator(random_mat<double>(8, cfg.d, 43, 2.0));
    for (int i = 0; i < 8; ++i) {
      CHECK(probs(i) > 0.0);
      CHECK(probs(i) < 1.0);
    }
  }

  SECTION("random input matches a direct convolution oracle") {
    TemporalHead<double> head(cfg);
    auto& br = head.indicator_branch();
    br.proj_w = random_mat<double>(1, cfg.d, 47);
    const Matd x = random_mat<double>(5, cfg.d, 53);
    const Vecd probs = head.indicator(x);

    Matd cur = x;
    for (int l = 0; l < 3; ++l) {
      cur = conv_oracle(cur, br.w[static_cast<size_t>(l)], br.b[static_cast<size_t>(l)])
                .cwiseMax(0.0);
    }
    Matd logits = cur * br.proj_w.transpose();
    logits.rowwise() += br.proj_b.row(0);
    for (int i = 0; i < 5; ++i) {
      CHECK(probs(i) == Approx(1.0 / (1.0 + std::exp(-logits(i, 0)))).margin(1e-5));
    }
  }
}

TEST_CASE("boundary branch") {
  HeadConfig cfg = small_config();

  SECTION("zero weights give constant offsets") {
    TemporalHead<double> head(cfg);
    auto& br = head.boundary_branch();
    for (auto& w : br.w) w.setZero();
    br.proj_w.setZero();
    br.proj_b(0, 0) = 0.3;
    br.proj_b(0, 1) = -0.2;
    const Matd offsets = head.boundary(random_mat<double>(7, cfg.d, 59));
    for (int i = 1; i < 7; ++i) {
      CHECK(offsets(i, 0) == Approx(offsets(0, 0)));
      CHECK(offsets(i, 1) == Approx(offsets(0, 1)));
    }
  }

  SECTION("offsets are non-negative for random inputs") {
    TemporalHead<double> head(cfg);
    auto& br = head.boundary_branch();
    br.proj_w = random_mat<double>(2, cfg.d, 61);
    const Matd offsets = head.boundary(random_mat<double>(9, cfg.d, 67, 2.0));
    CHECK((offsets.array() >= 0.0).all());
  }

  SECTION("random input matches the conv oracle through softplus") {
    TemporalHead<double> head(cfg);
    auto& br = head.boundary_branch();
    br.proj_w = random_mat<double>(2, cfg.d, 71);
    const Matd x = random_mat<double>(5, cfg.d, 73);
    const Matd offsets = head.boundary(x);

    Matd cur = x;
    for (int l = 0; l < 3; ++l) {
      cur = conv_oracle(cur, br.w[static_cast<size_t>(l)], br.b[static_cast<size_t>(l)])
                .cwiseMax(0.0);
    }
    Matd logits = cur * br.proj_w.transpose();
    logits.rowwise() += br.proj_b.row(0);
    for (int i = 0; i < 5; ++i) {
      for (int ch = 0; ch < 2; ++ch) {
        CHECK(offsets(i, ch) == Approx(std::log1p(std::exp(logits(i, ch)))).margin(1e-5));
      }
    }
  }
}

TEST_CASE("decode_segments constructs, ranks and suppresses candidates") {
  SECTION("one-hot probability decodes its own candidate") {
    Vecd probs = Vecd::Zero(10);
    probs(5) = 1.0;
    Matd offsets = Matd::Zero(10, 2);
    offsets(5, 0) = 2.0;
    offsets(5, 1) = 3.0;
    const auto segs = decode_segments<double>(probs, offsets, 1);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].start == Approx(3.0));
    CHECK(segs[0].end == Approx(8.0));
    CHECK(segs[0].score == Approx(1.0));
  }

  SECTION("identical candidates collapse to one survivor") {
    Vecd probs = Vecd::Constant(6, 0.5);
    Matd offsets(6, 2);
    for (int i = 0; i < 6; ++i) {
      offsets(i, 0) = i;        // all candidates decode to [0, 5]
      offsets(i, 1) = 5 - i;
    }
    const auto segs = decode_segments<double>(probs, offsets, 10);
    CHECK(segs.size() == 1);
  }

  SECTION("matches an exhaustive NMS oracle on random candidates") {
    Rng rng(79);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 10;
      Vecd probs(n);
      Matd offsets(n, 2);
      for (int i = 0; i < n; ++i) {
        probs(i) = rng.uniform(0.01, 0.99);
        offsets(i, 0) = rng.uniform(0, 4);
        offsets(i, 1) = rng.uniform(0, 4);
      }
      const auto got = decode_segments<double>(probs, offsets, n, 0.5);

      // Oracle: explicit candidate list, stable sort, O(n^2) suppression scan.
      std::vector<Segment> cands(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        cands[static_cast<size_t>(i)] = Segment{
            std::clamp(i - offsets(i, 0), 0.0, 9.0), std::clamp(i + offsets(i, 1), 0.0, 9.0),
            probs(i)};
      }
      std::stable_sort(cands.begin(), cands.end(),
                       [](const Segment& a, const Segment& b) { return a.score > b.score; });
      std::vector<Segment> expected;
      for (const auto& c : cands) {
        bool keep = true;
        for (const auto& k : expected) {
          if (iou_1d(c, k) >= 0.5) keep = false;
        }
        if (keep) expected.push_back(c);
      }
      REQUIRE(got.size() == expected.size());
      for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].start == Approx(expected[i].start));
        CHECK(got[i].end == Approx(expected[i].end));
        CHECK(got[i].score == Approx(expected[i].score));
      }
    }
  }

  SECTION("ranking is invariant under positive monotone prob transforms") {
    Rng rng(83);
    Vecd probs(8);
    Matd offsets(8, 2);
    for (int i = 0; i < 8; ++i) {
      probs(i) = rng.uniform(0.05, 0.95);
      offsets(i, 0) = rng.uniform(0, 3);
      offsets(i, 1) = rng.uniform(0, 3);
    }
    const auto base = decode_segments<double>(probs, offsets, 8, 0.6);
    Vecd squashed = probs.unaryExpr([](double p) { return std::tanh(3.0 * p); });
    const auto transformed = decode_segments<double>(squashed, offsets, 8, 0.6);
    REQUIRE(base.size() == transformed.size());
    for (size_t i = 0; i < base.size(); ++i) {
      CHECK(base[i].start == Approx(transformed[i].start));
      CHECK(base[i].end == Approx(transformed[i].end));
    }
  }

  SECTION("top_k below one is rejected") {
    Vecd probs = Vecd::Constant(3, 0.5);
    Matd offsets = Matd::Zero(3, 2);
    CHECK_THROWS_AS(decode_segments<double>(probs, offsets, 0), Error);
  }
}

TEST_CASE("saliency is the indicator identity with clip pooling") {
  Vecd probs(4);
  probs << 0.2, 0.9, 0.4, 0.1;
  const Vecd sal = saliency(probs);
  CHECK((sal - probs).cwiseAbs().maxCoeff() == 0.0);
  int argmax_sal = 0, argmax_probs = 0;
  sal.maxCoeff(&argmax_sal);
  probs.maxCoeff(&argmax_probs);
  CHECK(argmax_sal == argmax_probs);

  SECTION("constant saliency pools to constant clips") {
    const Vecd flat = Vecd::Constant(100, 0.3);
    const auto clips = clip_scores(flat, 150.0);
    REQUIRE(clips.size() == 75);
    for (double c : clips) CHECK(c == Approx(0.3));
  }

  SECTION("100 frames over 150 seconds pool into 75 hand-checked clips") {
    Vecd ramp(100);
    for (int i = 0; i < 100; ++i) ramp(i) = i;
    const auto clips = clip_scores(ramp, 150.0);
    REQUIRE(clips.size() == 75);
    // Hand-computed pooling: frame i sits at (i + 0.5) * 1.5s; clip c covers
    // [2c, 2c + 2). Clip 0 holds frame 0; clip 1 holds frames {1, 2}; clip 74
    // covers [148, 150) which only frame 99 (149.25s) reaches.
    CHECK(clips[0] == Approx(0.0));
    CHECK(clips[1] == Approx(1.5));
    CHECK(clips[74] == Approx(99.0));
    // Per-clip means always recompute from raw frames.
    for (int c = 0; c < 75; ++c) {
      double sum = 0.0;
      int count = 0;
      for (int i = 0; i < 100; ++i) {
        const double t = (i + 0.5) * 1.5;
        if (t >= 2.0 * c && t < 2.0 * (c + 1)) {
          sum += ramp(i);
          ++count;
        }
      }
      REQUIRE(count > 0);
      CHECK(clips[static_cast<size_t>(c)] == Approx(sum / count));
    }
  }
}

TEST_CASE("head gradients match finite differences in all reweight modes") {
  for (ReweightMode mode : {ReweightMode::add, ReweightMode::concat, ReweightMode::self_atten}) {
    HeadConfig cfg = small_config(mode);
    TemporalHead<double> head(cfg);
    // Give the zero-initialized projection heads some signal.
    head.indicator_branch().proj_w = random_mat<double>(1, cfg.d, 89);
    head.boundary_branch().proj_w = random_mat<double>(2, cfg.d, 97);

    const int n = 7;
    const Segment gt{1.5, 4.5};
    const std::vector<uint8_t> labels = fg_labels(gt, n);
    Matd x_t = random_mat<double>(n, cfg.d, 101);
    Matd h = random_mat<double>(1, cfg.d, 103);

    auto loss_fn = [&] {
      auto cache = head.forward(x_t, h);
      const double ce = indicator_loss<double>(cache.probs, labels);
      const auto b = boundary_loss<double>(cache.offsets, gt);
      return ce + b.l1 + b.giou;
    };

    auto cache = head.forward(x_t, h);
    Vecd dprobs;
    indicator_loss<double>(cache.probs, labels, &dprobs);
    Matd d_l1, d_giou;
    boundary_loss<double>(cache.offsets, gt, &d_l1, &d_giou);
    const Matd doffsets = d_l1 + d_giou;

    auto grads = head.zero_grads();
    Matd dx_t = Matd::Zero(n, cfg.d);
    Matd dh = Matd::Zero(1, cfg.d);
    head.backward(cache, dprobs, doffsets, grads, dx_t, dh);

    Rng pick(107 + static_cast<uint64_t>(mode));
    CHECK(vtg::testing::check_gradient(x_t, dx_t, loss_fn, pick, 1e-4, 1e-6, 12));
    CHECK(vtg::testing::check_gradient(h, dh, loss_fn, pick, 1e-4, 1e-6, 12));
    CHECK(vtg::testing::check_gradient(head.mlp_w1(), grads.mlp_w1, loss_fn, pick, 1e-4, 1e-6, 8));
    CHECK(vtg::testing::check_gradient(head.mlp_w2(), grads.mlp_w2, loss_fn, pick, 1e-4, 1e-6, 8));
    CHECK(vtg::testing::check_gradient(head.indicator_branch().w[0], grads.ind.w[0], loss_fn, pick,
                                       1e-4, 1e-6, 8));
    CHECK(vtg::testing::check_gradient(head.indicator_branch().proj_w, grads.ind.proj_w, loss_fn,
                                       pick, 1e-4, 1e-6, 8));
    CHECK(vtg::testing::check_gradient(head.boundary_branch().w[1], grads.bnd.w[1], loss_fn, pick,
                                       1e-4, 1e-6, 8));
    CHECK(vtg::testing::check_gradient(head.boundary_branch().proj_w, grads.bnd.proj_w, loss_fn,
                                       pick, 1e-4, 1e-6, 8));
    if (mode == ReweightMode::concat) {
      CHECK(vtg::testing::check_gradient(head.concat_w(), grads.concat_w, loss_fn, pick, 1e-4,
                                         1e-6, 8));
    }
  }
}
