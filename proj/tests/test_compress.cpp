// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "vtg/compress.hpp"
#include "vtg/features.hpp"

using namespace vtg;

namespace {

// Hand-built feature set with user-supplied cls rows and uniform attention.
FrameFeatureSet make_features(const Matf& cls, const Matf& patches, int p) {
  FrameFeatureSet f;
  f.n = static_cast<int>(cls.rows());
  f.p = p;
  f.feat_dim = static_cast<int>(cls.cols());
  f.cls = cls;
  f.patches = patches;
  f.attn = Matf::Constant(f.n, p, 1.0f / static_cast<float>(p));
  f.validate();
  return f;
}

FrameFeatureSet random_features(int n, int p, int fd, uint64_t seed) {
  Rng rng(seed);
  Matf cls(n, fd);
  Matf patches(n * p, fd);
  for (Eigen::Index i = 0; i < cls.size(); ++i) cls.data()[i] = static_cast<float>(rng.normal());
  for (Eigen::Index i = 0; i < patches.size(); ++i)
    patches.data()[i] = static_cast<float>(rng.normal());
  return make_features(cls, patches, p);
}

// A video whose frames are all identical copies of one frame with distinct
// random patches.
FrameFeatureSet tiled_video(int n, int p, int fd, uint64_t seed) {
  Rng rng(seed);
  Matf frame(p, fd);
  for (Eigen::Index i = 0; i < frame.size(); ++i) frame.data()[i] = static_cast<float>(rng.normal());
  Matf cls(n, fd);
  Matf patches(n * p, fd);
  for (int t = 0; t < n; ++t) {
    cls.row(t) = frame.colwise().mean();
    patches.middleRows(t * p, p) = frame;
  }
  return make_features(cls, patches, p);
}

}  // namespace

TEST_CASE("tau = -1 degenerates to a uniform split") {
  FrameFeatureSet f = random_features(100, 4, 8, 1);
  CompressParams params;
  params.u = 4;
  params.k = 2;
  params.c = 1;
  params.sim_threshold = -1.0f;
  const auto gops = partition_gops(f, params);
  REQUIRE(gops.size() == 4);
  for (int g = 0; g < 4; ++g) {
    CHECK(gops[static_cast<size_t>(g)].first == 25 * g);
    CHECK(gops[static_cast<size_t>(g)].last == 25 * g + 24);
    CHECK(gops[static_cast<size_t>(g)].span() == 25);
  }
}

TEST_CASE("u = n gives one single-frame GOP per frame") {
  FrameFeatureSet f = random_features(10, 4, 8, 2);
  CompressParams params;
  params.u = 10;
  params.k = 1;
  params.c = 0;
  const auto gops = partition_gops(f, params);
  REQUIRE(gops.size() == 10);
  for (int g = 0; g < 10; ++g) {
    CHECK(gops[static_cast<size_t>(g)].first == g);
    CHECK(gops[static_cast<size_t>(g)].last == g);
    CHECK(gops[static_cast<size_t>(g)].idr == g);
  }
}

TEST_CASE("hard scene cut splits GOPs exactly at the cut") {
  // Two scenes with orthogonal cls vectors (cosine 0 < 0.9 across the cut).
  const int n = 100;
  Matf cls = Matf::Zero(n, 8);
  for (int i = 0; i < n; ++i) cls(i, i < 50 ? 0 : 1) = 1.0f;
  Matf patches = Matf::Ones(n * 4, 8);
  FrameFeatureSet f = make_features(cls, patches, 4);
  CompressParams params;
  params.u = 2;
  params.k = 2;
  params.c = 0;
  params.sim_threshold = 0.9f;
  const auto gops = partition_gops(f, params);
  REQUIRE(gops.size() == 2);
  // Exhaustive membership check against the cut.
  CHECK(gops[0].first == 0);
  CHECK(gops[0].last == 49);
  CHECK(gops[1].first == 50);
  CHECK(gops[1].last == 99);
}

TEST_CASE("u greater than n is rejected") {
  FrameFeatureSet f = random_features(5, 4, 8, 3);
  CompressParams params;
  params.u = 6;
  params.k = 1;
  params.c = 0;
  CHECK_THROWS_AS(partition_gops(f, params), Error);
}

TEST_CASE("key selection follows attention with index tie-breaks") {
  FrameFeatureSet f = random_features(3, 8, 8, 4);
  Gop gop{1, 0, 2};

  SECTION("one-hot attention selects its patch") {
    f.attn.row(1).setZero();
    f.attn(1, 5) = 1.0f;
    CompressParams params;
    params.u = 1;
    params.k = 1;
    params.c = 0;
    const auto sel = select_key_tokens(f, gop, params);
    REQUIRE(sel.key_ids == std::vector<int>{5});
  }

  SECTION("uniform attention breaks ties by lower index") {
    f.attn.row(1).setConstant(1.0f / 8.0f);
    CompressParams params;
    params.u = 1;
    params.k = 2;
    params.c = 0;
    const auto sel = select_key_tokens(f, gop, params);
    REQUIRE(sel.key_ids == std::vector<int>{0, 1});
  }
}

TEST_CASE("context tokens stride uniformly over non-key patches") {
  FrameFeatureSet f = random_features(3, 16, 8, 5);
  Gop gop{1, 0, 2};
  CompressParams params;
  params.u = 1;
  params.k = 4;
  params.c = 4;
  const auto sel = select_key_tokens(f, gop, params);
  REQUIRE(sel.key_ids.size() == 4);
  REQUIRE(sel.context_ids.size() == 4);

  // Brute-force stride oracle.
  std::vector<int> remaining;
  for (int j = 0; j < 16; ++j) {
    if (std::find(sel.key_ids.begin(), sel.key_ids.end(), j) == sel.key_ids.end()) {
      remaining.push_back(j);
    }
  }
  const int q = static_cast<int>(remaining.size());
  std::vector<int> expected;
  for (int t = 0; t < 4; ++t) expected.push_back(remaining[static_cast<size_t>(t * q / 4)]);
  CHECK(sel.context_ids == expected);

  // Disjointness
  for (int id : sel.context_ids) {
    CHECK(std::find(sel.key_ids.begin(), sel.key_ids.end(), id) == sel.key_ids.end());
  }
}

TEST_CASE("group assignment matches an exhaustive nearest-neighbor oracle") {
  FrameFeatureSet f = random_features(3, 6, 8, 6);
  Gop gop{1, 0, 2};
  CompressParams params;
  params.u = 1;
  params.k = 2;
  params.c = 0;
  const auto sel = select_key_tokens(f, gop, params);
  const GroupLabels groups = assign_groups(f, gop, sel);

  Matf selected(2, 8);
  selected.row(0) = f.patches.row(1 * 6 + sel.key_ids[0]);
  selected.row(1) = f.patches.row(1 * 6 + sel.key_ids[1]);
  for (int t = 0; t <= 2; ++t) {
    for (int j = 0; j < 6; ++j) {
      const Vecf patch = f.patches.row(t * 6 + j).transpose();
      int best = 0;
      float best_sim = -2.0f;
      for (int g = 0; g < 2; ++g) {
        const Vecf sv = selected.row(g).transpose();
        const float sim = cosine_sim<float>(patch, sv);
        if (sim > best_sim) {
          best_sim = sim;
          best = g;
        }
      }
      CHECK(groups(t, j) == best);
    }
  }
}

TEST_CASE("identical patches join the key group; full ties go to group 0") {
  const int fd = 4;
  Matf patches(2 * 3, fd);
  // Frame 0 (IDR): two orthogonal selected tokens + one duplicate of key 0.
  patches.row(0) = Vecf::Unit(fd, 0).transpose();
  patches.row(1) = Vecf::Unit(fd, 1).transpose();
  patches.row(2) = Vecf::Unit(fd, 0).transpose();
  patches.middleRows(3, 3) = patches.middleRows(0, 3);
  Matf cls = Matf::Ones(2, fd);
  FrameFeatureSet f = make_features(cls, patches, 3);
  Gop gop{0, 0, 1};
  TokenSelection sel;
  sel.key_ids = {0, 1};
  const GroupLabels groups = assign_groups(f, gop, sel);
  CHECK(groups(0, 0) == 0);
  CHECK(groups(0, 1) == 1);
  CHECK(groups(0, 2) == 0);  // identical to key 0

  // All-equidistant: patches orthogonal to both selected tokens tie at 0.
  Matf patches2 = patches;
  patches2.row(2) = Vecf::Unit(fd, 2).transpose();
  patches2.row(5) = Vecf::Unit(fd, 3).transpose();
  FrameFeatureSet f2 = make_features(cls, patches2, 3);
  const GroupLabels groups2 = assign_groups(f2, gop, sel);
  CHECK(groups2(0, 2) == 0);
  CHECK(groups2(1, 2) == 0);
}

TEST_CASE("static removal collapses identical frames onto the IDR") {
  FrameFeatureSet f = tiled_video(5, 4, 8, 7);
  Gop gop{2, 0, 4};
  CompressParams params;
  params.u = 1;
  params.k = 2;
  params.c = 1;
  const auto sel = select_key_tokens(f, gop, params);
  const GroupLabels groups = assign_groups(f, gop, sel);
  const RemovedMask removed = remove_static(gop, groups);
  for (int t = 0; t < 5; ++t) {
    for (int j = 0; j < 4; ++j) {
      CHECK(static_cast<int>(removed(t, j)) == (t == 2 ? 0 : 1));
    }
  }
}

TEST_CASE("static removal keeps everything when labels always change") {
  Gop gop{1, 0, 2};
  GroupLabels groups(3, 2);
  groups << 0, 1,
            1, 0,
            0, 1;
  const RemovedMask removed = remove_static(gop, groups);
  CHECK(removed.cast<int>().sum() == 0);
}

TEST_CASE("alternating labels A,B,A keep all tokens") {
  Gop gop{0, 0, 2};
  GroupLabels groups(3, 1);
  groups << 0, 1, 0;
  const RemovedMask removed = remove_static(gop, groups);
  CHECK(removed.cast<int>().sum() == 0);
}

TEST_CASE("merged tokens are group means") {
  FrameFeatureSet f = random_features(3, 4, 8, 8);
  Gop gop{1, 0, 2};

  SECTION("single-member group equals the patch") {
    GroupLabels groups = GroupLabels::Zero(3, 4);
    groups(2, 3) = 1;  // lone member of group 1
    RemovedMask removed = RemovedMask::Zero(3, 4);
    const Matf merged = merge_tokens(f, gop, groups, removed, 2);
    REQUIRE(merged.rows() == 2);
    CHECK((merged.row(1) - f.patches.row(2 * 4 + 3)).cwiseAbs().maxCoeff() == 0.0f);
  }

  SECTION("duplicate vectors average to themselves") {
    Matf patches = f.patches;
    patches.row(0 * 4 + 0) = patches.row(1 * 4 + 0);
    FrameFeatureSet g = make_features(f.cls, patches, 4);
    GroupLabels groups = GroupLabels::Constant(3, 4, 1);
    groups(0, 0) = 0;
    groups(1, 0) = 0;
    RemovedMask removed = RemovedMask::Zero(3, 4);
    const Matf merged = merge_tokens(g, gop, groups, removed, 2);
    CHECK((merged.row(0) - patches.row(0)).cwiseAbs().maxCoeff() < 1e-6f);
  }

  SECTION("random group matches a naive summation oracle") {
    GroupLabels groups(3, 4);
    Rng rng(99);
    for (int t = 0; t < 3; ++t) {
      for (int j = 0; j < 4; ++j) groups(t, j) = static_cast<int>(rng.below(3));
    }
    RemovedMask removed = RemovedMask::Zero(3, 4);
    const Matf merged = merge_tokens(f, gop, groups, removed, 3);

    for (int g = 0, row = 0; g < 3; ++g) {
      Vecf sum = Vecf::Zero(8);
      int count = 0;
      for (int t = 0; t < 3; ++t) {
        for (int j = 0; j < 4; ++j) {
          if (groups(t, j) == g) {
            sum += f.patches.row(t * 4 + j).transpose();
            ++count;
          }
        }
      }
      if (count == 0) continue;
      CHECK((merged.row(row).transpose() - sum / static_cast<float>(count)).cwiseAbs().maxCoeff() <
            1e-6f);
      ++row;
    }
  }
}

TEST_CASE("token accounting matches the n + u*w budget") {
  SyntheticVideoSpec spec;
  spec.n_frames = 100;
  spec.grid_rows = 8;
  spec.grid_cols = 8;
  spec.events = {{Segment{30, 60}, 2}};
  spec.seed = 21;
  const FrameFeatureSet f = encode_synthetic(spec);
  CompressParams params;
  params.u = 4;
  params.k = 48;
  params.c = 16;
  const CompressResult result = compress(f, params);
  CHECK(result.m() <= 256);
  CHECK(result.trace.size() == 4);
  const int llm_tokens = f.n + result.m();
  CHECK(llm_tokens <= 100 + 4 * 64);
  CHECK(result.s_tokens.cols() == f.feat_dim);
}

TEST_CASE("single-frame video compresses to its own merged groups") {
  FrameFeatureSet f = random_features(1, 8, 8, 10);
  CompressParams params;
  params.u = 1;
  params.k = 3;
  params.c = 2;
  const CompressResult result = compress(f, params);
  CHECK(result.m() <= 5);
  CHECK(result.trace[0].removed == 0);
}

TEST_CASE("identical-frames video with one GOP compresses to exactly w tokens") {
  FrameFeatureSet f = tiled_video(20, 8, 16, 11);
  CompressParams params;
  params.u = 1;
  params.k = 6;
  params.c = 2;
  const CompressResult result = compress(f, params);
  CHECK(result.m() == params.w());
  // All P-frame tokens removed: survivors are exactly the IDR frame's tokens.
  CHECK(result.trace[0].removed == (20 - 1) * 8);
}

TEST_CASE("m never exceeds u*w and S-tokens are means of surviving members") {
  Rng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 4 + static_cast<int>(rng.below(20));
    const int p = 4 + static_cast<int>(rng.below(5));
    FrameFeatureSet f = random_features(n, p, 8, 1000 + static_cast<uint64_t>(trial));
    CompressParams params;
    params.u = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(std::min(4, n))));
    params.k = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(p - 1)));
    params.c = static_cast<int>(rng.below(static_cast<uint64_t>(p - params.k + 1)));
    params.sim_threshold = static_cast<float>(rng.uniform(-1.0, 1.0));
    const CompressResult result = compress(f, params);
    CHECK(result.m() <= params.u * params.w());

    // Independent pipeline re-run: recompute each GOP's group means by brute
    // force and compare against the emitted S-tokens.
    const auto gops = partition_gops(f, params);
    int row = 0;
    for (const auto& gop : gops) {
      const auto sel = select_key_tokens(f, gop, params);
      const GroupLabels groups = assign_groups(f, gop, sel);
      const RemovedMask removed = remove_static(gop, groups);
      for (int g = 0; g < params.w(); ++g) {
        Vecf sum = Vecf::Zero(8);
        int count = 0;
        for (int t = gop.first; t <= gop.last; ++t) {
          for (int j = 0; j < p; ++j) {
            if (!removed(t - gop.first, j) && groups(t - gop.first, j) == g) {
              sum += f.patches.row(t * p + j).transpose();
              ++count;
            }
          }
        }
        if (count == 0) continue;
        CHECK((result.s_tokens.row(row).transpose() - sum / static_cast<float>(count))
                  .cwiseAbs()
                  .maxCoeff() < 1e-5f);
        ++row;
      }
    }
    CHECK(row == result.m());
  }
}

TEST_CASE("frame permutations inside a pinned GOP leave group means unchanged") {
  // Diagonal construction: patch (t, j) carries direction e_{(t+j) mod n}, so
  // within every spatial coordinate all frames hold pairwise distinct group
  // labels. The static rule then removes nothing under any frame order and the
  // group means must be order-free.
  const int n = 6;
  const int p = 6;
  const int fd = 16;
  Rng rng(55);
  Matf patches(n * p, fd);
  for (int t = 0; t < n; ++t) {
    for (int j = 0; j < p; ++j) {
      Vecf v = Vecf::Zero(fd);
      v((t + j) % n) = 1.0f;
      for (int c = 0; c < fd; ++c) v(c) += static_cast<float>(rng.normal(0.0, 0.01));
      patches.row(t * p + j) = v.transpose();
    }
  }
  Matf cls = Matf::Ones(n, fd);
  FrameFeatureSet f = make_features(cls, patches, p);
  CompressParams params;
  params.u = 1;
  params.k = 5;
  params.c = 1;  // all six IDR patches become group seeds
  params.sim_threshold = -1.0f;

  const CompressResult base = compress(f, params);
  REQUIRE(base.trace[0].removed == 0);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng shuffle_rng(77);
  for (int round = 0; round < 5; ++round) {
    shuffle_rng.shuffle(perm);
    Matf shuffled(n * p, fd);
    for (int t = 0; t < n; ++t) {
      shuffled.middleRows(t * p, p) = f.patches.middleRows(perm[static_cast<size_t>(t)] * p, p);
    }
    FrameFeatureSet g = make_features(cls, shuffled, p);
    const CompressResult permuted = compress(g, params);
    REQUIRE(permuted.trace[0].removed == 0);
    REQUIRE(permuted.m() == base.m());

    // Compare as multisets of rows (group ids may be relabeled).
    std::vector<int> used(static_cast<size_t>(base.m()), 0);
    for (int i = 0; i < permuted.m(); ++i) {
      bool found = false;
      for (int j = 0; j < base.m(); ++j) {
        if (!used[static_cast<size_t>(j)] &&
            (permuted.s_tokens.row(i) - base.s_tokens.row(j)).cwiseAbs().maxCoeff() < 1e-5f) {
          used[static_cast<size_t>(j)] = 1;
          found = true;
          break;
        }
      }
      CHECK(found);
    }
  }
}

TEST_CASE("compress is a pure function of inputs") {
  FrameFeatureSet f = random_features(30, 6, 8, 42);
  CompressParams params;
  params.u = 3;
  params.k = 2;
  params.c = 2;
  const CompressResult a = compress(f, params);
  const CompressResult b = compress(f, params);
  CHECK(a.m() == b.m());
  CHECK(std::memcmp(a.s_tokens.data(), b.s_tokens.data(),
                    sizeof(float) * static_cast<size_t>(a.s_tokens.size())) == 0);
}
