#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcn/coattn.hpp"
#include "dcn/ops.hpp"
#include "test_util.hpp"

using namespace dcn;
using dcn::testutil::random_tensor;

namespace {

struct Layers {
  ParamStore store;
  std::vector<coattn::CoAttnLayerParams> p;

  Layers(std::size_t L, std::size_t d, std::size_t h, std::size_t K, std::uint64_t seed, double bias_scale = 0.3) {
    Rng rng(seed);
    for (std::size_t l = 0; l < L; ++l)
      for (const auto& spec : coattn::layer_specs(l, d, K)) store.add(spec, rng);
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (store[i].name.find(".b_") != std::string::npos)
        store[i].value = random_tensor(store[i].value.shape(), seed + 100 + i, bias_scale);
    }
    for (std::size_t l = 0; l < L; ++l) p.push_back(coattn::bind_layer(store, l, h));
  }

  void zero_fusion() {
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& n = store[i].name;
      if (n.ends_with("W_Q") || n.ends_with("W_V") || n.ends_with("b_Q") || n.ends_with("b_V"))
        store[i].value.fill(0.0);
    }
  }
};

double sq_dist_free_softmax_row(const std::vector<double>& x, std::size_t j, double div) {
  double mx = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp((v - mx) / div);
  return std::exp((x[j] - mx) / div) / z;
}

// Straight-line loop implementation of one layer in Both mode.
std::pair<Tensor, Tensor> naive_layer(const Tensor& Q, const Tensor& V, const ParamStore& s, std::size_t l,
                                      std::size_t h) {
  const std::string pre = "layer" + std::to_string(l) + ".";
  const std::size_t d = Q.rows(), N = Q.cols(), T = V.cols();
  const bool has_mem = s.contains(pre + "M_Q");
  const std::size_t K = has_mem ? s.get(pre + "M_Q").value.cols() : 0;
  auto aug = [&](const Tensor& X, const char* mem) {
    Tensor out({d, X.cols() + K});
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < X.cols(); ++c) out.at(r, c) = X.at(r, c);
      for (std::size_t k = 0; k < K; ++k) out.at(r, X.cols() + k) = s.get(pre + mem).value.at(r, k);
    }
    return out;
  };
  const Tensor Qa = aug(Q, "M_Q"), Va = aug(V, "M_V");
  const Tensor& Wi = s.get(pre + "W_img_heads").value;
  const Tensor& Wq = s.get(pre + "W_q_heads").value;
  const std::size_t dh = d / h, TK = T + K, NK = N + K;
  Tensor AQ({TK, NK}), AV({NK, TK});
  for (std::size_t head = 0; head < h; ++head) {
    Tensor A({TK, NK});
    for (std::size_t t = 0; t < TK; ++t)
      for (std::size_t n = 0; n < NK; ++n) {
        double acc = 0.0;
        for (std::size_t k = 0; k < dh; ++k) {
          double pv = 0.0, pq = 0.0;
          for (std::size_t r = 0; r < d; ++r) {
            pv += Wi.at(head * dh + k, r) * Va.at(r, t);
            pq += Wq.at(head * dh + k, r) * Qa.at(r, n);
          }
          acc += pv * pq;
        }
        A.at(t, n) = acc;
      }
    const double div = std::sqrt(static_cast<double>(dh));
    for (std::size_t t = 0; t < TK; ++t) {
      std::vector<double> row(NK);
      for (std::size_t n = 0; n < NK; ++n) row[n] = A.at(t, n);
      for (std::size_t n = 0; n < NK; ++n) AQ.at(t, n) += sq_dist_free_softmax_row(row, n, div) / h;
    }
    for (std::size_t n = 0; n < NK; ++n) {
      std::vector<double> col(TK);
      for (std::size_t t = 0; t < TK; ++t) col[t] = A.at(t, n);
      for (std::size_t t = 0; t < TK; ++t) AV.at(n, t) += sq_dist_free_softmax_row(col, t, div) / h;
    }
  }
  auto fuse = [&](const Tensor& X, const Tensor& att, const Tensor& W, const Tensor& b) {
    Tensor out(X.shape());
    for (std::size_t m = 0; m < X.cols(); ++m)
      for (std::size_t r = 0; r < d; ++r) {
        double z = b[r];
        for (std::size_t k = 0; k < d; ++k) z += W.at(r, k) * X.at(k, m) + W.at(r, d + k) * att.at(k, m);
        out.at(r, m) = std::max(z, 0.0) + X.at(r, m);
      }
    return out;
  };
  Tensor Qhat({d, T}), Vhat({d, N});
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t n = 0; n < NK; ++n) Qhat.at(r, t) += Qa.at(r, n) * AQ.at(t, n);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t t = 0; t < TK; ++t) Vhat.at(r, n) += Va.at(r, t) * AV.at(n, t);
  }
  return {fuse(Q, Vhat, s.get(pre + "W_Q").value, s.get(pre + "b_Q").value),
          fuse(V, Qhat, s.get(pre + "W_V").value, s.get(pre + "b_V").value)};
}

Tensor permute_cols(const Tensor& X, const std::vector<std::size_t>& perm) {
  Tensor out(X.shape());
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t c = 0; c < X.cols(); ++c) out.at(r, c) = X.at(r, perm[c]);
  return out;
}

}  // namespace

TEST(Memory, ZeroKLeavesInputUnchanged) {
  Graph g;
  const Var X = g.constant(random_tensor({3, 2}, 1));
  EXPECT_EQ(coattn::augment_with_memory(X, nullptr).id, X.id);
}

TEST(Memory, ConcatenationExample) {
  Graph g;
  const Var X = g.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  const Var M = g.constant(Tensor::from_rows({{9}, {9}}));
  EXPECT_EQ(coattn::augment_with_memory(X, &M).value(), Tensor::from_rows({{1, 2, 9}, {3, 4, 9}}));
  const Var bad = g.constant(Tensor({3, 1}));
  EXPECT_THROW(coattn::augment_with_memory(X, &bad), DimensionError);
}

TEST(Memory, DefaultIsThree) { EXPECT_EQ(DcnConfig{}.K, 3u); }

TEST(Affinity, ZeroProjectionsGiveZero) {
  Graph g;
  const Var A = coattn::head_affinity(g.constant(random_tensor({4, 5}, 2)), g.constant(random_tensor({4, 3}, 3)),
                                      g.constant(Tensor({2, 4})), g.constant(Tensor({2, 4})));
  EXPECT_EQ(A.value(), Tensor({5, 3}));
}

TEST(Affinity, IdentityRowsGiveDotProduct) {
  Graph g;
  const Var v = g.constant(Tensor::column(std::vector<double>{2, 5}));
  const Var q = g.constant(Tensor::column(std::vector<double>{3, -1}));
  const Var w = g.constant(Tensor::from_rows({{1, 0}}));
  EXPECT_EQ(coattn::head_affinity(v, q, w, w).value()[0], 6.0);
}

TEST(Affinity, MatchesTripleLoop) {
  Graph g;
  const Tensor V = random_tensor({6, 7}, 4), Q = random_tensor({6, 4}, 5);
  const Tensor Wi = random_tensor({3, 6}, 6), Wq = random_tensor({3, 6}, 7);
  const Tensor A = coattn::head_affinity(g.constant(V), g.constant(Q), g.constant(Wi), g.constant(Wq)).value();
  for (std::size_t t = 0; t < 7; ++t)
    for (std::size_t n = 0; n < 4; ++n) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        double pv = 0.0, pq = 0.0;
        for (std::size_t r = 0; r < 6; ++r) {
          pv += Wi.at(k, r) * V.at(r, t);
          pq += Wq.at(k, r) * Q.at(r, n);
        }
        acc += pv * pq;
      }
      EXPECT_NEAR(A.at(t, n), acc, 1e-12);
    }
}

TEST(AttentionMaps, ZeroAffinityIsUniform) {
  Graph g;
  const Var A = g.constant(Tensor({4, 5}));
  const auto maps = coattn::attention_maps(std::span(&A, 1), 3);
  for (double v : maps.A_Q.value().values()) EXPECT_NEAR(v, 0.2, 1e-15);
  for (double v : maps.A_V.value().values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(AttentionMaps, TwoHeadAverageExample) {
  Graph g;
  const Var heads[] = {g.constant(Tensor::from_rows({{0, std::log(3.0)}, {0, 0}})), g.constant(Tensor({2, 2}))};
  const auto maps = coattn::attention_maps(heads, 1);
  EXPECT_NEAR(maps.A_Q.value().at(0, 0), 0.375, 1e-15);
  EXPECT_NEAR(maps.A_Q.value().at(0, 1), 0.625, 1e-15);
}

TEST(AttentionMaps, EmptyHeadListRejected) {
  EXPECT_THROW(coattn::attention_maps({}, 1), DimensionError);
}

TEST(AttentionMaps, DefaultHeadCount) { EXPECT_EQ(DcnConfig{}.h, 4u); }

TEST(Attend, OneHotRowsSelectColumns) {
  Graph g;
  const Tensor Qa = random_tensor({3, 4}, 8);
  Tensor A({5, 4});  // T=3 regions + 2 memory rows
  const std::size_t pick[] = {2, 0, 3};
  for (std::size_t t = 0; t < 3; ++t) A.at(t, pick[t]) = 1.0;
  for (std::size_t t = 3; t < 5; ++t) A.at(t, 1) = 1.0;
  const Tensor Qh = coattn::attend_question(g.constant(Qa), g.constant(A), 3).value();
  ASSERT_EQ(Qh.shape(), (Shape{3, 3}));
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(Qh.at(r, t), Qa.at(r, pick[t]));
}

TEST(Attend, UniformMapGivesColumnMean) {
  Graph g;
  const Tensor Va = random_tensor({3, 6}, 9);
  const Var U = coattn::uniform_map(g, 5, 6);
  const Tensor Vh = coattn::attend_image(g.constant(Va), U, 4).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0.0;
    for (std::size_t t = 0; t < 6; ++t) mean += Va.at(r, t) / 6.0;
    for (std::size_t n = 0; n < 4; ++n) EXPECT_NEAR(Vh.at(r, n), mean, 1e-15);
  }
}

TEST(Attend, MatchesPerEntrySums) {
  Graph g;
  const Tensor Qa = random_tensor({4, 5}, 10), AQ = random_tensor({7, 5}, 11);
  const Tensor Va = random_tensor({4, 7}, 12), AV = random_tensor({5, 7}, 13);
  const Tensor Qh = coattn::attend_question(g.constant(Qa), g.constant(AQ), 4).value();
  const Tensor Vh = coattn::attend_image(g.constant(Va), g.constant(AV), 2).value();
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t t = 0; t < 4; ++t) {
      double s = 0.0;
      for (std::size_t n = 0; n < 5; ++n) s += Qa.at(r, n) * AQ.at(t, n);
      EXPECT_NEAR(Qh.at(r, t), s, 1e-12);
    }
    for (std::size_t n = 0; n < 2; ++n) {
      double s = 0.0;
      for (std::size_t t = 0; t < 7; ++t) s += Va.at(r, t) * AV.at(n, t);
      EXPECT_NEAR(Vh.at(r, n), s, 1e-12);
    }
  }
}

TEST(Fuse, ZeroWeightsAreIdentity) {
  Graph g;
  const Tensor x = random_tensor({3, 4}, 14);
  const Tensor y = coattn::fuse(g.constant(x), g.constant(random_tensor({3, 4}, 15)), g.constant(Tensor({3, 6})),
                                g.constant(Tensor({3, 1})))
                       .value();
  EXPECT_EQ(y, x);
}

TEST(Fuse, ScalarExample) {
  Graph g;
  const Tensor y = coattn::fuse(g.constant(Tensor({1, 1}, 2.0)), g.constant(Tensor({1, 1}, 3.0)),
                                g.constant(Tensor::from_rows({{1, 1}})), g.constant(Tensor({1, 1})))
                       .value();
  EXPECT_EQ(y[0], 7.0);
}

TEST(Fuse, GradientsMatchFiniteDifferences) {
  ParamStore s;
  auto& x = s.add("x", random_tensor({3, 4}, 16));
  auto& a = s.add("a", random_tensor({3, 4}, 17));
  auto& W = s.add("W", random_tensor({3, 6}, 18));
  auto& b = s.add("b", random_tensor({3, 1}, 19));
  const auto rep = testutil::check_op(
      s, [&](Graph& g) { return coattn::fuse(g.param(x), g.param(a), g.param(W), g.param(b)); }, 1e-5);
  EXPECT_LT(rep.max_rel_error, 1e-5);
}

TEST(Layer, ZeroFusionIsIdentity) {
  Layers L(1, 8, 2, 3, 20);
  L.zero_fusion();
  Graph g;
  const Tensor Q = random_tensor({8, 5}, 21), V = random_tensor({8, 4}, 22);
  const auto out = coattn::dense_coattn_layer(g.constant(Q), g.constant(V), L.p[0], DirectionMode::Both);
  EXPECT_EQ(out.Q.value(), Q);
  EXPECT_EQ(out.V.value(), V);
}

TEST(Layer, MatchesStraightLineOracle) {
  for (auto [h, K] : {std::pair<std::size_t, std::size_t>{1, 0}, {2, 1}, {4, 3}}) {
    Layers L(1, 8, h, K, 23 + h);
    Graph g;
    const Tensor Q = random_tensor({8, 3}, 24), V = random_tensor({8, 4}, 25);
    const auto out = coattn::dense_coattn_layer(g.constant(Q), g.constant(V), L.p[0], DirectionMode::Both);
    const auto [nq, nv] = naive_layer(Q, V, L.store, 0, h);
    EXPECT_LT(max_abs_diff(out.Q.value(), nq), 1e-12) << "h=" << h << " K=" << K;
    EXPECT_LT(max_abs_diff(out.V.value(), nv), 1e-12) << "h=" << h << " K=" << K;
  }
}

TEST(Layer, MapsAreRowStochastic) {
  Layers L(1, 8, 2, 3, 26);
  Graph g;
  const auto out = coattn::dense_coattn_layer(g.constant(random_tensor({8, 5}, 27, 3.0)),
                                              g.constant(random_tensor({8, 4}, 28, 3.0)), L.p[0],
                                              DirectionMode::Both);
  EXPECT_EQ(out.maps.A_Q.shape(), (Shape{7, 8}));
  EXPECT_EQ(out.maps.A_V.shape(), (Shape{8, 7}));
  for (const Tensor* m : {&out.maps.A_Q.value(), &out.maps.A_V.value()})
    for (std::size_t r = 0; r < m->rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < m->cols(); ++c) {
        EXPECT_GT(m->at(r, c), 0.0);
        EXPECT_LT(m->at(r, c), 1.0);
        s += m->at(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
}

TEST(Layer, DirectionModesSubstituteUniformMaps) {
  Layers L(1, 8, 2, 1, 29);
  const Tensor Q = random_tensor({8, 3}, 30), V = random_tensor({8, 4}, 31);
  Graph g;
  const auto both = coattn::dense_coattn_layer(g.constant(Q), g.constant(V), L.p[0], DirectionMode::Both);
  const auto qg = coattn::dense_coattn_layer(g.constant(Q), g.constant(V), L.p[0], DirectionMode::QuestionGuided);
  const auto ig = coattn::dense_coattn_layer(g.constant(Q), g.constant(V), L.p[0], DirectionMode::ImageGuided);
  for (double v : qg.maps.A_Q.value().values()) EXPECT_EQ(v, 0.25);
  for (double v : ig.maps.A_V.value().values()) EXPECT_EQ(v, 0.2);
  EXPECT_EQ(qg.maps.A_V.value(), both.maps.A_V.value());
  EXPECT_EQ(ig.maps.A_Q.value(), both.maps.A_Q.value());
  // each mode only changes the output fed by the replaced map
  EXPECT_EQ(qg.Q.value(), both.Q.value());
  EXPECT_NE(qg.V.value(), both.V.value());
  EXPECT_EQ(ig.V.value(), both.V.value());
  EXPECT_NE(ig.Q.value(), both.Q.value());
}

TEST(Layer, AveragingEquivalence) {
  Graph g;
  const std::size_t T = 4;
  const Tensor Qa = random_tensor({6, 5}, 32);
  std::vector<Var> heads;
  for (int i = 0; i < 3; ++i) heads.push_back(g.constant(random_tensor({T + 1, 5}, 33 + i, 2.0)));
  const auto maps = coattn::attention_maps(heads, 2);
  const Tensor lhs = coattn::attend_question(g.constant(Qa), maps.A_Q, T).value();
  Tensor rhs({6, T});
  for (const Var& h : heads) {
    const Var single = coattn::attention_maps(std::span(&h, 1), 2).A_Q;
    const Tensor part = coattn::attend_question(g.constant(Qa), single, T).value();
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += part[i] / 3.0;
  }
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(Layer, RegionPermutationEquivariance) {
  Layers L(1, 8, 4, 3, 40);
  const Tensor Q = random_tensor({8, 5}, 41), V = random_tensor({8, 6}, 42);
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  Graph g;
  const auto a = coattn::dense_coattn_layer(g.constant(Q), g.constant(V), L.p[0], DirectionMode::Both);
  const auto b =
      coattn::dense_coattn_layer(g.constant(Q), g.constant(permute_cols(V, perm)), L.p[0], DirectionMode::Both);
  EXPECT_LT(max_abs_diff(b.V.value(), permute_cols(a.V.value(), perm)), 1e-10);
  EXPECT_LT(max_abs_diff(b.Q.value(), a.Q.value()), 1e-10);
}

TEST(Layer, WordPermutationEquivariance) {
  Layers L(1, 8, 4, 3, 43);
  const Tensor Q = random_tensor({8, 5}, 44), V = random_tensor({8, 6}, 45);
  std::vector<std::size_t> perm{4, 2, 0, 1, 3};
  Graph g;
  const auto a = coattn::dense_coattn_layer(g.constant(Q), g.constant(V), L.p[0], DirectionMode::Both);
  const auto b =
      coattn::dense_coattn_layer(g.constant(permute_cols(Q, perm)), g.constant(V), L.p[0], DirectionMode::Both);
  EXPECT_LT(max_abs_diff(b.Q.value(), permute_cols(a.Q.value(), perm)), 1e-10);
  EXPECT_LT(max_abs_diff(b.V.value(), a.V.value()), 1e-10);
}

TEST(Layer, ModalitySwapSymmetry) {
  Layers L(1, 8, 2, 2, 46);
  const Tensor Q = random_tensor({8, 3}, 47), V = random_tensor({8, 5}, 48);
  Graph g;
  const auto a = coattn::dense_coattn_layer(g.constant(Q), g.constant(V), L.p[0], DirectionMode::Both);
  coattn::CoAttnLayerParams swapped = L.p[0];
  std::swap(swapped.W_img_heads, swapped.W_q_heads);
  std::swap(swapped.M_Q, swapped.M_V);
  std::swap(swapped.W_Q, swapped.W_V);
  std::swap(swapped.b_Q, swapped.b_V);
  const auto b = coattn::dense_coattn_layer(g.constant(V), g.constant(Q), swapped, DirectionMode::Both);
  EXPECT_EQ(b.Q.value(), a.V.value());
  EXPECT_EQ(b.V.value(), a.Q.value());
  EXPECT_EQ(b.maps.A_Q.value(), a.maps.A_V.value());
}

TEST(Layer, FullGradientCheck) {
  Layers L(1, 8, 2, 1, 49);
  const Tensor Q = random_tensor({8, 3}, 50), V = random_tensor({8, 4}, 51);
  const auto ptrs = L.store.pointers();
  const auto rep = grad_check(
      [&](Graph& g) {
        const auto o = coattn::dense_coattn_layer(g.constant(Q), g.constant(V), L.p[0], DirectionMode::Both);
        return ops::add(testutil::weighted_total(o.Q, 1), testutil::weighted_total(o.V, 2));
      },
      ptrs);
  EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(Layer, IndivisibleHeadsRejected) {
  ParamStore s;
  Rng rng(1);
  for (const auto& spec : coattn::layer_specs(0, 6, 1)) s.add(spec, rng);
  EXPECT_THROW(coattn::bind_layer(s, 0, 4), ConfigError);
}

TEST(Stack, SingleLayerEqualsLayerCall) {
  Layers L(1, 8, 2, 1, 52);
  const Tensor Q = random_tensor({8, 3}, 53), V = random_tensor({8, 4}, 54);
  Graph g;
  const auto s = coattn::dcn_stack(g.constant(Q), g.constant(V), L.p, DirectionMode::Both);
  const auto one = coattn::dense_coattn_layer(g.constant(Q), g.constant(V), L.p[0], DirectionMode::Both);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].Q.value(), one.Q.value());
  EXPECT_EQ(s[0].V.value(), one.V.value());
}

TEST(Stack, ZeroFusionChainIsIdentity) {
  Layers L(3, 8, 4, 3, 55);
  L.zero_fusion();
  const Tensor Q = random_tensor({8, 5}, 56), V = random_tensor({8, 16}, 57);
  Graph g;
  const auto s = coattn::dcn_stack(g.constant(Q), g.constant(V), L.p, DirectionMode::Both);
  EXPECT_EQ(s.back().Q.value(), Q);
  EXPECT_EQ(s.back().V.value(), V);
}

TEST(Stack, EqualsManualComposition) {
  Layers L(3, 8, 2, 2, 58);
  const Tensor Q = random_tensor({8, 4}, 59), V = random_tensor({8, 4}, 60);
  Graph g;
  const auto s = coattn::dcn_stack(g.constant(Q), g.constant(V), L.p, DirectionMode::Both);
  Tensor q = Q, v = V;
  for (std::size_t l = 0; l < 3; ++l) std::tie(q, v) = naive_layer(q, v, L.store, l, 2);
  EXPECT_LT(max_abs_diff(s.back().Q.value(), q), 1e-11);
  EXPECT_LT(max_abs_diff(s.back().V.value(), v), 1e-11);
}

TEST(Stack, EmptyStackIsConfigError) {
  Graph g;
  EXPECT_THROW(coattn::dcn_stack(g.constant(Tensor({2, 1})), g.constant(Tensor({2, 1})), {}, DirectionMode::Both),
               ConfigError);
}

TEST(Stack, DefaultDepth) { EXPECT_EQ(DcnConfig{}.L, 3u); }
