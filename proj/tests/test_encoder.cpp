#include <doctest.h>

#include <cmath>
#include <numeric>

#include "vcl/encoder.hpp"
#include "vcl/errors.hpp"
#include "vcl/ops.hpp"
#include "vcl/rng.hpp"

using namespace vcl;

namespace {

StgcnConfig toy_config() {
  StgcnConfig c;
  c.widths = {4, 6};
  c.strides = {1, 2};
  c.temporal_kernel = 3;
  c.embed_dim = 5;
  return c;
}

Tensor random_input(std::size_t channels, std::size_t frames,
                    std::size_t joints, RngStream& rng) {
  std::vector<double> data(channels * frames * joints);
  for (auto& v : data) v = rng.uniform(-1.0, 1.0);
  return Tensor::from_data({channels, frames, joints}, std::move(data));
}

SkeletonTopology tiny_tree() {
  SkeletonTopology t;
  t.n_joints = 5;
  t.root = 0;
  t.edges = {{0, 1}, {1, 2}, {1, 3}, {0, 4}};
  return t;
}

}  // namespace

TEST_CASE("build_adjacency") {
  SUBCASE("single joint") {
    SkeletonTopology t;
    t.n_joints = 1;
    t.root = 0;
    Tensor a = build_adjacency(t);
    CHECK(a.data() == std::vector<double>{1.0});
  }

  SUBCASE("two joints, one edge") {
    SkeletonTopology t;
    t.n_joints = 2;
    t.root = 0;
    t.edges = {{0, 1}};
    Tensor a = build_adjacency(t);
    for (double v : a.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  }

  SUBCASE("17-joint topology matches a dense oracle") {
    SkeletonTopology topo = default_topology17();
    Tensor got = build_adjacency(topo);

    // Independent dense computation of D^{-1/2} (A + I) D^{-1/2}.
    const std::size_t n = topo.n_joints;
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
    for (auto [p, c] : topo.edges) {
      a[p * n + c] = 1.0;
      a[c * n + p] = 1.0;
    }
    std::vector<double> deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      deg[i] = std::accumulate(a.begin() + i * n, a.begin() + (i + 1) * n, 0.0);
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double want = a[i * n + j] / std::sqrt(deg[i] * deg[j]);
        worst = std::max(worst, std::abs(want - got.data()[i * n + j]));
        // Symmetric with entries in [0, 1].
        CHECK(got.data()[i * n + j] == got.data()[j * n + i]);
        CHECK(got.data()[i * n + j] >= 0.0);
        CHECK(got.data()[i * n + j] <= 1.0);
      }
    }
    CHECK(worst < 1e-12);
  }

  SUBCASE("disconnected topology rejected") {
    SkeletonTopology t;
    t.n_joints = 4;
    t.root = 0;
    t.edges = {{0, 1}, {2, 3}};  // wrong edge count for a tree as well
    CHECK_THROWS_AS(build_adjacency(t), ContractError);
  }
}

TEST_CASE("stgcn forward") {
  SkeletonTopology topo = tiny_tree();
  Tensor adj = build_adjacency(topo);
  auto rng = stream_for(101, StreamTag::kParamInit);
  EncoderParams params = EncoderParams::init(toy_config(), 3, rng);

  SUBCASE("zero input with zero biases gives a zero feature") {
    EncoderParams zp = params.clone(false);
    for (auto& [name, t] : zp.named()) {
      if (name.find(".b_") != std::string::npos) {
        std::fill(t.data().begin(), t.data().end(), 0.0);
      }
    }
    Tensor x = Tensor::zeros({3, 8, 5});
    Tensor f = stgcn_forward(nullptr, x, zp, adj);
    for (double v : f.data()) CHECK(v == 0.0);
  }

  SUBCASE("output shape is the configured feature dim") {
    auto rng2 = stream_for(102, StreamTag::kParamInit);
    Tensor x = random_input(3, 8, 5, rng2);
    Tensor f = stgcn_forward(nullptr, x, params, adj);
    CHECK(f.shape() == std::vector<std::size_t>{6});
  }

  SUBCASE("gradient of mean(output) wrt input and all parameters") {
    auto rng2 = stream_for(103, StreamTag::kParamInit);
    Tensor x0 = random_input(3, 8, 5, rng2);

    auto f_input = [&](Tape& tape, const Tensor& x) {
      return ops::mean(&tape, stgcn_forward(&tape, x, params, adj));
    };
    CHECK(finite_diff_check(f_input, x0, 1e-5) < 1e-4);

    // Each parameter tensor in turn; the probe is spliced into a cloned
    // parameter set.
    const auto names = params.named();
    for (std::size_t pi = 0; pi < names.size(); ++pi) {
      if (names[pi].first.rfind("head.", 0) == 0) continue;
      auto f_param = [&](Tape& tape, const Tensor& probe) {
        EncoderParams local = params.clone(false);
        auto locals = local.named();
        locals[pi].second.data() = probe.data();
        locals[pi].second.set_requires_grad(probe.requires_grad());
        // Reuse the probe's storage so gradients land on it.
        EncoderParams spliced;
        spliced.cfg = local.cfg;
        spliced.blocks = local.blocks;
        spliced.head = local.head;
        Tensor* slot = nullptr;
        std::size_t idx = 0;
        for (auto& b : spliced.blocks) {
          for (Tensor* t : {&b.w_spatial, &b.b_spatial, &b.w_temporal,
                            &b.b_temporal}) {
            if (idx == pi) slot = t;
            ++idx;
          }
        }
        for (Tensor* t : {&spliced.head.w_mu, &spliced.head.b_mu,
                          &spliced.head.w_logvar, &spliced.head.b_logvar}) {
          if (idx == pi) slot = t;
          ++idx;
        }
        REQUIRE(slot != nullptr);
        *slot = probe;
        return ops::mean(&tape, stgcn_forward(&tape, x0, spliced, adj));
      };
      const Tensor start = names[pi].second.clone(false);
      CHECK_MESSAGE(finite_diff_check(f_param, start, 1e-5) < 1e-4,
                    names[pi].first);
    }
  }

  SUBCASE("joint relabeling consistency") {
    // Permuting joints in both the input and the adjacency leaves the pooled
    // feature unchanged up to float associativity.
    auto rng2 = stream_for(104, StreamTag::kParamInit);
    Tensor x = random_input(3, 8, 5, rng2);
    Tensor f0 = stgcn_forward(nullptr, x, params, adj);

    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    Tensor xp = Tensor::zeros({3, 8, 5});
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t t = 0; t < 8; ++t) {
        for (std::size_t n = 0; n < 5; ++n) {
          xp.data()[(c * 8 + t) * 5 + perm[n]] = x.data()[(c * 8 + t) * 5 + n];
        }
      }
    }
    Tensor adjp = Tensor::zeros({5, 5});
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        adjp.data()[perm[i] * 5 + perm[j]] = adj.data()[i * 5 + j];
      }
    }
    Tensor f1 = stgcn_forward(nullptr, xp, params, adjp);
    for (std::size_t i = 0; i < f0.numel(); ++i) {
      CHECK(f0.data()[i] == doctest::Approx(f1.data()[i]).epsilon(1e-10));
    }
  }

  SUBCASE("strided blocks halve the pooled extent") {
    // T=8 through strides (1,2) ends at T=4; probe via the traced variant.
    auto rng2 = stream_for(105, StreamTag::kParamInit);
    Tensor x = random_input(3, 8, 5, rng2);
    StgcnTrace trace = stgcn_forward_traced(nullptr, x, params, adj);
    CHECK(trace.last_spatial.shape() ==
          std::vector<std::size_t>{6, 8, 5});  // spatial runs before stride
    CHECK(trace.feature.shape() == std::vector<std::size_t>{6});
  }

  SUBCASE("shape mismatches rejected") {
    Tensor bad = Tensor::zeros({3, 8, 7});
    CHECK_THROWS_AS(stgcn_forward(nullptr, bad, params, adj), DimError);
    Tensor bad_c = Tensor::zeros({2, 8, 5});
    CHECK_THROWS_AS(stgcn_forward(nullptr, bad_c, params, adj), DimError);
  }
}

TEST_CASE("gaussian head") {
  auto rng = stream_for(106, StreamTag::kParamInit);
  EncoderParams params = EncoderParams::init(toy_config(), 3, rng);

  SUBCASE("zero weights and bias give mu 0 and logvar 0") {
    GaussianHeadParams zero;
    zero.w_mu = Tensor::zeros({5, 6});
    zero.b_mu = Tensor::zeros({5});
    zero.w_logvar = Tensor::zeros({5, 6});
    zero.b_logvar = Tensor::zeros({5});
    Tensor h = Tensor::full({6}, 3.0);
    GaussianOut out = gaussian_head_forward(nullptr, h, zero);
    for (double v : out.mu.data()) CHECK(v == 0.0);
    for (double v : out.logvar.data()) CHECK(v == 0.0);
  }

  SUBCASE("identity-like weights reproduce the feature") {
    GaussianHeadParams id;
    id.w_mu = Tensor::zeros({6, 6});
    for (std::size_t i = 0; i < 6; ++i) id.w_mu.data()[i * 6 + i] = 1.0;
    id.b_mu = Tensor::zeros({6});
    id.w_logvar = Tensor::zeros({6, 6});
    id.b_logvar = Tensor::zeros({6});
    auto rng2 = stream_for(107, StreamTag::kParamInit);
    std::vector<double> hv(6);
    for (auto& v : hv) v = rng2.uniform(-2.0, 2.0);
    Tensor h = Tensor::from_data({6}, hv);
    GaussianOut out = gaussian_head_forward(nullptr, h, id);
    CHECK(out.mu.data() == hv);
  }

  SUBCASE("logvar clamp keeps sigma bounded") {
    GaussianHeadParams big;
    big.w_mu = Tensor::zeros({2, 3});
    big.b_mu = Tensor::zeros({2});
    big.w_logvar = Tensor::zeros({2, 3});
    big.b_logvar = Tensor::from_data({2}, {40.0, -40.0});
    GaussianOut out = gaussian_head_forward(nullptr, Tensor::zeros({3}), big);
    CHECK(out.logvar.data()[0] == 10.0);
    CHECK(out.logvar.data()[1] == -10.0);
  }

  SUBCASE("gradient through both outputs") {
    auto rng2 = stream_for(108, StreamTag::kParamInit);
    std::vector<double> hv(6);
    for (auto& v : hv) v = rng2.uniform(-1.0, 1.0);
    Tensor h0 = Tensor::from_data({6}, hv);
    auto f = [&](Tape& tape, const Tensor& h) {
      GaussianOut out = gaussian_head_forward(&tape, h, params.head);
      return ops::add(&tape, ops::sum(&tape, out.mu),
                      ops::sum(&tape, out.logvar));
    };
    CHECK(finite_diff_check(f, h0, 1e-5) < 1e-5);
  }
}

TEST_CASE("reparameterize") {
  SUBCASE("zero noise returns mu") {
    Tensor mu = Tensor::from_data({3}, {1.0, -2.0, 0.5});
    Tensor lv = Tensor::from_data({3}, {0.3, -0.7, 2.0});
    Tensor xi = Tensor::zeros({3});
    Tensor z = reparameterize(nullptr, mu, lv, xi);
    CHECK(z.data() == mu.data());
  }

  SUBCASE("mu 2, logvar 0, xi 1 gives 3") {
    Tensor z = reparameterize(nullptr, Tensor::scalar(2.0), Tensor::scalar(0.0),
                              Tensor::scalar(1.0));
    CHECK(z.value() == doctest::Approx(3.0).epsilon(1e-15));
  }

  SUBCASE("empirical moments match (mu, sigma)") {
    // mu = 1, sigma = 2; 100k draws.
    const std::size_t draws = 100000;
    auto rng = stream_for(109, StreamTag::kLatentNoise);
    Tensor mu = Tensor::scalar(1.0);
    Tensor lv = Tensor::scalar(std::log(4.0));
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
      Tensor xi = Tensor::scalar(rng.normal());
      const double z = reparameterize(nullptr, mu, lv, xi).value();
      sum += z;
      sumsq += z * z;
    }
    const double mean = sum / draws;
    const double var = sumsq / draws - mean * mean;
    CHECK(std::abs(mean - 1.0) < 0.02);
    CHECK(std::abs(std::sqrt(var) - 2.0) < 0.02);
  }

  SUBCASE("affine in (mu, logvar) with fixed noise: exact gradients") {
    auto rng = stream_for(110, StreamTag::kLatentNoise);
    std::vector<double> noise(4), w(4);
    for (auto& v : noise) v = rng.normal();
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    Tensor xi = Tensor::from_data({4}, noise);
    Tensor weight = Tensor::from_data({4}, w);
    Tensor lv0 = Tensor::from_data({4}, {0.2, -0.4, 0.9, 0.0});

    auto f_mu = [&](Tape& tape, const Tensor& mu) {
      return ops::dot(&tape, reparameterize(&tape, mu, lv0, xi), weight);
    };
    Tensor mu0 = Tensor::from_data({4}, {0.1, 0.5, -0.3, 0.8});
    CHECK(finite_diff_check(f_mu, mu0, 1e-6) < 1e-9);

    auto f_lv = [&](Tape& tape, const Tensor& lv) {
      return ops::dot(&tape, reparameterize(&tape, mu0, lv, xi), weight);
    };
    CHECK(finite_diff_check(f_lv, lv0, 1e-5) < 1e-7);

    Tensor xi_grad = Tensor::from_data({4}, noise, /*requires_grad=*/true);
    CHECK_THROWS_AS(reparameterize(nullptr, mu0, lv0, xi_grad), ContractError);
  }

  SUBCASE("clamped logvar bounds sigma") {
    Tensor lv = Tensor::from_data({2}, {10.0, -10.0});
    Tensor sig = ops::exp(nullptr, ops::scale(nullptr, lv, 0.5));
    CHECK(sig.data()[0] == doctest::Approx(std::exp(5.0)));
    CHECK(sig.data()[1] == doctest::Approx(std::exp(-5.0)));
  }
}

TEST_CASE("end-to-end encoder gradient on the toy config") {
  SkeletonTopology topo = tiny_tree();
  Tensor adj = build_adjacency(topo);
  auto rng = stream_for(111, StreamTag::kParamInit);
  EncoderParams params = EncoderParams::init(toy_config(), 3, rng);
  auto rng2 = stream_for(112, StreamTag::kParamInit);
  Tensor x0 = random_input(3, 8, 5, rng2);
  std::vector<double> noise(5);
  for (auto& v : noise) v = rng2.normal();
  Tensor xi = Tensor::from_data({5}, noise);

  auto f = [&](Tape& tape, const Tensor& x) {
    Tensor h = stgcn_forward(&tape, x, params, adj);
    GaussianOut g = gaussian_head_forward(&tape, h, params.head);
    Tensor z = reparameterize(&tape, g.mu, g.logvar, xi);
    return ops::sum(&tape, ops::square(&tape, z));
  };
  CHECK(finite_diff_check(f, x0, 1e-5) < 1e-4);
}
