#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ecn/blocks.hpp"
#include "ecn/complexity.hpp"
#include "ecn/edge_kernels.hpp"
#include "ecn/errors.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace ecn;
using ecn::testing::grad_check;
using ecn::testing::GradCheckOptions;
using ecn::testing::random_tensor;
using TD = Tensor<double>;
using Vs = std::vector<Var<double>>;

namespace {

template <typename T>
struct Env {
  ParamStore<T> params;
  BufferStore<T> buffers;
  Rng rng{123};
};

// Runs a block forward on a fresh tape and returns the output value.
template <typename T, typename F>
Tensor<T> run(Env<T>& env, const Tensor<T>& x, F&& fwd, ops::Mode mode = ops::Mode::infer) {
  Tape<T> tape;
  Context<T> ctx{tape, env.params, env.buffers, mode};
  return fwd(ctx, tape.constant(x)).value();
}

}  // namespace

// --- fixed edge kernels ------------------------------------------------------

TEST(EdgeKernels, GaussianHandValues) {
  Kernel3x3 g = gaussian_kernel(1.0);
  const double norm = 1.0 + 4.0 * std::exp(-0.5) + 4.0 * std::exp(-1.0);
  EXPECT_NEAR(norm, 4.8976, 1e-4);
  EXPECT_NEAR(g[4], 0.2042, 1e-3);
  EXPECT_NEAR(g[1], 0.1238, 1e-3);
  EXPECT_NEAR(g[0], 0.0751, 1e-3);
  EXPECT_NEAR(g[4], 1.0 / norm, 1e-12);
  double sum = 0.0;
  for (double v : g) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  // 4-fold symmetry
  EXPECT_EQ(g[0], g[2]);
  EXPECT_EQ(g[0], g[6]);
  EXPECT_EQ(g[0], g[8]);
  EXPECT_EQ(g[1], g[3]);
  EXPECT_EQ(g[1], g[5]);
  EXPECT_EQ(g[1], g[7]);
}

TEST(EdgeKernels, LogSignsAndExactZeroSum) {
  for (double sigma : {0.5, 1.0, 1.4, 2.0}) {
    Kernel3x3 k = log_kernel(sigma);
    EXPECT_LT(k[4], 0.0);
    EXPECT_GT(k[0], 0.0);
    double sd = 0.0;
    float sf = 0.0f;
    for (double v : k) {
      sd += v;
      sf += static_cast<float>(v);
    }
    EXPECT_EQ(sd, 0.0) << sigma;
    EXPECT_EQ(sf, 0.0f) << sigma;
  }
}

TEST(EdgeKernels, RejectsBadConfig) {
  EXPECT_THROW(gaussian_kernel(0.0), ConfigError);
  EXPECT_THROW(gaussian_kernel(1.0, 5), ConfigError);
  EXPECT_THROW(log_kernel(-1.0), ConfigError);
}

TEST(EdgeKernels, StencilsVanishOnConstants) {
  Tensor4 c({1, 3, 6, 7}, 0.37f);
  for (const Kernel3x3& k : {dog_stencil(1.0), log_kernel(1.0)}) {
    const auto out_v = stencil_forward(c, k);
    for (float v : out_v.data()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(EdgeKernels, DogIsInputMinusBlurInInterior) {
  Tensor<double> x = random_tensor<double>({1, 1, 5, 5}, 4);
  Tensor<double> y = stencil_forward(x, dog_stencil(1.0));
  Kernel3x3 g = gaussian_kernel(1.0);
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 1; c < 4; ++c) {
      double blur = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) blur += g[(dy + 1) * 3 + dx + 1] * x.at(0, 0, r + dy, c + dx);
      EXPECT_NEAR(y.at(0, 0, r, c), x.at(0, 0, r, c) - blur, 1e-12);
    }
}

TEST(EdgeKernels, StepEdgeRespondsOnlyNextToEdge) {
  Tensor<double> x({1, 1, 6, 8});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 4; c < 8; ++c) x.at(0, 0, r, c) = 1.0;
  for (const Kernel3x3& k : {dog_stencil(1.0), log_kernel(1.0)}) {
    Tensor<double> y = stencil_forward(x, k);
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t c = 0; c < 8; ++c) {
        const double v = std::abs(y.at(0, 0, r, c));
        if (c == 3 || c == 4) {
          EXPECT_GT(v, 0.0);
        } else {
          EXPECT_EQ(v, 0.0) << "col " << c;
        }
      }
    }
  }
}

// --- DSC ---------------------------------------------------------------------

TEST(Dsc, ShapesAndNonnegative) {
  for (std::size_t stride : {1u, 2u}) {
    Env<float> env;
    DscBlock b("d", 3, 5, stride);
    b.allocate(env.params, env.buffers, env.rng);
    Tensor4 x = random_tensor<float>({2, 3, 6, 8}, 5);
    Tensor4 y = run(env, x, [&](auto& ctx, auto v) { return b.forward(ctx, v); }, ops::Mode::train);
    EXPECT_EQ(y.shape(), (Shape4{2, 5, 6 / stride, 8 / stride}));
    for (float v : y.data()) EXPECT_GE(v, 0.0f);
  }
}

TEST(Dsc, ParamCountMatchesFormulaAndAnalyzer) {
  const std::size_t cin = 6, cout = 10;
  Env<float> env;
  DscBlock b("d", cin, cout, 1);
  b.allocate(env.params, env.buffers, env.rng);
  const std::size_t expected = cin * 9 + cin + (cin + 1) * cout + 2 * cout;
  EXPECT_EQ(env.params.scalar_count(), expected);
  EXPECT_EQ(env.buffers.size(), 2u);

  ArchSpec s;
  s.input = {cin, 8, 8};
  LayerDecl d;
  d.kind = LayerKind::dsc;
  d.name = "d";
  d.c_out = cout;
  s.layers.push_back(d);
  EXPECT_EQ(analyze_complexity(s).total_params, expected);
}

TEST(Dsc, GradCheck) {
  Env<double> env;
  DscBlock b("d", 2, 3, 2);
  b.allocate(env.params, env.buffers, env.rng);
  GradCheckOptions opt;
  opt.skip_kinks = true;
  auto r = grad_check(
      [&](Tape<double>& t, const Vs& in, ParamStore<double>& p) {
        Context<double> ctx{t, p, env.buffers, ops::Mode::train};
        return b.forward(ctx, in[0]);
      },
      {random_tensor<double>({2, 2, 4, 4}, 6)}, env.params, opt);
  EXPECT_LT(r.rel_error, 1e-3) << r.worst;
  EXPECT_LT(r.skipped, r.checked / 10 + 1);
}

// --- SEM ---------------------------------------------------------------------

TEST(Sem, SaturatedGateIsIdentity) {
  Env<double> env;
  SemBlock b("s", 4, 2);
  b.allocate(env.params, env.rng);
  for (double& w : env.params.at("s.fc2.weight").value.data()) w = 0.0;
  for (double& v : env.params.at("s.fc2.bias").value.data()) v = 40.0;
  TD x = random_tensor<double>({1, 4, 3, 3}, 7);
  EXPECT_TRUE(run(env, x, [&](auto& ctx, auto v) { return b.forward(ctx, v); }).identical(x));
}

TEST(Sem, GateInOpenUnitInterval) {
  Env<float> env;
  SemBlock b("s", 8, 4);
  b.allocate(env.params, env.rng);
  Tensor4 x = random_tensor<float>({2, 8, 4, 4}, 8);
  Tensor4 gate;
  Tensor4 y = run(env, x, [&](auto& ctx, auto v) { return b.forward(ctx, v, &gate); });
  ASSERT_EQ(gate.shape(), (Shape4{2, 8, 1, 1}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 8; ++c) {
      const float g = gate.at(n, c, 0, 0);
      EXPECT_GT(g, 0.0f);
      EXPECT_LT(g, 1.0f);
      for (std::size_t i = 0; i < 16; ++i) {
        const std::size_t o = x.offset(n, c, 0, 0) + i;
        EXPECT_EQ(y[o], x[o] * g);
      }
    }
}

TEST(Sem, SingleChannelConstantHandValue) {
  Env<double> env;
  SemBlock b("s", 1, 1);
  b.allocate(env.params, env.rng);
  env.params.at("s.fc1.weight").value[0] = 0.8;
  env.params.at("s.fc1.bias").value[0] = 0.1;
  env.params.at("s.fc2.weight").value[0] = -1.5;
  env.params.at("s.fc2.bias").value[0] = 0.4;
  TD x({1, 1, 3, 3}, 2.0);
  TD gate;
  run(env, x, [&](auto& ctx, auto v) { return b.forward(ctx, v, &gate); });
  const double h = std::max(0.0, 0.8 * 2.0 + 0.1);
  EXPECT_NEAR(gate[0], ecn::testing::sigmoid(-1.5 * h + 0.4), 1e-12);
}

TEST(Sem, GradCheck) {
  Env<double> env;
  SemBlock b("s", 4, 2);
  b.allocate(env.params, env.rng);
  GradCheckOptions opt;
  opt.skip_kinks = true;
  auto r = grad_check(
      [&](Tape<double>& t, const Vs& in, ParamStore<double>& p) {
        Context<double> ctx{t, p, env.buffers, ops::Mode::infer};
        return b.forward(ctx, in[0]);
      },
      {random_tensor<double>({2, 4, 3, 3}, 9)}, env.params, opt);
  EXPECT_LT(r.rel_error, 1e-3) << r.worst;
}

TEST(Sem, RejectsOverReduction) { EXPECT_THROW(SemBlock("s", 2, 4), ConfigError); }

// --- EEM ---------------------------------------------------------------------

TEST(Eem, ConstantImageKillsEdgePath) {
  Env<float> env;
  EemConfig cfg;
  cfg.mid_channels = 8;
  cfg.sem_reduction = 3;
  EemBlock b("e", 3, cfg);
  b.allocate(env.params, env.rng);
  Tensor4 x({1, 3, 8, 8}, 0.6f);
  EemProbe<float> probe;
  Tensor4 y = run(env, x, [&](auto& ctx, auto v) { return b.forward(ctx, v, &probe); });
  for (float v : probe.dog.data()) EXPECT_EQ(v, 0.0f);
  for (float v : probe.log.data()) EXPECT_EQ(v, 0.0f);
  for (float v : probe.product.data()) EXPECT_EQ(v, 0.0f);
  for (float v : probe.edge.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_TRUE(y.identical(probe.skip));
  EXPECT_EQ(y.shape(), (Shape4{1, 8, 8, 8}));
}

TEST(Eem, GradCheck) {
  Env<double> env;
  EemConfig cfg;
  cfg.mid_channels = 4;
  cfg.sem_reduction = 2;
  EemBlock b("e", 2, cfg);
  b.allocate(env.params, env.rng);
  GradCheckOptions opt;
  opt.skip_kinks = true;
  auto r = grad_check(
      [&](Tape<double>& t, const Vs& in, ParamStore<double>& p) {
        Context<double> ctx{t, p, env.buffers, ops::Mode::infer};
        return b.forward(ctx, in[0]);
      },
      {random_tensor<double>({1, 2, 5, 5}, 10)}, env.params, opt);
  EXPECT_LT(r.rel_error, 1e-3) << r.worst;
  EXPECT_LT(r.skipped, r.checked / 10 + 1);
}

// --- ULSAM -------------------------------------------------------------------

TEST(Ulsam, AttentionMapsAreDistributions) {
  for (std::size_t g : {1u, 2u, 4u}) {
    Env<float> env;
    UlsamBlock b("u", 8, {g});
    b.allocate(env.params, env.rng);
    Tensor4 x = random_tensor<float>({2, 8, 5, 6}, 11, -3, 3);
    Tensor4 att;
    Tensor4 y = run(env, x, [&](auto& ctx, auto v) { return b.forward(ctx, v, &att); });
    EXPECT_EQ(y.shape(), x.shape());
    ASSERT_EQ(att.shape(), (Shape4{2, g, 5, 6}));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t k = 0; k < g; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < 30; ++i) {
          const float a = att[att.offset(n, k, 0, 0) + i];
          EXPECT_GE(a, 0.0f);
          s += a;
        }
        EXPECT_NEAR(s, 1.0, 1e-5);
      }
  }
}

TEST(Ulsam, ConstantGroupsGetUniformAttention) {
  Env<double> env;
  UlsamBlock b("u", 4, {2});
  b.allocate(env.params, env.rng);
  TD x({1, 4, 3, 4});
  const double vals[4] = {0.5, 0.5, -1.0, -1.0};
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 12; ++i) x[c * 12 + i] = vals[c];
  TD att;
  TD y = run(env, x, [&](auto& ctx, auto v) { return b.forward(ctx, v, &att); });
  for (double a : att.data()) EXPECT_NEAR(a, 1.0 / 12.0, 1e-15);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y[i], x[i] * (1.0 + 1.0 / 12.0), 1e-15);
}

TEST(Ulsam, RejectsIndivisibleGroups) { EXPECT_THROW(UlsamBlock("u", 6, {4}), ConfigError); }

TEST(Ulsam, GradCheck) {
  Env<double> env;
  UlsamBlock b("u", 4, {2});
  b.allocate(env.params, env.rng);
  GradCheckOptions opt;
  opt.skip_kinks = true;
  auto r = grad_check(
      [&](Tape<double>& t, const Vs& in, ParamStore<double>& p) {
        Context<double> ctx{t, p, env.buffers, ops::Mode::infer};
        return b.forward(ctx, in[0]);
      },
      {random_tensor<double>({1, 4, 4, 4}, 12)}, env.params, opt);
  EXPECT_LT(r.rel_error, 1e-3) << r.worst;
}

// --- MobileViT ---------------------------------------------------------------

TEST(MobileVit, ShapeAndAttentionRows) {
  Env<float> env;
  MobileVitConfig cfg;
  cfg.dim = 12;
  cfg.heads = 3;
  cfg.depth = 2;
  MobileVitBlock b("m", 4, cfg);
  b.allocate(env.params, env.rng);
  Tensor4 x = random_tensor<float>({2, 4, 4, 6}, 13);
  MobileVitProbe<float> probe;
  Tensor4 y = run(env, x, [&](auto& ctx, auto v) { return b.forward(ctx, v, &probe); });
  EXPECT_EQ(y.shape(), x.shape());
  ASSERT_EQ(probe.attention.size(), 2u);
  const Tensor4& a = probe.attention[0];
  ASSERT_EQ(a.shape(), (Shape4{2 * 4, 3, 6, 6}));
  for (std::size_t row = 0; row < a.numel() / 6; ++row) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += a[row * 6 + j];
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
}

TEST(MobileVit, ConfigValidation) {
  MobileVitConfig cfg;
  cfg.dim = 8;
  EXPECT_THROW(MobileVitBlock("m", 8, cfg), ConfigError);
  cfg.dim = 10;
  cfg.heads = 4;
  EXPECT_THROW(MobileVitBlock("m", 4, cfg), ConfigError);
}

TEST(MobileVit, RejectsIndivisibleSpatial) {
  Env<float> env;
  MobileVitConfig cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  MobileVitBlock b("m", 2, cfg);
  b.allocate(env.params, env.rng);
  Tensor4 x({1, 2, 5, 4});
  EXPECT_THROW(run(env, x, [&](auto& ctx, auto v) { return b.forward(ctx, v); }), DimensionError);
}

TEST(MobileVit, GradCheck) {
  Env<double> env;
  MobileVitConfig cfg;
  cfg.dim = 6;
  cfg.heads = 2;
  cfg.depth = 1;
  MobileVitBlock b("m", 2, cfg);
  b.allocate(env.params, env.rng);
  auto r = grad_check(
      [&](Tape<double>& t, const Vs& in, ParamStore<double>& p) {
        Context<double> ctx{t, p, env.buffers, ops::Mode::infer};
        return b.forward(ctx, in[0]);
      },
      {random_tensor<double>({1, 2, 4, 4}, 14)}, env.params);
  EXPECT_LT(r.rel_error, 1e-3) << r.worst;
}

TEST(MobileVit, OppositeCornerInfluence) {
  Env<double> env;
  MobileVitConfig cfg;
  cfg.dim = 16;
  cfg.heads = 2;
  MobileVitBlock b("m", 8, cfg);
  b.allocate(env.params, env.rng);
  Tape<double> tape;
  Context<double> ctx{tape, env.params, env.buffers, ops::Mode::infer};
  Var<double> x = tape.input(random_tensor<double>({1, 8, 8, 8}, 15));
  Var<double> y = b.forward(ctx, x);
  TD pick(y.shape());
  pick[0] = 1.0;  // output (c=0, row 0, col 0)
  tape.backward_keep(ops::sum(ops::mul(y, tape.constant(pick))));
  const TD& g = tape.grad(x);
  double far = 0.0;
  for (std::size_t c = 0; c < 8; ++c) far += std::abs(g.at(0, c, 7, 7));
  EXPECT_GT(far, 0.0);
}
