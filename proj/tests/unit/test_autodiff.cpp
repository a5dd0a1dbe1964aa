#include <gtest/gtest.h>

#include "ecn/autodiff.hpp"
#include "ecn/edge_kernels.hpp"
#include "ecn/errors.hpp"
#include "ecn/ops.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace ecn;
using ecn::testing::grad_check;
using ecn::testing::GradCheckOptions;
using ecn::testing::random_away_from_zero;
using ecn::testing::random_tensor;
using V = Var<double>;
using Vs = std::vector<V>;
using TD = Tensor<double>;

namespace {

constexpr double kTol = 1e-3;

void expect_grad_ok(const ecn::testing::Builder& f, std::vector<TD> inputs, GradCheckOptions opt = {}) {
  auto r = grad_check(f, std::move(inputs), opt);
  EXPECT_LT(r.rel_error, kTol) << r.worst;
  EXPECT_GT(r.checked, 0u);
}

}  // namespace

TEST(Backward, LinearLossGivesInput) {
  ParamStore<double> ps;
  ps.add("w", TD({1, 1, 2, 2}, std::vector<double>{0.5, -1, 2, 3}));
  TD x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tape<double> tape;
  V loss = ops::sum(ops::mul(tape.parameter(ps, "w"), tape.constant(x)));
  tape.backward(loss, ps);
  EXPECT_TRUE(ps.at("w").grad.identical(x));
  EXPECT_TRUE(ps.grads_ready());
}

TEST(Backward, UnusedParameterGetsZeroGrad) {
  ParamStore<double> ps;
  ps.add("used", TD({1, 1, 1, 2}, 1.0));
  ps.add("unused", TD({1, 1, 1, 3}, 1.0));
  Tape<double> tape;
  tape.backward(ops::sum(tape.parameter(ps, "used")), ps);
  ASSERT_EQ(ps.at("unused").grad.numel(), 3u);
  for (double g : ps.at("unused").grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossRejected) {
  ParamStore<double> ps;
  Tape<double> tape;
  V x = tape.input(TD({1, 1, 1, 2}, 1.0));
  EXPECT_THROW(tape.backward(x, ps), UsageError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tape<double> tape;
  V x = tape.input(TD({1, 1, 1, 1}, 3.0));
  V y = ops::mul(x, x);  // x used twice
  tape.backward_keep(ops::sum(ops::add(y, x)));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 7.0);
}

TEST(Backward, UpsampleSumGradientIsFour) {
  Tape<double> tape;
  V x = tape.input(random_tensor<double>({1, 2, 3, 3}, 1));
  tape.backward_keep(ops::sum(ops::upsample_nearest2x(x)));
  for (double g : tape.grad(x).data()) EXPECT_EQ(g, 4.0);
}

TEST(GradCheck, Conv2d) {
  for (std::size_t groups : {1u, 2u}) {
    for (std::size_t stride : {1u, 2u}) {
      expect_grad_ok(
          [&](Tape<double>&, const Vs& in, ParamStore<double>&) {
            return ops::conv2d(in[0], in[1], &in[2], {stride, 1, groups});
          },
          {random_tensor<double>({1, 2, 5, 4}, 2), random_tensor<double>({4, 2 / groups, 3, 3}, 3),
           random_tensor<double>({1, 4, 1, 1}, 4)});
    }
  }
}

TEST(GradCheck, Pooling) {
  // Distinct, well-separated values keep max-pool away from ties.
  TD x({1, 2, 4, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>((i * 7) % 32) * 0.1;
  expect_grad_ok([](Tape<double>&, const Vs& in, ParamStore<double>&) { return ops::maxpool2d(in[0], 3, 1, 1); },
                 {x});
  expect_grad_ok([](Tape<double>&, const Vs& in, ParamStore<double>&) { return ops::avgpool2d(in[0], 2, 2); },
                 {random_tensor<double>({1, 2, 4, 4}, 5)});
  expect_grad_ok([](Tape<double>&, const Vs& in, ParamStore<double>&) { return ops::global_avgpool(in[0]); },
                 {random_tensor<double>({2, 2, 3, 3}, 6)});
  expect_grad_ok([](Tape<double>&, const Vs& in, ParamStore<double>&) { return ops::upsample_nearest2x(in[0]); },
                 {random_tensor<double>({1, 2, 2, 3}, 7)});
}

TEST(GradCheck, BatchNormBothModes) {
  for (ops::Mode mode : {ops::Mode::train, ops::Mode::infer}) {
    TD mean = random_tensor<double>({1, 3, 1, 1}, 8);
    TD var = random_tensor<double>({1, 3, 1, 1}, 9, 0.5, 2.0);
    expect_grad_ok(
        [&](Tape<double>&, const Vs& in, ParamStore<double>&) {
          TD m = mean, v = var;  // keep running stats fixed across evaluations
          return ops::batchnorm(in[0], in[1], in[2], {&m, &v}, mode);
        },
        {random_tensor<double>({2, 3, 3, 3}, 10), random_tensor<double>({1, 3, 1, 1}, 11, 0.5, 1.5),
         random_tensor<double>({1, 3, 1, 1}, 12)});
  }
}

TEST(GradCheck, Activations) {
  expect_grad_ok([](Tape<double>&, const Vs& in, ParamStore<double>&) { return ops::relu(in[0]); },
                 {random_away_from_zero<double>({1, 2, 3, 3}, 13)});
  expect_grad_ok([](Tape<double>&, const Vs& in, ParamStore<double>&) { return ops::sigmoid(in[0]); },
                 {random_tensor<double>({1, 2, 3, 3}, 14, -3, 3)});
  expect_grad_ok([](Tape<double>&, const Vs& in, ParamStore<double>&) { return ops::silu(in[0]); },
                 {random_tensor<double>({1, 2, 3, 3}, 15, -3, 3)});
  for (unsigned axes : {unsigned(kernels::kAxisC), unsigned(kernels::kAxisW),
                        unsigned(kernels::kAxisH | kernels::kAxisW)}) {
    expect_grad_ok([&](Tape<double>&, const Vs& in, ParamStore<double>&) { return ops::softmax(in[0], axes); },
                   {random_tensor<double>({2, 3, 2, 3}, 16, -2, 2)});
  }
}

TEST(GradCheck, ElementwiseWithBroadcast) {
  const Shape4 full{2, 3, 2, 2};
  for (Shape4 bs : {full, Shape4{2, 3, 1, 1}, Shape4{1, 3, 2, 2}}) {
    std::vector<TD> in{random_tensor<double>(full, 17), random_tensor<double>(bs, 18)};
    expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::add(v[0], v[1]); }, in);
    expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::sub(v[0], v[1]); }, in);
    expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::mul(v[0], v[1]); }, in);
  }
  expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::scale(v[0], 2.5); },
                 {random_tensor<double>({1, 1, 2, 3}, 19)});
}

TEST(GradCheck, ChannelPlumbing) {
  expect_grad_ok(
      [](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::concat_channels<double>({v[0], v[1]}); },
      {random_tensor<double>({1, 2, 2, 2}, 20), random_tensor<double>({1, 1, 2, 2}, 21)});
  expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::slice_channels(v[0], 1, 2); },
                 {random_tensor<double>({2, 4, 2, 2}, 22)});
  expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::repeat_channels(v[0], 3); },
                 {random_tensor<double>({1, 2, 2, 2}, 23)});
}

TEST(GradCheck, DenseLayerNormMatmul) {
  expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::dense(v[0], v[1], &v[2]); },
                 {random_tensor<double>({1, 2, 3, 4}, 24), random_tensor<double>({1, 1, 4, 5}, 25),
                  random_tensor<double>({1, 1, 1, 5}, 26)});
  expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::layernorm(v[0], v[1], v[2]); },
                 {random_tensor<double>({1, 2, 3, 4}, 27), random_tensor<double>({1, 1, 1, 4}, 28, 0.5, 1.5),
                  random_tensor<double>({1, 1, 1, 4}, 29)});
  expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::matmul(v[0], v[1]); },
                 {random_tensor<double>({2, 2, 3, 4}, 30), random_tensor<double>({2, 2, 4, 2}, 31)});
}

TEST(GradCheck, LayoutOps) {
  expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::permute(v[0], {0, 2, 3, 1}); },
                 {random_tensor<double>({1, 2, 3, 4}, 32)});
  expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::reshape(v[0], {1, 4, 6, 1}); },
                 {random_tensor<double>({1, 2, 3, 4}, 33)});
  expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::unfold(v[0], 2, 2); },
                 {random_tensor<double>({1, 3, 4, 4}, 34)});
  expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::fold(v[0], 2, 2, 4, 4); },
                 {random_tensor<double>({1, 4, 4, 3}, 35)});
  expect_grad_ok([](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::sum(v[0]); },
                 {random_tensor<double>({1, 2, 2, 2}, 36)});
}

TEST(GradCheck, EdgeStencils) {
  for (const Kernel3x3& k : {dog_stencil(1.0), log_kernel(1.0), gaussian_kernel(0.7)}) {
    expect_grad_ok([&](Tape<double>&, const Vs& v, ParamStore<double>&) { return ops::edge_stencil(v[0], k); },
                   {random_tensor<double>({1, 2, 4, 5}, 37)});
  }
}

TEST(GradCheck, SmallNetWithParameters) {
  ParamStore<double> ps;
  ps.add("w1", random_tensor<double>({3, 2, 3, 3}, 40));
  ps.add("b1", random_tensor<double>({1, 3, 1, 1}, 41));
  ps.add("w2", random_tensor<double>({1, 3, 1, 1}, 42));
  auto f = [](Tape<double>& t, const Vs& v, ParamStore<double>& p) {
    V b1 = t.parameter(p, "b1");
    V h = ops::sigmoid(ops::conv2d(v[0], t.parameter(p, "w1"), &b1, {1, 1, 1}));
    return ops::conv2d(h, t.parameter(p, "w2"), nullptr, {1, 0, 1});
  };
  auto r = grad_check(f, {random_tensor<double>({1, 2, 4, 4}, 43)}, ps);
  EXPECT_LT(r.rel_error, kTol) << r.worst;
}

TEST(Tape, NoRecordingStillComputes) {
  Tape<double> tape;
  tape.set_recording(false);
  V x = tape.input(TD({1, 1, 1, 2}, std::vector<double>{-1, 2}));
  V y = ops::relu(x);
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_EQ(y.value()[1], 2.0);
}
