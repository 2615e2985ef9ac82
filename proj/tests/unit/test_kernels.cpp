#include "doctest.h"

#include "support/gradcheck.hpp"
#include "vocnet/cvae.hpp"
#include "vocnet/discriminator.hpp"
#include "vocnet/kernels.hpp"

using namespace vocnet;

namespace {

double dot(const Tensor& a, const Tensor& b) { return (a.array() * b.array()).sum(); }

}  // namespace

TEST_CASE("conv1d box filter on an impulse") {
  Tensor x({1, 5}, {0, 0, 1, 0, 0});
  Tensor k({1, 1, 3}, {1, 1, 1});
  Tensor y = conv1d(x, k, Tensor({1}, {0.0}), 1, 0);
  REQUIRE(y.shape() == Shape{1, 3});
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 1.0);
  CHECK(y[2] == 1.0);
}

TEST_CASE("conv1d of zeros is zero") {
  Rng rng(1);
  Tensor y = conv1d(Tensor({3, 622}), testing::random_tensor({4, 3, 3}, rng), Tensor({4}), 1, 1);
  CHECK(y.array().abs().maxCoeff() == 0.0);
}

TEST_CASE("conv1d is a cross-correlation with zero padding") {
  Tensor y = conv1d(Tensor({1, 4}, {1, 2, 3, 4}), Tensor({1, 1, 3}, {1, 0, -1}), Tensor(), 1, 1);
  REQUIRE(y.size() == 4);
  CHECK(y[0] == -2.0);
  CHECK(y[1] == -2.0);
  CHECK(y[2] == -2.0);
  CHECK(y[3] == 3.0);
}

TEST_CASE("conv1d shape errors name both shapes") {
  try {
    conv1d(Tensor({2, 10}), Tensor({1, 3, 3}), Tensor(), 1, 1);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 10]") != std::string::npos);
    CHECK(msg.find("[1 x 3 x 3]") != std::string::npos);
  }
}

TEST_CASE("transposed conv output length") {
  CHECK(conv1d_transpose_output_length(77, 5, 2, 1) == 155);
  CHECK(conv1d_transpose_output_length(155, 5, 2, 1) == 311);
  CHECK(conv1d_transpose_output_length(311, 4, 2, 1) == 622);
  Tensor y = conv1d_transpose(Tensor({2, 8, 77}), Tensor({8, 8, 5}), Tensor(), 2, 1);
  CHECK(y.shape() == Shape{2, 8, 155});
}

TEST_CASE("avg_pool1d") {
  Tensor y = avg_pool1d(Tensor({1, 4}, {1, 3, 5, 7}), 2);
  REQUIRE(y.size() == 2);
  CHECK(y[0] == 2.0);
  CHECK(y[1] == 6.0);

  Tensor c = avg_pool1d(Tensor::constant({2, 9}, 0.25), 3);
  CHECK((c.array() == 0.25).all());

  CHECK(avg_pool1d(Tensor({1, 622}), 2).dim(1) == 311);
  CHECK(avg_pool1d(avg_pool1d(Tensor({1, 622}), 2), 2).dim(1) == 155);
  CHECK_THROWS_AS(avg_pool1d(Tensor({1, 3}), 4), DimensionError);
}

TEST_CASE("linear") {
  Tensor x({3}, {0.5, -1.0, 2.0});
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor same = linear(x, eye, Tensor({3}));
  CHECK((same.array() == x.array()).all());

  Tensor y = linear(Tensor({2}, {2, 3}), Tensor({1, 2}, {1, 1}), Tensor({1}, {0.0}));
  CHECK(y[0] == 5.0);

  Tensor b({2}, {4.0, -3.0});
  Tensor only_bias = linear(Tensor({3}, {7, 8, 9}), Tensor({2, 3}), b);
  CHECK((only_bias.array() == b.array()).all());
}

TEST_CASE("softmax of a constant row is uniform") {
  Tensor p = softmax(Tensor::constant({1, 10}, 3.7));
  for (Index i = 0; i < 10; ++i) CHECK(p[i] == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("conv1d and conv1d_transpose are adjoint") {
  Rng rng(2024);
  struct Case {
    Index cin, cout, length, kernel, stride, padding;
  };
  // Geometries of every conv in both networks plus a few odd ones.
  for (const Case& c : {Case{1, 3, 622, 3, 1, 1}, Case{3, 3, 311, 3, 1, 1}, Case{8, 8, 155, 5, 2, 1},
                        Case{8, 1, 622, 4, 2, 1}, Case{2, 5, 17, 3, 2, 0}, Case{4, 2, 13, 5, 3, 2}}) {
    CAPTURE(c.length);
    Tensor k = testing::random_tensor({c.cout, c.cin, c.kernel}, rng);
    Tensor x = testing::random_tensor({2, c.cin, c.length}, rng);
    const Index out = conv1d_output_length(c.length, c.kernel, c.stride, c.padding);
    Tensor y = testing::random_tensor({2, c.cout, out}, rng);
    Tensor ax = conv1d(x, k, Tensor(), c.stride, c.padding);
    Tensor aty = conv1d_transpose(y, k, Tensor(), c.stride, c.padding);
    REQUIRE(aty.shape() == x.shape());
    const double rhs = dot(x, aty);
    const double lhs = dot(ax, y);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("network shape chains") {
  CvaeArch cvae;
  CHECK(cvae.base_length() == 77);
  CHECK(cvae.decoder_lengths() == std::array<Index, 3>{155, 311, 622});
  CHECK(cvae.encoder_length() == 38);
  DiscriminatorArch disc;
  CHECK(disc.feature_length() == 155);
  CHECK(disc.flat_features() == 465);

  CvaeModel model;
  Rng rng(1);
  model.initialize(rng);
  Tape tape;
  Var out = model.decode(tape, tape.constant(Tensor({2, 16})), Tensor({2, 9}));
  CHECK(out.shape() == Shape{2, 1, 622});

  DiscriminatorModel d;
  d.initialize(rng);
  Tape t2;
  auto outs = d.forward(t2, Tensor({2, 1, 622}), false);
  CHECK(outs.features.shape() == Shape{2, 3, 155});
  CHECK(outs.probs.shape() == Shape{2, 10});
  CHECK(outs.conc.shape() == Shape{2, 9});
}
