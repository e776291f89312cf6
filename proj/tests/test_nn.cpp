#include <doctest.h>

#include "hev/nn.hpp"
#include "oracle/gradcheck.hpp"

using namespace hev;

TEST_CASE("multistep network gradient matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) CHECK(oracle::mlp_gradient_gap(seed) < 1e-4);
}

TEST_CASE("cnn-lstm gradient matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CHECK(oracle::cnn_lstm_gradient_gap(seed) < 1e-4);
  }
}

TEST_CASE("mlp forward shape and zero-weight output") {
  nn::Mlp<double> net(4, 3, 2);
  CHECK(net.parameter_count() == 4 * 3 + 3 + 3 * 2 + 2);
  const Eigen::MatrixXd y = net.forward(Eigen::MatrixXd::Ones(4, 7));
  CHECK(y.rows() == 2);
  CHECK(y.cols() == 7);
  CHECK(y.isZero());
}

TEST_CASE("cnn-lstm parameter count and batch independence") {
  nn::CnnLstmShape s;
  nn::CnnLstm<double> net(s);
  CHECK(net.parameter_count() == 3 * 8 * 2 + 8 + 64 * 8 + 64 * 16 + 64 + 5 * 16 + 5);
  std::mt19937_64 rng(3);
  net.initialize(rng);
  nn::CnnLstm<double>::Sequence both(s.length), first(s.length);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < s.length; ++t) {
    both[t] = Eigen::MatrixXd::NullaryExpr(2, 2, [&] { return u(rng); });
    first[t] = both[t].col(0);
  }
  const Eigen::MatrixXd a = net.forward(both);
  const Eigen::MatrixXd b = net.forward(first);
  CHECK((a.col(0) - b.col(0)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("initialization is seeded") {
  nn::CnnLstm<double> a(nn::CnnLstmShape{}), b(nn::CnnLstmShape{});
  std::mt19937_64 r1(9), r2(9);
  a.initialize(r1);
  b.initialize(r2);
  CHECK(a.parameters() == b.parameters());
}
