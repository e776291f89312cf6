#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "hev/nn.hpp"

namespace oracle {

// Worst componentwise relative gap between an analytic gradient and central
// finite differences of `f` around `theta`.
template <typename Loss>
double gradient_gap(Eigen::VectorXd theta, const Eigen::VectorXd& analytic, Loss f,
                    double h = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    const double up = f(theta);
    theta[i] = keep - h;
    const double down = f(theta);
    theta[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
  }
  return worst;
}

inline double mlp_gradient_gap(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  hev::nn::Mlp<double> net(6, 5, 3);
  net.initialize(rng);
  std::normal_distribution<double> n(0.0, 0.5);
  Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(6, 4, [&] { return n(rng); });
  Eigen::MatrixXd y = Eigen::MatrixXd::NullaryExpr(3, 4, [&] { return n(rng); });
  Eigen::VectorXd grad;
  net.loss(x, y, &grad);
  return gradient_gap(net.parameters(), grad, [&](const Eigen::VectorXd& t) {
    auto copy = net;
    copy.parameters() = t;
    return copy.loss(x, y, nullptr);
  });
}

inline double cnn_lstm_gradient_gap(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  hev::nn::CnnLstmShape shape{2, 7, 3, 3, 4, 2};
  hev::nn::CnnLstm<double> net(shape);
  net.initialize(rng);
  std::normal_distribution<double> n(0.0, 0.3);
  // Small random weights everywhere, including the biases the initializer zeroes.
  net.parameters() += Eigen::VectorXd::NullaryExpr(net.parameter_count(), [&] { return n(rng); });
  hev::nn::CnnLstm<double>::Sequence x(shape.length);
  for (auto& step : x) step = Eigen::MatrixXd::NullaryExpr(shape.channels, 3, [&] { return n(rng) + 0.5; });
  Eigen::MatrixXd y = Eigen::MatrixXd::NullaryExpr(shape.outputs, 3, [&] { return n(rng); });
  Eigen::VectorXd grad;
  net.loss(x, y, &grad);
  return gradient_gap(net.parameters(), grad, [&](const Eigen::VectorXd& t) {
    auto copy = net;
    copy.parameters() = t;
    return copy.loss(x, y, nullptr);
  });
}

}  // namespace oracle
