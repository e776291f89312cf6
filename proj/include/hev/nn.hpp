#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "hev/interp.hpp"

// Small dense networks for velocity forecasting. Parameters live in one flat
// vector so optimizers and finite-difference checks can treat them uniformly;
// the layer matrices are Eigen::Map views into it.
namespace hev::nn {

template <typename Scalar>
using ConstMatMap = Eigen::Map<const MatrixX<Scalar>>;
template <typename Scalar>
using MatMap = Eigen::Map<MatrixX<Scalar>>;

template <typename Scalar>
VectorX<Scalar> uniform_init(Eigen::Index n, Scalar bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  VectorX<Scalar> v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = static_cast<Scalar>(bound * dist(rng));
  return v;
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  return z.unaryExpr([](S x) { return S(1) / (S(1) + std::exp(-x)); });
}

/// One-hidden-layer perceptron: y = W2 tanh(W1 x + b1) + b2.
template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;
  Mlp(int inputs, int hidden, int outputs)
      : in_(inputs), hid_(hidden), out_(outputs),
        theta_(VectorX<Scalar>::Zero(parameter_count(inputs, hidden, outputs))) {}

  static Eigen::Index parameter_count(int in, int hid, int out) {
    return Eigen::Index(hid) * in + hid + Eigen::Index(out) * hid + out;
  }
  Eigen::Index parameter_count() const { return theta_.size(); }
  int inputs() const { return in_; }
  int hidden() const { return hid_; }
  int outputs() const { return out_; }

  VectorX<Scalar>& parameters() { return theta_; }
  const VectorX<Scalar>& parameters() const { return theta_; }

  void initialize(std::mt19937_64& rng) {
    theta_.setZero();
    w1() = uniform_init<Scalar>(Eigen::Index(hid_) * in_, Scalar(1) / std::sqrt(Scalar(in_)), rng)
               .reshaped(hid_, in_);
    w2() = uniform_init<Scalar>(Eigen::Index(out_) * hid_, Scalar(1) / std::sqrt(Scalar(hid_)), rng)
               .reshaped(out_, hid_);
  }

  /// x: inputs × batch → outputs × batch.
  MatrixX<Scalar> forward(const MatrixX<Scalar>& x) const {
    MatrixX<Scalar> h = ((w1() * x).colwise() + b1()).array().tanh().matrix();
    return (w2() * h).colwise() + b2();
  }

  /// Mean over the batch of the summed squared output error. Fills `grad`
  /// (resized to parameter_count) when non-null.
  Scalar loss(const MatrixX<Scalar>& x, const MatrixX<Scalar>& y, VectorX<Scalar>* grad) const {
    const Scalar batch = Scalar(x.cols());
    MatrixX<Scalar> h = ((w1() * x).colwise() + b1()).array().tanh().matrix();
    MatrixX<Scalar> err = ((w2() * h).colwise() + b2()) - y;
    const Scalar value = err.squaredNorm() / batch;
    if (grad) {
      grad->setZero(theta_.size());
      MatrixX<Scalar> dy = Scalar(2) * err / batch;
      MatrixX<Scalar> dz = (w2().transpose() * dy).cwiseProduct(
          (MatrixX<Scalar>::Ones(h.rows(), h.cols()) - h.cwiseProduct(h)));
      Eigen::Index off = 0;
      auto put = [&](const MatrixX<Scalar>& m) {
        grad->segment(off, m.size()) = m.reshaped();
        off += m.size();
      };
      put(dz * x.transpose());
      put(dz.rowwise().sum());
      put(dy * h.transpose());
      put(dy.rowwise().sum());
    }
    return value;
  }

 private:
  ConstMatMap<Scalar> w1() const { return {theta_.data(), hid_, in_}; }
  MatMap<Scalar> w1() { return {theta_.data(), hid_, in_}; }
  auto b1() const { return theta_.segment(Eigen::Index(hid_) * in_, hid_); }
  ConstMatMap<Scalar> w2() const { return {theta_.data() + Eigen::Index(hid_) * (in_ + 1), out_, hid_}; }
  MatMap<Scalar> w2() { return {theta_.data() + Eigen::Index(hid_) * (in_ + 1), out_, hid_}; }
  auto b2() const { return theta_.segment(Eigen::Index(hid_) * (in_ + 1) + Eigen::Index(out_) * hid_, out_); }

  int in_ = 0, hid_ = 0, out_ = 0;
  VectorX<Scalar> theta_;
};

struct CnnLstmShape {
  int channels = 2;
  int length = 15;   // input time steps
  int filters = 8;
  int kernel = 3;
  int hidden = 16;
  int outputs = 5;

  int conv_length() const { return length - kernel + 1; }
};

/// 1-D convolution (valid padding, ReLU) → LSTM over the convolved sequence →
/// linear head on the final hidden state.
template <typename Scalar>
class CnnLstm {
 public:
  /// Time-major batch: element t is channels × batch.
  using Sequence = std::vector<MatrixX<Scalar>>;

  CnnLstm() = default;
  explicit CnnLstm(const CnnLstmShape& shape)
      : shape_(shape), theta_(VectorX<Scalar>::Zero(parameter_count(shape))) {}

  static Eigen::Index parameter_count(const CnnLstmShape& s) {
    const Eigen::Index gates = 4 * Eigen::Index(s.hidden);
    return Eigen::Index(s.kernel) * s.filters * s.channels + s.filters + gates * s.filters +
           gates * s.hidden + gates + Eigen::Index(s.outputs) * s.hidden + s.outputs;
  }
  Eigen::Index parameter_count() const { return theta_.size(); }
  const CnnLstmShape& shape() const { return shape_; }
  VectorX<Scalar>& parameters() { return theta_; }
  const VectorX<Scalar>& parameters() const { return theta_; }

  void initialize(std::mt19937_64& rng) {
    const auto& s = shape_;
    theta_.setZero();
    const Offsets o = offsets();
    theta_.segment(o.conv_w, o.conv_b - o.conv_w) = uniform_init<Scalar>(
        o.conv_b - o.conv_w, Scalar(1) / std::sqrt(Scalar(s.channels * s.kernel)), rng);
    const Scalar rec = Scalar(1) / std::sqrt(Scalar(s.hidden));
    theta_.segment(o.wx, o.bias - o.wx) = uniform_init<Scalar>(o.bias - o.wx, rec, rng);
    theta_.segment(o.bias + s.hidden, s.hidden).setOnes();  // forget gate
    theta_.segment(o.dense_w, o.dense_b - o.dense_w) =
        uniform_init<Scalar>(o.dense_b - o.dense_w, rec, rng);
  }

  MatrixX<Scalar> forward(const Sequence& x) const {
    Cache cache;
    return run_forward(x, cache);
  }

  Scalar loss(const Sequence& x, const MatrixX<Scalar>& y, VectorX<Scalar>* grad) const {
    Cache cache;
    MatrixX<Scalar> err = run_forward(x, cache) - y;
    const Scalar batch = Scalar(y.cols());
    const Scalar value = err.squaredNorm() / batch;
    if (grad) backward(x, cache, Scalar(2) * err / batch, *grad);
    return value;
  }

 private:
  struct Offsets {
    Eigen::Index conv_w, conv_b, wx, wh, bias, dense_w, dense_b;
  };
  struct Cache {
    std::vector<MatrixX<Scalar>> conv_pre, conv_out, gates, cell, hid;
  };

  Offsets offsets() const {
    const auto& s = shape_;
    const Eigen::Index g = 4 * Eigen::Index(s.hidden);
    Offsets o{};
    o.conv_w = 0;
    o.conv_b = Eigen::Index(s.kernel) * s.filters * s.channels;
    o.wx = o.conv_b + s.filters;
    o.wh = o.wx + g * s.filters;
    o.bias = o.wh + g * s.hidden;
    o.dense_w = o.bias + g;
    o.dense_b = o.dense_w + Eigen::Index(s.outputs) * s.hidden;
    return o;
  }

  ConstMatMap<Scalar> conv_w(int k) const {
    return {theta_.data() + Eigen::Index(k) * shape_.filters * shape_.channels, shape_.filters,
            shape_.channels};
  }
  ConstMatMap<Scalar> mat(Eigen::Index off, Eigen::Index rows, Eigen::Index cols) const {
    return {theta_.data() + off, rows, cols};
  }

  MatrixX<Scalar> run_forward(const Sequence& x, Cache& c) const {
    const auto& s = shape_;
    if (static_cast<int>(x.size()) != s.length) {
      throw InputError("CnnLstm: input sequence length mismatch");
    }
    const Offsets o = offsets();
    const Eigen::Index batch = x.front().cols();
    const Eigen::Index h = s.hidden;
    const int steps = s.conv_length();
    auto conv_b = theta_.segment(o.conv_b, s.filters);
    auto wx = mat(o.wx, 4 * h, s.filters);
    auto wh = mat(o.wh, 4 * h, h);
    auto bias = theta_.segment(o.bias, 4 * h);

    c.conv_pre.assign(steps, MatrixX<Scalar>());
    c.conv_out.assign(steps, MatrixX<Scalar>());
    c.gates.assign(steps, MatrixX<Scalar>());
    c.cell.assign(steps, MatrixX<Scalar>());
    c.hid.assign(steps, MatrixX<Scalar>());

    MatrixX<Scalar> h_prev = MatrixX<Scalar>::Zero(h, batch);
    MatrixX<Scalar> c_prev = MatrixX<Scalar>::Zero(h, batch);
    for (int t = 0; t < steps; ++t) {
      MatrixX<Scalar> pre = MatrixX<Scalar>::Zero(s.filters, batch);
      for (int k = 0; k < s.kernel; ++k) pre.noalias() += conv_w(k) * x[t + k];
      pre.colwise() += conv_b;
      c.conv_out[t] = pre.cwiseMax(Scalar(0));
      c.conv_pre[t] = std::move(pre);

      MatrixX<Scalar> z = wx * c.conv_out[t];
      z.noalias() += wh * h_prev;
      z.colwise() += bias;
      MatrixX<Scalar> g(4 * h, batch);
      g.topRows(h) = sigmoid(z.topRows(h));
      g.middleRows(h, h) = sigmoid(z.middleRows(h, h));
      g.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh().matrix();
      g.bottomRows(h) = sigmoid(z.bottomRows(h));

      MatrixX<Scalar> cell = g.middleRows(h, h).cwiseProduct(c_prev) +
                             g.topRows(h).cwiseProduct(g.middleRows(2 * h, h));
      MatrixX<Scalar> hid = g.bottomRows(h).cwiseProduct(cell.array().tanh().matrix());
      c.gates[t] = std::move(g);
      c_prev = cell;
      h_prev = hid;
      c.cell[t] = std::move(cell);
      c.hid[t] = std::move(hid);
    }
    auto dense_w = mat(o.dense_w, s.outputs, h);
    auto dense_b = theta_.segment(o.dense_b, s.outputs);
    return (dense_w * h_prev).colwise() + dense_b;
  }

  void backward(const Sequence& x, const Cache& c, const MatrixX<Scalar>& dy,
                VectorX<Scalar>& grad) const {
    const auto& s = shape_;
    const Offsets o = offsets();
    const Eigen::Index batch = dy.cols();
    const Eigen::Index h = s.hidden;
    const int steps = s.conv_length();
    grad.setZero(theta_.size());
    MatMap<Scalar> g_wx(grad.data() + o.wx, 4 * h, s.filters);
    MatMap<Scalar> g_wh(grad.data() + o.wh, 4 * h, h);
    MatMap<Scalar> g_dw(grad.data() + o.dense_w, s.outputs, h);
    auto wx = mat(o.wx, 4 * h, s.filters);
    auto wh = mat(o.wh, 4 * h, h);
    auto dense_w = mat(o.dense_w, s.outputs, h);

    g_dw.noalias() = dy * c.hid[steps - 1].transpose();
    grad.segment(o.dense_b, s.outputs) = dy.rowwise().sum();

    MatrixX<Scalar> dh = dense_w.transpose() * dy;
    MatrixX<Scalar> dc = MatrixX<Scalar>::Zero(h, batch);
    MatrixX<Scalar> dz(4 * h, batch);
    for (int t = steps - 1; t >= 0; --t) {
      const auto& g = c.gates[t];
      auto gi = g.topRows(h);
      auto gf = g.middleRows(h, h);
      auto gg = g.middleRows(2 * h, h);
      auto go = g.bottomRows(h);
      const MatrixX<Scalar> tc = c.cell[t].array().tanh().matrix();
      const MatrixX<Scalar> c_prev =
          t > 0 ? c.cell[t - 1] : MatrixX<Scalar>::Zero(h, batch);
      const MatrixX<Scalar> h_prev = t > 0 ? c.hid[t - 1] : MatrixX<Scalar>::Zero(h, batch);

      dc.array() += dh.array() * go.array() * (Scalar(1) - tc.array().square());
      dz.topRows(h) = (dc.array() * gg.array() * gi.array() * (Scalar(1) - gi.array())).matrix();
      dz.middleRows(h, h) =
          (dc.array() * c_prev.array() * gf.array() * (Scalar(1) - gf.array())).matrix();
      dz.middleRows(2 * h, h) =
          (dc.array() * gi.array() * (Scalar(1) - gg.array().square())).matrix();
      dz.bottomRows(h) =
          (dh.array() * tc.array() * go.array() * (Scalar(1) - go.array())).matrix();

      g_wx.noalias() += dz * c.conv_out[t].transpose();
      g_wh.noalias() += dz * h_prev.transpose();
      grad.segment(o.bias, 4 * h) += dz.rowwise().sum();

      MatrixX<Scalar> du = wx.transpose() * dz;
      dh = wh.transpose() * dz;
      dc = dc.cwiseProduct(gf);

      const MatrixX<Scalar> dpre = du.cwiseProduct(
          c.conv_pre[t].unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); }));
      for (int k = 0; k < s.kernel; ++k) {
        MatMap<Scalar> g_cw(grad.data() + Eigen::Index(k) * s.filters * s.channels, s.filters,
                            s.channels);
        g_cw.noalias() += dpre * x[t + k].transpose();
      }
      grad.segment(o.conv_b, s.filters) += dpre.rowwise().sum();
    }
  }

  CnnLstmShape shape_;
  VectorX<Scalar> theta_;
};

}  // namespace hev::nn
