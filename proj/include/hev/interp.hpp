#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "hev/error.hpp"

namespace hev {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

// Index of the interval [x_i, x_{i+1}] holding `x`; `x` must be inside the knot range.
template <typename Scalar>
Eigen::Index bracket(const VectorX<Scalar>& knots, Scalar x) {
  const auto* first = knots.data();
  const auto* last = knots.data() + knots.size();
  auto it = std::upper_bound(first, last, x);
  Eigen::Index i = static_cast<Eigen::Index>(it - first) - 1;
  return std::clamp<Eigen::Index>(i, 0, knots.size() - 2);
}

template <typename Scalar>
void require_increasing(const VectorX<Scalar>& knots, const char* what) {
  if (knots.size() < 2) {
    throw InputError(std::string(what) + ": need at least two knots");
  }
  for (Eigen::Index i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1])) {
      throw InputError(std::string(what) + ": knots must be strictly increasing");
    }
  }
}

}  // namespace detail

/// Piecewise-linear map over strictly increasing knots. Evaluation outside
/// the knot range is an error; use clamped() when saturation is intended.
template <typename Scalar = double>
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  PiecewiseLinear(VectorX<Scalar> knots, VectorX<Scalar> values)
      : knots_(std::move(knots)), values_(std::move(values)) {
    if (knots_.size() != values_.size()) {
      throw InputError("PiecewiseLinear: knots and values differ in length");
    }
    detail::require_increasing(knots_, "PiecewiseLinear");
    if (!values_.allFinite()) throw InputError("PiecewiseLinear: non-finite value");
  }

  bool contains(Scalar x) const { return x >= knots_[0] && x <= knots_[knots_.size() - 1]; }

  Scalar operator()(Scalar x) const {
    if (!contains(x)) {
      std::ostringstream os;
      os << "PiecewiseLinear: " << x << " outside [" << knots_[0] << ", "
         << knots_[knots_.size() - 1] << "]";
      throw InputError(os.str());
    }
    return interpolate(x);
  }

  Scalar clamped(Scalar x) const {
    return interpolate(std::clamp(x, knots_[0], knots_[knots_.size() - 1]));
  }

  bool non_decreasing() const {
    for (Eigen::Index i = 1; i < values_.size(); ++i) {
      if (values_[i] < values_[i - 1]) return false;
    }
    return true;
  }

  const VectorX<Scalar>& knots() const { return knots_; }
  const VectorX<Scalar>& values() const { return values_; }
  bool empty() const { return knots_.size() == 0; }

 private:
  Scalar interpolate(Scalar x) const {
    const Eigen::Index i = detail::bracket(knots_, x);
    const Scalar t = (x - knots_[i]) / (knots_[i + 1] - knots_[i]);
    return values_[i] + t * (values_[i + 1] - values_[i]);
  }

  VectorX<Scalar> knots_;
  VectorX<Scalar> values_;
};

/// Gridded table f(row, col) with bilinear interpolation. values(r, c) is the
/// node at (row_axis[r], col_axis[c]).
template <typename Scalar = double>
class BilinearTable {
 public:
  BilinearTable() = default;
  BilinearTable(VectorX<Scalar> row_axis, VectorX<Scalar> col_axis, MatrixX<Scalar> values)
      : rows_(std::move(row_axis)), cols_(std::move(col_axis)), values_(std::move(values)) {
    detail::require_increasing(rows_, "BilinearTable rows");
    detail::require_increasing(cols_, "BilinearTable cols");
    if (values_.rows() != rows_.size() || values_.cols() != cols_.size()) {
      throw InputError("BilinearTable: value matrix does not match axes");
    }
    if (!values_.allFinite()) throw InputError("BilinearTable: non-finite value");
  }

  bool contains(Scalar r, Scalar c) const {
    return r >= rows_[0] && r <= rows_[rows_.size() - 1] && c >= cols_[0] &&
           c <= cols_[cols_.size() - 1];
  }

  Scalar operator()(Scalar r, Scalar c) const {
    if (!contains(r, c)) {
      std::ostringstream os;
      os << "BilinearTable: (" << r << ", " << c << ") outside table";
      throw InputError(os.str());
    }
    const Eigen::Index i = detail::bracket(rows_, r);
    const Eigen::Index j = detail::bracket(cols_, c);
    const Scalar tr = (r - rows_[i]) / (rows_[i + 1] - rows_[i]);
    const Scalar tc = (c - cols_[j]) / (cols_[j + 1] - cols_[j]);
    const Scalar lo = values_(i, j) + tc * (values_(i, j + 1) - values_(i, j));
    const Scalar hi = values_(i + 1, j) + tc * (values_(i + 1, j + 1) - values_(i + 1, j));
    return lo + tr * (hi - lo);
  }

  /// Column of row-axis values at a fixed column coordinate; linear
  /// interpolation along the row axis of the result reproduces operator().
  PiecewiseLinear<Scalar> slice_at_col(Scalar c) const {
    if (c < cols_[0] || c > cols_[cols_.size() - 1]) {
      throw InputError("BilinearTable: column coordinate outside table");
    }
    const Eigen::Index j = detail::bracket(cols_, c);
    const Scalar tc = (c - cols_[j]) / (cols_[j + 1] - cols_[j]);
    VectorX<Scalar> column = values_.col(j) + tc * (values_.col(j + 1) - values_.col(j));
    return PiecewiseLinear<Scalar>(rows_, std::move(column));
  }

  const VectorX<Scalar>& row_axis() const { return rows_; }
  const VectorX<Scalar>& col_axis() const { return cols_; }
  const MatrixX<Scalar>& values() const { return values_; }
  bool empty() const { return values_.size() == 0; }

 private:
  VectorX<Scalar> rows_;
  VectorX<Scalar> cols_;
  MatrixX<Scalar> values_;
};

}  // namespace hev
