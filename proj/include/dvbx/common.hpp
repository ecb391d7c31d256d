// dvbx/common.hpp

// Copyright 2026 The DVBx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DVBX_COMMON_HPP_
#define DVBX_COMMON_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dvbx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched dimensions between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, non positive-definite matrices, failed gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input that violates a precondition on content (e.g. one speaker only).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated files.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration values or combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void RequireShape(bool ok, const std::string &what) {
  if (!ok) throw ShapeError(what);
}

inline void RequireFinite(const Matrix &m, const std::string &what) {
  if (!m.allFinite()) throw NumericError(what + ": non-finite value");
}

/// log(sum(exp(x))) over a vector; returns -inf for an all -inf input.
template <typename Derived>
double LogSumExp(const Eigen::MatrixBase<Derived> &x) {
  const double mx = x.maxCoeff();
  if (mx == kNegInf) return kNegInf;
  return mx + std::log((x.array() - mx).exp().sum());
}

/// Row-wise softmax. Rows that are entirely -inf are a numeric error.
inline Matrix RowSoftmax(const Matrix &z) {
  Matrix out(z.rows(), z.cols());
  for (Index t = 0; t < z.rows(); ++t) {
    const double mx = z.row(t).maxCoeff();
    if (!(mx > kNegInf) || std::isnan(mx))
      throw NumericError("softmax: row " + std::to_string(t) +
                         " has no finite entry");
    out.row(t) = (z.row(t).array() - mx).exp();
    out.row(t) /= out.row(t).sum();
  }
  return out;
}

/// Adjoint of RowSoftmax: given p = softmax(z) and dL/dp, returns dL/dz.
inline Matrix RowSoftmaxBackward(const Matrix &p, const Matrix &grad_p) {
  Matrix out(p.rows(), p.cols());
  for (Index t = 0; t < p.rows(); ++t) {
    const double dot = p.row(t).dot(grad_p.row(t));
    out.row(t) = p.row(t).array() * (grad_p.row(t).array() - dot);
  }
  return out;
}

}  // namespace dvbx

#endif  // DVBX_COMMON_HPP_
