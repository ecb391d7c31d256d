// dvbx/plda.hpp

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

// Two-covariance PLDA: closed-form estimation from labeled vectors, the
// simultaneous diagonalization of the within/between covariances, and the
// projection of x-vector sequences into the diagonalized space.

#ifndef DVBX_PLDA_HPP_
#define DVBX_PLDA_HPP_

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dvbx/binary_io.hpp"
#include "dvbx/common.hpp"

namespace dvbx {

struct PldaModel {
  Vector mean;        // global mean m, length d
  Matrix within_cov;  // d x d, positive definite
  Matrix between_cov; // d x d, positive semi-definite

  Index dim() const { return mean.size(); }

  /// Throws NumericError if symmetry or definiteness invariants are violated.
  void Validate() const {
    const Index d = dim();
    RequireShape(within_cov.rows() == d && within_cov.cols() == d &&
                     between_cov.rows() == d && between_cov.cols() == d,
                 "PLDA covariance shape does not match mean");
    if ((within_cov - within_cov.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw NumericError("within_cov is not symmetric");
    if ((between_cov - between_cov.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw NumericError("between_cov is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> ew(within_cov, Eigen::EigenvaluesOnly);
    if (ew.eigenvalues().minCoeff() <= 0.0)
      throw NumericError("within_cov is not positive definite (smallest eigenvalue " +
                         std::to_string(ew.eigenvalues().minCoeff()) + ")");
    Eigen::SelfAdjointEigenSolver<Matrix> eb(between_cov, Eigen::EigenvaluesOnly);
    if (eb.eigenvalues().minCoeff() < -1e-10)
      throw NumericError("between_cov has a negative eigenvalue " +
                         std::to_string(eb.eigenvalues().minCoeff()));
  }
};

/// E and the diagonal of Phi. The speaker loading V = sqrt(Phi) is implied.
struct TransformedSpace {
  Matrix transform;  // d x d'
  Vector phi;        // length d', strictly positive

  Index in_dim() const { return transform.rows(); }
  Index out_dim() const { return transform.cols(); }
  Vector loading() const { return phi.array().sqrt(); }
};

/// One conversation's raw x-vectors with the timing of the segments they
/// were extracted from.
struct XVectorSequence {
  Matrix raw;  // T x d
  std::vector<double> segment_starts;
  std::vector<double> segment_durations;
  std::string utterance_id;

  Index frames() const { return raw.rows(); }
  Index dim() const { return raw.cols(); }

  void Validate() const {
    if (raw.rows() < 1) throw ShapeError(utterance_id + ": empty x-vector sequence");
    RequireShape(static_cast<Index>(segment_starts.size()) == raw.rows() &&
                     static_cast<Index>(segment_durations.size()) == raw.rows(),
                 utterance_id + ": timing arrays do not match frame count");
    for (std::size_t t = 0; t < segment_starts.size(); ++t) {
      if (!(segment_durations[t] > 0.0))
        throw FormatError(utterance_id + ": non-positive segment duration");
      if (t > 0 && segment_starts[t] < segment_starts[t - 1])
        throw FormatError(utterance_id + ": segment starts decrease");
    }
  }

  /// Keeps the listed frames, in order.
  XVectorSequence Select(const std::vector<Index> &rows) const {
    XVectorSequence out;
    out.utterance_id = utterance_id;
    out.raw.resize(static_cast<Index>(rows.size()), raw.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.raw.row(static_cast<Index>(i)) = raw.row(rows[i]);
      out.segment_starts.push_back(segment_starts[static_cast<std::size_t>(rows[i])]);
      out.segment_durations.push_back(segment_durations[static_cast<std::size_t>(rows[i])]);
    }
    return out;
  }
};

struct TransformedSequence {
  Matrix data;  // T x d'
  std::string utterance_id;
};

namespace plda_detail {

inline double RegularizationFloor(const Matrix &within) {
  const double tr = within.trace();
  return tr > 0.0 ? 1e-6 * tr / static_cast<double>(within.rows()) : 1e-6;
}

}  // namespace plda_detail

/// Closed-form two-covariance estimate. Speakers with a single vector add to
/// the between-speaker scatter but not to the within-speaker scatter.
template <typename Label>
PldaModel PretrainPlda(const Matrix &vectors, const std::vector<Label> &speaker_labels) {
  const Index n = vectors.rows();
  const Index d = vectors.cols();
  RequireShape(static_cast<Index>(speaker_labels.size()) == n,
               "pretrain_plda: label count does not match vector count");

  std::map<Label, std::vector<Index>> by_speaker;
  for (Index i = 0; i < n; ++i) by_speaker[speaker_labels[static_cast<std::size_t>(i)]].push_back(i);
  if (by_speaker.size() < 2)
    throw DegenerateInputError("pretrain_plda: need at least 2 distinct speakers");
  const bool any_pair = std::any_of(by_speaker.begin(), by_speaker.end(),
                                    [](const auto &kv) { return kv.second.size() >= 2; });
  if (!any_pair)
    throw DegenerateInputError("pretrain_plda: need a speaker with at least 2 vectors");

  PldaModel model;
  model.mean = vectors.colwise().mean().transpose();
  model.within_cov = Matrix::Zero(d, d);
  model.between_cov = Matrix::Zero(d, d);

  // Sums are accumulated in sorted index order per speaker so the result does
  // not depend on how labels are spelled, only on the partition.
  std::vector<std::vector<Index>> groups;
  for (auto &kv : by_speaker) groups.push_back(kv.second);
  std::sort(groups.begin(), groups.end());

  for (const auto &rows : groups) {
    Vector spk_mean = Vector::Zero(d);
    for (Index r : rows) spk_mean += vectors.row(r).transpose();
    spk_mean /= static_cast<double>(rows.size());
    for (Index r : rows) {
      const Vector dev = vectors.row(r).transpose() - spk_mean;
      model.within_cov.noalias() += dev * dev.transpose();
    }
    const Vector dm = spk_mean - model.mean;
    model.between_cov.noalias() += static_cast<double>(rows.size()) * dm * dm.transpose();
  }
  model.within_cov /= static_cast<double>(n - static_cast<Index>(groups.size()));
  model.between_cov /= static_cast<double>(n);
  model.within_cov = 0.5 * (model.within_cov + model.within_cov.transpose()).eval();
  model.between_cov = 0.5 * (model.between_cov + model.between_cov.transpose()).eval();

  const double eps = plda_detail::RegularizationFloor(model.within_cov);
  Eigen::SelfAdjointEigenSolver<Matrix> es(model.within_cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < eps) model.within_cov.diagonal().array() += eps;
  return model;
}

inline constexpr double kPhiFloor = 1e-6;

/// Solves between_cov E = within_cov E Phi and keeps the out_dim leading
/// eigenpairs (eigenvalues descending). Columns are normalized so that
/// E^T within_cov E = I and signed so their largest-magnitude entry is positive.
inline TransformedSpace SolveGevp(const PldaModel &model, Index out_dim) {
  const Index d = model.dim();
  if (out_dim < 1 || out_dim > d)
    throw ShapeError("solve_gevp: out_dim must lie in [1, d]");
  Eigen::SelfAdjointEigenSolver<Matrix> ew(model.within_cov, Eigen::EigenvaluesOnly);
  const double min_eig = ew.eigenvalues().minCoeff();
  if (!(min_eig > 0.0))
    throw NumericError("solve_gevp: within_cov not positive definite, smallest eigenvalue " +
                       std::to_string(min_eig));

  // Reduce to a standard symmetric problem: C = L^-1 Sb L^-T with Sw = L L^T, E = L^-T V.
  const Eigen::LLT<Matrix> llt(model.within_cov);
  if (llt.info() != Eigen::Success) throw NumericError("solve_gevp: cholesky failed");
  const Matrix L = llt.matrixL();
  Matrix c = L.triangularView<Eigen::Lower>().solve(model.between_cov);
  c = L.triangularView<Eigen::Lower>().solve(c.transpose()).transpose();
  const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (c + c.transpose()));
  if (es.info() != Eigen::Success) throw NumericError("solve_gevp: eigensolver failed");
  const Matrix vecs = L.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors());

  TransformedSpace space;
  space.transform.resize(d, out_dim);
  space.phi.resize(out_dim);
  for (Index k = 0; k < out_dim; ++k) {
    const Index src = d - 1 - k;  // Eigen sorts ascending
    Vector col = vecs.col(src);
    Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0.0) col = -col;
    space.transform.col(k) = col;
    space.phi(k) = std::max(es.eigenvalues()(src), kPhiFloor);
  }
  return space;
}

/// X = (raw - 1 m^T) E.
inline TransformedSequence TransformSequence(const XVectorSequence &seq, const Vector &mean,
                                             const Matrix &transform) {
  RequireShape(seq.dim() == mean.size() && transform.rows() == mean.size(),
               "transform_sequence: dimension mismatch for " + seq.utterance_id);
  TransformedSequence out;
  out.utterance_id = seq.utterance_id;
  out.data = (seq.raw.rowwise() - mean.transpose()) * transform;
  RequireFinite(out.data, "transform_sequence");
  return out;
}

inline TransformedSequence TransformSequence(const XVectorSequence &seq, const PldaModel &model,
                                             const TransformedSpace &space) {
  return TransformSequence(seq, model.mean, space.transform);
}

// PLDA container (little-endian):
//   "DVBXPLDA" u32 version=1 u32 0
//   u64 d, u64 d'
//   f64 mean[d], within[d*d], between[d*d], transform[d*d'], phi[d']  (row-major)
inline constexpr char kPldaMagic[] = "DVBXPLDA";
inline constexpr std::uint32_t kPldaVersion = 1;

inline std::vector<char> EncodePlda(const PldaModel &model, const TransformedSpace &space) {
  io::ByteWriter w;
  w.Header(kPldaMagic, kPldaVersion);
  w.U64(static_cast<std::uint64_t>(model.dim()));
  w.U64(static_cast<std::uint64_t>(space.out_dim()));
  w.MatrixF64(model.mean.transpose());
  w.MatrixF64(model.within_cov);
  w.MatrixF64(model.between_cov);
  w.MatrixF64(space.transform);
  w.MatrixF64(space.phi.transpose());
  return w.buffer();
}

inline std::pair<PldaModel, TransformedSpace> DecodePlda(std::vector<char> bytes,
                                                         const std::string &what = "PLDA") {
  io::ByteReader r(std::move(bytes), what);
  if (r.Header(kPldaMagic) != kPldaVersion) r.Fail("unsupported version");
  const std::uint64_t d = r.U64();
  const std::uint64_t dp = r.U64();
  if (d == 0 || dp == 0 || dp > d) r.Fail("invalid dimensions");
  r.NeedCount(d, 2 * d + 1 + dp, 8);
  PldaModel model;
  TransformedSpace space;
  const auto di = static_cast<Index>(d);
  const auto dpi = static_cast<Index>(dp);
  model.mean = r.MatrixF64(1, di).transpose();
  model.within_cov = r.MatrixF64(di, di);
  model.between_cov = r.MatrixF64(di, di);
  space.transform = r.MatrixF64(di, dpi);
  space.phi = r.MatrixF64(1, dpi).transpose();
  r.ExpectEnd();
  return {std::move(model), std::move(space)};
}

inline void WritePlda(const std::filesystem::path &path, const PldaModel &model,
                      const TransformedSpace &space) {
  io::WriteFileAtomic(path, EncodePlda(model, space));
}

inline std::pair<PldaModel, TransformedSpace> ReadPlda(const std::filesystem::path &path) {
  return DecodePlda(io::ReadFileBytes(path), path.string());
}

}  // namespace dvbx

#endif  // DVBX_PLDA_HPP_
