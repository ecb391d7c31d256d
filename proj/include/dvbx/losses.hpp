// dvbx/losses.hpp

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

// Permutation-invariant diarization losses over responsibilities: binary
// cross entropy and expected detection error (expected miss + expected false
// alarm), optional softmax calibration, and averaging over VB iterations.

#ifndef DVBX_LOSSES_HPP_
#define DVBX_LOSSES_HPP_

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "dvbx/assignment.hpp"
#include "dvbx/common.hpp"
#include "dvbx/inference.hpp"

namespace dvbx {

/// Per-frame speech proportions of each reference speaker.
struct GroundTruth {
  Matrix labels;  // T x S_gt, entries in [0, 1]
  std::vector<std::string> speaker_names;

  Index frames() const { return labels.rows(); }
  Index speakers() const { return labels.cols(); }
};

enum class FrameLoss { kBce, kEde };

struct LossReport {
  double value = 0.0;
  /// best_permutation[g] = predicted column matched to reference column g,
  /// over the padded speaker width.
  std::vector<Index> best_permutation;
  std::vector<double> per_iteration_values;
};

inline constexpr double kBceClamp = 1e-7;

/// Row-wise softmax(calib * gamma).
inline Matrix Calibrate(const Matrix &gamma, double calib) {
  if (!(calib > 0.0)) throw ConfigError("calibrate: calib must be > 0");
  return RowSoftmax(calib * gamma);
}

struct CalibrateGrads {
  Matrix gamma;
  double calib = 0.0;
};

inline CalibrateGrads CalibrateBackward(const Matrix &gamma, double calib, const Matrix &out,
                                        const Matrix &grad_out) {
  const Matrix grad_z = RowSoftmaxBackward(out, grad_out);
  return {calib * grad_z, (grad_z.array() * gamma.array()).sum()};
}

inline double BceElement(double g, double l) {
  const double c = std::clamp(g, kBceClamp, 1.0 - kBceClamp);
  return -l * std::log(c) - (1.0 - l) * std::log(1.0 - c);
}

inline double BceElementGrad(double g, double l) {
  if (g < kBceClamp || g > 1.0 - kBceClamp) return 0.0;
  return -l / g + (1.0 - l) / (1.0 - g);
}

inline double EdeElement(double g, double l) { return (1.0 - g) * l + g * (1.0 - l); }

inline double EdeElementGrad(double /*g*/, double l) { return 1.0 - 2.0 * l; }

inline double FrameElement(FrameLoss kind, double g, double l) {
  return kind == FrameLoss::kBce ? BceElement(g, l) : EdeElement(g, l);
}

inline double FrameElementGrad(FrameLoss kind, double g, double l) {
  return kind == FrameLoss::kBce ? BceElementGrad(g, l) : EdeElementGrad(g, l);
}

inline double BceFrame(const RowVector &gamma_row, const RowVector &gt_row) {
  RequireShape(gamma_row.size() == gt_row.size(), "bce_frame: width mismatch");
  double sum = 0.0;
  for (Index s = 0; s < gamma_row.size(); ++s) sum += BceElement(gamma_row(s), gt_row(s));
  return sum;
}

inline double EdeFrame(const RowVector &gamma_row, const RowVector &gt_row) {
  RequireShape(gamma_row.size() == gt_row.size(), "ede_frame: width mismatch");
  double sum = 0.0;
  for (Index s = 0; s < gamma_row.size(); ++s) sum += EdeElement(gamma_row(s), gt_row(s));
  return sum;
}

/// Appends zero columns up to `width`.
inline Matrix PadColumns(const Matrix &m, Index width) {
  if (m.cols() >= width) return m;
  Matrix out = Matrix::Zero(m.rows(), width);
  out.leftCols(m.cols()) = m;
  return out;
}

/// C(p, g) = sum_t H(gamma_tp, l_tg), accumulated over t in order.
inline Matrix PairCosts(const Matrix &gamma, const Matrix &gt, FrameLoss kind) {
  const Index S = gamma.cols();
  Matrix cost = Matrix::Zero(S, S);
  for (Index t = 0; t < gamma.rows(); ++t)
    for (Index p = 0; p < S; ++p)
      for (Index g = 0; g < S; ++g) cost(p, g) += FrameElement(kind, gamma(t, p), gt(t, g));
  return cost;
}

struct PitResult {
  LossReport report;
  Matrix grad_gamma;  // dL/dgamma for the unpadded input (when requested)
  double grad_calib = 0.0;
};

/// Core of pit_loss; gradients flow through the selected permutation only.
inline PitResult EvaluatePit(const Matrix &gamma, const GroundTruth &gt, FrameLoss kind,
                             std::optional<double> calib, bool with_grad) {
  RequireShape(gamma.rows() == gt.frames(), "pit_loss: frame count mismatch (" +
                                                std::to_string(gamma.rows()) + " vs " +
                                                std::to_string(gt.frames()) + ")");
  const Index T = gamma.rows();
  const Index S = std::max(gamma.cols(), gt.speakers());
  const Matrix padded = PadColumns(gamma, S);
  const Matrix labels = PadColumns(gt.labels, S);
  const Matrix scored = calib ? Calibrate(padded, *calib) : padded;

  const Matrix cost = PairCosts(scored, labels, kind);
  const std::vector<Index> pred_to_ref = SolveAssignment(cost);
  const double norm = static_cast<double>(T) * static_cast<double>(S);

  PitResult out;
  out.report.value = AssignmentCost(cost, pred_to_ref) / norm;
  out.report.best_permutation.assign(static_cast<std::size_t>(S), 0);
  for (Index p = 0; p < S; ++p)
    out.report.best_permutation[static_cast<std::size_t>(pred_to_ref[static_cast<std::size_t>(p)])] = p;
  out.report.per_iteration_values = {out.report.value};
  if (!with_grad) return out;

  Matrix grad_scored(T, S);
  for (Index p = 0; p < S; ++p) {
    const Index g = pred_to_ref[static_cast<std::size_t>(p)];
    for (Index t = 0; t < T; ++t)
      grad_scored(t, p) = FrameElementGrad(kind, scored(t, p), labels(t, g)) / norm;
  }
  Matrix grad_padded = grad_scored;
  if (calib) {
    CalibrateGrads cg = CalibrateBackward(padded, *calib, scored, grad_scored);
    grad_padded = std::move(cg.gamma);
    out.grad_calib = cg.calib;
  }
  out.grad_gamma = grad_padded.leftCols(gamma.cols());
  return out;
}

inline LossReport PitLoss(const Matrix &gamma, const GroundTruth &gt, FrameLoss kind,
                          std::optional<double> calib = std::nullopt) {
  return EvaluatePit(gamma, gt, kind, calib, false).report;
}

/// Mean of per-iteration PIT losses; each iteration is matched independently.
inline LossReport AveragedLoss(const InferenceTrace &trace, const GroundTruth &gt,
                               FrameLoss kind, std::optional<double> calib = std::nullopt) {
  if (trace.per_iter_gamma.empty()) throw ShapeError("averaged_loss: empty trace");
  LossReport out;
  double sum = 0.0;
  for (const Matrix &g : trace.per_iter_gamma) {
    LossReport r = PitLoss(g, gt, kind, calib);
    sum += r.value;
    out.per_iteration_values.push_back(r.value);
    out.best_permutation = std::move(r.best_permutation);
  }
  out.value = sum / static_cast<double>(trace.per_iter_gamma.size());
  return out;
}

/// PIT detection error of hard argmax decisions (ties to the lower index),
/// as miss + false-alarm counts over frames x padded speakers.
inline double HardDetectionErrors(const Matrix &gamma, const GroundTruth &gt) {
  Matrix hard = Matrix::Zero(gamma.rows(), gamma.cols());
  for (Index t = 0; t < gamma.rows(); ++t) {
    Index arg = 0;
    gamma.row(t).maxCoeff(&arg);
    hard(t, arg) = 1.0;
  }
  const Index S = std::max(gamma.cols(), gt.speakers());
  return PitLoss(hard, gt, FrameLoss::kEde).value * static_cast<double>(gamma.rows()) *
         static_cast<double>(S);
}

}  // namespace dvbx

#endif  // DVBX_LOSSES_HPP_
