// dvbx/diffengine.hpp

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

// Reverse-mode gradients of the iteration-averaged PIT loss through the whole
// unrolled pipeline:
//
//   X = (raw - m) E  ->  gamma_0 = smooth(labels, tau)
//   repeat K times:  q(y) -> loglik -> gamma_k -> pi_k
//   loss = mean_k PIT(calibrate?(gamma_k), gt)
//
// The forward pass records what each step's adjoint needs; the backward pass
// walks the iterations in reverse, chaining the per-operation adjoints from
// inference.hpp, init.hpp and losses.hpp.

#ifndef DVBX_DIFFENGINE_HPP_
#define DVBX_DIFFENGINE_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dvbx/common.hpp"
#include "dvbx/inference.hpp"
#include "dvbx/init.hpp"
#include "dvbx/losses.hpp"
#include "dvbx/params.hpp"

namespace dvbx {

/// The part of the training configuration the differentiable pipeline reads.
struct PipelineConfig {
  int unroll_iters = 10;
  FrameLoss frame_loss = FrameLoss::kEde;
  bool calibrate = false;
  bool forced_gmm = true;  // loop_prob treated as 0, GMM responsibilities
  // Weight of each iteration's loss term; empty means 1 / unroll_iters each.
  std::vector<double> iteration_weights;
};

struct ForwardResult {
  double loss = 0.0;
  LossReport report;
  InferenceTrace trace;
};

namespace diff_detail {

struct IterationTape {
  Matrix gamma_in;
  Vector pi_in;
  SpeakerPosteriors post;
  Matrix loglik;
  ForwardBackwardCache hmm;  // only filled on the HMM path
  Matrix gamma_out;
  Vector pi_out;
  Matrix grad_gamma_loss;  // adjoint from this iteration's loss term
  double grad_calib = 0.0;
};

struct Tape {
  NaturalParams nat;
  Matrix centered;  // raw - m
  Matrix x;
  Matrix gamma0;
  bool hmm = false;
  std::vector<IterationTape> iters;
  ForwardResult result;
};

inline Tape RunTape(const ParamSet &params, const XVectorSequence &seq, const Vector &mean,
                    const HardLabels &init, const GroundTruth &gt, const PipelineConfig &cfg,
                    bool with_grad) {
  if (cfg.unroll_iters < 1) throw ConfigError("unroll_iters must be >= 1");
  if (!cfg.iteration_weights.empty() &&
      cfg.iteration_weights.size() != static_cast<std::size_t>(cfg.unroll_iters))
    throw ConfigError("iteration_weights must have one entry per unrolled iteration");
  RequireShape(static_cast<Index>(init.labels.size()) == seq.frames(),
               "forward_loss: init labels do not match sequence length");
  RequireShape(gt.frames() == seq.frames(), "forward_loss: ground truth does not match sequence");
  Tape tape;
  tape.nat = ReparamToNatural(params);
  const NaturalParams &n = tape.nat;
  RequireShape(n.transform.rows() == seq.dim() && n.phi.size() == n.transform.cols(),
               "forward_loss: parameter shapes do not match the sequence");
  tape.hmm = !cfg.forced_gmm && n.loop_prob > 0.0;
  tape.centered = seq.raw.rowwise() - mean.transpose();
  tape.x = tape.centered * n.transform;
  tape.gamma0 = SmoothLabels(init, n.smoothing);
  const std::optional<double> calib =
      cfg.calibrate ? std::optional<double>(n.calib) : std::nullopt;

  const Index S = tape.gamma0.cols();
  Matrix gamma = tape.gamma0;
  Vector pi = Vector::Constant(S, 1.0 / static_cast<double>(S));
  const auto weight = [&](int k) {
    return cfg.iteration_weights.empty() ? 1.0 / static_cast<double>(cfg.unroll_iters)
                                         : cfg.iteration_weights[static_cast<std::size_t>(k)];
  };
  double loss = 0.0;
  tape.iters.reserve(static_cast<std::size_t>(cfg.unroll_iters));
  for (int k = 0; k < cfg.unroll_iters; ++k) {
    IterationTape it;
    it.gamma_in = gamma;
    it.pi_in = pi;
    it.post = UpdateSpeakerPosteriors(gamma, tape.x, n.phi, n.fa, n.fb);
    it.loglik = ExpectedLogLik(tape.x, it.post, n.phi, n.fa);
    double data = 0.0;
    if (tape.hmm) {
      it.hmm = HmmForwardBackward(it.loglik, pi, n.loop_prob);
      it.gamma_out = it.hmm.gamma;
      data = it.hmm.log_z;
    } else {
      Matrix z = it.loglik;
      z.rowwise() += SafeLog(pi).transpose();
      for (Index t = 0; t < z.rows(); ++t) data += LogSumExp(z.row(t).transpose());
      it.gamma_out = RowSoftmax(z);
    }
    it.pi_out = UpdatePriors(it.gamma_out);

    PitResult pit = EvaluatePit(it.gamma_out, gt, cfg.frame_loss, calib, with_grad);
    loss += weight(k) * pit.report.value;
    tape.result.report.per_iteration_values.push_back(pit.report.value);
    tape.result.report.best_permutation = pit.report.best_permutation;
    if (with_grad) {
      it.grad_gamma_loss = weight(k) * pit.grad_gamma;
      it.grad_calib = weight(k) * pit.grad_calib;
    }

    tape.result.trace.per_iter_gamma.push_back(it.gamma_out);
    tape.result.trace.per_iter_elbo.push_back(data - n.fb * PosteriorKl(it.post));
    tape.result.trace.final_posteriors = it.post;
    ++tape.result.trace.iterations_run;
    gamma = it.gamma_out;
    pi = it.pi_out;
    tape.iters.push_back(std::move(it));
  }
  tape.result.trace.final_priors.pi = pi;
  tape.result.loss = loss;
  tape.result.report.value = tape.result.loss;
  if (!std::isfinite(tape.result.loss)) throw NumericError("forward_loss: non-finite loss");
  return tape;
}

}  // namespace diff_detail

/// Runs the unrolled pipeline at a fixed depth and returns the weighted
/// (by default averaged) loss.
inline ForwardResult ForwardLoss(const ParamSet &params, const XVectorSequence &seq,
                                 const Vector &mean, const HardLabels &init,
                                 const GroundTruth &gt, const PipelineConfig &cfg) {
  return diff_detail::RunTape(params, seq, mean, init, gt, cfg, false).result;
}

struct BackwardResult {
  double loss = 0.0;
  GradientSet grads;
};

/// Exact gradients of ForwardLoss w.r.t. every trainable slot (others are 0).
inline BackwardResult Backward(const ParamSet &params, const XVectorSequence &seq,
                               const Vector &mean, const HardLabels &init,
                               const GroundTruth &gt, const PipelineConfig &cfg) {
  diff_detail::Tape tape = diff_detail::RunTape(params, seq, mean, init, gt, cfg, true);
  const NaturalParams &n = tape.nat;
  const Index D = n.phi.size();

  double g_fa = 0.0, g_fb = 0.0, g_loop = 0.0, g_calib = 0.0;
  Vector g_phi = Vector::Zero(D);
  Matrix g_x = Matrix::Zero(tape.x.rows(), tape.x.cols());
  Matrix g_gamma_carry = Matrix::Zero(tape.gamma0.rows(), tape.gamma0.cols());
  Vector g_pi_carry = Vector::Zero(tape.gamma0.cols());

  for (auto it = tape.iters.rbegin(); it != tape.iters.rend(); ++it) {
    g_calib += it->grad_calib;
    Matrix g_gamma = it->grad_gamma_loss + g_gamma_carry;
    UpdatePriorsBackward(it->gamma_out, it->pi_out, g_pi_carry, g_gamma);

    ResponsibilityGrads rg =
        tape.hmm ? HmmResponsibilitiesBackward(it->loglik, it->pi_in, n.loop_prob, it->hmm, g_gamma)
                 : GmmResponsibilitiesBackward(it->gamma_out, it->pi_in, g_gamma);
    g_loop += rg.loop_prob;
    g_pi_carry = rg.pi;

    LogLikGrads lg = ExpectedLogLikBackward(tape.x, it->post, n.phi, n.fa, rg.loglik);
    g_fa += lg.fa;
    g_phi += lg.phi;
    g_x += lg.x;

    PosteriorGrads pg = UpdateSpeakerPosteriorsBackward(it->gamma_in, tape.x, n.phi, n.fa, n.fb,
                                                        it->post, lg.alpha, lg.precision);
    g_fa += pg.fa;
    g_fb += pg.fb;
    g_phi += pg.phi;
    g_x += pg.x;
    g_gamma_carry = std::move(pg.gamma);
  }
  // The initial priors are a constant; g_pi_carry is dropped here.
  const double g_tau = SmoothLabelsBackward(init, tape.gamma0, g_gamma_carry);

  BackwardResult out;
  out.loss = tape.result.loss;
  out.grads = ZeroLike(params);
  GradientSet &g = out.grads;
  g.scalar(Slot::kFa) = g_fa;
  g.scalar(Slot::kFb) = g_fb;
  g.scalar(Slot::kLogitLoopProb) = tape.hmm ? g_loop * n.loop_prob * (1.0 - n.loop_prob) : 0.0;
  g.scalar(Slot::kLogSmoothing) = g_tau * n.smoothing;
  g.scalar(Slot::kLogCalib) = cfg.calibrate ? g_calib * n.calib : 0.0;
  g[Slot::kTransform] = tape.centered.transpose() * g_x;
  g[Slot::kLogPhi] = (g_phi.array() * n.phi.array()).matrix();

  for (Slot s : kAllSlots) {
    if (!params.is_trainable(s)) {
      g[s].setZero();
      continue;
    }
    if (!g[s].allFinite())
      throw NumericError("backward: non-finite gradient in slot " + std::string(SlotName(s)));
  }
  return out;
}

/// Central difference (f(theta + h) - f(theta - h)) / 2h on one element of
/// one slot, in the stored (reparametrized) space.
inline double FiniteDifference(const std::function<double(const ParamSet &)> &loss_fn,
                               const ParamSet &params, Slot slot, Index row, Index col,
                               double h) {
  if (!(h > 0.0)) throw ConfigError("finite_difference: h must be > 0");
  ParamSet plus = params;
  ParamSet minus = params;
  plus[slot](row, col) += h;
  minus[slot](row, col) -= h;
  return (loss_fn(plus) - loss_fn(minus)) / (2.0 * h);
}

/// Step sizes: 1e-4 * max(1, |theta|) for scalars, 1e-4 for matrix elements.
inline double DefaultStep(const ParamSet &params, Slot slot, Index row, Index col) {
  if (IsScalarSlot(slot)) return 1e-4 * std::max(1.0, std::abs(params[slot](row, col)));
  return 1e-4;
}

struct GradCheckTolerance {
  double rel = 1e-4;
  double abs = 1e-7;
  double near_zero = 1e-3;  // below this magnitude the absolute bound applies
};

struct GradCheckRow {
  Slot slot = Slot::kFa;
  Index row = 0;
  Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;
  bool pass = false;
};

inline GradCheckRow CompareGradient(Slot slot, Index row, Index col, double analytic,
                                    double numeric, const GradCheckTolerance &tol) {
  GradCheckRow r{slot, row, col, analytic, numeric};
  r.abs_err = std::abs(analytic - numeric);
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  r.rel_err = scale > 0.0 ? r.abs_err / scale : 0.0;
  r.pass = scale < tol.near_zero ? (r.abs_err <= tol.abs || r.rel_err <= tol.rel)
                                 : r.rel_err <= tol.rel;
  return r;
}

/// Compares Backward against central differences for every element of the
/// trainable slots in `slots`.
inline std::vector<GradCheckRow> CheckGradients(const ParamSet &params, const XVectorSequence &seq,
                                                const Vector &mean, const HardLabels &init,
                                                const GroundTruth &gt, const PipelineConfig &cfg,
                                                const std::vector<Slot> &slots,
                                                const GradCheckTolerance &tol = {}) {
  const BackwardResult b = Backward(params, seq, mean, init, gt, cfg);
  const auto loss_fn = [&](const ParamSet &p) {
    return ForwardLoss(p, seq, mean, init, gt, cfg).loss;
  };
  std::vector<GradCheckRow> rows;
  for (Slot s : slots) {
    if (!params.is_trainable(s)) continue;
    for (Index c = 0; c < params[s].cols(); ++c)
      for (Index r = 0; r < params[s].rows(); ++r) {
        const double num = FiniteDifference(loss_fn, params, s, r, c, DefaultStep(params, s, r, c));
        rows.push_back(CompareGradient(s, r, c, b.grads[s](r, c), num, tol));
      }
  }
  return rows;
}

}  // namespace dvbx

#endif  // DVBX_DIFFENGINE_HPP_
