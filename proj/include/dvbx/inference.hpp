// dvbx/inference.hpp

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

// Variational Bayes inference of the Bayesian HMM/GMM over transformed
// x-vectors. Every differentiable step has a matching *Backward function that
// maps output adjoints to input adjoints; the diffengine chains them.
//
// Shapes: X is T x D (transformed x-vectors), gamma is T x S, alpha and
// precision are S x D, phi is length D.

#ifndef DVBX_INFERENCE_HPP_
#define DVBX_INFERENCE_HPP_

#include <string>
#include <vector>

#include "dvbx/common.hpp"

namespace dvbx {

struct HyperParams {
  double fa = 1.0;
  double fb = 1.0;
  double loop_prob = 0.0;
  double smoothing = 7.0;
  double calib = 1.0;
  int max_iters = 40;
  double elbo_tol = 1e-4;
  bool use_elbo_stop = true;

  void Validate() const {
    if (!(fa > 0.0)) throw ConfigError("fa must be > 0");
    if (!(fb > 0.0)) throw ConfigError("fb must be > 0");
    if (!(smoothing > 0.0)) throw ConfigError("smoothing must be > 0");
    if (!(calib > 0.0)) throw ConfigError("calib must be > 0");
    if (!(loop_prob >= 0.0 && loop_prob < 1.0)) throw ConfigError("loop_prob must lie in [0, 1)");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (!(elbo_tol >= 0.0)) throw ConfigError("elbo_tol must be >= 0");
  }
};

/// Row-stochastic T x S soft assignment of frames to speakers.
struct Responsibilities {
  Matrix gamma;

  Index frames() const { return gamma.rows(); }
  Index speakers() const { return gamma.cols(); }
};

/// Throws NumericError unless every row of gamma is a distribution (1e-9).
inline void CheckRowStochastic(const Matrix &gamma, const std::string &what) {
  RequireFinite(gamma, what);
  if (gamma.size() == 0) return;
  if (gamma.minCoeff() < 0.0 || gamma.maxCoeff() > 1.0 + 1e-12)
    throw NumericError(what + ": entry outside [0, 1]");
  for (Index t = 0; t < gamma.rows(); ++t)
    if (std::abs(gamma.row(t).sum() - 1.0) > 1e-9)
      throw NumericError(what + ": row " + std::to_string(t) + " does not sum to 1");
}

/// q(y_s) = N(alpha_s, diag(precision_s)^-1).
struct SpeakerPosteriors {
  Matrix alpha;      // S x D
  Matrix precision;  // S x D, entries >= 1
};

struct SpeakerPriors {
  Vector pi;
};

struct InferenceTrace {
  std::vector<Matrix> per_iter_gamma;
  std::vector<double> per_iter_elbo;
  SpeakerPosteriors final_posteriors;
  SpeakerPriors final_priors;
  int iterations_run = 0;
};

// ---------------------------------------------------------------------------
// Speaker posteriors

inline SpeakerPosteriors UpdateSpeakerPosteriors(const Matrix &gamma, const Matrix &x,
                                                 const Vector &phi, double fa, double fb) {
  RequireShape(gamma.rows() == x.rows() && x.cols() == phi.size(),
               "update_speaker_posteriors: dimension mismatch");
  if (!gamma.allFinite() || !x.allFinite() || !phi.allFinite() || !std::isfinite(fa) ||
      !std::isfinite(fb))
    throw NumericError("update_speaker_posteriors: non-finite input");
  const double r = fa / fb;
  const RowVector v = phi.array().sqrt().matrix().transpose();
  const Vector counts = gamma.colwise().sum().transpose();
  const Matrix weighted = (gamma.transpose() * x).array().rowwise() * v.array();

  SpeakerPosteriors post;
  post.precision = (r * counts * phi.transpose()).array() + 1.0;
  post.alpha = r * weighted.array() / post.precision.array();
  return post;
}

struct PosteriorGrads {
  Matrix gamma;
  Matrix x;
  Vector phi;
  double fa = 0.0;
  double fb = 0.0;
};

inline PosteriorGrads UpdateSpeakerPosteriorsBackward(const Matrix &gamma, const Matrix &x,
                                                      const Vector &phi, double fa, double fb,
                                                      const SpeakerPosteriors &post,
                                                      const Matrix &grad_alpha,
                                                      const Matrix &grad_precision) {
  const double r = fa / fb;
  const Vector v = phi.array().sqrt();
  const Vector counts = gamma.colwise().sum().transpose();
  const Matrix projected = gamma.transpose() * x;  // S x D, before the V scaling
  const Matrix weighted = projected.array().rowwise() * v.transpose().array();
  const Matrix &prec = post.precision;

  // alpha = r * weighted / prec
  const Matrix grad_weighted = (r * grad_alpha.array() / prec.array()).matrix();
  const Matrix grad_prec_total =
      grad_precision.array() -
      grad_alpha.array() * r * weighted.array() / prec.array().square();
  double grad_r = (grad_alpha.array() * weighted.array() / prec.array()).sum();

  // prec = 1 + r * counts * phi^T
  grad_r += (grad_prec_total.array() * (counts * phi.transpose()).array()).sum();
  const Vector grad_counts = r * (grad_prec_total * phi);
  Vector grad_phi = r * (grad_prec_total.transpose() * counts);

  // weighted = projected .* v
  const Matrix grad_projected = grad_weighted.array().rowwise() * v.transpose().array();
  const Vector grad_v = (grad_weighted.array() * projected.array()).colwise().sum().transpose();

  PosteriorGrads g;
  g.gamma = x * grad_projected.transpose();
  g.gamma.rowwise() += grad_counts.transpose();
  g.x = gamma * grad_projected;
  grad_phi.array() += grad_v.array() / (2.0 * v.array());
  g.phi = grad_phi;
  g.fa = grad_r / fb;
  g.fb = -grad_r * fa / (fb * fb);
  return g;
}

// ---------------------------------------------------------------------------
// Expected log-likelihood

/// (t, s) -> fa * [alpha_s^T V x_t - 0.5 * sum_i phi_i (1/prec_si + alpha_si^2)].
/// No per-frame constant is added.
inline Matrix ExpectedLogLik(const Matrix &x, const SpeakerPosteriors &post, const Vector &phi,
                             double fa) {
  RequireShape(x.cols() == phi.size() && post.alpha.cols() == phi.size() &&
                   post.precision.rows() == post.alpha.rows() &&
                   post.precision.cols() == post.alpha.cols(),
               "expected_log_lik: dimension mismatch");
  if (!x.allFinite() || !post.alpha.allFinite() || !post.precision.allFinite() ||
      !phi.allFinite() || !std::isfinite(fa))
    throw NumericError("expected_log_lik: non-finite input");
  const RowVector v = phi.array().sqrt().matrix().transpose();
  const Matrix xv = x.array().rowwise() * v.array();
  const Vector penalty =
      (post.precision.array().inverse() + post.alpha.array().square()).matrix() * phi;
  Matrix ll = xv * post.alpha.transpose();
  ll.rowwise() -= 0.5 * penalty.transpose();
  return fa * ll;
}

struct LogLikGrads {
  Matrix x;
  Matrix alpha;
  Matrix precision;
  Vector phi;
  double fa = 0.0;
};

inline LogLikGrads ExpectedLogLikBackward(const Matrix &x, const SpeakerPosteriors &post,
                                          const Vector &phi, double fa,
                                          const Matrix &grad_ll) {
  const Vector v = phi.array().sqrt();
  const Matrix xv = x.array().rowwise() * v.transpose().array();
  const Matrix inv_prec = post.precision.array().inverse();
  const Vector penalty = (inv_prec.array() + post.alpha.array().square()).matrix() * phi;
  Matrix unscaled = xv * post.alpha.transpose();
  unscaled.rowwise() -= 0.5 * penalty.transpose();

  LogLikGrads g;
  g.fa = (grad_ll.array() * unscaled.array()).sum();
  const Matrix grad_u = fa * grad_ll;
  const Vector grad_penalty = -0.5 * grad_u.colwise().sum().transpose();  // S

  const Matrix grad_xv = grad_u * post.alpha;  // T x D
  g.x = grad_xv.array().rowwise() * v.transpose().array();
  const Vector grad_v = (grad_xv.array() * x.array()).colwise().sum().transpose();

  g.alpha = grad_u.transpose() * xv;
  g.alpha.array() += 2.0 * (grad_penalty * phi.transpose()).array() * post.alpha.array();
  g.precision =
      -(grad_penalty * phi.transpose()).array() * inv_prec.array().square();
  g.phi = (inv_prec.array() + post.alpha.array().square()).matrix().transpose() * grad_penalty;
  g.phi.array() += grad_v.array() / (2.0 * v.array());
  return g;
}

// ---------------------------------------------------------------------------
// Responsibilities

inline Vector SafeLog(const Vector &p) {
  Vector out(p.size());
  for (Index i = 0; i < p.size(); ++i) out(i) = p(i) > 0.0 ? std::log(p(i)) : kNegInf;
  return out;
}

/// Row-wise softmax of loglik + log(pi).
inline Matrix GmmResponsibilities(const Matrix &loglik, const Vector &pi) {
  RequireShape(loglik.cols() == pi.size(), "gmm_responsibilities: prior size mismatch");
  Matrix z = loglik;
  z.rowwise() += SafeLog(pi).transpose();
  return RowSoftmax(z);
}

struct ResponsibilityGrads {
  Matrix loglik;
  Vector pi;
  double loop_prob = 0.0;
};

inline ResponsibilityGrads GmmResponsibilitiesBackward(const Matrix &gamma, const Vector &pi,
                                                       const Matrix &grad_gamma) {
  ResponsibilityGrads g;
  g.loglik = RowSoftmaxBackward(gamma, grad_gamma);
  const Vector grad_logpi = g.loglik.colwise().sum().transpose();
  g.pi = Vector::Zero(pi.size());
  for (Index s = 0; s < pi.size(); ++s)
    if (pi(s) > 0.0) g.pi(s) = grad_logpi(s) / pi(s);
  return g;
}

/// Log-domain forward-backward quantities kept for the adjoint pass.
struct ForwardBackwardCache {
  Matrix log_trans;  // S x S, (from, to)
  Matrix fwd;        // T x S log alpha
  Matrix bwd;        // T x S log beta
  double log_z = 0.0;
  Matrix gamma;
};

inline Matrix LogTransitions(const Vector &pi, double loop_prob) {
  const Index S = pi.size();
  Matrix lt(S, S);
  for (Index from = 0; from < S; ++from)
    for (Index to = 0; to < S; ++to) {
      const double p = (1.0 - loop_prob) * pi(to) + (from == to ? loop_prob : 0.0);
      lt(from, to) = p > 0.0 ? std::log(p) : kNegInf;
    }
  return lt;
}

/// HMM state posteriors with transitions (1-P)pi_s + [s == s'] P and initial
/// distribution pi, computed in the log domain.
inline ForwardBackwardCache HmmForwardBackward(const Matrix &loglik, const Vector &pi,
                                               double loop_prob) {
  const Index T = loglik.rows();
  const Index S = loglik.cols();
  RequireShape(pi.size() == S, "hmm_responsibilities: prior size mismatch");
  ForwardBackwardCache c;
  c.log_trans = LogTransitions(pi, loop_prob);
  c.fwd.resize(T, S);
  c.bwd.resize(T, S);
  const Vector log_pi = SafeLog(pi);
  Vector tmp(S);
  c.fwd.row(0) = loglik.row(0) + log_pi.transpose();
  for (Index t = 1; t < T; ++t) {
    for (Index to = 0; to < S; ++to) {
      tmp = c.fwd.row(t - 1).transpose() + c.log_trans.col(to);
      c.fwd(t, to) = loglik(t, to) + LogSumExp(tmp);
    }
  }
  c.bwd.row(T - 1).setZero();
  for (Index t = T - 2; t >= 0; --t) {
    for (Index from = 0; from < S; ++from) {
      tmp = c.log_trans.row(from).transpose() + loglik.row(t + 1).transpose() +
            c.bwd.row(t + 1).transpose();
      c.bwd(t, from) = LogSumExp(tmp);
    }
  }
  c.log_z = LogSumExp(c.fwd.row(T - 1).transpose());
  if (!std::isfinite(c.log_z)) throw NumericError("hmm_responsibilities: non-finite likelihood");
  c.gamma.resize(T, S);
  for (Index t = 0; t < T; ++t) {
    for (Index s = 0; s < S; ++s) {
      const double g = c.fwd(t, s) + c.bwd(t, s) - c.log_z;
      c.gamma(t, s) = g == kNegInf ? 0.0 : std::exp(g);
    }
    // Absorb the rounding of log_z so rows stay stochastic to 1e-12.
    c.gamma.row(t) /= c.gamma.row(t).sum();
  }
  return c;
}

inline Matrix HmmResponsibilities(const Matrix &loglik, const Vector &pi, double loop_prob) {
  return HmmForwardBackward(loglik, pi, loop_prob).gamma;
}

/// Adjoint of HmmForwardBackward (ignores the final row renormalization,
/// which is the identity up to rounding).
inline ResponsibilityGrads HmmResponsibilitiesBackward(const Matrix &loglik, const Vector &pi,
                                                       double loop_prob,
                                                       const ForwardBackwardCache &c,
                                                       const Matrix &grad_gamma) {
  const Index T = loglik.rows();
  const Index S = loglik.cols();
  const Matrix grad_g = grad_gamma.array() * c.gamma.array();  // d/d(log gamma)
  Matrix grad_fwd = grad_g;
  Matrix grad_bwd = grad_g;
  const double grad_logz = -grad_g.sum();
  Matrix grad_lt = Matrix::Zero(S, S);
  ResponsibilityGrads g;
  g.loglik = Matrix::Zero(T, S);

  for (Index s = 0; s < S; ++s) {
    const double w = c.fwd(T - 1, s) == kNegInf ? 0.0 : std::exp(c.fwd(T - 1, s) - c.log_z);
    grad_fwd(T - 1, s) += grad_logz * w;
  }

  // Backward messages depend on later ones; push adjoints forward in time.
  for (Index t = 0; t + 1 < T; ++t) {
    for (Index from = 0; from < S; ++from) {
      const double gb = grad_bwd(t, from);
      if (gb == 0.0 || c.bwd(t, from) == kNegInf) continue;
      for (Index to = 0; to < S; ++to) {
        const double e = c.log_trans(from, to) + loglik(t + 1, to) + c.bwd(t + 1, to);
        if (e == kNegInf) continue;
        const double d = gb * std::exp(e - c.bwd(t, from));
        grad_lt(from, to) += d;
        g.loglik(t + 1, to) += d;
        grad_bwd(t + 1, to) += d;
      }
    }
  }

  for (Index t = T - 1; t >= 1; --t) {
    for (Index to = 0; to < S; ++to) {
      const double ga = grad_fwd(t, to);
      g.loglik(t, to) += ga;
      const double msg = c.fwd(t, to) - loglik(t, to);
      if (ga == 0.0 || msg == kNegInf) continue;
      for (Index from = 0; from < S; ++from) {
        const double e = c.fwd(t - 1, from) + c.log_trans(from, to);
        if (e == kNegInf) continue;
        const double d = ga * std::exp(e - msg);
        grad_fwd(t - 1, from) += d;
        grad_lt(from, to) += d;
      }
    }
  }
  g.loglik.row(0) += grad_fwd.row(0);

  g.pi = Vector::Zero(S);
  for (Index s = 0; s < S; ++s)
    if (pi(s) > 0.0) g.pi(s) += grad_fwd(0, s) / pi(s);
  g.loop_prob = 0.0;
  for (Index from = 0; from < S; ++from)
    for (Index to = 0; to < S; ++to) {
      if (c.log_trans(from, to) == kNegInf) continue;
      const double grad_p = grad_lt(from, to) / std::exp(c.log_trans(from, to));
      g.loop_prob += grad_p * ((from == to ? 1.0 : 0.0) - pi(to));
      g.pi(to) += grad_p * (1.0 - loop_prob);
    }
  return g;
}

// ---------------------------------------------------------------------------
// Priors

/// Normalized responsibility mass per speaker.
inline Vector UpdatePriors(const Matrix &gamma) {
  const Vector mass = gamma.colwise().sum().transpose();
  return mass / mass.sum();
}

/// Adds the adjoint of UpdatePriors into grad_gamma.
inline void UpdatePriorsBackward(const Matrix &gamma, const Vector &pi, const Vector &grad_pi,
                                 Matrix &grad_gamma) {
  const double total = gamma.sum();
  const double dot = grad_pi.dot(pi);
  const Vector grad_mass = (grad_pi.array() - dot) / total;
  grad_gamma.rowwise() += grad_mass.transpose();
}

// ---------------------------------------------------------------------------
// ELBO

/// KL(N(alpha_s, prec_s^-1) || N(0, I)) summed over speakers.
inline double PosteriorKl(const SpeakerPosteriors &post) {
  const auto &p = post.precision.array();
  return 0.5 * (p.inverse() + post.alpha.array().square() - 1.0 + p.log()).sum();
}

/// Scaled lower bound: data term minus fb * KL. Under the GMM factorization
/// the data term is sum_ts gamma (loglik + log pi - log gamma), which equals
/// sum_t logsumexp_s(loglik + log pi) when gamma is the matching softmax. With
/// loop_prob > 0 the data term is the forward-pass log-likelihood.
inline double ComputeElbo(const Matrix &x, const Matrix &gamma, const SpeakerPosteriors &post,
                          const Vector &pi, const Vector &phi, const HyperParams &hp) {
  const Matrix ll = ExpectedLogLik(x, post, phi, hp.fa);
  double data = 0.0;
  if (hp.loop_prob > 0.0) {
    data = HmmForwardBackward(ll, pi, hp.loop_prob).log_z;
  } else {
    const Vector log_pi = SafeLog(pi);
    for (Index t = 0; t < gamma.rows(); ++t)
      for (Index s = 0; s < gamma.cols(); ++s) {
        const double g = gamma(t, s);
        if (g > 0.0) data += g * (ll(t, s) + log_pi(s) - std::log(g));
      }
  }
  return data - hp.fb * PosteriorKl(post);
}

// ---------------------------------------------------------------------------
// Iteration loop

/// Runs VB from init_gamma: posteriors -> loglik -> responsibilities ->
/// priors -> ELBO per iteration. Priors start uniform. The ELBO of an
/// iteration is evaluated with the priors that produced its responsibilities.
inline InferenceTrace RunInference(const Matrix &x, const Matrix &init_gamma, const Vector &phi,
                                   const HyperParams &hp) {
  hp.Validate();
  RequireShape(init_gamma.rows() == x.rows() && init_gamma.cols() >= 1,
               "run_inference: init responsibilities do not match sequence");
  const Index S = init_gamma.cols();
  InferenceTrace trace;
  Matrix gamma = init_gamma;
  Vector pi = Vector::Constant(S, 1.0 / static_cast<double>(S));
  for (int it = 0; it < hp.max_iters; ++it) {
    SpeakerPosteriors post = UpdateSpeakerPosteriors(gamma, x, phi, hp.fa, hp.fb);
    const Matrix ll = ExpectedLogLik(x, post, phi, hp.fa);
    double data = 0.0;
    if (hp.loop_prob > 0.0) {
      ForwardBackwardCache fb = HmmForwardBackward(ll, pi, hp.loop_prob);
      gamma = std::move(fb.gamma);
      data = fb.log_z;
    } else {
      Matrix z = ll;
      z.rowwise() += SafeLog(pi).transpose();
      for (Index t = 0; t < z.rows(); ++t) data += LogSumExp(z.row(t).transpose());
      gamma = RowSoftmax(z);
    }
    const double elbo = data - hp.fb * PosteriorKl(post);
    pi = UpdatePriors(gamma);
    trace.per_iter_gamma.push_back(gamma);
    trace.per_iter_elbo.push_back(elbo);
    trace.final_posteriors = std::move(post);
    ++trace.iterations_run;
    if (hp.use_elbo_stop && it > 0 &&
        elbo - trace.per_iter_elbo[trace.per_iter_elbo.size() - 2] < hp.elbo_tol)
      break;
  }
  trace.final_priors.pi = pi;
  return trace;
}

struct PrunedResult {
  Matrix gamma;
  std::vector<Index> kept;  // surviving original speaker indices
};

/// Evaluation-only: drops speakers with pi_s < rel_threshold / S and
/// renormalizes the remaining columns.
inline PrunedResult PruneSpeakers(const Matrix &gamma, const Vector &pi,
                                  double rel_threshold = 1e-3) {
  const Index S = gamma.cols();
  PrunedResult out;
  for (Index s = 0; s < S; ++s)
    if (pi(s) >= rel_threshold / static_cast<double>(S)) out.kept.push_back(s);
  if (out.kept.empty()) {
    Index best = 0;
    pi.maxCoeff(&best);
    out.kept.push_back(best);
  }
  out.gamma.resize(gamma.rows(), static_cast<Index>(out.kept.size()));
  for (std::size_t k = 0; k < out.kept.size(); ++k)
    out.gamma.col(static_cast<Index>(k)) = gamma.col(out.kept[k]);
  for (Index t = 0; t < out.gamma.rows(); ++t) {
    const double sum = out.gamma.row(t).sum();
    if (sum > 0.0)
      out.gamma.row(t) /= sum;
    else
      out.gamma.row(t).setConstant(1.0 / static_cast<double>(out.gamma.cols()));
  }
  return out;
}

}  // namespace dvbx

#endif  // DVBX_INFERENCE_HPP_
