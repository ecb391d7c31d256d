// tests/acceptance.cpp

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

// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "der_fixtures.hpp"
#include "dvbx/dataio.hpp"
#include "dvbx/diffengine.hpp"
#include "dvbx/inference.hpp"
#include "dvbx/init.hpp"
#include "dvbx/losses.hpp"
#include "dvbx/plda.hpp"
#include "dvbx/scoring.hpp"
#include "dvbx/training.hpp"
#include "test_util.hpp"

namespace dvbx {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Format(const char *fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

double Seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> Ranks(const std::vector<double> &v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t j = k;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[k]]) ++j;
    for (std::size_t m = k; m <= j; ++m) r[idx[m]] = 0.5 * static_cast<double>(k + j);
    k = j + 1;
  }
  return r;
}

/// Spearman rank correlation with average ranks for ties; 0 when either
/// series is constant.
double Spearman(const std::vector<double> &a, const std::vector<double> &b) {
  const std::vector<double> ra = Ranks(a), rb = Ranks(b);
  const double n = static_cast<double>(ra.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    sab += (ra[k] - ma) * (rb[k] - mb);
    saa += (ra[k] - ma) * (ra[k] - ma);
    sbb += (rb[k] - mb) * (rb[k] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

Outcome GradientCorrectness() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<Slot> slots = {Slot::kFa,       Slot::kFb,        Slot::kLogSmoothing,
                                   Slot::kLogCalib, Slot::kTransform, Slot::kLogPhi};
  struct Variant {
    FrameLoss loss;
    bool calibrate;
  };
  const Variant variants[] = {{FrameLoss::kBce, false}, {FrameLoss::kBce, true},
                              {FrameLoss::kEde, false}, {FrameLoss::kEde, true}};
  int checked = 0, failed = 0;
  double worst = 0.0, worst_small_step = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    testing::GradientProblem g = testing::MakeGradientProblem(100 + seed, 20, 3, 5, 4);
    g.params.set_trainable(Slot::kLogitLoopProb, false);
    for (const Variant &v : variants) {
      PipelineConfig pc;
      pc.unroll_iters = 10;
      pc.frame_loss = v.loss;
      pc.calibrate = v.calibrate;
      pc.forced_gmm = true;
      const auto loss_fn = [&](const ParamSet &p) {
        return ForwardLoss(p, g.seq, g.mean, g.init, g.gt, pc).loss;
      };
      for (const GradCheckRow &r : CheckGradients(g.params, g.seq, g.mean, g.init, g.gt, pc, slots)) {
        ++checked;
        if (!r.pass) {
          ++failed;
          // Diagnostic only: the same element at a 100x smaller step.
          const double h = 1e-2 * DefaultStep(g.params, r.slot, r.row, r.col);
          const double num = FiniteDifference(loss_fn, g.params, r.slot, r.row, r.col, h);
          worst_small_step = std::max(
              worst_small_step, CompareGradient(r.slot, r.row, r.col, r.analytic, num, {}).rel_err);
        }
        if (std::max(std::abs(r.analytic), std::abs(r.numeric)) >= GradCheckTolerance{}.near_zero)
          worst = std::max(worst, r.rel_err);
      }
    }
  }
  const double secs = Seconds(t0);
  return {failed == 0 && secs < 60.0,
          Format("%d elements over 20 seeds x {BCE, BCE-calib, EDE, EDE-calib}, %d outside "
                 "tolerance, worst rel %.2e, %.1f s (outliers at a 100x smaller step: worst rel "
                 "%.1e)",
                 checked, failed, worst, secs, worst_small_step)};
}

Outcome HmmGmmEquivalence() {
  Rng rng(2);
  double gap = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Index T = rng.UniformInt(1, 40), S = rng.UniformInt(1, 6);
    const Matrix ll = testing::RandomMatrix(rng, T, S, 3.0);
    const Vector pi = testing::RandomStochastic(rng, 1, S).row(0).transpose();
    gap = std::max(gap, (HmmResponsibilities(ll, pi, 0.0) - GmmResponsibilities(ll, pi))
                            .cwiseAbs()
                            .maxCoeff());
  }
  double brute = 0.0;
  int fixtures = 0;
  for (Index T = 1; T <= 5; ++T)
    for (Index S = 1; S <= 3; ++S)
      for (double loop : {0.0, 0.3, 0.7, 0.99})
        for (int rep = 0; rep < 3; ++rep) {
          const Matrix ll = testing::RandomMatrix(rng, T, S, 2.0);
          const Vector pi = testing::RandomStochastic(rng, 1, S).row(0).transpose();
          brute = std::max(brute, (HmmResponsibilities(ll, pi, loop) -
                                   testing::BruteForceMarginals(ll, pi, loop))
                                      .cwiseAbs()
                                      .maxCoeff());
          ++fixtures;
        }
  return {gap <= 1e-12 && brute <= 1e-9,
          Format("loop 0 vs GMM max |diff| %.1e over 100; forward-backward vs enumeration "
                 "max |diff| %.1e over %d fixtures",
                 gap, brute, fixtures)};
}

struct SyntheticSetup {
  SynthConfig synth;
  PldaModel plda;
  TransformedSpace space;
  std::vector<Utterance> train, val, test;
};

SynthConfig AcceptanceSynthConfig() {
  SynthConfig sc;
  sc.dim = 16;
  sc.raw_space = true;
  sc.seed = 7;
  sc.min_speakers = 2;
  sc.max_speakers = 4;
  sc.noise_correlation = 0.8;
  sc.stay_prob = 0.95;
  sc.phi_max = 1.5;
  return sc;
}

SyntheticSetup MakeSetup(const SynthConfig &sc, int train, int val, int test) {
  SyntheticSetup s;
  s.synth = sc;
  const SynthWorld world = MakeSynthWorld(sc);
  Rng prng(Rng::Derive(sc.seed, 999));
  auto [vecs, labels] = GeneratePldaCorpus(sc, world, 500, 20, prng);
  s.plda = PretrainPlda(vecs, labels);
  s.space = SolveGevp(s.plda, sc.dim);
  for (auto &c : GenerateCorpus(sc, world, "tr", train, 0)) s.train.push_back(PrepareUtterance(c));
  for (auto &c : GenerateCorpus(sc, world, "va", val, 1000)) s.val.push_back(PrepareUtterance(c));
  for (auto &c : GenerateCorpus(sc, world, "te", test, 2000)) s.test.push_back(PrepareUtterance(c));
  return s;
}

Outcome VbMonotonicity() {
  SynthConfig sc = AcceptanceSynthConfig();
  sc.seed = 3;
  const SyntheticSetup s = MakeSetup(sc, 50, 0, 0);
  HyperParams hp;
  hp.fa = 1.0;
  hp.fb = 1.0;
  hp.max_iters = 40;
  hp.use_elbo_stop = false;
  double worst = 0.0;
  int violations = 0;
  for (const Utterance &u : s.train) {
    const Matrix x = TransformSequence(u.seq, s.plda, s.space).data;
    const Matrix init = SmoothLabels(AhcCluster(x), hp.smoothing);
    const InferenceTrace tr = RunInference(x, init, s.space.phi, hp);
    for (std::size_t k = 1; k < tr.per_iter_elbo.size(); ++k) {
      const double prev = tr.per_iter_elbo[k - 1], cur = tr.per_iter_elbo[k];
      const double drop = (prev - cur) / std::max(1.0, std::abs(prev));
      worst = std::max(worst, drop);
      if (drop > 1e-8) ++violations;
    }
  }
  return {violations == 0,
          Format("50 conversations x 40 iterations, %d decreases beyond 1e-8, worst relative "
                 "decrease %.1e",
                 violations, worst)};
}

Outcome PitExactness() {
  Rng rng(4);
  int mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    const Index S = 1 + i % 6;
    Matrix cost = testing::RandomMatrix(rng, S, S);
    if (i % 4 == 0) cost = cost.array().round();  // many ties
    if (AssignmentCost(cost, SolveAssignment(cost)) != testing::BruteForceAssignment(cost))
      ++mismatches;
  }
  int variant = 0;
  double pit_gap = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Index S = 1 + i % 6, T = rng.UniformInt(5, 30);
    const Matrix gamma = testing::RandomStochastic(rng, T, S);
    std::vector<int> spk(static_cast<std::size_t>(T));
    for (int &z : spk) z = rng.UniformInt(0, static_cast<int>(S) - 1);
    const GroundTruth gt = testing::OneHotTruth(spk, S);
    std::vector<Index> perm(static_cast<std::size_t>(S));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index k = S - 1; k > 0; --k) std::swap(perm[k], perm[rng.UniformInt(0, static_cast<int>(k))]);
    GroundTruth shuffled = gt;
    for (Index c = 0; c < S; ++c) {
      shuffled.labels.col(c) = gt.labels.col(perm[static_cast<std::size_t>(c)]);
      shuffled.speaker_names[static_cast<std::size_t>(c)] =
          gt.speaker_names[static_cast<std::size_t>(perm[static_cast<std::size_t>(c)])];
    }
    for (FrameLoss k : {FrameLoss::kBce, FrameLoss::kEde}) {
      if (PitLoss(gamma, gt, k).value != PitLoss(gamma, shuffled, k).value) ++variant;
      // The brute force sums in a different order, so this one is up to rounding.
      pit_gap = std::max(pit_gap, std::abs(PitLoss(gamma, gt, k).value -
                                           testing::BruteForcePit(gamma, gt.labels, k)));
    }
  }
  return {mismatches == 0 && variant == 0 && pit_gap <= 1e-12,
          Format("Hungarian vs brute force on 200 cost matrices: %d inexact; truth column "
                 "permutation changed 400 PIT losses %d times; PIT vs enumeration max |diff| %.1e",
                 mismatches, variant, pit_gap)};
}

Outcome LossAveraging() {
  testing::GradientProblem g = testing::MakeGradientProblem(9, 20, 3, 5, 4);
  double worst = 0.0;
  for (bool calibrate : {false, true}) {
    PipelineConfig pc;
    pc.unroll_iters = 10;
    pc.calibrate = calibrate;
    pc.forced_gmm = false;
    const BackwardResult avg = Backward(g.params, g.seq, g.mean, g.init, g.gt, pc);
    GradientSet mean_of_iters = ZeroLike(g.params);
    for (int k = 0; k < pc.unroll_iters; ++k) {
      PipelineConfig one = pc;
      one.iteration_weights.assign(static_cast<std::size_t>(pc.unroll_iters), 0.0);
      one.iteration_weights[static_cast<std::size_t>(k)] = 1.0;
      const BackwardResult b = Backward(g.params, g.seq, g.mean, g.init, g.gt, one);
      for (Slot s : kAllSlots) mean_of_iters[s] += b.grads[s] / pc.unroll_iters;
    }
    for (Slot s : kAllSlots)
      if (avg.grads[s].size() > 0)
        worst = std::max(worst, (avg.grads[s] - mean_of_iters[s]).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-10,
          Format("all slots, HMM path, 10 iterations, plain and calibrated: max |diff| %.1e",
                 worst)};
}

Outcome CalibrationSaturation() {
  Rng rng(6);
  double worst = 0.0, worst_separated = 0.0;
  int failed = 0;
  for (int i = 0; i < 20; ++i) {
    const Index T = 100, S = 3;
    // Peaked posteriors, as VB produces after a few iterations.
    const Matrix gamma = RowSoftmax(testing::RandomMatrix(rng, T, S, 6.0));
    std::vector<int> spk(static_cast<std::size_t>(T));
    for (int &z : spk) z = rng.UniformInt(0, static_cast<int>(S) - 1);
    const GroundTruth gt = testing::OneHotTruth(spk, S);
    const double soft = PitLoss(gamma, gt, FrameLoss::kEde, 100.0).value * T * S;
    const double hard = HardDetectionErrors(gamma, gt);
    const double ratio = std::abs(soft - hard) / (T * S);
    worst = std::max(worst, ratio);
    if (ratio > 1e-3) ++failed;

    // Diagnostic only: the same comparison restricted to rows whose two largest
    // responsibilities differ by at least 0.1.
    std::vector<Index> keep;
    for (Index t = 0; t < T; ++t) {
      RowVector r = gamma.row(t);
      std::sort(r.begin(), r.end());
      if (r(S - 1) - r(S - 2) >= 0.1) keep.push_back(t);
    }
    const Index K = static_cast<Index>(keep.size());
    const Matrix g_sep = gamma(keep, Eigen::placeholders::all);
    GroundTruth gt_sep = gt;
    gt_sep.labels = gt.labels(keep, Eigen::placeholders::all);
    const double soft_sep = PitLoss(g_sep, gt_sep, FrameLoss::kEde, 100.0).value * K * S;
    worst_separated = std::max(worst_separated,
                               std::abs(soft_sep - HardDetectionErrors(g_sep, gt_sep)) / (K * S));
  }
  return {failed == 0,
          Format("20 pairs (T=100, S=3): %d outside 1e-3*T*S, worst |EDE - hard| / (T*S) %.2e "
                 "(rows with top-two gap >= 0.1 only: %.1e)",
                 failed, worst, worst_separated)};
}

/// Criteria 7 and 8 share one synthetic corpus and the stage-1 EDE run.
struct EndToEnd {
  Outcome improvement;
  Outcome correlation;
};

EndToEnd EndToEndTraining() {
  const auto t0 = std::chrono::steady_clock::now();
  const SyntheticSetup s = MakeSetup(AcceptanceSynthConfig(), 64, 32, 32);
  const Vector &mean = s.plda.mean;
  const ParamSet defaults = MakeParams(s.space, HyperParams{});

  TrainConfig tc;
  tc.epochs = 12;
  tc.lr_fa = 5e-2;
  tc.lr_hparams = 5e-2;
  tc.lr_plda = 3e-3;
  tc.loss_kind = LossKind::kEde;
  const double der_default = EvaluateSet(defaults, mean, s.test, tc.eval, true).der;

  TrainConfig c1 = tc;
  c1.stage = Stage::kHparams;
  const StageResult stage1 = TrainStage(s.train, s.val, defaults, mean, c1);
  const double der_stage1 = EvaluateSet(stage1.best.params, mean, s.test, tc.eval, true).der;

  TrainConfig c2 = tc;
  c2.stage = Stage::kPldaFt;
  c2.epochs = 20;
  const StageResult stage2 = TrainStage(s.train, s.val, stage1.best.params, mean, c2);
  const double der_two_stage = EvaluateSet(stage2.best.params, mean, s.test, tc.eval, true).der;

  // Domain mismatch analog: the transform is multiplied by I + 0.5 N / sqrt(D).
  const Index D = s.space.transform.cols();
  Rng q(Rng::Derive(s.synth.seed, 4242));
  Matrix mix = Matrix::Identity(D, D);
  for (Index i = 0; i < mix.size(); ++i) mix.data()[i] += 0.5 * q.Normal() / std::sqrt(double(D));
  ParamSet perturbed = stage1.best.params;
  perturbed[Slot::kTransform] = s.space.transform * mix;
  const double der_oracle = der_stage1;
  const double der_perturbed = EvaluateSet(perturbed, mean, s.test, tc.eval, true).der;
  const StageResult recovered = TrainStage(s.train, s.val, perturbed, mean, c2);
  const double der_recovered = EvaluateSet(recovered.best.params, mean, s.test, tc.eval, true).der;

  const double reduction = (der_default - der_two_stage) / der_default;
  const double gap = der_perturbed - der_oracle;
  const double recovery = gap > 0.0 ? (der_perturbed - der_recovered) / gap : 0.0;

  TrainConfig cb = c1;
  cb.loss_kind = LossKind::kBce;
  const StageResult bce = TrainStage(s.train, s.val, defaults, mean, cb);
  const double secs = Seconds(t0);

  const auto epoch_der = [](const StageResult &r) {
    return std::vector<double>(r.last.val_der_history.begin() + 1, r.last.val_der_history.end());
  };
  const double rho_ede = Spearman(stage1.last.loss_history, epoch_der(stage1));
  const double rho_bce = Spearman(bce.last.loss_history, epoch_der(bce));

  EndToEnd out;
  out.improvement = {
      reduction >= 0.2 && recovery >= 0.5 && secs < 900.0,
      Format("test DER %.2f%% -> %.2f%% after two-stage (%.1f%% relative, stage 1 alone %.2f%%); "
             "perturbed %.2f%% -> %.2f%% vs oracle %.2f%% (%.1f%% of gap recovered); %.0f s",
             100 * der_default, 100 * der_two_stage, 100 * reduction, 100 * der_stage1,
             100 * der_perturbed, 100 * der_recovered, 100 * der_oracle, 100 * recovery, secs)};
  out.correlation = {rho_ede >= 0.6 && rho_ede > rho_bce,
                     Format("Spearman(train loss, val DER) over %zu epochs: EDE %.3f, BCE %.3f",
                            stage1.last.loss_history.size(), rho_ede, rho_bce)};
  return out;
}

Outcome ScorerFixtures() {
  int bad = 0, count = 0;
  double worst = 0.0;
  for (const testing::DerFixture &f : testing::DerFixtures()) {
    const SegmentSet ref = ParseRttm(f.ref_rttm).at(0), hyp = ParseRttm(f.hyp_rttm).at(0);
    const DerBreakdown d = ComputeDer(ref, hyp, f.collar, f.uem.empty() ? nullptr : &f.uem);
    const double err = std::max({std::abs(d.miss - f.miss), std::abs(d.false_alarm - f.false_alarm),
                                 std::abs(d.confusion - f.confusion),
                                 std::abs(d.total_ref_speech - f.total)});
    worst = std::max(worst, err);
    if (err > 1e-9) ++bad;
    ++count;
  }
  return {bad == 0 && count == 10,
          Format("%d fixtures, %d mismatched, worst component error %.1e s", count, bad, worst)};
}

Outcome GevpAndFormats() {
  Rng rng(10);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Index d = rng.UniformInt(2, 16);
    PldaModel m;
    m.mean = testing::RandomMatrix(rng, d, 1);
    m.within_cov = testing::RandomSpd(rng, d);
    m.between_cov = testing::RandomSpd(rng, d, 0.1);
    const TransformedSpace sp = SolveGevp(m, d);
    const Matrix lhs = m.between_cov * sp.transform;
    const Matrix rhs = m.within_cov * sp.transform * sp.phi.asDiagonal();
    worst = std::max(worst, (lhs - rhs).norm() / lhs.norm());
  }

  const fs::path dir = fs::temp_directory_path() / "dvbx_acceptance";
  fs::create_directories(dir);
  std::vector<std::string> broken;
  const auto same_file = [&](const char *name, const fs::path &a, const fs::path &b) {
    if (io::ReadFileBytes(a) != io::ReadFileBytes(b)) broken.push_back(name);
  };

  const testing::GradientProblem g = testing::MakeGradientProblem(11, 30, 3, 6, 4);
  WriteXVectors(dir / "a.xvec", g.seq);
  WriteXVectors(dir / "b.xvec", ReadXVectors(dir / "a.xvec"));
  same_file("xvec", dir / "a.xvec", dir / "b.xvec");

  PldaModel m;
  m.mean = g.mean;
  m.within_cov = testing::RandomSpd(rng, 6);
  m.between_cov = testing::RandomSpd(rng, 6);
  WritePlda(dir / "a.plda", m, SolveGevp(m, 4));
  const auto [m2, sp2] = ReadPlda(dir / "a.plda");
  WritePlda(dir / "b.plda", m2, sp2);
  same_file("plda", dir / "a.plda", dir / "b.plda");

  Checkpoint c;
  c.params = g.params;
  c.adam = MakeAdamState(g.params);
  GradientSet grads = ZeroLike(g.params);
  for (Slot s : kAllSlots) grads[s] = testing::RandomMatrix(rng, grads[s].rows(), grads[s].cols());
  AdamStep(c.params, grads, c.adam, TrainConfig{});
  c.epoch = 3;
  c.val_der = 0.125;
  c.loss_history = {0.3, 0.2, 0.1};
  c.val_der_history = {0.5, 0.25, 0.125, 0.2};
  WriteCheckpoint(dir / "a.ckpt", c);
  WriteCheckpoint(dir / "b.ckpt", ReadCheckpoint(dir / "a.ckpt"));
  same_file("checkpoint", dir / "a.ckpt", dir / "b.ckpt");

  const std::string rttm =
      "SPEAKER rec1 1 0.000 1.250 <NA> <NA> spk0 <NA> <NA>\n"
      "SPEAKER rec1 1 1.250 2.375 <NA> <NA> spk1 <NA> <NA>\n"
      "SPEAKER rec2 1 3.141 0.500 <NA> <NA> A <NA> <NA>\n";
  std::string emitted;
  for (const SegmentSet &set : ParseRttm(rttm)) emitted += EmitRttm(set);
  if (emitted != rttm) broken.push_back("rttm");
  fs::remove_all(dir);

  std::string names;
  for (const auto &n : broken) names += " " + n;
  return {worst <= 1e-8 && broken.empty(),
          Format("GEVP worst relative residual %.1e over 50 pairs; round trips broken:%s", worst,
                 broken.empty() ? " none" : names.c_str())};
}

}  // namespace
}  // namespace dvbx

int main() {
  using dvbx::Outcome;
  std::vector<std::pair<int, std::function<Outcome()>>> plain = {
      {1, dvbx::GradientCorrectness}, {2, dvbx::HmmGmmEquivalence}, {3, dvbx::VbMonotonicity},
      {4, dvbx::PitExactness},        {5, dvbx::LossAveraging},     {6, dvbx::CalibrationSaturation},
  };
  bool all = true;
  const auto report = [&](int id, const Outcome &o) {
    std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  };
  const auto guarded = [&](int id, const std::function<Outcome()> &fn) {
    try {
      report(id, fn());
    } catch (const std::exception &e) {
      report(id, {false, std::string("exception: ") + e.what()});
    }
  };
  for (const auto &[id, fn] : plain) guarded(id, fn);
  try {
    const dvbx::EndToEnd e = dvbx::EndToEndTraining();
    report(7, e.improvement);
    report(8, e.correlation);
  } catch (const std::exception &e) {
    report(7, {false, std::string("exception: ") + e.what()});
    report(8, {false, "not run"});
  }
  guarded(9, dvbx::ScorerFixtures);
  guarded(10, dvbx::GevpAndFormats);
  return all ? 0 : 1;
}
