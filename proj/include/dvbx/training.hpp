// dvbx/training.hpp

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

// Discriminative training: Adam with per-group learning rates, batches of
// whole conversations, validation-DER model selection and the two-stage
// (hyperparameters, then PLDA) schedule.

#ifndef DVBX_TRAINING_HPP_
#define DVBX_TRAINING_HPP_

#include <algorithm>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dvbx/binary_io.hpp"
#include "dvbx/dataio.hpp"
#include "dvbx/diffengine.hpp"
#include "dvbx/inference.hpp"
#include "dvbx/init.hpp"
#include "dvbx/params.hpp"
#include "dvbx/rng.hpp"
#include "dvbx/scoring.hpp"

namespace dvbx {

enum class LossKind { kBce, kBceCalib, kEde };
enum class Stage { kHparams, kPldaFt, kJoint };

inline LossKind ParseLossKind(const std::string &s) {
  if (s == "bce") return LossKind::kBce;
  if (s == "bce-calib") return LossKind::kBceCalib;
  if (s == "ede") return LossKind::kEde;
  throw ConfigError("unknown loss '" + s + "' (expected bce, bce-calib or ede)");
}

inline Stage ParseStage(const std::string &s) {
  if (s == "hparams") return Stage::kHparams;
  if (s == "plda") return Stage::kPldaFt;
  if (s == "joint") return Stage::kJoint;
  throw ConfigError("unknown stage '" + s + "' (expected hparams, plda or joint)");
}

/// Evaluation protocol shared by validation and the infer command.
struct EvalConfig {
  int max_iters = 40;
  double elbo_tol = 1e-4;
  bool use_elbo_stop = true;
  double prune_threshold = 1e-3;
  double collar = 0.0;
  AhcOptions ahc;
};

struct TrainConfig {
  int batch_size = 8;
  int epochs = 500;
  int unroll_iters = 10;
  LossKind loss_kind = LossKind::kEde;
  Stage stage = Stage::kHparams;
  double lr_fa = 5e-4;
  double lr_hparams = 1e-2;
  double lr_plda = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  bool forced_gmm = true;
  int threads = 1;
  EvalConfig eval;

  void Validate() const {
    if (!(lr_fa > 0.0) || !(lr_hparams > 0.0) || !(lr_plda > 0.0))
      throw ConfigError("learning rates must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (unroll_iters < 1) throw ConfigError("unroll_iters must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }

  PipelineConfig pipeline() const {
    PipelineConfig p;
    p.unroll_iters = unroll_iters;
    p.frame_loss = loss_kind == LossKind::kEde ? FrameLoss::kEde : FrameLoss::kBce;
    p.calibrate = loss_kind == LossKind::kBceCalib;
    p.forced_gmm = forced_gmm;
    return p;
  }
};

/// One conversation prepared for training or evaluation: the x-vectors are
/// restricted to frames with reference speech (oracle VAD) and gt matches
/// them row for row.
struct Utterance {
  XVectorSequence seq;
  GroundTruth gt;
  SegmentSet ref;
  std::vector<Interval> uem;  // scoring region
};

/// uem empty -> reference speech regions are scored.
inline Utterance PrepareUtterance(const XVectorSequence &full, const SegmentSet &ref,
                                  std::vector<Interval> uem = {}) {
  LabeledFrames lf = BuildGroundTruth(ref, full);
  if (lf.kept.empty())
    throw DegenerateInputError(full.utterance_id + ": no frame overlaps reference speech");
  Utterance u;
  u.seq = full.Select(lf.kept);
  u.gt = std::move(lf.gt);
  u.ref = ref;
  u.uem = uem.empty() ? SpeechRegions(ref) : NormalizeIntervals(std::move(uem));
  return u;
}

inline Utterance PrepareUtterance(const Conversation &c) { return PrepareUtterance(c.seq, c.ref); }

/// The reference of one recording from RTTM text holding one or more
/// recordings.
inline SegmentSet FindRecording(const std::string &rttm_text, const std::string &id,
                                const std::string &what) {
  for (auto &set : ParseRttm(rttm_text))
    if (set.recording_id == id) return set;
  throw FormatError(what + ": no RTTM records for " + id);
}

inline Utterance LoadUtterance(const ManifestRecord &rec) {
  XVectorSequence seq = ReadXVectors(rec.xvector_path);
  if (seq.utterance_id != rec.utterance_id)
    throw FormatError(rec.xvector_path.string() + ": utterance id " + seq.utterance_id +
                      " does not match manifest id " + rec.utterance_id);
  SegmentSet ref = FindRecording(io::ReadFileText(rec.rttm_path), rec.utterance_id,
                                 rec.rttm_path.string());
  std::vector<Interval> uem;
  if (!rec.uem_path.empty()) {
    const auto all = ParseUem(io::ReadFileText(rec.uem_path));
    const auto it = all.find(rec.utterance_id);
    if (it == all.end())
      throw FormatError(rec.uem_path.string() + ": no UEM intervals for " + rec.utterance_id);
    uem = it->second;
  }
  return PrepareUtterance(seq, ref, std::move(uem));
}

inline std::vector<Utterance> LoadUtterances(const DatasetManifest &m) {
  std::vector<Utterance> out;
  out.reserve(m.records.size());
  for (const auto &r : m.records) out.push_back(LoadUtterance(r));
  return out;
}

// ---------------------------------------------------------------------------
// Parallel helper

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled exactly once; callers store results by index.
inline void ParallelFor(std::size_t n, int threads, const std::function<void(std::size_t)> &fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto &th : pool) th.join();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  DerBreakdown der;
  SegmentSet hypothesis;
  int iterations = 0;
  int speakers = 0;
};

inline HyperParams EvalHyperParams(const NaturalParams &n, const EvalConfig &ec, bool forced_gmm) {
  HyperParams hp;
  hp.fa = n.fa;
  hp.fb = n.fb;
  hp.loop_prob = forced_gmm ? 0.0 : n.loop_prob;
  hp.smoothing = n.smoothing;
  hp.calib = n.calib;
  hp.max_iters = ec.max_iters;
  hp.elbo_tol = ec.elbo_tol;
  hp.use_elbo_stop = ec.use_elbo_stop;
  return hp;
}

/// AHC init -> smoothing -> VB (evaluation protocol) -> pruning -> segments.
/// When `init` is given it replaces AHC.
inline EvalResult DiarizeUtterance(const ParamSet &params, const Vector &mean,
                                   const XVectorSequence &seq, const EvalConfig &ec,
                                   bool forced_gmm, const HardLabels *init = nullptr) {
  const NaturalParams n = ReparamToNatural(params);
  const TransformedSequence x = TransformSequence(seq, mean, n.transform);
  const HardLabels labels = init != nullptr ? *init : AhcCluster(x.data, ec.ahc);
  const HyperParams hp = EvalHyperParams(n, ec, forced_gmm);
  const InferenceTrace trace = RunInference(x.data, SmoothLabels(labels, n.smoothing), n.phi, hp);
  const PrunedResult pruned =
      PruneSpeakers(trace.per_iter_gamma.back(), trace.final_priors.pi, ec.prune_threshold);
  EvalResult r;
  r.hypothesis = ResponsibilitiesToSegments(pruned.gamma, seq);
  r.iterations = trace.iterations_run;
  r.speakers = static_cast<int>(pruned.kept.size());
  return r;
}

inline EvalResult EvaluateUtterance(const ParamSet &params, const Vector &mean,
                                    const Utterance &u, const EvalConfig &ec, bool forced_gmm) {
  EvalResult r = DiarizeUtterance(params, mean, u.seq, ec, forced_gmm);
  r.der = ComputeDer(u.ref, r.hypothesis, ec.collar, &u.uem);
  return r;
}

/// Corpus DER: error times summed over utterances over total reference time.
inline DerBreakdown EvaluateSet(const ParamSet &params, const Vector &mean,
                                const std::vector<Utterance> &set, const EvalConfig &ec,
                                bool forced_gmm, int threads = 1) {
  std::vector<DerBreakdown> per(set.size());
  ParallelFor(set.size(), threads, [&](std::size_t i) {
    per[i] = EvaluateUtterance(params, mean, set[i], ec, forced_gmm).der;
  });
  DerBreakdown total;
  for (const auto &d : per) total += d;
  return total;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  SlotArray m;
  SlotArray v;
  std::uint64_t step = 0;
};

inline AdamState MakeAdamState(const ParamSet &params) {
  return {ZeroLike(params), ZeroLike(params), 0};
}

/// Learning rate of each slot's group: fa alone, the other hyperparameters,
/// and the PLDA matrices.
inline double SlotLearningRate(Slot s, const TrainConfig &cfg) {
  if (s == Slot::kFa) return cfg.lr_fa;
  if (IsPldaSlot(s)) return cfg.lr_plda;
  return cfg.lr_hparams;
}

/// One bias-corrected Adam update of every trainable slot. Frozen slots and
/// their moments are left untouched.
inline void AdamStep(ParamSet &params, const GradientSet &grads, AdamState &state,
                     const TrainConfig &cfg) {
  for (Slot s : kAllSlots)
    if (params.is_trainable(s) && !grads[s].allFinite())
      throw NumericError("adam: non-finite gradient in slot " + std::string(SlotName(s)));
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (Slot s : kAllSlots) {
    if (!params.is_trainable(s)) continue;
    const double lr = SlotLearningRate(s, cfg);
    Matrix &m = state.m[s];
    Matrix &v = state.v[s];
    const Matrix &g = grads[s];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    params[s].array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
  }
}

/// fa and fb are optimized in their natural form, so a step can leave the
/// valid region; they are projected back onto [kMinScale, inf).
inline constexpr double kMinScale = 1e-6;

inline void ProjectToValid(ParamSet &params) {
  for (Slot s : {Slot::kFa, Slot::kFb})
    if (params.is_trainable(s)) params.scalar(s) = std::max(params.scalar(s), kMinScale);
}

// ---------------------------------------------------------------------------
// Stages

/// Slots trained by a stage.
inline void SetStageTrainable(ParamSet &p, Stage stage, const TrainConfig &cfg) {
  for (Slot s : kAllSlots) p.set_trainable(s, false);
  const bool hparams = stage != Stage::kPldaFt;
  const bool plda = stage != Stage::kHparams;
  if (hparams) {
    p.set_trainable(Slot::kFa, true);
    p.set_trainable(Slot::kFb, true);
    p.set_trainable(Slot::kLogSmoothing, true);
    p.set_trainable(Slot::kLogCalib, cfg.loss_kind == LossKind::kBceCalib);
    p.set_trainable(Slot::kLogitLoopProb, !cfg.forced_gmm);
  }
  if (plda) {
    p.set_trainable(Slot::kTransform, true);
    p.set_trainable(Slot::kLogPhi, true);
  }
}

struct EpochRecord {
  int epoch = 0;          // 0 = before any update
  double train_loss = 0;  // mean per-conversation loss seen during the epoch
  double val_der = 0;
  // scalar hyperparameters after the epoch
  double fa = 0, fb = 0, loop_prob = 0, smoothing = 0, calib = 0;
};

inline EpochRecord MakeEpochRecord(int epoch, double loss, double der, const ParamSet &p) {
  const NaturalParams n = ReparamToNatural(p);
  return {epoch, loss, der, n.fa, n.fb, n.loop_prob, n.smoothing, n.calib};
}

struct Checkpoint {
  ParamSet params;
  AdamState adam;
  int epoch = 0;
  double val_der = 0.0;
  std::vector<double> loss_history;     // per epoch, starting at epoch 1
  std::vector<double> val_der_history;  // per epoch, starting at epoch 0
};

struct StageResult {
  Checkpoint best;
  Checkpoint last;  // state after the final epoch, for resuming
  std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord &)>;

/// Mean gradient and loss of a batch; per-conversation terms are summed in
/// batch order.
inline std::pair<double, GradientSet> BatchGradient(const ParamSet &params, const Vector &mean,
                                                    const std::vector<const Utterance *> &batch,
                                                    const std::vector<const HardLabels *> &inits,
                                                    const PipelineConfig &pc, int threads) {
  std::vector<BackwardResult> results(batch.size());
  ParallelFor(batch.size(), threads, [&](std::size_t i) {
    results[i] = Backward(params, batch[i]->seq, mean, *inits[i], batch[i]->gt, pc);
  });
  GradientSet sum = ZeroLike(params);
  double loss = 0.0;
  for (const auto &r : results) {
    loss += r.loss;
    for (std::size_t k = 0; k < sum.slots.size(); ++k) sum.slots[k] += r.grads.slots[k];
  }
  const double n = static_cast<double>(batch.size());
  for (auto &g : sum.slots) g /= n;
  return {loss / n, std::move(sum)};
}

inline std::vector<HardLabels> InitialLabels(const ParamSet &params, const Vector &mean,
                                             const std::vector<Utterance> &set,
                                             const AhcOptions &ahc, int threads) {
  std::vector<HardLabels> out(set.size());
  ParallelFor(set.size(), threads, [&](std::size_t i) {
    out[i] = AhcCluster(TransformSequence(set[i].seq, mean, params[Slot::kTransform]).data, ahc);
  });
  return out;
}

/// Trains the stage's slots from `start`. Validation DER is measured before
/// the first update (epoch 0) and after every epoch; the returned best
/// checkpoint has the lowest validation DER (earliest on ties). When
/// `resume` is given training continues from its last state.
inline StageResult TrainStage(const std::vector<Utterance> &train, const std::vector<Utterance> &val,
                              const ParamSet &start, const Vector &mean, const TrainConfig &cfg,
                              const EpochCallback &on_epoch = {},
                              const Checkpoint *resume = nullptr) {
  cfg.Validate();
  if (train.empty() || val.empty())
    throw ConfigError("train_stage: training and validation sets must be non-empty");
  const PipelineConfig pc = cfg.pipeline();

  StageResult res;
  Checkpoint cur;
  cur.params = start;
  SetStageTrainable(cur.params, cfg.stage, cfg);
  cur.adam = MakeAdamState(cur.params);
  if (resume != nullptr) {
    cur = *resume;
    SetStageTrainable(cur.params, cfg.stage, cfg);
  } else {
    cur.val_der = EvaluateSet(cur.params, mean, val, cfg.eval, cfg.forced_gmm, cfg.threads).der;
    cur.val_der_history.push_back(cur.val_der);
    res.log.push_back(MakeEpochRecord(0, 0.0, cur.val_der, cur.params));
    if (on_epoch) on_epoch(res.log.back());
  }
  // After a resume only states from the resume point on are candidates.
  res.best = cur;

  const bool transform_moves = cur.params.is_trainable(Slot::kTransform);
  std::vector<HardLabels> inits;
  for (int epoch = cur.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    if (inits.empty() || transform_moves)
      inits = InitialLabels(cur.params, mean, train, cfg.eval.ahc, cfg.threads);
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(Rng::Derive(cfg.seed, static_cast<std::uint64_t>(epoch)));
    rng.Shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Utterance *> batch;
      std::vector<const HardLabels *> binit;
      for (std::size_t k = b; k < end; ++k) {
        batch.push_back(&train[order[k]]);
        binit.push_back(&inits[order[k]]);
      }
      auto [loss, grads] = BatchGradient(cur.params, mean, batch, binit, pc, cfg.threads);
      loss_sum += loss * static_cast<double>(batch.size());
      AdamStep(cur.params, grads, cur.adam, cfg);
      ProjectToValid(cur.params);
    }
    cur.epoch = epoch;
    cur.loss_history.push_back(loss_sum / static_cast<double>(train.size()));
    cur.val_der = EvaluateSet(cur.params, mean, val, cfg.eval, cfg.forced_gmm, cfg.threads).der;
    cur.val_der_history.push_back(cur.val_der);
    res.log.push_back(MakeEpochRecord(epoch, cur.loss_history.back(), cur.val_der, cur.params));
    if (on_epoch) on_epoch(res.log.back());
    if (cur.val_der < res.best.val_der) res.best = cur;
  }
  // Histories in the best checkpoint cover the whole run.
  res.best.loss_history = cur.loss_history;
  res.best.val_der_history = cur.val_der_history;
  res.last = cur;
  return res;
}

struct TwoStageResult {
  StageResult hparams;
  StageResult plda;
};

/// Stage 1 trains the hyperparameters; stage 2 starts from the stage-1 best
/// checkpoint and trains only the PLDA slots.
inline TwoStageResult RunTwoStage(const std::vector<Utterance> &train,
                                  const std::vector<Utterance> &val, const ParamSet &init,
                                  const Vector &mean, const TrainConfig &cfg,
                                  const EpochCallback &on_epoch = {}) {
  TwoStageResult out;
  TrainConfig c1 = cfg;
  c1.stage = Stage::kHparams;
  out.hparams = TrainStage(train, val, init, mean, c1, on_epoch);
  TrainConfig c2 = cfg;
  c2.stage = Stage::kPldaFt;
  out.plda = TrainStage(train, val, out.hparams.best.params, mean, c2, on_epoch);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint container (little-endian):
//   "DVBXCKPT" u32 version=1 u32 0
//   u32 slot count (7), then per slot: u64 rows, u64 cols, u32 trainable,
//       f64 value[rows*cols], f64 adam_m[rows*cols], f64 adam_v[rows*cols]
//   u64 adam step, u64 epoch, f64 val_der
//   u64 n, f64 loss_history[n]; u64 n, f64 val_der_history[n]

inline constexpr char kCheckpointMagic[] = "DVBXCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<char> EncodeCheckpoint(const Checkpoint &c) {
  io::ByteWriter w;
  w.Header(kCheckpointMagic, kCheckpointVersion);
  w.U32(kNumSlots);
  for (Slot s : kAllSlots) {
    const Matrix &v = c.params[s];
    w.U64(static_cast<std::uint64_t>(v.rows()));
    w.U64(static_cast<std::uint64_t>(v.cols()));
    w.U32(c.params.is_trainable(s) ? 1u : 0u);
    w.MatrixF64(v);
    w.MatrixF64(c.adam.m[s]);
    w.MatrixF64(c.adam.v[s]);
  }
  w.U64(c.adam.step);
  w.U64(static_cast<std::uint64_t>(c.epoch));
  w.F64(c.val_der);
  for (const auto *hist : {&c.loss_history, &c.val_der_history}) {
    w.U64(hist->size());
    for (double x : *hist) w.F64(x);
  }
  return w.buffer();
}

inline Checkpoint DecodeCheckpoint(std::vector<char> bytes, const std::string &what = "checkpoint") {
  io::ByteReader r(std::move(bytes), what);
  if (r.Header(kCheckpointMagic) != kCheckpointVersion) r.Fail("unsupported version");
  if (r.U32() != kNumSlots) r.Fail("unexpected slot count");
  Checkpoint c;
  for (Slot s : kAllSlots) {
    const std::uint64_t rows = r.U64();
    const std::uint64_t cols = r.U64();
    r.NeedCount(rows, cols, 24);
    c.params.set_trainable(s, r.U32() != 0);
    const auto ri = static_cast<Index>(rows), ci = static_cast<Index>(cols);
    c.params[s] = r.MatrixF64(ri, ci);
    c.adam.m[s] = r.MatrixF64(ri, ci);
    c.adam.v[s] = r.MatrixF64(ri, ci);
  }
  c.adam.step = r.U64();
  c.epoch = static_cast<int>(r.U64());
  c.val_der = r.F64();
  for (auto *hist : {&c.loss_history, &c.val_der_history}) {
    const std::uint64_t n = r.U64();
    r.NeedCount(n, 1, 8);
    hist->resize(n);
    for (auto &x : *hist) x = r.F64();
  }
  r.ExpectEnd();
  return c;
}

inline void WriteCheckpoint(const std::filesystem::path &path, const Checkpoint &c) {
  io::WriteFileAtomic(path, EncodeCheckpoint(c));
}

inline Checkpoint ReadCheckpoint(const std::filesystem::path &path) {
  return DecodeCheckpoint(io::ReadFileBytes(path), path.string());
}

}  // namespace dvbx

#endif  // DVBX_TRAINING_HPP_
