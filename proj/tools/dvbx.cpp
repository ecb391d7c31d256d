// tools/dvbx.cpp

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

// dvbx command-line driver: synth, infer, train, score, grad-check.
//
// Every option can come from a flat key=value file (--config) or a flag;
// flags win. Keys use underscores, flags use dashes (loop_prob, --loop-prob).
//
// Exit codes: 0 ok, 1 usage/config, 2 data/format, 3 numeric.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dvbx/config.hpp"
#include "dvbx/dataio.hpp"
#include "dvbx/diffengine.hpp"
#include "dvbx/plda.hpp"
#include "dvbx/training.hpp"

namespace fs = std::filesystem;
using namespace dvbx;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Options of one subcommand: defaults, then the config file, then flags.
class Settings {
 public:
  void Define(const std::string &key, const std::string &def, const std::string &help) {
    defaults_[key] = def;
    help_[key] = help;
    order_.push_back(key);
  }

  void Bind(CLI::App *app) {
    app->add_option("--config", config_path_, "key=value configuration file");
    for (const auto &key : order_) {
      std::string flag = "--" + key;
      for (auto &c : flag)
        if (c == '_') c = '-';
      opts_[key] = app->add_option(flag, flags_[key], help_[key] + " [" + defaults_[key] + "]");
    }
  }

  void Resolve() {
    values_ = defaults_;
    if (!config_path_.empty()) {
      for (const auto &[k, v] : ParseKeyValueConfig(io::ReadFileText(config_path_))) {
        if (!defaults_.count(k)) throw ConfigError("unknown config key '" + k + "'");
        values_[k] = v;
      }
    }
    for (const auto &[k, opt] : opts_)
      if (opt->count() > 0) values_[k] = flags_[k];
  }

  const std::string &Str(const std::string &k) const { return values_.at(k); }
  double Num(const std::string &k) const { return ConfigDouble(k, Str(k)); }
  int Int(const std::string &k) const { return static_cast<int>(ConfigInt(k, Str(k))); }
  std::uint64_t U64(const std::string &k) const { return ConfigU64(k, Str(k)); }
  bool Bool(const std::string &k) const { return ConfigBool(k, Str(k)); }

  std::string Require(const std::string &k) const {
    if (Str(k).empty()) throw ConfigError("missing required option " + k);
    return Str(k);
  }

  std::string Dump() const {
    std::string out;
    for (const auto &k : order_) out += k + "=" + values_.at(k) + "\n";
    return out;
  }

 private:
  std::string config_path_;
  std::vector<std::string> order_;
  std::map<std::string, std::string> defaults_, help_, flags_, values_;
  std::map<std::string, CLI::Option *> opts_;
};

void DefineCommon(Settings &s) {
  s.Define("seed", "1", "random seed");
  s.Define("threads", "1", "worker threads");
  s.Define("out_dir", "", "output directory");
}

void DefineHyperParams(Settings &s) {
  s.Define("fa", "1", "acoustic scaling F_A");
  s.Define("fb", "1", "speaker regularization F_B");
  s.Define("loop_prob", "0", "loop probability P_l (0 = GMM)");
  s.Define("smoothing", "7", "label smoothing temperature");
  s.Define("calib", "1", "output calibration temperature");
}

void DefineEval(Settings &s) {
  s.Define("max_iters", "40", "VB iterations at evaluation");
  s.Define("elbo_tol", "1e-4", "ELBO stopping tolerance");
  s.Define("use_elbo_stop", "true", "stop when the ELBO gain is below elbo_tol");
  s.Define("prune_threshold", "1e-3", "relative prior below which speakers are dropped");
  s.Define("ahc_threshold", "0", "AHC merge threshold on cosine similarity");
  s.Define("max_speakers", "10", "AHC cluster cap");
  s.Define("collar", "0", "no-score collar in seconds");
}

HyperParams ReadHyperParams(const Settings &s) {
  HyperParams hp;
  hp.fa = s.Num("fa");
  hp.fb = s.Num("fb");
  hp.loop_prob = s.Num("loop_prob");
  hp.smoothing = s.Num("smoothing");
  hp.calib = s.Num("calib");
  hp.Validate();
  return hp;
}

EvalConfig ReadEval(const Settings &s) {
  EvalConfig ec;
  ec.max_iters = s.Int("max_iters");
  ec.elbo_tol = s.Num("elbo_tol");
  ec.use_elbo_stop = s.Bool("use_elbo_stop");
  ec.prune_threshold = s.Num("prune_threshold");
  ec.ahc.threshold = s.Num("ahc_threshold");
  ec.ahc.max_speakers = s.Int("max_speakers");
  ec.collar = s.Num("collar");
  if (ec.max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(ec.collar >= 0.0)) throw ConfigError("collar must be >= 0");
  return ec;
}

fs::path OutDir(const Settings &s) {
  const fs::path dir = s.Require("out_dir");
  fs::create_directories(dir);
  return dir;
}

void LogConfig(const std::string &cmd, const Settings &s) {
  const std::string dump = s.Dump();
  std::cerr << "# dvbx " << cmd << " resolved config\n" << dump;
  if (!s.Str("out_dir").empty()) {
    const fs::path dir = s.Str("out_dir");
    fs::create_directories(dir);
    io::WriteFileAtomic(dir / (cmd + ".resolved.cfg"), std::vector<char>(dump.begin(), dump.end()));
  }
}

void WriteText(const fs::path &path, const std::string &text) {
  io::WriteFileAtomic(path, std::vector<char>(text.begin(), text.end()));
}

// ---------------------------------------------------------------------------
// synth

void DefineSynth(Settings &s) {
  DefineCommon(s);
  s.Define("train_conversations", "64", "training conversations");
  s.Define("val_conversations", "32", "validation conversations");
  s.Define("test_conversations", "32", "test conversations");
  s.Define("min_speakers", "2", "fewest speakers per conversation");
  s.Define("max_speakers", "4", "most speakers per conversation");
  s.Define("dim", "16", "x-vector dimension");
  s.Define("out_dim", "16", "PLDA output dimension d'");
  s.Define("phi_max", "8", "largest speaker variance");
  s.Define("phi_decay", "0.85", "geometric decay of speaker variances");
  s.Define("min_frames", "120", "fewest frames per conversation");
  s.Define("max_frames", "240", "most frames per conversation");
  s.Define("stay_prob", "0.9", "probability of keeping the current speaker");
  s.Define("overlap_fraction", "0", "fraction of overlapped frames");
  s.Define("frame_step", "0.25", "frame step in seconds");
  s.Define("window", "1.5", "x-vector window in seconds");
  s.Define("noise_scale", "1", "within-speaker noise scale");
  s.Define("noise_correlation", "0", "AR(1) coefficient of frame noise");
  s.Define("raw_space", "true", "emit through a random invertible map and shift");
  s.Define("plda_speakers", "500", "speakers in the PLDA training set");
  s.Define("plda_per_speaker", "20", "vectors per PLDA training speaker");
}

SynthConfig ReadSynth(const Settings &s) {
  SynthConfig c;
  c.min_speakers = s.Int("min_speakers");
  c.max_speakers = s.Int("max_speakers");
  c.dim = s.Int("dim");
  c.phi_max = s.Num("phi_max");
  c.phi_decay = s.Num("phi_decay");
  c.min_frames = s.Int("min_frames");
  c.max_frames = s.Int("max_frames");
  c.stay_prob = s.Num("stay_prob");
  c.overlap_fraction = s.Num("overlap_fraction");
  c.frame_step = s.Num("frame_step");
  c.window = s.Num("window");
  c.noise_scale = s.Num("noise_scale");
  c.noise_correlation = s.Num("noise_correlation");
  c.raw_space = s.Bool("raw_space");
  c.seed = s.U64("seed");
  c.Validate();
  return c;
}

int RunSynth(const Settings &s) {
  const SynthConfig sc = ReadSynth(s);
  const fs::path out = OutDir(s);
  const SynthWorld world = MakeSynthWorld(sc);
  const struct {
    const char *split;
    const char *key;
  } splits[] = {{"train", "train_conversations"},
                {"val", "val_conversations"},
                {"test", "test_conversations"}};
  std::uint64_t offset = 0;
  for (const auto &sp : splits) {
    const int n = s.Int(sp.key);
    if (n < 0) throw ConfigError(std::string(sp.key) + " must be >= 0");
    const fs::path dir = out / sp.split;
    fs::create_directories(dir);
    DatasetManifest m;
    m.split = sp.split;
    const auto corpus = GenerateCorpus(sc, world, std::string(sp.split) + "_", n, offset);
    offset += 1u << 20;
    for (const auto &c : corpus) {
      const std::string id = c.seq.utterance_id;
      const fs::path rel = fs::path(sp.split) / id;
      WriteXVectors(out / (rel.string() + ".xvec"), c.seq);
      WriteText(out / (rel.string() + ".rttm"), EmitRttm(c.ref));
      WriteText(out / (rel.string() + ".uem"), EmitUem(id, SpeechRegions(c.ref)));
      m.records.push_back({id, rel.string() + ".xvec", rel.string() + ".rttm", rel.string() + ".uem"});
    }
    WriteText(out / (std::string(sp.split) + ".tsv"), EmitManifest(m));
    std::cerr << sp.split << ": " << n << " conversations\n";
  }
  Rng rng(Rng::Derive(sc.seed, offset));
  const auto [vectors, labels] =
      GeneratePldaCorpus(sc, world, s.Int("plda_speakers"), s.Int("plda_per_speaker"), rng);
  const PldaModel model = PretrainPlda(vectors, labels);
  WritePlda(out / "plda.bin", model, SolveGevp(model, s.Int("out_dim")));
  std::cerr << "plda: " << vectors.rows() << " vectors\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// infer

void DefineInfer(Settings &s) {
  DefineCommon(s);
  DefineHyperParams(s);
  DefineEval(s);
  s.Define("plda", "", "PLDA file");
  s.Define("checkpoint", "", "checkpoint whose parameters replace the PLDA and hyperparameters");
  s.Define("manifest", "", "dataset manifest to diarize");
  s.Define("xvec", "", "single x-vector file to diarize (instead of a manifest)");
  s.Define("init_rttm", "", "RTTM providing initial labels instead of AHC");
}

int RunInfer(const Settings &s) {
  const fs::path out = OutDir(s);
  const auto [model, space] = ReadPlda(s.Require("plda"));
  const HyperParams hp = ReadHyperParams(s);
  const EvalConfig ec = ReadEval(s);
  ParamSet params = MakeParams(space, hp);
  bool forced_gmm = hp.loop_prob == 0.0;
  if (!s.Str("checkpoint").empty()) {
    params = ReadCheckpoint(s.Str("checkpoint")).params;
    forced_gmm = true;
  }
  std::vector<XVectorSequence> seqs;
  if (!s.Str("manifest").empty()) {
    for (const auto &r : ReadManifest(s.Str("manifest")).records)
      seqs.push_back(ReadXVectors(r.xvector_path));
  } else {
    seqs.push_back(ReadXVectors(s.Require("xvec")));
  }
  std::string init_text;
  if (!s.Str("init_rttm").empty()) init_text = io::ReadFileText(s.Str("init_rttm"));

  std::vector<SegmentSet> hyps(seqs.size());
  ParallelFor(seqs.size(), s.Int("threads"), [&](std::size_t i) {
    std::optional<HardLabels> init;
    if (!init_text.empty())
      init = LabelsFromSegments(
          FindRecording(init_text, seqs[i].utterance_id, s.Str("init_rttm")), seqs[i]);
    hyps[i] = DiarizeUtterance(params, model.mean, seqs[i], ec, forced_gmm,
                               init ? &*init : nullptr)
                  .hypothesis;
  });
  std::string all;
  for (const auto &h : hyps) {
    const std::string text = EmitRttm(h);
    WriteText(out / (h.recording_id + ".rttm"), text);
    all += text;
  }
  WriteText(out / "hyp.rttm", all);
  std::cerr << "diarized " << hyps.size() << " recordings\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// train

void DefineTrain(Settings &s) {
  DefineCommon(s);
  DefineHyperParams(s);
  DefineEval(s);
  s.Define("plda", "", "PLDA file");
  s.Define("train_manifest", "", "training manifest");
  s.Define("val_manifest", "", "validation manifest");
  s.Define("stage", "two-stage", "two-stage, hparams, plda or joint");
  s.Define("loss", "ede", "ede, bce or bce-calib");
  s.Define("epochs", "500", "epochs per stage");
  s.Define("batch_size", "8", "conversations per batch");
  s.Define("unroll_iters", "10", "unrolled VB iterations");
  s.Define("lr_fa", "5e-4", "learning rate of fa");
  s.Define("lr_hparams", "1e-2", "learning rate of the other hyperparameters");
  s.Define("lr_plda", "1e-3", "learning rate of the PLDA slots");
  s.Define("beta1", "0.9", "Adam beta1");
  s.Define("beta2", "0.999", "Adam beta2");
  s.Define("adam_eps", "1e-8", "Adam epsilon");
  s.Define("forced_gmm", "true", "fix P_l at 0 during training");
  s.Define("init_checkpoint", "", "checkpoint to start from instead of the PLDA and flags");
  s.Define("resume", "", "checkpoint of an interrupted single stage to continue");
}

int RunTrain(const Settings &s) {
  const fs::path out = OutDir(s);
  const auto [model, space] = ReadPlda(s.Require("plda"));
  TrainConfig tc;
  tc.batch_size = s.Int("batch_size");
  tc.epochs = s.Int("epochs");
  tc.unroll_iters = s.Int("unroll_iters");
  tc.loss_kind = ParseLossKind(s.Str("loss"));
  tc.lr_fa = s.Num("lr_fa");
  tc.lr_hparams = s.Num("lr_hparams");
  tc.lr_plda = s.Num("lr_plda");
  tc.beta1 = s.Num("beta1");
  tc.beta2 = s.Num("beta2");
  tc.adam_eps = s.Num("adam_eps");
  tc.seed = s.U64("seed");
  tc.forced_gmm = s.Bool("forced_gmm");
  tc.threads = s.Int("threads");
  tc.eval = ReadEval(s);
  tc.Validate();

  HyperParams hp = ReadHyperParams(s);
  ParamSet init = MakeParams(space, hp);
  if (!s.Str("init_checkpoint").empty()) init = ReadCheckpoint(s.Str("init_checkpoint")).params;

  const auto train = LoadUtterances(ReadManifest(s.Require("train_manifest")));
  const auto val = LoadUtterances(ReadManifest(s.Require("val_manifest")));

  std::string csv = "stage,epoch,train_loss,val_der,fa,fb,loop_prob,smoothing,calib\n";
  std::string stage_name;
  const auto on_epoch = [&](const EpochRecord &e) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  stage_name.c_str(), e.epoch, e.train_loss, e.val_der, e.fa, e.fb, e.loop_prob,
                  e.smoothing, e.calib);
    csv += buf;
    std::cerr << buf;
    WriteText(out / "train_log.csv", csv);
  };
  const auto run = [&](const std::string &name, Stage stage, const ParamSet &start,
                       const Checkpoint *resume) {
    stage_name = name;
    TrainConfig c = tc;
    c.stage = stage;
    StageResult r = TrainStage(train, val, start, model.mean, c, on_epoch, resume);
    WriteCheckpoint(out / ("best_" + name + ".ckpt"), r.best);
    WriteCheckpoint(out / ("last_" + name + ".ckpt"), r.last);
    std::cerr << name << ": best epoch " << r.best.epoch << " val DER " << r.best.val_der << "\n";
    return r;
  };

  const std::string stage = s.Str("stage");
  std::optional<Checkpoint> resume;
  if (!s.Str("resume").empty()) {
    if (stage == "two-stage") throw ConfigError("resume needs a single --stage");
    resume = ReadCheckpoint(s.Str("resume"));
  }
  const Checkpoint *rp = resume ? &*resume : nullptr;
  if (stage == "two-stage") {
    const StageResult first = run("hparams", Stage::kHparams, init, nullptr);
    run("plda", Stage::kPldaFt, first.best.params, nullptr);
  } else {
    run(stage, ParseStage(stage), init, rp);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// score

void DefineScore(Settings &s) {
  DefineCommon(s);
  s.Define("manifest", "", "manifest supplying references and UEMs");
  s.Define("ref", "", "reference RTTM (instead of a manifest)");
  s.Define("uem", "", "UEM file used with --ref");
  s.Define("hyp", "", "hypothesis RTTM");
  s.Define("collar", "0", "no-score collar in seconds");
}

int RunScore(const Settings &s) {
  const double collar = s.Num("collar");
  if (!(collar >= 0.0)) throw ConfigError("collar must be >= 0");
  std::map<std::string, SegmentSet> hyps;
  for (auto &h : ParseRttm(io::ReadFileText(s.Require("hyp")))) hyps[h.recording_id] = h;

  struct Item {
    SegmentSet ref;
    std::optional<std::vector<Interval>> uem;
  };
  std::vector<Item> items;
  if (!s.Str("manifest").empty()) {
    for (const auto &r : ReadManifest(s.Str("manifest")).records) {
      Item it{FindRecording(io::ReadFileText(r.rttm_path), r.utterance_id, r.rttm_path.string()), {}};
      if (!r.uem_path.empty()) {
        const auto u = ParseUem(io::ReadFileText(r.uem_path));
        if (u.count(r.utterance_id)) it.uem = u.at(r.utterance_id);
      }
      items.push_back(std::move(it));
    }
  } else {
    std::map<std::string, std::vector<Interval>> uems;
    if (!s.Str("uem").empty()) uems = ParseUem(io::ReadFileText(s.Str("uem")));
    for (auto &ref : ParseRttm(io::ReadFileText(s.Require("ref")))) {
      Item it{ref, {}};
      if (uems.count(ref.recording_id)) it.uem = uems.at(ref.recording_id);
      items.push_back(std::move(it));
    }
  }

  std::vector<std::pair<std::string, DerBreakdown>> rows(items.size());
  ParallelFor(items.size(), s.Int("threads"), [&](std::size_t i) {
    const auto &it = items[i];
    const auto h = hyps.find(it.ref.recording_id);
    const SegmentSet hyp = h != hyps.end() ? h->second : SegmentSet{it.ref.recording_id, {}};
    rows[i] = {it.ref.recording_id, ComputeDer(it.ref, hyp, collar, it.uem ? &*it.uem : nullptr)};
  });
  const std::string tsv = DerReportTsv(rows);
  std::cout << tsv;
  if (!s.Str("out_dir").empty()) WriteText(OutDir(s) / "der.tsv", tsv);
  return kOk;
}

// ---------------------------------------------------------------------------
// grad-check

void DefineGradCheck(Settings &s) {
  DefineCommon(s);
  s.Define("slot", "all", "slot to check, or all");
  s.Define("loss", "all", "ede, bce, bce-calib or all");
  s.Define("frames", "20", "frames T");
  s.Define("speakers", "3", "speakers S");
  s.Define("dim", "6", "x-vector dimension d");
  s.Define("out_dim", "4", "transformed dimension d'");
  s.Define("unroll_iters", "10", "unrolled VB iterations");
  s.Define("hmm", "false", "use the HMM path (also checks logit_loop_prob)");
  s.Define("rel_tol", "1e-4", "relative tolerance");
  s.Define("abs_tol", "1e-7", "absolute tolerance for near-zero gradients");
}

struct GradInstance {
  ParamSet params;
  XVectorSequence seq;
  Vector mean;
  HardLabels init;
  GroundTruth gt;
};

GradInstance MakeGradInstance(std::uint64_t seed, int T, int S, int d, int dp) {
  if (T < 1 || S < 1 || d < 1 || dp < 1 || dp > d)
    throw ConfigError("grad-check: need T, S >= 1 and 1 <= out_dim <= dim");
  Rng rng(seed);
  GradInstance g;
  NaturalParams n;
  n.fa = rng.Uniform(0.3, 1.2);
  n.fb = rng.Uniform(0.5, 3.0);
  n.loop_prob = rng.Uniform(0.5, 0.95);
  n.smoothing = rng.Uniform(1.0, 4.0);
  n.calib = rng.Uniform(0.5, 2.0);
  n.transform.resize(d, dp);
  for (Index i = 0; i < n.transform.size(); ++i) n.transform.data()[i] = 0.6 * rng.Normal();
  n.phi.resize(dp);
  for (Index i = 0; i < dp; ++i) n.phi(i) = rng.Uniform(0.5, 4.0);
  g.params = NaturalToReparam(n);
  for (Slot sl : kAllSlots) g.params.set_trainable(sl, true);

  g.mean.resize(d);
  for (Index i = 0; i < d; ++i) g.mean(i) = rng.Normal();
  Matrix centers(S, d);
  for (Index i = 0; i < centers.size(); ++i) centers.data()[i] = 1.5 * rng.Normal();
  g.seq.utterance_id = "gradcheck";
  g.seq.raw.resize(T, d);
  std::vector<int> spk(static_cast<std::size_t>(T)), labels(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    spk[static_cast<std::size_t>(t)] = rng.UniformInt(0, S - 1);
    for (Index i = 0; i < d; ++i)
      g.seq.raw(t, i) = g.mean(i) + centers(spk[static_cast<std::size_t>(t)], i) + rng.Normal();
    g.seq.segment_starts.push_back(0.25 * t);
    g.seq.segment_durations.push_back(1.5);
    labels[static_cast<std::size_t>(t)] = rng.Bernoulli(0.7) ? spk[static_cast<std::size_t>(t)]
                                                              : rng.UniformInt(0, S - 1);
  }
  g.init = RenumberByFirstOccurrence(labels);
  g.gt.labels = Matrix::Zero(T, S);
  for (int t = 0; t < T; ++t) g.gt.labels(t, spk[static_cast<std::size_t>(t)]) = 1.0;
  for (int sp = 0; sp < S; ++sp) g.gt.speaker_names.push_back("s" + std::to_string(sp));
  return g;
}

int RunGradCheck(const Settings &s) {
  std::vector<Slot> slots;
  if (s.Str("slot") == "all") {
    slots.assign(kAllSlots.begin(), kAllSlots.end());
  } else {
    const auto sl = SlotFromName(s.Str("slot"));
    if (!sl) throw ConfigError("unknown slot '" + s.Str("slot") + "'");
    slots.push_back(*sl);
  }
  std::vector<std::string> losses = {"ede", "bce", "bce-calib"};
  if (s.Str("loss") != "all") {
    ParseLossKind(s.Str("loss"));
    losses = {s.Str("loss")};
  }
  GradCheckTolerance tol;
  tol.rel = s.Num("rel_tol");
  tol.abs = s.Num("abs_tol");
  const bool hmm = s.Bool("hmm");
  GradInstance g = MakeGradInstance(s.U64("seed"), s.Int("frames"), s.Int("speakers"),
                                    s.Int("dim"), s.Int("out_dim"));

  std::printf("%-9s %-16s %-7s %15s %15s %11s %5s\n", "loss", "slot", "index", "analytic",
              "numeric", "rel_err", "ok");
  bool all_pass = true;
  for (const auto &name : losses) {
    TrainConfig tc;
    tc.loss_kind = ParseLossKind(name);
    tc.unroll_iters = s.Int("unroll_iters");
    tc.forced_gmm = !hmm;
    const PipelineConfig pc = tc.pipeline();
    ParamSet p = g.params;
    if (!pc.calibrate) p.set_trainable(Slot::kLogCalib, false);
    if (!hmm) p.set_trainable(Slot::kLogitLoopProb, false);
    for (const auto &r : CheckGradients(p, g.seq, g.mean, g.init, g.gt, pc, slots, tol)) {
      char idx[32];
      std::snprintf(idx, sizeof(idx), "%lld,%lld", static_cast<long long>(r.row),
                    static_cast<long long>(r.col));
      std::printf("%-9s %-16s %-7s %15.8e %15.8e %11.3e %5s\n", name.c_str(),
                  std::string(SlotName(r.slot)).c_str(), idx, r.analytic, r.numeric, r.rel_err,
                  r.pass ? "yes" : "NO");
      all_pass = all_pass && r.pass;
    }
  }
  std::printf("%s\n", all_pass ? "all gradients within tolerance" : "gradient check FAILED");
  return all_pass ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"dvbx: discriminatively trained VBx speaker diarization"};
  app.require_subcommand(1);

  struct Command {
    const char *name;
    const char *help;
    void (*define)(Settings &);
    int (*run)(const Settings &);
  };
  const Command commands[] = {
      {"synth", "generate a synthetic corpus and PLDA", DefineSynth, RunSynth},
      {"infer", "diarize x-vector sequences to RTTM", DefineInfer, RunInfer},
      {"train", "train hyperparameters and PLDA", DefineTrain, RunTrain},
      {"score", "score hypothesis RTTM against references", DefineScore, RunScore},
      {"grad-check", "compare analytic and finite-difference gradients", DefineGradCheck,
       RunGradCheck},
  };
  std::vector<std::unique_ptr<Settings>> settings;
  std::vector<CLI::App *> subs;
  for (const auto &c : commands) {
    settings.push_back(std::make_unique<Settings>());
    c.define(*settings.back());
    subs.push_back(app.add_subcommand(c.name, c.help));
    settings.back()->Bind(subs.back());
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      settings[i]->Resolve();
      const int threads = settings[i]->Int("threads");
      if (threads < 1) throw ConfigError("threads must be >= 1");
      LogConfig(commands[i].name, *settings[i]);
      return commands[i].run(*settings[i]);
    } catch (const ConfigError &e) {
      std::cerr << "error: " << e.what() << "\n";
      return kUsage;
    } catch (const NumericError &e) {
      std::cerr << "numeric error: " << e.what() << "\n";
      return kNumeric;
    } catch (const Error &e) {
      std::cerr << "data error: " << e.what() << "\n";
      return kData;
    } catch (const fs::filesystem_error &e) {
      std::cerr << "file error: " << e.what() << "\n";
      return kData;
    }
  }
  return kUsage;
}
