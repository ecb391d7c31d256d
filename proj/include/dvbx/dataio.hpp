// dvbx/dataio.hpp

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

// On-disk formats (x-vector container, dataset manifest), ground-truth label
// construction from reference segments, and the synthetic conversation
// generator.

#ifndef DVBX_DATAIO_HPP_
#define DVBX_DATAIO_HPP_

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dvbx/binary_io.hpp"
#include "dvbx/common.hpp"
#include "dvbx/init.hpp"
#include "dvbx/losses.hpp"
#include "dvbx/plda.hpp"
#include "dvbx/rng.hpp"
#include "dvbx/scoring.hpp"

namespace dvbx {

// ---------------------------------------------------------------------------
// X-vector container (little-endian):
//   "DVBXXVEC" u32 version=1 u32 0
//   u64 T, u64 d
//   f32 data[T*d] row-major
//   f64 starts[T], f64 durations[T]
//   u64 id_len, id bytes (UTF-8)

inline constexpr char kXvecMagic[] = "DVBXXVEC";
inline constexpr std::uint32_t kXvecVersion = 1;

inline std::vector<char> EncodeXVectors(const XVectorSequence &seq) {
  seq.Validate();
  io::ByteWriter w;
  w.Header(kXvecMagic, kXvecVersion);
  w.U64(static_cast<std::uint64_t>(seq.frames()));
  w.U64(static_cast<std::uint64_t>(seq.dim()));
  for (Index t = 0; t < seq.frames(); ++t)
    for (Index i = 0; i < seq.dim(); ++i) w.F32(static_cast<float>(seq.raw(t, i)));
  for (double s : seq.segment_starts) w.F64(s);
  for (double d : seq.segment_durations) w.F64(d);
  w.String(seq.utterance_id);
  return w.buffer();
}

inline XVectorSequence DecodeXVectors(std::vector<char> bytes, const std::string &what = "xvec") {
  io::ByteReader r(std::move(bytes), what);
  if (r.Header(kXvecMagic) != kXvecVersion) r.Fail("unsupported version");
  const std::uint64_t T = r.U64();
  const std::uint64_t d = r.U64();
  if (T == 0 || d == 0) r.Fail("empty shape");
  r.NeedCount(T, d, 4);
  XVectorSequence seq;
  seq.raw.resize(static_cast<Index>(T), static_cast<Index>(d));
  for (Index t = 0; t < seq.raw.rows(); ++t)
    for (Index i = 0; i < seq.raw.cols(); ++i) seq.raw(t, i) = r.F32();
  r.NeedCount(T, 2, 8);
  seq.segment_starts.resize(T);
  seq.segment_durations.resize(T);
  for (auto &s : seq.segment_starts) s = r.F64();
  for (auto &dd : seq.segment_durations) dd = r.F64();
  seq.utterance_id = r.String();
  r.ExpectEnd();
  try {
    seq.Validate();
  } catch (const Error &e) {
    r.Fail(e.what());
  }
  return seq;
}

inline void WriteXVectors(const std::filesystem::path &path, const XVectorSequence &seq) {
  io::WriteFileAtomic(path, EncodeXVectors(seq));
}

inline XVectorSequence ReadXVectors(const std::filesystem::path &path) {
  return DecodeXVectors(io::ReadFileBytes(path), path.string());
}

// ---------------------------------------------------------------------------
// Manifest: one tab-separated record per line (id, xvector, rttm, uem).
// Lines starting with '#' are comments; "# split=<tag>" names the split.
// Relative paths are resolved against the manifest's directory.

struct ManifestRecord {
  std::string utterance_id;
  std::filesystem::path xvector_path;
  std::filesystem::path rttm_path;
  std::filesystem::path uem_path;
};

struct DatasetManifest {
  std::string split = "train";
  std::vector<ManifestRecord> records;
};

inline std::string EmitManifest(const DatasetManifest &m) {
  std::string out = "# split=" + m.split + "\n";
  for (const auto &r : m.records)
    out += r.utterance_id + "\t" + r.xvector_path.generic_string() + "\t" +
           r.rttm_path.generic_string() + "\t" + r.uem_path.generic_string() + "\n";
  return out;
}

inline DatasetManifest ParseManifest(const std::string &text,
                                     const std::filesystem::path &base = {}) {
  DatasetManifest m;
  std::set<std::string> ids;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("split=");
      if (pos != std::string::npos) m.split = line.substr(pos + 6);
      continue;
    }
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (f.size() != 4) throw ParseError(lineno, "manifest record needs 4 tab-separated fields");
    if (!ids.insert(f[0]).second) throw ParseError(lineno, "duplicate utterance id " + f[0]);
    const auto resolve = [&](const std::string &p) {
      std::filesystem::path path(p);
      return path.is_relative() && !base.empty() ? base / path : path;
    };
    m.records.push_back({f[0], resolve(f[1]), resolve(f[2]), resolve(f[3])});
  }
  return m;
}

inline DatasetManifest ReadManifest(const std::filesystem::path &path) {
  return ParseManifest(io::ReadFileText(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Ground truth

struct LabeledFrames {
  GroundTruth gt;            // rows for kept frames only
  std::vector<Index> kept;   // frames with reference speech
};

/// Per frame, each speaker's speech time inside the frame's extent divided by
/// the time during which anyone speaks there, so overlapped rows may sum to
/// more than 1. Frames without reference speech are dropped. Speakers are
/// ordered by first appearance.
inline LabeledFrames BuildGroundTruth(const SegmentSet &ref, const XVectorSequence &seq) {
  if (!ref.recording_id.empty() && !seq.utterance_id.empty() &&
      ref.recording_id != seq.utterance_id)
    throw ShapeError("build_ground_truth: recording " + ref.recording_id +
                     " does not match sequence " + seq.utterance_id);
  std::map<std::string, Index> col;
  std::vector<std::string> names;
  for (const auto &s : ref.segments)
    if (col.emplace(s.speaker, static_cast<Index>(names.size())).second) names.push_back(s.speaker);

  const auto extents = FrameExtents(seq);
  const Index S = static_cast<Index>(names.size());
  LabeledFrames out;
  out.gt.speaker_names = names;
  std::vector<RowVector> rows;
  for (Index t = 0; t < seq.frames(); ++t) {
    const auto [lo, hi] = extents[static_cast<std::size_t>(t)];
    RowVector speech = RowVector::Zero(S);
    std::vector<Interval> voiced;
    for (const auto &s : ref.segments) {
      const double a = std::max(lo, s.onset), b = std::min(hi, s.end());
      if (b <= a) continue;
      speech(col.at(s.speaker)) += b - a;
      voiced.push_back({a, b});
    }
    const double total = TotalLength(NormalizeIntervals(std::move(voiced)));
    if (!(total > 0.0)) continue;
    rows.push_back(speech / total);
    out.kept.push_back(t);
  }
  out.gt.labels.resize(static_cast<Index>(rows.size()), S);
  for (std::size_t i = 0; i < rows.size(); ++i) out.gt.labels.row(static_cast<Index>(i)) = rows[i];
  return out;
}

/// Initial labels from an external segmentation: each frame takes the
/// speaker with the most speech inside its extent. Frames without any speech
/// copy the nearest labeled frame (earlier one on ties).
inline HardLabels LabelsFromSegments(const SegmentSet &segs, const XVectorSequence &seq) {
  std::map<std::string, int> col;
  for (const auto &s : segs.segments) col.emplace(s.speaker, static_cast<int>(col.size()));
  const auto extents = FrameExtents(seq);
  const auto T = static_cast<std::size_t>(seq.frames());
  std::vector<int> raw(T, -1);
  for (std::size_t t = 0; t < T; ++t) {
    const auto [lo, hi] = extents[t];
    std::vector<double> speech(col.size(), 0.0);
    for (const auto &s : segs.segments) {
      const double ov = std::min(hi, s.end()) - std::max(lo, s.onset);
      if (ov > 0.0) speech[static_cast<std::size_t>(col.at(s.speaker))] += ov;
    }
    const auto best = std::max_element(speech.begin(), speech.end());
    if (best != speech.end() && *best > 0.0) raw[t] = static_cast<int>(best - speech.begin());
  }
  if (std::all_of(raw.begin(), raw.end(), [](int v) { return v < 0; }))
    throw DegenerateInputError(seq.utterance_id + ": init segmentation overlaps no frame");
  std::vector<int> filled = raw;
  for (std::size_t t = 0; t < T; ++t) {
    if (raw[t] >= 0) continue;
    for (std::size_t k = 1;; ++k) {
      if (k <= t && raw[t - k] >= 0) { filled[t] = raw[t - k]; break; }
      if (t + k < T && raw[t + k] >= 0) { filled[t] = raw[t + k]; break; }
    }
  }
  return RenumberByFirstOccurrence(filled);
}

// ---------------------------------------------------------------------------
// Synthetic conversations

struct SynthConfig {
  int num_conversations = 8;
  int min_speakers = 2;
  int max_speakers = 4;
  int dim = 16;
  double phi_max = 8.0;      // phi_i = phi_max * phi_decay^i
  double phi_decay = 0.85;
  int min_frames = 120;
  int max_frames = 240;
  double stay_prob = 0.9;    // P_l of the generating turn process
  double overlap_fraction = 0.0;
  double frame_step = 0.25;
  double window = 1.5;
  double noise_scale = 1.0;
  double noise_correlation = 0.0;  // AR(1) coefficient of frame noise
  bool raw_space = false;    // emit through an invertible map plus mean shift
  std::uint64_t seed = 1;

  void Validate() const {
    const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(stay_prob) || !prob(overlap_fraction))
      throw ConfigError("synth: probabilities must lie in [0, 1]");
    if (!(noise_correlation >= 0.0 && noise_correlation < 1.0))
      throw ConfigError("synth: noise_correlation must lie in [0, 1)");
    if (dim < 1) throw ConfigError("synth: dim must be >= 1");
    if (num_conversations < 0) throw ConfigError("synth: num_conversations must be >= 0");
    if (min_speakers < 1 || max_speakers < min_speakers)
      throw ConfigError("synth: invalid speaker range");
    if (min_frames < 1 || max_frames < min_frames) throw ConfigError("synth: invalid frame range");
    if (!(frame_step > 0.0) || !(window > 0.0)) throw ConfigError("synth: step/window must be > 0");
    if (!(phi_max > 0.0) || !(phi_decay > 0.0)) throw ConfigError("synth: phi must be positive");
    if (!(noise_scale >= 0.0)) throw ConfigError("synth: noise_scale must be >= 0");
  }
};

/// The corpus-level generative model: speaker loading spectrum and the map
/// from the diagonal space to the emitted (raw) space, raw = x * A + b.
struct SynthWorld {
  Vector phi;
  Matrix map;    // A, d x d, invertible
  Vector shift;  // b

  Vector loading() const { return phi.array().sqrt(); }
};

inline SynthWorld MakeSynthWorld(const SynthConfig &cfg) {
  cfg.Validate();
  Rng rng(Rng::Derive(cfg.seed, 0xC0FFEEull));
  SynthWorld w;
  w.phi.resize(cfg.dim);
  for (int i = 0; i < cfg.dim; ++i) w.phi(i) = cfg.phi_max * std::pow(cfg.phi_decay, i);
  if (cfg.raw_space) {
    Matrix g(cfg.dim, cfg.dim);
    for (Index i = 0; i < g.size(); ++i) g.data()[i] = rng.Normal();
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Vector scales(cfg.dim);
    for (int i = 0; i < cfg.dim; ++i) scales(i) = rng.Uniform(0.5, 2.0);
    w.map = scales.asDiagonal() * q;
    w.shift.resize(cfg.dim);
    for (int i = 0; i < cfg.dim; ++i) w.shift(i) = 2.0 * rng.Normal();
  } else {
    w.map = Matrix::Identity(cfg.dim, cfg.dim);
    w.shift = Vector::Zero(cfg.dim);
  }
  return w;
}

struct Conversation {
  XVectorSequence seq;
  GroundTruth gt;
  SegmentSet ref;
};

/// Draws one conversation: speaker latents y_s ~ N(0, I), a speaker sequence
/// from the sticky turn chain, x_t = sum_s p_ts V y_s + noise. A frame is
/// overlapped with probability overlap_fraction: a second speaker talks for
/// the leading fraction f of the frame and p_t = (1, f) / (1 + f).
inline Conversation GenerateConversation(const SynthConfig &cfg, const SynthWorld &world,
                                         Rng &rng, const std::string &id) {
  const int D = cfg.dim;
  const int S = rng.UniformInt(cfg.min_speakers, cfg.max_speakers);
  const int T = rng.UniformInt(cfg.min_frames, cfg.max_frames);
  const Vector v = world.loading();

  Matrix means(S, D);
  for (int s = 0; s < S; ++s)
    for (int i = 0; i < D; ++i) means(s, i) = v(i) * rng.Normal();
  std::vector<double> turn_prior(static_cast<std::size_t>(S));
  for (auto &p : turn_prior) p = rng.Uniform(0.5, 1.5);

  std::vector<int> z(static_cast<std::size_t>(T));
  z[0] = static_cast<int>(rng.Categorical(turn_prior));
  for (int t = 1; t < T; ++t)
    z[static_cast<std::size_t>(t)] = rng.Bernoulli(cfg.stay_prob)
                                         ? z[static_cast<std::size_t>(t) - 1]
                                         : static_cast<int>(rng.Categorical(turn_prior));

  const double step = cfg.frame_step;
  const double end_time = T * step;
  Conversation conv;
  conv.seq.utterance_id = id;
  conv.ref.recording_id = id;
  conv.seq.raw.resize(T, D);

  // Per-speaker speech intervals, merged when contiguous.
  std::vector<std::vector<Interval>> speech(static_cast<std::size_t>(S));
  const auto add_speech = [&](int s, double lo, double hi) {
    auto &iv = speech[static_cast<std::size_t>(s)];
    if (!iv.empty() && std::abs(iv.back().second - lo) < 1e-9)
      iv.back().second = hi;
    else
      iv.push_back({lo, hi});
  };

  Vector noise = Vector::Zero(D);
  const double rho = cfg.noise_correlation;
  const double innov = std::sqrt(1.0 - rho * rho);
  for (int t = 0; t < T; ++t) {
    const double lo = t * step;
    const double hi = (t + 1) * step;
    const int main = z[static_cast<std::size_t>(t)];
    RowVector mix = means.row(main);
    add_speech(main, lo, hi);
    if (S > 1 && rng.Bernoulli(cfg.overlap_fraction)) {
      int other = rng.UniformInt(0, S - 2);
      if (other >= main) ++other;
      // Whole milliseconds so RTTM text round trips exactly.
      const double ms = std::round(rng.Uniform(0.2, 1.0) * step * 1000.0);
      const double frac = ms / (step * 1000.0);
      mix = (means.row(main) + frac * means.row(other)) / (1.0 + frac);
      add_speech(other, lo, lo + ms / 1000.0);
    }
    for (int i = 0; i < D; ++i) {
      const double e = rng.Normal();
      noise(i) = t == 0 ? e : rho * noise(i) + innov * e;
    }
    const RowVector x = mix + cfg.noise_scale * noise.transpose();
    conv.seq.raw.row(t) = x * world.map + world.shift.transpose();
    conv.seq.segment_starts.push_back(lo);
    conv.seq.segment_durations.push_back(std::min(cfg.window, end_time - lo));
  }

  for (int s = 0; s < S; ++s)
    for (const auto &[lo, hi] : speech[static_cast<std::size_t>(s)])
      conv.ref.segments.push_back({lo, hi - lo, id + "_spk" + std::to_string(s)});
  std::stable_sort(conv.ref.segments.begin(), conv.ref.segments.end(),
                   [](const Segment &a, const Segment &b) { return a.onset < b.onset; });
  conv.gt = BuildGroundTruth(conv.ref, conv.seq).gt;
  return conv;
}

/// Independent single-speaker utterances for PLDA pre-training: `speakers`
/// speakers with `per_speaker` vectors each, white within-speaker noise.
inline std::pair<Matrix, std::vector<int>> GeneratePldaCorpus(const SynthConfig &cfg,
                                                              const SynthWorld &world,
                                                              int speakers, int per_speaker,
                                                              Rng &rng) {
  const int D = cfg.dim;
  const Vector v = world.loading();
  Matrix out(speakers * per_speaker, D);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(speakers * per_speaker));
  RowVector mean(D), x(D);
  for (int s = 0; s < speakers; ++s) {
    for (int i = 0; i < D; ++i) mean(i) = v(i) * rng.Normal();
    for (int k = 0; k < per_speaker; ++k) {
      for (int i = 0; i < D; ++i) x(i) = mean(i) + cfg.noise_scale * rng.Normal();
      out.row(s * per_speaker + k) = x * world.map + world.shift.transpose();
      labels.push_back(s);
    }
  }
  return {std::move(out), std::move(labels)};
}

/// Conversations i = 0..n-1 each use the child stream Derive(seed, i + offset).
inline std::vector<Conversation> GenerateCorpus(const SynthConfig &cfg, const SynthWorld &world,
                                                const std::string &prefix, int count,
                                                std::uint64_t offset = 0) {
  std::vector<Conversation> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(Rng::Derive(cfg.seed, offset + static_cast<std::uint64_t>(i)));
    char id[64];
    std::snprintf(id, sizeof(id), "%s%04d", prefix.c_str(), i);
    out.push_back(GenerateConversation(cfg, world, rng, id));
  }
  return out;
}

}  // namespace dvbx

#endif  // DVBX_DATAIO_HPP_
