// dvbx/scoring.hpp

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

// Timed speaker segments, RTTM/UEM text formats and the diarization error
// rate.
//
// DER accounting, per elementary interval of duration dt inside the scored
// region, with N_ref reference speakers, N_hyp hypothesis speakers and
// N_correct reference speakers whose mapped hypothesis speaker is active:
//   miss      += dt * max(0, N_ref - N_hyp)
//   false_al  += dt * max(0, N_hyp - N_ref)
//   confusion += dt * (min(N_ref, N_hyp) - N_correct)
//   total     += dt * N_ref
// The scored region is the UEM (or the span of ref and hyp when absent) minus
// collar/2 on both sides of every reference segment boundary. The
// reference-to-hypothesis speaker mapping is the one-to-one assignment that
// maximizes co-occurrence time inside the scored region.

#ifndef DVBX_SCORING_HPP_
#define DVBX_SCORING_HPP_

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dvbx/assignment.hpp"
#include "dvbx/common.hpp"
#include "dvbx/plda.hpp"

namespace dvbx {

struct Segment {
  double onset = 0.0;
  double duration = 0.0;
  std::string speaker;

  double end() const { return onset + duration; }
  friend bool operator==(const Segment &, const Segment &) = default;
};

struct SegmentSet {
  std::string recording_id;
  std::vector<Segment> segments;

  friend bool operator==(const SegmentSet &, const SegmentSet &) = default;
};

using Interval = std::pair<double, double>;

struct DerBreakdown {
  double miss = 0.0;
  double false_alarm = 0.0;
  double confusion = 0.0;
  double total_ref_speech = 0.0;
  double der = 0.0;

  DerBreakdown &operator+=(const DerBreakdown &o) {
    miss += o.miss;
    false_alarm += o.false_alarm;
    confusion += o.confusion;
    total_ref_speech += o.total_ref_speech;
    der = total_ref_speech > 0.0 ? (miss + false_alarm + confusion) / total_ref_speech : 0.0;
    return *this;
  }
};

/// Error message includes the 1-based line number.
class ParseError : public FormatError {
 public:
  ParseError(std::size_t line, const std::string &msg)
      : FormatError("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// ---------------------------------------------------------------------------
// Frames to segments

/// Time span attributed to each frame. With a uniform stride frame t owns
/// [start_t, start_{t+1}) and the last frame its full duration. Otherwise
/// neighbouring frames split at the midpoint of their centres, and no frame
/// extends beyond its own window.
inline std::vector<Interval> FrameExtents(const XVectorSequence &seq) {
  const std::size_t T = seq.segment_starts.size();
  const auto &s = seq.segment_starts;
  const auto &d = seq.segment_durations;
  std::vector<Interval> out(T);
  bool uniform = true;
  for (std::size_t t = 2; t < T && uniform; ++t)
    uniform = std::abs((s[t] - s[t - 1]) - (s[1] - s[0])) <= 1e-6;
  for (std::size_t t = 0; t < T; ++t) {
    const double own_end = s[t] + d[t];
    if (uniform) {
      out[t] = {s[t], t + 1 < T ? s[t + 1] : own_end};
      continue;
    }
    const auto mid = [&](std::size_t a) { return 0.5 * (s[a] + 0.5 * d[a] + s[a + 1] + 0.5 * d[a + 1]); };
    const double lo = t == 0 ? s[t] : std::max(s[t], mid(t - 1));
    const double hi = t + 1 == T ? own_end : std::min(own_end, mid(t));
    out[t] = {lo, std::max(lo, hi)};
  }
  return out;
}

inline std::string DefaultSpeakerName(Index s) { return "spk" + std::to_string(s); }

/// Argmax speaker per frame (ties to the lower index), contiguous equal
/// labels merged.
inline SegmentSet ResponsibilitiesToSegments(const Matrix &gamma, const XVectorSequence &seq,
                                             const std::vector<std::string> &names = {}) {
  RequireShape(gamma.rows() == seq.frames(), "responsibilities_to_segments: frame mismatch");
  const auto extents = FrameExtents(seq);
  SegmentSet out;
  out.recording_id = seq.utterance_id;
  Index prev = -1;
  double prev_end = 0.0;
  for (Index t = 0; t < gamma.rows(); ++t) {
    Index arg = 0;
    gamma.row(t).maxCoeff(&arg);
    const auto [lo, hi] = extents[static_cast<std::size_t>(t)];
    if (hi <= lo) continue;
    if (arg == prev && std::abs(lo - prev_end) <= 1e-9) {
      out.segments.back().duration = hi - out.segments.back().onset;
    } else {
      const std::string name =
          names.empty() ? DefaultSpeakerName(arg) : names.at(static_cast<std::size_t>(arg));
      out.segments.push_back({lo, hi - lo, name});
    }
    prev = arg;
    prev_end = hi;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interval helpers

/// Sorted, disjoint union of intervals (empty ones dropped).
inline std::vector<Interval> NormalizeIntervals(std::vector<Interval> v) {
  std::sort(v.begin(), v.end());
  std::vector<Interval> out;
  for (const auto &iv : v) {
    if (!(iv.second > iv.first)) continue;
    if (!out.empty() && iv.first <= out.back().second)
      out.back().second = std::max(out.back().second, iv.second);
    else
      out.push_back(iv);
  }
  return out;
}

/// a minus the union of b; both inputs normalized.
inline std::vector<Interval> SubtractIntervals(const std::vector<Interval> &a,
                                               const std::vector<Interval> &b) {
  std::vector<Interval> out;
  for (auto [lo, hi] : a) {
    double cur = lo;
    for (const auto &[blo, bhi] : b) {
      if (bhi <= cur || blo >= hi) continue;
      if (blo > cur) out.push_back({cur, blo});
      cur = std::max(cur, bhi);
      if (cur >= hi) break;
    }
    if (cur < hi) out.push_back({cur, hi});
  }
  return out;
}

inline double TotalLength(const std::vector<Interval> &v) {
  double sum = 0.0;
  for (const auto &[lo, hi] : v) sum += hi - lo;
  return sum;
}

/// Scored region for a reference under a collar and optional UEM.
inline std::vector<Interval> ScoredRegion(const SegmentSet &ref, const SegmentSet &hyp,
                                          double collar, const std::vector<Interval> *uem) {
  std::vector<Interval> region;
  if (uem != nullptr) {
    region = NormalizeIntervals(*uem);
  } else {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto *set : {&ref, &hyp})
      for (const auto &s : set->segments) {
        lo = std::min(lo, s.onset);
        hi = std::max(hi, s.end());
      }
    if (hi > lo) region.push_back({lo, hi});
  }
  if (collar > 0.0) {
    std::vector<Interval> excluded;
    for (const auto &s : ref.segments) {
      excluded.push_back({s.onset - collar / 2, s.onset + collar / 2});
      excluded.push_back({s.end() - collar / 2, s.end() + collar / 2});
    }
    region = SubtractIntervals(region, NormalizeIntervals(std::move(excluded)));
  }
  return region;
}

/// Sum of reference speaker time inside the scored region.
inline double ScoredReferenceDuration(const SegmentSet &ref, double collar,
                                      const std::vector<Interval> *uem = nullptr) {
  const auto region = ScoredRegion(ref, ref, collar, uem);
  double total = 0.0;
  for (const auto &s : ref.segments)
    total += TotalLength(SubtractIntervals({{s.onset, s.end()}},
                                           SubtractIntervals({{s.onset, s.end()}}, region)));
  return total;
}

// ---------------------------------------------------------------------------
// DER

inline DerBreakdown ComputeDer(const SegmentSet &ref, const SegmentSet &hyp, double collar,
                               const std::vector<Interval> *uem = nullptr) {
  if (collar < 0.0) throw ConfigError("der: collar must be >= 0");
  const auto region = ScoredRegion(ref, hyp, collar, uem);

  std::map<std::string, int> ref_ids, hyp_ids;
  for (const auto &s : ref.segments) ref_ids.emplace(s.speaker, static_cast<int>(ref_ids.size()));
  for (const auto &s : hyp.segments) hyp_ids.emplace(s.speaker, static_cast<int>(hyp_ids.size()));

  std::vector<double> cuts;
  for (const auto &[lo, hi] : region) {
    cuts.push_back(lo);
    cuts.push_back(hi);
  }
  for (const auto *set : {&ref, &hyp})
    for (const auto &s : set->segments) {
      cuts.push_back(s.onset);
      cuts.push_back(s.end());
    }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  struct Piece {
    double dt;
    std::vector<int> ref, hyp;
  };
  std::vector<Piece> pieces;
  std::size_t r = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i], hi = cuts[i + 1];
    const double mid = 0.5 * (lo + hi);
    while (r < region.size() && region[r].second <= mid) ++r;
    if (r == region.size() || region[r].first > mid) continue;
    Piece p{hi - lo, {}, {}};
    for (const auto &s : ref.segments)
      if (s.onset <= mid && mid < s.end()) p.ref.push_back(ref_ids.at(s.speaker));
    for (const auto &s : hyp.segments)
      if (s.onset <= mid && mid < s.end()) p.hyp.push_back(hyp_ids.at(s.speaker));
    for (auto *v : {&p.ref, &p.hyp}) {
      std::sort(v->begin(), v->end());
      v->erase(std::unique(v->begin(), v->end()), v->end());
    }
    pieces.push_back(std::move(p));
  }

  const Index n = static_cast<Index>(std::max(ref_ids.size(), hyp_ids.size()));
  Matrix overlap = Matrix::Zero(n, n);
  for (const auto &p : pieces)
    for (int a : p.ref)
      for (int b : p.hyp) overlap(a, b) += p.dt;
  std::vector<Index> ref_to_hyp = SolveAssignment(-overlap);

  DerBreakdown out;
  for (const auto &p : pieces) {
    const double nr = static_cast<double>(p.ref.size());
    const double nh = static_cast<double>(p.hyp.size());
    double correct = 0.0;
    for (int a : p.ref) {
      const Index b = ref_to_hyp[static_cast<std::size_t>(a)];
      if (std::binary_search(p.hyp.begin(), p.hyp.end(), static_cast<int>(b)) &&
          static_cast<std::size_t>(b) < hyp_ids.size())
        correct += 1.0;
    }
    out.miss += p.dt * std::max(0.0, nr - nh);
    out.false_alarm += p.dt * std::max(0.0, nh - nr);
    out.confusion += p.dt * (std::min(nr, nh) - correct);
    out.total_ref_speech += p.dt * nr;
  }
  if (!(out.total_ref_speech > 0.0))
    throw DegenerateInputError("der: no scored reference speech for " + ref.recording_id);
  out.der = (out.miss + out.false_alarm + out.confusion) / out.total_ref_speech;
  return out;
}

// ---------------------------------------------------------------------------
// RTTM / UEM

namespace scoring_detail {

inline std::vector<std::string> SplitFields(const std::string &line) {
  std::istringstream is(line);
  std::vector<std::string> f;
  std::string tok;
  while (is >> tok) f.push_back(tok);
  return f;
}

inline double ParseNumber(const std::string &tok, std::size_t line, const char *what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception &) {
    throw ParseError(line, std::string("bad ") + what + " '" + tok + "'");
  }
}

inline std::string Fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace scoring_detail

/// Parses SPEAKER lines; blank lines are skipped. Recordings are returned in
/// order of first appearance.
inline std::vector<SegmentSet> ParseRttm(const std::string &text) {
  std::vector<SegmentSet> out;
  std::map<std::string, std::size_t> index;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto f = scoring_detail::SplitFields(line);
    if (f.empty()) continue;
    if (f.size() != 10)
      throw ParseError(lineno, "expected 10 fields, got " + std::to_string(f.size()));
    if (f[0] != "SPEAKER") throw ParseError(lineno, "expected SPEAKER record, got " + f[0]);
    const double onset = scoring_detail::ParseNumber(f[3], lineno, "onset");
    const double dur = scoring_detail::ParseNumber(f[4], lineno, "duration");
    if (!(dur > 0.0)) throw ParseError(lineno, "duration must be > 0");
    auto [it, fresh] = index.emplace(f[1], out.size());
    if (fresh) out.push_back(SegmentSet{f[1], {}});
    out[it->second].segments.push_back({onset, dur, f[7]});
  }
  return out;
}

/// One line per segment; onset and duration printed with 3 decimals
/// (round to nearest of the binary value, so 1.2345 prints as 1.234).
inline std::string EmitRttm(const SegmentSet &set) {
  std::string out;
  for (const auto &s : set.segments)
    out += "SPEAKER " + set.recording_id + " 1 " + scoring_detail::Fixed3(s.onset) + " " +
           scoring_detail::Fixed3(s.duration) + " <NA> <NA> " + s.speaker + " <NA> <NA>\n";
  return out;
}

/// "rec 1 onset offset" per line.
inline std::map<std::string, std::vector<Interval>> ParseUem(const std::string &text) {
  std::map<std::string, std::vector<Interval>> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto f = scoring_detail::SplitFields(line);
    if (f.empty()) continue;
    if (f.size() != 4) throw ParseError(lineno, "expected 4 UEM fields");
    const double lo = scoring_detail::ParseNumber(f[2], lineno, "onset");
    const double hi = scoring_detail::ParseNumber(f[3], lineno, "offset");
    if (!(hi > lo)) throw ParseError(lineno, "UEM offset must exceed onset");
    out[f[0]].push_back({lo, hi});
  }
  return out;
}

inline std::string EmitUem(const std::string &rec, const std::vector<Interval> &intervals) {
  std::string out;
  for (const auto &[lo, hi] : intervals)
    out += rec + " 1 " + scoring_detail::Fixed3(lo) + " " + scoring_detail::Fixed3(hi) + "\n";
  return out;
}

/// Union of reference speech, usable as an oracle-VAD UEM.
inline std::vector<Interval> SpeechRegions(const SegmentSet &ref) {
  std::vector<Interval> v;
  for (const auto &s : ref.segments) v.push_back({s.onset, s.end()});
  return NormalizeIntervals(std::move(v));
}

/// TSV with a header, one row per recording and a TOTAL row.
inline std::string DerReportTsv(const std::vector<std::pair<std::string, DerBreakdown>> &rows) {
  const auto line = [](const std::string &name, const DerBreakdown &b) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s\t%.3f\t%.3f\t%.3f\t%.3f\t%.2f\n", name.c_str(), b.miss,
                  b.false_alarm, b.confusion, b.total_ref_speech, 100.0 * b.der);
    return std::string(buf);
  };
  std::string out = "recording\tmiss\tfalse_alarm\tconfusion\ttotal\tder_percent\n";
  DerBreakdown total;
  for (const auto &[name, b] : rows) {
    out += line(name, b);
    total += b;
  }
  out += line("TOTAL", total);
  return out;
}

}  // namespace dvbx

#endif  // DVBX_SCORING_HPP_
