// dvbx/params.hpp

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

// Trainable parameter storage. Quantities with a validity constraint are
// stored in an unconstrained form: logit(loop_prob), log(smoothing),
// log(calib), log(phi). fa, fb and the transform are stored as is.

#ifndef DVBX_PARAMS_HPP_
#define DVBX_PARAMS_HPP_

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "dvbx/common.hpp"
#include "dvbx/inference.hpp"
#include "dvbx/plda.hpp"

namespace dvbx {

enum class Slot : int { kFa, kFb, kLogitLoopProb, kLogSmoothing, kLogCalib, kTransform, kLogPhi };

inline constexpr int kNumSlots = 7;

inline constexpr std::array<std::string_view, kNumSlots> kSlotNames = {
    "fa", "fb", "logit_loop_prob", "log_smoothing", "log_calib", "transform", "log_phi"};

inline constexpr std::array<Slot, kNumSlots> kAllSlots = {
    Slot::kFa,       Slot::kFb,        Slot::kLogitLoopProb, Slot::kLogSmoothing,
    Slot::kLogCalib, Slot::kTransform, Slot::kLogPhi};

inline std::string_view SlotName(Slot s) { return kSlotNames[static_cast<std::size_t>(s)]; }

inline std::optional<Slot> SlotFromName(std::string_view name) {
  for (Slot s : kAllSlots)
    if (SlotName(s) == name) return s;
  return std::nullopt;
}

inline bool IsScalarSlot(Slot s) { return s != Slot::kTransform && s != Slot::kLogPhi; }

/// Hyperparameter slots vs PLDA slots, for the two training stages.
inline bool IsPldaSlot(Slot s) { return s == Slot::kTransform || s == Slot::kLogPhi; }

/// One matrix per slot (scalars are 1x1, log_phi is d' x 1).
struct SlotArray {
  std::array<Matrix, kNumSlots> slots;

  Matrix &operator[](Slot s) { return slots[static_cast<std::size_t>(s)]; }
  const Matrix &operator[](Slot s) const { return slots[static_cast<std::size_t>(s)]; }
  double &scalar(Slot s) { return (*this)[s](0, 0); }
  double scalar(Slot s) const { return (*this)[s](0, 0); }

  friend bool operator==(const SlotArray &a, const SlotArray &b) {
    for (std::size_t i = 0; i < a.slots.size(); ++i) {
      if (a.slots[i].rows() != b.slots[i].rows() || a.slots[i].cols() != b.slots[i].cols())
        return false;
      if (a.slots[i] != b.slots[i]) return false;
    }
    return true;
  }
};

struct ParamSet : SlotArray {
  std::array<bool, kNumSlots> trainable{};

  bool is_trainable(Slot s) const { return trainable[static_cast<std::size_t>(s)]; }
  void set_trainable(Slot s, bool on) { trainable[static_cast<std::size_t>(s)] = on; }
};

using GradientSet = SlotArray;

inline GradientSet ZeroLike(const SlotArray &p) {
  GradientSet g;
  for (std::size_t i = 0; i < p.slots.size(); ++i)
    g.slots[i] = Matrix::Zero(p.slots[i].rows(), p.slots[i].cols());
  return g;
}

/// Natural (constrained) values of all parameters.
struct NaturalParams {
  double fa = 1.0;
  double fb = 1.0;
  double loop_prob = 0.0;
  double smoothing = 7.0;
  double calib = 1.0;
  Matrix transform;
  Vector phi;
};

inline double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double Logit(double p) { return std::log(p) - std::log1p(-p); }

inline NaturalParams ReparamToNatural(const ParamSet &p) {
  NaturalParams n;
  n.fa = p.scalar(Slot::kFa);
  n.fb = p.scalar(Slot::kFb);
  n.loop_prob = Sigmoid(p.scalar(Slot::kLogitLoopProb));
  n.smoothing = std::exp(p.scalar(Slot::kLogSmoothing));
  n.calib = std::exp(p.scalar(Slot::kLogCalib));
  n.transform = p[Slot::kTransform];
  n.phi = p[Slot::kLogPhi].array().exp();
  return n;
}

/// Inverse of ReparamToNatural. loop_prob must lie in (0, 1); use a tiny
/// value when the GMM path is forced (it is ignored there). Trainable flags
/// default to off.
inline ParamSet NaturalToReparam(const NaturalParams &n) {
  if (!(n.loop_prob > 0.0 && n.loop_prob < 1.0))
    throw ConfigError("loop_prob must lie in (0, 1) to be reparametrized");
  if (!(n.smoothing > 0.0) || !(n.calib > 0.0) || !(n.phi.array() > 0.0).all())
    throw ConfigError("smoothing, calib and phi must be positive");
  ParamSet p;
  p[Slot::kFa] = Matrix::Constant(1, 1, n.fa);
  p[Slot::kFb] = Matrix::Constant(1, 1, n.fb);
  p[Slot::kLogitLoopProb] = Matrix::Constant(1, 1, Logit(n.loop_prob));
  p[Slot::kLogSmoothing] = Matrix::Constant(1, 1, std::log(n.smoothing));
  p[Slot::kLogCalib] = Matrix::Constant(1, 1, std::log(n.calib));
  p[Slot::kTransform] = n.transform;
  p[Slot::kLogPhi] = n.phi.array().log().matrix();
  return p;
}

/// Parameters for the pipeline from a PLDA space and hyperparameters. A zero
/// loop_prob is stored as logit(1e-12) so the reparametrization stays finite.
inline ParamSet MakeParams(const TransformedSpace &space, const HyperParams &hp) {
  NaturalParams n;
  n.fa = hp.fa;
  n.fb = hp.fb;
  n.loop_prob = hp.loop_prob > 0.0 ? hp.loop_prob : 1e-12;
  n.smoothing = hp.smoothing;
  n.calib = hp.calib;
  n.transform = space.transform;
  n.phi = space.phi;
  return NaturalToReparam(n);
}

inline TransformedSpace SpaceOf(const ParamSet &p) {
  return {p[Slot::kTransform], p[Slot::kLogPhi].array().exp().matrix()};
}

}  // namespace dvbx

#endif  // DVBX_PARAMS_HPP_
