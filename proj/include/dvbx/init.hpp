// dvbx/init.hpp

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

#ifndef DVBX_INIT_HPP_
#define DVBX_INIT_HPP_

#include <algorithm>
#include <string>
#include <vector>

#include "dvbx/common.hpp"

namespace dvbx {

struct HardLabels {
  std::vector<int> labels;
  int num_clusters = 0;

  void Validate() const {
    std::vector<bool> seen(static_cast<std::size_t>(std::max(num_clusters, 0)), false);
    for (int l : labels) {
      if (l < 0 || l >= num_clusters) throw ShapeError("hard label out of range");
      seen[static_cast<std::size_t>(l)] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      throw ShapeError("hard labels leave a cluster empty");
  }
};

/// Renumbers arbitrary non-negative ids to 0..S-1 in order of first occurrence.
inline HardLabels RenumberByFirstOccurrence(const std::vector<int> &raw) {
  HardLabels out;
  std::vector<int> map;
  out.labels.reserve(raw.size());
  for (int id : raw) {
    if (id >= static_cast<int>(map.size())) map.resize(static_cast<std::size_t>(id) + 1, -1);
    int &m = map[static_cast<std::size_t>(id)];
    if (m < 0) m = out.num_clusters++;
    out.labels.push_back(m);
  }
  return out;
}

struct AhcOptions {
  double threshold = 0.0;
  int max_speakers = 10;
  bool subtract_mean = true;  // center the conversation before cosine scoring
};

/// Average-linkage agglomerative clustering on cosine similarities of rows.
/// Merging continues while the best linkage similarity is >= threshold or
/// while more than max_speakers clusters remain. Ties go to the
/// lexicographically smallest (i, j) pair of cluster slots.
inline HardLabels AhcCluster(const Matrix &x, const AhcOptions &opt = {}) {
  const Index T = x.rows();
  if (T < 1) throw ShapeError("ahc_cluster: empty sequence");
  Matrix centered = x;
  if (opt.subtract_mean && T > 1) centered.rowwise() -= x.colwise().mean();
  for (Index t = 0; t < T; ++t) {
    const double n = centered.row(t).norm();
    if (n > 0.0) centered.row(t) /= n;
  }
  // Linkage stored as similarity sums so averages update exactly.
  Matrix sum_sim = centered * centered.transpose();
  std::vector<double> size(static_cast<std::size_t>(T), 1.0);
  std::vector<bool> active(static_cast<std::size_t>(T), true);
  std::vector<int> owner(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) owner[static_cast<std::size_t>(t)] = static_cast<int>(t);

  const auto linkage = [&](Index i, Index j) {
    return sum_sim(i, j) / (size[static_cast<std::size_t>(i)] * size[static_cast<std::size_t>(j)]);
  };

  int clusters = static_cast<int>(T);
  while (clusters > 1) {
    Index bi = -1, bj = -1;
    double best = kNegInf;
    for (Index i = 0; i < T; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (Index j = i + 1; j < T; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        const double s = linkage(i, j);
        if (s > best) {
          best = s;
          bi = i;
          bj = j;
        }
      }
    }
    if (best < opt.threshold && clusters <= opt.max_speakers) break;
    // merge bj into bi
    for (Index k = 0; k < T; ++k) {
      sum_sim(bi, k) += sum_sim(bj, k);
      sum_sim(k, bi) = sum_sim(bi, k);
    }
    size[static_cast<std::size_t>(bi)] += size[static_cast<std::size_t>(bj)];
    active[static_cast<std::size_t>(bj)] = false;
    for (auto &o : owner)
      if (o == static_cast<int>(bj)) o = static_cast<int>(bi);
    --clusters;
  }
  return RenumberByFirstOccurrence(owner);
}

/// Row t = softmax(tau * one_hot(labels[t])).
inline Matrix SmoothLabels(const HardLabels &hard, double tau) {
  if (!(tau > 0.0)) throw ConfigError("smooth_labels: tau must be > 0");
  const Index T = static_cast<Index>(hard.labels.size());
  const Index S = hard.num_clusters;
  const double e = std::exp(-tau);
  const double on = 1.0 / (1.0 + static_cast<double>(S - 1) * e);
  const double off = e * on;
  Matrix gamma = Matrix::Constant(T, S, off);
  for (Index t = 0; t < T; ++t) gamma(t, hard.labels[static_cast<std::size_t>(t)]) = on;
  return gamma;
}

/// dL/dtau given dL/dgamma for SmoothLabels.
inline double SmoothLabelsBackward(const HardLabels &hard, const Matrix &gamma,
                                   const Matrix &grad_gamma) {
  double g = 0.0;
  for (Index t = 0; t < gamma.rows(); ++t) {
    const Index l = hard.labels[static_cast<std::size_t>(t)];
    const double on = gamma(t, l);
    for (Index s = 0; s < gamma.cols(); ++s)
      g += grad_gamma(t, s) * gamma(t, s) * ((s == l ? 1.0 : 0.0) - on);
  }
  return g;
}

}  // namespace dvbx

#endif  // DVBX_INIT_HPP_
