#pragma once

// Segment-mean reduction of the demand component of the state. The horizon
// flow vector of each platform is cut into segments of length H and each
// segment is replaced by its arithmetic mean, shrinking the per-platform
// dimension by a factor of H while preserving the vector's mean.

#include <numeric>
#include <vector>

#include "railmpc/mip.hpp"

namespace railmpc {

struct ReductionConfig {
  int segments = 1;        // number of segments kept per platform
  int segment_length = 1;  // services averaged into one segment
  int window() const { return segments * segment_length; }

  bool operator==(const ReductionConfig& o) const {
    return segments == o.segments && segment_length == o.segment_length;
  }
};

// Identity configuration: every service slot is its own segment, so the
// learning state keeps the full demand resolution.
inline ReductionConfig full_resolution_config(int horizon) { return {horizon, 1}; }

inline std::vector<double> reduce_flow(const std::vector<double>& slice,
                                       const ReductionConfig& cfg) {
  if (cfg.segments < 1 || cfg.segment_length < 1)
    throw std::invalid_argument("reduction needs segments >= 1 and segment_length >= 1");
  if (static_cast<int>(slice.size()) != cfg.window())
    throw std::invalid_argument("slice length must equal segments * segment_length");
  std::vector<double> out(static_cast<std::size_t>(cfg.segments));
  for (int k = 0; k < cfg.segments; ++k) {
    auto begin = slice.begin() + static_cast<std::ptrdiff_t>(k) * cfg.segment_length;
    out[static_cast<std::size_t>(k)] =
        std::accumulate(begin, begin + cfg.segment_length, 0.0) /
        static_cast<double>(cfg.segment_length);
  }
  return out;
}

struct LearningState {
  std::vector<double> x;                        // copied from the system state
  std::vector<std::vector<double>> reduced;     // per platform, `segments` entries

  int dimension() const {
    int d = static_cast<int>(x.size());
    for (const auto& r : reduced) d += static_cast<int>(r.size());
    return d;
  }

  // Flat layout: x first, then the reduced flows platform by platform.
  std::vector<double> flat() const {
    std::vector<double> out = x;
    for (const auto& r : reduced) out.insert(out.end(), r.begin(), r.end());
    return out;
  }
};

// Builds the classifier input: x verbatim plus per-platform reduced flows in
// canonical platform order. The state's flow slice must cover the reduction
// window; entries beyond it are dropped.
inline LearningState to_learning_state(const SystemState& st, const ReductionConfig& cfg) {
  const int window = cfg.window();
  LearningState ls;
  ls.x = st.x_vector();
  ls.reduced.reserve(st.rho.size());
  for (const auto& slice : st.rho) {
    if (static_cast<int>(slice.size()) < window)
      throw std::invalid_argument("flow slice shorter than the reduction window");
    std::vector<double> head(slice.begin(), slice.begin() + window);
    ls.reduced.push_back(reduce_flow(head, cfg));
  }
  return ls;
}

}  // namespace railmpc
