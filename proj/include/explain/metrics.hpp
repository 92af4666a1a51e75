#pragma once

#include <span>
#include <vector>

namespace explain {

// Performance diagram curve: probability of detection vs success ratio over
// a descending threshold sweep.
struct PerformanceCurve {
  std::vector<double> thresholds;  // descending, evenly spaced in [0, 1]
  std::vector<double> pod;         // hits / (hits + misses)
  std::vector<double> sr;          // hits / (hits + false alarms); 1 when nothing predicted
};

PerformanceCurve performance_curve(std::span<const double> probs, std::span<const int> labels,
                                   int n_thresholds = 200);

// Normalized area under the performance diagram curve. The area integrates
// success ratio over probability of detection across the achieved operating
// points (thresholds that predict at least one positive): points are sorted
// by pod, ties keep the best sr, the leftmost point extends as a rectangle
// down to pod = 0, and consecutive points contribute trapezoids. The result
// is normalized as (AUPDC - b) / (1 - b) with b the base rate, anchoring
// no-skill at 0 and perfection at 1; worse-than-no-skill goes negative.
double naupdc(std::span<const double> probs, std::span<const int> labels,
              int n_thresholds = 200);

}  // namespace explain
