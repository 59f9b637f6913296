#pragma once

#include <cstdint>

namespace fade::container {

/// original / compressed. Throws Error(usage) if container_length is zero.
double compression_ratio(std::uint64_t original_length, std::uint64_t container_length);

struct ScoreBounds {
    double cr_min = 0;
    double cr_max = 1;
    double tp_min = 0;
    double tp_max = 1;
};

/// omega * normalized CR + (1 - omega) * normalized throughput.
/// Throws Error(usage) for degenerate bounds, omega outside [0, 1], or values
/// outside the bounds.
double weighted_score(double cr, double tp, const ScoreBounds& bounds, double omega = 0.5);

}  // namespace fade::container
