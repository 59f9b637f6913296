#include "fade/container/metrics.hpp"

#include "fade/error.hpp"

namespace fade::container {

double compression_ratio(std::uint64_t original_length, std::uint64_t container_length) {
    require(container_length > 0, ErrorCode::usage, "compression_ratio: empty container");
    return double(original_length) / double(container_length);
}

double weighted_score(double cr, double tp, const ScoreBounds& b, double omega) {
    require(b.cr_max > b.cr_min && b.tp_max > b.tp_min, ErrorCode::usage,
            "weighted_score: degenerate bounds");
    require(omega >= 0 && omega <= 1, ErrorCode::usage, "weighted_score: omega must be in [0, 1]");
    require(cr >= b.cr_min && cr <= b.cr_max && tp >= b.tp_min && tp <= b.tp_max, ErrorCode::usage,
            "weighted_score: value outside bounds");
    return omega * (cr - b.cr_min) / (b.cr_max - b.cr_min) +
           (1 - omega) * (tp - b.tp_min) / (b.tp_max - b.tp_min);
}

}  // namespace fade::container
