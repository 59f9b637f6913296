#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fade::bench {

/// Shannon entropy of the byte histogram, bits per byte. 0 for empty input.
double order0_entropy(std::span<const std::uint8_t> data);

/// Order-0 entropy of consecutive non-overlapping windows. A trailing window
/// shorter than `window` is kept. If the data is shorter than one window the
/// whole input is a single window.
std::vector<double> local_entropy_profile(std::span<const std::uint8_t> data, std::size_t window);

/// Plug-in estimate (bits) of I(X_i; X_{i+lag}) from the joint byte histogram.
double mutual_information(std::span<const std::uint8_t> data, std::size_t lag);

struct MiCurve {
    std::vector<double> raw;        // raw[l - 1] = plug-in MI at lag l
    std::vector<double> control;    // same estimator on a shuffled copy
    std::vector<double> corrected;  // raw - control
};

/// MI for lags 1..max_lag, with a shuffled control estimating the small-sample bias.
MiCurve mutual_information_decay(std::span<const std::uint8_t> data, std::size_t max_lag,
                                 std::uint64_t shuffle_seed = 1);

/// Symmetric n x n matrix of cosine similarities between block histograms.
struct SimilarityMatrix {
    std::size_t blocks = 0;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const { return values[i * blocks + j]; }
};

/// Blocks are consecutive and non-overlapping; a trailing partial block is dropped.
/// Throws Error(usage) unless the data holds at least two blocks.
SimilarityMatrix self_similarity_matrix(std::span<const std::uint8_t> data, std::size_t block);

}  // namespace fade::bench
