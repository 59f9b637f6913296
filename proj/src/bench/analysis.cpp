#include "fade/bench/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "fade/error.hpp"

namespace fade::bench {

namespace {

using Histogram = std::array<std::uint64_t, 256>;

Histogram histogram(std::span<const std::uint8_t> data) {
    Histogram h{};
    for (std::uint8_t b : data) ++h[b];
    return h;
}

double entropy_of(const Histogram& h, std::uint64_t total) {
    if (total == 0) return 0;
    double bits = 0;
    for (std::uint64_t c : h) {
        if (c == 0) continue;
        const double p = double(c) / double(total);
        bits -= p * std::log2(p);
    }
    return bits;
}

}  // namespace

double order0_entropy(std::span<const std::uint8_t> data) {
    return entropy_of(histogram(data), data.size());
}

std::vector<double> local_entropy_profile(std::span<const std::uint8_t> data, std::size_t window) {
    require(window > 0, ErrorCode::usage, "entropy window must be positive");
    std::vector<double> out;
    if (data.size() <= window) {
        out.push_back(order0_entropy(data));
        return out;
    }
    for (std::size_t pos = 0; pos < data.size(); pos += window)
        out.push_back(order0_entropy(data.subspan(pos, std::min(window, data.size() - pos))));
    return out;
}

double mutual_information(std::span<const std::uint8_t> data, std::size_t lag) {
    require(lag > 0, ErrorCode::usage, "lag must be positive");
    if (data.size() <= lag) return 0;
    const std::size_t pairs = data.size() - lag;
    std::vector<std::uint64_t> joint(256 * 256, 0);
    Histogram left{}, right{};
    for (std::size_t i = 0; i < pairs; ++i) {
        const std::uint8_t a = data[i], b = data[i + lag];
        ++joint[std::size_t(a) * 256 + b];
        ++left[a];
        ++right[b];
    }
    const double n = double(pairs);
    double mi = 0;
    for (std::size_t a = 0; a < 256; ++a) {
        if (left[a] == 0) continue;
        for (std::size_t b = 0; b < 256; ++b) {
            const std::uint64_t c = joint[a * 256 + b];
            if (c == 0) continue;
            mi += double(c) / n * std::log2(double(c) * n / (double(left[a]) * double(right[b])));
        }
    }
    return mi;
}

MiCurve mutual_information_decay(std::span<const std::uint8_t> data, std::size_t max_lag,
                                 std::uint64_t shuffle_seed) {
    std::vector<std::uint8_t> shuffled(data.begin(), data.end());
    std::mt19937_64 rng(shuffle_seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    MiCurve curve;
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
        curve.raw.push_back(mutual_information(data, lag));
        curve.control.push_back(mutual_information(shuffled, lag));
        curve.corrected.push_back(curve.raw.back() - curve.control.back());
    }
    return curve;
}

SimilarityMatrix self_similarity_matrix(std::span<const std::uint8_t> data, std::size_t block) {
    require(block > 0 && data.size() / block >= 2, ErrorCode::usage,
            "self-similarity needs at least two blocks");
    SimilarityMatrix m;
    m.blocks = data.size() / block;
    std::vector<Histogram> hist;
    std::vector<double> norm;
    for (std::size_t i = 0; i < m.blocks; ++i) {
        hist.push_back(histogram(data.subspan(i * block, block)));
        double sq = 0;
        for (std::uint64_t c : hist.back()) sq += double(c) * double(c);
        norm.push_back(std::sqrt(sq));
    }
    m.values.assign(m.blocks * m.blocks, 0);
    for (std::size_t i = 0; i < m.blocks; ++i) {
        m.values[i * m.blocks + i] = 1;
        for (std::size_t j = i + 1; j < m.blocks; ++j) {
            double dot = 0;
            for (std::size_t s = 0; s < 256; ++s) dot += double(hist[i][s]) * double(hist[j][s]);
            const double c = dot / (norm[i] * norm[j]);
            m.values[i * m.blocks + j] = c;
            m.values[j * m.blocks + i] = c;
        }
    }
    return m;
}

}  // namespace fade::bench
