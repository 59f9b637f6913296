#include "fade/coder/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fade/error.hpp"

namespace fade::coder {

namespace {

constexpr std::uint32_t kTop = 1u << 24;

FreqTable make_uniform() {
    FreqTable t;
    t.freq.fill(kTotal / kSymbols);
    t.rebuild();
    return t;
}

}  // namespace

const FreqTable& FreqTable::uniform() {
    static const FreqTable table = make_uniform();
    return table;
}

void FreqTable::rebuild() {
    cum[0] = 0;
    for (std::uint32_t i = 0; i < kSymbols; ++i) cum[i + 1] = cum[i] + freq[i];
}

bool FreqTable::valid() const noexcept {
    if (cum[0] != 0) return false;
    for (std::uint32_t i = 0; i < kSymbols; ++i)
        if (freq[i] == 0 || cum[i + 1] != cum[i] + freq[i]) return false;
    return cum[kSymbols] == kTotal;
}

double FreqTable::cost_bits(std::uint8_t sym) const {
    return double(kTotalBits) - std::log2(double(freq[sym]));
}

template <typename Real>
void quantize(std::span<const Real> probs, FreqTable& out) {
    require(probs.size() == kSymbols, ErrorCode::dimension, "quantize: expected 256 probabilities");
    double total = 0;
    for (Real p : probs) {
        if (!std::isfinite(double(p)) || p < 0)
            fail(ErrorCode::divergence, "quantize: non-finite or negative probability");
        total += double(p);
    }
    if (!(total > 0)) fail(ErrorCode::divergence, "quantize: probabilities sum to zero");

    std::array<double, kSymbols> rem;
    std::int64_t assigned = 0;
    for (std::uint32_t i = 0; i < kSymbols; ++i) {
        const double x = double(probs[i]) / total * double(kTotal);
        const double f = std::floor(x);
        out.freq[i] = std::uint32_t(f);
        rem[i] = x - f;
        assigned += std::int64_t(f);
    }
    std::int64_t deficit = std::int64_t(kTotal) - assigned;
    // Remainders are each below 1, so at most one unit per symbol is missing.
    deficit = std::min<std::int64_t>(deficit, kSymbols);
    if (deficit > 0) {
        std::array<std::uint16_t, kSymbols> order;
        std::iota(order.begin(), order.end(), std::uint16_t(0));
        auto before = [&](std::uint16_t a, std::uint16_t b) {
            return rem[a] != rem[b] ? rem[a] > rem[b] : a < b;
        };
        std::nth_element(order.begin(), order.begin() + (deficit - 1), order.end(), before);
        for (std::int64_t j = 0; j < deficit; ++j) ++out.freq[order[std::size_t(j)]];
    }
    // Rounding of the normalization can overshoot by a unit or two.
    for (; deficit < 0; ++deficit) {
        auto it = std::max_element(out.freq.begin(), out.freq.end());
        --*it;
    }

    std::uint32_t zeros = 0;
    for (std::uint32_t f : out.freq) zeros += f == 0;
    if (zeros > 0) {
        // Fast path: the maximum stays the maximum for every steal.
        std::uint32_t i1 = 0;
        for (std::uint32_t i = 1; i < kSymbols; ++i)
            if (out.freq[i] > out.freq[i1]) i1 = i;
        std::uint32_t i2 = i1 == 0 ? 1 : 0;
        for (std::uint32_t i = 0; i < kSymbols; ++i)
            if (i != i1 && out.freq[i] > out.freq[i2]) i2 = i;
        const std::uint32_t last = out.freq[i1] - (zeros - 1);
        if (last > out.freq[i2] || (last == out.freq[i2] && i1 < i2)) {
            out.freq[i1] -= zeros;
            for (auto& f : out.freq) f = f == 0 ? 1 : f;
        } else {
            for (std::uint32_t i = 0; i < kSymbols; ++i) {
                if (out.freq[i] != 0) continue;
                auto it = std::max_element(out.freq.begin(), out.freq.end());
                --*it;
                out.freq[i] = 1;
            }
        }
    }
    out.rebuild();
}

template void quantize<float>(std::span<const float>, FreqTable&);
template void quantize<double>(std::span<const double>, FreqTable&);

// ---------------------------------------------------------------------------

void RangeEncoder::shift_low() {
    if (std::uint32_t(low_) < 0xFF000000u || (low_ >> 32) != 0) {
        const auto carry = std::uint8_t(low_ >> 32);
        if (!leading_) out_.push_back(std::uint8_t(cache_ + carry));
        leading_ = false;
        for (; pending_ > 0; --pending_) out_.push_back(std::uint8_t(0xFF + carry));
        cache_ = std::uint8_t(low_ >> 24);
    } else {
        ++pending_;
    }
    low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(std::uint8_t sym, const FreqTable& t) {
    const std::uint32_t r = range_ >> kTotalBits;
    low_ += std::uint64_t(r) * t.cum[sym];
    range_ = r * t.freq[sym];
    while (range_ < kTop) {
        range_ <<= 8;
        shift_low();
    }
}

void RangeEncoder::encode_uniform(std::span<const std::uint8_t> symbols) {
    const FreqTable& u = FreqTable::uniform();
    for (std::uint8_t s : symbols) encode(s, u);
}

std::vector<std::uint8_t> RangeEncoder::finish() {
    require(!finished_, ErrorCode::usage, "range encoder already finished");
    for (int i = 0; i < 5; ++i) shift_low();
    finished_ = true;
    return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
}

std::uint8_t RangeDecoder::next() {
    if (pos_ >= bytes_.size()) fail(ErrorCode::corruption, "bitstream ended early");
    return bytes_[pos_++];
}

std::uint8_t RangeDecoder::decode(const FreqTable& t) {
    const std::uint32_t r = range_ >> kTotalBits;
    const std::uint32_t v = code_ / r;
    if (v >= kTotal) fail(ErrorCode::corruption, "bitstream code value out of range");
    const auto it = std::upper_bound(t.cum.begin() + 1, t.cum.end(), v);
    const auto sym = std::uint32_t(it - t.cum.begin() - 1);
    code_ -= r * t.cum[sym];
    range_ = r * t.freq[sym];
    while (range_ < kTop) {
        code_ = (code_ << 8) | next();
        range_ <<= 8;
    }
    return std::uint8_t(sym);
}

void RangeDecoder::decode_uniform(std::span<std::uint8_t> out) {
    const FreqTable& u = FreqTable::uniform();
    for (auto& s : out) s = decode(u);
}

void RangeDecoder::finish() const {
    if (!exhausted())
        fail(ErrorCode::corruption, "bitstream has " + std::to_string(bytes_.size() - pos_) +
                                        " unread bytes");
}

double ideal_bits(std::span<const std::uint8_t> symbols, std::span<const FreqTable> tables) {
    require(symbols.size() == tables.size(), ErrorCode::dimension,
            "ideal_bits: one table per symbol required");
    double bits = 0;
    for (std::size_t i = 0; i < symbols.size(); ++i) bits += tables[i].cost_bits(symbols[i]);
    return bits;
}

}  // namespace fade::coder
