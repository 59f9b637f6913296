#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace fade::coder {

inline constexpr std::uint32_t kSymbols = 256;
inline constexpr std::uint32_t kTotalBits = 16;
inline constexpr std::uint32_t kTotal = 1u << kTotalBits;  // 65536

/// Integer distribution over bytes. freq sums to kTotal; every freq >= 1.
struct FreqTable {
    std::array<std::uint32_t, kSymbols> freq{};
    std::array<std::uint32_t, kSymbols + 1> cum{};

    static const FreqTable& uniform();

    /// Recomputes cum from freq.
    void rebuild();
    /// Checks the invariants (positive entries, exact total, consistent cum).
    bool valid() const noexcept;
    /// -log2(freq[sym] / kTotal)
    double cost_bits(std::uint8_t sym) const;

    friend bool operator==(const FreqTable&, const FreqTable&) = default;
};

/// Deterministic quantization: floor(p * 65536) of the normalized input,
/// leftover units to the largest remainders (lower index wins ties), then each
/// zero is raised to 1 by taking a unit from the current maximum.
/// Throws Error(divergence) on non-finite input.
template <typename Real>
void quantize(std::span<const Real> probs, FreqTable& out);

template <typename Real>
FreqTable quantize(std::span<const Real> probs) {
    FreqTable t;
    quantize(probs, t);
    return t;
}

/// 32-bit range encoder with 16-bit frequencies, byte-wise renormalization
/// (range kept >= 2^24) and carry propagation through pending 0xFF bytes.
class RangeEncoder {
public:
    void encode(std::uint8_t sym, const FreqTable& t);
    void encode_uniform(std::span<const std::uint8_t> symbols);

    /// Flushes the final four bytes; the encoder must not be used afterwards.
    std::vector<std::uint8_t> finish();

    std::size_t bytes_written() const noexcept { return out_.size(); }

private:
    void shift_low();

    std::uint64_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint8_t cache_ = 0;
    std::uint64_t pending_ = 0;  // 0xFF bytes waiting behind cache_
    bool leading_ = true;        // the first cache byte is always zero and is not stored
    bool finished_ = false;
    std::vector<std::uint8_t> out_;
};

class RangeDecoder {
public:
    /// Reads the first four bytes. Throws Error(corruption) if the stream is shorter.
    explicit RangeDecoder(std::span<const std::uint8_t> bytes);

    /// Throws Error(corruption) if the stream ends early or the code value
    /// falls outside the table.
    std::uint8_t decode(const FreqTable& t);
    void decode_uniform(std::span<std::uint8_t> out);

    std::size_t consumed() const noexcept { return pos_; }
    /// True when every byte was consumed.
    bool exhausted() const noexcept { return pos_ == bytes_.size(); }
    /// Throws Error(corruption) unless exhausted().
    void finish() const;

private:
    std::uint8_t next();

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::uint32_t code_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
};

/// Sum of -log2(freq/65536) over a symbol/table sequence, in bits.
double ideal_bits(std::span<const std::uint8_t> symbols, std::span<const FreqTable> tables);

}  // namespace fade::coder
