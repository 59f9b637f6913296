#pragma once

#include <cstdint>
#include <span>

#include "fade/model/predictor.hpp"

namespace fade::cspp {

/// Split of a file into B equal-length sub-streams; stream k covers bytes
/// [k * L_s, (k + 1) * L_s). Positions at or past the end of the file are
/// zero padding: fed to the model, never coded.
struct StreamPartition {
    std::uint64_t original_length = 0;
    std::uint32_t streams = 0;
    std::uint32_t time_steps = 0;
    std::uint64_t stream_length = 0;  // L_s

    /// Halves the requested stream count until B * T <= length (or B == 1).
    static StreamPartition make(std::uint64_t length, std::uint32_t requested_streams,
                                std::uint32_t time_steps);
    /// Rebuilds the partition recorded in a container header.
    static StreamPartition exact(std::uint64_t length, std::uint32_t streams, std::uint32_t time_steps);

    std::uint64_t offset(std::uint32_t k) const noexcept { return std::uint64_t(k) * stream_length; }
    /// Non-padding bytes in stream k.
    std::uint64_t valid_length(std::uint32_t k) const noexcept;
    bool valid(std::uint32_t k, std::uint64_t pos) const noexcept {
        return offset(k) + pos < original_length;
    }
    std::uint64_t pad_length() const noexcept {
        return std::uint64_t(streams) * stream_length - original_length;
    }
    /// Leading symbols per stream coded with the uniform table.
    std::uint64_t warmup_length() const noexcept {
        return stream_length < time_steps ? stream_length : time_steps;
    }
    /// Model steps, one per position T .. L_s - 1.
    std::uint64_t model_steps() const noexcept {
        return stream_length > time_steps ? stream_length - time_steps : 0;
    }
};

/// Context for coding position `pos` of every stream: the previous T bytes,
/// padding read as zero. `data` may be a partially filled output buffer as long
/// as every position before `pos` is final.
void fill_context(std::span<const std::uint8_t> data, const StreamPartition& part, std::uint64_t pos,
                  model::ContextWindow& ctx);

/// Byte at position `pos` of every stream (zero for padding).
void gather_targets(std::span<const std::uint8_t> data, const StreamPartition& part, std::uint64_t pos,
                    std::span<std::uint8_t> targets);

}  // namespace fade::cspp
