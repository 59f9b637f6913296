#include "fade/cspp/partition.hpp"

#include "fade/error.hpp"

namespace fade::cspp {

StreamPartition StreamPartition::make(std::uint64_t length, std::uint32_t requested,
                                      std::uint32_t time_steps) {
    require(requested >= 1, ErrorCode::config, "at least one stream required");
    require(time_steps >= 1, ErrorCode::config, "time_steps must be >= 1");
    if (length == 0) return {0, 0, time_steps, 0};
    std::uint32_t b = requested;
    while (b > 1 && std::uint64_t(b) * time_steps > length) b /= 2;
    return exact(length, b, time_steps);
}

StreamPartition StreamPartition::exact(std::uint64_t length, std::uint32_t streams,
                                       std::uint32_t time_steps) {
    StreamPartition p;
    p.original_length = length;
    p.streams = streams;
    p.time_steps = time_steps;
    if (length == 0) {
        require(streams == 0, ErrorCode::format, "empty input cannot have streams");
        return p;
    }
    require(streams >= 1, ErrorCode::format, "non-empty input needs at least one stream");
    p.stream_length = (length + streams - 1) / streams;
    return p;
}

std::uint64_t StreamPartition::valid_length(std::uint32_t k) const noexcept {
    const std::uint64_t start = offset(k);
    if (start >= original_length) return 0;
    const std::uint64_t rest = original_length - start;
    return rest < stream_length ? rest : stream_length;
}

void fill_context(std::span<const std::uint8_t> data, const StreamPartition& part, std::uint64_t pos,
                  model::ContextWindow& ctx) {
    const std::uint32_t t = part.time_steps;
    if (ctx.streams != part.streams || ctx.steps != t) ctx = model::ContextWindow(part.streams, t);
    for (std::uint32_t k = 0; k < part.streams; ++k) {
        std::uint8_t* row = ctx.row(k);
        const std::uint64_t base = part.offset(k) + pos - t;
        for (std::uint32_t j = 0; j < t; ++j) {
            const std::uint64_t src = base + j;
            row[j] = src < part.original_length ? data[src] : 0;
        }
    }
}

void gather_targets(std::span<const std::uint8_t> data, const StreamPartition& part, std::uint64_t pos,
                    std::span<std::uint8_t> targets) {
    for (std::uint32_t k = 0; k < part.streams; ++k) {
        const std::uint64_t src = part.offset(k) + pos;
        targets[k] = src < part.original_length ? data[src] : 0;
    }
}

}  // namespace fade::cspp
