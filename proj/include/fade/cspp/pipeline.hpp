#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fade/container/format.hpp"
#include "fade/cspp/partition.hpp"
#include "fade/cspp/pingpong.hpp"
#include "fade/model/config.hpp"
#include "fade/model/predictor.hpp"

namespace fade::cspp {

enum class Phase : std::uint8_t { compress, decompress };

inline const char* to_string(Phase p) noexcept { return p == Phase::compress ? "compress" : "decompress"; }

/// Reported after every model step, from the thread that owns the model.
struct StepRecord {
    std::uint64_t step = 0;
    double loss = 0;     // nats, mean over all B rows
    double elapsed = 0;  // seconds since the run started
    Phase phase = Phase::compress;
    model::RouterStats router;
};

struct RunOptions {
    bool pipeline = true;       // compression: producer/consumer threads
    std::uint32_t workers = 1;  // decompression: entropy-decoding workers
    /// Extra latency added to the coder stage of every step. Decoding workers
    /// each wait their share of it. Used to balance stages in benchmarks.
    std::chrono::nanoseconds coder_delay{0};
    bool record_buffer_events = false;
    std::function<void(const StepRecord&)> on_step;
};

struct RunStats {
    double seconds = 0;
    double model_seconds = 0;  // predict + quantize + train (compression), predict + train (decompression)
    double coder_seconds = 0;  // entropy coding including any injected delay
    std::uint64_t steps = 0;
    std::uint32_t streams = 0;
    std::uint32_t workers = 0;  // decoding workers actually used
    std::vector<double> losses;
    std::vector<model::RouterStats> router;
    std::vector<SlotEvent> buffer_events;
    std::vector<std::string> warnings;
};

/// Reference executor: predict, quantize, encode, train, strictly in order.
container::Container run_serial_compress(std::span<const std::uint8_t> data, const model::ModelConfig& cfg,
                                         const RunOptions& opts = {}, RunStats* stats = nullptr);

/// Model thread and coder thread joined by a PingPongBuffer. Produces the same
/// container as run_serial_compress.
container::Container run_pipelined_compress(std::span<const std::uint8_t> data, const model::ModelConfig& cfg,
                                            const RunOptions& opts = {}, RunStats* stats = nullptr);

std::vector<std::uint8_t> run_serial_decompress(const container::Container& c, const RunOptions& opts = {},
                                                RunStats* stats = nullptr);

/// One coordinator owns the model; `workers` threads decode disjoint stream
/// ranges between two barriers per step. Uses min(workers, B) threads.
std::vector<std::uint8_t> run_parallel_decompress(const container::Container& c, std::uint32_t workers,
                                                  const RunOptions& opts = {}, RunStats* stats = nullptr);

/// Dispatches on opts.pipeline.
container::Container compress(std::span<const std::uint8_t> data, const model::ModelConfig& cfg,
                              const RunOptions& opts = {}, RunStats* stats = nullptr);

/// Serial for opts.workers <= 1, parallel otherwise. Adds a warning to stats
/// when the container came from a different build.
std::vector<std::uint8_t> decompress(const container::Container& c, const RunOptions& opts = {},
                                     RunStats* stats = nullptr);

struct Throughput {
    double cmp_tp = 0;  // KB/min
    double decmp_tp = 0;
    double total_tp = 0;
};

/// KB = 1024 bytes. total = 2 * KB / (cmp_minutes + decmp_minutes).
/// Throws Error(usage) for empty input or non-positive times.
Throughput throughput_report(std::uint64_t input_bytes, double cmp_seconds, double decmp_seconds);

/// Combines two per-phase throughputs the same way as throughput_report.
double total_throughput(double cmp_tp, double decmp_tp);

}  // namespace fade::cspp
