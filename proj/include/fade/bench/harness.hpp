#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fade/cspp/pipeline.hpp"
#include "fade/model/config.hpp"

namespace fade::bench {

/// One line of a metrics file. Field names in JSON match the member names.
struct MetricsRecord {
    std::uint64_t step = 0;
    double loss = 0;           // nats
    double bits_per_byte = 0;  // loss / ln 2
    double elapsed = 0;        // seconds
    std::string phase;
    double alpha_mean = 0;
    double alpha_min = 0;
    double alpha_max = 0;

    static MetricsRecord from(const cspp::StepRecord& r);
    std::string to_json() const;
    static MetricsRecord from_json(const std::string& line);
};

/// Appends one JSON object per line. Throws Error(io) on failure.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::filesystem::path& path);
    void write(const MetricsRecord& r);
    /// Observer suitable for RunOptions::on_step.
    std::function<void(const cspp::StepRecord&)> observer();

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

/// Compress, decompress and verify one input.
struct RunResult {
    std::uint64_t original_bytes = 0;
    std::uint64_t container_bytes = 0;
    double cr = 0;
    double bits_per_byte = 0;  // 8 * container / original
    double cmp_seconds = 0;
    double decmp_seconds = 0;
    cspp::Throughput tp;
    bool round_trip = false;
    cspp::RunStats compress_stats;
};

RunResult measure(std::span<const std::uint8_t> data, const model::ModelConfig& cfg,
                  const cspp::RunOptions& opts = {});

enum class SweepParameter { workers, batch, cache_dim, ffn_dim };

/// Accepts workers, batch, cache_dim (or Cache_dim) and ffn_dim (or FNR_dim).
SweepParameter parse_sweep_parameter(const std::string& name);
const char* to_string(SweepParameter p) noexcept;

struct SweepSpec {
    SweepParameter parameter = SweepParameter::workers;
    std::vector<std::uint32_t> values;
    std::vector<std::uint8_t> corpus;
    std::uint32_t repetitions = 1;
    model::ModelConfig base;
    cspp::RunOptions options;
    double omega = 0.5;
};

struct SweepRow {
    std::uint32_t value = 0;
    bool ok = false;
    std::string error;
    double cr = 0;
    double cmp_tp = 0;
    double decmp_tp = 0;
    double total_tp = 0;
    std::optional<double> score;

    std::string to_json(SweepParameter p) const;
};

/// One full compress + decompress per value (times averaged over repetitions),
/// same seed for every value. A failing value is recorded and the sweep
/// continues. Scores normalize CR and total throughput over the successful
/// rows; a component with no spread contributes its full weight.
std::vector<SweepRow> run_sweep(const SweepSpec& spec);

std::string render_sweep_table(const std::vector<SweepRow>& rows, SweepParameter p);

struct AblationResult {
    model::Variant variant = model::Variant::full;
    std::uint64_t container_bytes = 0;
    double cr = 0;
    std::vector<double> losses;  // per step, nats
    double final_quarter_nll = 0;
};

/// Compresses the corpus once per variant with the same seed and step budget.
std::vector<AblationResult> ablation_harness(std::span<const std::uint8_t> corpus,
                                             const model::ModelConfig& base,
                                             std::span<const model::Variant> variants,
                                             const cspp::RunOptions& opts = {});

/// Mean of the last quarter (at least one element). Throws on empty input.
double final_quarter_mean(std::span<const double> values);

/// Means of consecutive windows; a trailing partial window is kept.
std::vector<double> windowed_mean(std::span<const double> values, std::size_t window);

}  // namespace fade::bench
