#include "fade/bench/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "fade/container/metrics.hpp"
#include "fade/error.hpp"

namespace fade::bench {

using nlohmann::json;

MetricsRecord MetricsRecord::from(const cspp::StepRecord& r) {
    MetricsRecord m;
    m.step = r.step;
    m.loss = r.loss;
    m.bits_per_byte = r.loss / std::numbers::ln2;
    m.elapsed = r.elapsed;
    m.phase = cspp::to_string(r.phase);
    m.alpha_mean = r.router.mean;
    m.alpha_min = r.router.min;
    m.alpha_max = r.router.max;
    return m;
}

std::string MetricsRecord::to_json() const {
    json j{{"step", step},
           {"loss", loss},
           {"bits_per_byte", bits_per_byte},
           {"elapsed", elapsed},
           {"phase", phase},
           {"alpha_mean", alpha_mean},
           {"alpha_min", alpha_min},
           {"alpha_max", alpha_max}};
    return j.dump();
}

MetricsRecord MetricsRecord::from_json(const std::string& line) {
    try {
        const json j = json::parse(line);
        MetricsRecord m;
        m.step = j.at("step").get<std::uint64_t>();
        m.loss = j.at("loss").get<double>();
        m.bits_per_byte = j.at("bits_per_byte").get<double>();
        m.elapsed = j.at("elapsed").get<double>();
        m.phase = j.at("phase").get<std::string>();
        m.alpha_mean = j.at("alpha_mean").get<double>();
        m.alpha_min = j.at("alpha_min").get<double>();
        m.alpha_max = j.at("alpha_max").get<double>();
        return m;
    } catch (const json::exception& e) {
        fail(ErrorCode::format, std::string("bad metrics record: ") + e.what());
    }
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::trunc) {
    if (!out_) fail(ErrorCode::io, "cannot create " + path.string());
}

void MetricsWriter::write(const MetricsRecord& r) {
    out_ << r.to_json() << '\n';
    if (!out_) fail(ErrorCode::io, "error writing " + path_.string());
}

std::function<void(const cspp::StepRecord&)> MetricsWriter::observer() {
    return [this](const cspp::StepRecord& r) { write(MetricsRecord::from(r)); };
}

RunResult measure(std::span<const std::uint8_t> data, const model::ModelConfig& cfg,
                  const cspp::RunOptions& opts) {
    RunResult r;
    r.original_bytes = data.size();
    const auto c = cspp::compress(data, cfg, opts, &r.compress_stats);
    const auto bytes = container::serialize(c);
    r.container_bytes = bytes.size();
    r.cmp_seconds = r.compress_stats.seconds;
    cspp::RunStats ds;
    const auto parsed = container::parse(bytes);
    const auto out = cspp::decompress(parsed, opts, &ds);
    r.decmp_seconds = ds.seconds;
    r.round_trip = std::equal(out.begin(), out.end(), data.begin(), data.end());
    if (!data.empty()) {
        r.cr = container::compression_ratio(data.size(), bytes.size());
        r.bits_per_byte = 8.0 * double(bytes.size()) / double(data.size());
        r.tp = cspp::throughput_report(data.size(), std::max(r.cmp_seconds, 1e-9),
                                       std::max(r.decmp_seconds, 1e-9));
    }
    return r;
}

SweepParameter parse_sweep_parameter(const std::string& name) {
    if (name == "workers") return SweepParameter::workers;
    if (name == "batch") return SweepParameter::batch;
    if (name == "cache_dim" || name == "Cache_dim") return SweepParameter::cache_dim;
    if (name == "ffn_dim" || name == "FNR_dim") return SweepParameter::ffn_dim;
    fail(ErrorCode::usage, "unknown sweep parameter '" + name + "'");
}

const char* to_string(SweepParameter p) noexcept {
    switch (p) {
        case SweepParameter::workers: return "workers";
        case SweepParameter::batch: return "batch";
        case SweepParameter::cache_dim: return "cache_dim";
        case SweepParameter::ffn_dim: return "ffn_dim";
    }
    return "?";
}

std::string SweepRow::to_json(SweepParameter p) const {
    json j{{"parameter", to_string(p)}, {"value", value}, {"ok", ok}};
    if (ok) {
        j["cr"] = cr;
        j["cmp_tp"] = cmp_tp;
        j["decmp_tp"] = decmp_tp;
        j["total_tp"] = total_tp;
        j["score"] = score ? json(*score) : json(nullptr);
    } else {
        j["error"] = error;
    }
    return j.dump();
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
    require(spec.repetitions >= 1, ErrorCode::usage, "sweep needs at least one repetition");
    require(!spec.corpus.empty(), ErrorCode::usage, "sweep corpus is empty");
    std::vector<SweepRow> rows;
    for (std::uint32_t value : spec.values) {
        SweepRow row;
        row.value = value;
        try {
            model::ModelConfig cfg = spec.base;
            cspp::RunOptions opts = spec.options;
            switch (spec.parameter) {
                case SweepParameter::workers: opts.workers = value; break;
                case SweepParameter::batch: cfg.batch = value; break;
                case SweepParameter::cache_dim: cfg.cache_dim = value; break;
                case SweepParameter::ffn_dim: cfg.ffn_dim = value; break;
            }
            cfg.workers = 1;
            cfg.validate();
            double tc = 0, td = 0;
            for (std::uint32_t rep = 0; rep < spec.repetitions; ++rep) {
                const RunResult r = measure(spec.corpus, cfg, opts);
                if (!r.round_trip) fail(ErrorCode::corruption, "round trip mismatch");
                row.cr = r.cr;
                tc += r.cmp_seconds;
                td += r.decmp_seconds;
            }
            const auto tp = cspp::throughput_report(spec.corpus.size(), tc / spec.repetitions,
                                                    td / spec.repetitions);
            row.cmp_tp = tp.cmp_tp;
            row.decmp_tp = tp.decmp_tp;
            row.total_tp = tp.total_tp;
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        rows.push_back(row);
    }

    double cr_lo = INFINITY, cr_hi = -INFINITY, tp_lo = INFINITY, tp_hi = -INFINITY;
    for (const auto& r : rows) {
        if (!r.ok) continue;
        cr_lo = std::min(cr_lo, r.cr);
        cr_hi = std::max(cr_hi, r.cr);
        tp_lo = std::min(tp_lo, r.total_tp);
        tp_hi = std::max(tp_hi, r.total_tp);
    }
    for (auto& r : rows) {
        if (!r.ok) continue;
        const double ncr = cr_hi > cr_lo ? (r.cr - cr_lo) / (cr_hi - cr_lo) : 1.0;
        const double ntp = tp_hi > tp_lo ? (r.total_tp - tp_lo) / (tp_hi - tp_lo) : 1.0;
        r.score = container::weighted_score(ncr, ntp, {0, 1, 0, 1}, spec.omega);
    }
    return rows;
}

std::string render_sweep_table(const std::vector<SweepRow>& rows, SweepParameter p) {
    std::ostringstream os;
    os << std::left << std::setw(10) << to_string(p) << std::right << std::setw(9) << "CR" << std::setw(12)
       << "cmp KB/min" << std::setw(14) << "decmp KB/min" << std::setw(14) << "total KB/min" << std::setw(8)
       << "score" << '\n';
    os << std::fixed;
    for (const auto& r : rows) {
        os << std::left << std::setw(10) << r.value << std::right;
        if (!r.ok) {
            os << "  failed: " << r.error << '\n';
            continue;
        }
        os << std::setprecision(3) << std::setw(9) << r.cr << std::setprecision(1) << std::setw(12) << r.cmp_tp
           << std::setw(14) << r.decmp_tp << std::setw(14) << r.total_tp << std::setprecision(3) << std::setw(8)
           << (r.score ? *r.score : 0.0) << '\n';
    }
    return os.str();
}

double final_quarter_mean(std::span<const double> values) {
    require(!values.empty(), ErrorCode::usage, "no values");
    const std::size_t n = std::max<std::size_t>(1, values.size() / 4);
    double total = 0;
    for (std::size_t i = values.size() - n; i < values.size(); ++i) total += values[i];
    return total / double(n);
}

std::vector<double> windowed_mean(std::span<const double> values, std::size_t window) {
    require(window > 0, ErrorCode::usage, "window must be positive");
    std::vector<double> out;
    for (std::size_t pos = 0; pos < values.size(); pos += window) {
        const std::size_t n = std::min(window, values.size() - pos);
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) total += values[pos + i];
        out.push_back(total / double(n));
    }
    return out;
}

std::vector<AblationResult> ablation_harness(std::span<const std::uint8_t> corpus,
                                             const model::ModelConfig& base,
                                             std::span<const model::Variant> variants,
                                             const cspp::RunOptions& opts) {
    require(!corpus.empty(), ErrorCode::usage, "ablation corpus is empty");
    std::vector<AblationResult> out;
    for (model::Variant v : variants) {
        model::ModelConfig cfg = base;
        cfg.variant = v;
        cspp::RunStats st;
        const auto c = cspp::compress(corpus, cfg, opts, &st);
        AblationResult r;
        r.variant = v;
        r.container_bytes = container::serialize(c).size();
        r.cr = container::compression_ratio(corpus.size(), r.container_bytes);
        r.losses = std::move(st.losses);
        r.final_quarter_nll = r.losses.empty() ? 0.0 : final_quarter_mean(r.losses);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace fade::bench
