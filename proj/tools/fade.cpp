// fade: command-line front end.
//
//   fade compress <in> <out> [--no-pipeline] [--workers N] [--batch B] [--seed S] [--metrics PATH] ...
//   fade decompress <in> <out> [--workers N] [--metrics PATH]
//   fade inspect <in>
//   fade bench <corpus-dir> [--sweep PARAM --values a,b,c] [--jsonl PATH] ...
//
// Exit codes: 0 ok, 1 io, 2 format/version/corruption, 3 checksum,
// 4 model divergence, 5 usage or invalid configuration.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "fade/bench/analysis.hpp"
#include "fade/bench/harness.hpp"
#include "fade/container/format.hpp"
#include "fade/container/metrics.hpp"
#include "fade/cspp/pipeline.hpp"
#include "fade/error.hpp"

namespace fs = std::filesystem;
using namespace fade;

namespace {

int exit_code(ErrorCode c) {
    switch (c) {
        case ErrorCode::format:
        case ErrorCode::version:
        case ErrorCode::corruption: return 2;
        case ErrorCode::checksum: return 3;
        case ErrorCode::divergence: return 4;
        case ErrorCode::io: return 1;
        case ErrorCode::dimension:
        case ErrorCode::config:
        case ErrorCode::usage: return 5;
    }
    return 1;
}

struct ModelOverrides {
    std::optional<std::uint32_t> time_steps, embed_dim, cache_dim, hgr_dim, ffn_dim, batch, conv_kernel;
    std::optional<double> lr, beta1, beta2, eps;
    std::optional<std::uint64_t> seed;
    std::string variant;

    void add_to(CLI::App* app) {
        app->add_option("--batch,-b", batch, "number of parallel streams B");
        app->add_option("--time-steps", time_steps, "context length T");
        app->add_option("--embed-dim", embed_dim, "embedding width D");
        app->add_option("--cache-dim", cache_dim, "rolling cache width");
        app->add_option("--hgr-dim", hgr_dim, "reduced width of the coarse refiner");
        app->add_option("--ffn-dim", ffn_dim, "expansion width of the fine refiner");
        app->add_option("--conv-kernel", conv_kernel, "local stream kernel size");
        app->add_option("--lr", lr, "Adam learning rate");
        app->add_option("--beta1", beta1);
        app->add_option("--beta2", beta2);
        app->add_option("--eps", eps);
        app->add_option("--seed", seed, "weight initialization seed");
        app->add_option("--variant", variant, "full, mlp_only, cnn_only, dmd, dmd+cci_nogate, dmd+cci_gate");
    }

    model::ModelConfig apply(model::ModelConfig c) const {
        auto set = [](auto& field, const auto& v) {
            if (v) field = *v;
        };
        set(c.time_steps, time_steps);
        set(c.embed_dim, embed_dim);
        set(c.cache_dim, cache_dim);
        set(c.hgr_dim, hgr_dim);
        set(c.ffn_dim, ffn_dim);
        set(c.batch, batch);
        set(c.conv_kernel, conv_kernel);
        set(c.lr, lr);
        set(c.beta1, beta1);
        set(c.beta2, beta2);
        set(c.eps, eps);
        set(c.seed, seed);
        if (!variant.empty()) {
            const auto v = model::parse_variant(variant);
            if (!v) fail(ErrorCode::usage, "unknown variant '" + variant + "'");
            c.variant = *v;
        }
        c.workers = 1;
        c.validate();
        return c;
    }
};

void print_warnings(const cspp::RunStats& st) {
    for (const auto& w : st.warnings) std::cerr << "warning: " << w << '\n';
}

std::string header_text(const container::Header& h, std::uint64_t file_size) {
    nlohmann::ordered_json j;
    j["format_version"] = h.version;
    j["original_length"] = h.original_length;
    j["container_length"] = file_size;
    j["compression_ratio"] = file_size ? double(h.original_length) / double(file_size) : 0.0;
    j["streams"] = h.streams;
    j["time_steps"] = h.time_steps;
    j["embed_dim"] = h.embed_dim;
    j["cache_dim"] = h.cache_dim;
    j["hgr_dim"] = h.hgr_dim;
    j["ffn_dim"] = h.ffn_dim;
    j["conv_kernel"] = h.conv_kernel;
    j["variant"] = std::string(model::to_string(model::Variant(h.variant)));
    j["lr"] = h.lr;
    j["beta1"] = h.beta1;
    j["beta2"] = h.beta2;
    j["eps"] = h.eps;
    j["seed"] = h.seed;
    std::ostringstream fp;
    fp << std::hex << std::setw(16) << std::setfill('0') << h.build_fingerprint;
    j["build_fingerprint"] = fp.str();
    j["same_build"] = h.build_fingerprint == container::build_fingerprint();
    j["header_crc32"] = h.header_crc;
    j["payload_crc32"] = h.payload_crc;
    j["stream_lengths"] = h.stream_lengths;
    return j.dump(2);
}

std::vector<fs::path> corpus_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) fail(ErrorCode::io, "not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(ErrorCode::usage, "no files in " + dir.string());
    return files;
}

std::vector<std::uint32_t> parse_values(const std::string& csv) {
    std::vector<std::uint32_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(std::uint32_t(v));
        } catch (const std::exception&) {
            fail(ErrorCode::usage, "bad sweep value '" + item + "'");
        }
    }
    if (out.empty()) fail(ErrorCode::usage, "empty sweep value list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fade: learned lossless compressor"};
    app.require_subcommand(1);

    std::string in, out, metrics, jsonl, sweep, values;
    bool no_pipeline = false;
    std::uint32_t workers = 1, repetitions = 1;
    double coder_delay_us = 0;
    ModelOverrides ov;

    auto* cmp = app.add_subcommand("compress", "compress a file");
    cmp->add_option("input", in)->required();
    cmp->add_option("output", out)->required();
    cmp->add_flag("--no-pipeline", no_pipeline, "run model and coder sequentially");
    cmp->add_option("--workers,-w", workers, "accepted for symmetry; compression uses one model thread");
    cmp->add_option("--metrics", metrics, "write per-step records (JSON lines)");
    cmp->add_option("--coder-delay-us", coder_delay_us, "extra coder latency per step (benchmarking)");
    ov.add_to(cmp);

    auto* dec = app.add_subcommand("decompress", "decompress a container");
    dec->add_option("input", in)->required();
    dec->add_option("output", out)->required();
    dec->add_option("--workers,-w", workers, "entropy-decoding workers");
    dec->add_option("--metrics", metrics, "write per-step records (JSON lines)");
    dec->add_option("--coder-delay-us", coder_delay_us, "extra coder latency per step (benchmarking)");

    auto* ins = app.add_subcommand("inspect", "print a container header");
    ins->add_option("input", in)->required();

    auto* bench = app.add_subcommand("bench", "measure every file in a directory, or sweep one parameter");
    bench->add_option("corpus", in, "directory of input files")->required();
    bench->add_option("--workers,-w", workers, "decoding workers");
    bench->add_flag("--no-pipeline", no_pipeline);
    bench->add_option("--sweep", sweep, "workers, batch, cache_dim or ffn_dim");
    bench->add_option("--values", values, "comma-separated sweep values");
    bench->add_option("--repetitions", repetitions, "timed runs per sweep value");
    bench->add_option("--jsonl", jsonl, "write rows as JSON lines");
    bench->add_option("--coder-delay-us", coder_delay_us, "extra coder latency per step");
    ov.add_to(bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 5;
    }

    try {
        cspp::RunOptions opts;
        opts.pipeline = !no_pipeline;
        opts.workers = std::max<std::uint32_t>(1, workers);
        if (coder_delay_us < 0) fail(ErrorCode::usage, "coder delay must be non-negative");
        opts.coder_delay = std::chrono::nanoseconds(std::llround(coder_delay_us * 1000));
        std::optional<bench::MetricsWriter> writer;
        if (!metrics.empty()) {
            writer.emplace(metrics);
            opts.on_step = writer->observer();
        }

        if (*cmp) {
            const auto cfg = ov.apply(model::ModelConfig{});
            const auto data = container::read_file(in);
            cspp::RunStats st;
            const auto c = cspp::compress(data, cfg, opts, &st);
            container::write_container(out, c);
            const auto size = fs::file_size(out);
            std::cerr << in << ": " << data.size() << " -> " << size << " bytes";
            if (!data.empty()) std::cerr << std::fixed << std::setprecision(3) << " (CR " << double(data.size()) / double(size) << ")";
            std::cerr << " in " << std::setprecision(2) << st.seconds << " s\n";
        } else if (*dec) {
            const auto c = container::read_container(in);
            cspp::RunStats st;
            const auto data = cspp::decompress(c, opts, &st);
            print_warnings(st);
            container::write_file(out, data);
        } else if (*ins) {
            const auto bytes = container::read_file(in);
            const auto h = container::parse_header(bytes);
            std::cout << header_text(h, bytes.size()) << '\n';
        } else if (*bench) {
            const auto cfg = ov.apply(model::ModelConfig{});
            const auto files = corpus_files(in);
            std::optional<std::ofstream> js;
            if (!jsonl.empty()) {
                js.emplace(jsonl);
                if (!*js) fail(ErrorCode::io, "cannot create " + jsonl);
            }
            if (!sweep.empty()) {
                bench::SweepSpec spec;
                spec.parameter = bench::parse_sweep_parameter(sweep);
                spec.values = parse_values(values);
                spec.repetitions = repetitions;
                spec.base = cfg;
                spec.options = opts;
                for (const auto& f : files) {
                    const auto d = container::read_file(f);
                    spec.corpus.insert(spec.corpus.end(), d.begin(), d.end());
                }
                const auto rows = bench::run_sweep(spec);
                std::cout << bench::render_sweep_table(rows, spec.parameter);
                if (js)
                    for (const auto& r : rows) *js << r.to_json(spec.parameter) << '\n';
            } else {
                std::cout << std::left << std::setw(24) << "file" << std::right << std::setw(10) << "bytes"
                          << std::setw(8) << "H0" << std::setw(8) << "bpb" << std::setw(8) << "CR" << std::setw(12)
                          << "cmp KB/min" << std::setw(14) << "decmp KB/min" << std::setw(14) << "total KB/min"
                          << '\n';
                for (const auto& f : files) {
                    const auto d = container::read_file(f);
                    const auto r = bench::measure(d, cfg, opts);
                    if (!r.round_trip) fail(ErrorCode::corruption, "round trip failed for " + f.string());
                    const double h0 = bench::order0_entropy(d);
                    std::cout << std::left << std::setw(24) << f.filename().string() << std::right << std::setw(10)
                              << d.size() << std::fixed << std::setprecision(3) << std::setw(8) << h0 << std::setw(8)
                              << r.bits_per_byte << std::setw(8) << r.cr << std::setprecision(1) << std::setw(12)
                              << r.tp.cmp_tp << std::setw(14) << r.tp.decmp_tp << std::setw(14) << r.tp.total_tp
                              << '\n';
                    if (js) {
                        nlohmann::ordered_json j{{"file", f.filename().string()},
                                                 {"bytes", d.size()},
                                                 {"order0_entropy", h0},
                                                 {"bits_per_byte", r.bits_per_byte},
                                                 {"cr", r.cr},
                                                 {"cmp_tp", r.tp.cmp_tp},
                                                 {"decmp_tp", r.tp.decmp_tp},
                                                 {"total_tp", r.tp.total_tp}};
                        *js << j.dump() << '\n';
                    }
                }
            }
        }
    } catch (const Error& e) {
        std::cerr << "fade: " << to_string(e.code()) << " error: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "fade: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
