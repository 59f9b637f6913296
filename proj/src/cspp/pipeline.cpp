#include "fade/cspp/pipeline.hpp"

#include <barrier>
#include <exception>
#include <optional>
#include <thread>

#include "fade/coder/range_coder.hpp"
#include "fade/error.hpp"

namespace fade::cspp {

namespace {

using Clock = std::chrono::steady_clock;
using model::Predictor;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void wait_for(std::chrono::nanoseconds d) {
    if (d.count() > 0) std::this_thread::sleep_for(d);
}

/// Model configuration actually run: B after reduction, one compute context.
model::ModelConfig effective_config(const model::ModelConfig& cfg, std::uint32_t streams) {
    model::ModelConfig c = cfg;
    c.batch = streams;
    c.workers = 1;
    return c;
}

/// One step's hand-off from model to coder.
struct StepBatch {
    std::uint64_t pos = 0;
    std::vector<coder::FreqTable> tables;
    std::vector<std::uint8_t> symbols;
};

void quantize_rows(const model::ProbBatch<float>& probs, const StreamPartition& part, std::uint64_t pos,
                   std::uint32_t lo, std::uint32_t hi, std::vector<coder::FreqTable>& tables) {
    for (std::uint32_t k = lo; k < hi; ++k)
        if (part.valid(k, pos)) coder::quantize(probs.row(k), tables[k]);
}

void encode_warmup(std::span<const std::uint8_t> data, const StreamPartition& part,
                   std::vector<coder::RangeEncoder>& enc) {
    const std::uint64_t w = part.warmup_length();
    for (std::uint32_t k = 0; k < part.streams; ++k) {
        const std::uint64_t n = std::min(w, part.valid_length(k));
        enc[k].encode_uniform(data.subspan(part.offset(k), n));
    }
}

void encode_step(const StepBatch& b, const StreamPartition& part, std::vector<coder::RangeEncoder>& enc) {
    for (std::uint32_t k = 0; k < part.streams; ++k)
        if (part.valid(k, b.pos)) enc[k].encode(b.symbols[k], b.tables[k]);
}

container::Container finish_container(const model::ModelConfig& cfg, const StreamPartition& part,
                                      std::vector<coder::RangeEncoder>& enc) {
    container::Container c;
    c.header = container::Header::from_config(cfg, part.original_length, part.streams);
    c.bitstreams.resize(part.streams);
    // Streams made only of padding carry no bytes at all.
    for (std::uint32_t k = 0; k < part.streams; ++k)
        if (part.valid_length(k) > 0) c.bitstreams[k] = enc[k].finish();
    c.header.stream_lengths.clear();
    for (const auto& b : c.bitstreams) c.header.stream_lengths.push_back(b.size());
    return c;
}

void record_step(const RunOptions& opts, RunStats& st, Phase phase, std::uint64_t step, double loss,
                 const model::RouterStats& router, Clock::time_point t0) {
    st.losses.push_back(loss);
    st.router.push_back(router);
    st.steps = step + 1;
    if (opts.on_step) opts.on_step({step, loss, seconds_since(t0), phase, router});
}

container::Container empty_container(const model::ModelConfig& cfg) {
    container::Container c;
    c.header = container::Header::from_config(cfg, 0, 0);
    return c;
}

}  // namespace

container::Container run_serial_compress(std::span<const std::uint8_t> data, const model::ModelConfig& cfg,
                                         const RunOptions& opts, RunStats* stats) {
    cfg.validate();
    RunStats local;
    RunStats& st = stats ? *stats : local;
    st = RunStats{};
    const auto t0 = Clock::now();
    const StreamPartition part = StreamPartition::make(data.size(), cfg.batch, cfg.time_steps);
    st.streams = part.streams;
    if (part.streams == 0) return empty_container(cfg);

    const model::ModelConfig run_cfg = effective_config(cfg, part.streams);
    Predictor<float> predictor(run_cfg);
    std::vector<coder::RangeEncoder> enc(part.streams);
    model::ContextWindow ctx(part.streams, part.time_steps);
    StepBatch batch{0, std::vector<coder::FreqTable>(part.streams), std::vector<std::uint8_t>(part.streams)};

    auto tc = Clock::now();
    encode_warmup(data, part, enc);
    st.coder_seconds += seconds_since(tc);

    for (std::uint64_t s = 0; s < part.model_steps(); ++s) {
        const std::uint64_t pos = part.time_steps + s;
        const auto tm = Clock::now();
        fill_context(data, part, pos, ctx);
        gather_targets(data, part, pos, batch.symbols);
        const auto& probs = predictor.predict(ctx);
        batch.pos = pos;
        quantize_rows(probs, part, pos, 0, part.streams, batch.tables);
        st.model_seconds += seconds_since(tm);

        tc = Clock::now();
        encode_step(batch, part, enc);
        wait_for(opts.coder_delay);
        st.coder_seconds += seconds_since(tc);

        const auto tt = Clock::now();
        const double loss = predictor.train_step(batch.symbols);
        st.model_seconds += seconds_since(tt);
        record_step(opts, st, Phase::compress, s, loss, predictor.router_stats(), t0);
    }
    auto c = finish_container(cfg, part, enc);
    st.seconds = seconds_since(t0);
    return c;
}

container::Container run_pipelined_compress(std::span<const std::uint8_t> data, const model::ModelConfig& cfg,
                                            const RunOptions& opts, RunStats* stats) {
    cfg.validate();
    RunStats local;
    RunStats& st = stats ? *stats : local;
    st = RunStats{};
    const auto t0 = Clock::now();
    const StreamPartition part = StreamPartition::make(data.size(), cfg.batch, cfg.time_steps);
    st.streams = part.streams;
    if (part.streams == 0) return empty_container(cfg);

    const model::ModelConfig run_cfg = effective_config(cfg, part.streams);
    Predictor<float> predictor(run_cfg);
    std::vector<coder::RangeEncoder> enc(part.streams);
    PingPongBuffer<StepBatch> buffer(
        StepBatch{0, std::vector<coder::FreqTable>(part.streams), std::vector<std::uint8_t>(part.streams)},
        opts.record_buffer_events);

    std::exception_ptr consumer_error;
    double coder_seconds = 0;
    std::jthread consumer([&] {
        try {
            auto tc = Clock::now();
            encode_warmup(data, part, enc);
            coder_seconds += seconds_since(tc);
            while (StepBatch* b = buffer.acquire_read()) {
                tc = Clock::now();
                encode_step(*b, part, enc);
                wait_for(opts.coder_delay);
                coder_seconds += seconds_since(tc);
                buffer.release();
            }
        } catch (...) {
            consumer_error = std::current_exception();
            buffer.abort();
        }
    });

    std::exception_ptr producer_error;
    try {
        model::ContextWindow ctx(part.streams, part.time_steps);
        std::vector<std::uint8_t> targets(part.streams);
        for (std::uint64_t s = 0; s < part.model_steps(); ++s) {
            const std::uint64_t pos = part.time_steps + s;
            auto tm = Clock::now();
            fill_context(data, part, pos, ctx);
            gather_targets(data, part, pos, targets);
            const auto& probs = predictor.predict(ctx);
            st.model_seconds += seconds_since(tm);

            StepBatch* slot = buffer.acquire_write();
            if (!slot) break;  // consumer failed
            tm = Clock::now();
            slot->pos = pos;
            slot->symbols = targets;
            quantize_rows(probs, part, pos, 0, part.streams, slot->tables);
            buffer.publish();

            const double loss = predictor.train_step(targets);
            st.model_seconds += seconds_since(tm);
            record_step(opts, st, Phase::compress, s, loss, predictor.router_stats(), t0);
        }
        buffer.close();
    } catch (...) {
        producer_error = std::current_exception();
        buffer.abort();
    }
    consumer.join();
    st.coder_seconds = coder_seconds;
    st.buffer_events = buffer.events();
    if (producer_error) std::rethrow_exception(producer_error);
    if (consumer_error) std::rethrow_exception(consumer_error);

    auto c = finish_container(cfg, part, enc);
    st.seconds = seconds_since(t0);
    return c;
}

namespace {

/// Decoding state shared by the serial and parallel paths.
struct DecodeSession {
    StreamPartition part;
    model::ModelConfig cfg;
    std::vector<std::optional<coder::RangeDecoder>> dec;
    std::vector<coder::FreqTable> tables;
    std::vector<std::uint8_t> targets;
    std::vector<std::uint8_t> out;

    explicit DecodeSession(const container::Container& c) {
        const auto& h = c.header;
        part = StreamPartition::exact(h.original_length, h.streams, h.time_steps);
        out.assign(part.original_length, 0);
        if (part.streams == 0) return;
        cfg = h.model_config();
        cfg.validate();
        require(c.bitstreams.size() == part.streams, ErrorCode::format, "bitstream count does not match header");
        dec.resize(part.streams);
        for (std::uint32_t k = 0; k < part.streams; ++k) {
            const bool has_data = part.valid_length(k) > 0;
            if (has_data != !c.bitstreams[k].empty())
                fail(ErrorCode::corruption, "stream " + std::to_string(k) + ": unexpected bitstream length");
            if (has_data) {
                try {
                    dec[k].emplace(c.bitstreams[k]);
                } catch (const Error& e) {
                    fail(ErrorCode::corruption, "stream " + std::to_string(k) + ": " + e.what());
                }
            }
        }
        tables.resize(part.streams);
        targets.assign(part.streams, 0);
    }

    void warmup(std::uint32_t lo, std::uint32_t hi) {
        const std::uint64_t w = part.warmup_length();
        for (std::uint32_t k = lo; k < hi; ++k) {
            const std::uint64_t n = std::min(w, part.valid_length(k));
            if (n == 0) continue;
            try {
                dec[k]->decode_uniform(std::span(out).subspan(part.offset(k), n));
            } catch (const Error& e) {
                fail(ErrorCode::corruption, "stream " + std::to_string(k) + ", warmup: " + e.what());
            }
        }
    }

    void decode(const model::ProbBatch<float>& probs, std::uint64_t step, std::uint32_t lo, std::uint32_t hi) {
        const std::uint64_t pos = part.time_steps + step;
        quantize_rows(probs, part, pos, lo, hi, tables);
        for (std::uint32_t k = lo; k < hi; ++k) {
            if (!part.valid(k, pos)) {
                targets[k] = 0;
                continue;
            }
            try {
                const std::uint8_t sym = dec[k]->decode(tables[k]);
                out[part.offset(k) + pos] = sym;
                targets[k] = sym;
            } catch (const Error& e) {
                fail(ErrorCode::corruption,
                     "stream " + std::to_string(k) + ", step " + std::to_string(step) + ": " + e.what());
            }
        }
    }

    void finish(std::uint32_t lo, std::uint32_t hi) const {
        for (std::uint32_t k = lo; k < hi; ++k) {
            if (!dec[k]) continue;
            try {
                dec[k]->finish();
            } catch (const Error& e) {
                fail(ErrorCode::corruption, "stream " + std::to_string(k) + ": " + e.what());
            }
        }
    }
};

std::chrono::nanoseconds delay_share(std::chrono::nanoseconds d, std::uint32_t owned, std::uint32_t streams) {
    return std::chrono::nanoseconds(d.count() * std::int64_t(owned) / std::int64_t(streams));
}

}  // namespace

std::vector<std::uint8_t> run_serial_decompress(const container::Container& c, const RunOptions& opts,
                                                RunStats* stats) {
    RunStats local;
    RunStats& st = stats ? *stats : local;
    st = RunStats{};
    const auto t0 = Clock::now();
    DecodeSession ses(c);
    const auto& part = ses.part;
    st.streams = part.streams;
    st.workers = 1;
    if (part.streams == 0) return std::move(ses.out);

    Predictor<float> predictor(ses.cfg);
    model::ContextWindow ctx(part.streams, part.time_steps);
    auto tc = Clock::now();
    ses.warmup(0, part.streams);
    st.coder_seconds += seconds_since(tc);
    for (std::uint64_t s = 0; s < part.model_steps(); ++s) {
        const std::uint64_t pos = part.time_steps + s;
        auto tm = Clock::now();
        fill_context(ses.out, part, pos, ctx);
        const auto& probs = predictor.predict(ctx);
        st.model_seconds += seconds_since(tm);

        tc = Clock::now();
        ses.decode(probs, s, 0, part.streams);
        wait_for(opts.coder_delay);
        st.coder_seconds += seconds_since(tc);

        tm = Clock::now();
        const double loss = predictor.train_step(ses.targets);
        st.model_seconds += seconds_since(tm);
        record_step(opts, st, Phase::decompress, s, loss, predictor.router_stats(), t0);
    }
    ses.finish(0, part.streams);
    st.seconds = seconds_since(t0);
    return std::move(ses.out);
}

std::vector<std::uint8_t> run_parallel_decompress(const container::Container& c, std::uint32_t workers,
                                                  const RunOptions& opts, RunStats* stats) {
    require(workers >= 1, ErrorCode::usage, "at least one decoding worker required");
    RunStats local;
    RunStats& st = stats ? *stats : local;
    st = RunStats{};
    const auto t0 = Clock::now();
    DecodeSession ses(c);
    const auto& part = ses.part;
    st.streams = part.streams;
    if (part.streams == 0) {
        st.workers = 0;
        return std::move(ses.out);
    }

    const std::uint32_t n = std::min(workers, part.streams);
    st.workers = n;
    Predictor<float> predictor(ses.cfg);

    // Work published by the coordinator before the first barrier of each step.
    enum class Task { warmup, step, finish, stop };
    Task task = Task::warmup;
    std::uint64_t step = 0;
    const model::ProbBatch<float>* probs = nullptr;
    std::vector<std::exception_ptr> errors(n);

    std::barrier start(std::ptrdiff_t(n) + 1);
    std::barrier done(std::ptrdiff_t(n) + 1);
    std::vector<std::jthread> pool;
    pool.reserve(n);
    for (std::uint32_t w = 0; w < n; ++w) {
        const std::uint32_t lo = std::uint32_t(std::uint64_t(w) * part.streams / n);
        const std::uint32_t hi = std::uint32_t(std::uint64_t(w + 1) * part.streams / n);
        pool.emplace_back([&, w, lo, hi] {
            for (;;) {
                start.arrive_and_wait();
                if (task == Task::stop) return;
                if (!errors[w]) {
                    try {
                        switch (task) {
                            case Task::warmup: ses.warmup(lo, hi); break;
                            case Task::step:
                                ses.decode(*probs, step, lo, hi);
                                wait_for(delay_share(opts.coder_delay, hi - lo, part.streams));
                                break;
                            case Task::finish: ses.finish(lo, hi); break;
                            case Task::stop: break;
                        }
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                }
                done.arrive_and_wait();
            }
        });
    }

    auto run_phase = [&](Task t) {
        task = t;
        start.arrive_and_wait();  // barrier 1: tables published, workers decode
        done.arrive_and_wait();   // barrier 2: every worker finished this step
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    };

    std::exception_ptr failure;
    try {
        auto tc = Clock::now();
        run_phase(Task::warmup);
        st.coder_seconds += seconds_since(tc);
        model::ContextWindow ctx(part.streams, part.time_steps);
        for (std::uint64_t s = 0; s < part.model_steps(); ++s) {
            const std::uint64_t pos = part.time_steps + s;
            auto tm = Clock::now();
            fill_context(ses.out, part, pos, ctx);
            probs = &predictor.predict(ctx);
            step = s;
            st.model_seconds += seconds_since(tm);

            tc = Clock::now();
            run_phase(Task::step);
            st.coder_seconds += seconds_since(tc);

            tm = Clock::now();
            const double loss = predictor.train_step(ses.targets);
            st.model_seconds += seconds_since(tm);
            record_step(opts, st, Phase::decompress, s, loss, predictor.router_stats(), t0);
        }
        run_phase(Task::finish);
    } catch (...) {
        failure = std::current_exception();
    }
    task = Task::stop;
    start.arrive_and_wait();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    st.seconds = seconds_since(t0);
    return std::move(ses.out);
}

container::Container compress(std::span<const std::uint8_t> data, const model::ModelConfig& cfg,
                              const RunOptions& opts, RunStats* stats) {
    return opts.pipeline ? run_pipelined_compress(data, cfg, opts, stats)
                         : run_serial_compress(data, cfg, opts, stats);
}

std::vector<std::uint8_t> decompress(const container::Container& c, const RunOptions& opts, RunStats* stats) {
    RunStats local;
    RunStats& st = stats ? *stats : local;
    auto out = opts.workers <= 1 ? run_serial_decompress(c, opts, &st)
                                 : run_parallel_decompress(c, opts.workers, opts, &st);
    if (c.header.build_fingerprint != container::build_fingerprint())
        st.warnings.push_back("container was written by a different build; bit-exact decoding is not guaranteed");
    return out;
}

Throughput throughput_report(std::uint64_t input_bytes, double cmp_seconds, double decmp_seconds) {
    require(input_bytes > 0, ErrorCode::usage, "throughput undefined for empty input");
    require(cmp_seconds > 0 && decmp_seconds > 0, ErrorCode::usage, "throughput needs positive phase times");
    const double kb = double(input_bytes) / 1024.0;
    const double cm = cmp_seconds / 60.0;
    const double dm = decmp_seconds / 60.0;
    return {kb / cm, kb / dm, 2 * kb / (cm + dm)};
}

double total_throughput(double cmp_tp, double decmp_tp) {
    require(cmp_tp > 0 && decmp_tp > 0, ErrorCode::usage, "throughputs must be positive");
    return 2.0 / (1.0 / cmp_tp + 1.0 / decmp_tp);
}

}  // namespace fade::cspp
