#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <random>
#include <thread>

#include "configs.hpp"
#include "fade/cspp/pipeline.hpp"
#include "fade/error.hpp"

using namespace fade;
using namespace fade::cspp;

namespace {

std::vector<std::uint8_t> random_bytes(std::size_t n, unsigned seed, unsigned alphabet = 256) {
    std::mt19937 rng(seed);
    std::vector<std::uint8_t> v(n);
    for (auto& x : v) x = std::uint8_t(rng() % alphabet);
    return v;
}

std::vector<std::uint8_t> text_like(std::size_t n) {
    static const char* words[] = {"the ", "stream ", "model ", "of ", "bytes ", "and ", "cache ", "a ", "coder, ", "is. "};
    std::mt19937 rng(3);
    std::vector<std::uint8_t> v;
    while (v.size() < n) {
        const char* w = words[rng() % 10];
        v.insert(v.end(), w, w + std::strlen(w));
    }
    v.resize(n);
    return v;
}

}  // namespace

TEST_CASE("stream partition covers the file") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const std::uint64_t len = trial < 50 ? trial : rng() % 100000;
        const std::uint32_t b = 1 + rng() % 600;
        const std::uint32_t t = 1 + rng() % 20;
        const auto p = StreamPartition::make(len, b, t);
        if (len == 0) {
            CHECK(p.streams == 0);
            continue;
        }
        REQUIRE(p.streams >= 1);
        CHECK(p.streams <= b);
        CHECK((p.streams == 1 || std::uint64_t(p.streams) * t <= len));
        std::uint64_t valid = 0;
        for (std::uint32_t k = 0; k < p.streams; ++k) {
            valid += p.valid_length(k);
            if (k + 1 < p.streams) CHECK(p.offset(k + 1) == p.offset(k) + p.stream_length);
        }
        CHECK(valid == len);
        CHECK(std::uint64_t(p.streams) * p.stream_length - p.pad_length() == len);
        CHECK(p.pad_length() < p.stream_length * p.streams);
    }
}

TEST_CASE("stream reduction for short inputs") {
    CHECK(StreamPartition::make(1, 512, 16).streams == 1);
    CHECK(StreamPartition::make(100, 512, 16).streams == 4);  // 512 -> 4, 4 * 16 <= 100
    CHECK(StreamPartition::make(8192, 512, 16).streams == 512);
    CHECK(StreamPartition::make(8191, 512, 16).streams == 256);
    const auto p = StreamPartition::make(17, 8, 2);
    CHECK(p.streams == 8);
    CHECK(p.stream_length == 3);
    CHECK(p.valid_length(5) == 2);
    CHECK(p.valid_length(6) == 0);  // padding may fill whole streams
    CHECK(p.valid_length(7) == 0);
    CHECK(p.warmup_length() == 2);
    CHECK(p.model_steps() == 1);
}

TEST_CASE("context and targets read the previous T bytes of each stream") {
    std::vector<std::uint8_t> data(23);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::uint8_t(i + 1);
    const auto p = StreamPartition::make(data.size(), 4, 3);  // L_s = 6
    REQUIRE(p.stream_length == 6);
    model::ContextWindow ctx;
    fill_context(data, p, 4, ctx);
    std::vector<std::uint8_t> tg(4);
    gather_targets(data, p, 4, tg);
    for (std::uint32_t k = 0; k < 4; ++k)
        for (std::uint32_t j = 0; j < 3; ++j) {
            const std::size_t src = k * 6 + 1 + j;
            CHECK(ctx.row(k)[j] == (src < 23 ? data[src] : 0));
        }
    CHECK(std::vector<std::uint8_t>(tg) == std::vector<std::uint8_t>{5, 11, 17, 23});
    fill_context(data, p, 5, ctx);
    CHECK(ctx.row(3)[0] == 21);
    CHECK(ctx.row(3)[1] == 22);
    CHECK(ctx.row(3)[2] == 23);
    gather_targets(data, p, 5, tg);
    CHECK(tg[3] == 0);
}

TEST_CASE("ping-pong buffer state machine") {
    PingPongBuffer<int> buf(0, true);
    int* w = buf.acquire_write();
    REQUIRE(w);
    CHECK(buf.state(0) == SlotState::filling);
    *w = 1;
    buf.publish();
    int* w2 = buf.acquire_write();
    REQUIRE(w2);
    CHECK(w2 != w);  // alternates slots
    *w2 = 2;
    buf.publish();
    int* r = buf.acquire_read();
    CHECK(r == w);
    CHECK(*r == 1);
    CHECK(buf.state(0) == SlotState::draining);
    buf.release();
    CHECK(*buf.acquire_read() == 2);
    buf.release();
    buf.close();
    CHECK(buf.acquire_read() == nullptr);
    CHECK_THROWS_AS(buf.acquire_write(), Error);
    CHECK(buf.events().size() == 8);

    SUBCASE("protocol violations") {
        PingPongBuffer<int> b2;
        CHECK_THROWS_AS(b2.publish(), Error);
        CHECK_THROWS_AS(b2.release(), Error);
    }
    SUBCASE("abort wakes a blocked reader") {
        PingPongBuffer<int> b3;
        int* got = reinterpret_cast<int*>(1);
        std::thread t([&] { got = b3.acquire_read(); });
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        b3.abort();
        t.join();
        CHECK(got == nullptr);
        CHECK(b3.acquire_write() == nullptr);
    }
}

TEST_CASE("ping-pong buffer under contention keeps slot exclusion") {
    PingPongBuffer<std::vector<int>> buf(std::vector<int>(64), true);
    const int n = 2000;
    std::vector<int> seen;
    std::thread consumer([&] {
        while (auto* s = buf.acquire_read()) {
            for (int x : *s) CHECK(x == (*s)[0]);  // never observes a half-written slot
            seen.push_back((*s)[0]);
            buf.release();
        }
    });
    for (int i = 0; i < n; ++i) {
        auto* s = buf.acquire_write();
        std::fill(s->begin(), s->end(), i);
        buf.publish();
    }
    buf.close();
    consumer.join();
    REQUIRE(seen.size() == std::size_t(n));
    for (int i = 0; i < n; ++i) CHECK(seen[i] == i);

    // Replay the log: each slot cycles empty -> filling -> full -> draining -> empty.
    const auto events = buf.events();
    CHECK(events.size() == std::size_t(4 * n));
    std::array<SlotState, 2> st{SlotState::empty, SlotState::empty};
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        CHECK(e.seq == i);
        CHECK(st[e.slot] == e.from);
        const auto next = SlotState((std::uint8_t(e.from) + 1) % 4);
        CHECK(e.to == next);
        st[e.slot] = e.to;
    }
}

TEST_CASE("round trips across execution strategies") {
    const auto cfg = testing::tiny_config(16);
    struct Case {
        const char* name;
        std::vector<std::uint8_t> data;
    };
    std::vector<Case> cases{{"empty", {}},
                            {"one byte", {0x42}},
                            {"shorter than B*T", random_bytes(37, 1)},
                            {"zeros", std::vector<std::uint8_t>(3000, 0)},
                            {"random", random_bytes(4000, 2)},
                            {"text", text_like(5000)},
                            {"dna", random_bytes(4096, 3, 4)}};
    for (auto& dna_byte : cases.back().data) dna_byte = "ACGT"[dna_byte];

    for (const auto& tc : cases) {
        CAPTURE(tc.name);
        RunOptions serial;
        serial.pipeline = false;
        const auto c_serial = run_serial_compress(tc.data, cfg, serial);
        const auto c_pipe = run_pipelined_compress(tc.data, cfg);
        const auto bytes = container::serialize(c_serial);
        CHECK(container::serialize(c_pipe) == bytes);
        const auto parsed = container::parse(bytes);
        CHECK(run_serial_decompress(parsed) == tc.data);
        for (std::uint32_t n : {1u, 2u, 3u, 4u, 8u, 64u}) {
            CAPTURE(n);
            RunStats st;
            CHECK(run_parallel_decompress(parsed, n, {}, &st) == tc.data);
            CHECK(st.workers == std::min(n, parsed.header.streams));
        }
    }
}

TEST_CASE("one-byte file is warmup coded") {
    const std::vector<std::uint8_t> one{7};
    const auto c = run_serial_compress(one, testing::tiny_config(16));
    CHECK(c.header.streams == 1);
    CHECK(c.bitstreams.size() == 1);
    CHECK(run_serial_decompress(c) == one);
}

TEST_CASE("seeded random files give identical containers on every path") {
    std::mt19937 rng(99);
    for (int trial = 0; trial < 12; ++trial) {
        auto cfg = testing::tiny_config(1u << (rng() % 5));
        cfg.seed = rng();
        const std::size_t len = rng() % 6000;
        auto data = random_bytes(len, rng(), 1 + rng() % 256);
        RunOptions serial;
        serial.pipeline = false;
        const auto a = container::serialize(compress(data, cfg, serial));
        const auto b = container::serialize(compress(data, cfg));
        CHECK(a == b);
        const auto c = container::parse(b);
        RunOptions w;
        w.workers = 1 + rng() % 8;
        CHECK(decompress(c, w) == data);
    }
}

TEST_CASE("compressing twice is deterministic and learns") {
    const auto data = text_like(20000);
    const auto cfg = testing::tiny_config(16);
    RunStats st;
    const auto a = container::serialize(compress(data, cfg, {}, &st));
    CHECK(a == container::serialize(compress(data, cfg)));
    CHECK(a.size() < data.size() / 2);
    CHECK(st.losses.size() == st.steps);
    CHECK(st.steps == StreamPartition::make(data.size(), 16, 8).model_steps());
    const std::size_t q = st.losses.size() / 4;
    double first = 0, last = 0;
    for (std::size_t i = 0; i < q; ++i) {
        first += st.losses[i];
        last += st.losses[st.losses.size() - 1 - i];
    }
    CHECK(last < first);
}

TEST_CASE("step observer sees every step in order") {
    const auto data = text_like(3000);
    std::vector<StepRecord> recs;
    RunOptions opts;
    opts.on_step = [&](const StepRecord& r) { recs.push_back(r); };
    RunStats st;
    const auto c = compress(data, testing::tiny_config(8), opts, &st);
    REQUIRE(recs.size() == st.steps);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(recs[i].step == i);
        CHECK(recs[i].phase == Phase::compress);
        CHECK(recs[i].loss == st.losses[i]);
        CHECK(recs[i].router.min <= recs[i].router.mean);
        if (i) CHECK(recs[i].elapsed >= recs[i - 1].elapsed);
    }
    recs.clear();
    opts.workers = 2;
    CHECK(decompress(c, opts) == data);
    REQUIRE(recs.size() == st.steps);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(recs[i].phase == Phase::decompress);
        CHECK(recs[i].loss == st.losses[i]);  // decoder replays the encoder's training exactly
    }
}

TEST_CASE("instrumented pipeline never reads a filling slot") {
    RunOptions opts;
    opts.record_buffer_events = true;
    RunStats st;
    compress(text_like(4000), testing::tiny_config(8), opts, &st);
    REQUIRE(st.buffer_events.size() == 4 * st.steps);
    std::array<SlotState, 2> s{SlotState::empty, SlotState::empty};
    for (const auto& e : st.buffer_events) {
        CHECK(s[e.slot] == e.from);
        if (e.to == SlotState::draining) CHECK(e.from == SlotState::full);
        s[e.slot] = e.to;
    }
}

TEST_CASE("corrupted bitstreams are reported with stream and step") {
    const auto data = text_like(6000);
    const auto good = compress(data, testing::tiny_config(4));

    SUBCASE("flipped byte") {
        int detected = 0;
        // The final flush bytes carry slack, so only interior bytes are flipped.
        for (std::size_t i = 0; i + 4 < good.bitstreams[2].size(); i += 7) {
            auto bad = good;
            bad.bitstreams[2][i] ^= 0x5A;
            for (std::uint32_t n : {1u, 4u}) {
                try {
                    RunOptions o;
                    o.workers = n;
                    const auto out = decompress(bad, o);
                    CHECK(out != data);
                } catch (const Error& e) {
                    CHECK(e.code() == ErrorCode::corruption);
                    // The shared model spreads the damage, so another stream
                    // may be the first to fail.
                    CHECK(std::string(e.what()).find("stream ") != std::string::npos);
                    ++detected;
                }
            }
        }
        CHECK(detected > 0);
    }
    SUBCASE("truncated stream") {
        auto bad = good;
        bad.bitstreams[1].resize(bad.bitstreams[1].size() / 2);
        for (std::uint32_t n : {1u, 3u}) {
            RunOptions o;
            o.workers = n;
            try {
                decompress(bad, o);
                FAIL("expected corruption");
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::corruption);
                CHECK(std::string(e.what()).find("stream 1") != std::string::npos);
            }
        }
    }
    SUBCASE("extra bytes") {
        auto bad = good;
        bad.bitstreams[3].push_back(0);
        CHECK_THROWS_AS(run_parallel_decompress(bad, 2), Error);
        CHECK_THROWS_AS(run_serial_decompress(bad), Error);
    }
}

TEST_CASE("pipelining hides an injected coder latency") {
    // Model step roughly balanced against the injected 1 ms coder delay.
    auto cfg = testing::tiny_config(32);
    const auto data = text_like(32 * 8 + 32 * 250);
    RunOptions serial;
    serial.pipeline = false;
    serial.coder_delay = std::chrono::milliseconds(1);
    RunOptions piped = serial;
    piped.pipeline = true;
    RunStats s1, s2;
    const auto a = compress(data, cfg, serial, &s1);
    const auto b = compress(data, cfg, piped, &s2);
    CHECK(container::serialize(a) == container::serialize(b));
    MESSAGE("serial " << s1.seconds << " s, pipelined " << s2.seconds << " s, model/step "
                      << 1e3 * s1.model_seconds / double(s1.steps) << " ms");
    CHECK(s2.seconds < 0.75 * s1.seconds);
    // Never faster than the slower stage alone.
    CHECK(s2.seconds >= 0.95 * std::max(s2.model_seconds, s2.coder_seconds));
}

TEST_CASE("throughput report") {
    const auto r = throughput_report(1024 * 600, 60.0, 60.0);
    CHECK(r.cmp_tp == doctest::Approx(600));
    CHECK(r.total_tp == doctest::Approx(600));
    CHECK(r.decmp_tp == doctest::Approx(600));
    const auto r2 = throughput_report(1024 * 600, 30.0, 90.0);
    CHECK(r2.total_tp == doctest::Approx(600));
    CHECK(total_throughput(4571, 4144) == doctest::Approx(4347).epsilon(1.0 / 4347));
    CHECK_THROWS_AS(throughput_report(0, 1, 1), Error);
    CHECK_THROWS_AS(throughput_report(10, 0, 1), Error);
}
