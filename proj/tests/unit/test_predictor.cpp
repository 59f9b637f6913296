#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "configs.hpp"
#include "doctest.h"
#include "fade/model/predictor.hpp"
#include "gradcheck.hpp"

using namespace fade;
using namespace fade::model;
using fade::testing::gradcheck_config;
using fade::testing::tiny_config;

namespace {

ContextWindow random_context(std::uint32_t b, std::uint32_t t, unsigned seed) {
    ContextWindow ctx(b, t);
    std::mt19937 rng(seed);
    for (auto& s : ctx.symbols) s = std::uint8_t(rng());
    return ctx;
}

template <typename Real>
void fill_random(Parameter<Real>& p, unsigned seed, double scale) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(-scale, scale);
    for (auto& x : p.value.values()) x = Real(d(rng));
}

ModelConfig small_default(std::uint32_t batch) {
    ModelConfig c;
    c.batch = batch;
    c.workers = 1;
    return c;
}

}  // namespace

TEST_CASE("config validation") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.hidden_dim() == 512);
    c.conv_kernel = 4;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.cache_dim = 100;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.workers = 3;
    CHECK_THROWS_AS(c.validate(), Error);
    for (Variant v : all_variants()) CHECK(parse_variant(to_string(v)) == v);
    CHECK_FALSE(parse_variant("bogus").has_value());
}

TEST_CASE("initial state") {
    auto s = ModelState<float>::initial(gradcheck_config());
    CHECK(s.cache_residual.value[0] == 1.0f);
    CHECK(s.coarse_residual.value[0] == 1.0f);
    CHECK(s.fine_residual.value[0] == 1.0f);
    for (float v : s.cache.values()) CHECK(v == 0.0f);
    const std::size_t dh = 8;
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < dh; ++i)
            for (std::size_t j = 0; j < dh; ++j)
                CHECK(s.memory.value[(b * dh + i) * dh + j] == (i == j ? 1.0f : 0.0f));
    CHECK(s == ModelState<float>::initial(gradcheck_config()));
    auto other = gradcheck_config();
    other.seed += 1;
    CHECK_FALSE(s == ModelState<float>::initial(other));
}

TEST_CASE("embed") {
    auto cfg = small_default(3);
    auto s = ModelState<float>::initial(cfg);
    Graph<float> g;
    ContextWindow zero(3, 16);
    auto e = embed(g, s, zero);
    CHECK(e.x.shape() == Shape{3, 1, 512});
    CHECK(e.x_emb.shape() == Shape{3, 16, 32});
    const auto& x = e.x.value();
    for (std::size_t j = 0; j < 512; ++j) {
        CHECK(x.row(0)[j] == x.row(1)[j]);
        CHECK(x.row(0)[j] == x.row(2)[j]);
    }

    ContextWindow ctx = random_context(3, 16, 1);
    for (std::uint32_t t = 0; t < 16; ++t) ctx.row(0)[t] = ctx.row(0)[t] == 7 ? 8 : ctx.row(0)[t];
    ctx.row(1)[5] = 7;
    for (std::uint32_t t = 0; t < 16; ++t) ctx.row(2)[t] = ctx.row(2)[t] == 7 ? 8 : ctx.row(2)[t];
    auto before = embed(g, s, ctx).x_emb.value();
    for (std::size_t d = 0; d < 32; ++d) s.embedding.value[7 * 32 + d] += 0.25f;
    auto after = embed(g, s, ctx).x_emb.value();
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t t = 0; t < 16; ++t)
            for (std::size_t d = 0; d < 32; ++d) {
                const std::size_t i = (b * 16 + t) * 32 + d;
                if (ctx.row(std::uint32_t(b))[t] == 7)
                    CHECK(after[i] != before[i]);
                else
                    CHECK(after[i] == before[i]);
            }
}

TEST_CASE("global stream") {
    auto cfg = gradcheck_config();
    SUBCASE("zero gate appends a zero block") {
        auto s = ModelState<double>::initial(cfg);
        s.cache.fill(1.0);
        s.cache_gate.value.fill(0);
        Graph<double> g;
        auto e = embed(g, s, random_context(2, 4, 2));
        global_stream(g, s, e.x, cfg.embed_dim);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t j = 0; j < 16; ++j)
                CHECK(s.cache.row(b)[j] == (j < 8 ? 1.0 : 0.0));
    }
    SUBCASE("zero projection gives identity") {
        auto s = ModelState<double>::initial(cfg);
        s.cache_proj.value.fill(0);
        Graph<double> g;
        auto e = embed(g, s, random_context(2, 4, 3));
        auto h = global_stream(g, s, e.x, cfg.embed_dim);
        CHECK(h.value() == e.x.value());
    }
    SUBCASE("shift register oracle") {
        auto c = cfg;
        c.cache_dim = 128 * c.embed_dim;
        auto s = ModelState<double>::initial(c);
        std::vector<std::vector<double>> history;  // stream 0's appended features
        for (int step = 0; step < 130; ++step) {
            Graph<double> g;
            auto e = embed(g, s, random_context(2, 4, 100 + step));
            // Independent feature computation for stream 0.
            const double* xt = e.x.value().row(0) + 24;
            std::vector<double> feat(8);
            for (std::size_t j = 0; j < 8; ++j) {
                double a = 0, v = 0;
                for (std::size_t i = 0; i < 8; ++i) {
                    a += xt[i] * s.cache_gate.value[i * 8 + j];
                    v += xt[i] * s.cache_value.value[i * 8 + j];
                }
                feat[j] = nn::gelu_scalar(a) * v;
            }
            history.push_back(feat);
            global_stream(g, s, e.x, c.embed_dim);
        }
        // After 130 steps the cache holds features 2..129; 0 and 1 are evicted.
        for (std::size_t slot = 0; slot < 128; ++slot)
            for (std::size_t j = 0; j < 8; ++j)
                CHECK(s.cache.row(0)[slot * 8 + j] ==
                      doctest::Approx(history[slot + 2][j]).epsilon(1e-12));
    }
}

TEST_CASE("local stream") {
    SUBCASE("zero kernel") {
        auto cfg = small_default(2);
        auto s = ModelState<float>::initial(cfg);
        s.conv_kernel.value.fill(0);
        Graph<float> g;
        auto e = embed(g, s, random_context(2, 16, 4));
        auto h = local_stream(g, s, e.x_emb);
        CHECK(h.shape() == Shape{2, 1, 512});
        for (float v : h.value().values()) CHECK(v == 0.0f);
    }
    SUBCASE("receptive field") {
        auto cfg = gradcheck_config();
        auto s = ModelState<double>::initial(cfg);
        auto ctx = random_context(2, 4, 5);
        Graph<double> g;
        auto h0 = local_stream(g, s, embed(g, s, ctx).x_emb).value();
        ctx.row(0)[3] = std::uint8_t(ctx.row(0)[3] + 1);
        auto h1 = local_stream(g, s, embed(g, s, ctx).x_emb).value();
        // Kernel 3 over 4 positions of width 8: position 3 reaches outputs 2 and 3.
        for (std::size_t j = 0; j < 32; ++j) {
            if (j >= 16)
                CHECK(h1.row(0)[j] != h0.row(0)[j]);
            else
                CHECK(h1.row(0)[j] == h0.row(0)[j]);
            CHECK(h1.row(1)[j] == h0.row(1)[j]);
        }
    }
}

TEST_CASE("router") {
    auto cfg = gradcheck_config();
    auto s = ModelState<double>::initial(cfg);
    Graph<double> g;
    auto e = embed(g, s, random_context(2, 4, 6));
    auto hg = g.constant(nn::Tensor<double>({2, 1, 32}, 3.0));
    auto hl = g.constant(nn::Tensor<double>({2, 1, 32}, 1.0));
    s.router.value.fill(0);
    auto r = route_fuse(g, s, e.x, hg, hl);
    for (double v : r.alpha.value().values()) CHECK(v == 0.5);
    for (double v : r.h_mix.value().values()) CHECK(v == 2.0);
    fill_random(s.router, 7, 1.0);
    auto same = route_fuse(g, s, e.x, hg, hg);
    CHECK(same.h_mix.value() == hg.value());
}

TEST_CASE("coarse refiner") {
    auto cfg = gradcheck_config();
    cfg.hgr_dim = 32;  // square Down/Up so they can be exact inverses
    auto s = ModelState<double>::initial(cfg);
    s.down.value.fill(0);
    s.up.value.fill(0);
    for (std::size_t i = 0; i < 32; ++i) {
        s.down.value[i * 32 + i] = 1;
        s.up.value[i * 32 + i] = 1;
    }
    s.self_gate.value.fill(0);
    // Rows already normalized (mean 0, variance 1) so LN is the identity up to eps.
    nn::Tensor<double> hm({2, 1, 32});
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t j = 0; j < 32; ++j) hm[b * 32 + j] = (j % 2 ? 1.0 : -1.0) * (b ? -1 : 1);
    Graph<double> g;
    auto h = hgr_coarse(g, s, g.constant(hm)).value();
    for (std::size_t i = 0; i < hm.size(); ++i) CHECK(h[i] == doctest::Approx(1.5 * hm[i]).epsilon(1e-5));

    SUBCASE("slice isolation") {
        auto s2 = ModelState<double>::initial(gradcheck_config());
        nn::Tensor<double> wave({2, 1, 32});
        for (std::size_t i = 0; i < 64; ++i) wave[i] = std::sin(double(i));
        auto hmix = g.constant(wave);
        auto base = hgr_coarse(g, s2, hmix).value();
        s2.memory.value[64 + 3] += 0.5;  // stream 1's slice
        auto changed = hgr_coarse(g, s2, hmix).value();
        for (std::size_t j = 0; j < 32; ++j) {
            CHECK(changed.row(0)[j] == base.row(0)[j]);
            CHECK(changed.row(1)[j] != base.row(1)[j]);
        }
    }
}

TEST_CASE("coarse refiner output rank is bounded by the reduced width") {
    auto cfg = gradcheck_config();  // d_h = 8, D_h = 32
    auto s = ModelState<double>::initial(cfg);
    fill_random(s.memory, 8, 0.5);
    s.coarse_residual.value[0] = 0;
    const std::size_t samples = 40;
    Eigen::MatrixXd collected(samples, 32);
    std::mt19937 rng(9);
    std::normal_distribution<double> n01;
    for (std::size_t r = 0; r < samples; ++r) {
        nn::Tensor<double> hm({2, 1, 32});
        for (auto& v : hm.values()) v = n01(rng);
        Graph<double> g;
        auto h = hgr_coarse(g, s, g.constant(hm), false).value();
        for (std::size_t j = 0; j < 32; ++j) collected(Eigen::Index(r), Eigen::Index(j)) = h.row(0)[j];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(collected);
    svd.setThreshold(1e-9);
    CHECK(svd.rank() == 8);
}

TEST_CASE("fine refiner") {
    auto cfg = small_default(2);
    auto s = ModelState<float>::initial(cfg);
    CHECK(s.ffn_gate.value.dim(1) == 8192);
    CHECK(s.ffn_out.value.dim(0) == 8192);
    auto c = gradcheck_config();
    auto sd = ModelState<double>::initial(c);
    sd.ffn_gate.value.fill(0);
    sd.fine_residual.value[0] = 0.75;
    nn::Tensor<double> hc({2, 1, 32});
    for (std::size_t i = 0; i < hc.size(); ++i) hc[i] = std::cos(double(i));
    Graph<double> g;
    auto h = hgr_fine(g, sd, g.constant(hc)).value();
    for (std::size_t i = 0; i < hc.size(); ++i) CHECK(h[i] == doctest::Approx(0.75 * hc[i]));
}

TEST_CASE("finite-difference gradients per stage") {
    using St = ModelState<double>;
    auto cfg = gradcheck_config();
    St base = St::initial(cfg);
    // Move the affine, residual and memory parameters away from their special initial values.
    for (auto* p : base.parameters()) {
        const bool shift = p->name.find("gain") != std::string::npos ||
                           p->name.find("residual") != std::string::npos;
        const bool offset = p->name.find("bias") != std::string::npos;
        if (!shift && !offset && p->name != "memory") continue;
        std::mt19937 r(unsigned(p->name.size() * 31 + p->value.size()));
        std::uniform_real_distribution<double> d(-0.3, 0.3);
        for (auto& v : p->value.values()) v += d(r);
    }
    // Non-trivial cache history.
    std::mt19937 rng(10);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : base.cache.values()) v = u(rng);
    const auto ctx = random_context(2, 4, 11);
    auto params = [](St& s) { return s.parameters(); };
    const std::vector<std::uint8_t> targets{3, 250};

    auto run = [&](const char* label, std::function<nn::Var<double>(Graph<double>&, St&)> f) {
        auto r = testing::gradcheck<St>(base, f, params);
        INFO(label << " worst " << r.worst << " over " << r.checked);
        CHECK(r.max_rel_error < 1e-4);
    };
    run("embed", [&](Graph<double>& g, St& s) { return testing::project_to_scalar(embed(g, s, ctx).x, 1); });
    run("global", [&](Graph<double>& g, St& s) {
        return testing::project_to_scalar(global_stream(g, s, embed(g, s, ctx).x, cfg.embed_dim), 2);
    });
    run("local", [&](Graph<double>& g, St& s) {
        return testing::project_to_scalar(local_stream(g, s, embed(g, s, ctx).x_emb), 3);
    });
    run("route", [&](Graph<double>& g, St& s) {
        auto e = embed(g, s, ctx);
        auto hg = global_stream(g, s, e.x, cfg.embed_dim);
        auto hl = local_stream(g, s, e.x_emb);
        return testing::project_to_scalar(route_fuse(g, s, e.x, hg, hl).h_mix, 4);
    });
    run("coarse", [&](Graph<double>& g, St& s) {
        auto e = embed(g, s, ctx);
        return testing::project_to_scalar(hgr_coarse(g, s, local_stream(g, s, e.x_emb)), 5);
    });
    run("fine", [&](Graph<double>& g, St& s) {
        auto e = embed(g, s, ctx);
        return testing::project_to_scalar(hgr_fine(g, s, local_stream(g, s, e.x_emb)), 6);
    });
    run("full loss", [&](Graph<double>& g, St& s) {
        return nn::softmax_cross_entropy(forward(g, s, cfg, ctx).logits, targets);
    });
}

TEST_CASE("predict") {
    auto cfg = small_default(4);
    Predictor<float> p(cfg);
    auto ctx = random_context(4, 16, 12);
    const auto snapshot = p.state();
    const auto probs = p.predict(ctx).probs;
    CHECK(probs.shape() == nn::Shape{4, 256});
    for (std::size_t k = 0; k < 4; ++k) {
        double s = 0;
        for (std::size_t j = 0; j < 256; ++j) {
            const double q = probs.row(k)[j];
            CHECK(q > 0.1 / 256);
            CHECK(q < 10.0 / 256);
            s += q;
        }
        CHECK(std::abs(s - 1) < 1e-5);
    }
    SUBCASE("mutates only the cache") {
        auto after = p.state();
        CHECK_FALSE(after.cache == snapshot.cache);
        after.cache = snapshot.cache;
        CHECK(after == snapshot);
    }
    SUBCASE("determinism from a snapshot") {
        Predictor<float> q(cfg, snapshot);
        CHECK(q.predict(ctx).probs == probs);
    }
    SUBCASE("divergence carries the step") {
        Predictor<float> q(cfg, snapshot);
        q.state().router.value[5] = std::numeric_limits<float>::quiet_NaN();
        try {
            q.predict(ctx);
            FAIL("expected divergence");
        } catch (const DivergenceError& e) {
            CHECK(e.step() == 0);
        }
    }
}

TEST_CASE("stream isolation under permutation") {
    auto cfg = tiny_config(3);
    Predictor<float> a(cfg);
    // Warm the per-stream state so rows differ.
    for (int s = 0; s < 3; ++s) {
        a.predict(random_context(3, 8, 20 + s));
        a.train_step(std::vector<std::uint8_t>{1, 2, 3});
    }
    const std::uint32_t perm[3] = {2, 0, 1};
    auto ctx = random_context(3, 8, 30);
    ContextWindow pctx(3, 8);
    auto state = a.state();
    auto pstate = state;
    const std::size_t dc = cfg.cache_dim, dh = cfg.hgr_dim;
    for (std::uint32_t k = 0; k < 3; ++k) {
        std::copy(ctx.row(perm[k]), ctx.row(perm[k]) + 8, pctx.row(k));
        std::copy(state.cache.row(perm[k]), state.cache.row(perm[k]) + dc, pstate.cache.row(k));
        std::copy(state.memory.value.data() + perm[k] * dh * dh,
                  state.memory.value.data() + (perm[k] + 1) * dh * dh,
                  pstate.memory.value.data() + k * dh * dh);
    }
    Predictor<float> x(cfg, state), y(cfg, pstate);
    const auto px = x.predict(ctx).probs;
    const auto py = y.predict(pctx).probs;
    for (std::uint32_t k = 0; k < 3; ++k)
        for (std::size_t j = 0; j < 256; ++j) CHECK(py.row(k)[j] == px.row(perm[k])[j]);
}

TEST_CASE("zero residual scales stay finite") {
    auto cfg = tiny_config(2);
    Predictor<float> p(cfg);
    p.state().cache_residual.value[0] = 0;
    p.state().coarse_residual.value[0] = 0;
    p.state().fine_residual.value[0] = 0;
    CHECK(p.predict(random_context(2, 8, 13)).probs.all_finite());
    CHECK(std::isfinite(p.train_step(std::vector<std::uint8_t>{0, 1})));
}

TEST_CASE("train step") {
    SUBCASE("uniform predictions cost ln 256") {
        auto cfg = tiny_config(2);
        Predictor<double> p(cfg);
        p.state().head.value.fill(0);
        p.predict(random_context(2, 8, 14));
        CHECK(p.train_step(std::vector<std::uint8_t>{9, 200}) ==
              doctest::Approx(std::log(256.0)).epsilon(1e-12));
        CHECK(p.steps() == 1);
        CHECK_FALSE(p.pending());
    }
    SUBCASE("train without predict") {
        Predictor<float> p(tiny_config(2));
        CHECK_THROWS_AS(p.train_step(std::vector<std::uint8_t>{1, 2}), Error);
    }
    SUBCASE("alternating pattern is learned") {
        auto cfg = tiny_config(4);
        Predictor<float> p(cfg);
        double last = 0;
        int step = 0;
        for (; step < 2000; ++step) {
            ContextWindow ctx(4, 8);
            for (std::uint32_t k = 0; k < 4; ++k)
                for (std::uint32_t t = 0; t < 8; ++t) ctx.row(k)[t] = (step + k + t) % 2 ? 'B' : 'A';
            std::vector<std::uint8_t> targets(4);
            for (std::uint32_t k = 0; k < 4; ++k) targets[k] = (step + k + 8) % 2 ? 'B' : 'A';
            p.predict(ctx);
            last = p.train_step(targets);
            if (last < 0.1) break;
        }
        INFO("steps " << step << " loss " << last);
        CHECK(last < 0.1);
    }
    SUBCASE("router statistics are reported") {
        Predictor<float> p(tiny_config(2));
        p.predict(random_context(2, 8, 15));
        const auto& r = p.router_stats();
        CHECK(r.min > 0);
        CHECK(r.max < 1);
        CHECK(r.min <= r.mean);
        CHECK(r.mean <= r.max);
    }
    SUBCASE("copies are independent and deterministic") {
        Predictor<float> p(tiny_config(2));
        p.predict(random_context(2, 8, 16));
        p.train_step(std::vector<std::uint8_t>{5, 6});
        Predictor<float> q = p;
        auto ctx = random_context(2, 8, 17);
        p.predict(ctx);
        q.predict(ctx);
        CHECK(p.train_step(std::vector<std::uint8_t>{7, 8}) == q.train_step(std::vector<std::uint8_t>{7, 8}));
        CHECK(p.state() == q.state());
    }
}

TEST_CASE("nll report") {
    const std::vector<double> c(5, 2.5);
    CHECK(average_nll(c) == 2.5);
    const std::vector<double> l{std::log(256.0), std::log(256.0)};
    CHECK(average_nll(l) == std::log(256.0));
    CHECK(average_bits_per_byte(l) == doctest::Approx(8.0));
    CHECK_THROWS_AS(average_nll(std::vector<double>{}), Error);
}
