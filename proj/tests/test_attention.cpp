#include <doctest.h>

#include "sta/attention.hpp"
#include "sta/grad_check.hpp"
#include "sta/reference_kernels.hpp"
#include "sta/rng.hpp"

#include <cmath>

using namespace sta;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

LinearLayer projection(const std::string& path, std::size_t da, std::size_t d, Rng& rng) {
    return LinearLayer::make(path, da, d, /*has_bias=*/false, rng);
}

EncodedText make_text(Graph& g, const Tensor& states, std::vector<std::uint8_t> mask) {
    return EncodedText{g.constant(states), std::move(mask)};
}

AffinityMatrix make_affinity(Graph& g, const Tensor& a, std::vector<std::uint8_t> mask) {
    return AffinityMatrix{g.constant(a), std::move(mask)};
}

}  // namespace

TEST_CASE("compute_affinity") {
    Rng rng(1);
    SUBCASE("zero projections give a zero matrix") {
        LinearLayer wv = projection("wv", 3, 4, rng);
        LinearLayer wq = projection("wq", 3, 4, rng);
        wv.weight = Tensor({3, 4});
        wq.weight = Tensor({3, 4});
        Graph g;
        EncodedText e = make_text(g, random_tensor({5, 4}, rng), {1, 1, 1, 1, 1});
        AffinityMatrix a = compute_affinity(g, g.constant(random_tensor({2, 4}, rng)), e, wv, wq);
        for (std::size_t i = 0; i < a.values.value().numel(); ++i) CHECK(a.values.value()[i] == 0.0);
    }
    SUBCASE("identity projections on identical unit rows put the maximum on the diagonal") {
        const std::size_t d = 3;
        LinearLayer wv = projection("wv", d, d, rng);
        LinearLayer wq = projection("wq", d, d, rng);
        wv.weight = Tensor::matrix(d, d, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        wq.weight = wv.weight;
        // distinct unit-norm rows
        Tensor states = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        Graph g;
        EncodedText e = make_text(g, states, {1, 1, 1});
        AffinityMatrix a = compute_affinity(g, g.constant(states), e, wv, wq);
        const Tensor& av = a.values.value();
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                if (i != j) CHECK(av.at(i, i) > av.at(i, j));
    }
    SUBCASE("matches the double-loop oracle") {
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t k = 1 + rng.below(6), m = 1 + rng.below(6);
            const std::size_t d = 1 + rng.below(6), da = 1 + rng.below(6);
            LinearLayer wv = projection("wv", da, d, rng);
            LinearLayer wq = projection("wq", da, d, rng);
            Tensor ve = random_tensor({k, d}, rng);
            Tensor es = random_tensor({m, d}, rng);
            Graph g;
            EncodedText e = make_text(g, es, std::vector<std::uint8_t>(m, 1));
            AffinityMatrix a = compute_affinity(g, g.constant(ve), e, wv, wq);
            auto expect = ref::affinity(ve.vec(), es.vec(), wv.weight.vec(), wq.weight.vec(), k, m, d, da);
            for (std::size_t i = 0; i < expect.size(); ++i)
                CHECK(std::fabs(a.values.value()[i] - expect[i]) <= 1e-12);
        }
    }
    SUBCASE("dimension mismatch") {
        LinearLayer wv = projection("wv", 3, 4, rng);
        LinearLayer wq = projection("wq", 3, 4, rng);
        Graph g;
        EncodedText e = make_text(g, random_tensor({5, 3}, rng), {1, 1, 1, 1, 1});
        CHECK_THROWS_AS(compute_affinity(g, g.constant(random_tensor({2, 4}, rng)), e, wv, wq),
                        DimensionError);
    }
}

TEST_CASE("visual attention weights") {
    SUBCASE("zero affinity gives uniform weights") {
        Graph g;
        AffinityMatrix a = make_affinity(g, Tensor({3, 4}), {1, 1, 1, 1});
        Var c = visual_attention_weights(g, a);
        for (std::size_t i = 0; i < 3; ++i) CHECK(c.value()[i] == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("row maxima then softmax") {
        Graph g;
        AffinityMatrix a = make_affinity(g, Tensor::matrix(2, 2, {1, 0, 0, 2}), {1, 1});
        Var c = visual_attention_weights(g, a);
        // scores [1, 2] -> softmax
        CHECK(c.value()[0] == doctest::Approx(0.26894).epsilon(1e-5));
        CHECK(c.value()[1] == doctest::Approx(0.73106).epsilon(1e-5));
    }
    SUBCASE("masking a row's max falls back to its next-best word") {
        Graph g;
        Tensor av = Tensor::matrix(2, 3, {5, 1, 0, 0, 1, 4});
        AffinityMatrix full = make_affinity(g, av, {1, 1, 1});
        AffinityMatrix masked = make_affinity(g, av, {0, 1, 1});  // kills column 0
        Var cf = visual_attention_weights(g, full);
        Var cm = visual_attention_weights(g, masked);
        CHECK(cf.value()[0] > cf.value()[1]);  // scores [5, 4]
        CHECK(cm.value()[0] < cm.value()[1]);  // scores drop to [1, 4]
    }
    SUBCASE("all words masked") {
        Graph g;
        AffinityMatrix a = make_affinity(g, Tensor({2, 2}), {0, 0});
        CHECK_THROWS_AS(visual_attention_weights(g, a), DegenerateSliceError);
    }
}

TEST_CASE("attend_video") {
    Rng rng(2);
    Tensor ve = random_tensor({3, 4}, rng);
    SUBCASE("one-hot weights pick the row exactly") {
        Graph g;
        Var out = attend_video(g, g.constant(Tensor::row({0, 1, 0})), g.constant(ve));
        for (std::size_t j = 0; j < 4; ++j) CHECK(out.value()[j] == ve.at(1, j));
    }
    SUBCASE("uniform weights give the row mean") {
        Graph g;
        const double third = 1.0 / 3.0;
        Var out = attend_video(g, g.constant(Tensor::row({third, third, third})), g.constant(ve));
        for (std::size_t j = 0; j < 4; ++j) {
            const double mean = (ve.at(0, j) + ve.at(1, j) + ve.at(2, j)) / 3.0;
            CHECK(out.value()[j] == doctest::Approx(mean).epsilon(1e-12));
        }
    }
    SUBCASE("matches the sum-loop oracle") {
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t k = 1 + rng.below(6), d = 1 + rng.below(6);
            Tensor states = random_tensor({k, d}, rng);
            Tensor raw = random_tensor({k}, rng, 0.1, 1.0);
            double sum = 0.0;
            for (std::size_t i = 0; i < k; ++i) sum += raw[i];
            for (std::size_t i = 0; i < k; ++i) raw[i] /= sum;
            Graph g;
            Var out = attend_video(g, g.constant(raw), g.constant(states));
            auto expect = ref::attend_video(raw.vec(), states.vec(), k, d);
            for (std::size_t j = 0; j < d; ++j) CHECK(std::fabs(out.value()[j] - expect[j]) <= 1e-12);
        }
    }
    SUBCASE("convexity: the output lies in the per-coordinate envelope") {
        Rng prng(7);
        for (int trial = 0; trial < 50; ++trial) {
            Tensor states = random_tensor({4, 3}, prng);
            Tensor logits = random_tensor({4}, prng, -2, 2);
            Graph g;
            Var c = g.softmax(g.constant(logits), 0);
            Var out = attend_video(g, c, g.constant(states));
            for (std::size_t j = 0; j < 3; ++j) {
                double lo = states.at(0, j), hi = states.at(0, j);
                for (std::size_t i = 1; i < 4; ++i) {
                    lo = std::min(lo, states.at(i, j));
                    hi = std::max(hi, states.at(i, j));
                }
                CHECK(out.value()[j] >= lo - 1e-12);
                CHECK(out.value()[j] <= hi + 1e-12);
            }
        }
    }
    SUBCASE("non-normalized weights are rejected") {
        Graph g;
        CHECK_THROWS_AS(attend_video(g, g.constant(Tensor::row({0.5, 0.2, 0.1})), g.constant(ve)),
                        std::invalid_argument);
    }
}

TEST_CASE("text attention weights") {
    Rng rng(3);
    SUBCASE("zero affinity, four unmasked words: uniform rows") {
        Graph g;
        AffinityMatrix a = make_affinity(g, Tensor({2, 4}), {1, 1, 1, 1});
        Var b = text_attention_weights(g, a);
        for (std::size_t i = 0; i < b.value().numel(); ++i) CHECK(b.value()[i] == doctest::Approx(0.25));
    }
    SUBCASE("adding a constant to one row leaves B unchanged") {
        Tensor av = random_tensor({3, 4}, rng);
        Graph g;
        Var b1 = text_attention_weights(g, make_affinity(g, av, {1, 1, 1, 1}));
        Tensor shifted = av;
        for (std::size_t j = 0; j < 4; ++j) shifted.at(1, j) += 7.5;
        Var b2 = text_attention_weights(g, make_affinity(g, shifted, {1, 1, 1, 1}));
        for (std::size_t i = 0; i < b1.value().numel(); ++i)
            CHECK(b1.value()[i] == doctest::Approx(b2.value()[i]).epsilon(1e-12));
    }
    SUBCASE("matches the per-row softmax oracle") {
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t k = 1 + rng.below(4), m = 1 + rng.below(5);
            Tensor av = random_tensor({k, m}, rng, -3, 3);
            Graph g;
            Var b = text_attention_weights(g, make_affinity(g, av, std::vector<std::uint8_t>(m, 1)));
            auto expect = ref::softmax_rows(av.vec(), k, m);
            for (std::size_t i = 0; i < expect.size(); ++i)
                CHECK(std::fabs(b.value()[i] - expect[i]) <= 1e-12);
        }
    }
}

TEST_CASE("attend_text") {
    Rng rng(4);
    SUBCASE("K=1 one-hot row returns the word state") {
        Tensor es = random_tensor({2, 3}, rng);
        Graph g;
        EncodedText e = make_text(g, es, {1, 1});
        Var out = attend_text(g, g.constant(Tensor::matrix(1, 2, {1, 0})), e);
        for (std::size_t j = 0; j < 3; ++j) CHECK(out.value()[j] == doctest::Approx(es.at(0, j)));
    }
    SUBCASE("uniform rows at K=2 give twice the word mean") {
        Tensor es = random_tensor({4, 3}, rng);
        Graph g;
        EncodedText e = make_text(g, es, {1, 1, 1, 1});
        Var out = attend_text(g, g.constant(Tensor({2, 4}, 0.25)), e);
        for (std::size_t j = 0; j < 3; ++j) {
            double mean = 0.0;
            for (std::size_t w = 0; w < 4; ++w) mean += es.at(w, j);
            mean /= 4.0;
            CHECK(out.value()[j] == doctest::Approx(2.0 * mean).epsilon(1e-12));
        }
    }
    SUBCASE("matches the double-loop oracle") {
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t k = 1 + rng.below(5), m = 1 + rng.below(5), d = 1 + rng.below(6);
            Tensor bw = random_tensor({k, m}, rng, 0.0, 1.0);
            Tensor es = random_tensor({m, d}, rng);
            Graph g;
            EncodedText e = make_text(g, es, std::vector<std::uint8_t>(m, 1));
            Var out = attend_text(g, g.constant(bw), e);
            auto expect = ref::attend_text(bw.vec(), es.vec(), k, m, d);
            for (std::size_t j = 0; j < d; ++j) CHECK(std::fabs(out.value()[j] - expect[j]) <= 1e-12);
        }
    }
}

namespace {

struct Block {
    LinearLayer wv, wq;
    AttentionParams params;
    Block(std::size_t da, std::size_t d, Rng& rng)
        : wv(LinearLayer::make("attn.wv", da, d, false, rng)),
          wq(LinearLayer::make("attn.wq", da, d, false, rng)) {
        params.wv = &wv;
        params.wq = &wq;
    }
};

SegmentSet make_segments(Graph& g, const std::vector<Tensor>& states) {
    SegmentSet set;
    set.n = states.size();
    set.k = states[0].dim(0);
    for (const Tensor& s : states) set.segments.push_back(g.constant(s));
    return set;
}

}  // namespace

TEST_CASE("segment_attention") {
    Rng rng(5);
    Block block(3, 4, rng);
    Tensor seg0 = random_tensor({2, 4}, rng);
    Tensor seg1 = random_tensor({2, 4}, rng);
    Tensor text = random_tensor({3, 4}, rng);
    std::vector<std::uint8_t> mask{1, 1, 1};

    SUBCASE("N=1 equals running the four ops once") {
        Graph g;
        EncodedText e = make_text(g, text, mask);
        auto outs = segment_attention(g, make_segments(g, {seg0}), e, block.params);
        REQUIRE(outs.size() == 1);
        AffinityMatrix a = compute_affinity(g, g.constant(seg0), e, block.wv, block.wq);
        Var c = visual_attention_weights(g, a);
        Var v = attend_video(g, c, g.constant(seg0));
        Var b = text_attention_weights(g, a);
        Var eo = attend_text(g, b, e);
        CHECK(outs[0].c.value().vec() == c.value().vec());
        CHECK(outs[0].v_att.value().vec() == v.value().vec());
        CHECK(outs[0].b.value().vec() == b.value().vec());
        CHECK(outs[0].e_att.value().vec() == eo.value().vec());
    }
    SUBCASE("permuting segments permutes outputs identically") {
        Graph g;
        EncodedText e = make_text(g, text, mask);
        auto fwd = segment_attention(g, make_segments(g, {seg0, seg1}), e, block.params);
        auto rev = segment_attention(g, make_segments(g, {seg1, seg0}), e, block.params);
        CHECK(fwd[0].v_att.value().vec() == rev[1].v_att.value().vec());
        CHECK(fwd[1].e_att.value().vec() == rev[0].e_att.value().vec());
    }
    SUBCASE("shared projections accumulate both segments' gradients") {
        ParamRefs refs;
        block.wv.collect(refs);
        block.wq.collect(refs);
        auto loss_over = [&](Graph& g, const std::vector<Tensor>& segs) {
            EncodedText e = make_text(g, text, mask);
            auto outs = segment_attention(g, make_segments(g, segs), e, block.params);
            Var total = g.constant(Tensor::scalar(0.0));
            for (const auto& o : outs) {
                total = g.add(total, g.sum_all(g.mul(o.v_att, o.v_att)));
                total = g.add(total, g.sum_all(g.mul(o.e_att, o.e_att)));
            }
            return total;
        };
        // reverse-mode == finite differences on the composed loss
        auto fwd = [&](Graph& g) { return loss_over(g, {seg0, seg1}); };
        CHECK(param_grad_check(fwd, refs, 1e-5, 1e-4).passed);
        // and the N=2 gradient is the sum of the two single-segment gradients
        Graph gc, ga, gb;
        GradientMap both = gc.backward(loss_over(gc, {seg0, seg1}));
        GradientMap first = ga.backward(loss_over(ga, {seg0}));
        GradientMap second = gb.backward(loss_over(gb, {seg1}));
        for (const auto& [path, gsum] : both) {
            for (std::size_t i = 0; i < gsum.numel(); ++i) {
                CHECK(gsum[i] == doctest::Approx(first.at(path)[i] + second.at(path)[i]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("attention normalization invariants over 200 random inputs") {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 1 + rng.below(5), m = 2 + rng.below(5), d = 1 + rng.below(6);
        Block block(1 + rng.below(6), d, rng);
        Tensor seg = random_tensor({k, d}, rng, -2, 2);
        std::vector<std::uint8_t> mask(m, 1);
        mask[rng.below(m)] = 0;  // at least one padded word
        Graph g;
        EncodedText e = make_text(g, random_tensor({m, d}, rng, -2, 2), mask);
        SegmentSet segs = make_segments(g, {seg});
        auto outs = segment_attention(g, segs, e, block.params);
        const Tensor& c = outs[0].c.value();
        double csum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(c[i] >= 0.0);
            csum += c[i];
        }
        CHECK(std::fabs(csum - 1.0) <= 1e-9);
        const Tensor& b = outs[0].b.value();
        for (std::size_t i = 0; i < k; ++i) {
            double rsum = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                if (!mask[j]) CHECK(b.at(i, j) == 0.0);
                rsum += b.at(i, j);
            }
            CHECK(std::fabs(rsum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("mask completeness: masked word content cannot leak") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 3, m = 5, d = 4;
        Block block(4, d, rng);
        Tensor seg = random_tensor({k, d}, rng);
        Tensor states = random_tensor({m, d}, rng);
        std::vector<std::uint8_t> mask{1, 1, 0, 1, 0};
        Tensor mutated = states;
        for (std::size_t j = 0; j < d; ++j) {
            mutated.at(2, j) = rng.uniform(-50, 50);
            mutated.at(4, j) = 0.0;
        }
        Graph g1, g2;
        auto out1 = segment_attention(g1, make_segments(g1, {seg}), make_text(g1, states, mask),
                                      block.params);
        auto out2 = segment_attention(g2, make_segments(g2, {seg}), make_text(g2, mutated, mask),
                                      block.params);
        CHECK(out1[0].v_att.value().vec() == out2[0].v_att.value().vec());
        CHECK(out1[0].e_att.value().vec() == out2[0].e_att.value().vec());
        CHECK(out1[0].c.value().vec() == out2[0].c.value().vec());
        CHECK(out1[0].b.value().vec() == out2[0].b.value().vec());
    }
}

TEST_CASE("shift invariance of the affinity matrix") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor av = random_tensor({3, 4}, rng, -2, 2);
        Tensor shifted = av;
        for (std::size_t i = 0; i < shifted.numel(); ++i) shifted[i] += 11.25;
        std::vector<std::uint8_t> mask{1, 0, 1, 1};
        Graph g;
        Var c1 = visual_attention_weights(g, make_affinity(g, av, mask));
        Var c2 = visual_attention_weights(g, make_affinity(g, shifted, mask));
        Var b1 = text_attention_weights(g, make_affinity(g, av, mask));
        Var b2 = text_attention_weights(g, make_affinity(g, shifted, mask));
        for (std::size_t i = 0; i < c1.value().numel(); ++i)
            CHECK(c1.value()[i] == doctest::Approx(c2.value()[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < b1.value().numel(); ++i)
            CHECK(b1.value()[i] == doctest::Approx(b2.value()[i]).epsilon(1e-12));
    }
}

TEST_CASE("full attention block gradient check at K=4 M=5 D=8 da=8 N=2") {
    Rng rng(9);
    Block block(8, 8, rng);
    Tensor hidden = random_tensor({8, 8}, rng);  // T=8 -> two segments of K=4
    Tensor text = random_tensor({5, 8}, rng);
    std::vector<std::uint8_t> mask{1, 1, 1, 1, 0};
    ParamRefs refs;
    block.wv.collect(refs);
    block.wq.collect(refs);
    Tensor vstates_param = hidden;
    refs.emplace_back("hidden", &vstates_param);
    Tensor text_param = text;
    refs.emplace_back("text", &text_param);
    auto fwd = [&](Graph& g) {
        Var h = g.param("hidden", vstates_param);
        SegmentSet segs = segment(g, h, 2);
        EncodedText e{g.param("text", text_param), mask};
        auto outs = segment_attention(g, segs, e, block.params);
        Var total = g.constant(Tensor::scalar(0.0));
        for (const auto& o : outs) {
            total = g.add(total, g.sum_all(g.mul(o.v_att, o.v_att)));
            total = g.add(total, g.sum_all(g.mul(o.e_att, o.e_att)));
        }
        return total;
    };
    auto report = param_grad_check(fwd, refs, 1e-5, 1e-4);
    CHECK_MESSAGE(report.passed, "max_rel_err ", report.max_rel_err);
}
