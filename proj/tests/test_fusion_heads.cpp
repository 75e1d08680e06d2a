#include <doctest.h>

#include "sta/fusion.hpp"
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

AttentionOutputs fake_outputs(Graph& g, const Tensor& v, const Tensor& e) {
    AttentionOutputs o;
    o.v_att = g.constant(v);
    o.e_att = g.constant(e);
    o.c = g.constant(Tensor({1}, 1.0));
    o.b = g.constant(Tensor({1, 1}, 1.0));
    return o;
}

}  // namespace

TEST_CASE("fuse_segments") {
    Rng rng(1);
    Tensor v0 = random_tensor({4}, rng), e0 = random_tensor({4}, rng);
    Tensor v1 = random_tensor({4}, rng), e1 = random_tensor({4}, rng);
    SUBCASE("N=1 is the identity") {
        Graph g;
        auto s = fuse_segments(g, {fake_outputs(g, v0, e0)});
        CHECK(s.v_sum.value().vec() == v0.vec());
        CHECK(s.e_sum.value().vec() == e0.vec());
    }
    SUBCASE("two identical segments double the vectors") {
        Graph g;
        auto s = fuse_segments(g, {fake_outputs(g, v0, e0), fake_outputs(g, v0, e0)});
        for (std::size_t i = 0; i < 4; ++i) CHECK(s.v_sum.value()[i] == doctest::Approx(2 * v0[i]));
    }
    SUBCASE("order invariance") {
        Graph g;
        auto ab = fuse_segments(g, {fake_outputs(g, v0, e0), fake_outputs(g, v1, e1)});
        auto ba = fuse_segments(g, {fake_outputs(g, v1, e1), fake_outputs(g, v0, e0)});
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(ab.v_sum.value()[i] == doctest::Approx(ba.v_sum.value()[i]).epsilon(1e-15));
            CHECK(ab.e_sum.value()[i] == doctest::Approx(ba.e_sum.value()[i]).epsilon(1e-15));
        }
    }
    SUBCASE("empty sequence") {
        Graph g;
        CHECK_THROWS_AS(fuse_segments(g, {}), std::invalid_argument);
    }
}

TEST_CASE("fuse_modalities") {
    Rng rng(2);
    const std::size_t d = 4;
    SUBCASE("an all-negative branch zeroes H") {
        LinearLayer wfv = LinearLayer::make("fv", d, d, true, rng);
        LinearLayer wfq = LinearLayer::make("fq", d, d, true, rng);
        wfv.weight = Tensor({d, d});
        wfv.bias = Tensor({d}, -1.0);  // left branch relu output is 0
        Graph g;
        auto h = fuse_modalities(g, g.constant(random_tensor({d}, rng)),
                                 g.constant(random_tensor({d}, rng)), wfv, wfq);
        for (std::size_t i = 0; i < d; ++i) CHECK(h.h.value()[i] == 0.0);
    }
    SUBCASE("identity weights and zero bias on non-negative inputs: elementwise product") {
        LinearLayer wfv = LinearLayer::make("fv", d, d, true, rng);
        LinearLayer wfq = LinearLayer::make("fq", d, d, true, rng);
        wfv.weight = Tensor({d, d});
        wfq.weight = Tensor({d, d});
        for (std::size_t i = 0; i < d; ++i) {
            wfv.weight.at(i, i) = 1.0;
            wfq.weight.at(i, i) = 1.0;
        }
        wfv.bias = Tensor({d});
        wfq.bias = Tensor({d});
        Tensor v = random_tensor({d}, rng, 0.0, 1.0);
        Tensor e = random_tensor({d}, rng, 0.0, 1.0);
        Graph g;
        auto h = fuse_modalities(g, g.constant(v), g.constant(e), wfv, wfq);
        for (std::size_t i = 0; i < d; ++i) CHECK(h.h.value()[i] == doctest::Approx(v[i] * e[i]));
    }
    SUBCASE("matches the formula oracle and stays non-negative") {
        for (int trial = 0; trial < 50; ++trial) {
            LinearLayer wfv = LinearLayer::make("fv", d, d, true, rng);
            LinearLayer wfq = LinearLayer::make("fq", d, d, true, rng);
            wfv.bias = random_tensor({d}, rng);
            wfq.bias = random_tensor({d}, rng);
            Tensor v = random_tensor({d}, rng), e = random_tensor({d}, rng);
            Graph g;
            auto h = fuse_modalities(g, g.constant(v), g.constant(e), wfv, wfq);
            auto expect = ref::fuse_modalities(v.vec(), e.vec(), wfv.weight.vec(), wfv.bias.vec(),
                                               wfq.weight.vec(), wfq.bias.vec(), d);
            for (std::size_t i = 0; i < d; ++i) {
                CHECK(std::fabs(h.h.value()[i] - expect[i]) <= 1e-12);
                CHECK(h.h.value()[i] >= 0.0);
            }
        }
    }
    SUBCASE("width mismatch") {
        LinearLayer wfv = LinearLayer::make("fv", d, d, true, rng);
        LinearLayer wfq = LinearLayer::make("fq", d, d, true, rng);
        Graph g;
        CHECK_THROWS_AS(fuse_modalities(g, g.constant(Tensor({d})), g.constant(Tensor({d + 1})),
                                        wfv, wfq),
                        DimensionError);
    }
}

TEST_CASE("score_multichoice") {
    Rng rng(3);
    const std::size_t d = 4;
    LinearLayer head = LinearLayer::make("head", 1, d, true, rng);
    SUBCASE("identical fused vectors tie; prediction breaks to option 0") {
        Graph g;
        Tensor h = random_tensor({d}, rng, 0.0, 1.0);
        std::vector<FusedRepresentation> hs(3, FusedRepresentation{g.constant(h)});
        Var scores = score_multichoice(g, hs, head);
        CHECK(scores.value()[0] == scores.value()[1]);
        CHECK(argmax_lowest(scores.value()) == 0);
    }
    SUBCASE("zero weights leave only the bias") {
        LinearLayer zero = head;
        zero.weight = Tensor({1, d});
        zero.bias = Tensor::row({0.75});
        Graph g;
        std::vector<FusedRepresentation> hs{FusedRepresentation{g.constant(random_tensor({d}, rng))},
                                            FusedRepresentation{g.constant(random_tensor({d}, rng))}};
        Var scores = score_multichoice(g, hs, zero);
        CHECK(scores.value()[0] == doctest::Approx(0.75));
        CHECK(scores.value()[1] == doctest::Approx(0.75));
    }
    SUBCASE("five options match the per-option dot-product oracle") {
        Graph g;
        std::vector<FusedRepresentation> hs;
        std::vector<Tensor> raw;
        for (int o = 0; o < 5; ++o) {
            raw.push_back(random_tensor({d}, rng));
            hs.push_back(FusedRepresentation{g.constant(raw.back())});
        }
        Var scores = score_multichoice(g, hs, head);
        for (int o = 0; o < 5; ++o) {
            double expect = head.bias[0];
            for (std::size_t j = 0; j < d; ++j) expect += head.weight.at(0, j) * raw[static_cast<std::size_t>(o)][j];
            CHECK(scores.value()[static_cast<std::size_t>(o)] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    SUBCASE("fewer than two options") {
        Graph g;
        std::vector<FusedRepresentation> hs{FusedRepresentation{g.constant(Tensor({d}))}};
        CHECK_THROWS_AS(score_multichoice(g, hs, head), std::invalid_argument);
    }
    SUBCASE("shifting every score preserves the argmax") {
        Tensor s = random_tensor({5}, rng);
        Tensor shifted = s;
        for (std::size_t i = 0; i < 5; ++i) shifted[i] += 3.25;
        CHECK(argmax_lowest(s) == argmax_lowest(shifted));
    }
}

TEST_CASE("hinge loss") {
    Graph g;
    auto scalar = [&](double v) { return g.constant(Tensor::scalar(v)); };
    SUBCASE("satisfied margin") { CHECK(hinge_loss(g, scalar(2), {scalar(0)}).value()[0] == 0.0); }
    SUBCASE("margin exactly violated by one") {
        CHECK(hinge_loss(g, scalar(0), {scalar(0)}).value()[0] == doctest::Approx(1.0));
    }
    SUBCASE("sums over the negatives") {
        CHECK(hinge_loss(g, scalar(0.5), {scalar(0.2), scalar(0.6)}).value()[0] ==
              doctest::Approx(1.8));
    }
    SUBCASE("no negatives") {
        CHECK_THROWS_AS(hinge_loss(g, scalar(1), {}), std::invalid_argument);
    }
    SUBCASE("zero exactly when every margin is satisfied") {
        Rng rng(4);
        for (int trial = 0; trial < 100; ++trial) {
            const double sp = rng.uniform(-2, 2);
            std::vector<double> negs;
            bool satisfied = true;
            std::vector<Var> neg_vars;
            for (int n = 0; n < 3; ++n) {
                negs.push_back(rng.uniform(-2, 2));
                satisfied = satisfied && sp >= 1.0 + negs.back();
                neg_vars.push_back(scalar(negs.back()));
            }
            const double loss = hinge_loss(g, scalar(sp), neg_vars).value()[0];
            CHECK((loss == 0.0) == satisfied);
        }
    }
}

TEST_CASE("count head") {
    SUBCASE("rounding and clamping") {
        CHECK(count_answer_from_raw(3.4) == 3);
        CHECK(count_answer_from_raw(3.5) == 4);  // half rounds up
        CHECK(count_answer_from_raw(10.7) == 10);
        CHECK(count_answer_from_raw(-0.3) == 0);
        CHECK(count_answer_from_raw(1e308) == 10);
        CHECK(count_answer_from_raw(-1e308) == 0);
    }
    SUBCASE("answers stay in range for arbitrary raw values") {
        Rng rng(5);
        for (int trial = 0; trial < 200; ++trial) {
            const int a = count_answer_from_raw(rng.uniform(-1e6, 1e6));
            CHECK(a >= 0);
            CHECK(a <= 10);
        }
    }
    SUBCASE("mse value and gradient") {
        Graph g;
        Tensor raw = Tensor::scalar(3.0);
        raw.requires_grad = true;
        Var rv = g.leaf(raw);
        Var loss = mse_loss(g, rv, 5);
        CHECK(loss.value()[0] == doctest::Approx(4.0));
        g.backward(loss);
        CHECK(g.grad(rv)[0] == doctest::Approx(2.0 * (3.0 - 5.0)));
        // and against central differences
        auto report = grad_check(
            [](Graph& gg, Var x) { return mse_loss(gg, x, 5); }, Tensor::scalar(3.0));
        CHECK(report.passed);
    }
    SUBCASE("mse target range") {
        Graph g;
        Var rv = g.constant(Tensor::scalar(1.0));
        CHECK_THROWS_AS(mse_loss(g, rv, 11), std::out_of_range);
        CHECK_THROWS_AS(mse_loss(g, rv, -1), std::out_of_range);
    }
    SUBCASE("raw equals target gives zero") {
        Graph g;
        CHECK(mse_loss(g, g.constant(Tensor::scalar(7.0)), 7).value()[0] == 0.0);
    }
}

TEST_CASE("frame classification head") {
    Rng rng(6);
    const std::size_t d = 4;
    SUBCASE("zero logits give the uniform distribution") {
        LinearLayer head = LinearLayer::make("head", 4, d, true, rng);
        head.weight = Tensor({4, d});
        head.bias = Tensor({4});
        Graph g;
        Var probs = classify_frame(g, FusedRepresentation{g.constant(Tensor({d}, 0.5))}, head);
        for (std::size_t i = 0; i < 4; ++i) CHECK(probs.value()[i] == doctest::Approx(0.25));
    }
    SUBCASE("probabilities sum to one and match the softmax oracle") {
        LinearLayer head = LinearLayer::make("head", 5, d, true, rng);
        head.bias = random_tensor({5}, rng);
        for (int trial = 0; trial < 50; ++trial) {
            Graph g;
            FusedRepresentation h{g.constant(random_tensor({d}, rng, 0.0, 2.0))};
            Var probs = classify_frame(g, h, head);
            double sum = 0.0;
            for (std::size_t i = 0; i < 5; ++i) {
                CHECK(probs.value()[i] >= 0.0);
                sum += probs.value()[i];
            }
            CHECK(std::fabs(sum - 1.0) <= 1e-9);
            Var logits = frame_logits(g, h, head);
            auto expect = ref::softmax_vec(logits.value().vec());
            for (std::size_t i = 0; i < 5; ++i)
                CHECK(std::fabs(probs.value()[i] - expect[i]) <= 1e-12);
        }
    }
}

TEST_CASE("cross-entropy loss") {
    SUBCASE("uniform over four classes costs log 4") {
        Graph g;
        Var probs = g.constant(Tensor({4}, 0.25));
        CHECK(cross_entropy_loss(g, probs, 2).value()[0] == doctest::Approx(std::log(4.0)));
        CHECK(cross_entropy_loss(g, probs, 2).value()[0] == doctest::Approx(1.38629).epsilon(1e-5));
    }
    SUBCASE("a certain prediction costs nothing") {
        Graph g;
        Var logits = g.constant(Tensor::row({50.0, 0.0, 0.0}));
        CHECK(cross_entropy_with_logits(g, logits, 0).value()[0] == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("stable form equals the naive softmax-log path") {
        Rng rng(7);
        for (int trial = 0; trial < 30; ++trial) {
            Tensor z = random_tensor({6}, rng, -5, 5);
            const int target = static_cast<int>(rng.below(6));
            Graph g;
            Var logits = g.constant(z);
            const double stable = cross_entropy_with_logits(g, logits, target).value()[0];
            const double naive = cross_entropy_loss(g, g.softmax(logits, 0), target).value()[0];
            CHECK(std::fabs(stable - naive) <= 1e-10);
        }
    }
    SUBCASE("target out of range") {
        Graph g;
        CHECK_THROWS_AS(cross_entropy_with_logits(g, g.constant(Tensor({3})), 3), std::out_of_range);
        CHECK_THROWS_AS(cross_entropy_loss(g, g.constant(Tensor({3}, 1.0 / 3)), -1), std::out_of_range);
    }
}

TEST_CASE("head parameter gradients at desk dims") {
    Rng rng(8);
    const std::size_t d = 6;
    LinearLayer wfv = LinearLayer::make("fv", d, d, true, rng);
    LinearLayer wfq = LinearLayer::make("fq", d, d, true, rng);
    Tensor v = random_tensor({d}, rng), e = random_tensor({d}, rng);

    SUBCASE("multichoice + hinge") {
        LinearLayer head = LinearLayer::make("head", 1, d, true, rng);
        ParamRefs refs;
        wfv.collect(refs);
        wfq.collect(refs);
        head.collect(refs);
        auto fwd = [&](Graph& g) {
            std::vector<FusedRepresentation> hs;
            hs.push_back(fuse_modalities(g, g.constant(v), g.constant(e), wfv, wfq));
            hs.push_back(fuse_modalities(g, g.constant(e), g.constant(v), wfv, wfq));
            Var scores = score_multichoice(g, hs, head);
            return hinge_loss(g, g.slice_rows(scores, 0, 1), {g.slice_rows(scores, 1, 1)});
        };
        CHECK(param_grad_check(fwd, refs, 1e-5, 1e-4).passed);
    }
    SUBCASE("count + mse") {
        LinearLayer head = LinearLayer::make("head", 1, d, true, rng);
        ParamRefs refs;
        wfv.collect(refs);
        wfq.collect(refs);
        head.collect(refs);
        auto fwd = [&](Graph& g) {
            auto h = fuse_modalities(g, g.constant(v), g.constant(e), wfv, wfq);
            return mse_loss(g, predict_count_raw(g, h, head), 4);
        };
        CHECK(param_grad_check(fwd, refs, 1e-5, 1e-4).passed);
    }
    SUBCASE("frameqa + cross entropy") {
        LinearLayer head = LinearLayer::make("head", 3, d, true, rng);
        ParamRefs refs;
        wfv.collect(refs);
        wfq.collect(refs);
        head.collect(refs);
        auto fwd = [&](Graph& g) {
            auto h = fuse_modalities(g, g.constant(v), g.constant(e), wfv, wfq);
            return cross_entropy_with_logits(g, frame_logits(g, h, head), 1);
        };
        CHECK(param_grad_check(fwd, refs, 1e-5, 1e-4).passed);
    }
}
