#include "sta/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace sta {

namespace {

// Expands the per-word mask to the [K x M] shape the masked ops expect.
Tensor column_mask(const std::vector<std::uint8_t>& pad_mask, std::size_t k) {
    Tensor mask({k, pad_mask.size()});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t m = 0; m < pad_mask.size(); ++m) mask.at(i, m) = pad_mask[m] ? 1.0 : 0.0;
    return mask;
}

}  // namespace

AffinityMatrix compute_affinity(Graph& g, Var ve, const EncodedText& e,
                                const LinearLayer& wv, const LinearLayer& wq) {
    const Shape vshape = ve.value().shape();
    const Shape eshape = e.states.value().shape();
    if (vshape.size() != 2 || eshape.size() != 2 || vshape[1] != eshape[1]) {
        throw DimensionError("compute_affinity: segment " + shape_str(vshape) +
                             " and text " + shape_str(eshape) + " disagree on D");
    }
    if (eshape[0] != e.pad_mask.size()) {
        throw DimensionError("compute_affinity: pad mask length " + std::to_string(e.pad_mask.size()) +
                             " does not match text " + shape_str(eshape));
    }
    Var pv = wv.forward(g, ve);        // [K x da]
    Var pq = wq.forward(g, e.states);  // [M x da]
    return AffinityMatrix{g.matmul(pv, g.transpose(pq)), e.pad_mask};
}

Var visual_attention_weights(Graph& g, const AffinityMatrix& a) {
    const Shape ashape = a.values.value().shape();
    const Tensor mask = column_mask(a.pad_mask, ashape[0]);
    Var scores = g.reduce_max(a.values, 1, &mask);  // [K]
    return g.softmax(scores, 0);
}

Var attend_video(Graph& g, Var c, Var ve) {
    const Shape cshape = c.value().shape();
    const Shape vshape = ve.value().shape();
    if (cshape.size() != 1 || vshape.size() != 2 || cshape[0] != vshape[0]) {
        throw DimensionError("attend_video: weights " + shape_str(cshape) +
                             " do not match states " + shape_str(vshape));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < cshape[0]; ++i) sum += c.value()[i];
    if (std::fabs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("attend_video: weights sum to " + std::to_string(sum) +
                                    ", expected 1");
    }
    const std::size_t k = cshape[0], d = vshape[1];
    return g.reshape(g.matmul(g.reshape(c, {1, k}), ve), {d});
}

Var text_attention_weights(Graph& g, const AffinityMatrix& a) {
    const Shape ashape = a.values.value().shape();
    const Tensor mask = column_mask(a.pad_mask, ashape[0]);
    return g.softmax(a.values, 1, &mask);
}

Var attend_text(Graph& g, Var b, const EncodedText& e) {
    const Shape bshape = b.value().shape();
    const Shape eshape = e.states.value().shape();
    if (bshape.size() != 2 || bshape[1] != eshape[0]) {
        throw DimensionError("attend_text: weights " + shape_str(bshape) +
                             " do not match text states " + shape_str(eshape));
    }
    return g.reduce_sum(g.matmul(b, e.states), 0);  // [D]
}

namespace {

// Visual-only ablation: text weights fixed to uniform over unmasked words.
// Row sums stay 1, so the downstream mass-K convention is unchanged.
Var uniform_text_weights(Graph& g, const AffinityMatrix& a) {
    const Shape ashape = a.values.value().shape();
    const std::size_t k = ashape[0], m = ashape[1];
    std::size_t unmasked = 0;
    for (std::uint8_t v : a.pad_mask) unmasked += v ? 1 : 0;
    if (unmasked == 0) throw DegenerateSliceError("text attention: all words masked");
    Tensor b({k, m});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < m; ++j)
            b.at(i, j) = a.pad_mask[j] ? 1.0 / static_cast<double>(unmasked) : 0.0;
    return g.constant(std::move(b));
}

}  // namespace

std::vector<AttentionOutputs> segment_attention(Graph& g, const SegmentSet& segs,
                                                const EncodedText& e,
                                                const AttentionParams& params) {
    if (!params.wv || !params.wq) {
        throw std::invalid_argument("segment_attention: shared projections not set");
    }
    std::vector<AttentionOutputs> outs;
    outs.reserve(segs.segments.size());
    for (const Var& ve : segs.segments) {
        AffinityMatrix a = compute_affinity(g, ve, e, *params.wv, *params.wq);
        AttentionOutputs out;
        out.c = visual_attention_weights(g, a);
        out.v_att = attend_video(g, out.c, ve);
        out.b = params.text_attention ? text_attention_weights(g, a) : uniform_text_weights(g, a);
        out.e_att = attend_text(g, out.b, e);
        if (params.mean_normalize_text) {
            out.e_att = g.affine(out.e_att, 1.0 / static_cast<double>(segs.k), 0.0);
        }
        outs.push_back(out);
    }
    return outs;
}

}  // namespace sta
