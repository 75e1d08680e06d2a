#pragma once

#include "sta/encoders.hpp"

namespace sta {

// K x M similarity scores between one video segment and the text, plus the
// text padding mask the downstream weights must honor.
struct AffinityMatrix {
    Var values;  // [K x M]
    std::vector<std::uint8_t> pad_mask;
};

// Everything one segment's two-stream attention produces.
struct AttentionOutputs {
    Var v_att;  // attended video vector [D]
    Var e_att;  // attended text vector [D]
    Var c;      // visual weights [K], sums to 1
    Var b;      // text weights [K x M], each row sums to 1 over unmasked words
};

// Shared attention configuration. The projections are identical for every
// segment; gradients accumulate across all N uses.
struct AttentionParams {
    const LinearLayer* wv = nullptr;  // [da x D], no bias
    const LinearLayer* wq = nullptr;  // [da x D], no bias
    bool text_attention = true;       // false: uniform text weights (visual-only ablation)
    bool mean_normalize_text = false; // divide the attended text vector by K
};

// A = (wv . VE^T)^T (wq . E^T): entry (k, m) is the inner product of the
// projected frame k and projected word m.
AffinityMatrix compute_affinity(Graph& g, Var ve, const EncodedText& e,
                                const LinearLayer& wv, const LinearLayer& wq);

// score_k = max over unmasked words of A[k, .]; softmax over the K scores.
Var visual_attention_weights(Graph& g, const AffinityMatrix& a);

// Convex combination of the segment's states: sum_k c_k * ve_k.
Var attend_video(Graph& g, Var c, Var ve);

// Row-wise masked softmax of A: one distribution over unmasked words per frame.
Var text_attention_weights(Graph& g, const AffinityMatrix& a);

// Column-wise sum over K of B . E: total attention mass K (the row sums each
// contribute 1); see AttentionParams::mean_normalize_text for the /K variant.
Var attend_text(Graph& g, Var b, const EncodedText& e);

// Runs the four steps above for every segment with shared parameters.
std::vector<AttentionOutputs> segment_attention(Graph& g, const SegmentSet& segs,
                                                const EncodedText& e,
                                                const AttentionParams& params);

}  // namespace sta
