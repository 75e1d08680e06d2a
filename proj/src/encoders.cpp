#include "sta/encoders.hpp"

#include <stdexcept>

namespace sta {

TokenSequence TokenSequence::from_ids(std::vector<int> ids) {
    TokenSequence seq;
    seq.pad_mask.reserve(ids.size());
    for (int id : ids) seq.pad_mask.push_back(id == kPadId ? 0 : 1);
    seq.ids = std::move(ids);
    return seq;
}

TokenSequence pad_to(TokenSequence seq, std::size_t target) {
    while (seq.ids.size() < target) {
        seq.ids.push_back(kPadId);
        seq.pad_mask.push_back(0);
    }
    return seq;
}

TokenSequence concat_tokens(const TokenSequence& q, const TokenSequence& option) {
    TokenSequence out;
    out.ids = q.ids;
    out.ids.insert(out.ids.end(), option.ids.begin(), option.ids.end());
    out.pad_mask = q.pad_mask;
    out.pad_mask.insert(out.pad_mask.end(), option.pad_mask.begin(), option.pad_mask.end());
    return out;
}

Tensor sample_frames(const Tensor& raw, std::size_t target) {
    if (raw.rank() != 2 || raw.dim(0) == 0) {
        throw DimensionError("sample_frames: expected a non-empty [T x Dv] tensor, got " +
                             shape_str(raw.shape()));
    }
    if (target == 0) throw std::invalid_argument("sample_frames: target must be positive");
    const std::size_t t_raw = raw.dim(0), dv = raw.dim(1);
    Tensor out({target, dv});
    for (std::size_t j = 0; j < target; ++j) {
        const std::size_t src = j * t_raw / target;
        for (std::size_t col = 0; col < dv; ++col) out.at(j, col) = raw.at(src, col);
    }
    return out;
}

Var encode_video(Graph& g, const FrameFeatureSequence& video, const LstmLayer& enc) {
    return enc.sequence(g, g.constant(video.features));
}

SegmentSet segment(Graph& g, Var hidden, std::size_t n) {
    const Shape hshape = hidden.value().shape();
    if (hshape.size() != 2) {
        throw DimensionError("segment: expected [T x D] hidden states, got " + shape_str(hshape));
    }
    const std::size_t t = hshape[0];
    if (n == 0) throw std::invalid_argument("segment: n must be at least 1");
    if (n > t) {
        throw std::invalid_argument("segment: n=" + std::to_string(n) + " exceeds T=" + std::to_string(t));
    }
    SegmentSet set;
    set.n = n;
    set.k = t / n;
    set.segments.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        set.segments.push_back(g.slice_rows(hidden, i * set.k, set.k));
    }
    return set;
}

EncodedText encode_question(Graph& g, const TokenSequence& q,
                            const EmbeddingLayer& embed, const LstmLayer& enc) {
    if (q.ids.empty()) throw std::invalid_argument("encode_question: empty token sequence");
    Var embedded = embed.forward(g, q.ids);  // [M x E]
    return EncodedText{enc.sequence(g, embedded), q.pad_mask};
}

EncodedText encode_multichoice(Graph& g, const TokenSequence& q, const TokenSequence& option,
                               const EmbeddingLayer& embed, const LstmLayer& enc) {
    if (q.ids.empty() || option.ids.empty()) {
        throw std::invalid_argument("encode_multichoice: question and option must both be non-empty");
    }
    return encode_question(g, concat_tokens(q, option), embed, enc);
}

}  // namespace sta
