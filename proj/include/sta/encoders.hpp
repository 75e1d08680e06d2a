#pragma once

#include "sta/layers.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sta {

// Reserved token ids. PAD positions are masked out of attention; callers map
// unknown tokens to UNK before building sequences.
constexpr int kPadId = 0;
constexpr int kUnkId = 1;

// Frame features for one video after equal-spacing sampling.
struct FrameFeatureSequence {
    Tensor features;  // [T x Dv]
    std::string video_id;
};

struct TokenSequence {
    std::vector<int> ids;
    std::vector<std::uint8_t> pad_mask;  // 1 = real token, 0 = padding

    static TokenSequence from_ids(std::vector<int> ids);
    std::size_t size() const { return ids.size(); }
};

// Appends PAD up to target length (no-op if already that long).
TokenSequence pad_to(TokenSequence seq, std::size_t target);

// Token-id concatenation [q, option]; masks follow the ids.
TokenSequence concat_tokens(const TokenSequence& q, const TokenSequence& option);

// Per-token hidden states plus the padding mask they inherit.
struct EncodedText {
    Var states;  // [M x D]
    std::vector<std::uint8_t> pad_mask;
};

// N contiguous, disjoint, order-preserving windows of K encoded frame states.
struct SegmentSet {
    std::vector<Var> segments;  // each [K x D]
    std::size_t n = 0;
    std::size_t k = 0;
};

// Picks `target` frames at equal spacing: index_j = floor(j * T_raw / target).
// Frames repeat when fewer than `target` are available.
Tensor sample_frames(const Tensor& raw, std::size_t target);

// One-layer LSTM over the sampled frames; all T hidden states are kept.
Var encode_video(Graph& g, const FrameFeatureSequence& video, const LstmLayer& enc);

// Divides hidden[T x D] into n segments of K = floor(T/n) states each,
// dropping the trailing T mod n states.
SegmentSet segment(Graph& g, Var hidden, std::size_t n);

// Embedding lookup then LSTM; all M states are kept for attention.
EncodedText encode_question(Graph& g, const TokenSequence& q,
                            const EmbeddingLayer& embed, const LstmLayer& enc);

// Multi-choice text: ids concatenated [q, option], then the question path.
// Runs once per candidate option.
EncodedText encode_multichoice(Graph& g, const TokenSequence& q, const TokenSequence& option,
                               const EmbeddingLayer& embed, const LstmLayer& enc);

}  // namespace sta
