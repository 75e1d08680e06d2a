#pragma once

#include "sta/dataio.hpp"
#include "sta/grad_check.hpp"

namespace sta {

// Shapes and switches for one model instance. hidden is the paper-scale
// default; desk-scale runs configure it down.
struct StaConfig {
    std::size_t frame_dim = 2048;  // Dv
    std::size_t frames = 36;       // T after equal-spacing sampling
    std::size_t n_segments = 1;    // N
    std::size_t hidden = 512;      // D
    std::size_t attn_dim = 0;      // da, 0 = hidden
    std::size_t embed_dim = 64;    // word embedding width
    std::size_t vocab_size = 2;
    TaskSpec task;
    bool text_attention = true;        // off = visual-only (STA-V) ablation
    bool mean_normalize_text = false;  // divide attended text vectors by K
    bool weight_norm_heads = false;
    double dropout = 0.2;

    std::size_t da() const { return attn_dim ? attn_dim : hidden; }
};

struct ForwardOptions {
    bool training = false;          // enables dropout
    std::uint64_t dropout_seed = 0;
    bool want_attention = false;    // capture c/B per segment
    std::size_t pad_text_to = 0;    // pad the (merged) token sequence up to this length
};

struct AttentionRecord {
    int option = -1;  // -1 outside multichoice
    std::size_t segment = 0;
    Tensor c;  // [K]
    Tensor b;  // [K x M]
};

struct ForwardResult {
    Var loss;
    int predicted = -1;  // option index, count answer, or class id
    double raw_count = 0.0;
    std::vector<double> option_scores;
    std::vector<double> class_probs;
    std::vector<AttentionRecord> attention;
};

// The full architecture: segmented video LSTM, text encoder, shared
// two-stream attention, gated fusion and one task head.
struct StaModel {
    StaConfig cfg;
    LstmLayer video_enc;
    EmbeddingLayer embed;
    LstmLayer text_enc;
    LinearLayer attn_wv;
    LinearLayer attn_wq;
    LinearLayer fuse_v;
    LinearLayer fuse_q;
    LinearLayer head;

    static StaModel make(const StaConfig& cfg, std::uint64_t seed);

    ParamRefs parameters();

    // Builds the whole computation for one example, loss included. The same
    // attention parameters serve every segment and every candidate option.
    ForwardResult forward(Graph& g, const Example& ex, const ForwardOptions& opts) const;
};

// Central-difference check over every parameter of the model on one example.
GradCheckReport model_grad_check(StaModel& model, const Example& ex,
                                 double h = 1e-5, double tol = 1e-3);

}  // namespace sta
