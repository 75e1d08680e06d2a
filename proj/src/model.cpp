#include "sta/model.hpp"

#include <stdexcept>

namespace sta {

StaModel StaModel::make(const StaConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    StaModel m;
    m.cfg = cfg;
    m.video_enc = LstmLayer::make("video_lstm", cfg.frame_dim, cfg.hidden, rng);
    m.embed = EmbeddingLayer::make("embed", cfg.vocab_size, cfg.embed_dim, rng);
    m.text_enc = LstmLayer::make("text_lstm", cfg.embed_dim, cfg.hidden, rng);
    m.attn_wv = LinearLayer::make("attn.wv", cfg.da(), cfg.hidden, /*has_bias=*/false, rng);
    m.attn_wq = LinearLayer::make("attn.wq", cfg.da(), cfg.hidden, /*has_bias=*/false, rng);
    m.fuse_v = LinearLayer::make("fusion.v", cfg.hidden, cfg.hidden, /*has_bias=*/true, rng);
    m.fuse_q = LinearLayer::make("fusion.q", cfg.hidden, cfg.hidden, /*has_bias=*/true, rng);
    const std::size_t head_out = cfg.task.kind == TaskKind::frameqa ? cfg.task.num_classes : 1;
    if (cfg.task.kind == TaskKind::frameqa && head_out < 2) {
        throw std::invalid_argument("frameqa model needs num_classes >= 2");
    }
    // A bias on the multichoice head cancels in every hinge margin, so it is
    // untrainable there; count and frameqa heads keep theirs.
    const bool head_bias = cfg.task.kind != TaskKind::multichoice;
    m.head = LinearLayer::make("head", head_out, cfg.hidden, head_bias, rng);
    if (cfg.weight_norm_heads) m.head.enable_weight_norm();
    return m;
}

ParamRefs StaModel::parameters() {
    ParamRefs refs;
    video_enc.collect(refs);
    embed.collect(refs);
    text_enc.collect(refs);
    attn_wv.collect(refs);
    attn_wq.collect(refs);
    fuse_v.collect(refs);
    fuse_q.collect(refs);
    head.collect(refs);
    return refs;
}

ForwardResult StaModel::forward(Graph& g, const Example& ex, const ForwardOptions& opts) const {
    if (ex.task != cfg.task.kind) {
        throw std::invalid_argument("task mismatch: example " + ex.id + " is " +
                                    task_kind_name(ex.task) + " but the model decodes " +
                                    task_kind_name(cfg.task.kind));
    }
    ForwardResult res;
    Rng drop_rng(opts.dropout_seed);
    const bool training = opts.training;

    FrameFeatureSequence video{sample_frames(ex.frames, cfg.frames), ex.id};
    Var vstates = encode_video(g, video, video_enc);
    vstates = dropout_apply(g, vstates, cfg.dropout, training, drop_rng.next_u64());
    SegmentSet segs = segment(g, vstates, cfg.n_segments);

    AttentionParams attn{&attn_wv, &attn_wq, cfg.text_attention, cfg.mean_normalize_text};

    auto text_pipeline = [&](const TokenSequence& seq, int option) -> FusedRepresentation {
        EncodedText text = encode_question(g, seq, embed, text_enc);
        text.states = dropout_apply(g, text.states, cfg.dropout, training, drop_rng.next_u64());
        auto outs = segment_attention(g, segs, text, attn);
        if (opts.want_attention) {
            for (std::size_t i = 0; i < outs.size(); ++i) {
                res.attention.push_back({option, i, outs[i].c.value(), outs[i].b.value()});
            }
        }
        FusedStreams streams = fuse_segments(g, outs);
        Var v = dropout_apply(g, streams.v_sum, cfg.dropout, training, drop_rng.next_u64());
        Var e = dropout_apply(g, streams.e_sum, cfg.dropout, training, drop_rng.next_u64());
        return fuse_modalities(g, v, e, fuse_v, fuse_q);
    };

    const TokenSequence question = TokenSequence::from_ids(ex.question_ids);

    switch (cfg.task.kind) {
        case TaskKind::multichoice: {
            if (ex.options.size() < 2) {
                throw std::invalid_argument("example " + ex.id + " has fewer than 2 options");
            }
            std::vector<FusedRepresentation> hs;
            hs.reserve(ex.options.size());
            for (std::size_t o = 0; o < ex.options.size(); ++o) {
                TokenSequence merged =
                    concat_tokens(question, TokenSequence::from_ids(ex.options[o]));
                if (opts.pad_text_to) merged = pad_to(std::move(merged), opts.pad_text_to);
                hs.push_back(text_pipeline(merged, static_cast<int>(o)));
            }
            Var scores = score_multichoice(g, hs, head);
            res.option_scores = scores.value().vec();
            res.predicted = static_cast<int>(argmax_lowest(scores.value()));
            Var s_pos = g.slice_rows(scores, static_cast<std::size_t>(ex.answer), 1);
            std::vector<Var> s_negs;
            for (std::size_t o = 0; o < ex.options.size(); ++o) {
                if (static_cast<int>(o) != ex.answer) s_negs.push_back(g.slice_rows(scores, o, 1));
            }
            res.loss = hinge_loss(g, s_pos, s_negs);
            break;
        }
        case TaskKind::count: {
            TokenSequence seq = opts.pad_text_to ? pad_to(question, opts.pad_text_to) : question;
            FusedRepresentation h = text_pipeline(seq, -1);
            Var raw = predict_count_raw(g, h, head);
            res.raw_count = raw.value()[0];
            res.predicted = count_answer_from_raw(res.raw_count);
            res.loss = mse_loss(g, g.reshape(raw, {1}), ex.answer);
            break;
        }
        case TaskKind::frameqa: {
            TokenSequence seq = opts.pad_text_to ? pad_to(question, opts.pad_text_to) : question;
            FusedRepresentation h = text_pipeline(seq, -1);
            Var logits = frame_logits(g, h, head);
            Var probs = g.softmax(logits, 0);
            res.class_probs = probs.value().vec();
            res.predicted = static_cast<int>(argmax_lowest(probs.value()));
            res.loss = cross_entropy_with_logits(g, logits, ex.answer);
            break;
        }
    }
    return res;
}

GradCheckReport model_grad_check(StaModel& model, const Example& ex, double h, double tol) {
    ParamRefs refs = model.parameters();
    auto fwd = [&](Graph& g) { return model.forward(g, ex, ForwardOptions{}).loss; };
    return param_grad_check(fwd, refs, h, tol);
}

}  // namespace sta
