#include "sta/gradcheck_suite.hpp"

#include "sta/training.hpp"

#include <omp.h>

namespace sta {

namespace {

StaConfig config_for(TaskKind kind, const GradCheckDims& d) {
    StaConfig cfg;
    cfg.frame_dim = d.frame_dim;
    cfg.frames = d.frames;
    cfg.n_segments = d.n_segments;
    cfg.hidden = d.hidden;
    cfg.attn_dim = d.attn_dim;
    cfg.embed_dim = d.embed_dim;
    cfg.vocab_size = d.vocab;
    cfg.task.kind = kind;
    cfg.task.num_classes = d.num_classes;
    cfg.task.num_options = d.num_options;
    return cfg;
}

Example example_for(TaskKind kind, const GradCheckDims& d, Rng& rng) {
    Example ex;
    ex.id = "gradcheck";
    ex.task = kind;
    ex.frames = Tensor({d.frames, d.frame_dim});
    for (std::size_t i = 0; i < ex.frames.numel(); ++i) ex.frames[i] = rng.uniform(-1, 1);
    const auto tok = [&](std::size_t i) { return static_cast<int>(2 + i % (d.vocab - 2)); };
    if (kind == TaskKind::multichoice) {
        // question + 1-token option = m_tokens states under attention
        for (std::size_t i = 0; i + 1 < d.m_tokens; ++i) ex.question_ids.push_back(tok(i));
        for (std::size_t o = 0; o < d.num_options; ++o) {
            ex.options.push_back({tok(d.m_tokens + o)});
        }
        ex.answer = 1;
    } else {
        for (std::size_t i = 0; i < d.m_tokens; ++i) ex.question_ids.push_back(tok(i));
        ex.answer = kind == TaskKind::count ? 4 : 2;
    }
    return ex;
}

}  // namespace

HeadCheckResult check_head(TaskKind kind, const GradCheckDims& dims, std::uint64_t seed,
                           double h, double tol) {
    const double t0 = omp_get_wtime();
    Rng rng(seed * 977 + 101);
    StaModel model = StaModel::make(config_for(kind, dims), seed * 31 + 55);
    Example ex = example_for(kind, dims, rng);
    HeadCheckResult result;
    result.kind = kind;
    // Two-stage landing: a fast descent, then a gentle one so the hinge loss
    // settles with a few margins still active instead of collapsing to zero
    // (which would zero every gradient and make the comparison vacuous).
    fit_example(model, ex, 0.8, 400, 1e-2);
    result.probe_loss = fit_example(model, ex, 0.45, 400, 2e-3);
    result.report = model_grad_check(model, ex, h, tol);
    result.seconds = omp_get_wtime() - t0;
    return result;
}

std::vector<HeadCheckResult> run_gradcheck_suite(const GradCheckDims& dims, std::uint64_t seed,
                                                 double h, double tol) {
    std::vector<HeadCheckResult> results;
    for (TaskKind kind : {TaskKind::multichoice, TaskKind::count, TaskKind::frameqa}) {
        results.push_back(check_head(kind, dims, seed, h, tol));
    }
    return results;
}

}  // namespace sta
