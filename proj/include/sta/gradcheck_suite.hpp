#pragma once

#include "sta/model.hpp"

namespace sta {

// Geometry of the whole-model finite-difference suite.
struct GradCheckDims {
    std::size_t n_segments = 2;
    std::size_t frames = 8;    // T, so K = frames / n_segments
    std::size_t hidden = 16;   // D
    std::size_t attn_dim = 16; // da
    std::size_t m_tokens = 5;  // question+option length seen by attention
    std::size_t frame_dim = 12;
    std::size_t embed_dim = 8;
    std::size_t vocab = 10;
    std::size_t num_classes = 4;
    std::size_t num_options = 5;

    static GradCheckDims tiny() { return {}; }
    static GradCheckDims small() { return {2, 12, 24, 24, 6, 16, 10, 12, 5, 5}; }
};

struct HeadCheckResult {
    TaskKind kind = TaskKind::multichoice;
    GradCheckReport report;
    double probe_loss = 0.0;  // loss at the probe point after conditioning
    double seconds = 0.0;
};

// Builds a seeded model + example for one head, conditions the probe point
// (few Adamax steps until the loss is small enough for h=1e-5 differences to
// resolve every slope), then compares reverse mode against central
// differences for every parameter element.
HeadCheckResult check_head(TaskKind kind, const GradCheckDims& dims, std::uint64_t seed,
                           double h = 1e-5, double tol = 1e-3);

// All three heads+losses.
std::vector<HeadCheckResult> run_gradcheck_suite(const GradCheckDims& dims, std::uint64_t seed,
                                                 double h = 1e-5, double tol = 1e-3);

}  // namespace sta
