#include "sta/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace sta {

const char* task_kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::multichoice: return "multichoice";
        case TaskKind::count: return "count";
        case TaskKind::frameqa: return "frameqa";
    }
    return "?";
}

TaskKind task_kind_from_name(const std::string& name) {
    if (name == "multichoice") return TaskKind::multichoice;
    if (name == "count") return TaskKind::count;
    if (name == "frameqa") return TaskKind::frameqa;
    throw std::invalid_argument("unknown task kind: " + name);
}

FusedStreams fuse_segments(Graph& g, const std::vector<AttentionOutputs>& outs) {
    if (outs.empty()) throw std::invalid_argument("fuse_segments: empty segment sequence");
    Var v = outs[0].v_att;
    Var e = outs[0].e_att;
    for (std::size_t i = 1; i < outs.size(); ++i) {
        v = g.add(v, outs[i].v_att);
        e = g.add(e, outs[i].e_att);
    }
    return {v, e};
}

FusedRepresentation fuse_modalities(Graph& g, Var v, Var e,
                                    const LinearLayer& wfv, const LinearLayer& wfq) {
    const Shape vshape = v.value().shape();
    const Shape eshape = e.value().shape();
    if (vshape != eshape) {
        throw DimensionError("fuse_modalities: stream widths differ, " + shape_str(vshape) +
                             " vs " + shape_str(eshape));
    }
    Var left = g.relu(wfv.forward(g, v));
    Var right = g.relu(wfq.forward(g, e));
    return FusedRepresentation{g.mul(left, right)};
}

Var score_multichoice(Graph& g, const std::vector<FusedRepresentation>& h_per_option,
                      const LinearLayer& head) {
    if (h_per_option.size() < 2) {
        throw std::invalid_argument("score_multichoice: need at least 2 options, got " +
                                    std::to_string(h_per_option.size()));
    }
    std::vector<Var> scores;
    scores.reserve(h_per_option.size());
    for (const auto& h : h_per_option) scores.push_back(head.forward(g, h.h));  // [1]
    return g.reshape(g.stack_rows(scores), {scores.size()});
}

std::size_t argmax_lowest(const Tensor& scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.numel(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

Var hinge_loss(Graph& g, Var s_pos, const std::vector<Var>& s_negs) {
    if (s_negs.empty()) throw std::invalid_argument("hinge_loss: need at least one negative");
    Var total = g.constant(Tensor::scalar(0.0));
    for (const Var& s_n : s_negs) {
        total = g.add(total, g.relu(g.affine(g.sub(s_n, s_pos), 1.0, 1.0)));
    }
    return total;
}

Var predict_count_raw(Graph& g, const FusedRepresentation& h, const LinearLayer& head) {
    return head.forward(g, h.h);  // [1]
}

int count_answer_from_raw(double raw) {
    const double rounded = std::floor(raw + 0.5);  // round half up
    if (!(rounded >= TaskSpec::kCountMin)) return TaskSpec::kCountMin;  // also catches NaN
    if (rounded > TaskSpec::kCountMax) return TaskSpec::kCountMax;
    return static_cast<int>(rounded);
}

Var mse_loss(Graph& g, Var raw, int target) {
    if (target < TaskSpec::kCountMin || target > TaskSpec::kCountMax) {
        throw std::out_of_range("mse_loss: target " + std::to_string(target) + " outside 0..10");
    }
    Var diff = g.sub(raw, g.constant(Tensor::scalar(static_cast<double>(target))));
    return g.mul(diff, diff);
}

Var frame_logits(Graph& g, const FusedRepresentation& h, const LinearLayer& head) {
    return head.forward(g, h.h);
}

Var classify_frame(Graph& g, const FusedRepresentation& h, const LinearLayer& head) {
    if (head.out < 2) {
        throw std::invalid_argument("classify_frame: need at least 2 classes");
    }
    return g.softmax(frame_logits(g, h, head), 0);
}

Var cross_entropy_loss(Graph& g, Var probs, int target) {
    const Shape pshape = probs.value().shape();
    if (pshape.size() != 1) {
        throw DimensionError("cross_entropy_loss: expected a probability vector, got " +
                             shape_str(pshape));
    }
    if (target < 0 || static_cast<std::size_t>(target) >= pshape[0]) {
        throw std::out_of_range("cross_entropy_loss: target class " + std::to_string(target) +
                                " out of range");
    }
    return g.affine(g.log(g.slice_rows(probs, static_cast<std::size_t>(target), 1)), -1.0, 0.0);
}

Var cross_entropy_with_logits(Graph& g, Var logits, int target) {
    return g.cross_entropy_logits(logits, target);
}

}  // namespace sta
