#pragma once

#include "sta/attention.hpp"

namespace sta {

enum class TaskKind { multichoice, count, frameqa };

const char* task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

// Answer-decoder configuration. Count answers live in the fixed range 0..10.
struct TaskSpec {
    TaskKind kind = TaskKind::multichoice;
    std::size_t num_options = 5;  // multichoice only, >= 2
    std::size_t num_classes = 0;  // frameqa only

    static constexpr int kCountMin = 0;
    static constexpr int kCountMax = 10;
};

// Gated multimodal representation H; elementwise product of two relu
// branches, so every coordinate is non-negative.
struct FusedRepresentation {
    Var h;  // [D]
};

// Plain sums over segments: V = sum_i V_i, E = sum_i E_i.
struct FusedStreams {
    Var v_sum;
    Var e_sum;
};
FusedStreams fuse_segments(Graph& g, const std::vector<AttentionOutputs>& outs);

// H = relu(wfv.v + bv) * relu(wfq.e + bq).
FusedRepresentation fuse_modalities(Graph& g, Var v, Var e,
                                    const LinearLayer& wfv, const LinearLayer& wfq);

// One real-valued score per candidate; prediction is the argmax with ties
// broken toward the lowest option index.
Var score_multichoice(Graph& g, const std::vector<FusedRepresentation>& h_per_option,
                      const LinearLayer& head);  // [num_options]

// Lowest index among maximal entries.
std::size_t argmax_lowest(const Tensor& scores);

// sum_n max(0, 1 + s_n - s_p) over every negative.
Var hinge_loss(Graph& g, Var s_pos, const std::vector<Var>& s_negs);

// Unbounded regression output used by the loss; the integer answer applies
// round-half-up then clamps into 0..10 and is inference-only.
Var predict_count_raw(Graph& g, const FusedRepresentation& h, const LinearLayer& head);  // [1]
int count_answer_from_raw(double raw);

// (raw - target)^2; target must be a valid count.
Var mse_loss(Graph& g, Var raw, int target);

// Class probabilities o = softmax(head.H + b).
Var classify_frame(Graph& g, const FusedRepresentation& h, const LinearLayer& head);  // [C]
Var frame_logits(Graph& g, const FusedRepresentation& h, const LinearLayer& head);    // [C]

// -log(o[target]) computed from probabilities; the naive counterpart of the
// log-sum-exp path used for training.
Var cross_entropy_loss(Graph& g, Var probs, int target);

// Stable form, straight from logits.
Var cross_entropy_with_logits(Graph& g, Var logits, int target);

}  // namespace sta
