#pragma once

#include "sta/model.hpp"

#include <iosfwd>

namespace sta {

// Adamax: first moment plus per-parameter infinity norm.
struct AdamaxState {
    double lr = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> u;
};

// m <- b1*m + (1-b1)*g;  u <- max(b2*u, |g|);  theta -= lr/(1-b1^t) * m/(u+eps).
// A NaN gradient aborts with the parameter path.
void adamax_step(AdamaxState& state, const ParamRefs& params, const GradientMap& grads);

// Scales every gradient by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm.
double clip_global_norm(GradientMap& grads, double max_norm);

struct TrainConfig {
    std::size_t batch_size = 128;
    std::size_t epochs = 30;
    double clip_norm = 10.0;
    double dropout_p = 0.2;
    std::uint64_t seed = 0;
    std::size_t n_segments = 1;
    std::size_t hidden_d = 512;
    TaskSpec task;
    std::size_t threads = 0;  // worker fan-out; 0 = OpenMP default, 1 = serial
};

struct EpochReport {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double metric = 0.0;  // train accuracy, or rounded-prediction MSE for count
    double wall_s = 0.0;
};

// One pass over the dataset: seeded shuffle, fixed-size batches with the last
// partial batch kept, per-example graphs fanned out to workers, gradients
// reduced in example order, then clip + Adamax. Bitwise deterministic for a
// fixed seed regardless of thread count.
EpochReport run_epoch(StaModel& model, const std::vector<Example>& dataset,
                      const TrainConfig& cfg, AdamaxState& opt,
                      std::size_t epoch, Rng& shuffle_rng);

struct MetricReport {
    TaskKind kind = TaskKind::multichoice;
    std::size_t examples = 0;
    double accuracy = 0.0;     // multichoice / frameqa
    double mse_rounded = 0.0;  // count headline metric
    double mse_raw = 0.0;      // count, unrounded regression output

    double headline() const { return kind == TaskKind::count ? mse_rounded : accuracy; }
};

// Dropout-free evaluation. Accuracy for multichoice/frameqa; for count, MSE
// between the clamped rounded prediction and the true answer (plus the raw
// variant for reference).
MetricReport evaluate(const StaModel& model, const std::vector<Example>& dataset,
                      const TaskSpec& task, std::size_t threads = 0);

// Adamax on a single example until its loss drops to target_loss (or
// max_steps runs out). Returns the final loss. Finite-difference checks use
// this to condition the probe point: central differences at h=1e-5 resolve
// slopes only down to ulp(|loss|)/2h, so the loss must be O(1) or smaller
// for small-gradient parameters to verify cleanly.
double fit_example(StaModel& model, const Example& ex, double target_loss,
                   std::size_t max_steps, double lr = 1e-2);

// One structured metrics record: {"epoch", "split", "loss", "metric",
// "wall_time_s"}. wall_time_s is the only field that varies between
// otherwise identical runs.
void append_metric_line(std::ostream& os, std::size_t epoch, const std::string& split,
                        double loss, double metric, double wall_s);

}  // namespace sta
