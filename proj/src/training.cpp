#include "sta/training.hpp"

#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace sta {

void adamax_step(AdamaxState& state, const ParamRefs& params, const GradientMap& grads) {
    ++state.step;
    const double bias_fix = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    for (const auto& [path, tensor] : params) {
        auto git = grads.find(path);
        if (git == grads.end()) continue;  // parameter unused by this loss
        const Tensor& g = git->second;
        for (std::size_t i = 0; i < g.numel(); ++i) {
            if (std::isnan(g[i])) {
                throw std::runtime_error("NaN gradient for parameter '" + path + "'");
            }
        }
        Tensor& m = state.m.try_emplace(path, Tensor(tensor->shape())).first->second;
        Tensor& u = state.u.try_emplace(path, Tensor(tensor->shape())).first->second;
        for (std::size_t i = 0; i < g.numel(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            u[i] = std::max(state.beta2 * u[i], std::fabs(g[i]));
            (*tensor)[i] -= (state.lr / bias_fix) * m[i] / (u[i] + state.epsilon);
        }
    }
}

double clip_global_norm(GradientMap& grads, double max_norm) {
    if (max_norm <= 0.0) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
    double sq = 0.0;
    for (const auto& [path, g] : grads) {
        for (std::size_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& [path, g] : grads) {
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= scale;
        }
    }
    return norm;
}

namespace {

std::uint64_t dropout_seed_for(std::uint64_t seed, std::size_t epoch, std::size_t ordinal) {
    Rng mix(seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)) ^ (0xbf58476d1ce4e5b9ULL * (ordinal + 1)));
    return mix.next_u64();
}

// Longest token sequence the attention will see for this example set:
// question length, or question+option for multichoice.
std::size_t text_pad_target(const std::vector<Example>& dataset,
                            const std::vector<std::size_t>& batch) {
    std::size_t longest = 0;
    for (std::size_t idx : batch) {
        const Example& ex = dataset[idx];
        if (ex.task == TaskKind::multichoice) {
            for (const auto& opt : ex.options) {
                longest = std::max(longest, ex.question_ids.size() + opt.size());
            }
        } else {
            longest = std::max(longest, ex.question_ids.size());
        }
    }
    return longest;
}

double train_metric(TaskKind kind, const std::vector<int>& preds,
                    const std::vector<int>& answers) {
    if (preds.empty()) return 0.0;
    if (kind == TaskKind::count) {
        double sq = 0.0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const double d = static_cast<double>(preds[i] - answers[i]);
            sq += d * d;
        }
        return sq / static_cast<double>(preds.size());
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == answers[i] ? 1u : 0u;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

}  // namespace

EpochReport run_epoch(StaModel& model, const std::vector<Example>& dataset,
                      const TrainConfig& cfg, AdamaxState& opt,
                      std::size_t epoch, Rng& shuffle_rng) {
    if (dataset.empty()) throw std::invalid_argument("run_epoch: empty dataset");
    for (const Example& ex : dataset) {
        if (ex.task != cfg.task.kind) {
            throw std::invalid_argument("run_epoch: dataset example " + ex.id + " is " +
                                        task_kind_name(ex.task) + " but the config trains " +
                                        task_kind_name(cfg.task.kind));
        }
    }
    const double t0 = omp_get_wtime();
    const int threads = cfg.threads ? static_cast<int>(cfg.threads) : omp_get_max_threads();

    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    ParamRefs refs = model.parameters();
    std::vector<double> losses(dataset.size());
    std::vector<int> preds(dataset.size());
    std::vector<int> answers(dataset.size());

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t n = std::min(cfg.batch_size, order.size() - start);
        std::vector<std::size_t> batch(order.begin() + static_cast<long>(start),
                                       order.begin() + static_cast<long>(start + n));
        const std::size_t pad_len = text_pad_target(dataset, batch);

        std::vector<GradientMap> grads(n);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
        for (long long bi = 0; bi < static_cast<long long>(n); ++bi) {
            const auto i = static_cast<std::size_t>(bi);
            const Example& ex = dataset[batch[i]];
            ForwardOptions fo;
            fo.training = true;
            fo.dropout_seed = dropout_seed_for(cfg.seed, epoch, start + i);
            fo.pad_text_to = pad_len;
            Graph g;
            ForwardResult res = model.forward(g, ex, fo);
            losses[start + i] = res.loss.value()[0];
            preds[start + i] = res.predicted;
            answers[start + i] = ex.answer;
            grads[i] = g.backward(res.loss);
        }

        // reduce in example order, then average
        GradientMap total = std::move(grads[0]);
        for (std::size_t i = 1; i < n; ++i) {
            for (auto& [path, gsum] : total) {
                const Tensor& gi = grads[i].at(path);
                for (std::size_t j = 0; j < gsum.numel(); ++j) gsum[j] += gi[j];
            }
        }
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& [path, gsum] : total) {
            for (std::size_t j = 0; j < gsum.numel(); ++j) gsum[j] *= inv;
        }
        clip_global_norm(total, cfg.clip_norm);
        adamax_step(opt, refs, total);
    }

    EpochReport report;
    report.epoch = epoch;
    double sum = 0.0;
    for (double l : losses) sum += l;
    report.mean_loss = sum / static_cast<double>(losses.size());
    report.metric = train_metric(cfg.task.kind, preds, answers);
    report.wall_s = omp_get_wtime() - t0;
    return report;
}

MetricReport evaluate(const StaModel& model, const std::vector<Example>& dataset,
                      const TaskSpec& task, std::size_t threads) {
    if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
    const int nthreads = threads ? static_cast<int>(threads) : omp_get_max_threads();
    std::vector<int> preds(dataset.size());
    std::vector<double> raws(dataset.size());
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
    for (long long i = 0; i < static_cast<long long>(dataset.size()); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        Graph g(false);
        ForwardResult res = model.forward(g, dataset[idx], ForwardOptions{});
        preds[idx] = res.predicted;
        raws[idx] = res.raw_count;
    }
    MetricReport report;
    report.kind = task.kind;
    report.examples = dataset.size();
    if (task.kind == TaskKind::count) {
        double sq = 0.0, sq_raw = 0.0;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const double d = static_cast<double>(preds[i] - dataset[i].answer);
            const double dr = raws[i] - static_cast<double>(dataset[i].answer);
            sq += d * d;
            sq_raw += dr * dr;
        }
        report.mse_rounded = sq / static_cast<double>(dataset.size());
        report.mse_raw = sq_raw / static_cast<double>(dataset.size());
    } else {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            correct += preds[i] == dataset[i].answer ? 1u : 0u;
        }
        report.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    }
    return report;
}

double fit_example(StaModel& model, const Example& ex, double target_loss,
                   std::size_t max_steps, double lr) {
    ParamRefs refs = model.parameters();
    AdamaxState opt;
    opt.lr = lr;
    double loss = 0.0;
    for (std::size_t step = 0; step < max_steps; ++step) {
        Graph g;
        ForwardResult res = model.forward(g, ex, ForwardOptions{});
        loss = res.loss.value()[0];
        if (loss <= target_loss) break;
        GradientMap grads = g.backward(res.loss);
        adamax_step(opt, refs, grads);
    }
    return loss;
}

void append_metric_line(std::ostream& os, std::size_t epoch, const std::string& split,
                        double loss, double metric, double wall_s) {
    nlohmann::json rec{{"epoch", epoch},
                       {"split", split},
                       {"loss", loss},
                       {"metric", metric},
                       {"wall_time_s", wall_s}};
    os << rec.dump() << '\n';
}

}  // namespace sta
