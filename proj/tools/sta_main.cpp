#include <CLI11.hpp>
#include <json.hpp>

#include "sta/config.hpp"
#include "sta/gradcheck_suite.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

using namespace sta;
namespace fs = std::filesystem;

namespace {

// Registers config-backed flags on a subcommand and applies only the ones the
// user actually passed, preserving defaults < config file < env < flags.
class ConfigFlags {
public:
    explicit ConfigFlags(CLI::App* cmd) : cmd_(cmd) {
        cmd_->add_option("--config", config_path_, "JSON config file (flags override it)");
    }

    template <typename T>
    void bind(const std::string& name, T RunConfig::*field, const std::string& desc) {
        auto* opt = cmd_->add_option(name, staged_.*field, desc);
        appliers_.emplace_back(opt, [this, field](RunConfig& cfg) { cfg.*field = staged_.*field; });
    }

    void bind_flag(const std::string& name, bool RunConfig::*field, const std::string& desc) {
        auto* opt = cmd_->add_flag(name, staged_.*field, desc);
        appliers_.emplace_back(opt, [this, field](RunConfig& cfg) { cfg.*field = staged_.*field; });
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_path_.empty()) apply_config_file(cfg, config_path_);
        apply_env_overrides(cfg);
        for (const auto& [opt, apply] : appliers_) {
            if (opt->count() > 0) apply(cfg);
        }
        return cfg;
    }

private:
    CLI::App* cmd_;
    RunConfig staged_;
    std::string config_path_;
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> appliers_;
};

void bind_model_flags(ConfigFlags& flags) {
    flags.bind("--hidden", &RunConfig::hidden, "hidden state width D");
    flags.bind("--attn-dim", &RunConfig::attn_dim, "attention projection width (0 = hidden)");
    flags.bind("--embed-dim", &RunConfig::embed_dim, "word embedding width");
    flags.bind("--segments", &RunConfig::n_segments, "number of video segments N");
    flags.bind("--frames", &RunConfig::frames, "frames sampled per video");
    flags.bind("--frame-dim", &RunConfig::frame_dim, "frame feature width");
    flags.bind("--dropout", &RunConfig::dropout, "dropout rate");
    flags.bind("--task", &RunConfig::task, "decoder task: multichoice|count|frameqa");
    flags.bind("--num-options", &RunConfig::num_options, "multichoice candidate count");
    flags.bind("--num-classes", &RunConfig::num_classes, "frameqa class count");
    flags.bind_flag("--text-attention,!--no-text-attention", &RunConfig::text_attention,
                    "enable the text attention stream (off = visual-only ablation)");
    flags.bind_flag("--mean-normalize-text,!--no-mean-normalize-text",
                    &RunConfig::mean_normalize_text, "divide attended text vectors by K");
    flags.bind_flag("--weight-norm-heads,!--no-weight-norm-heads", &RunConfig::weight_norm_heads,
                    "weight-normalize decoder heads");
}

void bind_io_flags(ConfigFlags& flags) {
    flags.bind("--vocab", &RunConfig::vocab_path, "vocabulary file (token<TAB>id per line)");
    flags.bind("--out", &RunConfig::out_dir, "output directory");
    flags.bind("--seed", &RunConfig::seed, "RNG seed");
}

Vocabulary require_vocab(const RunConfig& cfg) {
    if (cfg.vocab_path.empty()) throw std::runtime_error("--vocab is required");
    return load_vocabulary(cfg.vocab_path);
}

StaModel build_model(const RunConfig& cfg, const Vocabulary& vocab) {
    StaModel model = StaModel::make(cfg.model_config(vocab.size()), cfg.seed);
    if (!cfg.embedding_path.empty()) {
        model.embed.table = load_embeddings(cfg.embedding_path, vocab, cfg.embed_dim, cfg.seed);
    }
    if (!cfg.checkpoint_in.empty()) {
        load_checkpoint(cfg.checkpoint_in, model.parameters());
    }
    return model;
}

void print_config(const RunConfig& cfg) {
    RunConfig copy = cfg;
    // single line keeps startup output scannable
    std::cout << "config: " << nlohmann::json::parse(config_to_json(copy)).dump() << "\n";
}

std::string metric_name(TaskKind kind) {
    return kind == TaskKind::count ? "mse" : "accuracy";
}

int cmd_gen_data(const RunConfig& cfg, std::size_t holdout) {
    print_config(cfg);
    write_config_snapshot(cfg);
    SynthConfig sc;
    sc.t_raw = cfg.t_raw;
    sc.frame_dim = cfg.frame_dim;
    sc.motif_count = cfg.motif_count;
    sc.noise_sigma = cfg.noise_sigma;
    sc.seed = cfg.seed;
    sc.num_options = cfg.num_options;
    const GenTask task = gen_task_from_name(cfg.gen_task);
    if (holdout >= cfg.gen_examples) throw std::runtime_error("--holdout must be below --n");
    SynthData data = generate_synthetic(task, cfg.gen_examples, sc);
    const fs::path out(cfg.out_dir);
    save_vocabulary((out / "vocab.tsv").string(), data.vocab);
    if (holdout == 0) {
        save_dataset((out / "dataset.jsonl").string(), data.examples, cfg.sidecar_frames);
        std::cout << "wrote " << data.examples.size() << " " << cfg.gen_task << " examples to "
                  << (out / "dataset.jsonl").string() << " (vocab " << data.vocab.size()
                  << " tokens)\n";
    } else {
        // one generation, split into unseen examples: both files share the
        // motif vectors and the vocabulary
        std::vector<Example> train_set(data.examples.begin(),
                                       data.examples.end() - static_cast<long>(holdout));
        std::vector<Example> test_set(data.examples.end() - static_cast<long>(holdout),
                                      data.examples.end());
        save_dataset((out / "dataset.jsonl").string(), train_set, cfg.sidecar_frames);
        save_dataset((out / "holdout.jsonl").string(), test_set, cfg.sidecar_frames);
        std::cout << "wrote " << train_set.size() << " train + " << test_set.size() << " holdout "
                  << cfg.gen_task << " examples to " << out.string() << " (vocab "
                  << data.vocab.size() << " tokens)\n";
    }
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    print_config(cfg);
    write_config_snapshot(cfg);
    if (cfg.train_path.empty()) throw std::runtime_error("--train is required");
    Vocabulary vocab = require_vocab(cfg);
    auto train_set = load_dataset(cfg.train_path);
    std::vector<Example> eval_set;
    if (!cfg.eval_path.empty()) eval_set = load_dataset(cfg.eval_path);

    StaModel model = build_model(cfg, vocab);
    ParamRefs refs = model.parameters();

    AdamaxState opt;
    opt.lr = cfg.lr;
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.epsilon = cfg.epsilon;

    const TrainConfig tc = cfg.train_config();
    Rng shuffle_rng(cfg.seed);

    const fs::path out(cfg.out_dir);
    std::ofstream metrics(out / "metrics.jsonl");
    if (!metrics) throw std::runtime_error("cannot write metrics log in " + cfg.out_dir);

    const TaskSpec task = cfg.task_spec();
    double best_metric = 0.0;
    bool have_best = false;
    std::vector<Tensor> best_params;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochReport report = run_epoch(model, train_set, tc, opt, epoch, shuffle_rng);
        append_metric_line(metrics, epoch, "train", report.mean_loss, report.metric, report.wall_s);
        std::printf("epoch %zu/%zu  train loss %.6f  %s %.4f  (%.1fs)\n", epoch + 1, cfg.epochs,
                    report.mean_loss, metric_name(task.kind).c_str(), report.metric, report.wall_s);
        if (!eval_set.empty()) {
            MetricReport mr = evaluate(model, eval_set, task, cfg.threads);
            append_metric_line(metrics, epoch, "eval", 0.0, mr.headline(), 0.0);
            std::printf("epoch %zu/%zu  eval %s %.4f\n", epoch + 1, cfg.epochs,
                        metric_name(task.kind).c_str(), mr.headline());
            const bool better = task.kind == TaskKind::count ? (!have_best || mr.headline() < best_metric)
                                                             : (!have_best || mr.headline() > best_metric);
            if (cfg.select_best_by_eval && better) {
                best_metric = mr.headline();
                have_best = true;
                best_params.clear();
                for (auto& [path, t] : refs) best_params.push_back(*t);
            }
        }
        metrics.flush();
    }
    if (cfg.select_best_by_eval && have_best) {
        for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].second = best_params[i];
        std::printf("restored best checkpoint (%s %.4f)\n", metric_name(task.kind).c_str(),
                    best_metric);
    }
    const std::string ckpt =
        cfg.checkpoint_out.empty() ? (out / "model.ckpt").string() : cfg.checkpoint_out;
    save_checkpoint(ckpt, refs);
    std::cout << "checkpoint written to " << ckpt << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    print_config(cfg);
    write_config_snapshot(cfg);
    if (cfg.eval_path.empty()) throw std::runtime_error("--data is required");
    Vocabulary vocab = require_vocab(cfg);
    auto data = load_dataset(cfg.eval_path);
    StaModel model = build_model(cfg, vocab);
    const TaskSpec task = cfg.task_spec();
    MetricReport mr = evaluate(model, data, task, cfg.threads);
    if (task.kind == TaskKind::count) {
        std::printf("count mse %.4f (raw %.4f) over %zu examples\n", mr.mse_rounded, mr.mse_raw,
                    mr.examples);
    } else {
        std::printf("%s accuracy %.4f over %zu examples\n", task_kind_name(task.kind), mr.accuracy,
                    mr.examples);
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& dims_name, double h, double tol) {
    const GradCheckDims dims =
        dims_name == "small" ? GradCheckDims::small() : GradCheckDims::tiny();
    double worst = 0.0;
    bool all_passed = true;
    for (const HeadCheckResult& r : run_gradcheck_suite(dims, seed, h, tol)) {
        worst = std::max(worst, r.report.max_rel_err);
        all_passed = all_passed && r.report.passed;
        std::printf("%-11s max rel err %.3e over %zu elements (probe loss %.3f, %.1fs) %s\n",
                    task_kind_name(r.kind), r.report.max_rel_err, r.report.checked, r.probe_loss,
                    r.seconds, r.report.passed ? "PASS" : "FAIL");
    }
    std::printf("worst rel err %.3e (tol %.1e)\n", worst, tol);
    return all_passed ? 0 : 1;
}

int cmd_dump_attention(const RunConfig& cfg, const std::string& out_file, std::size_t limit) {
    print_config(cfg);
    write_config_snapshot(cfg);
    if (cfg.eval_path.empty()) throw std::runtime_error("--data is required");
    Vocabulary vocab = require_vocab(cfg);
    auto data = load_dataset(cfg.eval_path);
    StaModel model = build_model(cfg, vocab);
    std::ofstream os(out_file);
    if (!os) throw std::runtime_error("cannot open " + out_file);
    std::size_t written = 0;
    for (const Example& ex : data) {
        if (limit && written >= limit) break;
        ForwardOptions fo;
        fo.want_attention = true;
        Graph g(false);
        ForwardResult res = model.forward(g, ex, fo);
        for (const AttentionRecord& rec : res.attention) {
            nlohmann::json b_rows = nlohmann::json::array();
            for (std::size_t i = 0; i < rec.b.dim(0); ++i) {
                nlohmann::json row = nlohmann::json::array();
                for (std::size_t j = 0; j < rec.b.dim(1); ++j) row.push_back(rec.b.at(i, j));
                b_rows.push_back(std::move(row));
            }
            nlohmann::json rec_json{{"id", ex.id},
                                    {"option", rec.option},
                                    {"segment", rec.segment},
                                    {"c", rec.c.vec()},
                                    {"b", std::move(b_rows)}};
            os << rec_json.dump() << '\n';
        }
        ++written;
    }
    std::cout << "wrote attention maps for " << written << " examples to " << out_file << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"structured two-stream attention video QA"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset + vocabulary");
    ConfigFlags gen_flags(gen);
    gen_flags.bind("--gen-task", &RunConfig::gen_task, "count|action|trans|frameqa");
    gen_flags.bind("--n", &RunConfig::gen_examples, "number of examples");
    gen_flags.bind("--t-raw", &RunConfig::t_raw, "raw frames per video");
    gen_flags.bind("--frame-dim", &RunConfig::frame_dim, "frame feature width");
    gen_flags.bind("--motifs", &RunConfig::motif_count, "number of motif vectors");
    gen_flags.bind("--noise-sigma", &RunConfig::noise_sigma, "frame noise level");
    gen_flags.bind("--num-options", &RunConfig::num_options, "options per multichoice question");
    gen_flags.bind_flag("--sidecar,!--no-sidecar", &RunConfig::sidecar_frames,
                        "store frames in binary sidecar files");
    gen_flags.bind("--out", &RunConfig::out_dir, "output directory");
    gen_flags.bind("--seed", &RunConfig::seed, "RNG seed");
    std::size_t gen_holdout = 0;
    gen->add_option("--holdout", gen_holdout,
                    "also write holdout.jsonl with this many examples split off the end");

    // train
    auto* train = app.add_subcommand("train", "train a model and write checkpoint + metrics");
    ConfigFlags train_flags(train);
    bind_model_flags(train_flags);
    bind_io_flags(train_flags);
    train_flags.bind("--train", &RunConfig::train_path, "training dataset");
    train_flags.bind("--eval", &RunConfig::eval_path, "held-out dataset evaluated each epoch");
    train_flags.bind("--embeddings", &RunConfig::embedding_path, "pretrained embedding file");
    train_flags.bind("--checkpoint-in", &RunConfig::checkpoint_in, "initial checkpoint");
    train_flags.bind("--checkpoint-out", &RunConfig::checkpoint_out, "checkpoint path");
    train_flags.bind("--batch", &RunConfig::batch_size, "batch size");
    train_flags.bind("--epochs", &RunConfig::epochs, "training epochs");
    train_flags.bind("--lr", &RunConfig::lr, "Adamax learning rate");
    train_flags.bind("--clip-norm", &RunConfig::clip_norm, "global gradient clipping threshold");
    train_flags.bind("--threads", &RunConfig::threads, "worker threads (0 = auto)");
    train_flags.bind_flag("--select-best,!--no-select-best", &RunConfig::select_best_by_eval,
                          "keep the best eval-metric parameters");

    // eval
    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    ConfigFlags eval_flags(evalc);
    bind_model_flags(eval_flags);
    bind_io_flags(eval_flags);
    eval_flags.bind("--data", &RunConfig::eval_path, "dataset to evaluate");
    eval_flags.bind("--checkpoint", &RunConfig::checkpoint_in, "checkpoint to load");
    eval_flags.bind("--embeddings", &RunConfig::embedding_path, "pretrained embedding file");
    eval_flags.bind("--threads", &RunConfig::threads, "worker threads (0 = auto)");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "full-model finite-difference gradient check");
    std::uint64_t gc_seed = 7;
    std::string gc_dims = "tiny";
    double gc_h = 1e-5, gc_tol = 1e-3;
    gc->add_option("--seed", gc_seed, "RNG seed");
    gc->add_option("--dims", gc_dims, "tiny|small")->check(CLI::IsMember({"tiny", "small"}));
    gc->add_option("--step", gc_h, "finite-difference step");
    gc->add_option("--tol", gc_tol, "relative-error tolerance");

    // dump-attention
    auto* dump = app.add_subcommand("dump-attention", "write per-example attention weights");
    ConfigFlags dump_flags(dump);
    bind_model_flags(dump_flags);
    bind_io_flags(dump_flags);
    dump_flags.bind("--data", &RunConfig::eval_path, "dataset to run");
    dump_flags.bind("--checkpoint", &RunConfig::checkpoint_in, "checkpoint to load");
    std::string dump_out = "attention.jsonl";
    std::size_t dump_limit = 0;
    dump->add_option("--out-file", dump_out, "output JSONL file");
    dump->add_option("--limit", dump_limit, "stop after this many examples (0 = all)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_flags.resolve(), gen_holdout);
        if (train->parsed()) return cmd_train(train_flags.resolve());
        if (evalc->parsed()) return cmd_eval(eval_flags.resolve());
        if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_dims, gc_h, gc_tol);
        if (dump->parsed()) return cmd_dump_attention(dump_flags.resolve(), dump_out, dump_limit);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
