#include "sta/config.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace sta {

using nlohmann::json;

TaskSpec RunConfig::task_spec() const {
    TaskSpec spec;
    spec.kind = task_kind_from_name(task);
    spec.num_options = num_options;
    spec.num_classes = num_classes;
    return spec;
}

StaConfig RunConfig::model_config(std::size_t vocab_size) const {
    StaConfig mc;
    mc.frame_dim = frame_dim;
    mc.frames = frames;
    mc.n_segments = n_segments;
    mc.hidden = hidden;
    mc.attn_dim = attn_dim;
    mc.embed_dim = embed_dim;
    mc.vocab_size = vocab_size;
    mc.task = task_spec();
    mc.text_attention = text_attention;
    mc.mean_normalize_text = mean_normalize_text;
    mc.weight_norm_heads = weight_norm_heads;
    mc.dropout = dropout;
    return mc;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig tc;
    tc.batch_size = batch_size;
    tc.epochs = epochs;
    tc.clip_norm = clip_norm;
    tc.dropout_p = dropout;
    tc.seed = seed;
    tc.n_segments = n_segments;
    tc.hidden_d = hidden;
    tc.task = task_spec();
    tc.threads = threads;
    return tc;
}

namespace {

template <typename T>
void pick(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json full_json(const RunConfig& c) {
    return json{{"hidden", c.hidden},
                {"attn_dim", c.attn_dim},
                {"embed_dim", c.embed_dim},
                {"n_segments", c.n_segments},
                {"frames", c.frames},
                {"frame_dim", c.frame_dim},
                {"text_attention", c.text_attention},
                {"mean_normalize_text", c.mean_normalize_text},
                {"weight_norm_heads", c.weight_norm_heads},
                {"dropout", c.dropout},
                {"task", c.task},
                {"num_options", c.num_options},
                {"num_classes", c.num_classes},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"lr", c.lr},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"epsilon", c.epsilon},
                {"clip_norm", c.clip_norm},
                {"seed", c.seed},
                {"threads", c.threads},
                {"select_best_by_eval", c.select_best_by_eval},
                {"gen_task", c.gen_task},
                {"gen_examples", c.gen_examples},
                {"t_raw", c.t_raw},
                {"motif_count", c.motif_count},
                {"noise_sigma", c.noise_sigma},
                {"sidecar_frames", c.sidecar_frames},
                {"train_path", c.train_path},
                {"eval_path", c.eval_path},
                {"vocab_path", c.vocab_path},
                {"embedding_path", c.embedding_path},
                {"checkpoint_in", c.checkpoint_in},
                {"checkpoint_out", c.checkpoint_out},
                {"out_dir", c.out_dir}};
}

}  // namespace

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    const json known = full_json(cfg);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw std::runtime_error(path + ": unknown config key '" + key + "'");
        }
    }
    pick(j, "hidden", cfg.hidden);
    pick(j, "attn_dim", cfg.attn_dim);
    pick(j, "embed_dim", cfg.embed_dim);
    pick(j, "n_segments", cfg.n_segments);
    pick(j, "frames", cfg.frames);
    pick(j, "frame_dim", cfg.frame_dim);
    pick(j, "text_attention", cfg.text_attention);
    pick(j, "mean_normalize_text", cfg.mean_normalize_text);
    pick(j, "weight_norm_heads", cfg.weight_norm_heads);
    pick(j, "dropout", cfg.dropout);
    pick(j, "task", cfg.task);
    pick(j, "num_options", cfg.num_options);
    pick(j, "num_classes", cfg.num_classes);
    pick(j, "batch_size", cfg.batch_size);
    pick(j, "epochs", cfg.epochs);
    pick(j, "lr", cfg.lr);
    pick(j, "beta1", cfg.beta1);
    pick(j, "beta2", cfg.beta2);
    pick(j, "epsilon", cfg.epsilon);
    pick(j, "clip_norm", cfg.clip_norm);
    pick(j, "seed", cfg.seed);
    pick(j, "threads", cfg.threads);
    pick(j, "select_best_by_eval", cfg.select_best_by_eval);
    pick(j, "gen_task", cfg.gen_task);
    pick(j, "gen_examples", cfg.gen_examples);
    pick(j, "t_raw", cfg.t_raw);
    pick(j, "motif_count", cfg.motif_count);
    pick(j, "noise_sigma", cfg.noise_sigma);
    pick(j, "sidecar_frames", cfg.sidecar_frames);
    pick(j, "train_path", cfg.train_path);
    pick(j, "eval_path", cfg.eval_path);
    pick(j, "vocab_path", cfg.vocab_path);
    pick(j, "embedding_path", cfg.embedding_path);
    pick(j, "checkpoint_in", cfg.checkpoint_in);
    pick(j, "checkpoint_out", cfg.checkpoint_out);
    pick(j, "out_dir", cfg.out_dir);
}

void apply_env_overrides(RunConfig& cfg) {
    if (const char* dir = std::getenv("STA_OUT_DIR")) cfg.out_dir = dir;
    if (const char* seed = std::getenv("STA_SEED")) cfg.seed = std::strtoull(seed, nullptr, 10);
}

std::string config_to_json(const RunConfig& cfg) { return full_json(cfg).dump(2); }

void write_config_snapshot(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = std::filesystem::path(cfg.out_dir) / "config.json";
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write config snapshot: " + path.string());
    os << config_to_json(cfg) << '\n';
}

}  // namespace sta
