#pragma once

#include "sta/model.hpp"
#include "sta/training.hpp"

#include <string>

namespace sta {

// Everything a run needs, resolved from defaults < config file < environment
// (STA_OUT_DIR / STA_SEED) < command-line flags. The resolved snapshot is
// written next to every run's outputs.
struct RunConfig {
    // model
    std::size_t hidden = 512;
    std::size_t attn_dim = 0;  // 0 = hidden
    std::size_t embed_dim = 64;
    std::size_t n_segments = 1;
    std::size_t frames = 36;
    std::size_t frame_dim = 32;
    bool text_attention = true;
    bool mean_normalize_text = false;
    bool weight_norm_heads = false;
    double dropout = 0.2;

    // task
    std::string task = "multichoice";  // multichoice | count | frameqa
    std::size_t num_options = 5;
    std::size_t num_classes = 6;

    // training
    std::size_t batch_size = 128;
    std::size_t epochs = 30;
    double lr = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 10.0;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    bool select_best_by_eval = false;  // keep the best eval-metric checkpoint

    // generation (gen-data)
    std::string gen_task = "action";
    std::size_t gen_examples = 1000;
    std::size_t t_raw = 36;
    std::size_t motif_count = 6;
    double noise_sigma = 0.1;
    bool sidecar_frames = false;

    // io
    std::string train_path;
    std::string eval_path;
    std::string vocab_path;
    std::string embedding_path;
    std::string checkpoint_in;
    std::string checkpoint_out;
    std::string out_dir = "out";

    TaskSpec task_spec() const;
    StaConfig model_config(std::size_t vocab_size) const;
    TrainConfig train_config() const;
};

// Overlays the values present in a JSON config file (unknown keys are an
// error; absent keys keep their current values).
void apply_config_file(RunConfig& cfg, const std::string& path);

// STA_OUT_DIR and STA_SEED only.
void apply_env_overrides(RunConfig& cfg);

// Full resolved dump, reproducible field order.
std::string config_to_json(const RunConfig& cfg);

// Writes the resolved snapshot as <out_dir>/config.json, creating out_dir.
void write_config_snapshot(const RunConfig& cfg);

}  // namespace sta
