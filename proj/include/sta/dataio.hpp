#pragma once

#include "sta/fusion.hpp"

#include <map>
#include <string>
#include <vector>

namespace sta {

// One QA instance. `answer` is an option index (multichoice), a count in
// 0..10, or a class id (frameqa).
struct Example {
    std::string id;
    Tensor frames;  // [T_raw x Dv]
    std::vector<int> question_ids;
    TaskKind task = TaskKind::multichoice;
    int answer = 0;
    std::vector<std::vector<int>> options;  // multichoice only, >= 2 entries
};

// Token <-> id map with PAD=0 and UNK=1 reserved. Ordering is stable and
// persisted, so ids survive a save/load round trip.
struct Vocabulary {
    std::vector<std::string> tokens;  // index == id, includes the reserved pair
    std::map<std::string, int> index;

    std::size_t size() const { return tokens.size(); }
    int id_of(const std::string& token) const;  // UNK when missing
    std::vector<int> encode(const std::vector<std::string>& words) const;

    static Vocabulary reserved_only();
};

// Tokens ordered by descending frequency, ties broken lexicographically;
// reserved ids prepended.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus);

void save_vocabulary(const std::string& file, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::string& file);

// Line-delimited dataset: an optional header record then one example per
// line. Frames are stored inline or as a relative reference to a sidecar
// feature file (see save_frame_sidecar for the binary layout).
std::vector<Example> load_dataset(const std::string& file);
void save_dataset(const std::string& file, const std::vector<Example>& examples,
                  bool sidecar_frames = false);

// Sidecar layout, little-endian: magic "STAFEAT\0", u32 version=1, u32 T_raw,
// u32 Dv, then T_raw*Dv row-major float32 values.
void save_frame_sidecar(const std::string& file, const Tensor& frames);
Tensor load_frame_sidecar(const std::string& file);

// Validates the per-example invariants; throws with the example id on failure.
void validate_example(const Example& ex);

// Text embedding file: one token per line followed by dim reals. Rows for
// tokens absent from the file are drawn uniform(-0.1, 0.1) from `seed`; the
// PAD row is zeroed.
Tensor load_embeddings(const std::string& file, const Vocabulary& vocab,
                       std::size_t dim, std::uint64_t seed);

// Synthetic analogs of the four tasks. Ground truth holds by construction.
enum class GenTask { count, action, trans, frameqa };

GenTask gen_task_from_name(const std::string& name);
const char* gen_task_name(GenTask task);
TaskKind task_kind_of(GenTask task);

struct SynthConfig {
    std::size_t t_raw = 36;
    std::size_t frame_dim = 32;   // must be >= motif_count
    std::size_t motif_count = 6;  // >= 2
    double noise_sigma = 0.1;
    std::uint64_t seed = 0;
    std::size_t num_options = 5;  // multichoice analogs
};

struct SynthData {
    std::vector<Example> examples;
    Vocabulary vocab;
    std::vector<Tensor> motifs;  // the orthonormal "action" vectors, for oracles
};

SynthData generate_synthetic(GenTask task, std::size_t n_examples, const SynthConfig& cfg);

}  // namespace sta
