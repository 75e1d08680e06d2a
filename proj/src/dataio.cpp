#include "sta/dataio.hpp"

#include "sta/encoders.hpp"
#include "sta/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace sta {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// vocabulary

namespace {
const char* kPadToken = "<pad>";
const char* kUnkToken = "<unk>";
}  // namespace

Vocabulary Vocabulary::reserved_only() {
    Vocabulary v;
    v.tokens = {kPadToken, kUnkToken};
    v.index = {{kPadToken, kPadId}, {kUnkToken, kUnkId}};
    return v;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? kUnkId : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(id_of(w));
    return ids;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus) {
    std::map<std::string, std::size_t> freq;
    for (const auto& seq : corpus)
        for (const auto& tok : seq) ++freq[tok];
    std::vector<std::pair<std::string, std::size_t>> order(freq.begin(), freq.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocabulary v = Vocabulary::reserved_only();
    for (const auto& [tok, n] : order) {
        if (v.index.count(tok)) continue;  // reserved names stay reserved
        v.index[tok] = static_cast<int>(v.tokens.size());
        v.tokens.push_back(tok);
    }
    return v;
}

void save_vocabulary(const std::string& file, const Vocabulary& vocab) {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot open vocabulary for writing: " + file);
    for (std::size_t i = 0; i < vocab.tokens.size(); ++i) {
        os << vocab.tokens[i] << '\t' << i << '\n';
    }
}

Vocabulary load_vocabulary(const std::string& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot open vocabulary: " + file);
    Vocabulary v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error(file + ": line " + std::to_string(lineno) + ": expected token<TAB>id");
        }
        const std::string tok = line.substr(0, tab);
        const int id = std::stoi(line.substr(tab + 1));
        if (id != static_cast<int>(v.tokens.size())) {
            throw std::runtime_error(file + ": line " + std::to_string(lineno) + ": ids must be contiguous");
        }
        v.index[tok] = id;
        v.tokens.push_back(tok);
    }
    if (v.tokens.size() < 2 || v.tokens[0] != kPadToken || v.tokens[1] != kUnkToken) {
        throw std::runtime_error(file + ": reserved ids 0/1 must be " + std::string(kPadToken) + "/" + kUnkToken);
    }
    return v;
}

// ---------------------------------------------------------------------------
// frame sidecar

namespace {
constexpr char kFeatMagic[8] = {'S', 'T', 'A', 'F', 'E', 'A', 'T', '\0'};
constexpr std::uint32_t kFeatVersion = 1;
}  // namespace

void save_frame_sidecar(const std::string& file, const Tensor& frames) {
    if (frames.rank() != 2) {
        throw DimensionError("frame sidecar expects [T x Dv], got " + shape_str(frames.shape()));
    }
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open sidecar for writing: " + file);
    os.write(kFeatMagic, sizeof(kFeatMagic));
    const std::uint32_t version = kFeatVersion;
    const std::uint32_t t = static_cast<std::uint32_t>(frames.dim(0));
    const std::uint32_t dv = static_cast<std::uint32_t>(frames.dim(1));
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&t), 4);
    os.write(reinterpret_cast<const char*>(&dv), 4);
    std::vector<float> payload(frames.numel());
    for (std::size_t i = 0; i < frames.numel(); ++i) payload[i] = static_cast<float>(frames[i]);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!os) throw std::runtime_error("failed while writing sidecar: " + file);
}

Tensor load_frame_sidecar(const std::string& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open sidecar: " + file);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kFeatMagic, sizeof(kFeatMagic)) != 0) {
        throw std::runtime_error("not a feature sidecar: " + file);
    }
    std::uint32_t version = 0, t = 0, dv = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    is.read(reinterpret_cast<char*>(&t), 4);
    is.read(reinterpret_cast<char*>(&dv), 4);
    if (version != kFeatVersion) {
        throw std::runtime_error(file + ": unsupported sidecar version " + std::to_string(version));
    }
    std::vector<float> payload(static_cast<std::size_t>(t) * dv);
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!is) throw std::runtime_error("truncated sidecar: " + file);
    Tensor frames({t, dv});
    for (std::size_t i = 0; i < frames.numel(); ++i) frames[i] = static_cast<double>(payload[i]);
    return frames;
}

// ---------------------------------------------------------------------------
// dataset

void validate_example(const Example& ex) {
    auto fail = [&](const std::string& why) {
        throw std::runtime_error("example " + ex.id + ": " + why);
    };
    if (ex.frames.rank() != 2 || ex.frames.dim(0) == 0) fail("frames must be a non-empty [T x Dv] matrix");
    if (ex.question_ids.empty()) fail("question is empty");
    switch (ex.task) {
        case TaskKind::multichoice:
            if (ex.options.size() < 2) fail("multichoice examples need at least 2 options");
            if (ex.answer < 0 || static_cast<std::size_t>(ex.answer) >= ex.options.size()) {
                fail("answer " + std::to_string(ex.answer) + " is not a valid option index");
            }
            for (const auto& opt : ex.options)
                if (opt.empty()) fail("option token sequences must be non-empty");
            break;
        case TaskKind::count:
            if (ex.answer < TaskSpec::kCountMin || ex.answer > TaskSpec::kCountMax) {
                fail("count answer " + std::to_string(ex.answer) + " outside 0..10");
            }
            break;
        case TaskKind::frameqa:
            if (ex.answer < 0) fail("frameqa answer must be a non-negative class id");
            break;
    }
}

namespace {

constexpr int kDatasetVersion = 1;

json frames_to_json(const Tensor& frames) {
    json rows = json::array();
    for (std::size_t i = 0; i < frames.dim(0); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < frames.dim(1); ++j) row.push_back(frames.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Tensor frames_from_json(const json& rows) {
    if (!rows.is_array() || rows.empty() || !rows[0].is_array() || rows[0].empty()) {
        throw std::runtime_error("frames must be a non-empty 2-D array");
    }
    const std::size_t t = rows.size(), dv = rows[0].size();
    Tensor frames({t, dv});
    for (std::size_t i = 0; i < t; ++i) {
        if (rows[i].size() != dv) throw std::runtime_error("ragged frame rows");
        for (std::size_t j = 0; j < dv; ++j) frames.at(i, j) = rows[i][j].get<double>();
    }
    return frames;
}

}  // namespace

void save_dataset(const std::string& file, const std::vector<Example>& examples,
                  bool sidecar_frames) {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot open dataset for writing: " + file);
    const fs::path dir = fs::path(file).parent_path();
    json header{{"format", "sta-dataset"}, {"version", kDatasetVersion}};
    os << header.dump() << '\n';
    for (const Example& ex : examples) {
        json rec{{"id", ex.id},
                 {"task", task_kind_name(ex.task)},
                 {"question", ex.question_ids},
                 {"answer", ex.answer}};
        if (ex.task == TaskKind::multichoice) rec["options"] = ex.options;
        if (sidecar_frames) {
            const std::string ref = ex.id + ".feat";
            save_frame_sidecar((dir / ref).string(), ex.frames);
            rec["frames_ref"] = ref;
        } else {
            rec["frames"] = frames_to_json(ex.frames);
        }
        os << rec.dump() << '\n';
    }
    if (!os) throw std::runtime_error("failed while writing dataset: " + file);
}

std::vector<Example> load_dataset(const std::string& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot open dataset: " + file);
    const fs::path dir = fs::path(file).parent_path();
    std::vector<Example> examples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(file + ": line " + std::to_string(lineno) + ": " + e.what());
        }
        if (rec.contains("format")) {
            if (rec.value("format", "") != "sta-dataset" || rec.value("version", -1) != kDatasetVersion) {
                throw std::runtime_error(file + ": line " + std::to_string(lineno) +
                                         ": unsupported dataset format/version");
            }
            continue;
        }
        Example ex;
        try {
            ex.id = rec.at("id").get<std::string>();
            ex.task = task_kind_from_name(rec.at("task").get<std::string>());
            ex.question_ids = rec.at("question").get<std::vector<int>>();
            ex.answer = rec.at("answer").get<int>();
            if (rec.contains("options")) ex.options = rec["options"].get<std::vector<std::vector<int>>>();
            if (rec.contains("frames_ref")) {
                ex.frames = load_frame_sidecar((dir / rec["frames_ref"].get<std::string>()).string());
            } else {
                ex.frames = frames_from_json(rec.at("frames"));
            }
        } catch (const json::exception& e) {
            throw std::runtime_error(file + ": line " + std::to_string(lineno) + ": " + e.what());
        }
        validate_example(ex);
        examples.push_back(std::move(ex));
    }
    return examples;
}

// ---------------------------------------------------------------------------
// embeddings

Tensor load_embeddings(const std::string& file, const Vocabulary& vocab,
                       std::size_t dim, std::uint64_t seed) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot open embedding file: " + file);
    std::map<std::string, std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> values;
        std::size_t pos = line.find(' ');
        if (pos == std::string::npos) {
            throw std::runtime_error(file + ": line " + std::to_string(lineno) + ": expected token then values");
        }
        const std::string tok = line.substr(0, pos);
        const char* p = line.c_str() + pos;
        char* end = nullptr;
        while (*p) {
            const double v = std::strtod(p, &end);
            if (end == p) break;
            values.push_back(v);
            p = end;
        }
        if (values.size() != dim) {
            throw std::runtime_error(file + ": line " + std::to_string(lineno) + ": expected " +
                                     std::to_string(dim) + " values, got " + std::to_string(values.size()));
        }
        rows[tok] = std::move(values);
    }
    Rng rng(seed);
    Tensor table({vocab.size(), dim});
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (i == static_cast<std::size_t>(kPadId)) continue;  // PAD row stays zero
        auto it = rows.find(vocab.tokens[i]);
        if (it != rows.end()) {
            for (std::size_t j = 0; j < dim; ++j) table.at(i, j) = it->second[j];
        } else {
            for (std::size_t j = 0; j < dim; ++j) table.at(i, j) = rng.uniform(-0.1, 0.1);
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// synthetic generators

GenTask gen_task_from_name(const std::string& name) {
    if (name == "count") return GenTask::count;
    if (name == "action") return GenTask::action;
    if (name == "trans") return GenTask::trans;
    if (name == "frameqa") return GenTask::frameqa;
    throw std::invalid_argument("unknown synthetic task: " + name);
}

const char* gen_task_name(GenTask task) {
    switch (task) {
        case GenTask::count: return "count";
        case GenTask::action: return "action";
        case GenTask::trans: return "trans";
        case GenTask::frameqa: return "frameqa";
    }
    return "?";
}

TaskKind task_kind_of(GenTask task) {
    switch (task) {
        case GenTask::count: return TaskKind::count;
        case GenTask::action:
        case GenTask::trans: return TaskKind::multichoice;
        case GenTask::frameqa: return TaskKind::frameqa;
    }
    return TaskKind::multichoice;
}

namespace {

std::string motif_name(std::size_t k) { return "action" + std::to_string(k); }

// Question phrasing varies per example so the text stream sees sequences of
// different lengths with the informative tokens at different depths.
using Template = std::vector<std::string>;

const std::vector<Template>& count_templates() {
    static const std::vector<Template> t{
        {"how", "many", "times", "does", "{}", "repeat"},
        {"count", "the", "repetitions", "of", "{}"},
        {"how", "often", "does", "{}", "occur", "in", "the", "video"},
    };
    return t;
}

const std::vector<Template>& action_templates() {
    static const std::vector<Template> t{
        {"which", "action", "repeats"},
        {"which", "action", "repeats", "in", "the", "video"},
        {"what", "action", "is", "performed", "several", "times", "here"},
        {"which", "of", "these", "actions", "does", "the", "video", "show"},
    };
    return t;
}

const std::vector<Template>& trans_templates() {
    static const std::vector<Template> t{
        {"what", "happens", "{}", "{}"},
        {"which", "action", "comes", "{}", "{}"},
        {"what", "do", "we", "see", "{}", "{}", "in", "the", "video"},
    };
    return t;
}

const std::vector<Template>& frameqa_templates() {
    static const std::vector<Template> t{
        {"which", "class", "appears", "in", "the", "video"},
        {"what", "is", "shown", "in", "one", "frame"},
        {"which", "category", "does", "a", "single", "frame", "show", "here"},
    };
    return t;
}

// Fills "{}" slots in order from `args`.
std::vector<std::string> instantiate(const Template& tpl, const std::vector<std::string>& args) {
    std::vector<std::string> out;
    std::size_t next = 0;
    for (const std::string& tok : tpl) {
        if (tok == "{}") {
            out.push_back(args.at(next++));
        } else {
            out.push_back(tok);
        }
    }
    return out;
}

// Orthonormal rows via Gram-Schmidt on Gaussian draws; needs dim >= count.
std::vector<Tensor> draw_motifs(std::size_t count, std::size_t dim, Rng& rng) {
    std::vector<Tensor> motifs;
    motifs.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        Tensor v({dim});
        for (;;) {
            for (std::size_t j = 0; j < dim; ++j) v[j] = rng.normal();
            for (const Tensor& prev : motifs) {
                double dot = 0.0;
                for (std::size_t j = 0; j < dim; ++j) dot += v[j] * prev[j];
                for (std::size_t j = 0; j < dim; ++j) v[j] -= dot * prev[j];
            }
            double norm = 0.0;
            for (std::size_t j = 0; j < dim; ++j) norm += v[j] * v[j];
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (std::size_t j = 0; j < dim; ++j) v[j] /= norm;
                break;
            }
        }
        motifs.push_back(v);
    }
    return motifs;
}

std::vector<std::size_t> distinct_positions(std::size_t count, std::size_t lo, std::size_t hi, Rng& rng) {
    std::vector<std::size_t> pool;
    for (std::size_t i = lo; i < hi; ++i) pool.push_back(i);
    rng.shuffle(pool);
    pool.resize(count);
    return pool;
}

void add_motif(Tensor& frames, const Tensor& motif, const std::vector<std::size_t>& positions) {
    for (std::size_t pos : positions)
        for (std::size_t j = 0; j < motif.numel(); ++j) frames.at(pos, j) += motif[j];
}

// Frame payloads are stored as float32 on disk; quantizing here makes the
// save/load round trip bit-exact.
void quantize_f32(Tensor& frames) {
    for (std::size_t i = 0; i < frames.numel(); ++i) {
        frames[i] = static_cast<double>(static_cast<float>(frames[i]));
    }
}

// Builds options as motif names with the true motif at a random slot.
struct OptionDraw {
    std::vector<std::size_t> motif_ids;
    int answer_slot = 0;
};

OptionDraw draw_options(std::size_t true_motif, std::size_t motif_count,
                        std::size_t num_options, Rng& rng) {
    std::vector<std::size_t> pool;
    for (std::size_t k = 0; k < motif_count; ++k)
        if (k != true_motif) pool.push_back(k);
    rng.shuffle(pool);
    OptionDraw draw;
    draw.motif_ids.assign(pool.begin(), pool.begin() + static_cast<long>(num_options - 1));
    draw.answer_slot = static_cast<int>(rng.below(num_options));
    draw.motif_ids.insert(draw.motif_ids.begin() + draw.answer_slot, true_motif);
    return draw;
}

struct RawExample {
    std::string id;
    Tensor frames;
    std::vector<std::string> question;
    int answer = 0;
    std::vector<std::vector<std::string>> options;
};

}  // namespace

SynthData generate_synthetic(GenTask task, std::size_t n_examples, const SynthConfig& cfg) {
    if (cfg.motif_count < 2) throw std::invalid_argument("generate_synthetic: motif_count must be >= 2");
    if (cfg.frame_dim < cfg.motif_count) {
        throw std::invalid_argument("generate_synthetic: frame_dim must be >= motif_count");
    }
    const bool multichoice = task_kind_of(task) == TaskKind::multichoice;
    if (multichoice && cfg.num_options < 2) {
        throw std::invalid_argument("generate_synthetic: num_options must be >= 2");
    }
    if (multichoice && cfg.motif_count < cfg.num_options) {
        throw std::invalid_argument("generate_synthetic: motif_count must cover num_options");
    }
    if (task == GenTask::trans && cfg.t_raw < 4) {
        throw std::invalid_argument("generate_synthetic: trans needs at least 4 frames");
    }

    Rng master(cfg.seed);
    auto motifs = draw_motifs(cfg.motif_count, cfg.frame_dim, master);

    std::vector<RawExample> raws;
    raws.reserve(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) {
        Rng rng(master.fork(i + 1));
        RawExample raw;
        raw.frames = Tensor({cfg.t_raw, cfg.frame_dim});
        for (std::size_t j = 0; j < raw.frames.numel(); ++j) {
            raw.frames[j] = cfg.noise_sigma * rng.normal();
        }
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s-%06zu", gen_task_name(task), i);
        raw.id = idbuf;

        switch (task) {
            case GenTask::count: {
                const std::size_t r = rng.below(static_cast<std::size_t>(TaskSpec::kCountMax) + 1);
                if (r > cfg.t_raw) {
                    throw std::invalid_argument("generate_synthetic: infeasible placement, r=" +
                                                std::to_string(r) + " > T_raw=" + std::to_string(cfg.t_raw));
                }
                const std::size_t motif = rng.below(cfg.motif_count);
                add_motif(raw.frames, motifs[motif], distinct_positions(r, 0, cfg.t_raw, rng));
                const auto& tpl = count_templates()[rng.below(count_templates().size())];
                raw.question = instantiate(tpl, {motif_name(motif)});
                raw.answer = static_cast<int>(r);
                break;
            }
            case GenTask::action: {
                const std::size_t motif = rng.below(cfg.motif_count);
                const std::size_t max_reps = std::min<std::size_t>(6, cfg.t_raw);
                const std::size_t reps = std::min(cfg.t_raw, 1 + max_reps / 2 + rng.below(max_reps));
                add_motif(raw.frames, motifs[motif], distinct_positions(reps, 0, cfg.t_raw, rng));
                const auto& tpl = action_templates()[rng.below(action_templates().size())];
                raw.question = instantiate(tpl, {});
                auto draw = draw_options(motif, cfg.motif_count, cfg.num_options, rng);
                for (std::size_t m : draw.motif_ids) raw.options.push_back({motif_name(m)});
                raw.answer = draw.answer_slot;
                break;
            }
            case GenTask::trans: {
                const std::size_t first = rng.below(cfg.motif_count);
                std::size_t second = rng.below(cfg.motif_count - 1);
                if (second >= first) ++second;
                const std::size_t half = cfg.t_raw / 2;
                const std::size_t reps_a = 1 + rng.below(std::min<std::size_t>(3, half));
                const std::size_t reps_b = 1 + rng.below(std::min<std::size_t>(3, cfg.t_raw - half));
                add_motif(raw.frames, motifs[first], distinct_positions(reps_a, 0, half, rng));
                add_motif(raw.frames, motifs[second], distinct_positions(reps_b, half, cfg.t_raw, rng));
                const bool ask_before = rng.below(2) == 0;
                const std::size_t true_motif = ask_before ? first : second;
                const std::size_t named = ask_before ? second : first;
                const auto& tpl = trans_templates()[rng.below(trans_templates().size())];
                raw.question = instantiate(tpl, {ask_before ? "before" : "after", motif_name(named)});
                auto draw = draw_options(true_motif, cfg.motif_count, cfg.num_options, rng);
                for (std::size_t m : draw.motif_ids) raw.options.push_back({motif_name(m)});
                raw.answer = draw.answer_slot;
                break;
            }
            case GenTask::frameqa: {
                const std::size_t cls = rng.below(cfg.motif_count);
                add_motif(raw.frames, motifs[cls], {rng.below(cfg.t_raw)});
                const auto& tpl = frameqa_templates()[rng.below(frameqa_templates().size())];
                raw.question = instantiate(tpl, {});
                raw.answer = static_cast<int>(cls);
                break;
            }
        }
        quantize_f32(raw.frames);
        raws.push_back(std::move(raw));
    }

    std::vector<std::vector<std::string>> corpus;
    for (const auto& raw : raws) {
        corpus.push_back(raw.question);
        for (const auto& opt : raw.options) corpus.push_back(opt);
    }
    SynthData data;
    data.vocab = build_vocabulary(corpus);
    data.motifs = std::move(motifs);
    data.examples.reserve(raws.size());
    for (auto& raw : raws) {
        Example ex;
        ex.id = std::move(raw.id);
        ex.frames = std::move(raw.frames);
        ex.task = task_kind_of(task);
        ex.answer = raw.answer;
        ex.question_ids = data.vocab.encode(raw.question);
        for (const auto& opt : raw.options) ex.options.push_back(data.vocab.encode(opt));
        validate_example(ex);
        data.examples.push_back(std::move(ex));
    }
    return data;
}

}  // namespace sta
