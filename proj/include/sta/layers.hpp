#pragma once

#include "sta/graph.hpp"
#include "sta/rng.hpp"

#include <string>
#include <utility>
#include <vector>

namespace sta {

// Raised when a token id falls outside the embedding table. Callers are
// expected to map unknown tokens to the reserved UNK id beforehand.
struct VocabularyError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// y = W.x + b. With weight_norm enabled the stored weight acts as the
// direction v and the effective weight is g_i * v_i / ||v_i|| per output row.
struct LinearLayer {
    std::string path;
    std::size_t in = 0, out = 0;
    Tensor weight;  // [out x in]
    Tensor bias;    // [out], present iff has_bias
    Tensor gain;    // [out], present iff weight_norm
    bool has_bias = true;
    bool weight_norm = false;

    static LinearLayer make(std::string path, std::size_t out, std::size_t in,
                            bool has_bias, Rng& rng);

    // Switches to the normalized parameterization with g_i = ||v_i||, which
    // leaves the computed function unchanged.
    void enable_weight_norm();

    void collect(ParamRefs& refs);

    // Effective weight as a graph Var (plain parameter, or the normalized
    // product when weight_norm is on).
    Var weight_var(Graph& g) const;

    // x: [in] -> [out], or [B x in] -> [B x out].
    Var forward(Graph& g, Var x) const;
};

// Single-layer LSTM cell. Gate order in the packed weights is
// input / forget / cell / output; the forget-gate bias starts at 1.
struct LstmLayer {
    std::string path;
    std::size_t in_dim = 0, hidden = 0;
    Tensor w_input;  // [4H x in]
    Tensor w_recur;  // [4H x H]
    Tensor bias;     // [4H]

    static LstmLayer make(std::string path, std::size_t in_dim, std::size_t hidden, Rng& rng);

    void collect(ParamRefs& refs);

    struct State {
        Var h;
        Var c;
    };

    State zero_state(Graph& g) const;
    State step(Graph& g, Var x, State prev) const;

    // xs: [T x in] -> all T hidden states [T x H], zero initial state.
    Var sequence(Graph& g, Var xs) const;
};

// Row-gather embedding. Gradient scatters into the touched rows only.
struct EmbeddingLayer {
    std::string path;
    Tensor table;  // [V x E]

    static EmbeddingLayer make(std::string path, std::size_t vocab, std::size_t dim, Rng& rng);

    void collect(ParamRefs& refs);

    Var forward(Graph& g, const std::vector<int>& ids) const;  // [|ids| x E]
};

// Inverted dropout: zero with probability p and scale survivors by 1/(1-p)
// in training mode; identity in eval mode. 0 <= p < 1.
Var dropout_apply(Graph& g, Var x, double p, bool training, std::uint64_t rng_seed);

// Self-describing binary checkpoint: versioned header, then
// path -> shape -> row-major float64 payload per parameter.
void save_checkpoint(const std::string& file, const ParamRefs& params);
void load_checkpoint(const std::string& file, const ParamRefs& params);

}  // namespace sta
