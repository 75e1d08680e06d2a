#include "sta/layers.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace sta {

namespace {

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// LinearLayer

LinearLayer LinearLayer::make(std::string path, std::size_t out, std::size_t in,
                              bool has_bias, Rng& rng) {
    LinearLayer l;
    l.path = std::move(path);
    l.in = in;
    l.out = out;
    l.has_bias = has_bias;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    l.weight = uniform_tensor({out, in}, -bound, bound, rng);
    if (has_bias) l.bias = Tensor({out});
    return l;
}

void LinearLayer::enable_weight_norm() {
    if (weight_norm) return;
    weight_norm = true;
    gain = Tensor({out});
    for (std::size_t i = 0; i < out; ++i) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < in; ++j) norm2 += weight.at(i, j) * weight.at(i, j);
        gain[i] = std::sqrt(norm2);
    }
}

void LinearLayer::collect(ParamRefs& refs) {
    if (weight_norm) {
        refs.emplace_back(path + ".v", &weight);
        refs.emplace_back(path + ".g", &gain);
    } else {
        refs.emplace_back(path + ".weight", &weight);
    }
    if (has_bias) refs.emplace_back(path + ".bias", &bias);
}

Var LinearLayer::weight_var(Graph& g) const {
    if (!weight_norm) return g.param(path + ".weight", weight);
    Var v = g.param(path + ".v", weight);
    Var gn = g.param(path + ".g", gain);
    Var norm = g.sqrt(g.reduce_sum(g.mul(v, v), 1));  // [out]
    const Tensor& nv = norm.value();
    for (std::size_t i = 0; i < nv.numel(); ++i) {
        if (nv[i] == 0.0) {
            throw std::domain_error(path + ": weight-norm direction row " + std::to_string(i) +
                                    " has zero norm");
        }
    }
    return g.scale_rows(v, g.div(gn, norm));
}

Var LinearLayer::forward(Graph& g, Var x) const {
    // Shape info is copied out before any node creation: growing the graph
    // invalidates references into it.
    const Shape xshape = x.value().shape();
    if (xshape.size() == 1) {
        if (xshape[0] != in) {
            throw DimensionError(path + ": input " + shape_str(xshape) + " does not match in=" +
                                 std::to_string(in));
        }
        Var w = weight_var(g);
        Var y = g.reshape(g.matmul(w, g.reshape(x, {in, 1})), {out});
        if (has_bias) y = g.add(y, g.param(path + ".bias", bias));
        return y;
    }
    if (xshape.size() == 2) {
        if (xshape[1] != in) {
            throw DimensionError(path + ": input " + shape_str(xshape) + " does not match in=" +
                                 std::to_string(in));
        }
        Var w = weight_var(g);
        Var y = g.matmul(x, g.transpose(w));
        if (has_bias) y = g.add_rows(y, g.param(path + ".bias", bias));
        return y;
    }
    throw DimensionError(path + ": expected rank 1 or 2 input, got " + shape_str(xshape));
}

// ---------------------------------------------------------------------------
// LstmLayer

LstmLayer LstmLayer::make(std::string path, std::size_t in_dim, std::size_t hidden, Rng& rng) {
    LstmLayer l;
    l.path = std::move(path);
    l.in_dim = in_dim;
    l.hidden = hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    l.w_input = uniform_tensor({4 * hidden, in_dim}, -bound, bound, rng);
    l.w_recur = uniform_tensor({4 * hidden, hidden}, -bound, bound, rng);
    l.bias = Tensor({4 * hidden});
    for (std::size_t j = 0; j < hidden; ++j) l.bias[hidden + j] = 1.0;  // forget gate
    return l;
}

void LstmLayer::collect(ParamRefs& refs) {
    refs.emplace_back(path + ".w_input", &w_input);
    refs.emplace_back(path + ".w_recur", &w_recur);
    refs.emplace_back(path + ".bias", &bias);
}

LstmLayer::State LstmLayer::zero_state(Graph& g) const {
    return {g.constant(Tensor({hidden})), g.constant(Tensor({hidden}))};
}

namespace {

// Applies the cell non-linearities to a packed pre-activation vector [4H].
LstmLayer::State lstm_cell(Graph& g, Var gates, LstmLayer::State prev, std::size_t h) {
    Var ig = g.sigmoid(g.slice_rows(gates, 0, h));
    Var fg = g.sigmoid(g.slice_rows(gates, h, h));
    Var cand = g.tanh(g.slice_rows(gates, 2 * h, h));
    Var og = g.sigmoid(g.slice_rows(gates, 3 * h, h));
    Var c = g.add(g.mul(fg, prev.c), g.mul(ig, cand));
    Var hidden = g.mul(og, g.tanh(c));
    return {hidden, c};
}

}  // namespace

LstmLayer::State LstmLayer::step(Graph& g, Var x, State prev) const {
    const Shape xshape = x.value().shape();
    if (xshape.size() != 1 || xshape[0] != in_dim) {
        throw DimensionError(path + ": step input " + shape_str(xshape) +
                             " does not match in_dim=" + std::to_string(in_dim));
    }
    Var wx = g.param(path + ".w_input", w_input);
    Var wh = g.param(path + ".w_recur", w_recur);
    Var b = g.param(path + ".bias", bias);
    Var gates = g.reshape(g.matmul(wx, g.reshape(x, {in_dim, 1})), {4 * hidden});
    gates = g.add(gates, g.reshape(g.matmul(wh, g.reshape(prev.h, {hidden, 1})), {4 * hidden}));
    gates = g.add(gates, b);
    return lstm_cell(g, gates, prev, hidden);
}

Var LstmLayer::sequence(Graph& g, Var xs) const {
    const Shape xshape = xs.value().shape();
    if (xshape.size() != 2 || xshape[1] != in_dim) {
        throw DimensionError(path + ": sequence input " + shape_str(xshape) +
                             " does not match in_dim=" + std::to_string(in_dim));
    }
    const std::size_t t_len = xshape[0];
    Var wx = g.param(path + ".w_input", w_input);
    Var wh = g.param(path + ".w_recur", w_recur);
    Var b = g.param(path + ".bias", bias);
    // input contributions for all steps in one product
    Var xw = g.add_rows(g.matmul(xs, g.transpose(wx)), b);  // [T x 4H]
    State state = zero_state(g);
    std::vector<Var> states;
    states.reserve(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
        Var gates = g.reshape(g.slice_rows(xw, t, 1), {4 * hidden});
        gates = g.add(gates, g.reshape(g.matmul(wh, g.reshape(state.h, {hidden, 1})), {4 * hidden}));
        state = lstm_cell(g, gates, state, hidden);
        states.push_back(state.h);
    }
    return g.stack_rows(states);
}

// ---------------------------------------------------------------------------
// EmbeddingLayer

EmbeddingLayer EmbeddingLayer::make(std::string path, std::size_t vocab, std::size_t dim, Rng& rng) {
    EmbeddingLayer e;
    e.path = std::move(path);
    e.table = uniform_tensor({vocab, dim}, -0.1, 0.1, rng);
    return e;
}

void EmbeddingLayer::collect(ParamRefs& refs) {
    refs.emplace_back(path + ".table", &table);
}

Var EmbeddingLayer::forward(Graph& g, const std::vector<int>& ids) const {
    const std::size_t vocab = table.dim(0);
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw VocabularyError(path + ": token id " + std::to_string(id) +
                                  " outside vocabulary of size " + std::to_string(vocab));
        }
    }
    return g.gather_rows(g.param(path + ".table", table), ids);
}

// ---------------------------------------------------------------------------
// dropout

Var dropout_apply(Graph& g, Var x, double p, bool training, std::uint64_t rng_seed) {
    if (p < 0.0 || p >= 1.0) {
        throw std::invalid_argument("dropout: p must be in [0, 1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) return x;
    const Tensor& tx = x.value();
    Tensor mask(tx.shape());
    Rng rng(rng_seed);
    const double scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = rng.uniform() < p ? 0.0 : scale;
    return g.mul(x, g.constant(std::move(mask)));
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void save_checkpoint(const std::string& file, const ParamRefs& params) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + file);
    os.write(kMagic, sizeof(kMagic));
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint64_t>(params.size()));
    for (const auto& [path, tensor] : params) {
        write_pod(os, static_cast<std::uint32_t>(path.size()));
        os.write(path.data(), static_cast<std::streamsize>(path.size()));
        write_pod(os, static_cast<std::uint32_t>(tensor->rank()));
        for (std::size_t d : tensor->shape()) write_pod(os, static_cast<std::uint64_t>(d));
        os.write(reinterpret_cast<const char*>(tensor->data()),
                 static_cast<std::streamsize>(tensor->numel() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("failed while writing checkpoint: " + file);
}

void load_checkpoint(const std::string& file, const ParamRefs& params) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + file);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("not a checkpoint file: " + file);
    }
    std::uint32_t version = 0;
    read_pod(is, version);
    if (version != kVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    std::uint64_t count = 0;
    read_pod(is, count);
    std::map<std::string, Tensor*> by_path;
    for (const auto& [path, tensor] : params) by_path[path] = tensor;
    std::size_t matched = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t plen = 0;
        read_pod(is, plen);
        std::string path(plen, '\0');
        is.read(path.data(), plen);
        std::uint32_t rank = 0;
        read_pod(is, rank);
        Shape shape(rank);
        for (auto& d : shape) {
            std::uint64_t dv = 0;
            read_pod(is, dv);
            d = static_cast<std::size_t>(dv);
        }
        const std::size_t numel = shape_numel(shape);
        std::vector<double> payload(numel);
        is.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
        if (!is) throw std::runtime_error("truncated checkpoint: " + file);
        auto it = by_path.find(path);
        if (it == by_path.end()) {
            throw std::runtime_error("checkpoint entry '" + path + "' does not match any model parameter");
        }
        if (it->second->shape() != shape) {
            throw std::runtime_error("checkpoint entry '" + path + "' has shape " + shape_str(shape) +
                                     " but the model expects " + shape_str(it->second->shape()));
        }
        it->second->vec() = std::move(payload);
        ++matched;
    }
    if (matched != by_path.size()) {
        throw std::runtime_error("checkpoint is missing " + std::to_string(by_path.size() - matched) +
                                 " model parameter(s)");
    }
}

}  // namespace sta
