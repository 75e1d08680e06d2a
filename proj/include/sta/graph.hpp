#pragma once

#include "sta/tensor.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace sta {

class Graph;

// Lightweight handle to a tensor living in a Graph.
struct Var {
    Graph* g = nullptr;
    std::uint32_t id = 0;
    const Tensor& value() const;
};

// Parameter path -> gradient, as produced by Graph::backward.
using GradientMap = std::map<std::string, Tensor>;

// Ordered view over a model's trainable tensors: (path, storage). Paths must
// match what the forward pass registers via Graph::param.
using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;

// Reverse-mode tape. Nodes are recorded in construction order, which is a
// topological order by construction; backward walks them once in reverse.
// A Graph is confined to one thread. Closures are freed after backward, so
// each graph supports exactly one backward pass (no higher-order grads).
class Graph {
public:
    // record=false skips closure construction entirely (evaluation mode).
    explicit Graph(bool record = true);

    // Inserts a copy of t. requires_grad is taken from the tensor.
    Var leaf(Tensor t);
    // Inserts a copy of t with requires_grad forced off.
    Var constant(Tensor t);
    // Inserts a trainable parameter. Repeated calls with the same path return
    // the same Var, so shared parameters accumulate gradients across uses.
    Var param(const std::string& path, const Tensor& t);

    const Tensor& value(Var v) const;
    // Valid after backward, for nodes that required grad.
    const Tensor& grad(Var v) const;
    bool has_grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }

    // --- ops -------------------------------------------------------------
    Var matmul(Var a, Var b);                  // [PxQ].[QxR] -> [PxR]
    Var transpose(Var a);                      // 2-D
    Var reshape(Var a, Shape shape);

    Var add(Var a, Var b);                     // identical shapes
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var add_rows(Var a, Var row);              // bias-row broadcast: a[RxC] + row[C] per row
    Var scale_rows(Var a, Var s);              // a[RxC] * s[R] per row

    Var relu(Var a);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var sqrt(Var a);
    Var log(Var a);
    Var affine(Var a, double scale, double shift);  // scale*a + shift elementwise

    Var reduce_sum(Var a, std::size_t axis);   // axis removed
    // Max over axis, mask optional (same shape, nonzero = keep). Gradient
    // routes to the first maximal unmasked element of each slice.
    Var reduce_max(Var a, std::size_t axis, const Tensor* mask = nullptr);
    Var sum_all(Var a);                        // -> [1]

    // Numerically stabilised softmax over one axis. Masked positions get
    // weight exactly 0; a fully masked slice throws DegenerateSliceError.
    Var softmax(Var a, std::size_t axis, const Tensor* mask = nullptr);

    Var slice_rows(Var a, std::size_t begin, std::size_t count);  // axis-0 window
    Var stack_rows(const std::vector<Var>& rows);                 // T x [D] -> [TxD]
    Var gather_rows(Var table, const std::vector<int>& ids);      // [VxE] -> [|ids|xE]

    // loss = logsumexp(logits) - logits[target], gradient softmax - onehot.
    Var cross_entropy_logits(Var logits, int target);

    // Elementwise op with caller-supplied value/derivative rules. Mostly an
    // extension point for tests.
    Var map_unary(Var a, double (*f)(double), double (*df)(double));

    // Seeds d(loss)/d(loss) = 1, accumulates gradients through the tape and
    // returns the gradient for every parameter path. loss must have one
    // element. Closures are released afterwards.
    GradientMap backward(Var loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_live = false;
        std::function<void(Graph&)> back;
        std::string param_path;
    };

    Var make(Tensor value, bool requires_grad, std::function<void(Graph&)> back);
    Tensor& grad_buf(std::uint32_t id);
    void accum_grad(std::uint32_t id, const Tensor& g);
    const Tensor& val(std::uint32_t id) const { return nodes_[id].value; }
    bool wants_grad(Var v) const { return record_ && nodes_[v.id].requires_grad; }
    void check_mine(Var v, const char* op) const;

    std::vector<Node> nodes_;
    std::map<std::string, std::uint32_t> param_ids_;
    bool record_ = true;
    bool backward_done_ = false;
    std::uint32_t cur_node_ = 0;  // node whose closure is running during backward
};

// Readability helpers for graph-building code.
inline Var operator+(Var a, Var b) { return a.g->add(a, b); }
inline Var operator-(Var a, Var b) { return a.g->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.g->mul(a, b); }

}  // namespace sta
