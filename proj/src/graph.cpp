#include "sta/graph.hpp"

#include "sta/kernels.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sta {

const Tensor& Var::value() const { return g->value(*this); }

Graph::Graph(bool record) : record_(record) {}

void Graph::check_mine(Var v, const char* op) const {
    if (v.g != this || v.id >= nodes_.size()) {
        throw std::logic_error(std::string(op) + ": Var does not belong to this graph");
    }
}

Var Graph::make(Tensor value, bool requires_grad, std::function<void(Graph&)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = record_ && requires_grad;
    if (n.requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::leaf(Tensor t) {
    const bool rg = t.requires_grad;
    return make(std::move(t), rg, {});
}

Var Graph::constant(Tensor t) {
    t.requires_grad = false;
    return make(std::move(t), false, {});
}

Var Graph::param(const std::string& path, const Tensor& t) {
    auto it = param_ids_.find(path);
    if (it != param_ids_.end()) return Var{this, it->second};
    Tensor copy = t;
    copy.requires_grad = true;
    Var v = make(std::move(copy), true, {});
    nodes_[v.id].param_path = path;
    param_ids_[path] = v.id;
    return v;
}

const Tensor& Graph::value(Var v) const {
    check_mine(v, "value");
    return nodes_[v.id].value;
}

const Tensor& Graph::grad(Var v) const {
    check_mine(v, "grad");
    if (!nodes_[v.id].grad_live) {
        throw std::logic_error("grad: no gradient recorded for this Var (did backward run?)");
    }
    return nodes_[v.id].grad;
}

bool Graph::has_grad(Var v) const {
    check_mine(v, "has_grad");
    return nodes_[v.id].grad_live;
}

Tensor& Graph::grad_buf(std::uint32_t id) {
    Node& n = nodes_[id];
    if (!n.grad_live) {
        n.grad = Tensor(n.value.shape());
        n.grad_live = true;
    }
    return n.grad;
}

void Graph::accum_grad(std::uint32_t id, const Tensor& g) {
    Tensor& buf = grad_buf(id);
    double* d = buf.data();
    const double* s = g.data();
    const std::size_t n = buf.numel();
    for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

// ---------------------------------------------------------------------------
// shape helpers

namespace {

struct AxisSplit {
    std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
    if (axis >= s.size()) {
        throw AxisError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    AxisSplit sp;
    for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
    sp.n = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
    return sp;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out.push_back(s[i]);
    if (out.empty()) out.push_back(1);
    return out;
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// ops

Var Graph::matmul(Var a, Var b) {
    check_mine(a, "matmul");
    check_mine(b, "matmul");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    require_rank2(ta, "matmul");
    require_rank2(tb, "matmul");
    if (ta.dim(1) != tb.dim(0)) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(ta.shape()) +
                             " vs " + shape_str(tb.shape()));
    }
    const std::size_t p = ta.dim(0), q = ta.dim(1), r = tb.dim(1);
    Tensor out({p, r});
    kernels::matmul_nn(ta.data(), tb.data(), out.data(), p, q, r);
    const bool rg = wants_grad(a) || wants_grad(b);
    auto aid = a.id, bid = b.id;
    return make(std::move(out), rg, [aid, bid, p, q, r](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        if (g.nodes_[aid].requires_grad) {
            kernels::matmul_nt_acc(gout.data(), g.val(bid).data(), g.grad_buf(aid).data(), p, r, q);
        }
        if (g.nodes_[bid].requires_grad) {
            kernels::matmul_tn_acc(g.val(aid).data(), gout.data(), g.grad_buf(bid).data(), q, p, r);
        }
    });
}

Var Graph::transpose(Var a) {
    check_mine(a, "transpose");
    const Tensor& ta = val(a.id);
    require_rank2(ta, "transpose");
    const std::size_t r = ta.dim(0), c = ta.dim(1);
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = ta.at(i, j);
    auto aid = a.id;
    return make(std::move(out), wants_grad(a), [aid, r, c](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += gout.at(j, i);
    });
}

Var Graph::reshape(Var a, Shape shape) {
    check_mine(a, "reshape");
    const Tensor& ta = val(a.id);
    if (shape_numel(shape) != ta.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(ta.shape()) + " as " + shape_str(shape));
    }
    Tensor out(shape, ta.vec());
    auto aid = a.id;
    return make(std::move(out), wants_grad(a), [aid](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gout[i];
    });
}

namespace {
enum class Bin { add, sub, mul, div };
}

Var Graph::add(Var a, Var b) {
    check_mine(a, "add");
    check_mine(b, "add");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    check_same_shape(ta, tb, "add");
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + tb[i];
    auto aid = a.id, bid = b.id;
    return make(std::move(out), wants_grad(a) || wants_grad(b), [aid, bid](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        if (g.nodes_[aid].requires_grad) g.accum_grad(aid, gout);
        if (g.nodes_[bid].requires_grad) g.accum_grad(bid, gout);
    });
}

Var Graph::sub(Var a, Var b) {
    check_mine(a, "sub");
    check_mine(b, "sub");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    check_same_shape(ta, tb, "sub");
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] - tb[i];
    auto aid = a.id, bid = b.id;
    return make(std::move(out), wants_grad(a) || wants_grad(b), [aid, bid](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        if (g.nodes_[aid].requires_grad) g.accum_grad(aid, gout);
        if (g.nodes_[bid].requires_grad) {
            Tensor& gb = g.grad_buf(bid);
            for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] -= gout[i];
        }
    });
}

Var Graph::mul(Var a, Var b) {
    check_mine(a, "mul");
    check_mine(b, "mul");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    check_same_shape(ta, tb, "mul");
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * tb[i];
    auto aid = a.id, bid = b.id;
    return make(std::move(out), wants_grad(a) || wants_grad(b), [aid, bid](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        if (g.nodes_[aid].requires_grad) {
            Tensor& ga = g.grad_buf(aid);
            const Tensor& vb = g.val(bid);
            for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gout[i] * vb[i];
        }
        if (g.nodes_[bid].requires_grad) {
            Tensor& gb = g.grad_buf(bid);
            const Tensor& va = g.val(aid);
            for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += gout[i] * va[i];
        }
    });
}

Var Graph::div(Var a, Var b) {
    check_mine(a, "div");
    check_mine(b, "div");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    check_same_shape(ta, tb, "div");
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] / tb[i];
    auto aid = a.id, bid = b.id;
    return make(std::move(out), wants_grad(a) || wants_grad(b), [aid, bid](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        const Tensor& va = g.val(aid);
        const Tensor& vb = g.val(bid);
        if (g.nodes_[aid].requires_grad) {
            Tensor& ga = g.grad_buf(aid);
            for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gout[i] / vb[i];
        }
        if (g.nodes_[bid].requires_grad) {
            Tensor& gb = g.grad_buf(bid);
            for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] -= gout[i] * va[i] / (vb[i] * vb[i]);
        }
    });
}

Var Graph::add_rows(Var a, Var row) {
    check_mine(a, "add_rows");
    check_mine(row, "add_rows");
    const Tensor& ta = val(a.id);
    const Tensor& tr = val(row.id);
    require_rank2(ta, "add_rows");
    if (tr.rank() != 1 || tr.dim(0) != ta.dim(1)) {
        throw DimensionError("add_rows: bias row " + shape_str(tr.shape()) +
                             " does not match matrix " + shape_str(ta.shape()));
    }
    const std::size_t r = ta.dim(0), c = ta.dim(1);
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = ta.at(i, j) + tr[j];
    auto aid = a.id, rid = row.id;
    return make(std::move(out), wants_grad(a) || wants_grad(row), [aid, rid, r, c](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        if (g.nodes_[aid].requires_grad) g.accum_grad(aid, gout);
        if (g.nodes_[rid].requires_grad) {
            Tensor& gr = g.grad_buf(rid);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gr[j] += gout.at(i, j);
        }
    });
}

Var Graph::scale_rows(Var a, Var s) {
    check_mine(a, "scale_rows");
    check_mine(s, "scale_rows");
    const Tensor& ta = val(a.id);
    const Tensor& ts = val(s.id);
    require_rank2(ta, "scale_rows");
    if (ts.rank() != 1 || ts.dim(0) != ta.dim(0)) {
        throw DimensionError("scale_rows: scale " + shape_str(ts.shape()) +
                             " does not match matrix " + shape_str(ta.shape()));
    }
    const std::size_t r = ta.dim(0), c = ta.dim(1);
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = ta.at(i, j) * ts[i];
    auto aid = a.id, sid = s.id;
    return make(std::move(out), wants_grad(a) || wants_grad(s), [aid, sid, r, c](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        const Tensor& va = g.val(aid);
        const Tensor& vs = g.val(sid);
        if (g.nodes_[aid].requires_grad) {
            Tensor& ga = g.grad_buf(aid);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += gout.at(i, j) * vs[i];
        }
        if (g.nodes_[sid].requires_grad) {
            Tensor& gs = g.grad_buf(sid);
            for (std::size_t i = 0; i < r; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < c; ++j) acc += gout.at(i, j) * va.at(i, j);
                gs[i] += acc;
            }
        }
    });
}

namespace {
double op_relu(double v) { return v > 0.0 ? v : 0.0; }
double op_sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

Var Graph::relu(Var a) {
    check_mine(a, "relu");
    const Tensor& ta = val(a.id);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = op_relu(ta[i]);
    auto aid = a.id;
    return make(std::move(out), wants_grad(a), [aid](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        const Tensor& va = g.val(aid);
        Tensor& ga = g.grad_buf(aid);
        // subgradient 0 at exactly 0
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += va[i] > 0.0 ? gout[i] : 0.0;
    });
}

Var Graph::sigmoid(Var a) {
    check_mine(a, "sigmoid");
    const Tensor& ta = val(a.id);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = op_sigmoid(ta[i]);
    auto aid = a.id;
    auto oid = static_cast<std::uint32_t>(nodes_.size());
    return make(std::move(out), wants_grad(a), [aid, oid](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        const Tensor& s = g.val(oid);
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gout[i] * s[i] * (1.0 - s[i]);
    });
}

Var Graph::tanh(Var a) {
    check_mine(a, "tanh");
    const Tensor& ta = val(a.id);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(ta[i]);
    auto aid = a.id;
    auto oid = static_cast<std::uint32_t>(nodes_.size());
    return make(std::move(out), wants_grad(a), [aid, oid](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        const Tensor& t = g.val(oid);
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gout[i] * (1.0 - t[i] * t[i]);
    });
}

Var Graph::sqrt(Var a) {
    check_mine(a, "sqrt");
    const Tensor& ta = val(a.id);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(ta[i]);
    auto aid = a.id;
    auto oid = static_cast<std::uint32_t>(nodes_.size());
    return make(std::move(out), wants_grad(a), [aid, oid](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        const Tensor& s = g.val(oid);
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gout[i] * 0.5 / s[i];
    });
}

Var Graph::log(Var a) {
    check_mine(a, "log");
    const Tensor& ta = val(a.id);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::log(ta[i]);
    auto aid = a.id;
    return make(std::move(out), wants_grad(a), [aid](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        const Tensor& va = g.val(aid);
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gout[i] / va[i];
    });
}

Var Graph::affine(Var a, double scale, double shift) {
    check_mine(a, "affine");
    const Tensor& ta = val(a.id);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = scale * ta[i] + shift;
    auto aid = a.id;
    return make(std::move(out), wants_grad(a), [aid, scale](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += scale * gout[i];
    });
}

Var Graph::map_unary(Var a, double (*f)(double), double (*df)(double)) {
    check_mine(a, "map_unary");
    const Tensor& ta = val(a.id);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(ta[i]);
    auto aid = a.id;
    return make(std::move(out), wants_grad(a), [aid, df](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        const Tensor& va = g.val(aid);
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gout[i] * df(va[i]);
    });
}

Var Graph::reduce_sum(Var a, std::size_t axis) {
    check_mine(a, "reduce_sum");
    const Tensor& ta = val(a.id);
    const AxisSplit sp = split_axis(ta.shape(), axis);
    Tensor out(drop_axis(ta.shape(), axis));
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
            double acc = 0.0;
            for (std::size_t i = 0; i < sp.n; ++i) acc += ta[(o * sp.n + i) * sp.inner + in];
            out[o * sp.inner + in] = acc;
        }
    auto aid = a.id;
    return make(std::move(out), wants_grad(a), [aid, sp](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                const double gv = gout[o * sp.inner + in];
                for (std::size_t i = 0; i < sp.n; ++i) ga[(o * sp.n + i) * sp.inner + in] += gv;
            }
    });
}

Var Graph::reduce_max(Var a, std::size_t axis, const Tensor* mask) {
    check_mine(a, "reduce_max");
    const Tensor& ta = val(a.id);
    if (mask && !mask->same_shape(ta)) {
        throw DimensionError("reduce_max: mask shape " + shape_str(mask->shape()) +
                             " does not match input " + shape_str(ta.shape()));
    }
    const AxisSplit sp = split_axis(ta.shape(), axis);
    Tensor out(drop_axis(ta.shape(), axis));
    // argmax per slice, lowest index wins ties; needed again in backward
    std::vector<std::size_t> arg(sp.outer * sp.inner);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_i = sp.n;
            for (std::size_t i = 0; i < sp.n; ++i) {
                const std::size_t idx = (o * sp.n + i) * sp.inner + in;
                if (mask && (*mask)[idx] == 0.0) continue;
                if (ta[idx] > best) {
                    best = ta[idx];
                    best_i = i;
                }
            }
            if (best_i == sp.n) {
                throw DegenerateSliceError("reduce_max: fully masked slice");
            }
            out[o * sp.inner + in] = best;
            arg[o * sp.inner + in] = best_i;
        }
    auto aid = a.id;
    return make(std::move(out), wants_grad(a), [aid, sp, arg = std::move(arg)](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                const std::size_t i = arg[o * sp.inner + in];
                ga[(o * sp.n + i) * sp.inner + in] += gout[o * sp.inner + in];
            }
    });
}

Var Graph::sum_all(Var a) {
    check_mine(a, "sum_all");
    const Tensor& ta = val(a.id);
    double acc = 0.0;
    for (std::size_t i = 0; i < ta.numel(); ++i) acc += ta[i];
    auto aid = a.id;
    return make(Tensor::scalar(acc), wants_grad(a), [aid](Graph& g) {
        const double gv = g.nodes_[g.cur_node_].grad[0];
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += gv;
    });
}

Var Graph::softmax(Var a, std::size_t axis, const Tensor* mask) {
    check_mine(a, "softmax");
    const Tensor& ta = val(a.id);
    if (mask && !mask->same_shape(ta)) {
        throw DimensionError("softmax: mask shape " + shape_str(mask->shape()) +
                             " does not match input " + shape_str(ta.shape()));
    }
    const AxisSplit sp = split_axis(ta.shape(), axis);
    Tensor out(ta.shape());
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
            double mx = -std::numeric_limits<double>::infinity();
            bool any = false;
            for (std::size_t i = 0; i < sp.n; ++i) {
                const std::size_t idx = (o * sp.n + i) * sp.inner + in;
                if (mask && (*mask)[idx] == 0.0) continue;
                any = true;
                mx = std::max(mx, ta[idx]);
            }
            if (!any) throw DegenerateSliceError("softmax: fully masked slice");
            double sum = 0.0;
            for (std::size_t i = 0; i < sp.n; ++i) {
                const std::size_t idx = (o * sp.n + i) * sp.inner + in;
                if (mask && (*mask)[idx] == 0.0) {
                    out[idx] = 0.0;
                    continue;
                }
                out[idx] = std::exp(ta[idx] - mx);
                sum += out[idx];
            }
            for (std::size_t i = 0; i < sp.n; ++i) {
                const std::size_t idx = (o * sp.n + i) * sp.inner + in;
                if (mask && (*mask)[idx] == 0.0) continue;
                out[idx] /= sum;
            }
        }
    auto aid = a.id;
    auto oid = static_cast<std::uint32_t>(nodes_.size());
    return make(std::move(out), wants_grad(a), [aid, oid, sp](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        const Tensor& p = g.val(oid);
        Tensor& ga = g.grad_buf(aid);
        // dZ = P .* (dY - sum(P .* dY)) per slice; masked entries have P = 0
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                double dot = 0.0;
                for (std::size_t i = 0; i < sp.n; ++i) {
                    const std::size_t idx = (o * sp.n + i) * sp.inner + in;
                    dot += p[idx] * gout[idx];
                }
                for (std::size_t i = 0; i < sp.n; ++i) {
                    const std::size_t idx = (o * sp.n + i) * sp.inner + in;
                    ga[idx] += p[idx] * (gout[idx] - dot);
                }
            }
    });
}

Var Graph::slice_rows(Var a, std::size_t begin, std::size_t count) {
    check_mine(a, "slice_rows");
    const Tensor& ta = val(a.id);
    if (ta.rank() < 1 || ta.rank() > 2) {
        throw DimensionError("slice_rows: expected rank 1 or 2, got " + shape_str(ta.shape()));
    }
    const std::size_t rows = ta.dim(0);
    if (begin + count > rows || count == 0) {
        throw DimensionError("slice_rows: window [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") out of range for " + shape_str(ta.shape()));
    }
    const std::size_t width = ta.rank() == 2 ? ta.dim(1) : 1;
    Shape oshape = ta.rank() == 2 ? Shape{count, width} : Shape{count};
    Tensor out(oshape);
    for (std::size_t i = 0; i < count * width; ++i) out[i] = ta[begin * width + i];
    auto aid = a.id;
    return make(std::move(out), wants_grad(a), [aid, begin, count, width](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        Tensor& ga = g.grad_buf(aid);
        for (std::size_t i = 0; i < count * width; ++i) ga[begin * width + i] += gout[i];
    });
}

Var Graph::stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw DimensionError("stack_rows: empty sequence");
    bool rg = false;
    const std::size_t d = val(rows[0].id).numel();
    for (const Var& r : rows) {
        check_mine(r, "stack_rows");
        const Tensor& tr = val(r.id);
        if (tr.rank() != 1 || tr.numel() != d) {
            throw DimensionError("stack_rows: row shape " + shape_str(tr.shape()) +
                                 " does not match first row [" + std::to_string(d) + "]");
        }
        rg = rg || wants_grad(r);
    }
    Tensor out({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Tensor& tr = val(rows[i].id);
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) = tr[j];
    }
    std::vector<std::uint32_t> ids(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) ids[i] = rows[i].id;
    return make(std::move(out), rg, [ids = std::move(ids), d](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!g.nodes_[ids[i]].requires_grad) continue;
            Tensor& gr = g.grad_buf(ids[i]);
            for (std::size_t j = 0; j < d; ++j) gr[j] += gout.at(i, j);
        }
    });
}

Var Graph::gather_rows(Var table, const std::vector<int>& ids) {
    check_mine(table, "gather_rows");
    const Tensor& tt = val(table.id);
    require_rank2(tt, "gather_rows");
    if (ids.empty()) throw DimensionError("gather_rows: empty id list");
    const std::size_t v = tt.dim(0), e = tt.dim(1);
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw std::out_of_range("gather_rows: row id " + std::to_string(id) +
                                    " out of range for table " + shape_str(tt.shape()));
        }
    }
    Tensor out({ids.size(), e});
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < e; ++j) out.at(i, j) = tt.at(static_cast<std::size_t>(ids[i]), j);
    auto tid = table.id;
    return make(std::move(out), wants_grad(table), [tid, ids, e](Graph& g) {
        const Tensor& gout = g.nodes_[g.cur_node_].grad;
        Tensor& gt = g.grad_buf(tid);
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = 0; j < e; ++j) gt.at(static_cast<std::size_t>(ids[i]), j) += gout.at(i, j);
    });
}

Var Graph::cross_entropy_logits(Var logits, int target) {
    check_mine(logits, "cross_entropy_logits");
    const Tensor& tz = val(logits.id);
    if (tz.rank() != 1) {
        throw DimensionError("cross_entropy_logits: expected a logit vector, got " + shape_str(tz.shape()));
    }
    const std::size_t c = tz.dim(0);
    if (target < 0 || static_cast<std::size_t>(target) >= c) {
        throw std::out_of_range("cross_entropy_logits: target class " + std::to_string(target) +
                                " out of range for " + std::to_string(c) + " classes");
    }
    double mx = tz[0];
    for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, tz[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < c; ++i) sum += std::exp(tz[i] - mx);
    const double lse = mx + std::log(sum);
    const double loss = lse - tz[static_cast<std::size_t>(target)];
    // probabilities saved for the backward rule
    Tensor probs({c});
    for (std::size_t i = 0; i < c; ++i) probs[i] = std::exp(tz[i] - mx) / sum;
    auto zid = logits.id;
    return make(Tensor::scalar(loss), wants_grad(logits),
                [zid, target, probs = std::move(probs)](Graph& g) {
                    const double gv = g.nodes_[g.cur_node_].grad[0];
                    Tensor& gz = g.grad_buf(zid);
                    for (std::size_t i = 0; i < gz.numel(); ++i) {
                        const double onehot = static_cast<std::size_t>(target) == i ? 1.0 : 0.0;
                        gz[i] += gv * (probs[i] - onehot);
                    }
                });
}

GradientMap Graph::backward(Var loss) {
    check_mine(loss, "backward");
    if (!record_) throw std::logic_error("backward: graph was built in evaluation mode");
    if (backward_done_) throw std::logic_error("backward: graph already consumed by a previous backward");
    const Tensor& tl = val(loss.id);
    if (tl.numel() != 1) {
        throw DimensionError("backward: loss must be a scalar, got " + shape_str(tl.shape()));
    }
    backward_done_ = true;
    grad_buf(loss.id)[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.back) continue;
        if (!n.grad_live) continue;  // never reached the loss
        cur_node_ = static_cast<std::uint32_t>(i);
        n.back(*this);
    }
    GradientMap grads;
    for (const auto& [path, id] : param_ids_) {
        grads.emplace(path, nodes_[id].grad_live ? nodes_[id].grad : Tensor(nodes_[id].value.shape()));
    }
    // free the tape; the graph stays readable but cannot run backward again
    for (Node& n : nodes_) n.back = nullptr;
    return grads;
}

}  // namespace sta
