#include "sta/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace sta {

GradCheckReport compare_grads(const std::vector<double>& analytic,
                              const std::vector<double>& numeric, double tol) {
    GradCheckReport report;
    report.checked = analytic.size();
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double ga = analytic[i];
        const double gn = numeric[i];
        const double denom = std::max({std::fabs(ga), std::fabs(gn), 1e-8});
        const double rel = std::fabs(ga - gn) / denom;
        report.max_rel_err = std::max(report.max_rel_err, rel);
        if (rel > tol) {
            report.passed = false;
            if (report.failures.size() < 16) report.failures.push_back({i, ga, gn, rel});
        }
    }
    return report;
}

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double h, double tol) {
    // analytic gradient
    Tensor xg = x;
    xg.requires_grad = true;
    Graph g;
    Var vx = g.leaf(xg);
    Var loss = f(g, vx);
    g.backward(loss);
    const Tensor& ga = g.grad(vx);

    // central differences
    std::vector<double> numeric(x.numel());
    Tensor probe = x;
    probe.requires_grad = false;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        Graph gp(false);
        const double fp = f(gp, gp.leaf(probe)).value()[0];
        probe[i] = orig - h;
        Graph gm(false);
        const double fm = f(gm, gm.leaf(probe)).value()[0];
        probe[i] = orig;
        numeric[i] = (fp - fm) / (2.0 * h);
    }
    return compare_grads(ga.vec(), numeric, tol);
}

GradCheckReport param_grad_check(const std::function<Var(Graph&)>& fwd,
                                 const ParamRefs& params, double h, double tol) {
    Graph g;
    GradientMap grads = g.backward(fwd(g));

    std::vector<double> analytic;
    std::vector<double> numeric;
    for (const auto& [path, tensor] : params) {
        auto it = grads.find(path);
        if (it == grads.end()) {
            throw std::logic_error("param_grad_check: forward never registered parameter '" + path + "'");
        }
        const Tensor& ga = it->second;
        for (std::size_t i = 0; i < tensor->numel(); ++i) {
            analytic.push_back(ga[i]);
            const double orig = (*tensor)[i];
            (*tensor)[i] = orig + h;
            Graph gp(false);
            const double fp = fwd(gp).value()[0];
            (*tensor)[i] = orig - h;
            Graph gm(false);
            const double fm = fwd(gm).value()[0];
            (*tensor)[i] = orig;
            numeric.push_back((fp - fm) / (2.0 * h));
        }
    }
    return compare_grads(analytic, numeric, tol);
}

}  // namespace sta
