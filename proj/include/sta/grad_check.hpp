#pragma once

#include "sta/graph.hpp"

#include <functional>
#include <string>
#include <vector>

namespace sta {

// Scalar-valued function of one tensor, built on a caller-provided graph.
using ScalarFn = std::function<Var(Graph&, Var)>;

struct GradCheckFailure {
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    bool passed = true;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::vector<GradCheckFailure> failures;
};

// Compares the reverse-mode gradient of f at x against central finite
// differences (f(x+h) - f(x-h)) / 2h, elementwise. The relative error is
// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8); the check passes iff every
// element is within tol.
GradCheckReport grad_check(const ScalarFn& f, const Tensor& x,
                           double h = 1e-5, double tol = 1e-4);

// Same comparison applied to precomputed gradients; the building block shared
// by grad_check and the whole-model checker.
GradCheckReport compare_grads(const std::vector<double>& analytic,
                              const std::vector<double>& numeric, double tol);

// Checks every element of every listed parameter: one reverse-mode pass
// against central differences obtained by perturbing the parameter storage
// in place and re-running fwd. fwd must rebuild the loss from the current
// parameter values on each call and must be deterministic.
GradCheckReport param_grad_check(const std::function<Var(Graph&)>& fwd,
                                 const ParamRefs& params,
                                 double h = 1e-5, double tol = 1e-4);

}  // namespace sta
