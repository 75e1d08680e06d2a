#pragma once

#include <cstddef>

namespace sta::kernels {

// Production kernels used by the autodiff graph. Parallel loops are always
// over output elements, so results are bitwise identical for any thread count.
// The serial counterparts used as test oracles live in reference_kernels.hpp.

// c = a[P x Q] . b[Q x R]
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t p, std::size_t q, std::size_t r);

// c = a[P x Q] . b[R x Q]^T
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t p, std::size_t q, std::size_t r);

// c = a[Q x P]^T . b[Q x R]
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t p, std::size_t q, std::size_t r);

// Accumulating variants (c += ...), used when accumulating gradients.
void matmul_nn_acc(const double* a, const double* b, double* c,
                   std::size_t p, std::size_t q, std::size_t r);
void matmul_nt_acc(const double* a, const double* b, double* c,
                   std::size_t p, std::size_t q, std::size_t r);
void matmul_tn_acc(const double* a, const double* b, double* c,
                   std::size_t p, std::size_t q, std::size_t r);

}  // namespace sta::kernels
