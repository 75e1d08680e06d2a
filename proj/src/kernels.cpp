#include "sta/kernels.hpp"

namespace sta::kernels {

namespace {
// Below this many multiply-adds the OpenMP fork costs more than it buys.
constexpr std::size_t kParallelCutoff = 512 * 1024;
}  // namespace

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t p, std::size_t q, std::size_t r) {
    const bool big = p * q * r >= kParallelCutoff;
#pragma omp parallel for if (big) schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(p); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c + i * r;
        for (std::size_t j = 0; j < r; ++j) crow[j] = 0.0;
        const double* arow = a + i * q;
        for (std::size_t k = 0; k < q; ++k) {
            const double av = arow[k];
            const double* brow = b + k * r;
            for (std::size_t j = 0; j < r; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t p, std::size_t q, std::size_t r) {
    const bool big = p * q * r >= kParallelCutoff;
#pragma omp parallel for if (big) schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(p); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* arow = a + i * q;
        double* crow = c + i * r;
        for (std::size_t j = 0; j < r; ++j) {
            const double* brow = b + j * q;
            double acc = 0.0;
            for (std::size_t k = 0; k < q; ++k) acc += arow[k] * brow[k];
            crow[j] = acc;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t p, std::size_t q, std::size_t r) {
    const bool big = p * q * r >= kParallelCutoff;
#pragma omp parallel for if (big) schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(p); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c + i * r;
        for (std::size_t j = 0; j < r; ++j) crow[j] = 0.0;
        for (std::size_t k = 0; k < q; ++k) {
            const double av = a[k * p + i];
            const double* brow = b + k * r;
            for (std::size_t j = 0; j < r; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nn_acc(const double* a, const double* b, double* c,
                   std::size_t p, std::size_t q, std::size_t r) {
    const bool big = p * q * r >= kParallelCutoff;
#pragma omp parallel for if (big) schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(p); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c + i * r;
        const double* arow = a + i * q;
        for (std::size_t k = 0; k < q; ++k) {
            const double av = arow[k];
            const double* brow = b + k * r;
            for (std::size_t j = 0; j < r; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt_acc(const double* a, const double* b, double* c,
                   std::size_t p, std::size_t q, std::size_t r) {
    const bool big = p * q * r >= kParallelCutoff;
#pragma omp parallel for if (big) schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(p); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* arow = a + i * q;
        double* crow = c + i * r;
        for (std::size_t j = 0; j < r; ++j) {
            const double* brow = b + j * q;
            double acc = 0.0;
            for (std::size_t k = 0; k < q; ++k) acc += arow[k] * brow[k];
            crow[j] += acc;
        }
    }
}

void matmul_tn_acc(const double* a, const double* b, double* c,
                   std::size_t p, std::size_t q, std::size_t r) {
    const bool big = p * q * r >= kParallelCutoff;
#pragma omp parallel for if (big) schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(p); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c + i * r;
        for (std::size_t k = 0; k < q; ++k) {
            const double av = a[k * p + i];
            const double* brow = b + k * r;
            for (std::size_t j = 0; j < r; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace sta::kernels
