// Compares the OpenMP kernels against the serial reference implementations:
// correctness deltas plus wall-time at a few sizes, and the batch-level
// fan-out used by training.

#include "sta/dataio.hpp"
#include "sta/kernels.hpp"
#include "sta/model.hpp"
#include "sta/reference_kernels.hpp"
#include "sta/rng.hpp"
#include "sta/training.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <vector>

using namespace sta;

namespace {

double flops_gemm(std::size_t n) { return 2.0 * static_cast<double>(n) * n * n; }

void bench_matmul(std::size_t n, int reps) {
    Rng rng(n);
    std::vector<double> a(n * n), b(n * n), c(n * n);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);

    double t0 = omp_get_wtime();
    std::vector<double> expect;
    for (int r = 0; r < reps; ++r) expect = ref::matmul(a, b, n, n, n);
    const double serial = (omp_get_wtime() - t0) / reps;

    t0 = omp_get_wtime();
    for (int r = 0; r < reps; ++r) kernels::matmul_nn(a.data(), b.data(), c.data(), n, n, n);
    const double parallel = (omp_get_wtime() - t0) / reps;

    double max_diff = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) max_diff = std::max(max_diff, std::fabs(c[i] - expect[i]));

    std::printf("matmul %4zu  serial %8.2f ms (%5.2f GF/s)  omp %8.2f ms (%5.2f GF/s)  speedup %.2fx  max|diff| %.1e\n",
                n, serial * 1e3, flops_gemm(n) / serial / 1e9, parallel * 1e3,
                flops_gemm(n) / parallel / 1e9, serial / parallel, max_diff);
}

void bench_batch_fanout() {
    SynthConfig sc;
    sc.t_raw = 36;
    sc.frame_dim = 32;
    sc.motif_count = 6;
    sc.noise_sigma = 0.1;
    sc.seed = 3;
    auto data = generate_synthetic(GenTask::action, 64, sc);

    StaConfig mc;
    mc.frame_dim = 32;
    mc.frames = 36;
    mc.n_segments = 2;
    mc.hidden = 48;
    mc.attn_dim = 48;
    mc.embed_dim = 24;
    mc.vocab_size = data.vocab.size();
    mc.task.kind = TaskKind::multichoice;

    for (std::size_t threads : {std::size_t{1}, std::size_t{2}, std::size_t{0}}) {
        StaModel model = StaModel::make(mc, 5);
        AdamaxState opt;
        TrainConfig tc;
        tc.batch_size = 16;
        tc.seed = 9;
        tc.task.kind = TaskKind::multichoice;
        tc.threads = threads;
        Rng shuffle_rng(tc.seed);
        const double t0 = omp_get_wtime();
        EpochReport rep = run_epoch(model, data.examples, tc, opt, 0, shuffle_rng);
        const double dt = omp_get_wtime() - t0;
        std::printf("batch fan-out  threads=%zu%s  %6.2f s  (%.1f examples/s)  epoch loss %.4f\n",
                    threads, threads == 0 ? " (auto)" : "      ", dt,
                    static_cast<double>(data.examples.size()) / dt, rep.mean_loss);
    }
}

}  // namespace

int main() {
    std::printf("threads available: %d\n\n", omp_get_max_threads());
    bench_matmul(64, 50);
    bench_matmul(128, 20);
    bench_matmul(256, 5);
    bench_matmul(384, 3);
    std::printf("\n");
    bench_batch_fanout();
    return 0;
}
