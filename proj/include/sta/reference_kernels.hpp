#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sta::ref {

// Serial reference implementations, written as the most literal loops
// possible. They are the oracles the test suite checks the graph-based
// implementation against, and the baseline the benchmark compares the
// OpenMP kernels with. Production code never calls into this namespace.

using Vec = std::vector<double>;

// c[P x R] = a[P x Q] . b[Q x R], naive triple loop.
Vec matmul(const Vec& a, const Vec& b, std::size_t p, std::size_t q, std::size_t r);

// Row-wise softmax of a[R x C]; masked entries (mask[i*C+j] == 0) get weight 0.
// mask may be empty (nothing masked).
Vec softmax_rows(const Vec& a, std::size_t rows, std::size_t cols,
                 const std::vector<std::uint8_t>& mask = {});

// Softmax of a vector.
Vec softmax_vec(const Vec& a);

// One LSTM cell step. Weight layout: w_input[4H x In], w_recur[4H x H],
// bias[4H], gate order input/forget/cell/output. Returns {h, c}.
struct LstmStepOut {
    Vec h;
    Vec c;
};
LstmStepOut lstm_step(const Vec& w_input, const Vec& w_recur, const Vec& bias,
                      const Vec& x, const Vec& h_prev, const Vec& c_prev,
                      std::size_t in_dim, std::size_t hidden);

// All T hidden states of a zero-initialised LSTM over xs[T x In], row-major.
Vec lstm_sequence(const Vec& w_input, const Vec& w_recur, const Vec& bias,
                  const Vec& xs, std::size_t t_len, std::size_t in_dim, std::size_t hidden);

// Affinity A[K x M]: entry (k, m) is the inner product of the projected
// frame k and projected word m, with projections wv[Da x D], wq[Da x D]
// applied to ve[K x D] and e[M x D].
Vec affinity(const Vec& ve, const Vec& e, const Vec& wv, const Vec& wq,
             std::size_t k, std::size_t m, std::size_t d, std::size_t da);

// v_out[D] = sum_k c[k] * ve[k, :]
Vec attend_video(const Vec& c, const Vec& ve, std::size_t k, std::size_t d);

// e_out[D] = sum_k sum_m b[k, m] * e[m, :]
Vec attend_text(const Vec& b, const Vec& e, std::size_t k, std::size_t m, std::size_t d);

// H = relu(wfv.v + bv) * relu(wfq.e + bq), elementwise product.
Vec fuse_modalities(const Vec& v, const Vec& e, const Vec& wfv, const Vec& bv,
                    const Vec& wfq, const Vec& bq, std::size_t d);

// Counts frames of frames[T x Dv] whose inner product with the motif exceeds
// half the motif's squared norm. Recovers synthetic count answers exactly at
// zero noise.
int count_motif_frames(const Vec& frames, const Vec& motif, std::size_t t, std::size_t dv);

}  // namespace sta::ref
