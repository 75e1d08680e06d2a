#include "sta/reference_kernels.hpp"

#include <cmath>
#include <limits>

namespace sta::ref {

Vec matmul(const Vec& a, const Vec& b, std::size_t p, std::size_t q, std::size_t r) {
    Vec c(p * r, 0.0);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t k = 0; k < q; ++k)
                c[i * r + j] += a[i * q + k] * b[k * r + j];
    return c;
}

Vec softmax_rows(const Vec& a, std::size_t rows, std::size_t cols,
                 const std::vector<std::uint8_t>& mask) {
    Vec out(rows * cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < cols; ++j) {
            if (!mask.empty() && mask[i * cols + j] == 0) continue;
            mx = std::max(mx, a[i * cols + j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            if (!mask.empty() && mask[i * cols + j] == 0) continue;
            sum += std::exp(a[i * cols + j] - mx);
        }
        for (std::size_t j = 0; j < cols; ++j) {
            if (!mask.empty() && mask[i * cols + j] == 0) continue;
            out[i * cols + j] = std::exp(a[i * cols + j] - mx) / sum;
        }
    }
    return out;
}

Vec softmax_vec(const Vec& a) {
    return softmax_rows(a, 1, a.size());
}

LstmStepOut lstm_step(const Vec& w_input, const Vec& w_recur, const Vec& bias,
                      const Vec& x, const Vec& h_prev, const Vec& c_prev,
                      std::size_t in_dim, std::size_t hidden) {
    const std::size_t g4 = 4 * hidden;
    Vec gates(g4, 0.0);
    for (std::size_t i = 0; i < g4; ++i) {
        double acc = bias[i];
        for (std::size_t j = 0; j < in_dim; ++j) acc += w_input[i * in_dim + j] * x[j];
        for (std::size_t j = 0; j < hidden; ++j) acc += w_recur[i * hidden + j] * h_prev[j];
        gates[i] = acc;
    }
    auto sigm = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    LstmStepOut out;
    out.h.resize(hidden);
    out.c.resize(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
        const double ig = sigm(gates[j]);
        const double fg = sigm(gates[hidden + j]);
        const double gg = std::tanh(gates[2 * hidden + j]);
        const double og = sigm(gates[3 * hidden + j]);
        out.c[j] = fg * c_prev[j] + ig * gg;
        out.h[j] = og * std::tanh(out.c[j]);
    }
    return out;
}

Vec lstm_sequence(const Vec& w_input, const Vec& w_recur, const Vec& bias,
                  const Vec& xs, std::size_t t_len, std::size_t in_dim, std::size_t hidden) {
    Vec states(t_len * hidden, 0.0);
    Vec h(hidden, 0.0), c(hidden, 0.0);
    for (std::size_t t = 0; t < t_len; ++t) {
        Vec x(xs.begin() + static_cast<long>(t * in_dim), xs.begin() + static_cast<long>((t + 1) * in_dim));
        auto step = lstm_step(w_input, w_recur, bias, x, h, c, in_dim, hidden);
        h = step.h;
        c = step.c;
        for (std::size_t j = 0; j < hidden; ++j) states[t * hidden + j] = h[j];
    }
    return states;
}

Vec affinity(const Vec& ve, const Vec& e, const Vec& wv, const Vec& wq,
             std::size_t k, std::size_t m, std::size_t d, std::size_t da) {
    // pv[k, a] = sum_j wv[a, j] * ve[k, j];  pq[m, a] likewise.
    Vec pv(k * da, 0.0), pq(m * da, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t a = 0; a < da; ++a)
            for (std::size_t j = 0; j < d; ++j)
                pv[i * da + a] += wv[a * d + j] * ve[i * d + j];
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t a = 0; a < da; ++a)
            for (std::size_t j = 0; j < d; ++j)
                pq[i * da + a] += wq[a * d + j] * e[i * d + j];
    Vec out(k * m, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t a = 0; a < da; ++a)
                out[i * m + j] += pv[i * da + a] * pq[j * da + a];
    return out;
}

Vec attend_video(const Vec& c, const Vec& ve, std::size_t k, std::size_t d) {
    Vec out(d, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < d; ++j)
            out[j] += c[i] * ve[i * d + j];
    return out;
}

Vec attend_text(const Vec& b, const Vec& e, std::size_t k, std::size_t m, std::size_t d) {
    Vec out(d, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t a = 0; a < d; ++a)
                out[a] += b[i * m + j] * e[j * d + a];
    return out;
}

Vec fuse_modalities(const Vec& v, const Vec& e, const Vec& wfv, const Vec& bv,
                    const Vec& wfq, const Vec& bq, std::size_t d) {
    Vec out(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        double lv = bv[i];
        double lq = bq[i];
        for (std::size_t j = 0; j < d; ++j) {
            lv += wfv[i * d + j] * v[j];
            lq += wfq[i * d + j] * e[j];
        }
        out[i] = std::max(0.0, lv) * std::max(0.0, lq);
    }
    return out;
}

int count_motif_frames(const Vec& frames, const Vec& motif, std::size_t t, std::size_t dv) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < dv; ++j) norm2 += motif[j] * motif[j];
    int count = 0;
    for (std::size_t i = 0; i < t; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < dv; ++j) dot += frames[i * dv + j] * motif[j];
        if (dot > 0.5 * norm2) ++count;
    }
    return count;
}

}  // namespace sta::ref
