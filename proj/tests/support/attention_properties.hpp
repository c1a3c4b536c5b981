#pragma once

// Randomized attention property suite shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fra/combiner.hpp"
#include "fra/ops.hpp"
#include "support/oracles.hpp"

namespace oracle {

struct AttentionSummary {
    std::size_t cases = 0;
    double max_row_sum_error = 0.0;   // |sum_j softmax_ij - 1|
    double max_envelope_excess = 0.0; // distance outside V's column range
    double max_single_head_diff = 0.0;
    double max_permutation_diff = 0.0;
    double max_direct_rel_error = 0.0;
};

// softmax(Q K^T / sqrt(d)) V evaluated directly in long double.
inline std::vector<long double> attention_direct(const fra::Tensor& q, const fra::Tensor& k, const fra::Tensor& v) {
    const std::size_t n = q.dim(0), m = k.dim(0), d = q.dim(1), dv = v.dim(1);
    std::vector<long double> out(n * dv, 0.0L);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<long double> s(m);
        for (std::size_t j = 0; j < m; ++j) {
            long double acc = 0.0L;
            for (std::size_t t = 0; t < d; ++t)
                acc += static_cast<long double>(q.at(i, t)) * static_cast<long double>(k.at(j, t));
            s[j] = acc / std::sqrt(static_cast<long double>(d));
        }
        const long double mx = *std::max_element(s.begin(), s.end());
        long double z = 0.0L;
        for (auto& e : s) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] += s[j] / z * static_cast<long double>(v.at(j, c));
    }
    return out;
}

inline AttentionSummary run_attention_properties(std::size_t cases, std::uint64_t seed) {
    using fra::Tensor;
    using fra::ad::Tape;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> ext(1, 8);
    std::uniform_real_distribution<double> mag(0.1, 20.0);
    AttentionSummary s;
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t n = ext(rng), m = ext(rng), d = ext(rng), dv = ext(rng);
        const double a = mag(rng);
        const Tensor q({n, d}, random_vector(n * d, rng, -a, a));
        const Tensor k({m, d}, random_vector(m * d, rng, -a, a));
        const Tensor v({m, dv}, random_vector(m * dv, rng));

        fra::combiner::AttentionTrace trace;
        Tape tape(fra::ad::GradMode::kDisabled);
        const Tensor out = fra::combiner::attention(tape.input(q), tape.input(k), tape.input(v), &trace).value();
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < m; ++j) row += trace.weights[0].at(i, j);
            s.max_row_sum_error = std::max(s.max_row_sum_error, std::abs(row - 1.0));
        }
        for (std::size_t col = 0; col < dv; ++col) {
            double lo = v.at(0, col), hi = lo;
            for (std::size_t j = 1; j < m; ++j) lo = std::min(lo, v.at(j, col)), hi = std::max(hi, v.at(j, col));
            for (std::size_t i = 0; i < n; ++i) {
                const double o = out.at(i, col);
                s.max_envelope_excess = std::max({s.max_envelope_excess, lo - o, o - hi});
            }
        }
        const auto direct = attention_direct(q, k, v);
        for (std::size_t i = 0; i < direct.size(); ++i) {
            const long double denom = std::max(std::abs(direct[i]), 1e-12L);
            s.max_direct_rel_error = std::max(
                s.max_direct_rel_error, static_cast<double>(std::abs(static_cast<long double>(out[i]) - direct[i]) / denom));
        }

        // One head with W^O = I is a single attention call on the projections.
        {
            const std::size_t dm = ext(rng), dk = ext(rng), dh = ext(rng);
            const Tensor x({n, dm}, random_vector(n * dm, rng));
            const Tensor wq({dm, dk}, random_vector(dm * dk, rng)), wk({dm, dk}, random_vector(dm * dk, rng)),
                wv({dm, dh}, random_vector(dm * dh, rng));
            Tensor eye({dh, dh}, 0.0);
            for (std::size_t i = 0; i < dh; ++i) eye.at(i, i) = 1.0;
            Tape t(fra::ad::GradMode::kDisabled);
            const auto xv = t.input(x);
            fra::combiner::MultiHeadVars mh{{t.input(wq)}, {t.input(wk)}, {t.input(wv)}, t.input(eye)};
            const Tensor got = fra::combiner::multi_head(xv, mh).value();
            const Tensor want = fra::combiner::attention(fra::ad::matmul(xv, mh.wq[0]), fra::ad::matmul(xv, mh.wk[0]),
                                                         fra::ad::matmul(xv, mh.wv[0]))
                                    .value();
            for (std::size_t i = 0; i < got.numel(); ++i)
                s.max_single_head_diff = std::max(s.max_single_head_diff, std::abs(got[i] - want[i]));
        }

        // Without positional embeddings, pooling ignores the token order.
        {
            fra::combiner::CombinerConfig cfg;
            cfg.face_dim = 32;
            cfg.pose_dim = 32;
            cfg.patch = 4;
            cfg.model_dim = 8;
            cfg.ff_dim = 8;
            cfg.heads = 2;
            cfg.layers = 2;
            cfg.dropout = 0.0;
            fra::combiner::Combiner comb(cfg, rng());
            comb.zero_positional();
            const auto& g = comb.geometry();
            const Tensor tokens({g.tokens, g.token_dim}, random_vector(g.tokens * g.token_dim, rng));
            std::vector<std::size_t> perm(g.tokens);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            Tensor permuted(tokens.shape());
            for (std::size_t r = 0; r < g.tokens; ++r)
                for (std::size_t col = 0; col < g.token_dim; ++col) permuted.at(r, col) = tokens.at(perm[r], col);
            Tape t(fra::ad::GradMode::kDisabled);
            const Tensor p0 = comb.encode_tokens(t, t.input(tokens), {}).value();
            const Tensor p1 = comb.encode_tokens(t, t.input(permuted), {}).value();
            for (std::size_t i = 0; i < p0.numel(); ++i)
                s.max_permutation_diff = std::max(s.max_permutation_diff, std::abs(p0[i] - p1[i]));
        }
        ++s.cases;
    }
    return s;
}

}  // namespace oracle
