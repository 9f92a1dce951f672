#pragma once

#include "moef/params.hpp"
#include "moef/rng.hpp"
#include "moef/tensor.hpp"

#include <vector>

namespace moef {

// Multi-head scaled-dot-product self-attention over one sequence, fused
// into a single tape operation (hand-written backward). Masked positions
// are excluded as keys and produce zero output rows as queries.
struct SelfAttentionParams {
    Tensor wq, wk, wv; // input_width x hidden
    Tensor bq, bk, bv; // hidden
    Tensor wo;         // hidden x hidden
    Tensor bo;         // hidden
    std::size_t heads = 8;

    static SelfAttentionParams init(Rng& rng, std::size_t input_width, std::size_t hidden,
                                    std::size_t heads);
    void collect(const std::string& group, std::vector<NamedParam>& out);
};

// seq: (m x input_width); mask: m entries, true = valid. Returns (m x hidden).
// An all-masked sequence yields all zeros without recording anything.
// When probs_out is given it receives the attention weights as
// heads * m * m doubles (query-major), for inspection in tests.
Tensor multihead_self_attention(const Tensor& seq, const std::vector<bool>& mask,
                                const SelfAttentionParams& params,
                                std::vector<double>* probs_out = nullptr);

// Single-head pooled attention: a projected query scores projected keys,
// masked softmax weights pool the projected values into one vector.
struct PooledAttentionParams {
    Tensor wq; // query_width x score_dim
    Tensor bq; // score_dim
    Tensor wk; // seq_width x score_dim
    Tensor bk; // score_dim
    Tensor wv; // seq_width x value_dim
    Tensor bv; // value_dim

    static PooledAttentionParams init(Rng& rng, std::size_t query_width, std::size_t seq_width,
                                      std::size_t score_dim, std::size_t value_dim);
    void collect(const std::string& group, std::vector<NamedParam>& out);
};

// query: (w) or (1 x w); seq: (m x seq_width). Returns the pooled vector in
// the query's rank ((value_dim) or (1 x value_dim)). All-masked -> zeros.
Tensor pooled_attention(const Tensor& query, const Tensor& seq, const std::vector<bool>& mask,
                        const PooledAttentionParams& params,
                        std::vector<double>* probs_out = nullptr);

} // namespace moef
