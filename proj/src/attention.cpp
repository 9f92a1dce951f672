#include "moef/attention.hpp"

#include "moef/errors.hpp"

#include <cmath>
#include <memory>

namespace moef {

namespace {

constexpr double kMaskedScore = -1e30;

std::vector<double>& grad_of(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
    return t.grad;
}

// y (m x cols) = x (m x in) * w (in x cols) + b
void project(const double* x, std::size_t m, std::size_t in, const double* w, const double* b,
             std::size_t cols, double* y) {
    for (std::size_t i = 0; i < m; ++i) {
        double* yrow = y + i * cols;
        for (std::size_t j = 0; j < cols; ++j) yrow[j] = b[j];
        const double* xrow = x + i * in;
        for (std::size_t l = 0; l < in; ++l) {
            const double xv = xrow[l];
            if (xv == 0.0) continue;
            const double* wrow = w + l * cols;
            for (std::size_t j = 0; j < cols; ++j) yrow[j] += xv * wrow[j];
        }
    }
}

// accumulate dW += x^T * dy, db += colsum(dy), dx += dy * W^T; any of the
// gradient destinations may be null (frozen parameter / constant input)
void project_backward(const double* x, std::size_t m, std::size_t in, const double* w,
                      std::size_t cols, const double* dy, double* dw, double* db, double* dx) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* dyrow = dy + i * cols;
        const double* xrow = x + i * in;
        if (db != nullptr) {
            for (std::size_t j = 0; j < cols; ++j) db[j] += dyrow[j];
        }
        if (dw != nullptr) {
            for (std::size_t l = 0; l < in; ++l) {
                const double xv = xrow[l];
                double* dwrow = dw + l * cols;
                for (std::size_t j = 0; j < cols; ++j) dwrow[j] += xv * dyrow[j];
            }
        }
        if (dx != nullptr) {
            double* dxrow = dx + i * in;
            for (std::size_t l = 0; l < in; ++l) {
                const double* wrow = w + l * cols;
                double acc = 0.0;
                for (std::size_t j = 0; j < cols; ++j) acc += dyrow[j] * wrow[j];
                dxrow[l] += acc;
            }
        }
    }
}

double* grad_or_null(TensorImpl& t) { return t.requires_grad ? grad_of(t).data() : nullptr; }

struct SelfAttnSaved {
    std::vector<double> q, k, v; // m x hidden each
    std::vector<double> probs;   // heads x m x m
    std::vector<double> o;       // m x hidden, pre output-projection
    std::vector<bool> mask;
    std::size_t m = 0, in = 0, hidden = 0, heads = 0;
};

} // namespace

SelfAttentionParams SelfAttentionParams::init(Rng& rng, std::size_t input_width,
                                              std::size_t hidden, std::size_t heads) {
    if (heads == 0 || hidden % heads != 0) {
        throw ConfigError("attention hidden size " + std::to_string(hidden) +
                          " not divisible by " + std::to_string(heads) + " heads");
    }
    SelfAttentionParams p;
    p.wq = glorot_matrix(rng, input_width, hidden);
    p.wk = glorot_matrix(rng, input_width, hidden);
    p.wv = glorot_matrix(rng, input_width, hidden);
    p.bq = zero_bias(hidden);
    p.bk = zero_bias(hidden);
    p.bv = zero_bias(hidden);
    p.wo = glorot_matrix(rng, hidden, hidden);
    p.bo = zero_bias(hidden);
    p.heads = heads;
    return p;
}

void SelfAttentionParams::collect(const std::string& group, std::vector<NamedParam>& out) {
    out.push_back({group, group + ".wq", wq, false});
    out.push_back({group, group + ".wk", wk, false});
    out.push_back({group, group + ".wv", wv, false});
    out.push_back({group, group + ".bq", bq, false});
    out.push_back({group, group + ".bk", bk, false});
    out.push_back({group, group + ".bv", bv, false});
    out.push_back({group, group + ".wo", wo, false});
    out.push_back({group, group + ".bo", bo, false});
}

Tensor multihead_self_attention(const Tensor& seq, const std::vector<bool>& mask,
                                const SelfAttentionParams& params,
                                std::vector<double>* probs_out) {
    if (seq.rank() != 2) {
        throw DimensionError("self-attention expects a (positions x width) sequence, got " +
                             seq.shape_str());
    }
    const std::size_t m = seq.shape()[0];
    const std::size_t in = seq.shape()[1];
    const std::size_t hidden = params.wq.shape()[1];
    const std::size_t heads = params.heads;
    const std::size_t dk = hidden / heads;
    if (params.wq.shape()[0] != in) {
        throw DimensionError("self-attention projection " + params.wq.shape_str() +
                             " does not accept input width " + std::to_string(in));
    }
    if (mask.size() != m) {
        throw DimensionError("self-attention mask has " + std::to_string(mask.size()) +
                             " entries for " + std::to_string(m) + " positions");
    }

    bool any_valid = false;
    for (bool b : mask) any_valid |= b;
    if (!any_valid) {
        if (probs_out) probs_out->assign(heads * m * m, 0.0);
        return Tensor::zeros({m, hidden});
    }

    auto saved = std::make_shared<SelfAttnSaved>();
    saved->m = m;
    saved->in = in;
    saved->hidden = hidden;
    saved->heads = heads;
    saved->mask = mask;
    saved->q.resize(m * hidden);
    saved->k.resize(m * hidden);
    saved->v.resize(m * hidden);
    saved->probs.assign(heads * m * m, 0.0);
    saved->o.assign(m * hidden, 0.0);

    project(seq.data(), m, in, params.wq.data(), params.bq.data(), hidden, saved->q.data());
    project(seq.data(), m, in, params.wk.data(), params.bk.data(), hidden, saved->k.data());
    project(seq.data(), m, in, params.wv.data(), params.bv.data(), hidden, saved->v.data());

    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<double> scores(m);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dk;
        for (std::size_t i = 0; i < m; ++i) {
            const double* qi = saved->q.data() + i * hidden + off;
            double mx = kMaskedScore;
            for (std::size_t j = 0; j < m; ++j) {
                if (!mask[j]) {
                    scores[j] = kMaskedScore;
                    continue;
                }
                const double* kj = saved->k.data() + j * hidden + off;
                double dot = 0.0;
                for (std::size_t l = 0; l < dk; ++l) dot += qi[l] * kj[l];
                scores[j] = dot * inv_sqrt_dk;
                mx = std::max(mx, scores[j]);
            }
            double total = 0.0;
            double* prow = saved->probs.data() + (h * m + i) * m;
            for (std::size_t j = 0; j < m; ++j) {
                // exp underflows to exactly zero for masked entries
                const double e = mask[j] ? std::exp(scores[j] - mx) : 0.0;
                prow[j] = e;
                total += e;
            }
            for (std::size_t j = 0; j < m; ++j) prow[j] /= total;
            double* orow = saved->o.data() + i * hidden + off;
            for (std::size_t j = 0; j < m; ++j) {
                const double p = prow[j];
                if (p == 0.0) continue;
                const double* vj = saved->v.data() + j * hidden + off;
                for (std::size_t l = 0; l < dk; ++l) orow[l] += p * vj[l];
            }
        }
    }
    if (probs_out) *probs_out = saved->probs;

    // output projection, then zero the rows of masked queries
    std::vector<double> y(m * hidden);
    project(saved->o.data(), m, hidden, params.wo.data(), params.bo.data(), hidden, y.data());
    for (std::size_t i = 0; i < m; ++i) {
        if (!mask[i]) std::fill(y.begin() + i * hidden, y.begin() + (i + 1) * hidden, 0.0);
    }

    bool track = Tape::current() != nullptr &&
                 (seq.requires_grad() || params.wq.requires_grad() || params.wo.requires_grad());
    Tensor out = Tensor::from_values({m, hidden}, std::move(y));
    if (!track) return out;
    out.set_requires_grad(true);

    auto seq_i = seq.impl();
    auto wq_i = params.wq.impl(), wk_i = params.wk.impl(), wv_i = params.wv.impl();
    auto bq_i = params.bq.impl(), bk_i = params.bk.impl(), bv_i = params.bv.impl();
    auto wo_i = params.wo.impl(), bo_i = params.bo.impl();
    auto out_i = out.impl();

    Tape::current()->record([=]() {
        if (out_i->grad.empty()) return;
        const std::size_t m = saved->m, in = saved->in, hidden = saved->hidden,
                          heads = saved->heads;
        const std::size_t dk = hidden / heads;
        const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

        // grads on masked query rows must not flow (their outputs were forced to zero)
        std::vector<double> dy(out_i->grad);
        for (std::size_t i = 0; i < m; ++i) {
            if (!saved->mask[i]) std::fill(dy.begin() + i * hidden, dy.begin() + (i + 1) * hidden, 0.0);
        }

        // through the output projection
        std::vector<double> d_o(m * hidden, 0.0);
        project_backward(saved->o.data(), m, hidden, wo_i->values.data(), hidden, dy.data(),
                         grad_or_null(*wo_i), grad_or_null(*bo_i), d_o.data());

        std::vector<double> d_q(m * hidden, 0.0), d_k(m * hidden, 0.0), d_v(m * hidden, 0.0);
        std::vector<double> dp(m), ds(m);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dk;
            for (std::size_t i = 0; i < m; ++i) {
                const double* prow = saved->probs.data() + (h * m + i) * m;
                const double* doi = d_o.data() + i * hidden + off;
                // dP[i][j] = dO_h[i] . V_h[j];  dV_h[j] += P[i][j] * dO_h[i]
                double dot_pp = 0.0;
                for (std::size_t j = 0; j < m; ++j) {
                    if (prow[j] == 0.0) {
                        dp[j] = 0.0;
                        continue;
                    }
                    const double* vj = saved->v.data() + j * hidden + off;
                    double acc = 0.0;
                    double* dvj = d_v.data() + j * hidden + off;
                    for (std::size_t l = 0; l < dk; ++l) {
                        acc += doi[l] * vj[l];
                        dvj[l] += prow[j] * doi[l];
                    }
                    dp[j] = acc;
                    dot_pp += acc * prow[j];
                }
                // softmax backward, then the 1/sqrt(dk) score scaling
                for (std::size_t j = 0; j < m; ++j) {
                    ds[j] = prow[j] * (dp[j] - dot_pp) * inv_sqrt_dk;
                }
                // dQ_h[i] += sum_j ds[j] K_h[j];  dK_h[j] += ds[j] Q_h[i]
                double* dqi = d_q.data() + i * hidden + off;
                const double* qi = saved->q.data() + i * hidden + off;
                for (std::size_t j = 0; j < m; ++j) {
                    if (ds[j] == 0.0) continue;
                    const double* kj = saved->k.data() + j * hidden + off;
                    double* dkj = d_k.data() + j * hidden + off;
                    for (std::size_t l = 0; l < dk; ++l) {
                        dqi[l] += ds[j] * kj[l];
                        dkj[l] += ds[j] * qi[l];
                    }
                }
            }
        }

        double* d_seq = seq_i->requires_grad ? grad_of(*seq_i).data() : nullptr;
        project_backward(seq_i->values.data(), m, in, wq_i->values.data(), hidden, d_q.data(),
                         grad_or_null(*wq_i), grad_or_null(*bq_i), d_seq);
        project_backward(seq_i->values.data(), m, in, wk_i->values.data(), hidden, d_k.data(),
                         grad_or_null(*wk_i), grad_or_null(*bk_i), d_seq);
        project_backward(seq_i->values.data(), m, in, wv_i->values.data(), hidden, d_v.data(),
                         grad_or_null(*wv_i), grad_or_null(*bv_i), d_seq);
    });
    return out;
}

// ---- pooled attention ---------------------------------------------------

PooledAttentionParams PooledAttentionParams::init(Rng& rng, std::size_t query_width,
                                                  std::size_t seq_width, std::size_t score_dim,
                                                  std::size_t value_dim) {
    PooledAttentionParams p;
    p.wq = glorot_matrix(rng, query_width, score_dim);
    p.bq = zero_bias(score_dim);
    p.wk = glorot_matrix(rng, seq_width, score_dim);
    p.bk = zero_bias(score_dim);
    p.wv = glorot_matrix(rng, seq_width, value_dim);
    p.bv = zero_bias(value_dim);
    return p;
}

void PooledAttentionParams::collect(const std::string& group, std::vector<NamedParam>& out) {
    out.push_back({group, group + ".wq", wq, false});
    out.push_back({group, group + ".bq", bq, false});
    out.push_back({group, group + ".wk", wk, false});
    out.push_back({group, group + ".bk", bk, false});
    out.push_back({group, group + ".wv", wv, false});
    out.push_back({group, group + ".bv", bv, false});
}

namespace {

struct PooledSaved {
    std::vector<double> q;  // score_dim
    std::vector<double> kp; // m x score_dim
    std::vector<double> vp; // m x value_dim
    std::vector<double> p;  // m
    std::vector<bool> mask;
    std::size_t m = 0, qw = 0, sw = 0, sdim = 0, vdim = 0;
};

} // namespace

Tensor pooled_attention(const Tensor& query, const Tensor& seq, const std::vector<bool>& mask,
                        const PooledAttentionParams& params, std::vector<double>* probs_out) {
    const bool query_is_row = query.rank() == 2;
    if (query_is_row && query.shape()[0] != 1) {
        throw DimensionError("pooled attention query must be a vector or single row, got " +
                             query.shape_str());
    }
    if (seq.rank() != 2) {
        throw DimensionError("pooled attention sequence must be rank 2, got " + seq.shape_str());
    }
    const std::size_t qw = query.size();
    const std::size_t m = seq.shape()[0];
    const std::size_t sw = seq.shape()[1];
    const std::size_t sdim = params.wq.shape()[1];
    const std::size_t vdim = params.wv.shape()[1];
    if (params.wq.shape()[0] != qw || params.wk.shape()[0] != sw || params.wv.shape()[0] != sw) {
        throw DimensionError("pooled attention projections do not match query " +
                             query.shape_str() + " / sequence " + seq.shape_str());
    }
    if (mask.size() != m) {
        throw DimensionError("pooled attention mask has " + std::to_string(mask.size()) +
                             " entries for " + std::to_string(m) + " positions");
    }

    const std::vector<std::size_t> out_shape =
        query_is_row ? std::vector<std::size_t>{1, vdim} : std::vector<std::size_t>{vdim};

    bool any_valid = false;
    for (bool b : mask) any_valid |= b;
    if (!any_valid) {
        if (probs_out) probs_out->assign(m, 0.0);
        return Tensor::zeros(out_shape);
    }

    auto saved = std::make_shared<PooledSaved>();
    saved->m = m;
    saved->qw = qw;
    saved->sw = sw;
    saved->sdim = sdim;
    saved->vdim = vdim;
    saved->mask = mask;
    saved->q.resize(sdim);
    saved->kp.resize(m * sdim);
    saved->vp.resize(m * vdim);
    saved->p.assign(m, 0.0);

    project(query.data(), 1, qw, params.wq.data(), params.bq.data(), sdim, saved->q.data());
    project(seq.data(), m, sw, params.wk.data(), params.bk.data(), sdim, saved->kp.data());
    project(seq.data(), m, sw, params.wv.data(), params.bv.data(), vdim, saved->vp.data());

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(sdim));
    std::vector<double> scores(m);
    double mx = kMaskedScore;
    for (std::size_t j = 0; j < m; ++j) {
        if (!mask[j]) {
            scores[j] = kMaskedScore;
            continue;
        }
        const double* kj = saved->kp.data() + j * sdim;
        double dot = 0.0;
        for (std::size_t l = 0; l < sdim; ++l) dot += saved->q[l] * kj[l];
        scores[j] = dot * inv_sqrt;
        mx = std::max(mx, scores[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double e = mask[j] ? std::exp(scores[j] - mx) : 0.0;
        saved->p[j] = e;
        total += e;
    }
    for (std::size_t j = 0; j < m; ++j) saved->p[j] /= total;
    if (probs_out) *probs_out = saved->p;

    std::vector<double> pooled(vdim, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        const double p = saved->p[j];
        if (p == 0.0) continue;
        const double* vj = saved->vp.data() + j * vdim;
        for (std::size_t l = 0; l < vdim; ++l) pooled[l] += p * vj[l];
    }

    bool track = Tape::current() != nullptr &&
                 (query.requires_grad() || seq.requires_grad() || params.wq.requires_grad() ||
                  params.wv.requires_grad());
    Tensor out = Tensor::from_values(out_shape, std::move(pooled));
    if (!track) return out;
    out.set_requires_grad(true);

    auto query_i = query.impl(), seq_i = seq.impl(), out_i = out.impl();
    auto wq_i = params.wq.impl(), bq_i = params.bq.impl();
    auto wk_i = params.wk.impl(), bk_i = params.bk.impl();
    auto wv_i = params.wv.impl(), bv_i = params.bv.impl();

    Tape::current()->record([=]() {
        if (out_i->grad.empty()) return;
        const std::size_t m = saved->m, qw = saved->qw, sw = saved->sw, sdim = saved->sdim,
                          vdim = saved->vdim;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(sdim));
        const double* da = out_i->grad.data();

        // dVp[j] = p_j * da ; dp_j = Vp[j] . da
        std::vector<double> d_vp(m * vdim, 0.0), dp(m, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const double pj = saved->p[j];
            const double* vj = saved->vp.data() + j * vdim;
            double* dvj = d_vp.data() + j * vdim;
            double acc = 0.0;
            for (std::size_t l = 0; l < vdim; ++l) {
                acc += vj[l] * da[l];
                if (pj != 0.0) dvj[l] += pj * da[l];
            }
            dp[j] = acc;
        }
        double dot_pp = 0.0;
        for (std::size_t j = 0; j < m; ++j) dot_pp += dp[j] * saved->p[j];
        // softmax backward + score scaling
        std::vector<double> dz(m);
        for (std::size_t j = 0; j < m; ++j) {
            dz[j] = saved->p[j] * (dp[j] - dot_pp) * inv_sqrt;
        }
        // dq = sum_j dz_j Kp[j] ; dKp[j] = dz_j * q
        std::vector<double> d_q(sdim, 0.0), d_kp(m * sdim, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            if (dz[j] == 0.0) continue;
            const double* kj = saved->kp.data() + j * sdim;
            double* dkj = d_kp.data() + j * sdim;
            for (std::size_t l = 0; l < sdim; ++l) {
                d_q[l] += dz[j] * kj[l];
                dkj[l] += dz[j] * saved->q[l];
            }
        }

        double* d_query = query_i->requires_grad ? grad_of(*query_i).data() : nullptr;
        project_backward(query_i->values.data(), 1, qw, wq_i->values.data(), sdim, d_q.data(),
                         grad_or_null(*wq_i), grad_or_null(*bq_i), d_query);
        double* d_seq = seq_i->requires_grad ? grad_of(*seq_i).data() : nullptr;
        project_backward(seq_i->values.data(), m, sw, wk_i->values.data(), sdim, d_kp.data(),
                         grad_or_null(*wk_i), grad_or_null(*bk_i), d_seq);
        project_backward(seq_i->values.data(), m, sw, wv_i->values.data(), vdim, d_vp.data(),
                         grad_or_null(*wv_i), grad_or_null(*bv_i), d_seq);
    });
    return out;
}

} // namespace moef
