#include "moef/orn.hpp"

#include "moef/errors.hpp"

#include <cmath>

namespace moef {

OelKind oel_kind_from_string(const std::string& s) {
    if (s == "lstm") return OelKind::Lstm;
    if (s == "transformer_encoder") return OelKind::TransformerEncoder;
    if (s == "mlp_pool") return OelKind::MlpPool;
    throw ConfigError("unknown encoder kind '" + s +
                      "' (expected lstm|transformer_encoder|mlp_pool)");
}

std::string to_string(OelKind k) {
    switch (k) {
        case OelKind::Lstm: return "lstm";
        case OelKind::TransformerEncoder: return "transformer_encoder";
        case OelKind::MlpPool: return "mlp_pool";
    }
    return "?";
}

LstmParams LstmParams::init(Rng& rng, std::size_t input_dim, std::size_t hidden_dim) {
    LstmParams p;
    p.w1_i = glorot_matrix(rng, hidden_dim, input_dim);
    p.w1_f = glorot_matrix(rng, hidden_dim, input_dim);
    p.w1_o = glorot_matrix(rng, hidden_dim, input_dim);
    p.w1_c = glorot_matrix(rng, hidden_dim, input_dim);
    p.w2_i = glorot_matrix(rng, hidden_dim, hidden_dim);
    p.w2_f = glorot_matrix(rng, hidden_dim, hidden_dim);
    p.w2_o = glorot_matrix(rng, hidden_dim, hidden_dim);
    p.w2_c = glorot_matrix(rng, hidden_dim, hidden_dim);
    p.b_i = zero_bias(hidden_dim);
    p.b_f = const_bias(hidden_dim, 1.0); // forget gate starts open
    p.b_o = zero_bias(hidden_dim);
    p.b_c = zero_bias(hidden_dim);
    return p;
}

void LstmParams::collect(const std::string& group, std::vector<NamedParam>& out) {
    out.push_back({group, group + ".w1_i", w1_i, false});
    out.push_back({group, group + ".w1_f", w1_f, false});
    out.push_back({group, group + ".w1_o", w1_o, false});
    out.push_back({group, group + ".w1_c", w1_c, false});
    out.push_back({group, group + ".w2_i", w2_i, false});
    out.push_back({group, group + ".w2_f", w2_f, false});
    out.push_back({group, group + ".w2_o", w2_o, false});
    out.push_back({group, group + ".w2_c", w2_c, false});
    out.push_back({group, group + ".b_i", b_i, false});
    out.push_back({group, group + ".b_f", b_f, false});
    out.push_back({group, group + ".b_o", b_o, false});
    out.push_back({group, group + ".b_c", b_c, false});
}

LstmState lstm_step(const Tensor& x, const LstmState& prev, const LstmParams& params) {
    const std::size_t d = params.w1_i.shape()[1];
    const std::size_t d_h = params.w1_i.shape()[0];
    if (x.rank() != 1 || x.shape()[0] != d) {
        throw DimensionError("lstm_step: input " + x.shape_str() + " does not match W1 " +
                             params.w1_i.shape_str());
    }
    if (prev.h.shape()[0] != d_h || prev.c.shape()[0] != d_h) {
        throw DimensionError("lstm_step: state width " + prev.h.shape_str() +
                             " does not match hidden size " + std::to_string(d_h));
    }
    Tensor i_gate = sigmoid(add(add(matmul(params.w1_i, x), matmul(params.w2_i, prev.h)),
                                params.b_i));
    Tensor f_gate = sigmoid(add(add(matmul(params.w1_f, x), matmul(params.w2_f, prev.h)),
                                params.b_f));
    Tensor o_gate = sigmoid(add(add(matmul(params.w1_o, x), matmul(params.w2_o, prev.h)),
                                params.b_o));
    Tensor cand = moef::tanh(add(add(matmul(params.w1_c, x), matmul(params.w2_c, prev.h)),
                                 params.b_c));
    Tensor c_t = add(mul(f_gate, prev.c), mul(i_gate, cand));
    Tensor h_t = mul(o_gate, moef::tanh(c_t));
    return {h_t, c_t};
}

TransformerBlock TransformerBlock::init(Rng& rng, std::size_t d_h, std::size_t heads,
                                        std::size_t ff) {
    TransformerBlock b;
    b.attn = SelfAttentionParams::init(rng, d_h, d_h, heads);
    b.ln1_gain = const_bias(d_h, 1.0);
    b.ln1_bias = zero_bias(d_h);
    b.ff1_w = glorot_matrix(rng, d_h, ff);
    b.ff1_b = zero_bias(ff);
    b.ff2_w = glorot_matrix(rng, ff, d_h);
    b.ff2_b = zero_bias(d_h);
    b.ln2_gain = const_bias(d_h, 1.0);
    b.ln2_bias = zero_bias(d_h);
    return b;
}

void TransformerBlock::collect(const std::string& group, std::vector<NamedParam>& out) {
    attn.collect(group + ".attn", out);
    out.push_back({group, group + ".ln1_gain", ln1_gain, false});
    out.push_back({group, group + ".ln1_bias", ln1_bias, false});
    out.push_back({group, group + ".ff1_w", ff1_w, false});
    out.push_back({group, group + ".ff1_b", ff1_b, false});
    out.push_back({group, group + ".ff2_w", ff2_w, false});
    out.push_back({group, group + ".ff2_b", ff2_b, false});
    out.push_back({group, group + ".ln2_gain", ln2_gain, false});
    out.push_back({group, group + ".ln2_bias", ln2_bias, false});
}

OelParams OelParams::init(Rng& rng, const EncoderConfig& cfg, std::size_t input_dim) {
    OelParams p;
    p.cfg = cfg;
    p.input_dim = input_dim;
    switch (cfg.kind) {
        case OelKind::Lstm:
            p.lstm = LstmParams::init(rng, input_dim, cfg.hidden_dim);
            break;
        case OelKind::TransformerEncoder: {
            TransformerParams tp;
            tp.in_proj_w = glorot_matrix(rng, input_dim, cfg.hidden_dim);
            tp.in_proj_b = zero_bias(cfg.hidden_dim);
            for (std::size_t l = 0; l < cfg.transformer_layers; ++l) {
                tp.blocks.push_back(TransformerBlock::init(
                    rng, cfg.hidden_dim, cfg.transformer_heads,
                    cfg.transformer_ff_mult * cfg.hidden_dim));
            }
            p.transformer = std::move(tp);
            break;
        }
        case OelKind::MlpPool: {
            MlpPoolParams mp;
            mp.w1 = glorot_matrix(rng, input_dim, cfg.hidden_dim);
            mp.b1 = zero_bias(cfg.hidden_dim);
            mp.w2 = glorot_matrix(rng, cfg.hidden_dim, cfg.hidden_dim);
            mp.b2 = zero_bias(cfg.hidden_dim);
            p.mlp = std::move(mp);
            break;
        }
    }
    return p;
}

void OelParams::collect(std::vector<NamedParam>& out) {
    if (lstm) lstm->collect("oel.lstm", out);
    if (transformer) {
        out.push_back({"oel.transformer", "oel.transformer.in_proj_w", transformer->in_proj_w,
                       false});
        out.push_back({"oel.transformer", "oel.transformer.in_proj_b", transformer->in_proj_b,
                       false});
        for (std::size_t l = 0; l < transformer->blocks.size(); ++l) {
            transformer->blocks[l].collect("oel.transformer.block" + std::to_string(l), out);
        }
    }
    if (mlp) {
        out.push_back({"oel.mlp", "oel.mlp.w1", mlp->w1, false});
        out.push_back({"oel.mlp", "oel.mlp.b1", mlp->b1, false});
        out.push_back({"oel.mlp", "oel.mlp.w2", mlp->w2, false});
        out.push_back({"oel.mlp", "oel.mlp.b2", mlp->b2, false});
    }
}

std::vector<double> sinusoidal_positions(std::size_t length, std::size_t dim) {
    std::vector<double> pe(length * dim);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
            const double angle =
                static_cast<double>(pos) / std::pow(10000.0, exponent);
            pe[pos * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

Tensor oel_forward(const SpectrumSequence& sequence, const OelParams& params) {
    if (sequence.length == 0) {
        throw DataError("insufficient history: empty spectrum sequence");
    }
    if (sequence.width != params.input_dim) {
        throw DimensionError("spectrum row width " + std::to_string(sequence.width) +
                             " does not match encoder input width " +
                             std::to_string(params.input_dim));
    }
    const std::size_t L = sequence.length;
    const std::size_t d = sequence.width;
    const std::size_t d_h = params.cfg.hidden_dim;

    switch (params.cfg.kind) {
        case OelKind::Lstm: {
            LstmState state{Tensor::zeros({d_h}), Tensor::zeros({d_h})};
            for (std::size_t t = 0; t < L; ++t) {
                Tensor x = Tensor::from_values(
                    {d}, std::vector<double>(sequence.row(t), sequence.row(t) + d));
                state = lstm_step(x, state, *params.lstm);
            }
            return state.h;
        }
        case OelKind::TransformerEncoder: {
            const TransformerParams& tp = *params.transformer;
            Tensor rows = Tensor::from_values({L, d}, sequence.values);
            Tensor x = add_rowvec(matmul(rows, tp.in_proj_w), tp.in_proj_b);
            Tensor pe = Tensor::from_values({L, d_h}, sinusoidal_positions(L, d_h));
            x = add(x, pe);
            const std::vector<bool> mask(L, true);
            for (const TransformerBlock& blk : tp.blocks) {
                Tensor attn_out = multihead_self_attention(x, mask, blk.attn);
                x = layer_norm(add(x, attn_out), blk.ln1_gain, blk.ln1_bias);
                Tensor ff = add_rowvec(
                    matmul(relu(add_rowvec(matmul(x, blk.ff1_w), blk.ff1_b)), blk.ff2_w),
                    blk.ff2_b);
                x = layer_norm(add(x, ff), blk.ln2_gain, blk.ln2_bias);
            }
            return reshape(slice_rows(x, L - 1, L), {d_h});
        }
        case OelKind::MlpPool: {
            const MlpPoolParams& mp = *params.mlp;
            Tensor rows = Tensor::from_values({L, d}, sequence.values);
            Tensor pooled = mean_rows(rows); // (d), order-invariant
            Tensor hidden = relu(add(matmul(pooled, mp.w1), mp.b1));
            return add(matmul(hidden, mp.w2), mp.b2);
        }
    }
    throw ContractError("unreachable encoder kind");
}

} // namespace moef
