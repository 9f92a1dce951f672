#pragma once

#include "moef/attention.hpp"
#include "moef/params.hpp"
#include "moef/rng.hpp"
#include "moef/signals.hpp"
#include "moef/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace moef {

// Occasion Representation Network: encodes the spectrum sequence into a
// single hidden vector h_L via the Occasion Evolution Layer.

enum class OelKind { Lstm, TransformerEncoder, MlpPool };

OelKind oel_kind_from_string(const std::string& s);
std::string to_string(OelKind k);

struct EncoderConfig {
    OelKind kind = OelKind::Lstm;
    std::size_t hidden_dim = 96; // d_h
    std::size_t transformer_heads = 4;
    std::size_t transformer_layers = 1;
    std::size_t transformer_ff_mult = 2; // feed-forward width = mult * d_h
};

// Gate parameterization of one LSTM cell: input-to-gate matrices are
// (d_h x d), hidden-to-gate matrices (d_h x d_h), biases (d_h). The forget
// bias starts at 1.
struct LstmParams {
    Tensor w1_i, w1_f, w1_o, w1_c;
    Tensor w2_i, w2_f, w2_o, w2_c;
    Tensor b_i, b_f, b_o, b_c;

    static LstmParams init(Rng& rng, std::size_t input_dim, std::size_t hidden_dim);
    void collect(const std::string& group, std::vector<NamedParam>& out);
};

struct LstmState {
    Tensor h; // (d_h)
    Tensor c; // (d_h)
};

// One recurrence step: i/f/o gates through sigmoid, candidate through tanh,
// c_t = f*c + i*cand, h_t = o*tanh(c_t).
LstmState lstm_step(const Tensor& x, const LstmState& prev, const LstmParams& params);

struct TransformerBlock {
    SelfAttentionParams attn;
    Tensor ln1_gain, ln1_bias;
    Tensor ff1_w, ff1_b; // d_h x ff
    Tensor ff2_w, ff2_b; // ff x d_h
    Tensor ln2_gain, ln2_bias;

    static TransformerBlock init(Rng& rng, std::size_t d_h, std::size_t heads, std::size_t ff);
    void collect(const std::string& group, std::vector<NamedParam>& out);
};

struct TransformerParams {
    Tensor in_proj_w, in_proj_b; // d x d_h
    std::vector<TransformerBlock> blocks;
};

struct MlpPoolParams {
    Tensor w1, b1; // d x d_h
    Tensor w2, b2; // d_h x d_h
};

// Parameters of whichever encoder the configuration selects.
struct OelParams {
    EncoderConfig cfg;
    std::size_t input_dim = 0; // d, spectrum row width
    std::optional<LstmParams> lstm;
    std::optional<TransformerParams> transformer;
    std::optional<MlpPoolParams> mlp;

    static OelParams init(Rng& rng, const EncoderConfig& cfg, std::size_t input_dim);
    void collect(std::vector<NamedParam>& out);
};

// Encodes the L_eff x d sequence into the occasion representation (d_h).
// lstm: final hidden state from zero initial state.
// transformer_encoder: input projection + sinusoidal positions, encoder
// blocks, last-position readout.
// mlp_pool: order-invariant mean over rows followed by a two-layer MLP.
Tensor oel_forward(const SpectrumSequence& sequence, const OelParams& params);

// Sinusoidal position encoding table (length x dim).
std::vector<double> sinusoidal_positions(std::size_t length, std::size_t dim);

} // namespace moef
