#pragma once

#include "moef/data.hpp"
#include "moef/experts.hpp"
#include "moef/orn.hpp"
#include "moef/params.hpp"
#include "moef/signals.hpp"
#include "moef/tensor.hpp"

#include <string>
#include <vector>

namespace moef {

// Ablation switchboard. one_expert forces K=1; no_fft feeds log1p
// time-domain windows to the pooling MLP; no_lstm swaps the LSTM for the
// pooling MLP over spectra; transformer_encoder swaps in the encoder block.
enum class ModelVariant { Full, OneExpert, NoFft, NoLstm, TransformerEncoder };

ModelVariant variant_from_string(const std::string& s);
std::string to_string(ModelVariant v);

// Shared scoring function f_g(h, r) = w . tanh(W_h h + W_r r + b); the
// same parameters score every expert.
struct GateParams {
    Tensor w_h; // gate_hidden x d_h
    Tensor w_r; // gate_hidden x expert_width
    Tensor b;   // gate_hidden
    Tensor w;   // gate_hidden

    static GateParams init(Rng& rng, std::size_t gate_hidden, std::size_t d_h,
                           std::size_t expert_width);
    void collect(std::vector<NamedParam>& out);
};

struct Prediction {
    Tensor y_hat;                       // (batch), strictly in (0,1)
    Tensor alpha;                       // (batch x K), rows sum to 1
    Tensor occasion;                    // (d_h) representation h_L
    std::vector<Tensor> expert_outputs; // populated on request: K x (batch x width)
};

// alpha[i] = softmax_i f_g(h, r_i) per sample.
Tensor mixture_weights(const Tensor& occasion, const std::vector<Tensor>& expert_outputs,
                       const GateParams& gate);

// Gate, mix and apply the prediction head (ReLU hiddens, sigmoid output).
Prediction predict(const Tensor& occasion, const std::vector<Tensor>& expert_outputs,
                   const GateParams& gate, const MlpParams& head, bool keep_expert_outputs);

// Mean logloss over the batch; predictions are clipped to [1e-7, 1-1e-7].
Tensor logloss(const std::vector<double>& labels, const Tensor& y_hat);

struct ModelConfig {
    ModelVariant variant = ModelVariant::Full;
    std::size_t num_experts = 2;
    FeatureSchema schema;
    WindowingConfig windowing;
    std::size_t signal_history = 96; // N steps consumed per snapshot
    std::size_t num_signals = 3;     // M
    EncoderConfig encoder;
    ExpertSizes expert_sizes;
    std::vector<std::size_t> head_sizes = {144, 64, 1};
    std::size_t gate_hidden = 64;

    std::size_t effective_num_experts() const;
    // occasion-input row width after the variant's transform
    std::size_t occasion_width() const;
    bool uses_fft() const { return variant != ModelVariant::NoFft; }
    Normalization occasion_normalization() const;
    OelKind effective_oel_kind() const;
};

// The assembled model: shared embeddings, ORN, K experts, gate and head.
class MoefModel {
public:
    MoefModel(const ModelConfig& cfg, uint64_t seed);

    // Variant-aware occasion input: spectrum sequence (FFT path) or
    // flattened log1p windows (no_fft path).
    SpectrumSequence occasion_input(const OccasionSignalSeries& series,
                                    const SignalStats& stats) const;

    Prediction forward(const SpectrumSequence& occasion_rows,
                       const std::vector<SampleRecord>& batch,
                       bool keep_expert_outputs = false);
    // Convenience: checks that the series covers the batch's serving time.
    Prediction forward(const OccasionSignalSeries& series, const SignalStats& stats,
                       const std::vector<SampleRecord>& batch,
                       bool keep_expert_outputs = false);

    const ModelConfig& config() const { return cfg_; }
    std::vector<NamedParam>& parameters() { return params_; }

    EmbeddingTables& tables() { return tables_; }
    OelParams& oel() { return oel_; }
    std::vector<ExpertParams>& experts() { return experts_; }
    GateParams& gate() { return gate_; }
    MlpParams& head() { return head_; }

private:
    ModelConfig cfg_;
    EmbeddingTables tables_;
    OelParams oel_;
    std::vector<ExpertParams> experts_;
    GateParams gate_;
    MlpParams head_;
    std::vector<NamedParam> params_;
};

} // namespace moef
