#include "moef/mixture.hpp"

#include "moef/errors.hpp"

#include <algorithm>

namespace moef {

ModelVariant variant_from_string(const std::string& s) {
    if (s == "full") return ModelVariant::Full;
    if (s == "one_expert") return ModelVariant::OneExpert;
    if (s == "no_fft") return ModelVariant::NoFft;
    if (s == "no_lstm") return ModelVariant::NoLstm;
    if (s == "transformer_encoder") return ModelVariant::TransformerEncoder;
    throw ConfigError("unknown model variant '" + s +
                      "' (expected full|one_expert|no_fft|no_lstm|transformer_encoder)");
}

std::string to_string(ModelVariant v) {
    switch (v) {
        case ModelVariant::Full: return "full";
        case ModelVariant::OneExpert: return "one_expert";
        case ModelVariant::NoFft: return "no_fft";
        case ModelVariant::NoLstm: return "no_lstm";
        case ModelVariant::TransformerEncoder: return "transformer_encoder";
    }
    return "?";
}

GateParams GateParams::init(Rng& rng, std::size_t gate_hidden, std::size_t d_h,
                            std::size_t expert_width) {
    GateParams g;
    g.w_h = glorot_matrix(rng, gate_hidden, d_h);
    g.w_r = glorot_matrix(rng, gate_hidden, expert_width);
    g.b = zero_bias(gate_hidden);
    g.w = Tensor::param({gate_hidden},
                        glorot_uniform(rng, gate_hidden, 1, gate_hidden));
    return g;
}

void GateParams::collect(std::vector<NamedParam>& out) {
    out.push_back({"gate", "gate.w_h", w_h, false});
    out.push_back({"gate", "gate.w_r", w_r, false});
    out.push_back({"gate", "gate.b", b, false});
    out.push_back({"gate", "gate.w", w, false});
}

Tensor mixture_weights(const Tensor& occasion, const std::vector<Tensor>& expert_outputs,
                       const GateParams& gate) {
    if (expert_outputs.empty()) throw ConfigError("mixture_weights: no experts");
    const std::size_t b = expert_outputs[0].shape()[0];
    // u = W_h h + b, shared by every expert's score
    Tensor u = add(matmul(gate.w_h, occasion), gate.b);
    std::vector<Tensor> score_cols;
    score_cols.reserve(expert_outputs.size());
    Tensor w_r_t = transpose(gate.w_r);
    for (const Tensor& r : expert_outputs) {
        Tensor pre = add_rowvec(matmul(r, w_r_t), u);
        Tensor s = matmul(moef::tanh(pre), gate.w); // (batch)
        score_cols.push_back(reshape(s, {b, 1}));
    }
    Tensor scores = score_cols.size() == 1 ? score_cols[0] : concat(score_cols, 1);
    return softmax(scores, 1);
}

Prediction predict(const Tensor& occasion, const std::vector<Tensor>& expert_outputs,
                   const GateParams& gate, const MlpParams& head, bool keep_expert_outputs) {
    Tensor alpha = mixture_weights(occasion, expert_outputs, gate);
    const std::size_t b = expert_outputs[0].shape()[0];
    const std::size_t k = expert_outputs.size();

    Tensor mix;
    for (std::size_t i = 0; i < k; ++i) {
        Tensor column = reshape(slice_cols(alpha, i, i + 1), {b});
        Tensor weighted = mul_colvec(expert_outputs[i], column);
        mix = i == 0 ? weighted : add(mix, weighted);
    }
    Tensor logits = mlp_forward(mix, head); // (batch x 1), ReLU hiddens, linear out
    Tensor y_hat = sigmoid(reshape(logits, {b}));

    Prediction p;
    p.y_hat = y_hat;
    p.alpha = alpha;
    p.occasion = occasion;
    if (keep_expert_outputs) p.expert_outputs = expert_outputs;
    return p;
}

Tensor logloss(const std::vector<double>& labels, const Tensor& y_hat) {
    return bce_loss(y_hat, labels, 1e-7);
}

std::size_t ModelConfig::effective_num_experts() const {
    return variant == ModelVariant::OneExpert ? 1 : num_experts;
}

std::size_t ModelConfig::occasion_width() const {
    if (!uses_fft()) return num_signals * windowing.window_size;
    const std::size_t bins =
        windowing.one_sided ? windowing.fft_points / 2 + 1 : windowing.fft_points;
    return num_signals * bins;
}

Normalization ModelConfig::occasion_normalization() const {
    return uses_fft() ? windowing.normalization : Normalization::Log1p;
}

OelKind ModelConfig::effective_oel_kind() const {
    switch (variant) {
        case ModelVariant::NoFft:
        case ModelVariant::NoLstm: return OelKind::MlpPool;
        case ModelVariant::TransformerEncoder: return OelKind::TransformerEncoder;
        case ModelVariant::Full:
        case ModelVariant::OneExpert: return encoder.kind;
    }
    return OelKind::Lstm;
}

MoefModel::MoefModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg_.num_experts == 0) throw ConfigError("model needs at least one expert");
    cfg_.windowing.validate();
    if (cfg_.effective_oel_kind() == OelKind::MlpPool && cfg_.variant != ModelVariant::NoFft &&
        cfg_.variant != ModelVariant::NoLstm) {
        throw ConfigError("mlp_pool encoder is reserved for the no_fft/no_lstm ablations");
    }

    Rng rng(splitmix64(seed ^ 0x6d6f6566ULL));
    tables_ = EmbeddingTables::init(rng, cfg_.schema);

    EncoderConfig enc = cfg_.encoder;
    enc.kind = cfg_.effective_oel_kind();
    oel_ = OelParams::init(rng, enc, cfg_.occasion_width());

    const std::size_t k = cfg_.effective_num_experts();
    experts_.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        experts_.push_back(ExpertParams::init(rng, cfg_.schema, cfg_.expert_sizes));
    }
    const std::size_t expert_width = experts_[0].output_width;
    if (cfg_.head_sizes.empty() || cfg_.head_sizes.back() != 1) {
        throw ConfigError("prediction head must end in a single unit");
    }
    gate_ = GateParams::init(rng, cfg_.gate_hidden, enc.hidden_dim, expert_width);
    head_ = MlpParams::init(rng, expert_width, cfg_.head_sizes);

    tables_.collect(params_);
    oel_.collect(params_);
    for (std::size_t i = 0; i < k; ++i) {
        experts_[i].collect("expert" + std::to_string(i), params_);
    }
    gate_.collect(params_);
    head_.collect("head", params_);
}

SpectrumSequence MoefModel::occasion_input(const OccasionSignalSeries& series,
                                           const SignalStats& stats) const {
    WindowingConfig wc = cfg_.windowing;
    wc.normalization = cfg_.occasion_normalization();
    if (cfg_.uses_fft()) return build_spectrum_sequence(series, wc, stats);
    return build_window_sequence(series, wc, stats);
}

Prediction MoefModel::forward(const SpectrumSequence& occasion_rows,
                              const std::vector<SampleRecord>& batch,
                              bool keep_expert_outputs) {
    if (batch.empty()) throw ContractError("forward: empty batch");
    Tensor h = oel_forward(occasion_rows, oel_);
    EmbeddedBatch embedded = embed(batch, cfg_.schema, tables_);
    std::vector<Tensor> outputs;
    outputs.reserve(experts_.size());
    for (const ExpertParams& e : experts_) {
        outputs.push_back(expert_forward(embedded, e));
    }
    return predict(h, outputs, gate_, head_, keep_expert_outputs);
}

Prediction MoefModel::forward(const OccasionSignalSeries& series, const SignalStats& stats,
                              const std::vector<SampleRecord>& batch,
                              bool keep_expert_outputs) {
    for (const SampleRecord& r : batch) {
        if (r.timestamp > series.end_timestamp) {
            throw DataError("no signal snapshot covers sample at timestamp " +
                            std::to_string(r.timestamp) + " (series ends at " +
                            std::to_string(series.end_timestamp) + ")");
        }
    }
    SignalStats use = stats;
    if (use.mean.empty()) use = SignalStats::compute(series);
    return forward(occasion_input(series, use), batch, keep_expert_outputs);
}

} // namespace moef
