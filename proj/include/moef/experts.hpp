#pragma once

#include "moef/attention.hpp"
#include "moef/data.hpp"
#include "moef/params.hpp"
#include "moef/rng.hpp"
#include "moef/tensor.hpp"

#include <string>
#include <vector>

namespace moef {

// Shared embedding layer: one table per schema field. The behavior
// sequence reuses the item-side tables.
struct EmbeddingTables {
    std::vector<Tensor> user;    // aligned with schema.user_features
    std::vector<Tensor> item;    // aligned with schema.item_features
    std::vector<Tensor> context; // aligned with schema.context_features

    static EmbeddingTables init(Rng& rng, const FeatureSchema& schema);
    void collect(std::vector<NamedParam>& out);
};

// Embedded mini-batch. Group embeddings are dense (batch x width); the
// behavior sequence is kept ragged - positions beyond a record's actual
// history do not exist, which realizes "masked positions are zero" exactly.
struct EmbeddedBatch {
    std::size_t batch_size = 0;
    Tensor user;    // batch x user_width
    Tensor item;    // batch x item_width
    Tensor context; // batch x context_width
    std::vector<Tensor> seq;             // per record: (len_i x seq_width); undefined when empty
    std::vector<std::vector<bool>> mask; // per record: len_i entries (true = valid)

    bool seq_empty(std::size_t i) const { return !seq[i].defined(); }
};

EmbeddedBatch embed(const std::vector<SampleRecord>& batch, const FeatureSchema& schema,
                    const EmbeddingTables& tables);

// Simple ReLU-hidden MLP; the last layer stays linear.
struct MlpParams {
    std::vector<Tensor> weights; // layer l: (in_l x out_l)
    std::vector<Tensor> biases;

    static MlpParams init(Rng& rng, std::size_t input, const std::vector<std::size_t>& sizes);
    void collect(const std::string& group, std::vector<NamedParam>& out);
};

// x: (batch x in) -> (batch x out). ReLU after every layer except the last.
Tensor mlp_forward(const Tensor& x, const MlpParams& p);

struct ExpertSizes {
    std::size_t attn_heads = 8;
    std::size_t attn_hidden = 128;
    std::size_t pooled_score_dim = 64;
    std::size_t pooled_value_dim = 160;
    std::vector<std::size_t> main_net = {480, 256, 128};
    std::vector<std::size_t> bias_net = {96, 32, 16};
};

// One expert: behavior self-attention, user/target pooled attention,
// MainNet over the pooled and embedded features, BiasNet over user+context.
struct ExpertParams {
    SelfAttentionParams self_attn;
    PooledAttentionParams user_attn;
    PooledAttentionParams target_attn;
    MlpParams main_net;
    MlpParams bias_net;
    std::size_t output_width = 0; // main output + bias output

    static ExpertParams init(Rng& rng, const FeatureSchema& schema, const ExpertSizes& sizes);
    void collect(const std::string& group, std::vector<NamedParam>& out);
};

// Returns r: (batch x output_width), the MainNet/BiasNet concatenation.
Tensor expert_forward(const EmbeddedBatch& embedded, const ExpertParams& params);

} // namespace moef
