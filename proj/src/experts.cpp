#include "moef/experts.hpp"

#include "moef/errors.hpp"

namespace moef {

EmbeddingTables EmbeddingTables::init(Rng& rng, const FeatureSchema& schema) {
    EmbeddingTables t;
    auto make_table = [&rng](const FeatureField& f) {
        return Tensor::param({f.buckets, f.width},
                             glorot_uniform(rng, f.buckets, f.width, f.buckets * f.width));
    };
    for (const auto& f : schema.user_features) t.user.push_back(make_table(f));
    for (const auto& f : schema.item_features) t.item.push_back(make_table(f));
    for (const auto& f : schema.context_features) t.context.push_back(make_table(f));
    return t;
}

void EmbeddingTables::collect(std::vector<NamedParam>& out) {
    for (std::size_t i = 0; i < user.size(); ++i) {
        out.push_back({"embeddings", "embeddings.user." + std::to_string(i), user[i], true});
    }
    for (std::size_t i = 0; i < item.size(); ++i) {
        out.push_back({"embeddings", "embeddings.item." + std::to_string(i), item[i], true});
    }
    for (std::size_t i = 0; i < context.size(); ++i) {
        out.push_back({"embeddings", "embeddings.context." + std::to_string(i), context[i], true});
    }
}

EmbeddedBatch embed(const std::vector<SampleRecord>& batch, const FeatureSchema& schema,
                    const EmbeddingTables& tables) {
    if (batch.empty()) throw ContractError("embed: empty batch");
    if (tables.user.size() != schema.user_features.size() ||
        tables.item.size() != schema.item_features.size() ||
        tables.context.size() != schema.context_features.size()) {
        throw ConfigError("embedding tables do not match the feature schema");
    }
    const std::size_t b = batch.size();
    const std::size_t n_profile = schema.user_features.size() - 1;
    const std::size_t n_context = schema.context_features.size();

    EmbeddedBatch out;
    out.batch_size = b;

    // user group: user_id then profile fields
    std::vector<Tensor> user_parts;
    {
        std::vector<std::size_t> ids(b);
        for (std::size_t i = 0; i < b; ++i)
            ids[i] = hash_bucket(batch[i].user_id, schema.user_features[0]);
        user_parts.push_back(embedding_lookup(tables.user[0], ids));
        for (std::size_t f = 0; f < n_profile; ++f) {
            for (std::size_t i = 0; i < b; ++i) {
                if (batch[i].user_profile.size() != n_profile) {
                    throw DataError("record has " + std::to_string(batch[i].user_profile.size()) +
                                    " profile fields, schema expects " +
                                    std::to_string(n_profile));
                }
                ids[i] = hash_bucket(batch[i].user_profile[f], schema.user_features[f + 1]);
            }
            user_parts.push_back(embedding_lookup(tables.user[f + 1], ids));
        }
    }
    out.user = user_parts.size() == 1 ? user_parts[0] : concat(user_parts, 1);

    // item group: item_id, category_id, brand_id (plus any extra item fields = missing)
    {
        std::vector<Tensor> parts;
        std::vector<std::size_t> ids(b);
        for (std::size_t f = 0; f < schema.item_features.size(); ++f) {
            for (std::size_t i = 0; i < b; ++i) {
                int64_t v = -1;
                if (f == 0) v = batch[i].item_id;
                else if (f == 1) v = batch[i].category_id;
                else if (f == 2) v = batch[i].brand_id;
                ids[i] = hash_bucket(v, schema.item_features[f]);
            }
            parts.push_back(embedding_lookup(tables.item[f], ids));
        }
        out.item = parts.size() == 1 ? parts[0] : concat(parts, 1);
    }

    // context group
    {
        std::vector<Tensor> parts;
        std::vector<std::size_t> ids(b);
        for (std::size_t f = 0; f < n_context; ++f) {
            for (std::size_t i = 0; i < b; ++i) {
                if (batch[i].context.size() != n_context) {
                    throw DataError("record has " + std::to_string(batch[i].context.size()) +
                                    " context fields, schema expects " +
                                    std::to_string(n_context));
                }
                ids[i] = hash_bucket(batch[i].context[f], schema.context_features[f]);
            }
            parts.push_back(embedding_lookup(tables.context[f], ids));
        }
        out.context = parts.size() == 1 ? parts[0] : concat(parts, 1);
    }

    // behavior sequences share the item-side tables
    out.seq.resize(b);
    out.mask.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        const auto& hist = batch[i].behavior;
        const std::size_t len = std::min<std::size_t>(hist.size(), schema.max_seq_len);
        if (len == 0) continue; // stays undefined: fully masked, all zeros
        std::vector<std::size_t> item_ids(len), cat_ids(len), brand_ids(len);
        for (std::size_t p = 0; p < len; ++p) {
            item_ids[p] = hash_bucket(hist[p].item_id, schema.item_features[0]);
            cat_ids[p] = hash_bucket(hist[p].category_id, schema.item_features[1]);
            brand_ids[p] = hash_bucket(hist[p].brand_id, schema.item_features[2]);
        }
        std::vector<Tensor> parts;
        parts.push_back(embedding_lookup(tables.item[0], item_ids));
        parts.push_back(embedding_lookup(tables.item[1], cat_ids));
        parts.push_back(embedding_lookup(tables.item[2], brand_ids));
        out.seq[i] = concat(parts, 1);
        out.mask[i].assign(len, true);
    }
    return out;
}

MlpParams MlpParams::init(Rng& rng, std::size_t input, const std::vector<std::size_t>& sizes) {
    if (sizes.empty()) throw ConfigError("MLP needs at least one layer size");
    MlpParams p;
    std::size_t in = input;
    for (std::size_t out : sizes) {
        p.weights.push_back(glorot_matrix(rng, in, out));
        p.biases.push_back(zero_bias(out));
        in = out;
    }
    return p;
}

void MlpParams::collect(const std::string& group, std::vector<NamedParam>& out) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back({group, group + ".w" + std::to_string(l), weights[l], false});
        out.push_back({group, group + ".b" + std::to_string(l), biases[l], false});
    }
}

Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
    Tensor h = x;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        h = add_rowvec(matmul(h, p.weights[l]), p.biases[l]);
        if (l + 1 < p.weights.size()) h = relu(h);
    }
    return h;
}

ExpertParams ExpertParams::init(Rng& rng, const FeatureSchema& schema, const ExpertSizes& sizes) {
    ExpertParams p;
    const std::size_t seq_w = schema.sequence_width();
    p.self_attn = SelfAttentionParams::init(rng, seq_w, sizes.attn_hidden, sizes.attn_heads);
    p.user_attn = PooledAttentionParams::init(rng, schema.user_width(), sizes.attn_hidden,
                                              sizes.pooled_score_dim, sizes.pooled_value_dim);
    p.target_attn = PooledAttentionParams::init(rng, schema.item_width(), sizes.attn_hidden,
                                                sizes.pooled_score_dim, sizes.pooled_value_dim);
    const std::size_t main_in = 2 * sizes.pooled_value_dim + schema.item_width() +
                                schema.user_width() + schema.context_width();
    p.main_net = MlpParams::init(rng, main_in, sizes.main_net);
    const std::size_t bias_in = schema.user_width() + schema.context_width();
    p.bias_net = MlpParams::init(rng, bias_in, sizes.bias_net);
    p.output_width = sizes.main_net.back() + sizes.bias_net.back();
    return p;
}

void ExpertParams::collect(const std::string& group, std::vector<NamedParam>& out) {
    self_attn.collect(group + ".self_attn", out);
    user_attn.collect(group + ".user_attn", out);
    target_attn.collect(group + ".target_attn", out);
    main_net.collect(group + ".main_net", out);
    bias_net.collect(group + ".bias_net", out);
}

Tensor expert_forward(const EmbeddedBatch& embedded, const ExpertParams& params) {
    const std::size_t b = embedded.batch_size;
    const std::size_t value_dim = params.user_attn.wv.shape()[1];

    std::vector<Tensor> a_user_rows(b), a_item_rows(b);
    for (std::size_t i = 0; i < b; ++i) {
        if (embedded.seq_empty(i)) {
            a_user_rows[i] = Tensor::zeros({1, value_dim});
            a_item_rows[i] = Tensor::zeros({1, value_dim});
            continue;
        }
        Tensor attended =
            multihead_self_attention(embedded.seq[i], embedded.mask[i], params.self_attn);
        Tensor user_q = slice_rows(embedded.user, i, i + 1);
        Tensor item_q = slice_rows(embedded.item, i, i + 1);
        a_user_rows[i] = pooled_attention(user_q, attended, embedded.mask[i], params.user_attn);
        a_item_rows[i] = pooled_attention(item_q, attended, embedded.mask[i], params.target_attn);
    }
    Tensor a_user = concat(a_user_rows, 0); // b x value_dim
    Tensor a_item = concat(a_item_rows, 0);

    Tensor main_in =
        concat({a_user, a_item, embedded.item, embedded.user, embedded.context}, 1);
    Tensor main_out = mlp_forward(main_in, params.main_net);
    Tensor bias_in = concat({embedded.user, embedded.context}, 1);
    Tensor bias_out = mlp_forward(bias_in, params.bias_net);
    return concat({main_out, bias_out}, 1);
}

} // namespace moef
