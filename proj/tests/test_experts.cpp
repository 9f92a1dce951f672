#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "moef/errors.hpp"
#include "moef/experts.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace moef;

namespace {

Tensor random_seq(Rng& rng, std::size_t m, std::size_t w) {
    return Tensor::from_values({m, w}, oracle::random_vector(rng, m * w, -1.5, 1.5));
}

} // namespace

TEST_CASE("embedding is deterministic and respects widths") {
    Rng rng(3);
    auto schema = fixtures::tiny_schema();
    Rng t1(42), t2(42);
    auto tables_a = EmbeddingTables::init(t1, schema);
    auto tables_b = EmbeddingTables::init(t2, schema);
    auto batch = fixtures::tiny_batch(rng, 5);

    auto ea = embed(batch, schema, tables_a);
    auto eb = embed(batch, schema, tables_b);
    REQUIRE(ea.user.size() == eb.user.size());
    for (std::size_t i = 0; i < ea.user.size(); ++i) CHECK(ea.user.at(i) == eb.user.at(i));
    for (std::size_t i = 0; i < ea.item.size(); ++i) CHECK(ea.item.at(i) == eb.item.at(i));

    CHECK(ea.user.shape()[1] == schema.user_width());
    CHECK(ea.item.shape()[1] == schema.item_width());
    CHECK(ea.context.shape()[1] == schema.context_width());

    // default schema carries the 32-wide item/category/brand embeddings
    auto def = FeatureSchema::default_schema();
    CHECK(def.item_features[0].width == 32);
    CHECK(def.item_features[1].width == 32);
    CHECK(def.item_features[2].width == 32);
    CHECK(def.user_features[0].width == 8);
    CHECK(def.item_width() == 96);
}

TEST_CASE("empty behavior sequence stays fully masked") {
    Rng rng(5);
    auto schema = fixtures::tiny_schema();
    auto tables = EmbeddingTables::init(rng, schema);
    auto batch = fixtures::tiny_batch(rng, 3);
    batch[1].behavior.clear();
    auto e = embed(batch, schema, tables);
    CHECK(e.seq_empty(1));
    CHECK(e.mask[1].empty());
}

TEST_CASE("missing values map to the reserved bucket 0") {
    FeatureField f{"item_id", 64, 8};
    CHECK(hash_bucket(-1, f) == 0);
    for (int64_t v = 0; v < 200; ++v) {
        const std::size_t b = hash_bucket(v, f);
        CHECK(b >= 1);
        CHECK(b < 64);
    }
    // stable across calls
    CHECK(hash_bucket(77, f) == hash_bucket(77, f));
}

TEST_CASE("self-attention over a single unmasked position is its projected value") {
    Rng rng(7);
    const std::size_t w = 6, hidden = 8;
    auto p = SelfAttentionParams::init(rng, w, hidden, 2);
    Tensor seq = random_seq(rng, 4, w);
    std::vector<bool> mask = {false, false, true, false};
    Tensor out = multihead_self_attention(seq, mask, p);

    // expected: value projection of position 2, then the output projection
    std::vector<double> v(hidden), y(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
        double acc = p.bv.at(j);
        for (std::size_t l = 0; l < w; ++l) acc += seq.at(2 * w + l) * p.wv.at(l * hidden + j);
        v[j] = acc;
    }
    for (std::size_t j = 0; j < hidden; ++j) {
        double acc = p.bo.at(j);
        for (std::size_t l = 0; l < hidden; ++l) acc += v[l] * p.wo.at(l * hidden + j);
        y[j] = acc;
    }
    for (std::size_t j = 0; j < hidden; ++j) {
        CHECK(out.at(2 * hidden + j) == doctest::Approx(y[j]).epsilon(1e-12));
    }
    // masked queries produce zero rows
    for (std::size_t i : {0u, 1u, 3u}) {
        for (std::size_t j = 0; j < hidden; ++j) CHECK(out.at(i * hidden + j) == 0.0);
    }
}

TEST_CASE("identical keys give uniform attention weights") {
    Rng rng(9);
    const std::size_t w = 5, hidden = 8, m = 6;
    auto p = SelfAttentionParams::init(rng, w, hidden, 2);
    // all rows identical -> all keys identical
    std::vector<double> row = oracle::random_vector(rng, w);
    std::vector<double> vals;
    for (std::size_t i = 0; i < m; ++i) vals.insert(vals.end(), row.begin(), row.end());
    Tensor seq = Tensor::from_values({m, w}, vals);
    std::vector<bool> mask(m, true);
    std::vector<double> probs;
    multihead_self_attention(seq, mask, p, &probs);
    const double uniform = 1.0 / static_cast<double>(m);
    for (double pr : probs) CHECK(std::abs(pr - uniform) < 1e-12);
}

TEST_CASE("masking a position equals deleting it") {
    Rng rng(11);
    const std::size_t w = 6, hidden = 8, m = 5;
    auto p = SelfAttentionParams::init(rng, w, hidden, 2);
    Tensor seq = random_seq(rng, m, w);

    // drop position 2 by mask
    std::vector<bool> mask(m, true);
    mask[2] = false;
    Tensor masked = multihead_self_attention(seq, mask, p);

    // drop position 2 by construction
    std::vector<double> kept;
    for (std::size_t i = 0; i < m; ++i) {
        if (i == 2) continue;
        kept.insert(kept.end(), seq.data() + i * w, seq.data() + (i + 1) * w);
    }
    Tensor deleted = multihead_self_attention(Tensor::from_values({m - 1, w}, kept),
                                              std::vector<bool>(m - 1, true), p);
    std::size_t out_row = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (i == 2) continue;
        for (std::size_t j = 0; j < hidden; ++j) {
            CHECK(std::abs(masked.at(i * hidden + j) - deleted.at(out_row * hidden + j)) < 1e-9);
        }
        ++out_row;
    }
}

TEST_CASE("all-masked self-attention returns zeros without error") {
    Rng rng(13);
    auto p = SelfAttentionParams::init(rng, 4, 8, 2);
    Tensor seq = random_seq(rng, 3, 4);
    Tensor out = multihead_self_attention(seq, std::vector<bool>(3, false), p);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == 0.0);
}

TEST_CASE("self-attention gradients match finite differences, including masks") {
    Rng rng(15);
    const std::size_t w = 5, hidden = 8, m = 4;
    auto p = SelfAttentionParams::init(rng, w, hidden, 2);
    Tensor seq = Tensor::param({m, w}, oracle::random_vector(rng, m * w, -1.0, 1.0));
    std::vector<bool> mask = {true, false, true, true};
    const std::vector<double> wsum = oracle::random_vector(rng, m * hidden);

    auto loss_value = [&]() {
        Tensor y = multihead_self_attention(seq, mask, p);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += wsum[i] * y.at(i);
        return acc;
    };
    Tape tape;
    {
        TapeGuard guard(tape);
        Tensor y = multihead_self_attention(seq, mask, p);
        tape.backward(sum(mul(y, Tensor::from_values({m, hidden}, wsum))));
    }
    std::vector<NamedParam> all;
    p.collect("attn", all);
    all.push_back({"attn", "attn.seq", seq, false});
    for (auto& np : all) {
        REQUIRE_MESSAGE(np.tensor.has_grad(), np.name);
        CHECK_MESSAGE(oracle::max_grad_rel_error(np.tensor, np.tensor.grad(), loss_value) < 1e-4,
                      np.name);
    }
}

TEST_CASE("pooled attention over one position returns its projected value") {
    Rng rng(17);
    const std::size_t qw = 4, sw = 8, sdim = 4, vdim = 6;
    auto p = PooledAttentionParams::init(rng, qw, sw, sdim, vdim);
    Tensor query = Tensor::from_values({qw}, oracle::random_vector(rng, qw));
    Tensor seq = random_seq(rng, 1, sw);
    Tensor out = pooled_attention(query, seq, {true}, p);
    for (std::size_t j = 0; j < vdim; ++j) {
        double acc = p.bv.at(j);
        for (std::size_t l = 0; l < sw; ++l) acc += seq.at(l) * p.wv.at(l * vdim + j);
        CHECK(out.at(j) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("uniform scores average the projected values") {
    Rng rng(19);
    const std::size_t qw = 4, sw = 6, sdim = 4, vdim = 5, m = 7;
    auto p = PooledAttentionParams::init(rng, qw, sw, sdim, vdim);
    // zero key projection -> identical scores for every position
    std::fill(p.wk.data(), p.wk.data() + p.wk.size(), 0.0);
    Tensor query = Tensor::from_values({qw}, oracle::random_vector(rng, qw));
    Tensor seq = random_seq(rng, m, sw);
    std::vector<double> probs;
    Tensor out = pooled_attention(query, seq, std::vector<bool>(m, true), p, &probs);
    for (double pr : probs) CHECK(pr == doctest::Approx(1.0 / m).epsilon(1e-12));

    for (std::size_t j = 0; j < vdim; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double vij = p.bv.at(j);
            for (std::size_t l = 0; l < sw; ++l) vij += seq.at(i * sw + l) * p.wv.at(l * vdim + j);
            acc += vij;
        }
        acc /= static_cast<double>(m);
        CHECK(out.at(j) == doctest::Approx(acc).epsilon(1e-11));
    }
}

TEST_CASE("pooled attention is invariant to permuting unmasked positions") {
    Rng rng(21);
    const std::size_t qw = 4, sw = 6, m = 6;
    auto p = PooledAttentionParams::init(rng, qw, sw, 4, 5);
    Tensor query = Tensor::from_values({qw}, oracle::random_vector(rng, qw));
    Tensor seq = random_seq(rng, m, sw);

    std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
    std::vector<double> permuted(m * sw);
    for (std::size_t i = 0; i < m; ++i) {
        std::copy(seq.data() + perm[i] * sw, seq.data() + (perm[i] + 1) * sw,
                  permuted.begin() + i * sw);
    }
    Tensor a = pooled_attention(query, seq, std::vector<bool>(m, true), p);
    Tensor b = pooled_attention(query, Tensor::from_values({m, sw}, permuted),
                                std::vector<bool>(m, true), p);
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(std::abs(a.at(j) - b.at(j)) < 1e-12);
}

TEST_CASE("pooled attention all-masked yields a zero vector") {
    Rng rng(23);
    auto p = PooledAttentionParams::init(rng, 4, 6, 4, 5);
    Tensor query = Tensor::from_values({4}, oracle::random_vector(rng, 4));
    Tensor seq = random_seq(rng, 3, 6);
    Tensor out = pooled_attention(query, seq, std::vector<bool>(3, false), p);
    for (std::size_t j = 0; j < out.size(); ++j) CHECK(out.at(j) == 0.0);
}

TEST_CASE("pooled attention gradients match finite differences") {
    Rng rng(25);
    const std::size_t qw = 4, sw = 6, m = 5;
    auto p = PooledAttentionParams::init(rng, qw, sw, 4, 5);
    Tensor query = Tensor::param({qw}, oracle::random_vector(rng, qw));
    Tensor seq = Tensor::param({m, sw}, oracle::random_vector(rng, m * sw));
    std::vector<bool> mask = {true, true, false, true, true};
    const std::vector<double> wsum = oracle::random_vector(rng, 5);

    auto loss_value = [&]() {
        Tensor y = pooled_attention(query, seq, mask, p);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += wsum[i] * y.at(i);
        return acc;
    };
    Tape tape;
    {
        TapeGuard guard(tape);
        Tensor y = pooled_attention(query, seq, mask, p);
        tape.backward(sum(mul(y, Tensor::from_values({5}, wsum))));
    }
    std::vector<NamedParam> all;
    p.collect("pool", all);
    all.push_back({"pool", "pool.query", query, false});
    all.push_back({"pool", "pool.seq", seq, false});
    for (auto& np : all) {
        REQUIRE_MESSAGE(np.tensor.has_grad(), np.name);
        CHECK_MESSAGE(oracle::max_grad_rel_error(np.tensor, np.tensor.grad(), loss_value) < 1e-4,
                      np.name);
    }
}

TEST_CASE("expert output width is MainNet + BiasNet") {
    Rng rng(27);
    auto schema = fixtures::tiny_schema();
    auto tables = EmbeddingTables::init(rng, schema);
    auto expert = ExpertParams::init(rng, schema, fixtures::tiny_sizes());
    CHECK(expert.output_width == 12); // 8 + 4 at tiny sizes

    // paper-sized MainNet/BiasNet land on width 144 regardless of schema
    ExpertSizes full;
    auto wide = ExpertParams::init(rng, schema, full);
    CHECK(wide.output_width == 144);

    auto batch = fixtures::tiny_batch(rng, 4);
    auto embedded = embed(batch, schema, tables);
    Tensor r = expert_forward(embedded, expert);
    CHECK(r.shape()[0] == 4);
    CHECK(r.shape()[1] == 12);
    CHECK(r.all_finite());
}

TEST_CASE("experts with different seeds disagree") {
    Rng data_rng(29);
    auto schema = fixtures::tiny_schema();
    auto tables = EmbeddingTables::init(data_rng, schema);
    auto batch = fixtures::tiny_batch(data_rng, 3);
    auto embedded = embed(batch, schema, tables);

    Rng ra(100), rb(200);
    auto e1 = ExpertParams::init(ra, schema, fixtures::tiny_sizes());
    auto e2 = ExpertParams::init(rb, schema, fixtures::tiny_sizes());
    Tensor r1 = expert_forward(embedded, e1);
    Tensor r2 = expert_forward(embedded, e2);
    double delta = 0.0;
    for (std::size_t i = 0; i < r1.size(); ++i) delta += std::abs(r1.at(i) - r2.at(i));
    CHECK(delta > 1e-6);
}

TEST_CASE("BiasNet half ignores item features exactly") {
    Rng rng(31);
    auto schema = fixtures::tiny_schema();
    auto tables = EmbeddingTables::init(rng, schema);
    auto expert = ExpertParams::init(rng, schema, fixtures::tiny_sizes());
    auto batch = fixtures::tiny_batch(rng, 4);

    Tensor r1 = expert_forward(embed(batch, schema, tables), expert);
    auto perturbed = batch;
    for (auto& rec : perturbed) {
        rec.item_id += 1000;
        rec.category_id += 1000;
        rec.brand_id += 1000;
    }
    Tensor r2 = expert_forward(embed(perturbed, schema, tables), expert);

    const std::size_t width = expert.output_width;
    const std::size_t main_w = 8; // tiny main net output
    bool main_changed = false;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            if (j < main_w) {
                main_changed |= r1.at(i * width + j) != r2.at(i * width + j);
            } else {
                CHECK(r1.at(i * width + j) == r2.at(i * width + j)); // bitwise
            }
        }
    }
    CHECK(main_changed);
}

TEST_CASE("expert parameters are disjoint between experts") {
    Rng rng(33);
    auto schema = fixtures::tiny_schema();
    std::vector<NamedParam> all;
    auto e0 = ExpertParams::init(rng, schema, fixtures::tiny_sizes());
    auto e1 = ExpertParams::init(rng, schema, fixtures::tiny_sizes());
    e0.collect("expert0", all);
    e1.collect("expert1", all);
    std::set<std::string> names;
    std::set<const void*> storage;
    for (const auto& np : all) {
        CHECK(names.insert(np.name).second);
        CHECK(storage.insert(np.tensor.data()).second);
    }
}

TEST_CASE("expert gradients flow through the whole stack") {
    Rng rng(35);
    auto schema = fixtures::tiny_schema();
    auto tables = EmbeddingTables::init(rng, schema);
    auto expert = ExpertParams::init(rng, schema, fixtures::tiny_sizes());
    auto batch = fixtures::tiny_batch(rng, 3);
    if (batch[0].behavior.empty()) batch[0].behavior.push_back({7, 2, 5});

    auto loss_value = [&]() {
        Tensor r = expert_forward(embed(batch, schema, tables), expert);
        double acc = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) acc += r.at(i);
        return acc;
    };
    Tape tape;
    {
        TapeGuard guard(tape);
        Tensor r = expert_forward(embed(batch, schema, tables), expert);
        tape.backward(sum(r));
    }
    std::vector<NamedParam> all;
    expert.collect("expert", all);
    for (auto& np : all) {
        REQUIRE_MESSAGE(np.tensor.has_grad(), np.name);
        CHECK_MESSAGE(oracle::max_grad_rel_error(np.tensor, np.tensor.grad(), loss_value) < 1e-3,
                      np.name);
    }
}
