#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "moef/errors.hpp"
#include "moef/mixture.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>

using namespace moef;

namespace {

std::vector<Tensor> random_expert_outputs(Rng& rng, std::size_t k, std::size_t b,
                                          std::size_t width) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back(Tensor::from_values({b, width}, oracle::random_vector(rng, b * width)));
    }
    return out;
}

} // namespace

TEST_CASE("mixture weights: singleton, symmetry, normalization") {
    Rng rng(3);
    const std::size_t d_h = 6, width = 12, b = 4;
    auto gate = GateParams::init(rng, 4, d_h, width);
    Tensor h = Tensor::from_values({d_h}, oracle::random_vector(rng, d_h));

    // K=1 -> alpha exactly 1
    auto one = random_expert_outputs(rng, 1, b, width);
    Tensor a1 = mixture_weights(h, one, gate);
    for (std::size_t i = 0; i < b; ++i) CHECK(a1.at(i) == 1.0);

    // identical experts -> exactly symmetric weights
    auto two = random_expert_outputs(rng, 1, b, width);
    Tensor a2 = mixture_weights(h, {two[0], two[0]}, gate);
    for (std::size_t i = 0; i < b; ++i) {
        CHECK(a2.at(i * 2) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(a2.at(i * 2 + 1) == doctest::Approx(0.5).epsilon(1e-15));
    }

    // random experts: positive rows summing to one
    auto three = random_expert_outputs(rng, 3, b, width);
    Tensor a3 = mixture_weights(h, three, gate);
    for (std::size_t i = 0; i < b; ++i) {
        double total = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(a3.at(i * 3 + k) > 0.0);
            total += a3.at(i * 3 + k);
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
    }

    CHECK_THROWS_AS(mixture_weights(h, {}, gate), ConfigError);
}

TEST_CASE("forced one-hot gate routes to a single expert") {
    Rng rng(5);
    const std::size_t d_h = 4, width = 6, b = 3;
    auto gate = GateParams::init(rng, 2, d_h, width);
    // silence the h-channel, drive scores from the first output coordinate
    std::fill(gate.w_h.data(), gate.w_h.data() + gate.w_h.size(), 0.0);
    std::fill(gate.b.data(), gate.b.data() + gate.b.size(), 0.0);
    std::fill(gate.w_r.data(), gate.w_r.data() + gate.w_r.size(), 0.0);
    gate.w_r.data()[0] = 5.0; // hidden unit 0 reads r[0]
    gate.w.data()[0] = 40.0;
    gate.w.data()[1] = 0.0;

    Tensor h = Tensor::zeros({d_h});
    Tensor r1 = Tensor::from_values({b, width},
                                    std::vector<double>(b * width, 0.0));
    Tensor r2 = r1;
    std::vector<double> v1(b * width, 0.0), v2(b * width, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        v1[i * width] = 1.0;  // tanh(5) ~ 1 -> score ~ +40
        v2[i * width] = -1.0; // score ~ -40
        for (std::size_t j = 1; j < width; ++j) {
            v1[i * width + j] = oracle::random_vector(rng, 1)[0];
            v2[i * width + j] = oracle::random_vector(rng, 1)[0];
        }
    }
    r1 = Tensor::from_values({b, width}, v1);
    r2 = Tensor::from_values({b, width}, v2);

    auto head = MlpParams::init(rng, width, {6, 1});
    Prediction p = predict(h, {r1, r2}, gate, head, false);
    // alpha ~ [1, 0]: prediction equals the head applied to r1 alone
    Tensor direct = sigmoid(reshape(mlp_forward(r1, head), {b}));
    for (std::size_t i = 0; i < b; ++i) {
        CHECK(p.alpha.at(i * 2) > 1.0 - 1e-12);
        CHECK(std::abs(p.y_hat.at(i) - direct.at(i)) < 1e-9);
        CHECK(p.y_hat.at(i) > 0.0);
        CHECK(p.y_hat.at(i) < 1.0);
    }
}

TEST_CASE("logloss spot values") {
    Tensor half = Tensor::from_values({3}, {0.5, 0.5, 0.5});
    CHECK(logloss({1, 0, 1}, half).scalar_value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Tensor near = Tensor::from_values({1}, {1.0 - 1e-7});
    CHECK(logloss({1}, near).scalar_value() == doctest::Approx(1e-7).epsilon(1e-2));

    Tensor two = Tensor::from_values({2}, {0.9, 0.1});
    CHECK(logloss({1, 0}, two).scalar_value() == doctest::Approx(0.105361).epsilon(1e-5));

    CHECK_THROWS_AS(logloss({}, Tensor::from_values({1}, {0.5})), ContractError);
}

TEST_CASE("predict gradients match finite differences") {
    Rng rng(7);
    const std::size_t d_h = 4, width = 6, b = 3;
    auto gate = GateParams::init(rng, 3, d_h, width);
    auto head = MlpParams::init(rng, width, {5, 1});
    Tensor h = Tensor::param({d_h}, oracle::random_vector(rng, d_h));
    std::vector<Tensor> experts;
    for (int i = 0; i < 2; ++i) {
        experts.push_back(Tensor::param({b, width}, oracle::random_vector(rng, b * width)));
    }
    const std::vector<double> labels = {1.0, 0.0, 1.0};

    auto loss_value = [&]() {
        Prediction p = predict(h, experts, gate, head, false);
        return logloss(labels, p.y_hat).scalar_value();
    };
    Tape tape;
    {
        TapeGuard guard(tape);
        Prediction p = predict(h, experts, gate, head, false);
        tape.backward(logloss(labels, p.y_hat));
    }
    std::vector<NamedParam> all;
    gate.collect(all);
    head.collect("head", all);
    all.push_back({"in", "in.h", h, false});
    all.push_back({"in", "in.r0", experts[0], false});
    all.push_back({"in", "in.r1", experts[1], false});
    for (auto& np : all) {
        REQUIRE_MESSAGE(np.tensor.has_grad(), np.name);
        CHECK_MESSAGE(oracle::max_grad_rel_error(np.tensor, np.tensor.grad(), loss_value) < 1e-4,
                      np.name);
    }
}

TEST_CASE("model forward: alpha width, one_expert fixed point, bounded outputs") {
    Rng rng(11);
    auto series = fixtures::tiny_series(rng);
    auto stats = SignalStats::compute(series);
    auto batch = fixtures::tiny_batch(rng, 5);

    MoefModel full(fixtures::tiny_config(), 42);
    auto p = full.forward(series, stats, batch);
    CHECK(p.alpha.shape()[0] == 5);
    CHECK(p.alpha.shape()[1] == 2);
    CHECK(p.y_hat.shape()[0] == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(p.y_hat.at(i) > 0.0);
        CHECK(p.y_hat.at(i) < 1.0);
        CHECK(std::abs(p.alpha.at(i * 2) + p.alpha.at(i * 2 + 1) - 1.0) < 1e-6);
    }

    MoefModel one(fixtures::tiny_config(ModelVariant::OneExpert), 42);
    auto q = one.forward(series, stats, batch);
    CHECK(q.alpha.shape()[1] == 1);
    for (std::size_t i = 0; i < 5; ++i) CHECK(q.alpha.at(i) == 1.0);
}

TEST_CASE("default config has two experts and the paper-sized head") {
    ModelConfig def;
    CHECK(def.num_experts == 2);
    CHECK(def.head_sizes == std::vector<std::size_t>{144, 64, 1});
    CHECK(def.expert_sizes.main_net == std::vector<std::size_t>{480, 256, 128});
    CHECK(def.expert_sizes.bias_net == std::vector<std::size_t>{96, 32, 16});
    CHECK(def.encoder.hidden_dim == 96);
    CHECK(def.windowing.fft_points == 32);
}

TEST_CASE("missing snapshot raises a data error naming the timestamp") {
    Rng rng(13);
    auto series = fixtures::tiny_series(rng);
    auto stats = SignalStats::compute(series);
    auto batch = fixtures::tiny_batch(rng, 2, series.end_timestamp + 3600);
    MoefModel model(fixtures::tiny_config(), 42);
    try {
        model.forward(series, stats, batch);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(std::to_string(batch[0].timestamp)) !=
              std::string::npos);
    }
}

TEST_CASE("swapping the signal series changes alpha but not expert outputs") {
    Rng rng(17);
    auto series_a = fixtures::tiny_series(rng);
    auto series_b = fixtures::tiny_series(rng); // different random content
    auto stats = SignalStats::compute(series_a);
    auto batch = fixtures::tiny_batch(rng, 4);

    MoefModel model(fixtures::tiny_config(), 7);
    auto pa = model.forward(series_a, stats, batch, true);
    auto pb = model.forward(series_b, stats, batch, true);

    REQUIRE(pa.expert_outputs.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t i = 0; i < pa.expert_outputs[k].size(); ++i) {
            CHECK(pa.expert_outputs[k].at(i) == pb.expert_outputs[k].at(i)); // bitwise
        }
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < pa.alpha.size(); ++i) {
        delta += std::abs(pa.alpha.at(i) - pb.alpha.at(i));
    }
    CHECK(delta > 1e-12);
}

TEST_CASE("loss gradients reach the LSTM parameters") {
    Rng rng(19);
    auto series = fixtures::tiny_series(rng);
    auto stats = SignalStats::compute(series);
    auto batch = fixtures::tiny_batch(rng, 4);
    MoefModel model(fixtures::tiny_config(), 21);

    std::vector<double> labels;
    for (const auto& r : batch) labels.push_back(r.label);

    Tape tape;
    {
        TapeGuard guard(tape);
        auto p = model.forward(series, stats, batch);
        tape.backward(logloss(labels, p.y_hat));
    }
    double lstm_grad_norm = 0.0;
    for (auto& np : model.parameters()) {
        if (np.group == "oel.lstm") {
            REQUIRE(np.tensor.has_grad());
            for (double g : np.tensor.grad()) lstm_grad_norm += g * g;
        }
    }
    CHECK(lstm_grad_norm > 0.0);
}

TEST_CASE("variant wiring: occasion input width and encoder kind") {
    auto cfg = fixtures::tiny_config(ModelVariant::NoFft);
    CHECK(cfg.occasion_width() == 2 * 8); // M * N_w
    CHECK(cfg.effective_oel_kind() == OelKind::MlpPool);
    CHECK(cfg.occasion_normalization() == Normalization::Log1p);

    auto full = fixtures::tiny_config();
    CHECK(full.occasion_width() == 2 * 8); // M * N_f = 2 * 8
    CHECK(full.effective_oel_kind() == OelKind::Lstm);
    CHECK(full.occasion_normalization() == Normalization::Zscore);

    auto te = fixtures::tiny_config(ModelVariant::TransformerEncoder);
    CHECK(te.effective_oel_kind() == OelKind::TransformerEncoder);

    auto nl = fixtures::tiny_config(ModelVariant::NoLstm);
    CHECK(nl.effective_oel_kind() == OelKind::MlpPool);

    Rng rng(23);
    auto series = fixtures::tiny_series(rng);
    auto stats = SignalStats::compute(series);
    auto batch = fixtures::tiny_batch(rng, 3);
    for (ModelVariant v : {ModelVariant::NoFft, ModelVariant::NoLstm,
                           ModelVariant::TransformerEncoder}) {
        MoefModel model(fixtures::tiny_config(v), 5);
        auto p = model.forward(series, stats, batch);
        CHECK(p.y_hat.all_finite());
    }
}
