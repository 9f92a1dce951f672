#include "moef/harness.hpp"

#include "moef/errors.hpp"
#include "moef/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace moef {

using nlohmann::json;

namespace {

bool host_is_little_endian() {
    const uint16_t probe = 0x1;
    return *reinterpret_cast<const unsigned char*>(&probe) == 1;
}

struct SnapshotGroup {
    int64_t snapshot_id = 0;
    std::vector<std::size_t> indices;
};

std::vector<SnapshotGroup> group_by_snapshot(const std::vector<SampleRecord>& records) {
    std::vector<SnapshotGroup> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (groups.empty() || groups.back().snapshot_id != records[i].snapshot_id) {
            groups.push_back({records[i].snapshot_id, {}});
        }
        groups.back().indices.push_back(i);
    }
    return groups;
}

// Snapshot slice of the master series for one group, with bounds checking
// that names the offending serving time.
OccasionSignalSeries snapshot_slice(const OccasionSignalSeries& master, int64_t snapshot_id,
                                    std::size_t history_len, int64_t sample_ts) {
    if (snapshot_id < static_cast<int64_t>(history_len) - 1 ||
        snapshot_id >= static_cast<int64_t>(master.num_steps)) {
        throw DataError("no signal snapshot " + std::to_string(snapshot_id) +
                        " for sample at timestamp " + std::to_string(sample_ts) +
                        " (series has " + std::to_string(master.num_steps) + " columns)");
    }
    return master.tail_slice(static_cast<std::size_t>(snapshot_id), history_len);
}

double eval_logloss(const std::vector<int>& labels, const std::vector<double>& scores) {
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(scores[i], 1e-7, 1.0 - 1e-7);
        total += labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return labels.empty() ? 0.0 : -total / static_cast<double>(labels.size());
}

RegimeMetrics slice_metrics(const std::vector<int>& labels, const std::vector<double>& scores,
                            double ceiling) {
    RegimeMetrics m;
    m.count = labels.size();
    m.ceiling = ceiling;
    m.logloss = eval_logloss(labels, scores);
    try {
        m.auc = auc(labels, scores);
    } catch (const ContractError&) {
        m.auc = std::numeric_limits<double>::quiet_NaN();
    }
    return m;
}

json metrics_to_json(const RegimeMetrics& m) {
    json j{{"auc", std::isnan(m.auc) ? json(nullptr) : json(m.auc)},
           {"logloss", m.logloss},
           {"count", m.count}};
    j["ceiling"] = std::isnan(m.ceiling) ? json(nullptr) : json(m.ceiling);
    return j;
}

} // namespace

SignalStats compute_train_stats(const OccasionSignalSeries& master,
                                const std::vector<SampleRecord>& records) {
    int64_t max_ts = master.step_timestamp(0);
    for (const auto& r : records) max_ts = std::max(max_ts, r.timestamp);
    return SignalStats::compute_until(master, max_ts);
}

TrainResult train(MoefModel& model, Adagrad& optimizer,
                  const std::vector<SampleRecord>& records,
                  const OccasionSignalSeries& master, const TrainConfig& cfg) {
    if (records.empty()) throw DataError("training dataset is empty");
    if (master.num_signals != model.config().num_signals) {
        throw DataError("signals file has " + std::to_string(master.num_signals) +
                        " signals, model expects " + std::to_string(model.config().num_signals));
    }
    TrainResult result;
    result.stats = compute_train_stats(master, records);

    const std::size_t history = model.config().signal_history;
    auto groups = group_by_snapshot(records);

    // occasion inputs are fixed transforms: build once per snapshot
    std::map<int64_t, SpectrumSequence> spectrum_cache;
    for (const auto& g : groups) {
        if (spectrum_cache.count(g.snapshot_id)) continue;
        const auto slice = snapshot_slice(master, g.snapshot_id, history,
                                          records[g.indices.front()].timestamp);
        spectrum_cache.emplace(g.snapshot_id, model.occasion_input(slice, result.stats));
    }

    Rng shuffle_rng(splitmix64(cfg.seed ^ 0x747261696eULL));
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (auto& group : groups) {
            std::shuffle(group.indices.begin(), group.indices.end(), shuffle_rng.engine());
            const SpectrumSequence& spectrum = spectrum_cache.at(group.snapshot_id);
            for (std::size_t start = 0; start < group.indices.size();
                 start += cfg.batch_size) {
                const std::size_t end =
                    std::min(group.indices.size(), start + cfg.batch_size);
                std::vector<SampleRecord> batch;
                std::vector<double> labels;
                batch.reserve(end - start);
                for (std::size_t k = start; k < end; ++k) {
                    batch.push_back(records[group.indices[k]]);
                    labels.push_back(static_cast<double>(batch.back().label));
                }

                Tape tape;
                double loss_value = 0.0;
                {
                    TapeGuard guard(tape);
                    Prediction pred = model.forward(spectrum, batch);
                    if (!pred.y_hat.all_finite()) {
                        throw NumericError("non-finite prediction in training step " +
                                           std::to_string(step));
                    }
                    Tensor loss = logloss(labels, pred.y_hat);
                    loss_value = loss.scalar_value();
                    if (!std::isfinite(loss_value)) {
                        throw NumericError("non-finite loss in training step " +
                                           std::to_string(step));
                    }
                    tape.backward(loss);
                }
                optimizer.step(model.parameters());
                result.trace.push_back({epoch, step, batch.size(), loss_value});
                ++step;
            }
        }
    }

    // Epoch means compare like against like; the tail of an epoch covers
    // different regimes than its head, so windowed comparisons would
    // confound learning progress with regime difficulty.
    if (cfg.epochs >= 2) {
        double head = 0.0, tail = 0.0;
        std::size_t head_n = 0, tail_n = 0;
        for (const auto& p : result.trace) {
            if (p.epoch == 0) {
                head += p.loss * static_cast<double>(p.batch_size);
                head_n += p.batch_size;
            }
            if (p.epoch == cfg.epochs - 1) {
                tail += p.loss * static_cast<double>(p.batch_size);
                tail_n += p.batch_size;
            }
        }
        result.initial_loss = head / static_cast<double>(head_n);
        result.final_loss = tail / static_cast<double>(tail_n);
    } else {
        const std::size_t window = std::min<std::size_t>(20, result.trace.size());
        double head = 0.0, tail = 0.0;
        for (std::size_t i = 0; i < window; ++i) {
            head += result.trace[i].loss;
            tail += result.trace[result.trace.size() - 1 - i].loss;
        }
        result.initial_loss = head / static_cast<double>(window);
        result.final_loss = tail / static_cast<double>(window);
    }
    return result;
}

void write_loss_trace(const std::string& path, const std::vector<LossTracePoint>& trace) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write loss trace: " + path);
    out << "epoch,step,batch_size,loss\n";
    out.precision(17);
    for (const auto& p : trace) {
        out << p.epoch << ',' << p.step << ',' << p.batch_size << ',' << p.loss << '\n';
    }
}

std::vector<double> score_dataset(MoefModel& model, const std::vector<SampleRecord>& records,
                                  const OccasionSignalSeries& master, const SignalStats& stats,
                                  std::size_t batch_size) {
    std::vector<double> scores(records.size(), 0.0);
    const std::size_t history = model.config().signal_history;
    auto groups = group_by_snapshot(records);
    std::map<int64_t, SpectrumSequence> spectrum_cache;
    for (const auto& group : groups) {
        if (!spectrum_cache.count(group.snapshot_id)) {
            const auto slice = snapshot_slice(master, group.snapshot_id, history,
                                              records[group.indices.front()].timestamp);
            spectrum_cache.emplace(group.snapshot_id, model.occasion_input(slice, stats));
        }
        const SpectrumSequence& spectrum = spectrum_cache.at(group.snapshot_id);
        for (std::size_t start = 0; start < group.indices.size(); start += batch_size) {
            const std::size_t end = std::min(group.indices.size(), start + batch_size);
            std::vector<SampleRecord> batch;
            for (std::size_t k = start; k < end; ++k) {
                batch.push_back(records[group.indices[k]]);
            }
            Prediction pred = model.forward(spectrum, batch);
            if (!pred.y_hat.all_finite()) {
                throw NumericError("non-finite prediction while scoring");
            }
            for (std::size_t k = start; k < end; ++k) {
                scores[group.indices[k]] = pred.y_hat.at(k - start);
            }
        }
    }
    return scores;
}

EvalReport evaluate_scores(const std::vector<SampleRecord>& records,
                           const std::vector<double>& scores, const RegimeSchedule* schedule,
                           const GenerationReport* ceilings) {
    if (records.size() != scores.size()) {
        throw DimensionError("evaluate: " + std::to_string(records.size()) + " records vs " +
                             std::to_string(scores.size()) + " scores");
    }
    if (records.empty()) throw DataError("evaluation dataset is empty");

    std::vector<int> labels(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) labels[i] = records[i].label;

    EvalReport report;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    report.overall = slice_metrics(labels, scores, ceilings ? ceilings->val_ceiling : nan);

    if (schedule != nullptr) {
        std::vector<int> promo_y, normal_y;
        std::vector<double> promo_s, normal_s;
        std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> kinds;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const RegimeKind k = schedule->kind_at(records[i].timestamp);
            auto& bucket = kinds[to_string(k)];
            bucket.first.push_back(labels[i]);
            bucket.second.push_back(scores[i]);
            if (k == RegimeKind::Normal) {
                normal_y.push_back(labels[i]);
                normal_s.push_back(scores[i]);
            } else {
                promo_y.push_back(labels[i]);
                promo_s.push_back(scores[i]);
            }
        }
        if (!promo_y.empty()) {
            report.promotion = slice_metrics(promo_y, promo_s,
                                             ceilings ? ceilings->val_promo_ceiling : nan);
        }
        if (!normal_y.empty()) {
            report.normal = slice_metrics(normal_y, normal_s,
                                          ceilings ? ceilings->val_normal_ceiling : nan);
        }
        for (auto& [name, bucket] : kinds) {
            report.by_kind[name] = slice_metrics(bucket.first, bucket.second, nan);
        }
    }
    return report;
}

EvalReport evaluate(MoefModel& model, const std::vector<SampleRecord>& records,
                    const OccasionSignalSeries& master, const SignalStats& stats,
                    const RegimeSchedule* schedule, const GenerationReport* ceilings) {
    const auto scores = score_dataset(model, records, master, stats);
    return evaluate_scores(records, scores, schedule, ceilings);
}

json eval_report_to_json(const EvalReport& report) {
    json j{{"overall", metrics_to_json(report.overall)}};
    if (report.promotion) j["promotion"] = metrics_to_json(*report.promotion);
    if (report.normal) j["normal"] = metrics_to_json(*report.normal);
    json kinds = json::object();
    for (const auto& [name, m] : report.by_kind) kinds[name] = metrics_to_json(m);
    j["by_kind"] = kinds;
    return j;
}

// ---- checkpointing -----------------------------------------------------------

namespace {

constexpr char kMagic[9] = "MOEFCKPT";
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint file truncated");
}

} // namespace

void save_checkpoint(const std::string& path, MoefModel& model, const Adagrad& optimizer,
                     const TrainConfig& train_cfg, const SignalStats& stats) {
    if (!host_is_little_endian()) {
        throw NumericError("checkpoint format requires a little-endian host");
    }
    auto& params = model.parameters();
    if (optimizer.accumulators().size() != params.size()) {
        throw ContractError("optimizer state does not match the model parameter list");
    }

    json manifest = json::array();
    for (const auto& p : params) {
        manifest.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    }
    json header{{"format_version", kCheckpointVersion},
                {"model", model_config_to_json(model.config())},
                {"train", train_config_to_json(train_cfg)},
                {"seed", train_cfg.seed},
                {"stats", {{"mean", stats.mean}, {"stddev", stats.stddev}}},
                {"params", manifest}};
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    write_raw(out, kCheckpointVersion);
    const uint64_t header_len = header_str.size();
    write_raw(out, header_len);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& p : params) {
        out.write(reinterpret_cast<const char*>(p.tensor.data()),
                  static_cast<std::streamsize>(p.tensor.size() * sizeof(double)));
    }
    for (const auto& acc : optimizer.accumulators()) {
        out.write(reinterpret_cast<const char*>(acc.data()),
                  static_cast<std::streamsize>(acc.size() * sizeof(double)));
    }
    if (!out) throw DataError("write failed for checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    if (!host_is_little_endian()) {
        throw NumericError("checkpoint format requires a little-endian host");
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
        throw DataError("not a checkpoint file: " + path);
    }
    uint32_t version = 0;
    read_raw(in, version);
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint " + path + " has incompatible version " +
                        std::to_string(version) + " (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    uint64_t header_len = 0;
    read_raw(in, header_len);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw DataError("checkpoint header truncated: " + path);
    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint header: " + std::string(e.what()));
    }

    LoadedCheckpoint out;
    const ModelConfig cfg = model_config_from_json(header.at("model"));
    out.train = train_config_from_json(header.at("train"), header.value("seed", 0ull));
    out.train.seed = header.value("seed", out.train.seed);
    out.stats.mean = header.at("stats").at("mean").get<std::vector<double>>();
    out.stats.stddev = header.at("stats").at("stddev").get<std::vector<double>>();

    out.model = std::make_unique<MoefModel>(cfg, out.train.seed);
    auto& params = out.model->parameters();
    const json& manifest = header.at("params");
    if (manifest.size() != params.size()) {
        throw DataError("checkpoint parameter manifest does not match the model (" +
                        std::to_string(manifest.size()) + " vs " +
                        std::to_string(params.size()) + " tensors)");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (manifest[i].at("name").get<std::string>() != params[i].name ||
            manifest[i].at("shape").get<std::vector<std::size_t>>() !=
                params[i].tensor.shape()) {
            throw DataError("checkpoint tensor " + std::to_string(i) +
                            " is incompatible with the configured model");
        }
    }
    for (auto& p : params) {
        in.read(reinterpret_cast<char*>(p.tensor.data()),
                static_cast<std::streamsize>(p.tensor.size() * sizeof(double)));
        if (!in) throw DataError("checkpoint parameters truncated: " + path);
    }
    out.optimizer = std::make_unique<Adagrad>(out.train.learning_rate,
                                              out.train.adagrad_epsilon);
    out.optimizer->init(params);
    for (auto& acc : out.optimizer->accumulators()) {
        in.read(reinterpret_cast<char*>(acc.data()),
                static_cast<std::streamsize>(acc.size() * sizeof(double)));
        if (!in) throw DataError("checkpoint optimizer state truncated: " + path);
    }
    return out;
}

// ---- inspection exports ---------------------------------------------------

InspectionPaths export_inspection(MoefModel& model, const std::vector<SampleRecord>& records,
                                  const OccasionSignalSeries& master, const SignalStats& stats,
                                  const RegimeSchedule* schedule, const std::string& out_dir) {
    if (records.empty()) throw DataError("inspection dataset is empty");
    InspectionPaths paths;
    paths.alpha_csv = out_dir + "/alpha.csv";
    paths.experts_csv = out_dir + "/experts.csv";

    std::ofstream alpha_out(paths.alpha_csv);
    std::ofstream expert_out(paths.experts_csv);
    if (!alpha_out || !expert_out) {
        throw DataError("cannot write inspection files under " + out_dir);
    }
    alpha_out.precision(17);
    expert_out.precision(17);

    const std::size_t k = model.config().effective_num_experts();
    alpha_out << "timestamp,snapshot_id,regime,label";
    for (std::size_t i = 1; i <= k; ++i) alpha_out << ",alpha_" << i;
    alpha_out << '\n';

    const std::size_t width = model.experts()[0].output_width;
    expert_out << "timestamp,expert";
    for (std::size_t i = 0; i < width; ++i) expert_out << ",r_" << i;
    expert_out << '\n';

    const std::size_t history = model.config().signal_history;
    auto groups = group_by_snapshot(records);
    std::map<int64_t, SpectrumSequence> spectrum_cache;
    for (const auto& group : groups) {
        if (!spectrum_cache.count(group.snapshot_id)) {
            const auto slice = snapshot_slice(master, group.snapshot_id, history,
                                              records[group.indices.front()].timestamp);
            spectrum_cache.emplace(group.snapshot_id, model.occasion_input(slice, stats));
        }
        const SpectrumSequence& spectrum = spectrum_cache.at(group.snapshot_id);
        const std::size_t batch_size = 256;
        for (std::size_t start = 0; start < group.indices.size(); start += batch_size) {
            const std::size_t end = std::min(group.indices.size(), start + batch_size);
            std::vector<SampleRecord> batch;
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(records[group.indices[i]]);
            }
            Prediction pred = model.forward(spectrum, batch, /*keep_expert_outputs=*/true);
            for (std::size_t b = 0; b < batch.size(); ++b) {
                const SampleRecord& r = batch[b];
                const std::string regime =
                    schedule ? to_string(schedule->kind_at(r.timestamp)) : "unknown";
                alpha_out << r.timestamp << ',' << r.snapshot_id << ',' << regime << ','
                          << r.label;
                for (std::size_t i = 0; i < k; ++i) {
                    alpha_out << ',' << pred.alpha.at(b * k + i);
                }
                alpha_out << '\n';
                for (std::size_t i = 0; i < k; ++i) {
                    expert_out << r.timestamp << ',' << i;
                    const Tensor& rk = pred.expert_outputs[i];
                    for (std::size_t c = 0; c < width; ++c) {
                        expert_out << ',' << rk.at(b * width + c);
                    }
                    expert_out << '\n';
                }
            }
        }
    }
    if (!alpha_out || !expert_out) {
        throw DataError("write failed for inspection files under " + out_dir);
    }
    return paths;
}

// ---- gradient check ----------------------------------------------------------

std::vector<SampleRecord> random_batch(Rng& rng, const FeatureSchema& schema, std::size_t count,
                                       int64_t timestamp, int64_t snapshot_id) {
    std::vector<SampleRecord> batch(count);
    const std::size_t n_profile = schema.user_features.size() - 1;
    const std::size_t n_context = schema.context_features.size();
    for (auto& r : batch) {
        r.user_id = static_cast<int64_t>(rng.below(1000));
        r.item_id = static_cast<int64_t>(rng.below(1000));
        r.category_id = static_cast<int64_t>(rng.below(60));
        r.brand_id = static_cast<int64_t>(rng.below(200));
        r.user_profile.resize(n_profile);
        for (auto& v : r.user_profile) v = static_cast<int64_t>(rng.below(16));
        r.context.resize(n_context);
        for (auto& v : r.context) v = static_cast<int64_t>(rng.below(24));
        const std::size_t len = rng.below(std::min<std::size_t>(schema.max_seq_len, 3) + 1);
        for (std::size_t p = 0; p < len; ++p) {
            r.behavior.push_back({static_cast<int64_t>(rng.below(1000)),
                                  static_cast<int64_t>(rng.below(60)),
                                  static_cast<int64_t>(rng.below(200))});
        }
        r.label = rng.uniform() < 0.5 ? 1 : 0;
        r.timestamp = timestamp;
        r.snapshot_id = snapshot_id;
    }
    // keep at least one informative behavior sequence in every batch
    if (!batch.empty() && batch[0].behavior.empty()) {
        batch[0].behavior.push_back({3, 1, 2});
    }
    return batch;
}

OccasionSignalSeries random_series(Rng& rng, std::size_t num_signals, std::size_t num_steps,
                                   int64_t sampling_minutes, int64_t end_timestamp) {
    OccasionSignalSeries s;
    s.num_signals = num_signals;
    s.num_steps = num_steps;
    s.sampling_interval_minutes = sampling_minutes;
    s.end_timestamp = end_timestamp;
    for (std::size_t i = 0; i < num_signals; ++i) {
        s.signal_names.push_back("sig" + std::to_string(i));
    }
    s.values.resize(num_signals * num_steps);
    for (double& v : s.values) v = rng.uniform(5.0, 100.0);
    return s;
}

ModelConfig tiny_gradcheck_config(ModelVariant variant) {
    ModelConfig c;
    c.variant = variant;
    c.num_experts = 2;
    c.schema.user_features = {{"user_id", 13, 2}, {"gender", 7, 2}};
    c.schema.item_features = {{"item_id", 13, 4}, {"category_id", 11, 4}, {"brand_id", 11, 4}};
    c.schema.context_features = {{"hour_of_day", 25, 2}, {"position", 7, 2}};
    c.schema.max_seq_len = 3;
    c.windowing.window_size = 8;
    c.windowing.stride = 4;
    c.windowing.fft_points = 8;
    c.signal_history = 32;
    c.num_signals = 2;
    c.encoder.hidden_dim = 8;
    c.encoder.transformer_heads = 2;
    c.encoder.transformer_layers = 1;
    c.encoder.transformer_ff_mult = 2;
    c.expert_sizes.attn_heads = 2;
    c.expert_sizes.attn_hidden = 8;
    c.expert_sizes.pooled_score_dim = 4;
    c.expert_sizes.pooled_value_dim = 6;
    c.expert_sizes.main_net = {16, 12, 8};
    c.expert_sizes.bias_net = {6, 4, 4};
    c.head_sizes = {12, 6, 1};
    c.gate_hidden = 4;
    return c;
}

std::vector<GradCheckGroup> grad_check(const ModelConfig& cfg, uint64_t seed,
                                       std::size_t batch_size, double step,
                                       const std::vector<std::string>& frozen_groups) {
    Rng rng(splitmix64(seed ^ 0x67726164ULL));
    MoefModel model(cfg, rng.next_u64());

    for (auto& p : model.parameters()) {
        // Jitter every parameter off its initialization: zero-initialized
        // biases otherwise park ReLU pre-activations exactly on the kink,
        // where central differences see half the one-sided slope.
        double* data = p.tensor.data();
        for (std::size_t i = 0; i < p.tensor.size(); ++i) {
            data[i] += rng.uniform(-0.02, 0.02);
        }
        for (const auto& frozen : frozen_groups) {
            if (p.group == frozen) p.tensor.set_requires_grad(false);
        }
    }

    auto series = random_series(rng, cfg.num_signals, cfg.signal_history, 5, 1700000000);
    const SignalStats stats = SignalStats::compute(series);
    const SpectrumSequence spectrum = model.occasion_input(series, stats);
    auto batch = random_batch(rng, cfg.schema, batch_size, series.end_timestamp,
                              static_cast<int64_t>(cfg.signal_history) - 1);
    std::vector<double> labels;
    for (const auto& r : batch) labels.push_back(static_cast<double>(r.label));

    auto loss_value = [&]() {
        Prediction pred = model.forward(spectrum, batch);
        return logloss(labels, pred.y_hat).scalar_value();
    };

    Tape tape;
    {
        TapeGuard guard(tape);
        Prediction pred = model.forward(spectrum, batch);
        tape.backward(logloss(labels, pred.y_hat));
    }

    std::vector<GradCheckGroup> report;
    auto group_entry = [&](const std::string& name) -> GradCheckGroup& {
        for (auto& g : report) {
            if (g.group == name) return g;
        }
        report.push_back({name, 0.0, 0, false});
        return report.back();
    };

    for (auto& p : model.parameters()) {
        GradCheckGroup& g = group_entry(p.group);
        if (!p.tensor.requires_grad()) {
            g.skipped = true;
            continue;
        }
        // unused-this-batch tensors legitimately have no gradient buffer
        std::vector<double> analytic(p.tensor.size(), 0.0);
        if (p.tensor.has_grad()) analytic = p.tensor.grad();
        double* data = p.tensor.data();
        for (std::size_t i = 0; i < p.tensor.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + step;
            const double up = loss_value();
            data[i] = saved - step;
            const double down = loss_value();
            data[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
            g.max_rel_error = std::max(g.max_rel_error, std::abs(fd - analytic[i]) / denom);
            ++g.entries;
        }
    }
    return report;
}

} // namespace moef
