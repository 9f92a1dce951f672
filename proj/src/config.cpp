#include "moef/config.hpp"

#include "moef/errors.hpp"

#include <fstream>
#include <set>

namespace moef {

using nlohmann::json;

// ---- schema ----------------------------------------------------------------

namespace {

json fields_to_json(const std::vector<FeatureField>& fields) {
    json arr = json::array();
    for (const auto& f : fields) {
        arr.push_back({{"name", f.name}, {"buckets", f.buckets}, {"width", f.width}});
    }
    return arr;
}

std::vector<FeatureField> fields_from_json(const json& arr) {
    std::vector<FeatureField> out;
    for (const auto& f : arr) {
        FeatureField field;
        field.name = f.at("name").get<std::string>();
        field.buckets = f.value("buckets", field.buckets);
        field.width = f.value("width", field.width);
        out.push_back(field);
    }
    return out;
}

} // namespace

json schema_to_json(const FeatureSchema& s) {
    return json{{"max_seq_len", s.max_seq_len},
                {"user_features", fields_to_json(s.user_features)},
                {"item_features", fields_to_json(s.item_features)},
                {"context_features", fields_to_json(s.context_features)}};
}

FeatureSchema schema_from_json(const json& j) {
    FeatureSchema s = FeatureSchema::default_schema();
    s.max_seq_len = j.value("max_seq_len", s.max_seq_len);
    if (j.contains("user_features")) s.user_features = fields_from_json(j.at("user_features"));
    if (j.contains("item_features")) s.item_features = fields_from_json(j.at("item_features"));
    if (j.contains("context_features")) {
        s.context_features = fields_from_json(j.at("context_features"));
    }
    if (s.user_features.empty() || s.item_features.size() < 3 || s.context_features.empty()) {
        throw ConfigError(
            "schema needs a user id feature, item/category/brand features and context features");
    }
    return s;
}

// ---- windowing / encoder ----------------------------------------------------

namespace {

json windowing_to_json(const WindowingConfig& w) {
    return json{{"window_size", w.window_size},
                {"stride", w.stride},
                {"fft_points", w.fft_points},
                {"normalization", to_string(w.normalization)},
                {"one_sided", w.one_sided}};
}

WindowingConfig windowing_from_json(const json& j) {
    WindowingConfig w;
    w.window_size = j.value("window_size", w.window_size);
    w.stride = j.value("stride", w.stride);
    w.fft_points = j.value("fft_points", w.fft_points);
    if (j.contains("normalization")) {
        w.normalization = normalization_from_string(j.at("normalization").get<std::string>());
    }
    w.one_sided = j.value("one_sided", w.one_sided);
    w.validate();
    return w;
}

json encoder_to_json(const EncoderConfig& e) {
    return json{{"kind", to_string(e.kind)},
                {"hidden_dim", e.hidden_dim},
                {"transformer_heads", e.transformer_heads},
                {"transformer_layers", e.transformer_layers},
                {"transformer_ff_mult", e.transformer_ff_mult}};
}

EncoderConfig encoder_from_json(const json& j) {
    EncoderConfig e;
    if (j.contains("kind")) e.kind = oel_kind_from_string(j.at("kind").get<std::string>());
    e.hidden_dim = j.value("hidden_dim", e.hidden_dim);
    e.transformer_heads = j.value("transformer_heads", e.transformer_heads);
    e.transformer_layers = j.value("transformer_layers", e.transformer_layers);
    e.transformer_ff_mult = j.value("transformer_ff_mult", e.transformer_ff_mult);
    if (e.hidden_dim == 0) throw ConfigError("encoder.hidden_dim must be positive");
    return e;
}

std::vector<std::size_t> sizes_from_json(const json& j) {
    std::vector<std::size_t> out;
    for (const auto& v : j) out.push_back(v.get<std::size_t>());
    if (out.empty()) throw ConfigError("layer size list cannot be empty");
    return out;
}

} // namespace

// ---- model config -------------------------------------------------------

json model_config_to_json(const ModelConfig& m) {
    return json{{"variant", to_string(m.variant)},
                {"num_experts", m.num_experts},
                {"schema", schema_to_json(m.schema)},
                {"windowing", windowing_to_json(m.windowing)},
                {"signal_history", m.signal_history},
                {"num_signals", m.num_signals},
                {"encoder", encoder_to_json(m.encoder)},
                {"attention_heads", m.expert_sizes.attn_heads},
                {"attention_hidden", m.expert_sizes.attn_hidden},
                {"pooled_score_dim", m.expert_sizes.pooled_score_dim},
                {"pooled_value_dim", m.expert_sizes.pooled_value_dim},
                {"main_net", m.expert_sizes.main_net},
                {"bias_net", m.expert_sizes.bias_net},
                {"head", m.head_sizes},
                {"gate_hidden", m.gate_hidden}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig m;
    if (j.contains("variant")) m.variant = variant_from_string(j.at("variant").get<std::string>());
    m.num_experts = j.value("num_experts", m.num_experts);
    if (j.contains("schema")) m.schema = schema_from_json(j.at("schema"));
    if (j.contains("windowing")) m.windowing = windowing_from_json(j.at("windowing"));
    m.signal_history = j.value("signal_history", m.signal_history);
    m.num_signals = j.value("num_signals", m.num_signals);
    if (j.contains("encoder")) m.encoder = encoder_from_json(j.at("encoder"));
    m.expert_sizes.attn_heads = j.value("attention_heads", m.expert_sizes.attn_heads);
    m.expert_sizes.attn_hidden = j.value("attention_hidden", m.expert_sizes.attn_hidden);
    m.expert_sizes.pooled_score_dim =
        j.value("pooled_score_dim", m.expert_sizes.pooled_score_dim);
    m.expert_sizes.pooled_value_dim =
        j.value("pooled_value_dim", m.expert_sizes.pooled_value_dim);
    if (j.contains("main_net")) m.expert_sizes.main_net = sizes_from_json(j.at("main_net"));
    if (j.contains("bias_net")) m.expert_sizes.bias_net = sizes_from_json(j.at("bias_net"));
    if (j.contains("head")) m.head_sizes = sizes_from_json(j.at("head"));
    m.gate_hidden = j.value("gate_hidden", m.gate_hidden);
    if (m.num_experts == 0) throw ConfigError("model.num_experts must be at least 1");
    return m;
}

// ---- train config -------------------------------------------------------

json train_config_to_json(const TrainConfig& t) {
    return json{{"learning_rate", t.learning_rate},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"adagrad_epsilon", t.adagrad_epsilon}};
}

TrainConfig train_config_from_json(const json& j, uint64_t default_seed) {
    TrainConfig t;
    t.seed = default_seed;
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.epochs = j.value("epochs", t.epochs);
    t.adagrad_epsilon = j.value("adagrad_epsilon", t.adagrad_epsilon);
    if (t.learning_rate < 0.0) throw ConfigError("train.learning_rate must be non-negative");
    if (t.batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
    return t;
}

// ---- run config ----------------------------------------------------------

const std::vector<ConfigKeyDoc>& config_key_reference() {
    static const std::vector<ConfigKeyDoc> keys = {
        {"seed", "master seed; also the default world seed"},
        {"out_dir", "directory for checkpoints, traces, reports and exports"},
        {"dataset_dir", "directory the generator writes and the trainer reads"},
        {"checkpoint", "checkpoint path for eval/inspect (defaults into out_dir)"},
        {"world.seed", "generator seed (defaults to the master seed)"},
        {"world.num_users", "distinct users in the synthetic world"},
        {"world.num_items", "distinct items"},
        {"world.num_categories", "distinct categories"},
        {"world.num_brands", "distinct brands"},
        {"world.latent_dim", "latent preference dimensionality"},
        {"world.start_timestamp", "epoch seconds of the horizon start"},
        {"world.segments[].kind", "regime kind: normal|pre_promo|promo_peak|post_promo"},
        {"world.segments[].days", "segment length in days"},
        {"world.segments[].intensity", "burst/rotation intensity lambda >= 0"},
        {"world.split_day", "train/validation split, days from the horizon start"},
        {"world.signals[].name", "occasion signal name"},
        {"world.signals[].base", "signal base level"},
        {"world.signals[].daily_amp", "daily sinusoid amplitude"},
        {"world.signals[].burst_amp", "promo burst amplitude (scaled by intensity)"},
        {"world.signals[].noise_sigma", "Gaussian noise level"},
        {"world.sampling_interval_minutes", "signal sampling interval T"},
        {"world.history_len", "signal steps per snapshot slice (N)"},
        {"world.snapshot_stride", "signal columns between snapshots"},
        {"world.cycle_period_minutes", "period of the daily cycle component"},
        {"world.burst_period_minutes", "period of the promo burst component"},
        {"world.random_burst_phase", "draw a fresh burst phase per segment"},
        {"world.impressions_per_snapshot", "base impressions per snapshot window"},
        {"world.traffic_boost_pre", "traffic multiplier in pre-promo segments"},
        {"world.traffic_boost_peak", "traffic multiplier in promo-peak segments"},
        {"world.traffic_boost_post", "traffic multiplier in post-promo segments"},
        {"world.affinity_scale", "scale of the bilinear user-item term"},
        {"world.global_bias", "global click-logit offset"},
        {"world.hour_bias_amp", "hour-of-day logit amplitude"},
        {"world.position_bias", "per-position logit slope"},
        {"world.num_positions", "distinct display positions"},
        {"world.rotation_angle_deg", "promo-peak preference rotation angle"},
        {"world.promo_gain", "promo-peak preference gain"},
        {"world.zipf_exponent", "item popularity skew"},
        {"world.promo_category_fraction", "fraction of categories boosted in promos"},
        {"world.promo_exposure_boost", "exposure multiplier for boosted categories"},
        {"world.max_history", "behavior triples kept per user"},
        {"world.warmup_history_min", "minimum pre-horizon clicks per user"},
        {"world.warmup_history_max", "maximum pre-horizon clicks per user"},
        {"schema.max_seq_len", "behavior sequence cap"},
        {"schema.user_features[].name", "user feature name (user id first)"},
        {"schema.user_features[].buckets", "hash buckets (bucket 0 = missing)"},
        {"schema.user_features[].width", "embedding width"},
        {"schema.item_features[].name", "item feature name (item/category/brand ids)"},
        {"schema.item_features[].buckets", "hash buckets"},
        {"schema.item_features[].width", "embedding width"},
        {"schema.context_features[].name", "context feature name"},
        {"schema.context_features[].buckets", "hash buckets"},
        {"schema.context_features[].width", "embedding width"},
        {"windowing.window_size", "sliding window size N_w"},
        {"windowing.stride", "sliding window stride N_s"},
        {"windowing.fft_points", "FFT points N_f (power of two >= N_w)"},
        {"windowing.normalization", "signal normalization: zscore|log1p|none"},
        {"windowing.one_sided", "keep only bins 0..N_f/2 of each spectrum"},
        {"encoder.kind", "occasion encoder: lstm|transformer_encoder|mlp_pool"},
        {"encoder.hidden_dim", "occasion representation width d_h"},
        {"encoder.transformer_heads", "encoder attention heads"},
        {"encoder.transformer_layers", "encoder blocks"},
        {"encoder.transformer_ff_mult", "feed-forward width multiplier"},
        {"model.variant", "full|one_expert|no_fft|no_lstm|transformer_encoder"},
        {"model.num_experts", "expert count K (one_expert forces 1)"},
        {"model.attention_heads", "behavior self-attention heads"},
        {"model.attention_hidden", "behavior self-attention hidden size"},
        {"model.pooled_score_dim", "user/target attention score width"},
        {"model.pooled_value_dim", "user/target attention output width"},
        {"model.main_net", "MainNet layer sizes"},
        {"model.bias_net", "BiasNet layer sizes"},
        {"model.head", "prediction head layer sizes (last must be 1)"},
        {"model.gate_hidden", "gate scoring hidden width"},
        {"train.learning_rate", "Adagrad learning rate"},
        {"train.batch_size", "mini-batch size"},
        {"train.epochs", "training epochs"},
        {"train.adagrad_epsilon", "Adagrad denominator epsilon"},
    };
    return keys;
}

namespace {

void validate_keys(const json& node, const std::string& prefix,
                   const std::set<std::string>& allowed) {
    if (node.is_object()) {
        for (const auto& [k, v] : node.items()) {
            const std::string path = prefix.empty() ? k : prefix + "." + k;
            if (allowed.find(path) == allowed.end()) {
                throw ConfigError("unknown config key '" + path + "'");
            }
            validate_keys(v, path, allowed);
        }
    } else if (node.is_array()) {
        for (const auto& v : node) validate_keys(v, prefix + "[]", allowed);
    }
}

std::set<std::string> allowed_key_set() {
    std::set<std::string> allowed;
    for (const auto& k : config_key_reference()) {
        allowed.insert(k.path);
        // register every intermediate prefix, both the array-element form
        // ("world.segments[]") and the bare object key ("world.segments")
        std::string acc;
        for (std::size_t i = 0; i < k.path.size(); ++i) {
            if (k.path[i] == '.') {
                allowed.insert(acc);
                if (acc.size() >= 2 && acc.substr(acc.size() - 2) == "[]") {
                    allowed.insert(acc.substr(0, acc.size() - 2));
                }
            }
            acc += k.path[i];
        }
    }
    return allowed;
}

} // namespace

RunConfig run_config_from_json(const json& j) {
    static const std::set<std::string> allowed = allowed_key_set();
    validate_keys(j, "", allowed);

    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
    c.checkpoint = j.value("checkpoint", c.checkpoint);
    if (j.contains("world")) {
        c.world = world_config_from_json(j.at("world"));
        if (!j.at("world").contains("seed")) c.world.seed = c.seed;
    } else {
        c.world = WorldConfig::defaults();
        c.world.seed = c.seed;
    }
    if (j.contains("schema")) c.schema = schema_from_json(j.at("schema"));
    if (j.contains("windowing")) c.windowing = windowing_from_json(j.at("windowing"));
    if (j.contains("encoder")) c.encoder = encoder_from_json(j.at("encoder"));
    if (j.contains("model")) {
        const json& m = j.at("model");
        if (m.contains("variant")) c.variant = variant_from_string(m.at("variant"));
        c.num_experts = m.value("num_experts", c.num_experts);
        c.expert_sizes.attn_heads = m.value("attention_heads", c.expert_sizes.attn_heads);
        c.expert_sizes.attn_hidden = m.value("attention_hidden", c.expert_sizes.attn_hidden);
        c.expert_sizes.pooled_score_dim =
            m.value("pooled_score_dim", c.expert_sizes.pooled_score_dim);
        c.expert_sizes.pooled_value_dim =
            m.value("pooled_value_dim", c.expert_sizes.pooled_value_dim);
        if (m.contains("main_net")) c.expert_sizes.main_net = sizes_from_json(m.at("main_net"));
        if (m.contains("bias_net")) c.expert_sizes.bias_net = sizes_from_json(m.at("bias_net"));
        if (m.contains("head")) c.head_sizes = sizes_from_json(m.at("head"));
        c.gate_hidden = m.value("gate_hidden", c.gate_hidden);
    }
    c.train = train_config_from_json(j.contains("train") ? j.at("train") : json::object(),
                                     c.seed);
    return c;
}

json run_config_to_json(const RunConfig& c) {
    json model{{"variant", to_string(c.variant)},
               {"num_experts", c.num_experts},
               {"attention_heads", c.expert_sizes.attn_heads},
               {"attention_hidden", c.expert_sizes.attn_hidden},
               {"pooled_score_dim", c.expert_sizes.pooled_score_dim},
               {"pooled_value_dim", c.expert_sizes.pooled_value_dim},
               {"main_net", c.expert_sizes.main_net},
               {"bias_net", c.expert_sizes.bias_net},
               {"head", c.head_sizes},
               {"gate_hidden", c.gate_hidden}};
    return json{{"seed", c.seed},
                {"out_dir", c.out_dir},
                {"dataset_dir", c.dataset_dir},
                {"checkpoint", c.checkpoint},
                {"world", world_config_to_json(c.world)},
                {"schema", schema_to_json(c.schema)},
                {"windowing", windowing_to_json(c.windowing)},
                {"encoder", encoder_to_json(c.encoder)},
                {"model", model},
                {"train", train_config_to_json(c.train)}};
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.variant = variant;
    m.num_experts = num_experts;
    m.schema = schema;
    m.windowing = windowing;
    m.signal_history = world.history_len;
    m.num_signals = world.signals.size();
    m.encoder = encoder;
    m.expert_sizes = expert_sizes;
    m.head_sizes = head_sizes;
    m.gate_hidden = gate_hidden;
    return m;
}

} // namespace moef
