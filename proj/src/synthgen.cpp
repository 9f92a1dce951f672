#include "moef/synthgen.hpp"

#include "moef/errors.hpp"
#include "moef/metrics.hpp"
#include "moef/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

namespace moef {

using nlohmann::json;

RegimeKind regime_from_string(const std::string& s) {
    if (s == "normal") return RegimeKind::Normal;
    if (s == "pre_promo") return RegimeKind::PrePromo;
    if (s == "promo_peak") return RegimeKind::PromoPeak;
    if (s == "post_promo") return RegimeKind::PostPromo;
    throw ConfigError("unknown regime kind '" + s + "'");
}

std::string to_string(RegimeKind k) {
    switch (k) {
        case RegimeKind::Normal: return "normal";
        case RegimeKind::PrePromo: return "pre_promo";
        case RegimeKind::PromoPeak: return "promo_peak";
        case RegimeKind::PostPromo: return "post_promo";
    }
    return "?";
}

double WorldConfig::total_days() const {
    double d = 0.0;
    for (const auto& s : segments) d += s.days;
    return d;
}

int64_t WorldConfig::end_timestamp() const {
    return start_timestamp + static_cast<int64_t>(total_days() * 86400.0);
}

int64_t WorldConfig::split_timestamp() const {
    return start_timestamp + static_cast<int64_t>(split_day * 86400.0);
}

WorldConfig WorldConfig::defaults() {
    WorldConfig c;
    c.segments = {
        {RegimeKind::Normal, 4.0, 0.0},   {RegimeKind::PrePromo, 1.0, 0.5},
        {RegimeKind::PromoPeak, 2.0, 1.0}, {RegimeKind::PostPromo, 1.0, 0.3},
        {RegimeKind::Normal, 3.0, 0.0},   {RegimeKind::PrePromo, 1.0, 0.5},
        {RegimeKind::PromoPeak, 1.0, 1.0}, {RegimeKind::PostPromo, 1.0, 0.3},
    };
    c.split_day = 10.0;
    c.signals = {
        {"active_users", 520.0, 140.0, 110.0, 6.0},
        {"gmv", 950.0, 260.0, 210.0, 12.0},
        {"add_to_cart", 240.0, 70.0, 55.0, 4.0},
    };
    return c;
}

RegimeKind RegimeSchedule::kind_at(int64_t ts) const {
    for (const auto& s : segments) {
        if (ts >= s.start_ts && ts < s.end_ts) return s.kind;
    }
    if (!segments.empty() && ts == segments.back().end_ts) return segments.back().kind;
    throw DataError("timestamp " + std::to_string(ts) + " outside the regime schedule");
}

double RegimeSchedule::intensity_at(int64_t ts) const {
    for (const auto& s : segments) {
        if (ts >= s.start_ts && ts < s.end_ts) return s.intensity;
    }
    if (!segments.empty() && ts == segments.back().end_ts) return segments.back().intensity;
    throw DataError("timestamp " + std::to_string(ts) + " outside the regime schedule");
}

void RegimeSchedule::validate(int64_t horizon_start, int64_t horizon_end) const {
    if (segments.empty()) throw ConfigError("regime schedule has no segments");
    if (segments.front().start_ts != horizon_start) {
        throw ConfigError("regime schedule does not start at the horizon start");
    }
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (segments[i].end_ts <= segments[i].start_ts) {
            throw ConfigError("regime segment " + std::to_string(i) + " is empty");
        }
        if (segments[i].intensity < 0.0) {
            throw ConfigError("regime segment " + std::to_string(i) + " has negative intensity");
        }
        if (i + 1 < segments.size() && segments[i + 1].start_ts != segments[i].end_ts) {
            throw ConfigError("regime segments " + std::to_string(i) + " and " +
                              std::to_string(i + 1) + " are not contiguous");
        }
    }
    if (segments.back().end_ts != horizon_end) {
        throw ConfigError("regime schedule does not cover the horizon end");
    }
}

RegimeSchedule build_schedule(const WorldConfig& cfg) {
    if (cfg.segments.empty()) throw ConfigError("world config declares no schedule segments");
    RegimeSchedule s;
    int64_t t = cfg.start_timestamp;
    for (const auto& spec : cfg.segments) {
        RegimeSegment seg;
        seg.kind = spec.kind;
        seg.intensity = spec.intensity;
        seg.start_ts = t;
        seg.end_ts = t + static_cast<int64_t>(spec.days * 86400.0);
        s.segments.push_back(seg);
        t = seg.end_ts;
    }
    s.validate(cfg.start_timestamp, t);
    return s;
}

OccasionSignalSeries generate_signals(const RegimeSchedule& schedule, const WorldConfig& cfg) {
    const int64_t step = cfg.sampling_interval_minutes * 60;
    const int64_t horizon = cfg.end_timestamp() - cfg.start_timestamp;
    const std::size_t total_steps = static_cast<std::size_t>(horizon / step);
    if (total_steps < cfg.history_len) {
        throw ConfigError("horizon of " + std::to_string(total_steps) +
                          " signal steps is shorter than the required history of " +
                          std::to_string(cfg.history_len));
    }
    if (cfg.signals.empty()) throw ConfigError("world config declares no signals");

    Rng master(splitmix64(cfg.seed ^ 0x7369676eULL));
    Rng noise_rng = master.fork(1);
    Rng phase_rng = master.fork(2);

    // one burst phase per (segment, signal)
    std::vector<std::vector<double>> burst_phase(schedule.segments.size());
    std::vector<double> daily_phase(cfg.signals.size());
    for (std::size_t s = 0; s < cfg.signals.size(); ++s) {
        daily_phase[s] = phase_rng.uniform(0.0, 2.0 * M_PI);
    }
    for (std::size_t g = 0; g < schedule.segments.size(); ++g) {
        burst_phase[g].resize(cfg.signals.size());
        for (std::size_t s = 0; s < cfg.signals.size(); ++s) {
            burst_phase[g][s] = cfg.random_burst_phase ? phase_rng.uniform(0.0, 2.0 * M_PI) : 0.0;
        }
    }

    OccasionSignalSeries series;
    series.num_signals = cfg.signals.size();
    series.num_steps = total_steps;
    series.sampling_interval_minutes = cfg.sampling_interval_minutes;
    series.end_timestamp = cfg.start_timestamp + static_cast<int64_t>(total_steps - 1) * step;
    for (const auto& s : cfg.signals) series.signal_names.push_back(s.name);
    series.values.resize(series.num_signals * total_steps);

    const double cycle_sec = cfg.cycle_period_minutes * 60.0;
    const double burst_sec = cfg.burst_period_minutes * 60.0;
    for (std::size_t t = 0; t < total_steps; ++t) {
        const int64_t ts = cfg.start_timestamp + static_cast<int64_t>(t) * step;
        const double rel = static_cast<double>(ts - cfg.start_timestamp);
        // locate segment for phase lookup
        std::size_t seg_idx = 0;
        for (std::size_t g = 0; g < schedule.segments.size(); ++g) {
            if (ts >= schedule.segments[g].start_ts && ts < schedule.segments[g].end_ts) {
                seg_idx = g;
                break;
            }
            if (g + 1 == schedule.segments.size()) seg_idx = g;
        }
        const double lambda = schedule.segments[seg_idx].intensity;
        for (std::size_t s = 0; s < series.num_signals; ++s) {
            const SignalSpec& spec = cfg.signals[s];
            double v = spec.base;
            v += spec.daily_amp * std::sin(2.0 * M_PI * rel / cycle_sec + daily_phase[s]);
            if (lambda > 0.0 && spec.burst_amp > 0.0) {
                v += lambda * spec.burst_amp *
                     std::sin(2.0 * M_PI * rel / burst_sec + burst_phase[seg_idx][s]);
            }
            if (spec.noise_sigma > 0.0) v += noise_rng.normal(0.0, spec.noise_sigma);
            series.values[s * total_steps + t] = std::max(0.0, v);
        }
    }
    return series;
}

namespace {

struct World {
    std::vector<double> user_latent;  // users x dim
    std::vector<double> item_latent;  // items x dim
    std::vector<double> item_rotated; // R * v per item
    std::vector<int64_t> item_category;
    std::vector<int64_t> item_brand;
    std::vector<std::array<int64_t, 5>> user_profile;
    std::vector<bool> category_hot; // promo-boosted categories
};

World build_world(const WorldConfig& cfg) {
    World w;
    Rng rng(splitmix64(cfg.seed ^ 0x776f726cULL));
    const std::size_t dim = cfg.latent_dim;
    const double sigma = 1.0 / std::sqrt(static_cast<double>(dim));

    std::vector<double> proto(cfg.num_categories * dim);
    for (double& x : proto) x = rng.normal(0.0, sigma);

    w.user_latent.resize(cfg.num_users * dim);
    for (double& x : w.user_latent) x = rng.normal(0.0, sigma);

    w.item_latent.resize(cfg.num_items * dim);
    w.item_category.resize(cfg.num_items);
    w.item_brand.resize(cfg.num_items);
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
        const std::size_t cat = rng.below(cfg.num_categories);
        w.item_category[i] = static_cast<int64_t>(cat);
        w.item_brand[i] = static_cast<int64_t>(rng.below(cfg.num_brands));
        for (std::size_t d = 0; d < dim; ++d) {
            w.item_latent[i * dim + d] =
                0.7 * proto[cat * dim + d] + 0.7 * rng.normal(0.0, sigma);
        }
    }

    // promo-peak preference rotation applied pairwise over latent planes
    const double theta = cfg.rotation_angle_deg * M_PI / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    w.item_rotated = w.item_latent;
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
        for (std::size_t d = 0; d + 1 < dim; d += 2) {
            const double a = w.item_latent[i * dim + d];
            const double b = w.item_latent[i * dim + d + 1];
            w.item_rotated[i * dim + d] = c * a - s * b;
            w.item_rotated[i * dim + d + 1] = s * a + c * b;
        }
    }

    w.user_profile.resize(cfg.num_users);
    for (std::size_t u = 0; u < cfg.num_users; ++u) {
        w.user_profile[u] = {static_cast<int64_t>(rng.below(3)),
                             static_cast<int64_t>(rng.below(8)),
                             static_cast<int64_t>(rng.below(5)),
                             static_cast<int64_t>(rng.below(4)),
                             static_cast<int64_t>(rng.below(6))};
    }

    w.category_hot.assign(cfg.num_categories, false);
    const std::size_t hot =
        static_cast<std::size_t>(std::ceil(cfg.promo_category_fraction *
                                           static_cast<double>(cfg.num_categories)));
    for (std::size_t c2 = 0; c2 < std::min(hot, cfg.num_categories); ++c2) {
        w.category_hot[c2] = true;
    }
    return w;
}

double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// exposure weights for one regime intensity; hot categories get boosted
std::vector<double> exposure_cumweights(const WorldConfig& cfg, const World& w, double lambda) {
    std::vector<double> cum(cfg.num_items);
    double total = 0.0;
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
        double weight = 1.0 / std::pow(static_cast<double>(i + 1), cfg.zipf_exponent);
        if (lambda > 0.0 && w.category_hot[static_cast<std::size_t>(w.item_category[i])]) {
            weight *= 1.0 + lambda * (cfg.promo_exposure_boost - 1.0);
        }
        total += weight;
        cum[i] = total;
    }
    for (double& v : cum) v /= total;
    return cum;
}

std::size_t sample_cum(Rng& rng, const std::vector<double>& cum) {
    const double u = rng.uniform();
    return static_cast<std::size_t>(
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
}

double traffic_multiplier(const WorldConfig& cfg, RegimeKind k) {
    switch (k) {
        case RegimeKind::Normal: return 1.0;
        case RegimeKind::PrePromo: return cfg.traffic_boost_pre;
        case RegimeKind::PromoPeak: return cfg.traffic_boost_peak;
        case RegimeKind::PostPromo: return cfg.traffic_boost_post;
    }
    return 1.0;
}

} // namespace

InteractionStream generate_interactions(const RegimeSchedule& schedule, const WorldConfig& cfg,
                                        const OccasionSignalSeries& signals) {
    const std::size_t dim = cfg.latent_dim;
    World world = build_world(cfg);
    Rng rng(splitmix64(cfg.seed ^ 0x696d7072ULL));

    // warm per-user histories so behavior sequences are informative from
    // the first day; warmup clicks are not emitted as records
    std::vector<std::vector<BehaviorItem>> history(cfg.num_users);
    {
        auto cum = exposure_cumweights(cfg, world, 0.0);
        for (std::size_t u = 0; u < cfg.num_users; ++u) {
            const std::size_t n = cfg.warmup_history_min +
                                  rng.below(cfg.warmup_history_max - cfg.warmup_history_min + 1);
            const double* uvec = world.user_latent.data() + u * dim;
            for (std::size_t k = 0; k < n; ++k) {
                std::size_t item = 0;
                for (int attempt = 0; attempt < 4; ++attempt) {
                    item = sample_cum(rng, cum);
                    const double logit =
                        cfg.affinity_scale * dot(uvec, world.item_latent.data() + item * dim, dim) +
                        cfg.global_bias;
                    if (rng.uniform() < 1.0 / (1.0 + std::exp(-logit))) break;
                }
                history[u].push_back({static_cast<int64_t>(item), world.item_category[item],
                                      world.item_brand[item]});
                if (history[u].size() > cfg.max_history) history[u].erase(history[u].begin());
            }
        }
    }

    const int64_t step = cfg.sampling_interval_minutes * 60;
    const std::size_t total_steps = signals.num_steps;
    const int64_t snap_window = static_cast<int64_t>(cfg.snapshot_stride) * step;

    InteractionStream out;
    // cache exposure tables per distinct intensity
    std::vector<std::pair<double, std::vector<double>>> exposure_cache;
    auto exposure_for = [&](double lambda) -> const std::vector<double>& {
        for (auto& [l, cum] : exposure_cache) {
            if (l == lambda) return cum;
        }
        exposure_cache.emplace_back(lambda, exposure_cumweights(cfg, world, lambda));
        return exposure_cache.back().second;
    };

    for (std::size_t col = cfg.history_len - 1; col < total_steps; col += cfg.snapshot_stride) {
        const int64_t snap_ts = cfg.start_timestamp + static_cast<int64_t>(col) * step;
        const RegimeKind snap_kind = schedule.kind_at(snap_ts);
        const std::size_t count = static_cast<std::size_t>(
            std::lround(static_cast<double>(cfg.impressions_per_snapshot) *
                        traffic_multiplier(cfg, snap_kind)));
        const double snap_lambda = schedule.intensity_at(snap_ts);
        const auto& cum = exposure_for(snap_lambda);

        for (std::size_t n = 0; n < count; ++n) {
            const int64_t ts = snap_ts - static_cast<int64_t>(rng.below(
                                             static_cast<uint64_t>(snap_window)));
            const std::size_t user = rng.below(cfg.num_users);
            const std::size_t item = sample_cum(rng, cum);
            const double lambda = schedule.intensity_at(ts);

            const double* uvec = world.user_latent.data() + user * dim;
            const double base_aff = dot(uvec, world.item_latent.data() + item * dim, dim);
            const double rot_aff = dot(uvec, world.item_rotated.data() + item * dim, dim);
            const double affinity =
                (1.0 - lambda) * base_aff + lambda * cfg.promo_gain * rot_aff;

            const int64_t hour = ((ts - cfg.start_timestamp) / 3600) % 24;
            const std::size_t position = rng.below(cfg.num_positions);
            const double logit = cfg.affinity_scale * affinity +
                                 cfg.hour_bias_amp *
                                     std::sin(2.0 * M_PI * static_cast<double>(hour) / 24.0 - 1.0) +
                                 cfg.position_bias * static_cast<double>(position) +
                                 cfg.global_bias;
            const double p = 1.0 / (1.0 + std::exp(-logit));
            const int label = rng.uniform() < p ? 1 : 0;

            SampleRecord r;
            r.user_id = static_cast<int64_t>(user);
            r.item_id = static_cast<int64_t>(item);
            r.category_id = world.item_category[item];
            r.brand_id = world.item_brand[item];
            r.user_profile.assign(world.user_profile[user].begin(),
                                  world.user_profile[user].end());
            r.context = {hour, static_cast<int64_t>(position)};
            r.behavior = history[user]; // snapshot before the current event
            r.label = label;
            r.timestamp = ts;
            r.snapshot_id = static_cast<int64_t>(col);
            out.records.push_back(std::move(r));
            out.true_p.push_back(p);

            if (label == 1) {
                history[user].push_back({static_cast<int64_t>(item), world.item_category[item],
                                         world.item_brand[item]});
                if (history[user].size() > cfg.max_history) {
                    history[user].erase(history[user].begin());
                }
            }
        }
    }

    // order by timestamp; snapshot windows are disjoint so groups stay
    // contiguous
    std::vector<std::size_t> order(out.records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return out.records[a].timestamp < out.records[b].timestamp;
    });
    InteractionStream sorted;
    sorted.records.reserve(out.records.size());
    sorted.true_p.reserve(out.true_p.size());
    for (std::size_t i : order) {
        sorted.records.push_back(std::move(out.records[i]));
        sorted.true_p.push_back(out.true_p[i]);
    }
    return sorted;
}

DatasetFiles DatasetFiles::in_dir(const std::string& dir) {
    DatasetFiles f;
    f.train = dir + "/train.tsv";
    f.validation = dir + "/validation.tsv";
    f.signals = dir + "/signals.csv";
    f.manifest = dir + "/manifest.json";
    f.train_true_p = dir + "/train.ptrue";
    f.val_true_p = dir + "/validation.ptrue";
    return f;
}

namespace {

double ceiling_or_nan(const std::vector<int>& labels, const std::vector<double>& p) {
    try {
        return auc(labels, p);
    } catch (const ContractError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

void write_ptrue(const std::string& path, const std::vector<double>& p) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write ground-truth file: " + path);
    out.precision(17);
    for (double v : p) out << v << '\n';
}

} // namespace

GenerationReport write_dataset(const InteractionStream& stream, int64_t split_timestamp,
                               const DatasetFiles& files, const WorldConfig& cfg,
                               const RegimeSchedule& schedule,
                               const OccasionSignalSeries& signals,
                               const FeatureSchema& schema) {
    if (split_timestamp < cfg.start_timestamp || split_timestamp > cfg.end_timestamp()) {
        throw ConfigError("split timestamp " + std::to_string(split_timestamp) +
                          " outside the generation horizon");
    }
    std::vector<SampleRecord> train, val;
    std::vector<double> train_p, val_p;
    std::vector<int> train_y, val_y;
    std::vector<int> val_promo_y, val_normal_y;
    std::vector<double> val_promo_p, val_normal_p;
    for (std::size_t i = 0; i < stream.records.size(); ++i) {
        const SampleRecord& r = stream.records[i];
        if (r.timestamp < split_timestamp) {
            train.push_back(r);
            train_p.push_back(stream.true_p[i]);
            train_y.push_back(r.label);
        } else {
            val.push_back(r);
            val_p.push_back(stream.true_p[i]);
            val_y.push_back(r.label);
            const RegimeKind k = schedule.kind_at(r.timestamp);
            if (k == RegimeKind::Normal) {
                val_normal_y.push_back(r.label);
                val_normal_p.push_back(stream.true_p[i]);
            } else {
                val_promo_y.push_back(r.label);
                val_promo_p.push_back(stream.true_p[i]);
            }
        }
    }

    write_dataset_file(files.train, train, schema);
    write_dataset_file(files.validation, val, schema);
    write_ptrue(files.train_true_p, train_p);
    write_ptrue(files.val_true_p, val_p);
    write_signals_file(files.signals, signals);

    GenerationReport rep;
    rep.train_count = train.size();
    rep.val_count = val.size();
    for (int y : train_y) rep.train_clicks += static_cast<std::size_t>(y);
    for (int y : val_y) rep.val_clicks += static_cast<std::size_t>(y);
    rep.empty_split_warning = train.empty() || val.empty();
    rep.train_ceiling = train.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : ceiling_or_nan(train_y, train_p);
    rep.val_ceiling =
        val.empty() ? std::numeric_limits<double>::quiet_NaN() : ceiling_or_nan(val_y, val_p);
    rep.val_promo_ceiling = val_promo_y.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : ceiling_or_nan(val_promo_y, val_promo_p);
    rep.val_normal_ceiling = val_normal_y.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                  : ceiling_or_nan(val_normal_y, val_normal_p);

    Manifest m;
    m.world = cfg;
    m.schedule = schedule;
    m.split_timestamp = split_timestamp;
    m.report = rep;
    m.files = files;
    write_manifest(files.manifest, m);
    return rep;
}

// ---- manifest / config serialization -------------------------------------

json world_config_to_json(const WorldConfig& c) {
    json segs = json::array();
    for (const auto& s : c.segments) {
        segs.push_back({{"kind", to_string(s.kind)}, {"days", s.days},
                        {"intensity", s.intensity}});
    }
    json sigs = json::array();
    for (const auto& s : c.signals) {
        sigs.push_back({{"name", s.name},
                        {"base", s.base},
                        {"daily_amp", s.daily_amp},
                        {"burst_amp", s.burst_amp},
                        {"noise_sigma", s.noise_sigma}});
    }
    return json{{"seed", c.seed},
                {"num_users", c.num_users},
                {"num_items", c.num_items},
                {"num_categories", c.num_categories},
                {"num_brands", c.num_brands},
                {"latent_dim", c.latent_dim},
                {"start_timestamp", c.start_timestamp},
                {"segments", segs},
                {"split_day", c.split_day},
                {"signals", sigs},
                {"sampling_interval_minutes", c.sampling_interval_minutes},
                {"history_len", c.history_len},
                {"snapshot_stride", c.snapshot_stride},
                {"cycle_period_minutes", c.cycle_period_minutes},
                {"burst_period_minutes", c.burst_period_minutes},
                {"random_burst_phase", c.random_burst_phase},
                {"impressions_per_snapshot", c.impressions_per_snapshot},
                {"traffic_boost_pre", c.traffic_boost_pre},
                {"traffic_boost_peak", c.traffic_boost_peak},
                {"traffic_boost_post", c.traffic_boost_post},
                {"affinity_scale", c.affinity_scale},
                {"global_bias", c.global_bias},
                {"hour_bias_amp", c.hour_bias_amp},
                {"position_bias", c.position_bias},
                {"num_positions", c.num_positions},
                {"rotation_angle_deg", c.rotation_angle_deg},
                {"promo_gain", c.promo_gain},
                {"zipf_exponent", c.zipf_exponent},
                {"promo_category_fraction", c.promo_category_fraction},
                {"promo_exposure_boost", c.promo_exposure_boost},
                {"max_history", c.max_history},
                {"warmup_history_min", c.warmup_history_min},
                {"warmup_history_max", c.warmup_history_max}};
}

WorldConfig world_config_from_json(const json& j) {
    WorldConfig c = WorldConfig::defaults();
    c.seed = j.value("seed", c.seed);
    c.num_users = j.value("num_users", c.num_users);
    c.num_items = j.value("num_items", c.num_items);
    c.num_categories = j.value("num_categories", c.num_categories);
    c.num_brands = j.value("num_brands", c.num_brands);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.start_timestamp = j.value("start_timestamp", c.start_timestamp);
    if (j.contains("segments")) {
        c.segments.clear();
        for (const auto& s : j.at("segments")) {
            SegmentSpec spec;
            spec.kind = regime_from_string(s.at("kind").get<std::string>());
            spec.days = s.at("days").get<double>();
            spec.intensity = s.value("intensity", 0.0);
            c.segments.push_back(spec);
        }
    }
    c.split_day = j.value("split_day", c.split_day);
    if (j.contains("signals")) {
        c.signals.clear();
        for (const auto& s : j.at("signals")) {
            SignalSpec spec;
            spec.name = s.at("name").get<std::string>();
            spec.base = s.value("base", spec.base);
            spec.daily_amp = s.value("daily_amp", spec.daily_amp);
            spec.burst_amp = s.value("burst_amp", spec.burst_amp);
            spec.noise_sigma = s.value("noise_sigma", spec.noise_sigma);
            c.signals.push_back(spec);
        }
    }
    c.sampling_interval_minutes = j.value("sampling_interval_minutes",
                                          c.sampling_interval_minutes);
    c.history_len = j.value("history_len", c.history_len);
    c.snapshot_stride = j.value("snapshot_stride", c.snapshot_stride);
    c.cycle_period_minutes = j.value("cycle_period_minutes", c.cycle_period_minutes);
    c.burst_period_minutes = j.value("burst_period_minutes", c.burst_period_minutes);
    c.random_burst_phase = j.value("random_burst_phase", c.random_burst_phase);
    c.impressions_per_snapshot = j.value("impressions_per_snapshot",
                                         c.impressions_per_snapshot);
    c.traffic_boost_pre = j.value("traffic_boost_pre", c.traffic_boost_pre);
    c.traffic_boost_peak = j.value("traffic_boost_peak", c.traffic_boost_peak);
    c.traffic_boost_post = j.value("traffic_boost_post", c.traffic_boost_post);
    c.affinity_scale = j.value("affinity_scale", c.affinity_scale);
    c.global_bias = j.value("global_bias", c.global_bias);
    c.hour_bias_amp = j.value("hour_bias_amp", c.hour_bias_amp);
    c.position_bias = j.value("position_bias", c.position_bias);
    c.num_positions = j.value("num_positions", c.num_positions);
    c.rotation_angle_deg = j.value("rotation_angle_deg", c.rotation_angle_deg);
    c.promo_gain = j.value("promo_gain", c.promo_gain);
    c.zipf_exponent = j.value("zipf_exponent", c.zipf_exponent);
    c.promo_category_fraction = j.value("promo_category_fraction", c.promo_category_fraction);
    c.promo_exposure_boost = j.value("promo_exposure_boost", c.promo_exposure_boost);
    c.max_history = j.value("max_history", c.max_history);
    c.warmup_history_min = j.value("warmup_history_min", c.warmup_history_min);
    c.warmup_history_max = j.value("warmup_history_max", c.warmup_history_max);
    return c;
}

namespace {

json nan_to_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

double null_to_nan(const json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

} // namespace

void write_manifest(const std::string& path, const Manifest& m) {
    json sched = json::array();
    for (const auto& s : m.schedule.segments) {
        sched.push_back({{"kind", to_string(s.kind)},
                         {"start_ts", s.start_ts},
                         {"end_ts", s.end_ts},
                         {"intensity", s.intensity}});
    }
    json doc{{"format_version", m.format_version},
             {"world", world_config_to_json(m.world)},
             {"schedule", sched},
             {"split_timestamp", m.split_timestamp},
             {"counts",
              {{"train", m.report.train_count},
               {"validation", m.report.val_count},
               {"train_clicks", m.report.train_clicks},
               {"validation_clicks", m.report.val_clicks}}},
             {"ground_truth_auc",
              {{"train", nan_to_null(m.report.train_ceiling)},
               {"validation", nan_to_null(m.report.val_ceiling)},
               {"validation_promotion", nan_to_null(m.report.val_promo_ceiling)},
               {"validation_normal", nan_to_null(m.report.val_normal_ceiling)}}},
             {"files",
              {{"train", m.files.train},
               {"validation", m.files.validation},
               {"signals", m.files.signals},
               {"train_true_p", m.files.train_true_p},
               {"validation_true_p", m.files.val_true_p}}},
             {"empty_split_warning", m.report.empty_split_warning}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw DataError("write failed for manifest: " + path);
}

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + path + ": " + e.what());
    }
    Manifest m;
    m.format_version = doc.value("format_version", 0);
    if (m.format_version != 1) {
        throw DataError("manifest " + path + " has unsupported format_version " +
                        std::to_string(m.format_version));
    }
    m.world = world_config_from_json(doc.at("world"));
    for (const auto& s : doc.at("schedule")) {
        RegimeSegment seg;
        seg.kind = regime_from_string(s.at("kind").get<std::string>());
        seg.start_ts = s.at("start_ts").get<int64_t>();
        seg.end_ts = s.at("end_ts").get<int64_t>();
        seg.intensity = s.value("intensity", 0.0);
        m.schedule.segments.push_back(seg);
    }
    m.split_timestamp = doc.at("split_timestamp").get<int64_t>();
    const auto& counts = doc.at("counts");
    m.report.train_count = counts.value("train", 0u);
    m.report.val_count = counts.value("validation", 0u);
    m.report.train_clicks = counts.value("train_clicks", 0u);
    m.report.val_clicks = counts.value("validation_clicks", 0u);
    const auto& ceil = doc.at("ground_truth_auc");
    m.report.train_ceiling = null_to_nan(ceil.at("train"));
    m.report.val_ceiling = null_to_nan(ceil.at("validation"));
    m.report.val_promo_ceiling = null_to_nan(ceil.at("validation_promotion"));
    m.report.val_normal_ceiling = null_to_nan(ceil.at("validation_normal"));
    const auto& files = doc.at("files");
    m.files.train = files.value("train", "");
    m.files.validation = files.value("validation", "");
    m.files.signals = files.value("signals", "");
    m.files.train_true_p = files.value("train_true_p", "");
    m.files.val_true_p = files.value("validation_true_p", "");
    m.files.manifest = path;
    m.report.empty_split_warning = doc.value("empty_split_warning", false);
    return m;
}

} // namespace moef
