#pragma once

#include "moef/data.hpp"
#include "moef/signals.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace moef {

// Synthetic promotion world: a regime schedule drives both the spectral
// content of the occasion signals and the click distribution, so the
// optimal predictor is regime-dependent by construction.

enum class RegimeKind { Normal, PrePromo, PromoPeak, PostPromo };

RegimeKind regime_from_string(const std::string& s);
std::string to_string(RegimeKind k);

struct SegmentSpec {
    RegimeKind kind = RegimeKind::Normal;
    double days = 1.0;
    double intensity = 0.0; // lambda >= 0, scales burst amplitude and preference rotation
};

struct SignalSpec {
    std::string name;
    double base = 100.0;
    double daily_amp = 30.0;
    double burst_amp = 20.0;
    double noise_sigma = 2.0;
};

struct WorldConfig {
    uint64_t seed = 1;
    std::size_t num_users = 10000;
    std::size_t num_items = 2000;
    std::size_t num_categories = 50;
    std::size_t num_brands = 200;
    std::size_t latent_dim = 8;
    int64_t start_timestamp = 1735689600;
    std::vector<SegmentSpec> segments; // contiguous, in order
    double split_day = 10.0;

    std::vector<SignalSpec> signals;
    int64_t sampling_interval_minutes = 5; // T
    std::size_t history_len = 96;          // N columns per snapshot slice
    std::size_t snapshot_stride = 6;       // columns between snapshots
    double cycle_period_minutes = 1440.0;
    double burst_period_minutes = 40.0;
    // burst phase is re-drawn per segment so time-domain pooling cannot
    // lock onto it; magnitudes are phase-free
    bool random_burst_phase = true;

    std::size_t impressions_per_snapshot = 64;
    double traffic_boost_pre = 1.2;
    double traffic_boost_peak = 1.5;
    double traffic_boost_post = 1.1;

    double affinity_scale = 3.5;
    double global_bias = -1.1;
    double hour_bias_amp = 0.25;
    double position_bias = -0.08;
    std::size_t num_positions = 8;
    double rotation_angle_deg = 70.0; // promo-peak preference rotation
    double promo_gain = 1.35;
    double zipf_exponent = 1.05;
    double promo_category_fraction = 0.10;
    double promo_exposure_boost = 20.0;
    std::size_t max_history = 12;
    std::size_t warmup_history_min = 6;
    std::size_t warmup_history_max = 12;

    double total_days() const;
    int64_t end_timestamp() const;
    int64_t split_timestamp() const;

    static WorldConfig defaults(); // 14-day horizon with two promotions
};

struct RegimeSegment {
    RegimeKind kind;
    int64_t start_ts; // inclusive
    int64_t end_ts;   // exclusive
    double intensity;
};

struct RegimeSchedule {
    std::vector<RegimeSegment> segments;

    RegimeKind kind_at(int64_t ts) const;
    double intensity_at(int64_t ts) const;
    void validate(int64_t horizon_start, int64_t horizon_end) const;
};

RegimeSchedule build_schedule(const WorldConfig& cfg);

// Full-horizon master series. Per signal: base + daily sinusoid +
// intensity-scaled burst at the burst frequency + Gaussian noise, clamped
// at zero. Deterministic for a fixed config.
OccasionSignalSeries generate_signals(const RegimeSchedule& schedule, const WorldConfig& cfg);

struct InteractionStream {
    std::vector<SampleRecord> records; // sorted by timestamp
    std::vector<double> true_p;        // ground-truth click probability per record
};

// Bernoulli-labeled impressions with regime-rotated bilinear preferences,
// category-boosted promo exposure, and behavior sequences drawn from each
// user's past clicks. Snapshot ids are master-series column indices.
InteractionStream generate_interactions(const RegimeSchedule& schedule, const WorldConfig& cfg,
                                        const OccasionSignalSeries& signals);

struct DatasetFiles {
    std::string train;
    std::string validation;
    std::string signals;
    std::string manifest;
    std::string train_true_p;
    std::string val_true_p;

    static DatasetFiles in_dir(const std::string& dir);
};

struct GenerationReport {
    std::size_t train_count = 0, val_count = 0;
    std::size_t train_clicks = 0, val_clicks = 0;
    // best achievable AUC given the recorded ground-truth probabilities;
    // quiet NaN when a slice has a single class
    double train_ceiling = 0.0, val_ceiling = 0.0;
    double val_promo_ceiling = 0.0, val_normal_ceiling = 0.0;
    bool empty_split_warning = false;
};

// Temporal split: records strictly before the split timestamp go to the
// train file, the rest to validation. Also writes the signals file, the
// true-probability sidecars and the manifest.
GenerationReport write_dataset(const InteractionStream& stream, int64_t split_timestamp,
                               const DatasetFiles& files, const WorldConfig& cfg,
                               const RegimeSchedule& schedule,
                               const OccasionSignalSeries& signals,
                               const FeatureSchema& schema);

struct Manifest {
    int format_version = 1;
    WorldConfig world;
    RegimeSchedule schedule;
    int64_t split_timestamp = 0;
    GenerationReport report;
    DatasetFiles files;
};

void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);

nlohmann::json world_config_to_json(const WorldConfig& c);
WorldConfig world_config_from_json(const nlohmann::json& j);

} // namespace moef
