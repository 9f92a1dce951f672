#pragma once

#include "moef/config.hpp"
#include "moef/mixture.hpp"
#include "moef/optim.hpp"
#include "moef/synthgen.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace moef {

struct LossTracePoint {
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::size_t batch_size = 0;
    double loss = 0.0;
};

struct TrainResult {
    std::vector<LossTracePoint> trace;
    double initial_loss = 0.0; // mean over the first trace window
    double final_loss = 0.0;   // mean over the last trace window
    SignalStats stats;         // normalization stats used (training period)
};

// Stats over the master-series columns at or before the latest training
// record, so validation-period signal levels never leak into normalization.
SignalStats compute_train_stats(const OccasionSignalSeries& master,
                                const std::vector<SampleRecord>& records);

// Mini-batch Adagrad over snapshot-homogeneous batches. Batches are formed
// inside snapshot groups (temporal order), reshuffled within each group per
// epoch. Deterministic for a fixed seed. Throws NumericError when a forward
// pass produces a non-finite value.
TrainResult train(MoefModel& model, Adagrad& optimizer,
                  const std::vector<SampleRecord>& records,
                  const OccasionSignalSeries& master, const TrainConfig& cfg);

void write_loss_trace(const std::string& path, const std::vector<LossTracePoint>& trace);

struct RegimeMetrics {
    double auc = 0.0;     // NaN when undefined (single-class slice)
    double logloss = 0.0;
    std::size_t count = 0;
    double ceiling = std::numeric_limits<double>::quiet_NaN();
};

struct EvalReport {
    RegimeMetrics overall;
    std::optional<RegimeMetrics> promotion; // pre/peak/post segments
    std::optional<RegimeMetrics> normal;
    std::map<std::string, RegimeMetrics> by_kind;
};

// Frozen-parameter scoring of a dataset followed by metric slicing.
EvalReport evaluate(MoefModel& model, const std::vector<SampleRecord>& records,
                    const OccasionSignalSeries& master, const SignalStats& stats,
                    const RegimeSchedule* schedule, const GenerationReport* ceilings);

// Metric slicing over externally supplied scores (test hook for the CLI).
EvalReport evaluate_scores(const std::vector<SampleRecord>& records,
                           const std::vector<double>& scores, const RegimeSchedule* schedule,
                           const GenerationReport* ceilings);

// Model scores for a dataset, batched per snapshot, no gradient recording.
std::vector<double> score_dataset(MoefModel& model, const std::vector<SampleRecord>& records,
                                  const OccasionSignalSeries& master, const SignalStats& stats,
                                  std::size_t batch_size = 256);

nlohmann::json eval_report_to_json(const EvalReport& report);

// ---- checkpointing -------------------------------------------------------
// Versioned binary: magic + version + JSON header (model/train config,
// signal stats, parameter manifest) + raw little-endian doubles for the
// parameters and optimizer accumulators. Round-trips bit-exactly.

void save_checkpoint(const std::string& path, MoefModel& model, const Adagrad& optimizer,
                     const TrainConfig& train_cfg, const SignalStats& stats);

struct LoadedCheckpoint {
    std::unique_ptr<MoefModel> model;
    std::unique_ptr<Adagrad> optimizer;
    TrainConfig train;
    SignalStats stats;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// ---- inspection exports ----------------------------------------------------

struct InspectionPaths {
    std::string alpha_csv;
    std::string experts_csv;
};

// Writes (a) per-sample gate weights with timestamp and regime kind and
// (b) per-sample per-expert output vectors, for external analysis.
InspectionPaths export_inspection(MoefModel& model, const std::vector<SampleRecord>& records,
                                  const OccasionSignalSeries& master, const SignalStats& stats,
                                  const RegimeSchedule* schedule, const std::string& out_dir);

// ---- gradient check ---------------------------------------------------------

struct GradCheckGroup {
    std::string group;
    double max_rel_error = 0.0;
    std::size_t entries = 0;
    bool skipped = false; // frozen (requires_grad = false)
};

// Central finite differences against one reverse pass on a randomly
// initialized model over a random batch. Meant for tiny configurations.
std::vector<GradCheckGroup> grad_check(const ModelConfig& cfg, uint64_t seed,
                                       std::size_t batch_size = 4, double step = 1e-5,
                                       const std::vector<std::string>& frozen_groups = {});

// Scaled-down full-model configuration (every width <= 16) used by the
// gradient-check driver and its tests.
ModelConfig tiny_gradcheck_config(ModelVariant variant = ModelVariant::Full);

// Deterministic random inputs used by grad_check and the CLI.
std::vector<SampleRecord> random_batch(Rng& rng, const FeatureSchema& schema, std::size_t count,
                                       int64_t timestamp, int64_t snapshot_id);
OccasionSignalSeries random_series(Rng& rng, std::size_t num_signals, std::size_t num_steps,
                                   int64_t sampling_minutes, int64_t end_timestamp);

} // namespace moef
