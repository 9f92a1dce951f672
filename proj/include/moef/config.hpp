#pragma once

#include "moef/mixture.hpp"
#include "moef/synthgen.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace moef {

// Optimizer and loop settings (paper defaults: Adagrad 0.01, batch 256).
struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t batch_size = 256;
    std::size_t epochs = 1;
    uint64_t seed = 42;
    double adagrad_epsilon = 1e-8;
};

// The whole experiment document: world generation, feature schema, model
// sizes and training settings, plus file locations. Parsed from JSON with
// unknown keys rejected; dumping it back yields the resolved configuration
// (defaults filled in), which is itself a valid input.
struct RunConfig {
    uint64_t seed = 42;
    std::string out_dir = "runs/default";
    std::string dataset_dir = "data/default";
    std::string checkpoint;

    WorldConfig world = WorldConfig::defaults();
    FeatureSchema schema = FeatureSchema::default_schema();
    WindowingConfig windowing;
    EncoderConfig encoder;

    ModelVariant variant = ModelVariant::Full;
    std::size_t num_experts = 2;
    ExpertSizes expert_sizes;
    std::vector<std::size_t> head_sizes = {144, 64, 1};
    std::size_t gate_hidden = 64;

    TrainConfig train;

    // Assembled model configuration (schema + windowing + encoder + sizes).
    ModelConfig model_config() const;
};

nlohmann::json schema_to_json(const FeatureSchema& s);
FeatureSchema schema_from_json(const nlohmann::json& j);

nlohmann::json model_config_to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& t);
TrainConfig train_config_from_json(const nlohmann::json& j, uint64_t default_seed);

// Parses and validates a run-config document; any key not in the reference
// table is a ConfigError naming the offending path.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& c); // fully resolved
RunConfig load_run_config(const std::string& path);

struct ConfigKeyDoc {
    std::string path;
    std::string description;
};

// Reference table of every accepted config key; drives both validation
// and the CLI help text.
const std::vector<ConfigKeyDoc>& config_key_reference();

} // namespace moef
