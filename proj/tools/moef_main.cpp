// moef: synthetic-world generation, training, evaluation, ablation sweeps
// and model inspection from one binary.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure (non-finite values detected).

#include "moef/config.hpp"
#include "moef/errors.hpp"
#include "moef/harness.hpp"
#include "moef/metrics.hpp"
#include "moef/synthgen.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moef;

namespace {

struct CliOverrides {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> dataset_dir;
    std::optional<std::string> checkpoint;
    std::optional<std::string> variant;
    std::optional<std::size_t> num_experts;
    std::optional<std::size_t> epochs;
};

RunConfig resolve_config(const CliOverrides& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) {
        cfg = load_run_config(o.config_path);
    } else {
        cfg = run_config_from_json(json::object());
    }
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.world.seed = *o.seed;
        cfg.train.seed = *o.seed;
    }
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (o.dataset_dir) cfg.dataset_dir = *o.dataset_dir;
    if (o.checkpoint) cfg.checkpoint = *o.checkpoint;
    if (o.variant) cfg.variant = variant_from_string(*o.variant);
    if (o.num_experts) cfg.num_experts = *o.num_experts;
    if (o.epochs) cfg.train.epochs = *o.epochs;
    if (cfg.world.max_history > cfg.schema.max_seq_len) {
        throw ConfigError("world.max_history (" + std::to_string(cfg.world.max_history) +
                          ") exceeds schema.max_seq_len (" +
                          std::to_string(cfg.schema.max_seq_len) + ")");
    }
    return cfg;
}

void dump_resolved(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir + "/resolved_config.json");
    if (!out) throw DataError("cannot write resolved config under " + cfg.out_dir);
    out << run_config_to_json(cfg).dump(2) << '\n';
}

std::string default_checkpoint(const RunConfig& cfg) {
    return cfg.checkpoint.empty() ? cfg.out_dir + "/model.ckpt" : cfg.checkpoint;
}

struct DatasetBundle {
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> validation;
    OccasionSignalSeries series;
    Manifest manifest;
    bool has_manifest = false;
};

DatasetBundle load_bundle(const std::string& dir, const FeatureSchema& schema,
                          bool need_train, bool need_validation) {
    DatasetBundle b;
    const auto files = DatasetFiles::in_dir(dir);
    if (fs::exists(files.manifest)) {
        b.manifest = read_manifest(files.manifest);
        b.has_manifest = true;
    }
    if (need_train) b.train = read_dataset(files.train, schema);
    if (need_validation) b.validation = read_dataset(files.validation, schema);
    b.series = read_signals_file(files.signals);
    return b;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// ---- commands ------------------------------------------------------------

int cmd_generate(const RunConfig& cfg) {
    dump_resolved(cfg);
    fs::create_directories(cfg.dataset_dir);
    const auto schedule = build_schedule(cfg.world);
    const auto series = generate_signals(schedule, cfg.world);
    const auto stream = generate_interactions(schedule, cfg.world, series);
    const auto files = DatasetFiles::in_dir(cfg.dataset_dir);
    const auto report = write_dataset(stream, cfg.world.split_timestamp(), files, cfg.world,
                                      schedule, series, cfg.schema);
    std::cout << "dataset written to " << cfg.dataset_dir << "\n"
              << "  train: " << report.train_count << " records (" << report.train_clicks
              << " clicks), ground-truth AUC ceiling " << report.train_ceiling << "\n"
              << "  validation: " << report.val_count << " records (" << report.val_clicks
              << " clicks), ceiling " << report.val_ceiling << "\n"
              << "  validation promotion ceiling " << report.val_promo_ceiling
              << ", normal ceiling " << report.val_normal_ceiling << "\n";
    if (report.empty_split_warning) {
        std::cout << "warning: one side of the temporal split is empty\n";
    }
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    dump_resolved(cfg);
    auto bundle = load_bundle(cfg.dataset_dir, cfg.schema, /*train=*/true, /*val=*/false);

    ModelConfig mc = cfg.model_config();
    mc.num_signals = bundle.series.num_signals; // the signals file is authoritative
    MoefModel model(mc, cfg.seed);
    Adagrad optimizer(cfg.train.learning_rate, cfg.train.adagrad_epsilon);
    optimizer.init(model.parameters());

    const auto result = train(model, optimizer, bundle.train, bundle.series, cfg.train);
    fs::create_directories(cfg.out_dir);
    write_loss_trace(cfg.out_dir + "/loss_trace.csv", result.trace);
    const std::string ckpt = default_checkpoint(cfg);
    save_checkpoint(ckpt, model, optimizer, cfg.train, result.stats);
    std::cout << "variant " << to_string(cfg.variant) << ", K="
              << mc.effective_num_experts() << ": trained on " << bundle.train.size()
              << " records, logloss " << result.initial_loss << " -> " << result.final_loss
              << "\ncheckpoint: " << ckpt << "\nloss trace: " << cfg.out_dir
              << "/loss_trace.csv\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& scores_from) {
    dump_resolved(cfg);
    auto loaded = load_checkpoint(default_checkpoint(cfg));
    const FeatureSchema& schema = loaded.model->config().schema;
    auto bundle = load_bundle(cfg.dataset_dir, schema, /*train=*/false, /*val=*/true);

    const RegimeSchedule* schedule = bundle.has_manifest ? &bundle.manifest.schedule : nullptr;
    const GenerationReport* ceilings = bundle.has_manifest ? &bundle.manifest.report : nullptr;

    EvalReport report;
    if (!scores_from.empty()) {
        std::ifstream in(scores_from);
        if (!in) throw DataError("cannot open score override file: " + scores_from);
        std::vector<double> scores;
        double v = 0.0;
        while (in >> v) scores.push_back(v);
        report = evaluate_scores(bundle.validation, scores, schedule, ceilings);
    } else {
        report = evaluate(*loaded.model, bundle.validation, bundle.series, loaded.stats,
                          schedule, ceilings);
    }
    const json j = eval_report_to_json(report);
    std::cout << j.dump(2) << '\n';
    fs::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir + "/eval_report.json");
    out << j.dump(2) << '\n';
    return 0;
}

int cmd_ablate(const RunConfig& cfg, std::size_t num_seeds,
               const std::vector<std::string>& variant_names) {
    dump_resolved(cfg);
    auto bundle = load_bundle(cfg.dataset_dir, cfg.schema, /*train=*/true, /*val=*/true);
    const RegimeSchedule* schedule = bundle.has_manifest ? &bundle.manifest.schedule : nullptr;
    const GenerationReport* ceilings = bundle.has_manifest ? &bundle.manifest.report : nullptr;

    json results = json::array();
    std::vector<std::pair<std::string, std::vector<double>>> table;
    for (const std::string& name : variant_names) {
        const ModelVariant variant = variant_from_string(name);
        std::vector<double> aucs;
        for (std::size_t s = 0; s < num_seeds; ++s) {
            const uint64_t seed = cfg.seed + s;
            RunConfig run = cfg;
            run.variant = variant;
            ModelConfig mc = run.model_config();
            mc.num_signals = bundle.series.num_signals;
            MoefModel model(mc, seed);
            Adagrad optimizer(cfg.train.learning_rate, cfg.train.adagrad_epsilon);
            optimizer.init(model.parameters());
            TrainConfig tc = cfg.train;
            tc.seed = seed;
            const auto tr = train(model, optimizer, bundle.train, bundle.series, tc);
            const auto report = evaluate(model, bundle.validation, bundle.series, tr.stats,
                                         schedule, ceilings);
            aucs.push_back(report.overall.auc);
            results.push_back({{"variant", name},
                               {"seed", seed},
                               {"auc", report.overall.auc},
                               {"logloss", report.overall.logloss},
                               {"final_train_loss", tr.final_loss}});
            std::cout << name << " seed " << seed << ": validation AUC "
                      << report.overall.auc << "\n";
        }
        table.emplace_back(name, aucs);
    }

    std::cout << "\nvariant               auc_mean   auc_std    seeds\n";
    std::ofstream csv(cfg.out_dir + "/ablation.csv");
    csv << "variant,auc_mean,auc_std,seeds\n";
    csv.precision(17);
    for (const auto& [name, aucs] : table) {
        const double mu = mean_of(aucs);
        const double sd = std_of(aucs);
        std::cout << name;
        for (std::size_t i = name.size(); i < 22; ++i) std::cout << ' ';
        std::cout << mu << "   " << sd << "   " << aucs.size() << "\n";
        csv << name << ',' << mu << ',' << sd << ',' << aucs.size() << '\n';
    }
    std::ofstream jout(cfg.out_dir + "/ablation.json");
    jout << results.dump(2) << '\n';
    std::cout << "details: " << cfg.out_dir << "/ablation.{csv,json}\n";
    return 0;
}

int cmd_inspect(const RunConfig& cfg) {
    dump_resolved(cfg);
    auto loaded = load_checkpoint(default_checkpoint(cfg));
    const FeatureSchema& schema = loaded.model->config().schema;
    auto bundle = load_bundle(cfg.dataset_dir, schema, /*train=*/false, /*val=*/true);
    const RegimeSchedule* schedule = bundle.has_manifest ? &bundle.manifest.schedule : nullptr;
    const auto paths = export_inspection(*loaded.model, bundle.validation, bundle.series,
                                         loaded.stats, schedule, cfg.out_dir);
    std::cout << "gate weights: " << paths.alpha_csv << "\nexpert outputs: "
              << paths.experts_csv << "\n";
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg, std::size_t restarts, double tolerance) {
    dump_resolved(cfg);
    bool ok = true;
    for (std::size_t r = 0; r < restarts; ++r) {
        const auto report = grad_check(tiny_gradcheck_config(cfg.variant), cfg.seed + r);
        std::cout << "restart " << r << " (seed " << cfg.seed + r << ")\n";
        for (const auto& g : report) {
            std::cout << "  " << g.group;
            for (std::size_t i = g.group.size(); i < 28; ++i) std::cout << ' ';
            if (g.skipped) {
                std::cout << "skipped (frozen)\n";
                continue;
            }
            std::cout << g.max_rel_error << "  (" << g.entries << " entries)\n";
            ok &= g.max_rel_error < tolerance;
        }
    }
    std::cout << (ok ? "PASS" : "FAIL") << " at tolerance " << tolerance << "\n";
    if (!ok) throw NumericError("gradient check exceeded tolerance");
    return 0;
}

std::string config_reference_text() {
    std::string text = "Config keys (JSON document passed via --config):\n";
    for (const auto& k : config_key_reference()) {
        text += "  " + k.path;
        for (std::size_t i = k.path.size(); i < 38; ++i) text += ' ';
        text += k.description + "\n";
    }
    return text;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MOEF: frequency-domain occasion modeling for CTR prediction"};
    app.require_subcommand(1);
    app.footer(config_reference_text());

    CliOverrides o;
    app.add_option("--config", o.config_path, "JSON config file (defaults used when omitted)");
    app.add_option("--seed", o.seed, "override the master seed");
    app.add_option("--out", o.out_dir, "override out_dir");
    app.add_option("--data", o.dataset_dir, "override dataset_dir");

    auto* generate = app.add_subcommand("generate", "generate a synthetic dataset + signals");

    auto* train_cmd = app.add_subcommand("train", "train a model on a generated dataset");
    train_cmd->add_option("--variant", o.variant,
                          "full|one_expert|no_fft|no_lstm|transformer_encoder");
    train_cmd->add_option("--num-experts", o.num_experts, "expert count K");
    train_cmd->add_option("--epochs", o.epochs, "training epochs");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
    eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint path");
    std::string scores_from;
    eval_cmd->add_option("--scores-from", scores_from,
                         "score override file, one value per line (test hook)");

    auto* ablate = app.add_subcommand("ablate", "train and compare model variants");
    std::size_t ablate_seeds = 3;
    std::vector<std::string> ablate_variants = {"full", "one_expert", "no_fft", "no_lstm",
                                                "transformer_encoder"};
    ablate->add_option("--seeds", ablate_seeds, "seeds per variant");
    ablate->add_option("--variants", ablate_variants, "variants to sweep")->delimiter(',');
    ablate->add_option("--epochs", o.epochs, "training epochs");

    auto* inspect = app.add_subcommand("inspect", "export gate weights and expert outputs");
    inspect->add_option("--checkpoint", o.checkpoint, "checkpoint path");

    auto* gradcheck = app.add_subcommand("gradcheck",
                                         "finite-difference check on a tiny model");
    std::size_t restarts = 3;
    double tolerance = 1e-3;
    gradcheck->add_option("--restarts", restarts, "random restarts");
    gradcheck->add_option("--tolerance", tolerance, "max relative error allowed");
    gradcheck->add_option("--variant", o.variant, "model variant to check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help lands here with Success
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const RunConfig cfg = resolve_config(o);
        if (generate->parsed()) return cmd_generate(cfg);
        if (train_cmd->parsed()) return cmd_train(cfg);
        if (eval_cmd->parsed()) return cmd_eval(cfg, scores_from);
        if (ablate->parsed()) return cmd_ablate(cfg, ablate_seeds, ablate_variants);
        if (inspect->parsed()) return cmd_inspect(cfg);
        if (gradcheck->parsed()) return cmd_gradcheck(cfg, restarts, tolerance);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
