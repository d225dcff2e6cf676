#include <cstdio>
#include <functional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "lanegame/pipeline.hpp"

using namespace lanegame;
using namespace lanegame::pipeline;

namespace {

// Flag values land here first; only flags actually given override the config file.
struct Overrides {
    std::vector<std::function<void(PipelineConfig&)>> apply;

    template <typename T>
    CLI::Option* add(CLI::App& app, const std::string& name, T PipelineConfig::*field, const std::string& help) {
        auto value = std::make_shared<T>();
        auto* opt = app.add_option(name, *value, help);
        apply.push_back([opt, value, field](PipelineConfig& c) {
            if (opt->count() > 0) c.*field = *value;
        });
        return opt;
    }

    template <typename T>
    CLI::Option* add_sim(CLI::App& app, const std::string& name, T evolution::SimConfig::*field, const std::string& help) {
        auto value = std::make_shared<T>();
        auto* opt = app.add_option(name, *value, help);
        apply.push_back([opt, value, field](PipelineConfig& c) {
            if (opt->count() > 0) c.sim.*field = *value;
        });
        return opt;
    }

    CLI::Option* flag(CLI::App& app, const std::string& name, bool PipelineConfig::*field, const std::string& help) {
        auto* opt = app.add_flag(name, help);
        apply.push_back([opt, field](PipelineConfig& c) {
            if (opt->count() > 0) c.*field = true;
        });
        return opt;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lane-changing social dilemma pipeline: extraction, clustering, QRE estimation, games, simulation"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(kVersion));

    std::string config_path;
    app.add_option("--config", config_path, "Sectioned key/value config file")->check(CLI::ExistingFile);
    Overrides ov;
    ov.add(app, "--seed", &PipelineConfig::seed, "Master seed for every random stream");
    ov.add(app, "--out", &PipelineConfig::out, "Output directory");

    auto* synth = app.add_subcommand("synth", "Write synthetic labeled events (or a trajectory scene with --scene)");
    ov.flag(*synth, "--scene", &PipelineConfig::synth_scene, "Write tracks.csv and map.csv instead");
    ov.add(*synth, "--events", &PipelineConfig::synth_events, "Number of synthetic labeled events");
    ov.add(*synth, "--beta-sigma", &PipelineConfig::synth_beta_sigma, "Std of the true utility coefficients");
    ov.add(*synth, "--scene-events", &PipelineConfig::scene_events, "Scripted lane changes in the scene");
    ov.add(*synth, "--av-fraction", &PipelineConfig::scene_av_fraction, "Share of AV tracks in the scene");

    auto* extract = app.add_subcommand("extract", "Detect lane-change events in trajectories");
    ov.add(*extract, "--tracks", &PipelineConfig::tracks, "Trajectory CSV (default: <out>/tracks.csv)");
    ov.add(*extract, "--map", &PipelineConfig::map, "Lane map CSV (default: <out>/map.csv)");

    auto* cluster = app.add_subcommand("cluster", "Label cooperative and defective behavior with k-means");
    ov.add(*cluster, "--events", &PipelineConfig::events, "Events CSV (default: <out>/events.csv)");
    ov.add(*cluster, "--restarts", &PipelineConfig::cluster_restarts, "k-means restarts");

    auto* fit = app.add_subcommand("fit", "Estimate the QRE utility model and the null model");
    ov.add(*fit, "--events", &PipelineConfig::labeled_events, "Labeled events CSV (default: <out>/events_labeled.csv)");
    ov.add(*fit, "--l1-weight", &PipelineConfig::l1_weight, "L1 penalty weight");
    ov.add(*fit, "--max-iterations", &PipelineConfig::fit_max_iterations, "Optimizer iteration cap");

    auto* validate = app.add_subcommand("validate", "Likelihood ratio, VIF and prediction metrics");
    ov.add(*validate, "--events", &PipelineConfig::labeled_events, "Labeled events CSV");
    ov.add(*validate, "--cv-splits", &PipelineConfig::cv_splits, "Random train/test splits (0 = none)");
    ov.add(*validate, "--train-share", &PipelineConfig::train_share, "Training share per split");

    auto* games = app.add_subcommand("games", "Payoff tables and social dilemma classification");
    ov.add(*games, "--events", &PipelineConfig::labeled_events, "Labeled events CSV");

    auto* simulate = app.add_subcommand("simulate", "Evolutionary lattice simulation over the payoff pool");
    ov.flag(*simulate, "--sweep", &PipelineConfig::sweep, "Run the full parameter grid");
    ov.add_sim(*simulate, "--neighbor-size", &evolution::SimConfig::neighbor_size, "Manhattan interaction radius");
    ov.add_sim(*simulate, "--noise-k", &evolution::SimConfig::noise_k, "Fermi noise K (> 0)");
    ov.add_sim(*simulate, "--mpr", &evolution::SimConfig::mpr, "AV market penetration rate");
    ov.add_sim(*simulate, "--contact-freq", &evolution::SimConfig::contact_freq, "Grid shuffles per step");
    ov.add_sim(*simulate, "--steps", &evolution::SimConfig::steps, "Time steps per run");
    ov.add_sim(*simulate, "--reps", &evolution::SimConfig::reps, "Replications per config");
    ov.add_sim(*simulate, "--width", &evolution::SimConfig::width, "Grid width");
    ov.add_sim(*simulate, "--height", &evolution::SimConfig::height, "Grid height");
    ov.add(*simulate, "--threads", &PipelineConfig::threads, "Worker threads (results do not depend on it)");

    auto* report = app.add_subcommand("report", "Summarize artifacts and verify the manifest chain");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        PipelineConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        for (auto& f : ov.apply) f(cfg);
        cfg.validate();
        DirectoryLock lock(cfg.out);
        if (synth->parsed()) run_synth(cfg);
        else if (extract->parsed()) run_extract(cfg);
        else if (cluster->parsed()) run_cluster(cfg);
        else if (fit->parsed()) run_fit(cfg);
        else if (validate->parsed()) run_validate(cfg);
        else if (games->parsed()) run_games(cfg);
        else if (simulate->parsed()) run_simulate(cfg);
        else if (report->parsed()) run_report(cfg);
        return 0;
    } catch (const UsageError& e) {
        fmt::print(stderr, "usage error: {}\n", e.what());
        return 1;
    } catch (const DataError& e) {
        fmt::print(stderr, "data error: {}\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        fmt::print(stderr, "numeric failure: {}\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
}
