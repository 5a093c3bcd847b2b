// Experiment runner: simulate, train, generate-data, compare, sweep-gamma.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cilp/episode.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonFlags {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<double> gamma;
    std::optional<int> intervals;
    std::optional<std::string> provisioner;
    std::optional<std::string> checkpoint;
    std::optional<std::string> out;
};

void add_common(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config, "Episode config JSON");
    app->add_option("--seed", f.seed, "Random seed");
    app->add_option("--gamma", f.gamma, "Cost weight in the reward");
    app->add_option("--intervals", f.intervals, "Number of scheduling intervals");
    app->add_option("--provisioner", f.provisioner, "cilp | reactive | oracle | none");
    app->add_option("--checkpoint", f.checkpoint, "Model checkpoint path");
    app->add_option("--out", f.out, "Output path");
}

cilp::EpisodeConfig resolve(const CommonFlags& f) {
    cilp::EpisodeConfig c = f.config ? cilp::load_episode_config(*f.config) : cilp::parse_episode_config("{}");
    if (f.seed) c.seed = *f.seed;
    if (f.gamma) c.params.gamma = *f.gamma;
    if (f.intervals) c.intervals = *f.intervals;
    if (f.provisioner) c.provisioner = *f.provisioner;
    if (f.checkpoint) c.checkpoint = *f.checkpoint;
    if (f.out) c.out_dir = *f.out;
    c.validate();
    return c;
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, int count) {
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
    std::iota(seeds.begin(), seeds.end(), first);
    return seeds;
}

void emit(const std::optional<std::string>& path, const std::string& text) {
    if (!path) {
        std::cout << text;
        return;
    }
    std::ofstream out(*path);
    if (!out) throw std::runtime_error("cannot write '" + *path + "'");
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cloud provisioning co-simulation and imitation-learned provisioner"};
    app.require_subcommand(1);

    CommonFlags sim_flags;
    auto* simulate = app.add_subcommand("simulate", "Run one episode and print its summary");
    add_common(simulate, sim_flags);

    CommonFlags train_flags;
    std::optional<std::string> dataset_path;
    auto* train = app.add_subcommand("train", "Generate a dataset (or load one) and fit a model");
    add_common(train, train_flags);
    train->add_option("--dataset", dataset_path, "Existing dataset CSV instead of generating one");

    CommonFlags data_flags;
    auto* generate = app.add_subcommand("generate-data", "Roll exploration episodes and write a labelled dataset");
    add_common(generate, data_flags);

    CommonFlags cmp_flags;
    std::vector<std::string> provisioners{"none", "reactive", "oracle"};
    int cmp_seeds = 5;
    auto* cmp = app.add_subcommand("compare", "Mean and std of r, cost and QoS across seeds per provisioner");
    add_common(cmp, cmp_flags);
    cmp->add_option("--provisioners", provisioners, "Provisioners to compare")->delimiter(',');
    cmp->add_option("--seeds", cmp_seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);

    CommonFlags sweep_flags;
    std::vector<double> gammas{0.0, 0.25, 0.5, 1.0};
    int sweep_seeds = 5;
    auto* sweep = app.add_subcommand("sweep-gamma", "Per-gamma metrics table");
    add_common(sweep, sweep_flags);
    sweep->add_option("--gammas", gammas, "Gamma values")->delimiter(',');
    sweep->add_option("--seeds", sweep_seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*simulate) {
            const auto config = resolve(sim_flags);
            const auto summary = cilp::run_episode(config);
            std::cout << cilp::summary_json(summary);
        } else if (*train) {
            auto config = resolve(train_flags);
            if (!train_flags.checkpoint) throw cilp::ConfigError("train requires --checkpoint for the output model");
            std::vector<cilp::TrainingRow> rows;
            if (dataset_path) {
                rows = cilp::load_dataset(*dataset_path);
            } else {
                const auto catalog = cilp::resolve_catalog(config);
                auto opts = config.dataset;
                opts.initial_hosts = cilp::resolve_initial_hosts(config, *catalog);
                opts.arrival_rate = config.arrival_rate;
                rows = cilp::generate_dataset(cilp::resolve_templates(config), catalog, config.params, opts,
                                              config.seed);
            }
            cilp::CilpModel model(config.model, config.train.seed);
            const auto result = cilp::fit(model, rows, config.train);
            cilp::save_checkpoint(model, *train_flags.checkpoint);
            std::filesystem::path history = *train_flags.checkpoint;
            history.replace_extension(".history.csv");
            if (train_flags.out) history = std::filesystem::path(*train_flags.out);
            cilp::write_history(result.history, history);
            std::cout << "rows " << rows.size() << ", epochs " << result.history.size() << ", best epoch "
                      << result.best_epoch << ", best val loss " << result.best_val_loss << ", "
                      << result.seconds << " s\n";
        } else if (*generate) {
            const auto config = resolve(data_flags);
            if (!data_flags.out) throw cilp::ConfigError("generate-data requires --out <dataset.csv>");
            const auto catalog = cilp::resolve_catalog(config);
            auto opts = config.dataset;
            opts.initial_hosts = cilp::resolve_initial_hosts(config, *catalog);
            opts.arrival_rate = config.arrival_rate;
            const auto rows = cilp::generate_dataset(cilp::resolve_templates(config), catalog, config.params, opts,
                                                     config.seed);
            cilp::save_dataset(rows, *data_flags.out);
            std::cout << "wrote " << rows.size() << " rows to " << *data_flags.out << "\n";
        } else if (*cmp) {
            auto config = resolve(cmp_flags);
            config.out_dir.reset();
            std::shared_ptr<const cilp::CilpModel> model;
            if (config.checkpoint) model = std::make_shared<const cilp::CilpModel>(cilp::load_checkpoint(*config.checkpoint));
            const auto rows = cilp::compare(config, provisioners, seed_range(config.seed, cmp_seeds), model);
            emit(cmp_flags.out, cilp::compare_csv(rows));
        } else if (*sweep) {
            auto config = resolve(sweep_flags);
            config.out_dir.reset();
            if (!sweep_flags.provisioner) config.provisioner = "oracle";
            std::shared_ptr<const cilp::CilpModel> model;
            if (config.checkpoint) model = std::make_shared<const cilp::CilpModel>(cilp::load_checkpoint(*config.checkpoint));
            const auto rows = cilp::sweep_gamma(config, gammas, seed_range(config.seed, sweep_seeds), model);
            emit(sweep_flags.out, cilp::sweep_csv(rows));
        }
    } catch (const cilp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const cilp::ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
