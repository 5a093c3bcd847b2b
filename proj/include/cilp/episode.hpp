#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cilp/provision.hpp"
#include "cilp/train.hpp"

namespace cilp {

/// Everything needed to run, train or compare at desk scale. Loaded from JSON.
struct EpisodeConfig {
    SimParams params;
    int intervals = 200;
    std::uint64_t seed = 0;
    /// Seed for synthetic trace templates; kept apart from `seed` so seeds vary arrivals only.
    std::uint64_t trace_seed = 0;
    std::optional<std::filesystem::path> catalog_path;
    std::optional<int> max_hosts;
    std::optional<std::filesystem::path> trace_path;
    SyntheticTraceSpec synthetic;
    /// <= 0 fits the rate from the templates.
    double arrival_rate = 0.0;
    /// Hosts at t = 0; empty means one of each catalog type.
    std::vector<std::string> initial_hosts;
    std::string provisioner = "reactive";
    std::optional<std::filesystem::path> checkpoint;
    std::optional<std::filesystem::path> out_dir;
    ModelConfig model;
    TrainConfig train;
    DatasetOptions dataset;

    void validate() const;
};

/// Parses the JSON form; unknown keys and bad values raise ConfigError.
EpisodeConfig parse_episode_config(std::string_view json_text);
EpisodeConfig load_episode_config(const std::filesystem::path& path);

std::shared_ptr<const VmCatalog> resolve_catalog(const EpisodeConfig& config);
std::vector<Workload> resolve_templates(const EpisodeConfig& config);
std::vector<std::string> resolve_initial_hosts(const EpisodeConfig& config, const VmCatalog& catalog);

struct EpisodeSummary {
    std::string provisioner;
    std::uint64_t seed = 0;
    int intervals = 0;
    double mean_r = 0.0;
    double mean_cost_usd = 0.0;
    double mean_qos = 0.0;
    double mean_reward = 0.0;
    double total_energy_kwh = 0.0;
    double mean_response_s = 0.0;
    double sla_fraction = 0.0;
    int migrations = 0;
    double provisioning_overhead_s = 0.0;
    double wall_time_s = 0.0;
    std::vector<QoSReport> reports;
};

/// Runs one episode; writes intervals.csv and summary.json when out_dir is set.
/// `model` is required for the cilp provisioner unless config.checkpoint is set.
EpisodeSummary run_episode(const EpisodeConfig& config, std::shared_ptr<const CilpModel> model = nullptr);

std::string intervals_csv(const EpisodeSummary& summary);
std::string summary_json(const EpisodeSummary& summary);

struct TrainedModel {
    std::shared_ptr<CilpModel> model;
    FitResult fit;
    std::size_t dataset_rows = 0;
};

/// Generates a dataset from the config's traces and fits a fresh model on it.
TrainedModel train_model(const EpisodeConfig& config);

struct CompareRow {
    std::string label;
    int runs = 0;
    double r_mean = 0.0, r_std = 0.0;
    double cost_mean = 0.0, cost_std = 0.0;
    double qos_mean = 0.0, qos_std = 0.0;
    double reward_mean = 0.0, reward_std = 0.0;
    double train_time_s = 0.0;
};

/// Aggregates episode summaries (one per seed) into mean and sample std.
CompareRow aggregate(const std::string& label, std::span<const EpisodeSummary> runs, double train_time_s = 0.0);

/// Every provisioner in `provisioners` over every seed.
std::vector<CompareRow> compare(const EpisodeConfig& base, std::span<const std::string> provisioners,
                                std::span<const std::uint64_t> seeds, std::shared_ptr<const CilpModel> model = nullptr,
                                double train_time_s = 0.0);
std::string compare_csv(std::span<const CompareRow> rows);

struct GammaRow {
    double gamma = 0.0;
    CompareRow stats;
};

std::vector<GammaRow> sweep_gamma(const EpisodeConfig& base, std::span<const double> gammas,
                                  std::span<const std::uint64_t> seeds, std::shared_ptr<const CilpModel> model = nullptr);
std::string sweep_csv(std::span<const GammaRow> rows);

}  // namespace cilp
