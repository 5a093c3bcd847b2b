#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cilp/model.hpp"
#include "cilp/provision.hpp"

namespace cilp {

/// Training loss became NaN or infinite.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainingRow {
    int episode = 0;
    int t = 0;
    /// Model inputs built from D̂_{t-1} and W_{t-1}.
    ModelInput input;
    std::vector<ActionFeature> actions;
    /// |W| x 3 true W_t, normalized, rows in input.graph.workload_ids order.
    Mat target;
    /// g^i per action: 1 iff taking it alone beats the empty decision on reward.
    std::vector<int> labels;
};

struct DatasetOptions {
    int episodes = 4;
    int horizon = 50;
    /// Probability of replacing the reactive decision with one random legal action.
    double explore = 0.1;
    std::vector<std::string> initial_hosts;
    /// Poisson arrival rate per interval; <= 0 fits it from the templates.
    double arrival_rate = 0.0;
    /// Explicit arrivals, one plan per episode; replaces synthesis and `episodes` when non-empty.
    std::vector<ArrivalPlan> plans;
};

/// Sees every recorded row with the state it was built from and the true demands.
using RowObserver = std::function<void(const SimState& state, const DemandMap& actual, const TrainingRow& row)>;

/// Rolls episodes under the reactive provisioner with random exploration and
/// records, at each interval, the model inputs, true next demands and labels.
std::vector<TrainingRow> generate_dataset(std::span<const Workload> templates,
                                          std::shared_ptr<const VmCatalog> catalog, const SimParams& params,
                                          const DatasetOptions& options, std::uint64_t seed,
                                          const RowObserver& observer = {});

/// Reward of the empty decision and of each single action, both scheduled on `actual`.
struct CandidateRewards {
    double empty = 0.0;
    std::vector<double> with_action;
};

CandidateRewards candidate_rewards(const SimState& state, const DemandMap& actual,
                                   std::span<const ActionFeature> actions, const Scheduler& scheduler);

/// g^i = 1 iff R̂ with the action strictly exceeds R̂ without it.
std::vector<int> label_candidates(const SimState& state, const DemandMap& actual,
                                  std::span<const ActionFeature> actions, const Scheduler& scheduler);

/// -(1/2)(g log l + (1 - g) log(1 - l)) with l clamped to [1e-7, 1 - 1e-7].
double bce(double g, double l);

/// Mean of bce over candidates; `likelihoods` is C x 1.
Tensor bce_loss(std::span<const int> labels, const Tensor& likelihoods);

/// Squared error summed over all entries, divided by the number of rows; 0 for no rows.
Tensor mse_loss(const Tensor& predicted, const Mat& target);

/// mse_loss plus the sum of per-candidate bce.
Tensor total_loss(const TrainingRow& row, const ModelOutput& output);

struct TrainConfig {
    double learning_rate = 5e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 64;
    int max_epochs = 100;
    int patience = 10;
    double split = 0.8;
    /// Rows kept together when shuffling.
    int chunk = 200;
    /// Wall-clock budget; <= 0 means unlimited.
    double max_seconds = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct FitResult {
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    double seconds = 0.0;
};

/// Decoupled-weight-decay Adam with early stopping. Leaves `model` at the
/// parameters of the best validation epoch.
FitResult fit(CilpModel& model, std::span<const TrainingRow> dataset, const TrainConfig& config);

/// Mean total_loss over `rows`.
double evaluate(const CilpModel& model, std::span<const TrainingRow> rows);

/// Adam with decoupled weight decay over every tensor in `params`.
class AdamW {
public:
    AdamW(ModelParams& params, const TrainConfig& config);
    /// Applies one update from the accumulated gradients, then clears them.
    void step();
    int steps() const { return steps_; }

private:
    ModelParams& params_;
    TrainConfig config_;
    std::map<std::string, Mat> m_;
    std::map<std::string, Mat> v_;
    int steps_ = 0;
};

/// Dataset on disk: `<stem>.csv` with per-workload demands and `<stem>.json`
/// with graphs, candidate features and labels.
void save_dataset(std::span<const TrainingRow> rows, const std::filesystem::path& csv_path);
std::vector<TrainingRow> load_dataset(const std::filesystem::path& csv_path);

void write_history(std::span<const EpochStats> history, const std::filesystem::path& path);

}  // namespace cilp
