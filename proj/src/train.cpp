#include "cilp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace cilp {
namespace {

constexpr double kProbFloor = 1e-7;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Mat target_matrix(const ScheduleGraph& graph, const DemandMap& actual, const FeatureScale& scale) {
    Mat m(static_cast<Eigen::Index>(graph.workload_ids.size()), kDemandFeatures);
    for (std::size_t i = 0; i < graph.workload_ids.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = scale.normalize(actual.at(graph.workload_ids[i]));
    }
    return m;
}

}  // namespace

CandidateRewards candidate_rewards(const SimState& state, const DemandMap& actual,
                                   std::span<const ActionFeature> actions, const Scheduler& scheduler) {
    CandidateRewards out;
    const ProvisioningDecision none;
    out.empty = what_if(state, actual, none, plan_schedule(state, actual, none, scheduler)).reward;
    out.with_action.resize(actions.size());
    parallel_for(actions.size(), [&](std::size_t i) {
        const auto decision = with_action(none, actions[i]);
        out.with_action[i] = what_if(state, actual, decision, plan_schedule(state, actual, decision, scheduler)).reward;
    });
    return out;
}

std::vector<int> label_candidates(const SimState& state, const DemandMap& actual,
                                  std::span<const ActionFeature> actions, const Scheduler& scheduler) {
    const auto rewards = candidate_rewards(state, actual, actions, scheduler);
    std::vector<int> labels;
    labels.reserve(actions.size());
    for (double r : rewards.with_action) labels.push_back(r > rewards.empty ? 1 : 0);
    return labels;
}

std::vector<TrainingRow> generate_dataset(std::span<const Workload> templates,
                                          std::shared_ptr<const VmCatalog> catalog, const SimParams& params,
                                          const DatasetOptions& options, std::uint64_t seed,
                                          const RowObserver& observer) {
    if (options.episodes < 1 || options.horizon < 1) throw ConfigError("dataset: episodes and horizon must be >= 1");
    if (!(options.explore >= 0.0 && options.explore <= 1.0)) throw ConfigError("dataset: explore must be in [0, 1]");
    const FeatureScale scale(*catalog);
    const BestFitScheduler scheduler;
    std::vector<std::string> initial = options.initial_hosts;
    if (initial.empty()) initial.push_back(catalog->types().front()->name);

    std::vector<TrainingRow> rows;
    const int episodes = options.plans.empty() ? options.episodes : static_cast<int>(options.plans.size());
    for (int e = 0; e < episodes; ++e) {
        const std::uint64_t episode_seed = splitmix(seed * 7919 + static_cast<std::uint64_t>(e));
        const TraceOptions trace_opts{params.interval_s};
        ArrivalPlan plan;
        if (!options.plans.empty()) {
            plan = options.plans[static_cast<std::size_t>(e)];
        } else if (options.arrival_rate > 0.0) {
            plan = synthesize_arrivals(templates, options.horizon, options.arrival_rate, episode_seed, trace_opts);
        } else {
            plan = synthesize_arrivals(templates, options.horizon, episode_seed, trace_opts);
        }
        SimState state = make_state(catalog, params, initial, splitmix(episode_seed));
        std::mt19937_64 explore_rng(splitmix(episode_seed + 1));
        std::uniform_real_distribution<double> coin(0.0, 1.0);

        for (int t = 0; t < options.horizon; ++t) {
            admit_due(state, plan);
            const auto previous = previous_demands(state);
            const auto actual = true_demands(state);
            auto actions = candidates(state, previous);

            TrainingRow row;
            row.episode = e;
            row.t = t;
            row.input = build_input(state, previous, actions);
            row.target = target_matrix(row.input.graph, actual, scale);
            row.labels = label_candidates(state, actual, actions, scheduler);
            row.actions = actions;
            if (observer) observer(state, actual, row);
            rows.push_back(std::move(row));

            ProvisioningDecision decision = reactive_threshold_decide(state, previous);
            if (!actions.empty() && coin(explore_rng) < options.explore) {
                std::uniform_int_distribution<std::size_t> pick(0, actions.size() - 1);
                decision = with_action({}, actions[pick(explore_rng)]);
            }
            step(state, actual, decision, plan_schedule(state, previous, decision, scheduler));
        }
    }
    return rows;
}

double bce(double g, double l) {
    const double p = std::clamp(l, kProbFloor, 1.0 - kProbFloor);
    return -0.5 * (g * std::log(p) + (1.0 - g) * std::log(1.0 - p));
}

Tensor bce_loss(std::span<const int> labels, const Tensor& likelihoods) {
    if (static_cast<Eigen::Index>(labels.size()) != likelihoods.rows() || likelihoods.cols() != 1) {
        throw std::invalid_argument("bce_loss: labels and likelihoods disagree in length");
    }
    if (labels.empty()) return Tensor::scalar(0.0);
    Mat g(static_cast<Eigen::Index>(labels.size()), 1);
    for (std::size_t i = 0; i < labels.size(); ++i) g(static_cast<Eigen::Index>(i), 0) = labels[i];
    const auto p = ad::clamp(likelihoods, kProbFloor, 1.0 - kProbFloor);
    const auto gt = Tensor::constant(g);
    const auto one_minus_g = Tensor::constant((1.0 - g.array()).matrix());
    const auto ones = Tensor::constant(Mat::Ones(g.rows(), 1));
    const auto ll = ad::cwise_product(gt, ad::log(p)) + ad::cwise_product(one_minus_g, ad::log(ones - p));
    return ad::mean(ll) * -0.5;
}

Tensor mse_loss(const Tensor& predicted, const Mat& target) {
    if (predicted.rows() != target.rows() || predicted.cols() != target.cols()) {
        throw std::invalid_argument("mse_loss: shape mismatch");
    }
    if (target.rows() == 0) return Tensor::scalar(0.0);
    const auto diff = predicted - Tensor::constant(target);
    return ad::sum(ad::square(diff)) * (1.0 / static_cast<double>(target.rows()));
}

Tensor total_loss(const TrainingRow& row, const ModelOutput& output) {
    const auto mse = mse_loss(output.demands, row.target);
    if (row.labels.empty()) return mse;
    return mse + bce_loss(row.labels, output.likelihoods) * static_cast<double>(row.labels.size());
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("betas must be in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (batch_size < 1 || max_epochs < 1 || patience < 1 || chunk < 1) {
        throw ConfigError("batch_size, max_epochs, patience and chunk must be >= 1");
    }
    if (!(split > 0.0 && split < 1.0)) throw ConfigError("split must be in (0, 1)");
}

AdamW::AdamW(ModelParams& params, const TrainConfig& config) : params_(params), config_(config) {
    for (const auto& [name, t] : params_.tensors()) {
        m_.emplace(name, Mat::Zero(t.rows(), t.cols()));
        v_.emplace(name, Mat::Zero(t.rows(), t.cols()));
    }
}

void AdamW::step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, steps_);
    const double c2 = 1.0 - std::pow(config_.beta2, steps_);
    for (const auto& [name, t] : params_.tensors()) {
        Tensor p = t;
        const Mat g = p.grad();
        auto& m = m_.at(name);
        auto& v = v_.at(name);
        m = config_.beta1 * m + (1.0 - config_.beta1) * g;
        v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g);
        const Mat update = (m / c1).array() / ((v / c2).array().sqrt() + config_.epsilon);
        Mat& value = p.mutable_value();
        value -= config_.learning_rate * (update + config_.weight_decay * value);
        p.zero_grad();
    }
}

double evaluate(const CilpModel& model, std::span<const TrainingRow> rows) {
    if (rows.empty()) return 0.0;
    std::vector<double> losses(rows.size());
    parallel_for(rows.size(), [&](std::size_t i) { losses[i] = total_loss(rows[i], model.forward(rows[i].input)).item(); });
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(rows.size());
}

FitResult fit(CilpModel& model, std::span<const TrainingRow> dataset, const TrainConfig& config) {
    config.validate();
    if (dataset.empty()) throw ConfigError("fit: dataset is empty");
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(dataset.size()) * config.split));
    n_train = std::clamp<std::size_t>(n_train, 1, dataset.size());
    const auto train = dataset.subspan(0, n_train);
    const auto val = n_train < dataset.size() ? dataset.subspan(n_train) : train;

    std::vector<std::pair<std::size_t, std::size_t>> chunks;
    for (std::size_t s = 0; s < train.size(); s += static_cast<std::size_t>(config.chunk)) {
        chunks.emplace_back(s, std::min(train.size(), s + static_cast<std::size_t>(config.chunk)));
    }

    std::mt19937_64 rng(config.seed);
    AdamW optimizer(model.params(), config);
    model.params().zero_grad();
    FitResult result;
    result.best_val_loss = evaluate(model, val);
    auto best = model.params().snapshot();
    int since_best = 0;
    bool out_of_time = false;

    for (int epoch = 1; epoch <= config.max_epochs && !out_of_time; ++epoch) {
        std::shuffle(chunks.begin(), chunks.end(), rng);
        std::vector<std::size_t> order;
        for (const auto& [a, b] : chunks) {
            for (std::size_t i = a; i < b; ++i) order.push_back(i);
        }

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
            const double scale = 1.0 / static_cast<double>(end - b);
            for (std::size_t k = b; k < end; ++k) {
                const auto& row = train[order[k]];
                const auto loss = total_loss(row, model.forward(row.input));
                const double value = loss.item();
                if (!std::isfinite(value)) {
                    throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) +
                                        " (episode " + std::to_string(row.episode) + ", t " +
                                        std::to_string(row.t) + ")");
                }
                epoch_loss += value;
                ad::backward(loss * scale);
            }
            seen += end - b;
            optimizer.step();
            if (config.max_seconds > 0.0 && elapsed() > config.max_seconds) {
                out_of_time = true;
                break;
            }
        }
        if (!model.params().all_finite()) {
            throw TrainingError("non-finite parameters after epoch " + std::to_string(epoch));
        }

        EpochStats stats{epoch, epoch_loss / static_cast<double>(std::max<std::size_t>(seen, 1)), evaluate(model, val)};
        if (!std::isfinite(stats.val_loss)) {
            throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        result.history.push_back(stats);
        if (stats.val_loss < result.best_val_loss) {
            result.best_val_loss = stats.val_loss;
            result.best_epoch = epoch;
            best = model.params().snapshot();
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    model.params().restore(best);
    result.seconds = elapsed();
    return result;
}

}  // namespace cilp
