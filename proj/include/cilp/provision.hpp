#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cilp/cosim.hpp"
#include "cilp/model.hpp"

namespace cilp {

/// What a provisioner hands to the twin for one interval.
struct DecisionResult {
    ProvisioningDecision decision;
    Schedule schedule;
    /// Demands the decision was planned with: Ŵ_t, W_t for the oracle, or W_{t-1}.
    DemandMap forecast;
};

/// One deallocation per active host, then one provision per catalog type.
/// Provisions are dropped at max_hosts and the last host is never offered
/// for deallocation. Features use `demands` over the current placements.
std::vector<ActionFeature> candidates(const SimState& state, const DemandMap& demands);

/// `decision` plus one more action.
ProvisioningDecision with_action(const ProvisioningDecision& decision, const ActionFeature& action);

/// True iff `decision` passes validate_decision on `state`.
bool is_legal(const SimState& state, const ProvisioningDecision& decision);

/// Likelihood scores for `actions` given a tentative decision and schedule.
using CandidateScorer = std::function<std::vector<double>(const ProvisioningDecision& decision,
                                                          const Schedule& schedule,
                                                          std::span<const ActionFeature> actions)>;

struct CilpOptions {
    /// Minimum QoS gain for accepting an action.
    double eta = 1e-6;
};

struct CilpTrace {
    DecisionResult result;
    /// Candidate evaluations performed by the loop.
    int iterations = 0;
    /// Bound on iterations: active hosts plus catalog types.
    int iteration_limit = 0;
    /// QoS of the empty decision followed by the QoS after each accepted action.
    std::vector<double> accepted_qos;
};

/// Two-phase loop: forecast Ŵ_t, schedule the empty decision, then repeatedly
/// try the highest-scoring remaining action and keep it only when the
/// simulated QoS improves by at least eta. Stops at the first rejection.
CilpTrace cilp_decide(const CilpModel& model, const SimState& state, const DemandMap& previous,
                      const Scheduler& scheduler, const CilpOptions& options = {});

/// The same loop with an external forecast and scorer.
CilpTrace cilp_decide(const SimState& state, const DemandMap& forecast, const CandidateScorer& scorer,
                      const Scheduler& scheduler, const CilpOptions& options = {});

struct ReactiveOptions {
    double high = 0.8;
    double low = 0.3;
};

/// Threshold autoscaling on last interval's utilization ratio.
ProvisioningDecision reactive_threshold_decide(const SimState& state, const DemandMap& previous,
                                               const ReactiveOptions& options = {});

/// Greedy search with the true demands: adds the single action that most
/// improves reward until none does or `depth` actions are taken.
ProvisioningDecision oracle_decide(const SimState& state, const DemandMap& actual, const Scheduler& scheduler,
                                   int depth);

/// Worker count for parallel what-if evaluation: CILP_SIM_THREADS when set, else hardware concurrency.
int sim_threads();

/// Runs fn(0..n-1) on up to sim_threads() workers; results are indexed so order never matters.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

class Provisioner {
public:
    virtual ~Provisioner() = default;
    virtual std::string_view name() const = 0;
    /// `state` has this interval's arrivals admitted; `previous` is W_{t-1}.
    virtual DecisionResult decide(const SimState& state, const DemandMap& previous, const Scheduler& scheduler) = 0;
};

class NullProvisioner final : public Provisioner {
public:
    std::string_view name() const override { return "none"; }
    DecisionResult decide(const SimState& state, const DemandMap& previous, const Scheduler& scheduler) override;
};

class ReactiveProvisioner final : public Provisioner {
public:
    explicit ReactiveProvisioner(ReactiveOptions options = {}) : options_(options) {}
    std::string_view name() const override { return "reactive"; }
    DecisionResult decide(const SimState& state, const DemandMap& previous, const Scheduler& scheduler) override;

private:
    ReactiveOptions options_;
};

class OracleProvisioner final : public Provisioner {
public:
    static constexpr int kDefaultDepth = 8;
    explicit OracleProvisioner(int depth = kDefaultDepth) : depth_(depth) {}
    std::string_view name() const override { return "oracle"; }
    DecisionResult decide(const SimState& state, const DemandMap& previous, const Scheduler& scheduler) override;

private:
    int depth_;
};

class CilpProvisioner final : public Provisioner {
public:
    CilpProvisioner(std::shared_ptr<const CilpModel> model, CilpOptions options = {})
        : model_(std::move(model)), options_(options) {}
    std::string_view name() const override { return "cilp"; }
    DecisionResult decide(const SimState& state, const DemandMap& previous, const Scheduler& scheduler) override;

private:
    std::shared_ptr<const CilpModel> model_;
    CilpOptions options_;
};

/// "cilp" needs a model; the others ignore it. Throws ConfigError for unknown names.
std::unique_ptr<Provisioner> make_provisioner(std::string_view name, std::shared_ptr<const CilpModel> model = nullptr);

}  // namespace cilp
