#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cilp/domain.hpp"
#include "cilp/sched.hpp"

namespace cilp {

struct SimParams {
    double interval_s = 300.0;
    /// QoS weights for energy, response time and SLA violations; must sum to 1.
    double alpha = 1.0 / 3.0;
    double beta = 1.0 / 3.0;
    double delta = 1.0 / 3.0;
    /// Cost weight in the reward r - gamma * cost_norm.
    double gamma = 0.5;
    double migration_rate_gb_per_s = 1.0;

    void validate() const;
    friend bool operator==(const SimParams&, const SimParams&) = default;
};

/// Cumulative episode totals.
struct Ledger {
    int arrived = 0;
    int completed = 0;
    int sla_violations = 0;
    int migrations = 0;
    int provisions = 0;
    int deallocations = 0;
    double energy_kwh = 0.0;
    double cost_usd = 0.0;
    double total_response_s = 0.0;
    double waiting_s = 0.0;
    double provision_overhead_s = 0.0;

    friend bool operator==(const Ledger&, const Ledger&) = default;
};

struct QoSReport {
    int t = 0;
    /// Interval-average utilization ratio, placed cpu over host capacity.
    double r = 0.0;
    double cost_usd = 0.0;
    double cost_norm = 0.0;
    double energy_wh = 0.0;
    double q_e = 0.0;
    double q_r = 0.0;
    double q_sla = 0.0;
    double qos = 1.0;
    double reward = 0.0;
    int active_hosts = 0;
    int live_workloads = 0;
    int queued_workloads = 0;
    int completed = 0;
    int sla_violations = 0;
    int migrations = 0;
    int provisions = 0;
    int deallocations = 0;
    double mean_response_s = 0.0;
    double provision_overhead_s = 0.0;

    friend bool operator==(const QoSReport&, const QoSReport&) = default;
};

/// Full twin state between intervals. `t` is the next interval to simulate.
struct SimState {
    std::shared_ptr<const VmCatalog> catalog;
    SimParams params;
    int t = 0;
    int next_host_id = 0;
    /// Active hosts, sorted by id.
    std::vector<Host> hosts;
    /// Every workload that has arrived and not completed, placed or queued.
    std::map<int, Workload> workloads;
    Placements placements;
    /// Unplaced workloads in arrival order.
    std::deque<int> queue;
    /// Demands observed in the previous interval.
    DemandMap last_demands;
    std::mt19937_64 rng;
    Ledger ledger;
    std::optional<QoSReport> last_report;

    const Host* find_host(int id) const;

    friend bool operator==(const SimState&, const SimState&) = default;
};

SimState make_state(std::shared_ptr<const VmCatalog> catalog, const SimParams& params,
                    std::span<const std::string> initial_hosts, std::uint64_t seed);

/// Adds newly arrived workloads to the wait queue.
void admit(SimState& state, std::vector<Workload> arrivals);

/// Admits every arrival in `plan` scheduled for interval `state.t`.
void admit_due(SimState& state, const ArrivalPlan& plan);

/// Trace demands at `state.t` for every workload in the system.
DemandMap true_demands(const SimState& state);

/// W_{t-1} for every workload in the system; newly arrived workloads get zeros.
DemandMap previous_demands(const SimState& state);

/// Throws std::invalid_argument if the decision references unknown hosts or
/// types, exceeds max_hosts, or deallocates every remaining host.
void validate_decision(const SimState& state, const ProvisioningDecision& decision);

/// Existing hosts followed by the hosts `decision` would create, with the ids
/// they will receive in `step`.
std::vector<HostSlot> planned_hosts(const SimState& state, const ProvisioningDecision& decision);

/// Schedules all workloads in `state` under `decision` with the given demands.
Schedule plan_schedule(const SimState& state, const DemandMap& demands, const ProvisioningDecision& decision,
                       const Scheduler& scheduler);

/// Advances one interval. Applies the decision and schedule, repairs any
/// placement the actual `demands` overload, then accounts utilization, cost,
/// energy, completions and SLA violations. Throws std::invalid_argument when
/// the schedule places work on an unknown host.
QoSReport step(SimState& state, const DemandMap& demands, const ProvisioningDecision& decision,
               const Schedule& schedule);

/// `step` on a copy; `state` is left untouched.
QoSReport what_if(const SimState& state, const DemandMap& demands, const ProvisioningDecision& decision,
                  const Schedule& schedule);

/// Placed cpu demand over total host cpu capacity; 0 without hosts.
double utilization_ratio(std::span<const Host> hosts, const Placements& placements, const DemandMap& demands);
double utilization_ratio(const SimState& state, const DemandMap& demands);

/// Sum of mu * interval over the hosts, in USD.
double interval_cost(std::span<const Host> hosts, double interval_s);

/// Cost divided by (max_hosts * max mu * interval): 1 only for a full fleet of
/// the costliest type, and strictly increasing as hosts are added.
double normalized_cost(std::span<const Host> hosts, const VmCatalog& catalog);
double normalized_cost(const SimState& state);

double qos_score(double q_e, double q_r, double q_sla, double alpha = 1.0 / 3.0, double beta = 1.0 / 3.0,
                 double delta = 1.0 / 3.0);

double reward(double r, double cost_norm, double gamma);

}  // namespace cilp
