#include "cilp/cosim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cilp {
namespace {

constexpr double kSecondsPerHour = 3600.0;

double sample_boot_delay(const VmType& type, double interval_s, std::mt19937_64& rng) {
    double delay = type.provision_delay.mean_s;
    if (type.provision_delay.std_s > 0.0) {
        std::normal_distribution<double> dist(type.provision_delay.mean_s, type.provision_delay.std_s);
        delay = dist(rng);
    }
    return std::clamp(delay, 0.0, interval_s);
}

std::vector<HostSlot> slots_of(std::span<const Host> hosts) {
    std::vector<HostSlot> slots;
    slots.reserve(hosts.size());
    for (const auto& h : hosts) slots.push_back({h.id, h.vm_type->capacity()});
    return slots;
}

}  // namespace

void SimParams::validate() const {
    if (!(interval_s > 0.0)) throw ConfigError("interval_s must be > 0");
    if (!(alpha >= 0.0 && beta >= 0.0 && delta >= 0.0)) throw ConfigError("qos weights must be >= 0");
    if (std::abs(alpha + beta + delta - 1.0) > 1e-9) throw ConfigError("qos weights must sum to 1");
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
    if (!(migration_rate_gb_per_s > 0.0)) throw ConfigError("migration_rate_gb_per_s must be > 0");
}

const Host* SimState::find_host(int id) const {
    auto it = std::lower_bound(hosts.begin(), hosts.end(), id, [](const Host& h, int v) { return h.id < v; });
    return it != hosts.end() && it->id == id ? &*it : nullptr;
}

SimState make_state(std::shared_ptr<const VmCatalog> catalog, const SimParams& params,
                    std::span<const std::string> initial_hosts, std::uint64_t seed) {
    params.validate();
    if (!catalog) throw ConfigError("make_state: catalog is required");
    if (static_cast<int>(initial_hosts.size()) > catalog->max_hosts()) {
        throw ConfigError("initial hosts exceed max_hosts");
    }
    SimState state;
    state.catalog = std::move(catalog);
    state.params = params;
    state.rng.seed(seed);
    for (const auto& name : initial_hosts) {
        state.hosts.push_back({state.next_host_id++, state.catalog->find(name), 0, std::nullopt});
    }
    return state;
}

void admit(SimState& state, std::vector<Workload> arrivals) {
    for (auto& w : arrivals) {
        if (w.trace.empty()) throw std::invalid_argument("admit: workload trace must be non-empty");
        if (state.workloads.count(w.id) != 0) {
            throw std::invalid_argument("admit: duplicate workload id " + std::to_string(w.id));
        }
        const int id = w.id;
        state.workloads.emplace(id, std::move(w));
        state.queue.push_back(id);
        ++state.ledger.arrived;
    }
}

void admit_due(SimState& state, const ArrivalPlan& plan) {
    std::vector<Workload> due;
    for (const auto& a : plan) {
        if (a.interval != state.t) continue;
        Workload w = a.workload;
        w.arrival_interval = a.interval;
        due.push_back(std::move(w));
    }
    admit(state, std::move(due));
}

DemandMap true_demands(const SimState& state) {
    DemandMap out;
    for (const auto& [id, w] : state.workloads) out.emplace(id, workload_feature(w, state.t));
    return out;
}

DemandMap previous_demands(const SimState& state) {
    DemandMap out;
    for (const auto& [id, w] : state.workloads) {
        auto it = state.last_demands.find(id);
        out.emplace(id, it == state.last_demands.end() ? DemandVector{} : it->second);
    }
    return out;
}

void validate_decision(const SimState& state, const ProvisioningDecision& decision) {
    for (int id : decision.deallocations) {
        if (state.find_host(id) == nullptr) {
            throw std::invalid_argument("decision deallocates unknown host " + std::to_string(id));
        }
    }
    for (const auto& name : decision.provisions) {
        try {
            state.catalog->find(name);
        } catch (const std::out_of_range&) {
            throw std::invalid_argument("decision provisions unknown vm type '" + name + "'");
        }
    }
    const auto after = static_cast<long>(state.hosts.size() + decision.provisions.size()) -
                       static_cast<long>(decision.deallocations.size());
    if (after > state.catalog->max_hosts()) throw std::invalid_argument("decision exceeds max_hosts");
    if (after == 0 && !decision.deallocations.empty()) {
        throw std::invalid_argument("decision removes every host");
    }
}

std::vector<HostSlot> planned_hosts(const SimState& state, const ProvisioningDecision& decision) {
    auto slots = slots_of(state.hosts);
    int next = state.next_host_id;
    for (const auto& name : decision.provisions) slots.push_back({next++, state.catalog->find(name)->capacity()});
    return slots;
}

Schedule plan_schedule(const SimState& state, const DemandMap& demands, const ProvisioningDecision& decision,
                       const Scheduler& scheduler) {
    const auto slots = planned_hosts(state, decision);
    return scheduler.schedule({slots, state.placements, demands, decision.deallocations});
}

QoSReport step(SimState& state, const DemandMap& demands, const ProvisioningDecision& decision,
               const Schedule& schedule) {
    validate_decision(state, decision);
    for (const auto& [id, w] : state.workloads) {
        if (demands.count(id) == 0) throw std::invalid_argument("step: no demand for workload " + std::to_string(id));
    }
    const double dt = state.params.interval_s;
    const int t = state.t;

    // Provision, then drop deallocated hosts once their work has been moved.
    std::vector<Host> hosts;
    for (const auto& h : state.hosts) {
        if (decision.deallocations.count(h.id) != 0) continue;
        hosts.push_back({h.id, h.vm_type, h.active_since, std::nullopt});
    }
    int next_id = state.next_host_id;
    for (const auto& name : decision.provisions) hosts.push_back({next_id++, state.catalog->find(name), t, 0.0});

    auto host_known = [&](int id) {
        return std::any_of(hosts.begin(), hosts.end(), [id](const Host& h) { return h.id == id; });
    };
    for (const auto& [w, h] : schedule.placements) {
        if (state.workloads.count(w) == 0) {
            throw std::invalid_argument("schedule places unknown workload " + std::to_string(w));
        }
        if (!host_known(h)) {
            throw std::invalid_argument("schedule places workload " + std::to_string(w) + " on unknown host " +
                                        std::to_string(h));
        }
    }

    std::map<int, double> migration_delay;
    for (const auto& m : schedule.migrations) {
        if (decision.deallocations.count(m.source) == 0) {
            throw std::invalid_argument("migration out of host " + std::to_string(m.source) +
                                        " which is not being deallocated");
        }
        auto it = schedule.placements.find(m.workload);
        if (it == schedule.placements.end() || it->second != m.target) {
            throw std::invalid_argument("migration target disagrees with placement for workload " +
                                        std::to_string(m.workload));
        }
        const double delay = demands.at(m.workload).ram / state.params.migration_rate_gb_per_s;
        migration_delay[m.workload] = delay;
    }

    // Validation is done; from here on the state is mutated.
    double overhead = 0.0;
    for (auto& h : hosts) {
        if (!h.pending_until) continue;
        h.pending_until = sample_boot_delay(*h.vm_type, dt, state.rng);
        overhead += *h.pending_until;
    }
    state.next_host_id = next_id;
    for (const auto& [id, delay] : migration_delay) state.workloads.at(id).accrued_delay += delay;

    // Enforce capacity against the demands that actually materialize.
    const auto slots = slots_of(hosts);
    const std::set<int> none;
    const BestFitScheduler repair;
    state.placements = repair.schedule({slots, schedule.placements, demands, none}).placements;

    std::map<int, double> effective_cpu_by_host;
    double placed_cpu = 0.0;
    double waiting = 0.0;
    std::deque<int> queue;
    for (const auto& id : state.queue) {
        if (state.workloads.count(id) != 0 && state.placements.count(id) == 0) queue.push_back(id);
    }
    for (auto& [id, w] : state.workloads) {
        auto placed = state.placements.find(id);
        if (placed == state.placements.end()) {
            if (std::find(queue.begin(), queue.end(), id) == queue.end()) queue.push_back(id);
            w.accrued_delay += dt;
            waiting += dt;
            continue;
        }
        const Host& host = *std::find_if(hosts.begin(), hosts.end(),
                                         [&](const Host& h) { return h.id == placed->second; });
        double delay = 0.0;
        if (host.pending_until) {
            delay += *host.pending_until;
            w.accrued_delay += *host.pending_until;
        }
        if (auto m = migration_delay.find(id); m != migration_delay.end()) delay += m->second;
        const double active_fraction = std::max(0.0, dt - std::min(delay, dt)) / dt;
        const double cpu = demands.at(id).cpu * active_fraction;
        effective_cpu_by_host[host.id] += cpu;
        placed_cpu += cpu;
    }

    QoSReport report;
    report.t = t;
    double capacity = 0.0;
    double energy_wh = 0.0;
    for (const auto& h : hosts) {
        capacity += h.vm_type->cpu_ips;
        const double u = effective_cpu_by_host[h.id] / h.vm_type->cpu_ips;
        energy_wh += h.vm_type->power_at(u) * dt / kSecondsPerHour;
    }
    report.r = capacity > 0.0 ? placed_cpu / capacity : 0.0;
    report.energy_wh = energy_wh;
    const double energy_ref = static_cast<double>(state.catalog->max_hosts()) * state.catalog->max_power() * dt /
                              kSecondsPerHour;
    report.q_e = energy_ref > 0.0 ? std::clamp(energy_wh / energy_ref, 0.0, 1.0) : 0.0;
    report.cost_usd = interval_cost(hosts, dt);
    report.cost_norm = normalized_cost(hosts, *state.catalog);

    // Completions at the end of this interval.
    double response_sum = 0.0;
    double max_deadline = 0.0;
    int violations = 0;
    std::vector<int> done;
    for (const auto& [id, w] : state.workloads) {
        if (w.final_interval() > t) continue;
        const double response = static_cast<double>(t + 1 - w.arrival_interval) * dt + w.accrued_delay;
        response_sum += response;
        max_deadline = std::max(max_deadline, w.sla_deadline);
        if (response > w.sla_deadline) ++violations;
        done.push_back(id);
    }
    for (int id : done) {
        state.workloads.erase(id);
        state.placements.erase(id);
        queue.erase(std::remove(queue.begin(), queue.end(), id), queue.end());
    }
    state.queue = std::move(queue);

    const int completed = static_cast<int>(done.size());
    report.completed = completed;
    report.sla_violations = violations;
    if (completed > 0) {
        report.mean_response_s = response_sum / completed;
        report.q_r = max_deadline > 0.0 ? std::clamp(report.mean_response_s / max_deadline, 0.0, 1.0) : 0.0;
        report.q_sla = static_cast<double>(violations) / completed;
    }
    const auto& p = state.params;
    report.qos = qos_score(report.q_e, report.q_r, report.q_sla, p.alpha, p.beta, p.delta);
    report.reward = reward(report.r, report.cost_norm, p.gamma);
    report.active_hosts = static_cast<int>(hosts.size());
    report.live_workloads = static_cast<int>(state.placements.size());
    report.queued_workloads = static_cast<int>(state.queue.size());
    report.migrations = static_cast<int>(schedule.migrations.size());
    report.provisions = static_cast<int>(decision.provisions.size());
    report.deallocations = static_cast<int>(decision.deallocations.size());
    report.provision_overhead_s = overhead;

    auto& l = state.ledger;
    l.completed += completed;
    l.sla_violations += violations;
    l.migrations += report.migrations;
    l.provisions += report.provisions;
    l.deallocations += report.deallocations;
    l.energy_kwh += energy_wh / 1000.0;
    l.cost_usd += report.cost_usd;
    l.total_response_s += response_sum;
    l.waiting_s += waiting;
    l.provision_overhead_s += overhead;

    state.hosts = std::move(hosts);
    state.last_demands = demands;
    state.last_report = report;
    state.t = t + 1;
    return report;
}

QoSReport what_if(const SimState& state, const DemandMap& demands, const ProvisioningDecision& decision,
                  const Schedule& schedule) {
    SimState copy = state;
    return step(copy, demands, decision, schedule);
}

double utilization_ratio(std::span<const Host> hosts, const Placements& placements, const DemandMap& demands) {
    double capacity = 0.0;
    for (const auto& h : hosts) capacity += h.vm_type->cpu_ips;
    if (capacity <= 0.0) return 0.0;
    double placed = 0.0;
    for (const auto& [w, h] : placements) {
        if (auto it = demands.find(w); it != demands.end()) placed += it->second.cpu;
    }
    return placed / capacity;
}

double utilization_ratio(const SimState& state, const DemandMap& demands) {
    return utilization_ratio(state.hosts, state.placements, demands);
}

double interval_cost(std::span<const Host> hosts, double interval_s) {
    double cost = 0.0;
    for (const auto& h : hosts) cost += h.vm_type->cost_per_hour * interval_s / kSecondsPerHour;
    return cost;
}

double normalized_cost(std::span<const Host> hosts, const VmCatalog& catalog) {
    const double max_mu = catalog.max_cost_per_hour();
    if (hosts.empty() || max_mu <= 0.0) return 0.0;
    double sum = 0.0;
    for (const auto& h : hosts) sum += h.vm_type->cost_per_hour;
    return sum / (static_cast<double>(catalog.max_hosts()) * max_mu);
}

double normalized_cost(const SimState& state) { return normalized_cost(state.hosts, *state.catalog); }

double qos_score(double q_e, double q_r, double q_sla, double alpha, double beta, double delta) {
    return 1.0 - (alpha * q_e + beta * q_r + delta * q_sla);
}

double reward(double r, double cost_norm, double gamma) { return r - gamma * cost_norm; }

}  // namespace cilp
