#include "cilp/provision.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace cilp {
namespace {

FeatureVector provision_feature(const VmType& type, const FeatureScale& scale) {
    FeatureVector f = FeatureVector::Zero();
    f.tail<3>() << type.cpu_ips, type.ram_gb, type.disk_gb;
    return scale.normalize(f);
}

FeatureVector host_feature_under(const Host& host, const Placements& placements, const DemandMap& demands,
                                 const FeatureScale& scale) {
    std::vector<DemandVector> alloc;
    for (const auto& [w, h] : placements) {
        if (h != host.id) continue;
        if (auto it = demands.find(w); it != demands.end()) alloc.push_back(it->second);
    }
    return scale.normalize(host_feature(*host.vm_type, alloc));
}

// Hosts as they would exist after `decision`, new ones with their future ids.
std::vector<Host> hosts_after(const SimState& state, const ProvisioningDecision& decision) {
    std::vector<Host> hosts;
    for (const auto& h : state.hosts) {
        if (decision.deallocations.count(h.id) == 0) hosts.push_back(h);
    }
    int next = state.next_host_id;
    for (const auto& name : decision.provisions) {
        hosts.push_back({next++, state.catalog->find(name), state.t, std::nullopt});
    }
    return hosts;
}

bool consumed(const ProvisioningDecision& decision, const ActionFeature& action) {
    return action.kind == ActionKind::Deallocate && decision.deallocations.count(action.host_id) != 0;
}

std::vector<ActionFeature> live_actions(const SimState& state, const ProvisioningDecision& decision,
                                        std::span<const ActionFeature> base) {
    std::vector<ActionFeature> live;
    for (const auto& a : base) {
        if (consumed(decision, a)) continue;
        if (is_legal(state, with_action(decision, a))) live.push_back(a);
    }
    return live;
}

double qos_of(const SimState& state, const DemandMap& demands, const ProvisioningDecision& decision,
              const Schedule& schedule) {
    return what_if(state, demands, decision, schedule).qos;
}

}  // namespace

std::vector<ActionFeature> candidates(const SimState& state, const DemandMap& demands) {
    const FeatureScale scale(*state.catalog);
    std::vector<ActionFeature> out;
    const bool last_host_pinned = state.hosts.size() == 1;
    if (!last_host_pinned) {
        for (const auto& h : state.hosts) {
            out.push_back({ActionKind::Deallocate, h.id, {}, host_feature_under(h, state.placements, demands, scale)});
        }
    }
    if (static_cast<int>(state.hosts.size()) < state.catalog->max_hosts()) {
        for (const auto& type : state.catalog->types()) {
            out.push_back({ActionKind::Provision, -1, type->name, provision_feature(*type, scale)});
        }
    }
    return out;
}

ProvisioningDecision with_action(const ProvisioningDecision& decision, const ActionFeature& action) {
    ProvisioningDecision out = decision;
    if (action.kind == ActionKind::Deallocate) {
        out.deallocations.insert(action.host_id);
    } else {
        out.provisions.push_back(action.vm_type);
    }
    return out;
}

bool is_legal(const SimState& state, const ProvisioningDecision& decision) {
    try {
        validate_decision(state, decision);
        return true;
    } catch (const std::invalid_argument&) {
        return false;
    }
}

CilpTrace cilp_decide(const SimState& state, const DemandMap& forecast, const CandidateScorer& scorer,
                      const Scheduler& scheduler, const CilpOptions& options) {
    CilpTrace trace;
    trace.iteration_limit = static_cast<int>(state.hosts.size() + state.catalog->size());
    auto& result = trace.result;
    result.forecast = forecast;
    result.schedule = plan_schedule(state, forecast, result.decision, scheduler);
    double incumbent = qos_of(state, forecast, result.decision, result.schedule);
    trace.accepted_qos.push_back(incumbent);

    const auto base = candidates(state, forecast);
    while (trace.iterations < trace.iteration_limit) {
        const auto live = live_actions(state, result.decision, base);
        if (live.empty()) break;
        const auto scores = scorer(result.decision, result.schedule, live);
        if (scores.size() != live.size()) throw std::logic_error("cilp_decide: scorer returned wrong arity");
        const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
        ++trace.iterations;

        auto trial = with_action(result.decision, live[best]);
        auto schedule = plan_schedule(state, forecast, trial, scheduler);
        const double q = qos_of(state, forecast, trial, schedule);
        if (!(q >= incumbent + options.eta)) break;
        result.decision = std::move(trial);
        result.schedule = std::move(schedule);
        incumbent = q;
        trace.accepted_qos.push_back(q);
    }
    return trace;
}

CilpTrace cilp_decide(const CilpModel& model, const SimState& state, const DemandMap& previous,
                      const Scheduler& scheduler, const CilpOptions& options) {
    const FeatureScale scale(*state.catalog);
    const auto initial = candidates(state, previous);
    const auto first = predict(model, build_input(state, previous, initial), scale);

    bool first_call = true;
    const auto& forecast = first.demands;
    auto scorer = [&](const ProvisioningDecision& decision, const Schedule& schedule,
                      std::span<const ActionFeature> actions) {
        if (first_call && decision.empty() && actions.size() == initial.size()) {
            first_call = false;
            return first.likelihoods;
        }
        first_call = false;
        const auto hosts = hosts_after(state, decision);
        ModelInput in;
        in.graph = build_graph(hosts, schedule.placements, forecast, scale);
        in.previous = in.graph.features.topLeftCorner(static_cast<Eigen::Index>(in.graph.workload_ids.size()),
                                                      kDemandFeatures);
        in.candidates = Mat(static_cast<Eigen::Index>(actions.size()), kNodeFeatures);
        for (std::size_t i = 0; i < actions.size(); ++i) {
            FeatureVector f = actions[i].feature;
            if (actions[i].kind == ActionKind::Deallocate) {
                const Host* h = state.find_host(actions[i].host_id);
                f = host_feature_under(*h, schedule.placements, forecast, scale);
            }
            in.candidates.row(static_cast<Eigen::Index>(i)) = f.transpose();
        }
        return predict(model, in, scale).likelihoods;
    };
    return cilp_decide(state, forecast, scorer, scheduler, options);
}

ProvisioningDecision reactive_threshold_decide(const SimState& state, const DemandMap& previous,
                                               const ReactiveOptions& options) {
    ProvisioningDecision decision;
    if (!state.last_report) return decision;
    const double r = state.last_report->r;
    const auto& catalog = *state.catalog;

    if (r > options.high) {
        if (static_cast<int>(state.hosts.size()) >= catalog.max_hosts()) return decision;
        DemandVector demand;
        for (const auto& [_, d] : previous) demand += d;
        DemandVector capacity;
        for (const auto& h : state.hosts) capacity += h.vm_type->capacity();
        const DemandVector deficit = demand * (1.0 / options.high) - capacity;
        const VmType* pick = nullptr;
        for (const auto& t : catalog.types()) {
            if (!deficit.fits_within(t->capacity())) continue;
            if (pick == nullptr || t->cost_per_hour < pick->cost_per_hour) pick = t.get();
        }
        if (pick == nullptr) {
            for (const auto& t : catalog.types()) {
                if (pick == nullptr || t->cpu_ips > pick->cpu_ips) pick = t.get();
            }
        }
        decision.provisions.push_back(pick->name);
    } else if (r < options.low) {
        if (state.hosts.size() <= 1) return decision;
        std::map<int, double> load;
        for (const auto& h : state.hosts) load[h.id] = 0.0;
        for (const auto& [w, h] : state.placements) {
            if (auto it = previous.find(w); it != previous.end()) load[h] += it->second.cpu;
        }
        if (load.empty()) return decision;
        const auto emptiest = std::min_element(load.begin(), load.end(), [](const auto& a, const auto& b) {
            return a.second < b.second;
        });
        decision.deallocations.insert(emptiest->first);
    }
    return decision;
}

ProvisioningDecision oracle_decide(const SimState& state, const DemandMap& actual, const Scheduler& scheduler,
                                   int depth) {
    ProvisioningDecision decision;
    if (depth <= 0) return decision;
    double incumbent =
        what_if(state, actual, decision, plan_schedule(state, actual, decision, scheduler)).reward;
    const auto base = candidates(state, actual);
    for (int d = 0; d < depth; ++d) {
        const auto live = live_actions(state, decision, base);
        if (live.empty()) break;
        std::vector<double> rewards(live.size());
        parallel_for(live.size(), [&](std::size_t i) {
            const auto trial = with_action(decision, live[i]);
            rewards[i] = what_if(state, actual, trial, plan_schedule(state, actual, trial, scheduler)).reward;
        });
        const auto best = static_cast<std::size_t>(std::max_element(rewards.begin(), rewards.end()) - rewards.begin());
        if (!(rewards[best] > incumbent)) break;
        decision = with_action(decision, live[best]);
        incumbent = rewards[best];
    }
    return decision;
}

int sim_threads() {
    if (const char* env = std::getenv("CILP_SIM_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(sim_threads()), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (error) std::rethrow_exception(error);
}

DecisionResult NullProvisioner::decide(const SimState& state, const DemandMap& previous, const Scheduler& scheduler) {
    DecisionResult out;
    out.forecast = previous;
    out.schedule = plan_schedule(state, previous, out.decision, scheduler);
    return out;
}

DecisionResult ReactiveProvisioner::decide(const SimState& state, const DemandMap& previous,
                                           const Scheduler& scheduler) {
    DecisionResult out;
    out.forecast = previous;
    out.decision = reactive_threshold_decide(state, previous, options_);
    out.schedule = plan_schedule(state, previous, out.decision, scheduler);
    return out;
}

DecisionResult OracleProvisioner::decide(const SimState& state, const DemandMap&, const Scheduler& scheduler) {
    DecisionResult out;
    out.forecast = true_demands(state);
    out.decision = oracle_decide(state, out.forecast, scheduler, depth_);
    out.schedule = plan_schedule(state, out.forecast, out.decision, scheduler);
    return out;
}

DecisionResult CilpProvisioner::decide(const SimState& state, const DemandMap& previous, const Scheduler& scheduler) {
    return cilp_decide(*model_, state, previous, scheduler, options_).result;
}

std::unique_ptr<Provisioner> make_provisioner(std::string_view name, std::shared_ptr<const CilpModel> model) {
    if (name == "none") return std::make_unique<NullProvisioner>();
    if (name == "reactive") return std::make_unique<ReactiveProvisioner>();
    if (name == "oracle") return std::make_unique<OracleProvisioner>();
    if (name == "cilp") {
        if (!model) throw ConfigError("provisioner 'cilp' requires a checkpoint");
        return std::make_unique<CilpProvisioner>(std::move(model));
    }
    throw ConfigError("unknown provisioner '" + std::string(name) + "'");
}

}  // namespace cilp
