#include <doctest.h>

#include <cmath>

#include "cilp/cosim.hpp"

using namespace cilp;

namespace {

std::shared_ptr<const VmCatalog> catalog_ptr() { return std::make_shared<const VmCatalog>(default_catalog()); }

Workload workload(int id, int arrival, std::vector<DemandVector> trace, double interval_s = 300.0) {
    const int n = static_cast<int>(trace.size());
    return {id, arrival, std::move(trace), default_sla_deadline(n, interval_s), 0.0};
}

QoSReport step_planned(SimState& s, const ProvisioningDecision& d = {}) {
    const auto demands = true_demands(s);
    return step(s, demands, d, plan_schedule(s, demands, d, BestFitScheduler{}));
}

}  // namespace

TEST_CASE("empty system") {
    SimState s = make_state(catalog_ptr(), {}, {}, 1);
    const auto r = step_planned(s);
    CHECK(r.cost_usd == 0.0);
    CHECK(r.energy_wh == 0.0);
    CHECK(r.r == 0.0);
    CHECK(r.qos == 1.0);
    CHECK(s.t == 1);
}

TEST_CASE("one B2s host costs 0.0075 USD per five minutes") {
    const std::vector<std::string> hosts{"B2s"};
    SimState s = make_state(catalog_ptr(), {}, hosts, 1);
    CHECK(step_planned(s).cost_usd == doctest::Approx(0.0075).epsilon(1e-15));
    CHECK(interval_cost(s.hosts, 300.0) == doctest::Approx(0.0075).epsilon(1e-15));
}

TEST_CASE("energy integrates the power table") {
    VmType flat{"F", 4000.0, 4.0, 8.0, 0.1, {0.0, 0.0}, {}};
    for (std::size_t i = 0; i < kPowerTablePoints; ++i) flat.power_watts[i] = 20.0 * static_cast<double>(i);
    auto cat = std::make_shared<const VmCatalog>(std::vector<VmType>{flat}, 1);
    const std::vector<std::string> hosts{"F"};
    SimState s = make_state(cat, {}, hosts, 1);
    admit(s, {workload(0, 0, {{2000.0, 1.0, 1.0}, {2000.0, 1.0, 1.0}})});
    const auto r = step_planned(s);
    CHECK(r.r == 0.5);
    CHECK(r.energy_wh == doctest::Approx(100.0 * 300.0 / 3600.0));
    CHECK(r.energy_wh == doctest::Approx(8.33).epsilon(1e-3));
    CHECK(r.q_e == doctest::Approx(r.energy_wh / (200.0 * 300.0 / 3600.0)));
}

TEST_CASE("utilization ratio") {
    const auto cat = catalog_ptr();
    const std::vector<Host> one{{0, cat->find("B2s"), 0, std::nullopt}};
    const DemandMap demands{{1, {1000.0, 1.0, 1.0}}, {2, {2000.0, 1.0, 1.0}}};
    CHECK(utilization_ratio(one, {{1, 0}, {2, 0}}, demands) == 0.75);
    CHECK(utilization_ratio(std::vector<Host>{}, {}, demands) == 0.0);
    const DemandMap full{{1, {4000.0, 1.0, 1.0}}};
    CHECK(utilization_ratio(one, {{1, 0}}, full) == 1.0);
}

TEST_CASE("normalized cost") {
    const auto base = default_catalog();
    std::vector<VmType> types;
    for (const auto& t : base.types()) types.push_back(*t);
    const VmCatalog cat(types, 2);
    const Host b2s{0, cat.find("B2s"), 0, std::nullopt};
    const Host b8ms{1, cat.find("B8ms"), 0, std::nullopt};
    CHECK(normalized_cost(std::vector<Host>{b8ms, b8ms}, cat) == 1.0);
    CHECK(normalized_cost(std::vector<Host>{}, cat) == 0.0);
    CHECK(normalized_cost(std::vector<Host>{b2s, b8ms}, cat) == doctest::Approx(0.635).epsilon(1e-3));
    CHECK(normalized_cost(std::vector<Host>{b8ms}, cat) == 0.5);
    CHECK(normalized_cost(std::vector<Host>{b2s, b8ms}, cat) > normalized_cost(std::vector<Host>{b8ms}, cat));
}

TEST_CASE("qos score and reward") {
    CHECK(qos_score(0.0, 0.0, 0.0) == 1.0);
    CHECK(qos_score(1.0, 1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(qos_score(0.3, 0.6, 0.0) == doctest::Approx(0.7));
    CHECK(reward(0.8, 0.4, 0.5) == doctest::Approx(0.6));
    CHECK(reward(0.7, 0.9, 0.0) == 0.7);
    CHECK(reward(0.4, 0.4, 1.0) == 0.0);
    CHECK(reward(0.5, 0.2, 0.5) > reward(0.5, 0.3, 0.5));
    CHECK(reward(0.6, 0.2, 0.5) > reward(0.5, 0.2, 0.5));
}

TEST_CASE("params validation") {
    SimParams p;
    p.alpha = 0.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.gamma = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("what_if is pure and matches step") {
    const std::vector<std::string> hosts{"B2s", "B4ms"};
    SimState s = make_state(catalog_ptr(), {}, hosts, 3);
    admit(s, {workload(0, 0, {{1500.0, 2.0, 1.0}}), workload(1, 0, {{2500.0, 1.0, 1.0}, {100.0, 1.0, 1.0}})});
    const ProvisioningDecision d{{"B8ms"}, {}};
    const auto demands = true_demands(s);
    const auto schedule = plan_schedule(s, demands, d, BestFitScheduler{});
    const SimState before = s;
    const auto a = what_if(s, demands, d, schedule);
    CHECK(s == before);
    CHECK(what_if(s, demands, d, schedule) == a);
    CHECK(step(s, demands, d, schedule) == a);
}

TEST_CASE("provisioning a large host relieves an overloaded system") {
    const std::vector<std::string> hosts{"B2s", "B2s"};
    SimState s = make_state(catalog_ptr(), {}, hosts, 5);
    std::vector<Workload> arrivals;
    for (int i = 0; i < 6; ++i) arrivals.push_back(workload(i, 0, {{1900.0, 1.0, 1.0}}));
    admit(s, arrivals);
    const auto demands = true_demands(s);
    const ProvisioningDecision none;
    const ProvisioningDecision grow{{"B8ms"}, {}};
    const auto base = what_if(s, demands, none, plan_schedule(s, demands, none, BestFitScheduler{}));
    const auto more = what_if(s, demands, grow, plan_schedule(s, demands, grow, BestFitScheduler{}));
    CHECK(more.r < base.r);
    CHECK(more.q_r < base.q_r);
    CHECK(more.q_sla < base.q_sla);
    CHECK(more.queued_workloads == 0);
    CHECK(base.queued_workloads == 0);
    CHECK(base.completed == 6);
}

TEST_CASE("queued workloads wait and violate their deadline") {
    const std::vector<std::string> hosts{"B2s"};
    SimState s = make_state(catalog_ptr(), {}, hosts, 5);
    admit(s, {workload(0, 0, {{3000.0, 1.0, 1.0}, {3000.0, 1.0, 1.0}}),
              workload(1, 0, {{3000.0, 1.0, 1.0}, {3000.0, 1.0, 1.0}})});
    auto first = step_planned(s);
    CHECK(first.queued_workloads == 1);
    CHECK(s.ledger.waiting_s == 300.0);
    const auto second = step_planned(s);
    CHECK(second.completed == 2);
    CHECK(second.sla_violations == 1);
    CHECK(s.ledger.waiting_s == 600.0);
    CHECK(s.ledger.total_response_s == 600.0 + 1200.0);
    CHECK(s.workloads.empty());
}

TEST_CASE("deallocation migrates and charges migration delay") {
    const std::vector<std::string> hosts{"B2s", "B2s"};
    SimState s = make_state(catalog_ptr(), {}, hosts, 5);
    admit(s, {workload(0, 0, {{1000.0, 2.0, 1.0}, {1000.0, 2.0, 1.0}, {1000.0, 2.0, 1.0}})});
    step_planned(s);
    const int host = s.placements.at(0);
    const ProvisioningDecision d{{}, {host}};
    const auto r = step_planned(s, d);
    CHECK(r.migrations == 1);
    CHECK(r.deallocations == 1);
    CHECK(s.hosts.size() == 1);
    CHECK(s.placements.at(0) != host);
    CHECK(s.workloads.at(0).accrued_delay == 2.0);
}

TEST_CASE("invalid decisions and schedules are rejected") {
    const std::vector<std::string> hosts{"B2s"};
    SimState s = make_state(catalog_ptr(), {}, hosts, 5);
    admit(s, {workload(0, 0, {{10.0, 1.0, 1.0}})});
    const auto demands = true_demands(s);
    CHECK_THROWS_AS(validate_decision(s, {{}, {0}}), std::invalid_argument);
    CHECK_THROWS_AS(validate_decision(s, {{}, {9}}), std::invalid_argument);
    CHECK_THROWS_AS(validate_decision(s, {{"XL"}, {}}), std::invalid_argument);
    CHECK_NOTHROW(validate_decision(s, {{"B2s"}, {0}}));
    Schedule bad;
    bad.placements[0] = 42;
    const SimState before = s;
    CHECK_THROWS_AS(step(s, demands, {}, bad), std::invalid_argument);
    CHECK(s == before);
}

TEST_CASE("conservation and determinism over a random episode") {
    auto run = [](std::uint64_t seed) {
        const std::vector<std::string> hosts{"B2s"};
        SimState s = make_state(catalog_ptr(), {}, hosts, seed);
        const auto plan = synthesize_arrivals(synthesize_sinusoidal_traces({}, 1), 40, seed);
        std::mt19937_64 rng(seed);
        std::vector<QoSReport> reports;
        for (int t = 0; t < 40; ++t) {
            admit_due(s, plan);
            ProvisioningDecision d;
            if (rng() % 3 == 0) d.provisions.push_back("B4ms");
            if (rng() % 3 == 0 && s.hosts.size() > 1) d.deallocations.insert(s.hosts.front().id);
            reports.push_back(step_planned(s, d));
            const auto& l = s.ledger;
            CHECK(l.arrived == l.completed + static_cast<int>(s.workloads.size()));
            CHECK(s.workloads.size() == s.placements.size() + s.queue.size());
            CHECK(reports.back().r >= 0.0);
            CHECK(reports.back().r <= 1.0);
        }
        return std::pair{s.ledger, reports};
    };
    CHECK(run(4) == run(4));
}
