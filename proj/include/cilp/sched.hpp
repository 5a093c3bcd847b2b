#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cilp/domain.hpp"

namespace cilp {

/// Workload id -> demand for the interval being scheduled.
using DemandMap = std::map<int, DemandVector>;
/// Workload id -> host id; the edges of the bipartite schedule graph.
using Placements = std::map<int, int>;

struct Migration {
    int workload = 0;
    int source = 0;
    int target = 0;
    friend bool operator==(const Migration&, const Migration&) = default;
};

struct Schedule {
    Placements placements;
    std::vector<Migration> migrations;
    friend bool operator==(const Schedule&, const Schedule&) = default;
};

/// VM types to create (a multiset, in creation order) and host ids to remove.
struct ProvisioningDecision {
    std::vector<std::string> provisions;
    std::set<int> deallocations;

    bool empty() const { return provisions.empty() && deallocations.empty(); }
    std::size_t size() const { return provisions.size() + deallocations.size(); }
    friend bool operator==(const ProvisioningDecision&, const ProvisioningDecision&) = default;
};

/// Scheduler view of a host.
struct HostSlot {
    int id = 0;
    DemandVector capacity;
};

struct ScheduleRequest {
    /// Hosts of the previous interval plus any newly provisioned ones, sorted by id.
    std::span<const HostSlot> hosts;
    const Placements& prior;
    /// Every workload to be scheduled, including queued and newly arrived ones.
    const DemandMap& demands;
    const std::set<int>& deallocations;
};

class Scheduler {
public:
    virtual ~Scheduler() = default;
    virtual Schedule schedule(const ScheduleRequest& request) const = 0;
};

/// Best-fit-decreasing placement with sticky prior placements.
///
/// Workloads keep their host unless it is being deallocated or it no longer
/// fits the updated demands (largest cpu first, ties by id). Everything else
/// is placed in decreasing cpu order onto the host with the least remaining
/// cpu that fits all three resources, lowest host id on ties. Workloads moved
/// off a deallocated host produce migration entries; workloads that fit
/// nowhere stay unplaced.
class BestFitScheduler final : public Scheduler {
public:
    Schedule schedule(const ScheduleRequest& request) const override;
};

/// Capacity minus placed demand, componentwise.
DemandVector remaining_capacity(const HostSlot& host, const Placements& placements, const DemandMap& demands);

/// True iff no host's placed demand exceeds its capacity in any dimension
/// (up to a relative rounding allowance of 1e-12).
bool respects_capacity(std::span<const HostSlot> hosts, const Placements& placements, const DemandMap& demands);

}  // namespace cilp
