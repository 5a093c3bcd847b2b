#include "cilp/sched.hpp"

#include <algorithm>
#include <limits>
#include <optional>

namespace cilp {
namespace {

const DemandVector& demand_of(const DemandMap& demands, int workload) {
    static const DemandVector kZero{};
    auto it = demands.find(workload);
    return it == demands.end() ? kZero : it->second;
}

bool larger_first(const std::pair<int, DemandVector>& a, const std::pair<int, DemandVector>& b) {
    if (a.second.cpu != b.second.cpu) return a.second.cpu > b.second.cpu;
    return a.first < b.first;
}

}  // namespace

Schedule BestFitScheduler::schedule(const ScheduleRequest& request) const {
    std::map<int, DemandVector> remaining;
    for (const auto& h : request.hosts) {
        if (request.deallocations.count(h.id) == 0) remaining.emplace(h.id, h.capacity);
    }

    std::map<int, std::vector<std::pair<int, DemandVector>>> resident;
    std::vector<std::pair<int, DemandVector>> pool;
    for (const auto& [w, d] : request.demands) {
        auto prior = request.prior.find(w);
        if (prior != request.prior.end() && remaining.count(prior->second) != 0) {
            resident[prior->second].emplace_back(w, d);
        } else {
            pool.emplace_back(w, d);
        }
    }

    Schedule out;
    for (auto& [host, list] : resident) {
        std::sort(list.begin(), list.end(), larger_first);
        auto& room = remaining.at(host);
        for (const auto& [w, d] : list) {
            if (d.fits_within(room)) {
                room -= d;
                out.placements.emplace(w, host);
            } else {
                pool.emplace_back(w, d);
            }
        }
    }

    std::sort(pool.begin(), pool.end(), larger_first);
    for (const auto& [w, d] : pool) {
        std::optional<int> best;
        double best_slack = std::numeric_limits<double>::infinity();
        for (const auto& [host, room] : remaining) {
            if (!d.fits_within(room)) continue;
            const double slack = room.cpu - d.cpu;
            if (slack < best_slack) {
                best_slack = slack;
                best = host;
            }
        }
        if (!best) continue;
        remaining.at(*best) -= d;
        out.placements.emplace(w, *best);
        auto prior = request.prior.find(w);
        if (prior != request.prior.end() && request.deallocations.count(prior->second) != 0) {
            out.migrations.push_back({w, prior->second, *best});
        }
    }
    std::sort(out.migrations.begin(), out.migrations.end(),
              [](const Migration& a, const Migration& b) { return a.workload < b.workload; });
    return out;
}

DemandVector remaining_capacity(const HostSlot& host, const Placements& placements, const DemandMap& demands) {
    DemandVector room = host.capacity;
    for (const auto& [w, h] : placements) {
        if (h == host.id) room -= demand_of(demands, w);
    }
    return room;
}

bool respects_capacity(std::span<const HostSlot> hosts, const Placements& placements, const DemandMap& demands) {
    std::map<int, DemandVector> used;
    for (const auto& [w, h] : placements) used[h] += demand_of(demands, w);
    for (const auto& host : hosts) {
        auto it = used.find(host.id);
        if (it == used.end()) continue;
        // Placement subtracts from the remaining room while this sums upward; allow for rounding.
        const DemandVector slack = host.capacity * (1.0 + 1e-12);
        if (!it->second.fits_within(slack)) return false;
    }
    return true;
}

}  // namespace cilp
