#include "cilp/domain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace cilp {

double VmType::power_at(double utilization) const {
    const double u = std::clamp(utilization, 0.0, 1.0) * 10.0;
    const auto lo = static_cast<std::size_t>(std::floor(u));
    if (lo >= kPowerTablePoints - 1) return power_watts.back();
    const double frac = u - static_cast<double>(lo);
    return power_watts[lo] + frac * (power_watts[lo + 1] - power_watts[lo]);
}

void VmType::validate() const {
    auto fail = [&](std::string_view field, std::string_view why) {
        throw ConfigError("vm type '" + name + "': " + std::string(field) + " " + std::string(why));
    };
    if (name.empty()) throw ConfigError("vm type: name must be non-empty");
    if (!(cpu_ips > 0.0)) fail("cpu_ips", "must be > 0");
    if (!(ram_gb > 0.0)) fail("ram_gb", "must be > 0");
    if (!(disk_gb > 0.0)) fail("disk_gb", "must be > 0");
    if (!(cost_per_hour >= 0.0)) fail("cost_per_hour_usd", "must be >= 0");
    if (!(provision_delay.mean_s >= 0.0)) fail("provision_mean_s", "must be >= 0");
    if (!(provision_delay.std_s >= 0.0)) fail("provision_std_s", "must be >= 0");
    for (std::size_t i = 0; i < kPowerTablePoints; ++i) {
        if (!(power_watts[i] >= 0.0)) fail("power_watts", "must be >= 0");
        if (i > 0 && power_watts[i] < power_watts[i - 1]) fail("power_watts", "must be non-decreasing");
    }
}

std::array<double, kPowerTablePoints> linear_power_table(double max_watts) {
    std::array<double, kPowerTablePoints> table{};
    for (std::size_t i = 0; i < kPowerTablePoints; ++i) {
        table[i] = max_watts * (0.6 + 0.04 * static_cast<double>(i));
    }
    return table;
}

VmCatalog::VmCatalog(std::vector<VmType> types, int max_hosts) : max_hosts_(max_hosts) {
    if (types.empty()) throw ConfigError("catalog must be non-empty");
    if (max_hosts <= 0) throw ConfigError("catalog: max_hosts must be > 0");
    std::set<std::string> names;
    for (auto& t : types) {
        t.validate();
        if (!names.insert(t.name).second) throw ConfigError("catalog: duplicate vm type name '" + t.name + "'");
        types_.push_back(std::make_shared<const VmType>(std::move(t)));
    }
}

const std::shared_ptr<const VmType>& VmCatalog::find(std::string_view name) const {
    for (const auto& t : types_) {
        if (t->name == name) return t;
    }
    throw std::out_of_range("unknown vm type '" + std::string(name) + "'");
}

double VmCatalog::max_cost_per_hour() const {
    double m = 0.0;
    for (const auto& t : types_) m = std::max(m, t->cost_per_hour);
    return m;
}

DemandVector VmCatalog::max_capacity() const {
    DemandVector m;
    for (const auto& t : types_) {
        m.cpu = std::max(m.cpu, t->cpu_ips);
        m.ram = std::max(m.ram, t->ram_gb);
        m.disk = std::max(m.disk, t->disk_gb);
    }
    return m;
}

double VmCatalog::max_power() const {
    double m = 0.0;
    for (const auto& t : types_) m = std::max(m, t->max_power());
    return m;
}

VmCatalog default_catalog() {
    // 2000 IPS per core.
    std::vector<VmType> types{
        {"B2s", 4000.0, 4.0, 8.0, 0.09, {60.0, 8.0}, linear_power_table(80.0)},
        {"B4ms", 8000.0, 16.0, 32.0, 0.166, {75.0, 10.0}, linear_power_table(140.0)},
        {"B8ms", 16000.0, 32.0, 64.0, 0.333, {90.0, 12.0}, linear_power_table(250.0)},
    };
    return VmCatalog(std::move(types));
}

double default_sla_deadline(int trace_length, double interval_s, double multiplier) {
    return multiplier * static_cast<double>(trace_length) * interval_s;
}

DemandVector workload_feature(const Workload& w, int t) {
    const int offset = t - w.arrival_interval;
    if (offset < 0) {
        throw std::out_of_range("workload " + std::to_string(w.id) + " has not arrived at interval " +
                                std::to_string(t));
    }
    if (offset >= w.length()) {
        throw WorkloadCompleted("workload " + std::to_string(w.id) + " completed before interval " +
                                std::to_string(t));
    }
    return w.trace[static_cast<std::size_t>(offset)];
}

FeatureVector host_feature(const VmType& type, std::span<const DemandVector> allocated) {
    DemandVector sum;
    for (const auto& d : allocated) sum += d;
    FeatureVector f;
    f << sum.cpu, sum.ram, sum.disk, type.cpu_ips, type.ram_gb, type.disk_gb;
    return f;
}

std::string format_double(double value) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf.data(), ptr);
}

}  // namespace cilp
