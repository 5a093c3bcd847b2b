#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace cilp {

/// Malformed input file or invariant violation while loading.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value (catalog, episode, training).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a workload is queried past the end of its trace.
class WorkloadCompleted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-interval resource demand of one workload: cpu in IPS, ram and disk in GB.
struct DemandVector {
    double cpu = 0.0;
    double ram = 0.0;
    double disk = 0.0;

    static DemandVector zero() { return {}; }

    DemandVector& operator+=(const DemandVector& o) {
        cpu += o.cpu;
        ram += o.ram;
        disk += o.disk;
        return *this;
    }
    DemandVector& operator-=(const DemandVector& o) {
        cpu -= o.cpu;
        ram -= o.ram;
        disk -= o.disk;
        return *this;
    }
    friend DemandVector operator+(DemandVector a, const DemandVector& b) { return a += b; }
    friend DemandVector operator-(DemandVector a, const DemandVector& b) { return a -= b; }
    friend DemandVector operator*(DemandVector a, double s) {
        a.cpu *= s;
        a.ram *= s;
        a.disk *= s;
        return a;
    }
    friend bool operator==(const DemandVector&, const DemandVector&) = default;

    /// Componentwise `*this <= capacity`.
    bool fits_within(const DemandVector& capacity) const {
        return cpu <= capacity.cpu && ram <= capacity.ram && disk <= capacity.disk;
    }
    bool non_negative() const { return cpu >= 0.0 && ram >= 0.0 && disk >= 0.0; }
};

struct GaussianDelay {
    double mean_s = 0.0;
    double std_s = 0.0;
    friend bool operator==(const GaussianDelay&, const GaussianDelay&) = default;
};

inline constexpr std::size_t kPowerTablePoints = 11;

struct VmType {
    std::string name;
    double cpu_ips = 0.0;
    double ram_gb = 0.0;
    double disk_gb = 0.0;
    double cost_per_hour = 0.0;
    GaussianDelay provision_delay;
    /// Watts at 0%, 10%, ..., 100% cpu utilization.
    std::array<double, kPowerTablePoints> power_watts{};

    DemandVector capacity() const { return {cpu_ips, ram_gb, disk_gb}; }

    /// Linear interpolation in the power table; `utilization` is clamped to [0, 1].
    double power_at(double utilization) const;
    double max_power() const { return power_watts.back(); }

    /// Throws ConfigError naming the offending field.
    void validate() const;

    friend bool operator==(const VmType&, const VmType&) = default;
};

/// Power table rising linearly from 60% to 100% of `max_watts`.
std::array<double, kPowerTablePoints> linear_power_table(double max_watts);

class VmCatalog {
public:
    static constexpr int kDefaultMaxHosts = 200;

    VmCatalog() = default;
    VmCatalog(std::vector<VmType> types, int max_hosts = kDefaultMaxHosts);

    std::span<const std::shared_ptr<const VmType>> types() const { return types_; }
    std::size_t size() const { return types_.size(); }
    int max_hosts() const { return max_hosts_; }

    /// Throws std::out_of_range for unknown names.
    const std::shared_ptr<const VmType>& find(std::string_view name) const;

    double max_cost_per_hour() const;
    /// Componentwise maximum capacity over all types; used for feature normalization.
    DemandVector max_capacity() const;
    double max_power() const;

private:
    std::vector<std::shared_ptr<const VmType>> types_;
    int max_hosts_ = kDefaultMaxHosts;
};

/// B2s / B4ms / B8ms with East-US style pricing.
VmCatalog default_catalog();

VmCatalog parse_catalog(std::string_view text);
VmCatalog load_catalog(const std::filesystem::path& path);
std::string serialize_catalog(const VmCatalog& catalog);

struct Host {
    int id = 0;
    std::shared_ptr<const VmType> vm_type;
    int active_since = 0;
    /// Seconds into the current interval during which the host is still booting.
    std::optional<double> pending_until;

    friend bool operator==(const Host&, const Host&) = default;
};

struct Workload {
    int id = 0;
    int arrival_interval = 0;
    std::vector<DemandVector> trace;
    double sla_deadline = 0.0;
    /// Waiting, boot and migration delays accumulated so far, in seconds.
    double accrued_delay = 0.0;

    int length() const { return static_cast<int>(trace.size()); }
    /// Last interval in which the workload is active.
    int final_interval() const { return arrival_interval + length() - 1; }

    friend bool operator==(const Workload&, const Workload&) = default;
};

/// Deadline is `multiplier * trace length * interval_s`.
double default_sla_deadline(int trace_length, double interval_s, double multiplier = 1.5);

/// Demand of `w` at interval `t`. Throws WorkloadCompleted past the end of the
/// trace and std::out_of_range before arrival.
DemandVector workload_feature(const Workload& w, int t);

using FeatureVector = Eigen::Matrix<double, 6, 1>;

/// [sum of allocated demands, cpu/ram/disk capacity].
FeatureVector host_feature(const VmType& type, std::span<const DemandVector> allocated);

/// Trace CSV: `interval,workload_id,cpu_ips,ram_gb,disk_gb`.
struct TraceOptions {
    double interval_s = 300.0;
    double sla_multiplier = 1.5;
};

std::vector<Workload> parse_traces(std::string_view csv, const TraceOptions& options = {});
std::vector<Workload> load_traces(const std::filesystem::path& path, const TraceOptions& options = {});
std::string serialize_traces(std::span<const Workload> templates);

struct Arrival {
    int interval = 0;
    Workload workload;
    friend bool operator==(const Arrival&, const Arrival&) = default;
};
using ArrivalPlan = std::vector<Arrival>;

/// Mean arrivals per interval observed in the templates' start intervals.
double fit_arrival_rate(std::span<const Workload> templates);

ArrivalPlan synthesize_arrivals(std::span<const Workload> templates, int horizon, double rate,
                                std::uint64_t seed, const TraceOptions& options = {});
ArrivalPlan synthesize_arrivals(std::span<const Workload> templates, int horizon, std::uint64_t seed,
                                const TraceOptions& options = {});

/// Sinusoid-plus-noise trace family used for desk experiments.
struct SyntheticTraceSpec {
    int workloads = 120;
    int span_intervals = 60;
    int min_length = 2;
    int max_length = 8;
    double period = 12.0;
    double amplitude = 0.35;
    double noise = 0.05;
    double cpu_mean = 1400.0;
    double cpu_spread = 900.0;
    double ram_per_kips = 1.6;
    double disk_mean = 4.0;
};

std::vector<Workload> synthesize_sinusoidal_traces(const SyntheticTraceSpec& spec, std::uint64_t seed,
                                                   const TraceOptions& options = {});

/// Every workload demands `demand` for `length` intervals; one arrival per interval.
std::vector<Workload> constant_traces(int workloads, int length, const DemandVector& demand,
                                      const TraceOptions& options = {});

/// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace cilp
