#include "cilp/domain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace cilp {
namespace {

constexpr std::array<std::string_view, 5> kColumns{"interval", "workload_id", "cpu_ips", "ram_gb", "disk_gb"};

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        auto cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.remove_suffix(1);
        while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
        out.push_back(cell);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <typename T>
T parse_cell(std::string_view cell, int row, std::string_view column) {
    T v{};
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) {
        throw ParseError("trace row " + std::to_string(row) + ", column '" + std::string(column) +
                         "': invalid value '" + std::string(cell) + "'");
    }
    return v;
}

}  // namespace

std::vector<Workload> parse_traces(std::string_view csv, const TraceOptions& options) {
    std::istringstream in{std::string(csv)};
    std::string header_line;
    if (!std::getline(in, header_line)) throw ParseError("trace file is empty");
    const auto header = split_csv(header_line);
    std::array<std::size_t, kColumns.size()> index{};
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        auto it = std::find(header.begin(), header.end(), kColumns[c]);
        if (it == header.end()) throw ParseError("trace header: missing column '" + std::string(kColumns[c]) + "'");
        index[c] = static_cast<std::size_t>(it - header.begin());
    }

    std::map<int, std::map<int, DemandVector>> rows_by_id;
    std::string line;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw ParseError("trace row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                             " columns, found " + std::to_string(cells.size()));
        }
        const int interval = parse_cell<int>(cells[index[0]], row, kColumns[0]);
        const int id = parse_cell<int>(cells[index[1]], row, kColumns[1]);
        if (interval < 0) throw ParseError("trace row " + std::to_string(row) + ", column 'interval': must be >= 0");
        DemandVector d;
        double* fields[] = {&d.cpu, &d.ram, &d.disk};
        for (std::size_t c = 0; c < 3; ++c) {
            *fields[c] = parse_cell<double>(cells[index[c + 2]], row, kColumns[c + 2]);
            if (!(*fields[c] >= 0.0)) {
                throw ParseError("trace row " + std::to_string(row) + ", column '" + std::string(kColumns[c + 2]) +
                                 "': demand must be >= 0");
            }
        }
        if (!rows_by_id[id].emplace(interval, d).second) {
            throw ParseError("trace row " + std::to_string(row) + ": duplicate interval " + std::to_string(interval) +
                             " for workload " + std::to_string(id));
        }
    }

    std::vector<Workload> templates;
    for (const auto& [id, rows] : rows_by_id) {
        Workload w;
        w.id = id;
        w.arrival_interval = rows.begin()->first;
        int expected = w.arrival_interval;
        for (const auto& [interval, d] : rows) {
            if (interval != expected) {
                throw ParseError("workload " + std::to_string(id) + ": non-contiguous intervals (gap before " +
                                 std::to_string(interval) + ")");
            }
            w.trace.push_back(d);
            ++expected;
        }
        w.sla_deadline = default_sla_deadline(w.length(), options.interval_s, options.sla_multiplier);
        templates.push_back(std::move(w));
    }
    return templates;
}

std::vector<Workload> load_traces(const std::filesystem::path& path, const TraceOptions& options) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open trace file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_traces(ss.str(), options);
}

std::string serialize_traces(std::span<const Workload> templates) {
    struct Row {
        int interval;
        int id;
        DemandVector d;
    };
    std::vector<Row> rows;
    for (const auto& w : templates) {
        for (int k = 0; k < w.length(); ++k) rows.push_back({w.arrival_interval + k, w.id, w.trace[k]});
    }
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return std::tie(a.interval, a.id) < std::tie(b.interval, b.id); });
    std::ostringstream out;
    out << "interval,workload_id,cpu_ips,ram_gb,disk_gb\n";
    for (const auto& r : rows) {
        out << r.interval << ',' << r.id << ',' << format_double(r.d.cpu) << ',' << format_double(r.d.ram) << ','
            << format_double(r.d.disk) << '\n';
    }
    return out.str();
}

double fit_arrival_rate(std::span<const Workload> templates) {
    if (templates.empty()) return 0.0;
    auto [lo, hi] = std::minmax_element(templates.begin(), templates.end(), [](const Workload& a, const Workload& b) {
        return a.arrival_interval < b.arrival_interval;
    });
    const int span = hi->arrival_interval - lo->arrival_interval + 1;
    return static_cast<double>(templates.size()) / static_cast<double>(span);
}

ArrivalPlan synthesize_arrivals(std::span<const Workload> templates, int horizon, double rate, std::uint64_t seed,
                                const TraceOptions& options) {
    if (horizon < 1) throw ConfigError("synthesize_arrivals: horizon must be >= 1");
    if (templates.empty()) throw ConfigError("synthesize_arrivals: templates must be non-empty");
    ArrivalPlan plan;
    if (!(rate > 0.0)) return plan;

    std::mt19937_64 rng(seed);
    std::poisson_distribution<int> count(rate);
    std::uniform_int_distribution<std::size_t> pick(0, templates.size() - 1);
    int next_id = 0;
    for (int t = 0; t < horizon; ++t) {
        const int n = count(rng);
        for (int k = 0; k < n; ++k) {
            Workload w = templates[pick(rng)];
            w.id = next_id++;
            w.arrival_interval = t;
            w.accrued_delay = 0.0;
            w.sla_deadline = default_sla_deadline(w.length(), options.interval_s, options.sla_multiplier);
            plan.push_back({t, std::move(w)});
        }
    }
    return plan;
}

ArrivalPlan synthesize_arrivals(std::span<const Workload> templates, int horizon, std::uint64_t seed,
                                const TraceOptions& options) {
    return synthesize_arrivals(templates, horizon, fit_arrival_rate(templates), seed, options);
}

std::vector<Workload> synthesize_sinusoidal_traces(const SyntheticTraceSpec& spec, std::uint64_t seed,
                                                   const TraceOptions& options) {
    if (spec.workloads < 1 || spec.span_intervals < 1 || spec.min_length < 1 || spec.max_length < spec.min_length) {
        throw ConfigError("synthetic trace spec: counts and lengths must be positive and ordered");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> arrival(0, spec.span_intervals - 1);
    std::uniform_int_distribution<int> length(spec.min_length, spec.max_length);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<Workload> out;
    for (int i = 0; i < spec.workloads; ++i) {
        Workload w;
        w.id = i;
        w.arrival_interval = arrival(rng);
        const int len = length(rng);
        const double base = std::max(100.0, spec.cpu_mean + spec.cpu_spread * unit(rng));
        const double ph = phase(rng);
        const double disk = spec.disk_mean * (1.0 + 0.5 * unit(rng));
        for (int k = 0; k < len; ++k) {
            const double wave = 1.0 + spec.amplitude * std::sin(2.0 * std::numbers::pi * k / spec.period + ph);
            const double cpu = std::max(0.0, base * wave + spec.noise * base * gauss(rng));
            const double ram = std::max(0.0, cpu / 1000.0 * spec.ram_per_kips);
            w.trace.push_back({cpu, ram, disk});
        }
        w.sla_deadline = default_sla_deadline(len, options.interval_s, options.sla_multiplier);
        out.push_back(std::move(w));
    }
    std::sort(out.begin(), out.end(), [](const Workload& a, const Workload& b) {
        return std::tie(a.arrival_interval, a.id) < std::tie(b.arrival_interval, b.id);
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<int>(i);
    return out;
}

std::vector<Workload> constant_traces(int workloads, int length, const DemandVector& demand,
                                      const TraceOptions& options) {
    std::vector<Workload> out;
    for (int i = 0; i < workloads; ++i) {
        Workload w;
        w.id = i;
        w.arrival_interval = i;
        w.trace.assign(static_cast<std::size_t>(length), demand);
        w.sla_deadline = default_sla_deadline(length, options.interval_s, options.sla_multiplier);
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace cilp
