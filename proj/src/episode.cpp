#include "cilp/episode.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cilp {
namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& known, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (known.count(key) == 0) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

template <typename T>
void read(const json& obj, const char* key, std::optional<T>& out) {
    if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

void read_path(const json& obj, const char* key, std::optional<std::filesystem::path>& out) {
    if (auto it = obj.find(key); it != obj.end()) out = std::filesystem::path(it->get<std::string>());
}

double mean_of(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

}  // namespace

void EpisodeConfig::validate() const {
    params.validate();
    if (intervals < 1) throw ConfigError("intervals must be >= 1");
    if (max_hosts && *max_hosts < 1) throw ConfigError("max_hosts must be >= 1");
    static const std::set<std::string> kProvisioners{"cilp", "reactive", "oracle", "none"};
    if (kProvisioners.count(provisioner) == 0) throw ConfigError("unknown provisioner '" + provisioner + "'");
    model.validate();
    train.validate();
    if (dataset.episodes < 1 || dataset.horizon < 1) throw ConfigError("dataset episodes and horizon must be >= 1");
    if (!(dataset.explore >= 0.0 && dataset.explore <= 1.0)) throw ConfigError("dataset explore must be in [0, 1]");
}

EpisodeConfig parse_episode_config(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    EpisodeConfig c;
    try {
        check_keys(doc,
                   {"interval_s", "intervals", "gamma", "alpha", "beta", "delta", "migration_rate_gb_per_s", "seed",
                    "trace_seed", "catalog", "max_hosts", "traces", "synthetic", "arrival_rate", "initial_hosts",
                    "provisioner", "checkpoint", "out", "model", "train", "dataset"},
                   "config");
        read(doc, "interval_s", c.params.interval_s);
        read(doc, "intervals", c.intervals);
        read(doc, "gamma", c.params.gamma);
        read(doc, "alpha", c.params.alpha);
        read(doc, "beta", c.params.beta);
        read(doc, "delta", c.params.delta);
        read(doc, "migration_rate_gb_per_s", c.params.migration_rate_gb_per_s);
        read(doc, "seed", c.seed);
        read(doc, "trace_seed", c.trace_seed);
        read_path(doc, "catalog", c.catalog_path);
        read(doc, "max_hosts", c.max_hosts);
        read_path(doc, "traces", c.trace_path);
        read(doc, "arrival_rate", c.arrival_rate);
        read(doc, "initial_hosts", c.initial_hosts);
        read(doc, "provisioner", c.provisioner);
        read_path(doc, "checkpoint", c.checkpoint);
        read_path(doc, "out", c.out_dir);
        if (auto it = doc.find("synthetic"); it != doc.end()) {
            check_keys(*it,
                       {"workloads", "span_intervals", "min_length", "max_length", "period", "amplitude", "noise",
                        "cpu_mean", "cpu_spread", "ram_per_kips", "disk_mean"},
                       "synthetic");
            auto& s = c.synthetic;
            read(*it, "workloads", s.workloads);
            read(*it, "span_intervals", s.span_intervals);
            read(*it, "min_length", s.min_length);
            read(*it, "max_length", s.max_length);
            read(*it, "period", s.period);
            read(*it, "amplitude", s.amplitude);
            read(*it, "noise", s.noise);
            read(*it, "cpu_mean", s.cpu_mean);
            read(*it, "cpu_spread", s.cpu_spread);
            read(*it, "ram_per_kips", s.ram_per_kips);
            read(*it, "disk_mean", s.disk_mean);
        }
        if (auto it = doc.find("model"); it != doc.end()) {
            check_keys(*it, {"width", "heads", "depth", "ffn_hidden", "gat_slope", "slope", "positional_encoding"},
                       "model");
            read(*it, "width", c.model.width);
            read(*it, "heads", c.model.heads);
            read(*it, "depth", c.model.depth);
            read(*it, "ffn_hidden", c.model.ffn_hidden);
            read(*it, "gat_slope", c.model.gat_slope);
            read(*it, "slope", c.model.slope);
            read(*it, "positional_encoding", c.model.positional_encoding);
        }
        if (auto it = doc.find("train"); it != doc.end()) {
            check_keys(*it,
                       {"learning_rate", "weight_decay", "batch_size", "max_epochs", "patience", "split", "chunk",
                        "max_seconds", "seed"},
                       "train");
            read(*it, "learning_rate", c.train.learning_rate);
            read(*it, "weight_decay", c.train.weight_decay);
            read(*it, "batch_size", c.train.batch_size);
            read(*it, "max_epochs", c.train.max_epochs);
            read(*it, "patience", c.train.patience);
            read(*it, "split", c.train.split);
            read(*it, "chunk", c.train.chunk);
            read(*it, "max_seconds", c.train.max_seconds);
            read(*it, "seed", c.train.seed);
        }
        if (auto it = doc.find("dataset"); it != doc.end()) {
            check_keys(*it, {"episodes", "horizon", "explore"}, "dataset");
            read(*it, "episodes", c.dataset.episodes);
            read(*it, "horizon", c.dataset.horizon);
            read(*it, "explore", c.dataset.explore);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

EpisodeConfig load_episode_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    auto c = parse_episode_config(ss.str());
    const auto base = path.parent_path();
    for (auto* p : {&c.catalog_path, &c.trace_path, &c.checkpoint, &c.out_dir}) {
        if (*p && p->value().is_relative()) *p = base / p->value();
    }
    return c;
}

std::shared_ptr<const VmCatalog> resolve_catalog(const EpisodeConfig& config) {
    VmCatalog catalog = config.catalog_path ? load_catalog(*config.catalog_path) : default_catalog();
    if (config.max_hosts) {
        std::vector<VmType> types;
        for (const auto& t : catalog.types()) types.push_back(*t);
        catalog = VmCatalog(std::move(types), *config.max_hosts);
    }
    return std::make_shared<const VmCatalog>(std::move(catalog));
}

std::vector<Workload> resolve_templates(const EpisodeConfig& config) {
    const TraceOptions opts{config.params.interval_s};
    if (config.trace_path) return load_traces(*config.trace_path, opts);
    return synthesize_sinusoidal_traces(config.synthetic, config.trace_seed, opts);
}

std::vector<std::string> resolve_initial_hosts(const EpisodeConfig& config, const VmCatalog& catalog) {
    if (!config.initial_hosts.empty()) return config.initial_hosts;
    std::vector<std::string> names;
    for (const auto& t : catalog.types()) names.push_back(t->name);
    return names;
}

EpisodeSummary run_episode(const EpisodeConfig& config, std::shared_ptr<const CilpModel> model) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const auto catalog = resolve_catalog(config);
    const auto templates = resolve_templates(config);
    const TraceOptions opts{config.params.interval_s};
    const auto plan = config.arrival_rate > 0.0
                          ? synthesize_arrivals(templates, config.intervals, config.arrival_rate, config.seed, opts)
                          : synthesize_arrivals(templates, config.intervals, config.seed, opts);
    if (config.provisioner == "cilp" && !model) {
        if (!config.checkpoint) throw ConfigError("provisioner 'cilp' requires a checkpoint");
        model = std::make_shared<const CilpModel>(load_checkpoint(*config.checkpoint));
    }
    auto provisioner = make_provisioner(config.provisioner, model);
    const BestFitScheduler scheduler;

    SimState state = make_state(catalog, config.params, resolve_initial_hosts(config, *catalog), config.seed);
    EpisodeSummary s;
    s.provisioner = config.provisioner;
    s.seed = config.seed;
    s.intervals = config.intervals;
    for (int t = 0; t < config.intervals; ++t) {
        admit_due(state, plan);
        const auto previous = previous_demands(state);
        const auto result = provisioner->decide(state, previous, scheduler);
        s.reports.push_back(step(state, true_demands(state), result.decision, result.schedule));
    }

    int completed = 0;
    int violations = 0;
    double response = 0.0;
    for (const auto& r : s.reports) {
        s.mean_r += r.r;
        s.mean_cost_usd += r.cost_usd;
        s.mean_qos += r.qos;
        s.mean_reward += r.reward;
        s.total_energy_kwh += r.energy_wh / 1000.0;
        s.migrations += r.migrations;
        s.provisioning_overhead_s += r.provision_overhead_s;
        completed += r.completed;
        violations += r.sla_violations;
        response += r.mean_response_s * r.completed;
    }
    const double n = static_cast<double>(s.reports.size());
    s.mean_r /= n;
    s.mean_cost_usd /= n;
    s.mean_qos /= n;
    s.mean_reward /= n;
    if (completed > 0) {
        s.mean_response_s = response / completed;
        s.sla_fraction = static_cast<double>(violations) / completed;
    }
    s.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (config.out_dir) {
        std::filesystem::create_directories(*config.out_dir);
        write_file(*config.out_dir / "intervals.csv", intervals_csv(s));
        write_file(*config.out_dir / "summary.json", summary_json(s));
    }
    return s;
}

std::string intervals_csv(const EpisodeSummary& summary) {
    std::ostringstream out;
    out << "t,r,cost_usd,q_e,q_r,q_sla,qos,reward,active_hosts,live_workloads,migrations,provisions,deallocations,"
           "energy_wh,completed,sla_violations,mean_response_s,provision_overhead_s\n";
    for (const auto& r : summary.reports) {
        out << r.t << "," << format_double(r.r) << "," << format_double(r.cost_usd) << "," << format_double(r.q_e)
            << "," << format_double(r.q_r) << "," << format_double(r.q_sla) << "," << format_double(r.qos) << ","
            << format_double(r.reward) << "," << r.active_hosts << "," << r.live_workloads << "," << r.migrations
            << "," << r.provisions << "," << r.deallocations << "," << format_double(r.energy_wh) << ","
            << r.completed << "," << r.sla_violations << "," << format_double(r.mean_response_s) << ","
            << format_double(r.provision_overhead_s) << "\n";
    }
    return out.str();
}

std::string summary_json(const EpisodeSummary& s) {
    json doc = {{"provisioner", s.provisioner},
                {"seed", s.seed},
                {"intervals", s.intervals},
                {"mean_r", s.mean_r},
                {"mean_cost_usd", s.mean_cost_usd},
                {"mean_qos", s.mean_qos},
                {"mean_reward", s.mean_reward},
                {"total_energy_kwh", s.total_energy_kwh},
                {"mean_response_s", s.mean_response_s},
                {"sla_fraction", s.sla_fraction},
                {"migrations", s.migrations},
                {"provisioning_overhead_s", s.provisioning_overhead_s},
                {"wall_time_s", s.wall_time_s}};
    return doc.dump(2) + "\n";
}

TrainedModel train_model(const EpisodeConfig& config) {
    config.validate();
    const auto catalog = resolve_catalog(config);
    const auto templates = resolve_templates(config);
    DatasetOptions opts = config.dataset;
    opts.initial_hosts = resolve_initial_hosts(config, *catalog);
    opts.arrival_rate = config.arrival_rate;
    const auto rows = generate_dataset(templates, catalog, config.params, opts, config.seed);
    TrainedModel out;
    out.model = std::make_shared<CilpModel>(config.model, config.train.seed);
    out.fit = fit(*out.model, rows, config.train);
    out.dataset_rows = rows.size();
    return out;
}

CompareRow aggregate(const std::string& label, std::span<const EpisodeSummary> runs, double train_time_s) {
    std::vector<double> r, cost, qos, reward;
    for (const auto& s : runs) {
        r.push_back(s.mean_r);
        cost.push_back(s.mean_cost_usd);
        qos.push_back(s.mean_qos);
        reward.push_back(s.mean_reward);
    }
    CompareRow row;
    row.label = label;
    row.runs = static_cast<int>(runs.size());
    row.r_mean = mean_of(r);
    row.r_std = std_of(r);
    row.cost_mean = mean_of(cost);
    row.cost_std = std_of(cost);
    row.qos_mean = mean_of(qos);
    row.qos_std = std_of(qos);
    row.reward_mean = mean_of(reward);
    row.reward_std = std_of(reward);
    row.train_time_s = train_time_s;
    return row;
}

std::vector<CompareRow> compare(const EpisodeConfig& base, std::span<const std::string> provisioners,
                                std::span<const std::uint64_t> seeds, std::shared_ptr<const CilpModel> model,
                                double train_time_s) {
    std::vector<CompareRow> rows;
    for (const auto& name : provisioners) {
        std::vector<EpisodeSummary> runs;
        for (auto seed : seeds) {
            EpisodeConfig c = base;
            c.provisioner = name;
            c.seed = seed;
            c.out_dir.reset();
            runs.push_back(run_episode(c, model));
        }
        rows.push_back(aggregate(name, runs, name == "cilp" ? train_time_s : 0.0));
    }
    return rows;
}

std::string compare_csv(std::span<const CompareRow> rows) {
    std::ostringstream out;
    out << "provisioner,runs,r_mean,r_std,cost_mean,cost_std,qos_mean,qos_std,reward_mean,reward_std,train_time_s\n";
    for (const auto& r : rows) {
        out << r.label << "," << r.runs << "," << format_double(r.r_mean) << "," << format_double(r.r_std) << ","
            << format_double(r.cost_mean) << "," << format_double(r.cost_std) << "," << format_double(r.qos_mean)
            << "," << format_double(r.qos_std) << "," << format_double(r.reward_mean) << ","
            << format_double(r.reward_std) << "," << format_double(r.train_time_s) << "\n";
    }
    return out.str();
}

std::vector<GammaRow> sweep_gamma(const EpisodeConfig& base, std::span<const double> gammas,
                                  std::span<const std::uint64_t> seeds, std::shared_ptr<const CilpModel> model) {
    std::vector<GammaRow> rows;
    for (double g : gammas) {
        EpisodeConfig c = base;
        c.params.gamma = g;
        const std::string name = c.provisioner;
        auto result = compare(c, std::span<const std::string>(&name, 1), seeds, model);
        rows.push_back({g, result.front()});
    }
    return rows;
}

std::string sweep_csv(std::span<const GammaRow> rows) {
    std::ostringstream out;
    out << "gamma,provisioner,runs,r_mean,cost_mean,qos_mean,reward_mean\n";
    for (const auto& row : rows) {
        const auto& s = row.stats;
        out << format_double(row.gamma) << "," << s.label << "," << s.runs << "," << format_double(s.r_mean) << ","
            << format_double(s.cost_mean) << "," << format_double(s.qos_mean) << ","
            << format_double(s.reward_mean) << "\n";
    }
    return out.str();
}

}  // namespace cilp
