#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cilp/train.hpp"

namespace cilp {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "cilp-dataset";
constexpr int kVersion = 1;
constexpr const char* kHeader =
    "row,episode,t,workload_id,prev_cpu,prev_ram,prev_disk,target_cpu,target_ram,target_disk";

std::filesystem::path sidecar(const std::filesystem::path& csv_path) {
    auto p = csv_path;
    return p.replace_extension(".json");
}

std::vector<double> row_values(const FeatureVector& f) { return {f.data(), f.data() + f.size()}; }

double parse_double(std::string_view cell, int line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw ParseError("dataset line " + std::to_string(line) + ": invalid number '" + std::string(cell) + "'");
    }
    return v;
}

}  // namespace

void save_dataset(std::span<const TrainingRow> rows, const std::filesystem::path& csv_path) {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot write dataset '" + csv_path.string() + "'");
    csv << kHeader << "\n";
    json doc;
    doc["format"] = kFormat;
    doc["version"] = kVersion;
    json jrows = json::array();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const auto& g = row.input.graph;
        const auto nw = g.workload_ids.size();
        for (std::size_t i = 0; i < nw; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            csv << r << "," << row.episode << "," << row.t << "," << g.workload_ids[i];
            for (int c = 0; c < kDemandFeatures; ++c) csv << "," << format_double(row.input.previous(k, c));
            for (int c = 0; c < kDemandFeatures; ++c) csv << "," << format_double(row.target(k, c));
            csv << "\n";
        }
        json jr;
        jr["episode"] = row.episode;
        jr["t"] = row.t;
        jr["workload_ids"] = g.workload_ids;
        jr["host_ids"] = g.host_ids;
        json hosts = json::array();
        json edges = json::array();
        for (std::size_t h = 0; h < g.host_ids.size(); ++h) {
            const auto node = static_cast<Eigen::Index>(nw + h);
            FeatureVector f = g.features.row(node).transpose();
            hosts.push_back(row_values(f));
            for (std::size_t i = 0; i < nw; ++i) {
                if (g.adjacency(static_cast<Eigen::Index>(i), node) != 0.0) {
                    edges.push_back({g.workload_ids[i], g.host_ids[h]});
                }
            }
        }
        jr["host_features"] = std::move(hosts);
        jr["edges"] = std::move(edges);
        json actions = json::array();
        for (std::size_t a = 0; a < row.actions.size(); ++a) {
            const auto& act = row.actions[a];
            actions.push_back({{"kind", act.kind == ActionKind::Deallocate ? "deallocate" : "provision"},
                               {"host_id", act.host_id},
                               {"vm_type", act.vm_type},
                               {"feature", row_values(act.feature)},
                               {"label", row.labels.at(a)}});
        }
        jr["actions"] = std::move(actions);
        jrows.push_back(std::move(jr));
    }
    doc["rows"] = std::move(jrows);
    std::ofstream js(sidecar(csv_path));
    if (!js) throw std::runtime_error("cannot write dataset sidecar for '" + csv_path.string() + "'");
    js << doc.dump() << "\n";
}

std::vector<TrainingRow> load_dataset(const std::filesystem::path& csv_path) {
    std::ifstream js(sidecar(csv_path));
    if (!js) throw ParseError("cannot open dataset sidecar for '" + csv_path.string() + "'");
    json doc;
    try {
        doc = json::parse(js);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("dataset sidecar: ") + e.what());
    }

    std::vector<TrainingRow> rows;
    try {
        if (doc.at("format").get<std::string>() != kFormat || doc.at("version").get<int>() != kVersion) {
            throw ParseError("dataset sidecar: unsupported format or version");
        }
        for (const auto& jr : doc.at("rows")) {
            TrainingRow row;
            row.episode = jr.at("episode").get<int>();
            row.t = jr.at("t").get<int>();
            auto& g = row.input.graph;
            g.workload_ids = jr.at("workload_ids").get<std::vector<int>>();
            g.host_ids = jr.at("host_ids").get<std::vector<int>>();
            const auto nw = static_cast<Eigen::Index>(g.workload_ids.size());
            const auto n = static_cast<Eigen::Index>(g.node_count());
            g.features = Mat::Zero(n, kNodeFeatures);
            g.adjacency = Mat::Zero(n, n);
            const auto host_features = jr.at("host_features").get<std::vector<std::vector<double>>>();
            if (host_features.size() != g.host_ids.size()) throw ParseError("dataset sidecar: host feature count");
            std::map<int, Eigen::Index> wrow;
            std::map<int, Eigen::Index> hrow;
            for (Eigen::Index i = 0; i < nw; ++i) wrow[g.workload_ids[static_cast<std::size_t>(i)]] = i;
            for (std::size_t h = 0; h < g.host_ids.size(); ++h) {
                const auto node = nw + static_cast<Eigen::Index>(h);
                hrow[g.host_ids[h]] = node;
                if (host_features[h].size() != kNodeFeatures) throw ParseError("dataset sidecar: host feature width");
                for (int c = 0; c < kNodeFeatures; ++c) g.features(node, c) = host_features[h][c];
            }
            for (const auto& e : jr.at("edges")) {
                const auto w = wrow.at(e.at(0).get<int>());
                const auto h = hrow.at(e.at(1).get<int>());
                g.adjacency(w, h) = 1.0;
                g.adjacency(h, w) = 1.0;
            }
            for (const auto& ja : jr.at("actions")) {
                ActionFeature a;
                a.kind = ja.at("kind").get<std::string>() == "deallocate" ? ActionKind::Deallocate
                                                                          : ActionKind::Provision;
                a.host_id = ja.at("host_id").get<int>();
                a.vm_type = ja.at("vm_type").get<std::string>();
                const auto f = ja.at("feature").get<std::vector<double>>();
                if (f.size() != kNodeFeatures) throw ParseError("dataset sidecar: action feature width");
                for (int c = 0; c < kNodeFeatures; ++c) a.feature(c) = f[c];
                row.labels.push_back(ja.at("label").get<int>());
                row.actions.push_back(std::move(a));
            }
            row.input.previous = Mat::Zero(nw, kDemandFeatures);
            row.target = Mat::Zero(nw, kDemandFeatures);
            row.input.candidates = Mat(static_cast<Eigen::Index>(row.actions.size()), kNodeFeatures);
            for (std::size_t a = 0; a < row.actions.size(); ++a) {
                row.input.candidates.row(static_cast<Eigen::Index>(a)) = row.actions[a].feature.transpose();
            }
            rows.push_back(std::move(row));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("dataset sidecar: ") + e.what());
    } catch (const std::out_of_range&) {
        throw ParseError(std::string("dataset sidecar: edge references unknown node"));
    }

    std::ifstream csv(csv_path);
    if (!csv) throw ParseError("cannot open dataset '" + csv_path.string() + "'");
    std::string line;
    if (!std::getline(csv, line) || line != kHeader) throw ParseError("dataset: unexpected header");
    int line_no = 1;
    while (std::getline(csv, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string_view> cells;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            cells.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (cells.size() != 10) throw ParseError("dataset line " + std::to_string(line_no) + ": expected 10 columns");
        const auto r = static_cast<std::size_t>(parse_double(cells[0], line_no));
        if (r >= rows.size()) throw ParseError("dataset line " + std::to_string(line_no) + ": unknown row");
        auto& row = rows[r];
        const int id = static_cast<int>(parse_double(cells[3], line_no));
        const auto& ids = row.input.graph.workload_ids;
        const auto it = std::find(ids.begin(), ids.end(), id);
        if (it == ids.end()) throw ParseError("dataset line " + std::to_string(line_no) + ": unknown workload");
        const auto k = static_cast<Eigen::Index>(it - ids.begin());
        for (int c = 0; c < kDemandFeatures; ++c) {
            row.input.previous(k, c) = parse_double(cells[4 + c], line_no);
            row.target(k, c) = parse_double(cells[7 + c], line_no);
        }
    }
    for (auto& row : rows) {
        const auto nw = static_cast<Eigen::Index>(row.input.graph.workload_ids.size());
        row.input.graph.features.topLeftCorner(nw, kDemandFeatures) = row.input.previous;
    }
    return rows;
}

void write_history(std::span<const EpochStats> history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write history '" + path.string() + "'");
    out << "epoch,train_loss,val_loss\n";
    for (const auto& h : history) {
        out << h.epoch << "," << format_double(h.train_loss) << "," << format_double(h.val_loss) << "\n";
    }
}

}  // namespace cilp
