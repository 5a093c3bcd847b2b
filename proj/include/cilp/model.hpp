#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cilp/autodiff.hpp"
#include "cilp/cosim.hpp"
#include "cilp/layers.hpp"

namespace cilp {

using Mat = ad::Matrix<double>;
using Tensor = ad::Tensor<double>;
using ModelParams = ad::BasicModelParams<double>;

struct ModelConfig {
    int width = 64;
    int heads = 4;
    /// Encoder and decoder blocks.
    int depth = 1;
    int ffn_hidden = 64;
    /// Negative slope inside the graph attention scores.
    double gat_slope = 0.25;
    /// Negative slope of every feed-forward network.
    double slope = 0.01;
    bool positional_encoding = true;

    /// Hidden sizes 128/256 and four blocks.
    static ModelConfig full_scale();
    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr int kNodeFeatures = 6;
inline constexpr int kDemandFeatures = 3;

/// Bipartite workload/host graph. Nodes are workloads by id, then hosts by id.
struct ScheduleGraph {
    std::vector<int> workload_ids;
    std::vector<int> host_ids;
    /// One row per node: workloads carry [demand, 0, 0, 0], hosts their host feature; normalized.
    Mat features;
    /// Symmetric 0/1 matrix over nodes.
    Mat adjacency;

    std::size_t node_count() const { return workload_ids.size() + host_ids.size(); }
};

enum class ActionKind { Deallocate, Provision };

struct ActionFeature {
    ActionKind kind = ActionKind::Provision;
    /// Host to remove, for deallocations.
    int host_id = -1;
    /// Type to create, for provisions.
    std::string vm_type;
    /// Previous-interval host feature, or [0, 0, 0, capacity] for provisions; normalized.
    FeatureVector feature = FeatureVector::Zero();

    friend bool operator==(const ActionFeature&, const ActionFeature&) = default;
};

/// Everything the network sees for one interval, in normalized units.
struct ModelInput {
    ScheduleGraph graph;
    /// |W| x 3 previous-interval demands, rows in graph.workload_ids order.
    Mat previous;
    /// C x 6 candidate features.
    Mat candidates;
};

/// Divides every demand and capacity by the catalog's largest capacity per resource.
struct FeatureScale {
    DemandVector max_capacity{1.0, 1.0, 1.0};

    explicit FeatureScale(const VmCatalog& catalog) : max_capacity(catalog.max_capacity()) {}
    FeatureScale() = default;

    Eigen::RowVector3d normalize(const DemandVector& d) const;
    DemandVector denormalize(const Eigen::RowVector3d& v) const;
    FeatureVector normalize(const FeatureVector& f) const;
};

/// Graph of `placements` over `hosts`, with node features from `demands`.
ScheduleGraph build_graph(std::span<const Host> hosts, const Placements& placements, const DemandMap& demands,
                          const FeatureScale& scale);

/// Inputs for the current interval of `state` given W_{t-1}.
ModelInput build_input(const SimState& state, const DemandMap& previous, std::span<const ActionFeature> candidates);

struct ModelOutput {
    /// |W| x 3 normalized demand forecast (unclamped).
    Tensor demands;
    /// C x 1 scores in (0, 1).
    Tensor likelihoods;
};

class CilpModel {
public:
    explicit CilpModel(const ModelConfig& config = {}, std::uint64_t seed = 0);
    // Parameters are shared handles; copies would alias them.
    CilpModel(const CilpModel&) = delete;
    CilpModel& operator=(const CilpModel&) = delete;
    CilpModel(CilpModel&&) = default;
    CilpModel& operator=(CilpModel&&) = default;

    const ModelConfig& config() const { return config_; }
    ModelParams& params() { return params_; }
    const ModelParams& params() const { return params_; }

    /// Graph attention over all nodes; rows follow the graph's node order.
    Tensor encode_graph(const ScheduleGraph& graph) const;
    /// sigmoid(FFN(W)) per workload row.
    Tensor encode_window(const Tensor& previous) const;
    /// Positional encoding plus the encoder blocks.
    Tensor encode(const Tensor& embedding) const;
    /// Decoder over E^0 and W_{t-1}; W_{t-1} is added back to the output.
    Tensor predict_demands(const Tensor& encoded, const Tensor& previous) const;
    Tensor likelihoods(const Tensor& encoded, const Tensor& candidates) const;

    ModelOutput forward(const ModelInput& input) const;

private:
    ModelConfig config_;
    ModelParams params_;

    ad::Linear<double> gat_score_;
    ad::Linear<double> gat_value_;
    ad::FeedForward<double> window_;
    struct Block {
        ad::MultiHeadAttention<double> attention;
        ad::LayerNorm<double> norm1;
        ad::FeedForward<double> ffn;
        ad::LayerNorm<double> norm2;
    };
    Tensor apply(const Block& block, const Tensor& x) const;

    std::vector<Block> encoder_;
    ad::Linear<double> demand_in_;
    ad::LayerNorm<double> demand_norm_;
    std::vector<Block> decoder_;
    ad::Linear<double> demand_out_;
    ad::FeedForward<double> score_;
};

/// Demand forecast and scores for inference: demands clamped at zero and in
/// workload units, likelihoods as plain values.
struct Prediction {
    DemandMap demands;
    std::vector<double> likelihoods;
};

Prediction predict(const CilpModel& model, const ModelInput& input, const FeatureScale& scale);

/// JSON checkpoint: format tag, version, config and every parameter's shape and values.
void save_checkpoint(const CilpModel& model, const std::filesystem::path& path);
CilpModel load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_json(const CilpModel& model);
CilpModel checkpoint_from_json(std::string_view text);

}  // namespace cilp
