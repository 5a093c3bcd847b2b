#include "cilp/model.hpp"

#include <algorithm>
#include <map>
#include <random>

namespace cilp {

ModelConfig ModelConfig::full_scale() {
    ModelConfig c;
    c.width = 128;
    c.ffn_hidden = 256;
    c.depth = 4;
    return c;
}

void ModelConfig::validate() const {
    if (width < 2) throw ConfigError("model width must be >= 2");
    if (heads < 1 || width % heads != 0) throw ConfigError("model heads must divide width");
    if (depth < 1) throw ConfigError("model depth must be >= 1");
    if (ffn_hidden < 1) throw ConfigError("model ffn_hidden must be >= 1");
    if (!(gat_slope >= 0.0) || !(slope >= 0.0)) throw ConfigError("activation slopes must be >= 0");
}

Eigen::RowVector3d FeatureScale::normalize(const DemandVector& d) const {
    return {d.cpu / max_capacity.cpu, d.ram / max_capacity.ram, d.disk / max_capacity.disk};
}

DemandVector FeatureScale::denormalize(const Eigen::RowVector3d& v) const {
    return {v(0) * max_capacity.cpu, v(1) * max_capacity.ram, v(2) * max_capacity.disk};
}

FeatureVector FeatureScale::normalize(const FeatureVector& f) const {
    FeatureVector out = f;
    for (int i = 0; i < 2; ++i) {
        out(3 * i) /= max_capacity.cpu;
        out(3 * i + 1) /= max_capacity.ram;
        out(3 * i + 2) /= max_capacity.disk;
    }
    return out;
}

ScheduleGraph build_graph(std::span<const Host> hosts, const Placements& placements, const DemandMap& demands,
                          const FeatureScale& scale) {
    ScheduleGraph g;
    for (const auto& [id, _] : demands) g.workload_ids.push_back(id);
    for (const auto& h : hosts) g.host_ids.push_back(h.id);
    std::sort(g.host_ids.begin(), g.host_ids.end());

    const auto nw = static_cast<Eigen::Index>(g.workload_ids.size());
    const auto n = static_cast<Eigen::Index>(g.node_count());
    g.features = Mat::Zero(n, kNodeFeatures);
    g.adjacency = Mat::Zero(n, n);

    std::map<int, Eigen::Index> host_row;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(g.host_ids.size()); ++i) host_row[g.host_ids[i]] = nw + i;

    std::map<int, std::vector<DemandVector>> allocated;
    for (Eigen::Index i = 0; i < nw; ++i) {
        const int id = g.workload_ids[static_cast<std::size_t>(i)];
        const auto& d = demands.at(id);
        g.features.block(i, 0, 1, 3) = scale.normalize(d);
        auto placed = placements.find(id);
        if (placed == placements.end()) continue;
        auto row = host_row.find(placed->second);
        if (row == host_row.end()) continue;
        g.adjacency(i, row->second) = 1.0;
        g.adjacency(row->second, i) = 1.0;
        allocated[placed->second].push_back(d);
    }
    for (const auto& h : hosts) {
        const auto& alloc = allocated[h.id];
        g.features.row(host_row.at(h.id)) = scale.normalize(host_feature(*h.vm_type, alloc)).transpose();
    }
    return g;
}

ModelInput build_input(const SimState& state, const DemandMap& previous, std::span<const ActionFeature> candidates) {
    const FeatureScale scale(*state.catalog);
    ModelInput in;
    in.graph = build_graph(state.hosts, state.placements, previous, scale);
    in.previous = in.graph.features.topLeftCorner(static_cast<Eigen::Index>(in.graph.workload_ids.size()),
                                                  kDemandFeatures);
    in.candidates = Mat(static_cast<Eigen::Index>(candidates.size()), kNodeFeatures);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        in.candidates.row(static_cast<Eigen::Index>(i)) = candidates[i].feature.transpose();
    }
    return in;
}

CilpModel::CilpModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const int w = config_.width;
    const int graph_width = w / 2;
    const int window_width = w - graph_width;
    const int hidden = config_.ffn_hidden;

    gat_score_ = ad::Linear<double>(params_, "gat.score", kNodeFeatures, 1, rng);
    gat_value_ = ad::Linear<double>(params_, "gat.value", kNodeFeatures, graph_width, rng);
    window_ = ad::FeedForward<double>(params_, "window", kDemandFeatures, hidden, window_width, rng, config_.slope);

    auto make_block = [&](const std::string& name) {
        Block b;
        b.attention = ad::MultiHeadAttention<double>(params_, name + ".attention", w, config_.heads, rng);
        b.norm1 = ad::LayerNorm<double>(params_, name + ".norm1", w);
        b.ffn = ad::FeedForward<double>(params_, name + ".ffn", w, hidden, w, rng, config_.slope);
        b.norm2 = ad::LayerNorm<double>(params_, name + ".norm2", w);
        return b;
    };
    for (int i = 0; i < config_.depth; ++i) encoder_.push_back(make_block("encoder." + std::to_string(i)));
    demand_in_ = ad::Linear<double>(params_, "decoder.input", kDemandFeatures, w, rng);
    demand_norm_ = ad::LayerNorm<double>(params_, "decoder.input_norm", w);
    for (int i = 0; i < config_.depth; ++i) decoder_.push_back(make_block("decoder." + std::to_string(i)));
    demand_out_ = ad::Linear<double>(params_, "decoder.output", w, kDemandFeatures, rng);
    score_ = ad::FeedForward<double>(params_, "likelihood", w + kNodeFeatures, hidden, 1, rng, config_.slope);
}

Tensor CilpModel::apply(const Block& block, const Tensor& x) const {
    const auto mid = block.norm1(x + block.attention(x, x, x));
    return block.norm2(mid + block.ffn(mid));
}

Tensor CilpModel::encode_graph(const ScheduleGraph& graph) const {
    const auto n = static_cast<Eigen::Index>(graph.node_count());
    const auto x = Tensor::constant(graph.features);
    const auto scores = ad::leaky_relu(gat_score_(x), config_.gat_slope);
    // Row n attends over its neighbours k with weight softmax_k(score_k).
    const auto logits = ad::broadcast_rows(ad::transpose(scores), n);
    const auto attention = ad::masked_softmax_rows(logits, graph.adjacency);
    return ad::sigmoid(ad::matmul(attention, gat_value_(x)));
}

Tensor CilpModel::encode_window(const Tensor& previous) const { return ad::sigmoid(window_(previous)); }

Tensor CilpModel::encode(const Tensor& embedding) const {
    Tensor x = embedding;
    if (config_.positional_encoding) {
        x = x + Tensor::constant(ad::positional_encoding<double>(x.rows(), x.cols()));
    }
    for (const auto& block : encoder_) x = apply(block, x);
    return x;
}

Tensor CilpModel::predict_demands(const Tensor& encoded, const Tensor& previous) const {
    if (encoded.rows() != previous.rows()) {
        throw std::invalid_argument("predict_demands: " + std::to_string(encoded.rows()) + " encoded rows vs " +
                                    std::to_string(previous.rows()) + " demand rows");
    }
    Tensor x = demand_norm_(demand_in_(previous) + encoded);
    for (const auto& block : decoder_) x = apply(block, x);
    return previous + demand_out_(x);
}

Tensor CilpModel::likelihoods(const Tensor& encoded, const Tensor& candidates) const {
    if (candidates.rows() == 0) return Tensor::constant(Mat::Zero(0, 1));
    const auto pooled = encoded.rows() > 0 ? ad::mean_rows(encoded) : Tensor::constant(Mat::Zero(1, encoded.cols()));
    const auto joined = ad::concat_cols(ad::broadcast_rows(pooled, candidates.rows()), candidates);
    return ad::sigmoid(score_(joined));
}

ModelOutput CilpModel::forward(const ModelInput& input) const {
    const auto nw = static_cast<Eigen::Index>(input.graph.workload_ids.size());
    if (input.previous.rows() != nw || input.previous.cols() != kDemandFeatures) {
        throw std::invalid_argument("forward: previous demands must be |W| x 3");
    }
    if (input.candidates.cols() != kNodeFeatures && input.candidates.rows() > 0) {
        throw std::invalid_argument("forward: candidate features must have 6 columns");
    }
    const auto graph = ad::slice_rows(encode_graph(input.graph), 0, nw);
    const auto previous = Tensor::constant(input.previous);
    const auto encoded = encode(ad::concat_cols(graph, encode_window(previous)));
    Mat cand = input.candidates;
    if (cand.rows() == 0) cand.resize(0, kNodeFeatures);
    return {predict_demands(encoded, previous), likelihoods(encoded, Tensor::constant(cand))};
}

Prediction predict(const CilpModel& model, const ModelInput& input, const FeatureScale& scale) {
    const auto out = model.forward(input);
    Prediction p;
    const Mat& w = out.demands.value();
    for (std::size_t i = 0; i < input.graph.workload_ids.size(); ++i) {
        const Eigen::RowVector3d row = w.row(static_cast<Eigen::Index>(i)).cwiseMax(0.0);
        p.demands.emplace(input.graph.workload_ids[i], scale.denormalize(row));
    }
    const Mat& l = out.likelihoods.value();
    p.likelihoods.assign(l.data(), l.data() + l.size());
    return p;
}

}  // namespace cilp
