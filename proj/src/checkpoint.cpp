#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cilp/model.hpp"

namespace cilp {
namespace {

constexpr const char* kFormat = "cilp-checkpoint";
constexpr int kVersion = 1;

using nlohmann::json;

}  // namespace

std::string checkpoint_json(const CilpModel& model) {
    const auto& c = model.config();
    json doc;
    doc["format"] = kFormat;
    doc["version"] = kVersion;
    doc["config"] = {{"width", c.width},       {"heads", c.heads},         {"depth", c.depth},
                     {"ffn_hidden", c.ffn_hidden}, {"gat_slope", c.gat_slope}, {"slope", c.slope},
                     {"positional_encoding", c.positional_encoding}};
    json params = json::object();
    for (const auto& [name, t] : model.params().tensors()) {
        const Mat& v = t.value();
        params[name] = {{"shape", {v.rows(), v.cols()}},
                        {"values", std::vector<double>(v.data(), v.data() + v.size())}};
    }
    doc["params"] = std::move(params);
    return doc.dump();
}

CilpModel checkpoint_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != kFormat) throw ParseError("checkpoint: unexpected format tag");
        const int version = doc.at("version").get<int>();
        if (version != kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
        const auto& jc = doc.at("config");
        ModelConfig c;
        c.width = jc.at("width").get<int>();
        c.heads = jc.at("heads").get<int>();
        c.depth = jc.at("depth").get<int>();
        c.ffn_hidden = jc.at("ffn_hidden").get<int>();
        c.gat_slope = jc.at("gat_slope").get<double>();
        c.slope = jc.at("slope").get<double>();
        c.positional_encoding = jc.at("positional_encoding").get<bool>();

        CilpModel model(c);
        std::map<std::string, Mat> values;
        for (const auto& [name, entry] : doc.at("params").items()) {
            const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
            const auto flat = entry.at("values").get<std::vector<double>>();
            if (shape.size() != 2 || shape[0] * shape[1] != static_cast<Eigen::Index>(flat.size())) {
                throw ParseError("checkpoint: parameter '" + name + "' has inconsistent shape");
            }
            values.emplace(name, Eigen::Map<const Mat>(flat.data(), shape[0], shape[1]));
        }
        model.params().restore(values);
        if (!model.params().all_finite()) throw ParseError("checkpoint: non-finite parameter values");
        return model;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const CilpModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
    out << checkpoint_json(model) << "\n";
}

CilpModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

}  // namespace cilp
