#include "flowlab/flow_io.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace flowlab {

nlohmann::json flow_to_json(const Flow& flow) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : flow.blocks()) {
        blocks.push_back({{"rotation", b.rotation().matrix()},
                          {"bin_centers", b.conditioner().centers()},
                          {"scale_knots", b.conditioner().scale_knots()},
                          {"shift_knots", b.conditioner().shift_knots()},
                          {"damping", b.damping()},
                          {"lipschitz", b.lipschitz()}});
    }
    return {{"schema", kFlowSchema}, {"blocks", std::move(blocks)}};
}

Flow flow_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("schema", "") != kFlowSchema)
        throw Error(fmt::format("flow json: expected schema '{}'", kFlowSchema));
    Flow flow;
    std::size_t index = 0;
    for (const auto& b : doc.at("blocks")) {
        try {
            auto q = b.at("rotation").get<std::vector<double>>();
            const auto dim = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(q.size()))));
            flow.push_back(CouplingBlock(RotationLayer::from_matrix(dim, std::move(q)),
                                         SplineConditioner(b.at("bin_centers").get<std::vector<double>>(),
                                                           b.at("scale_knots").get<std::vector<double>>(),
                                                           b.at("shift_knots").get<std::vector<double>>()),
                                         b.at("damping").get<double>(), b.at("lipschitz").get<double>()));
        } catch (const nlohmann::json::exception& e) {
            throw Error(fmt::format("flow json: block {}: {}", index, e.what()));
        } catch (const Error& e) {
            throw Error(fmt::format("flow json: block {}: {}", index, e.what()));
        }
        ++index;
    }
    return flow;
}

void save_flow(const std::string& path, const Flow& flow) {
    std::ofstream out(path);
    if (!out) throw Error(fmt::format("cannot open '{}' for writing", path));
    out << flow_to_json(flow).dump(1) << '\n';
}

Flow load_flow(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("cannot open '{}'", path));
    return flow_from_json(nlohmann::json::parse(in));
}

}  // namespace flowlab
