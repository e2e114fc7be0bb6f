#include "flowlab/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "flowlab/toml.hpp"

namespace flowlab {

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw Error(fmt::format("config: {}: {}", path, what));
}

std::vector<double> get_vector(const Json& j, const std::string& path) {
    if (!j.is_array()) bad(path, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) bad(path, "expected an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

// Accepts [[a, b], [c, d]] or a flat row-major list.
std::vector<double> get_matrix(const Json& j, std::size_t dim, const std::string& path) {
    std::vector<double> out;
    if (j.is_array() && !j.empty() && j.front().is_array()) {
        if (j.size() != dim) bad(path, fmt::format("expected {} rows", dim));
        for (std::size_t r = 0; r < dim; ++r) {
            auto row = get_vector(j[r], fmt::format("{}[{}]", path, r));
            if (row.size() != dim) bad(path, fmt::format("expected {} columns", dim));
            out.insert(out.end(), row.begin(), row.end());
        }
    } else {
        out = get_vector(j, path);
        if (out.size() != dim * dim) bad(path, fmt::format("expected {} entries", dim * dim));
    }
    return out;
}

Json matrix_json(const std::vector<double>& m, std::size_t dim) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < dim; ++r)
        rows.push_back(std::vector<double>(m.begin() + static_cast<std::ptrdiff_t>(r * dim),
                                           m.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim)));
    return rows;
}

template <typename F>
auto wrap(const std::string& path, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        const std::string what = e.what();
        if (what.rfind("config:", 0) == 0) throw;
        bad(path, what);
    }
}

}  // namespace

Json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("config: cannot open '{}'", path));
    std::stringstream buf;
    buf << in.rdbuf();
    if (std::filesystem::path(path).extension() == ".json") {
        try {
            return Json::parse(buf.str());
        } catch (const Json::exception& e) {
            throw Error(fmt::format("config: {}: {}", path, e.what()));
        }
    }
    return parse_toml(buf.str(), path);
}

double get_double(const Json& table, const std::string& key, double fallback, const std::string& key_path) {
    if (!table.contains(key)) return fallback;
    const auto& v = table.at(key);
    if (!v.is_number()) bad(join(key_path, key), "expected a number");
    return v.get<double>();
}

std::uint64_t get_unsigned(const Json& table, const std::string& key, std::uint64_t fallback,
                           const std::string& key_path) {
    if (!table.contains(key)) return fallback;
    const auto& v = table.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    bad(join(key_path, key), "expected a non-negative integer");
}

bool get_bool(const Json& table, const std::string& key, bool fallback, const std::string& key_path) {
    if (!table.contains(key)) return fallback;
    const auto& v = table.at(key);
    if (!v.is_boolean()) bad(join(key_path, key), "expected true or false");
    return v.get<bool>();
}

std::string get_string(const Json& table, const std::string& key, const std::string& fallback,
                       const std::string& key_path) {
    if (!table.contains(key)) return fallback;
    const auto& v = table.at(key);
    if (!v.is_string()) bad(join(key_path, key), "expected a string");
    return v.get<std::string>();
}

Json get_table(const Json& table, const std::string& key, const std::string& key_path) {
    if (!table.contains(key)) return Json::object();
    const auto& v = table.at(key);
    if (!v.is_object()) bad(join(key_path, key), "expected a table");
    return v;
}

void require_known_keys(const Json& table, std::initializer_list<const char*> allowed, const std::string& key_path) {
    if (!table.is_object()) bad(key_path.empty() ? "<root>" : key_path, "expected a table");
    for (const auto& [key, value] : table.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known) bad(join(key_path, key), "unknown key");
    }
}

DensitySpec parse_density(const Json& table, const std::string& key_path) {
    if (!table.is_object()) bad(key_path, "expected a density table");
    const std::string type = get_string(table, "type", "", key_path);
    Json r = {{"type", type}};
    if (type == "ring" || type == "ring_mixture") {
        require_known_keys(table, {"type", "M", "sigma", "radius"}, key_path);
        const auto m = get_unsigned(table, "M", 20, key_path);
        const double sigma = get_double(table, "sigma", 0.3, key_path);
        const double radius = get_double(table, "radius", 1.0, key_path);
        if (m == 0) bad(join(key_path, "M"), "must be positive");
        if (!(sigma > 0.0)) bad(join(key_path, "sigma"), "must be positive");
        if (!(radius > 0.0)) bad(join(key_path, "radius"), "must be positive");
        r = {{"type", "ring"}, {"M", m}, {"sigma", sigma}, {"radius", radius}};
        return {AnalyticDensity::ring_mixture(m, sigma, radius), r};
    }
    if (type == "standard_normal") {
        require_known_keys(table, {"type", "dim"}, key_path);
        const auto dim = get_unsigned(table, "dim", 2, key_path);
        if (dim == 0) bad(join(key_path, "dim"), "must be positive");
        r["dim"] = dim;
        return {AnalyticDensity::standard_normal(dim), r};
    }
    if (type == "gaussian") {
        require_known_keys(table, {"type", "mean", "covariance", "rho"}, key_path);
        std::vector<double> mean = table.contains("mean") ? get_vector(table.at("mean"), join(key_path, "mean"))
                                                          : std::vector<double>{0.0, 0.0};
        const std::size_t dim = mean.size();
        if (dim == 0) bad(join(key_path, "mean"), "must not be empty");
        std::vector<double> cov(dim * dim, 0.0);
        if (table.contains("covariance") && table.contains("rho"))
            bad(join(key_path, "rho"), "give either rho or covariance");
        if (table.contains("covariance")) {
            cov = get_matrix(table.at("covariance"), dim, join(key_path, "covariance"));
        } else {
            for (std::size_t k = 0; k < dim; ++k) cov[k * dim + k] = 1.0;
            if (table.contains("rho")) {
                if (dim != 2) bad(join(key_path, "rho"), "needs a two-dimensional mean");
                const double rho = get_double(table, "rho", 0.0, key_path);
                if (!(rho > -1.0 && rho < 1.0)) bad(join(key_path, "rho"), "must lie in (-1, 1)");
                cov[1] = cov[2] = rho;
            }
        }
        r["mean"] = mean;
        r["covariance"] = matrix_json(cov, dim);
        return {wrap(key_path, [&] { return AnalyticDensity::gaussian(mean, cov); }), r};
    }
    if (type == "gmm") {
        require_known_keys(table, {"type", "components"}, key_path);
        if (!table.contains("components") || !table.at("components").is_array() || table.at("components").empty())
            bad(join(key_path, "components"), "expected a non-empty array of component tables");
        std::vector<GaussianComponent> comps;
        Json rc = Json::array();
        std::size_t i = 0;
        for (const auto& c : table.at("components")) {
            const std::string cp = fmt::format("{}.components[{}]", key_path, i++);
            if (!c.is_object()) bad(cp, "expected a table");
            require_known_keys(c, {"weight", "mean", "covariance"}, cp);
            if (!c.contains("mean")) bad(join(cp, "mean"), "missing");
            GaussianComponent g;
            g.weight = get_double(c, "weight", 1.0, cp);
            g.mean = get_vector(c.at("mean"), join(cp, "mean"));
            const std::size_t dim = g.mean.size();
            if (c.contains("covariance")) {
                g.covariance = get_matrix(c.at("covariance"), dim, join(cp, "covariance"));
            } else {
                g.covariance.assign(dim * dim, 0.0);
                for (std::size_t k = 0; k < dim; ++k) g.covariance[k * dim + k] = 1.0;
            }
            rc.push_back({{"weight", g.weight}, {"mean", g.mean}, {"covariance", matrix_json(g.covariance, dim)}});
            comps.push_back(std::move(g));
        }
        r["components"] = rc;
        return {wrap(key_path, [&] { return AnalyticDensity::gmm(comps); }), r};
    }
    if (type == "bimodal") {
        require_known_keys(table, {"type"}, key_path);
        return {AnalyticDensity::bimodal_gmm(), r};
    }
    if (type == "conditional_bimodal") {
        require_known_keys(table, {"type", "separation", "sigma"}, key_path);
        const double sep = get_double(table, "separation", 1.5, key_path);
        const double sigma = get_double(table, "sigma", 0.3, key_path);
        if (!(sigma > 0.0)) bad(join(key_path, "sigma"), "must be positive");
        r["separation"] = sep;
        r["sigma"] = sigma;
        const std::vector<double> cov = {1.0, 0.0, 0.0, sigma * sigma};
        return {AnalyticDensity::gmm({{0.5, {0.0, -sep}, cov}, {0.5, {0.0, sep}, cov}}), r};
    }
    if (type == "box" || type == "box_counterexample") {
        require_known_keys(table, {"type", "plateau", "epsilon"}, key_path);
        const double plateau = get_double(table, "plateau", 0.9, key_path);
        const double eps = get_double(table, "epsilon", 0.1, key_path);
        r = {{"type", "box"}, {"plateau", plateau}, {"epsilon", eps}};
        return {wrap(key_path, [&] { return AnalyticDensity::box_counterexample(plateau, eps); }), r};
    }
    if (type.empty()) bad(join(key_path, "type"), "missing");
    bad(join(key_path, "type"), fmt::format("unknown density type '{}'", type));
}

DensitySpec resolve_target(const std::string& file_or_name) {
    if (std::filesystem::exists(file_or_name)) {
        const Json doc = load_config_file(file_or_name);
        if (doc.contains("target")) return parse_density(get_table(doc, "target", ""), "target");
        return parse_density(doc, "target");
    }
    static const char* builtins[] = {"ring", "standard_normal", "bimodal", "conditional_bimodal", "box"};
    for (const char* b : builtins)
        if (file_or_name == b) return parse_density(Json{{"type", b}}, "target");
    throw Error(fmt::format("config: target '{}' is neither a readable file nor a built-in density", file_or_name));
}

TrainerConfig trainer_config_from_json(const Json& table, const std::string& key_path) {
    require_known_keys(table,
                       {"samples", "bins", "blocks", "damping", "rotation_candidates", "lipschitz", "seed",
                        "resample_each_step", "kl_samples"},
                       key_path);
    TrainerConfig c;
    c.samples = get_unsigned(table, "samples", c.samples, key_path);
    c.bins = get_unsigned(table, "bins", c.bins, key_path);
    c.blocks = get_unsigned(table, "blocks", c.blocks, key_path);
    c.damping = get_double(table, "damping", c.damping, key_path);
    c.rotation_candidates = get_unsigned(table, "rotation_candidates", c.rotation_candidates, key_path);
    c.lipschitz = get_double(table, "lipschitz", c.lipschitz, key_path);
    c.seed = get_unsigned(table, "seed", c.seed, key_path);
    c.resample_each_step = get_bool(table, "resample_each_step", c.resample_each_step, key_path);
    c.kl_samples = get_unsigned(table, "kl_samples", c.kl_samples, key_path);
    try {
        c.validate();
    } catch (const Error& e) {
        // validate() reports "config: <key> ..."; prefix the table path.
        std::string what = e.what();
        if (what.rfind("config: ", 0) == 0) what = what.substr(8);
        throw Error(fmt::format("config: {}.{}", key_path, what));
    }
    return c;
}

Json trainer_config_to_json(const TrainerConfig& c) {
    return {{"samples", c.samples},
            {"bins", c.bins},
            {"blocks", c.blocks},
            {"damping", c.damping},
            {"rotation_candidates", c.rotation_candidates},
            {"lipschitz", c.lipschitz},
            {"seed", c.seed},
            {"resample_each_step", c.resample_each_step},
            {"kl_samples", c.kl_samples}};
}

std::string config_hash(const Json& resolved) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : resolved.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace flowlab
