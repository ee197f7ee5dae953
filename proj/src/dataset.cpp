#include "ncm/dataset.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ncm {

std::uint32_t Dataset::row_index(std::size_t row) const {
    if (arity() > 24) throw std::invalid_argument("row_index: more than 24 variables");
    std::uint32_t idx = 0;
    for (int i = 0; i < arity(); ++i)
        if (at(row, i)) idx |= 1u << i;
    return idx;
}

std::vector<std::uint64_t> Dataset::counts() const {
    std::vector<std::uint64_t> histogram(std::size_t{1} << arity(), 0);
    for (std::size_t r = 0; r < n(); ++r) ++histogram[row_index(r)];
    return histogram;
}

void write_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open \"" + path + "\" for writing");
    for (std::size_t i = 0; i < data.vars.size(); ++i)
        out << (i ? "," : "") << data.vars[i];
    out << "\n";
    for (std::size_t r = 0; r < data.n(); ++r) {
        for (int i = 0; i < data.arity(); ++i)
            out << (i ? "," : "") << static_cast<int>(data.at(r, i));
        out << "\n";
    }
    if (!out) throw std::runtime_error("write to \"" + path + "\" failed");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

std::string sidecar_path(const std::string& csv_path) {
    std::string stem = csv_path;
    if (stem.size() >= 4 && stem.substr(stem.size() - 4) == ".csv")
        stem.resize(stem.size() - 4);
    return stem + ".meta.json";
}

void write_sidecar(const Dataset& data, const std::string& csv_path) {
    nlohmann::json j;
    j["n"] = data.n();
    j["variables"] = data.vars;
    j["seed"] = data.meta.seed;
    j["model_hash"] = data.meta.model_hash;
    j["widened"] = data.meta.widened;
    if (data.meta.intervention) {
        j["intervention"] = {{"variable", data.meta.intervention->first},
                             {"value", data.meta.intervention->second}};
    } else {
        j["intervention"] = nullptr;
    }
    if (data.meta.exact_ate) j["exact_ate"] = *data.meta.exact_ate;
    if (data.meta.exact_tv) j["exact_tv"] = *data.meta.exact_tv;
    if (data.meta.exact_table) {
        j["exact_table"] = {{"variables", data.meta.exact_table->variables()},
                            {"probabilities", data.meta.exact_table->probabilities()}};
    }
    const std::string path = sidecar_path(csv_path);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open \"" + path + "\" for writing");
    out << j.dump(2) << "\n";
}

Dataset read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open \"" + path + "\"");
    Dataset data;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("\"" + path + "\" is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    data.vars = split_csv_line(line);
    if (data.vars.empty()) throw std::runtime_error("\"" + path + "\": empty header");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != data.vars.size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(data.vars.size()) + " fields");
        for (const auto& f : fields) {
            if (f != "0" && f != "1")
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": values must be 0 or 1, got \"" + f + "\"");
            data.rows.push_back(f == "1" ? 1 : 0);
        }
    }

    std::ifstream side(sidecar_path(path));
    if (side) {
        nlohmann::json j = nlohmann::json::parse(side);
        data.meta.seed = j.value("seed", std::uint64_t{0});
        data.meta.model_hash = j.value("model_hash", std::uint64_t{0});
        data.meta.widened = j.value("widened", false);
        if (j.contains("intervention") && !j["intervention"].is_null())
            data.meta.intervention = {j["intervention"]["variable"].get<std::string>(),
                                      j["intervention"]["value"].get<int>()};
        if (j.contains("exact_ate")) data.meta.exact_ate = j["exact_ate"].get<double>();
        if (j.contains("exact_tv")) data.meta.exact_tv = j["exact_tv"].get<double>();
        if (j.contains("exact_table")) {
            data.meta.exact_table = DistributionTable(
                j["exact_table"]["variables"].get<std::vector<std::string>>(),
                j["exact_table"]["probabilities"].get<std::vector<double>>());
        }
    }
    return data;
}

}  // namespace ncm
