#include "ncm/table.hpp"

#include <cmath>
#include <stdexcept>

namespace ncm {

DistributionTable::DistributionTable(std::vector<std::string> vars, std::vector<double> probs)
    : vars_(std::move(vars)), p_(std::move(probs)) {
    if (vars_.size() > 24) throw std::invalid_argument("DistributionTable: more than 24 variables");
    if (p_.size() != (std::size_t{1} << vars_.size()))
        throw std::invalid_argument("DistributionTable: probability vector has wrong length");
    double total = 0.0;
    for (double x : p_) {
        if (!(x >= 0.0)) throw std::invalid_argument("DistributionTable: negative entry");
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("DistributionTable: entries sum to " + std::to_string(total));
}

int DistributionTable::index_of(const std::string& name) const {
    for (int i = 0; i < arity(); ++i)
        if (vars_[i] == name) return i;
    throw std::invalid_argument("unknown variable \"" + name + "\"");
}

double DistributionTable::marginal_bits(std::uint32_t mask, std::uint32_t bits) const {
    double total = 0.0;
    for (std::uint32_t idx = 0; idx < p_.size(); ++idx)
        if ((idx & mask) == (bits & mask)) total += p_[idx];
    return total;
}

std::pair<std::uint32_t, std::uint32_t> DistributionTable::encode(const Assignment& a) const {
    std::uint32_t mask = 0, bits = 0;
    for (const auto& [name, value] : a) {
        if (value != 0 && value != 1)
            throw std::invalid_argument("assignment value for \"" + name + "\" must be 0 or 1");
        const int i = index_of(name);
        if (mask & (1u << i))
            throw std::invalid_argument("variable \"" + name + "\" assigned twice");
        mask |= 1u << i;
        if (value) bits |= 1u << i;
    }
    return {mask, bits};
}

double DistributionTable::marginal(const Assignment& a) const {
    auto [mask, bits] = encode(a);
    return marginal_bits(mask, bits);
}

double DistributionTable::conditional(const Assignment& target, const Assignment& given) const {
    auto [tm, tb] = encode(target);
    auto [gm, gb] = encode(given);
    if (tm & gm) throw std::invalid_argument("conditional: target and given overlap");
    const double denom = marginal_bits(gm, gb);
    if (denom <= 0.0) {
        std::string event;
        for (const auto& [name, value] : given) {
            if (!event.empty()) event += ", ";
            event += name + "=" + std::to_string(value);
        }
        throw std::domain_error("conditioning event {" + event + "} has zero probability");
    }
    return marginal_bits(tm | gm, tb | gb) / denom;
}

DistributionTable DistributionTable::marginalize(const std::vector<std::string>& keep) const {
    std::vector<int> src;
    for (const auto& name : keep) src.push_back(index_of(name));
    std::vector<double> out(std::size_t{1} << keep.size(), 0.0);
    for (std::uint32_t idx = 0; idx < p_.size(); ++idx) {
        std::uint32_t to = 0;
        for (std::size_t j = 0; j < src.size(); ++j)
            if (idx & (1u << src[j])) to |= 1u << j;
        out[to] += p_[idx];
    }
    return DistributionTable(keep, std::move(out));
}

double tv_of_table(const DistributionTable& table, const std::string& x, const std::string& y) {
    return table.conditional({{y, 1}}, {{x, 1}}) - table.conditional({{y, 1}}, {{x, 0}});
}

}  // namespace ncm
