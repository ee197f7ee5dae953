#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ncm {

// A named partial assignment of binary variables.
using Assignment = std::vector<std::pair<std::string, int>>;

// Exact joint distribution over binary variables. Index encoding: bit i of the
// table index holds the value of vars[i].
class DistributionTable {
public:
    // probs.size() must be 1 << vars.size(); entries must be nonnegative and
    // sum to 1 within 1e-9 (throws otherwise).
    DistributionTable(std::vector<std::string> vars, std::vector<double> probs);

    int arity() const { return static_cast<int>(vars_.size()); }
    const std::vector<std::string>& variables() const { return vars_; }
    const std::vector<double>& probabilities() const { return p_; }
    int index_of(const std::string& name) const;

    double prob(std::uint32_t index) const { return p_.at(index); }
    // P(vars masked by `mask` equal the corresponding bits of `bits`).
    double marginal_bits(std::uint32_t mask, std::uint32_t bits) const;
    double marginal(const Assignment& a) const;
    // P(target | given); throws std::domain_error naming the conditioning
    // event when P(given) == 0.
    double conditional(const Assignment& target, const Assignment& given) const;
    // Table over `keep` (in the given order), summing out the rest.
    DistributionTable marginalize(const std::vector<std::string>& keep) const;

    // (mask, bits) encoding of a named partial assignment.
    std::pair<std::uint32_t, std::uint32_t> encode(const Assignment& a) const;

private:
    std::vector<std::string> vars_;
    std::vector<double> p_;
};

// P(y=1 | x=1) - P(y=1 | x=0) on an exact table; throws std::domain_error on a
// zero-probability conditioning event.
double tv_of_table(const DistributionTable& table, const std::string& x, const std::string& y);

}  // namespace ncm
