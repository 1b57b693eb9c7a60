#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "mrc/error.hpp"
#include "mrc/geometry.hpp"

namespace mrc {

enum class ConditionKind { dirichlet, neumann, robin };

inline std::string to_string(ConditionKind kind)
{
    switch (kind) {
    case ConditionKind::dirichlet: return "dirichlet";
    case ConditionKind::neumann: return "neumann";
    case ConditionKind::robin: return "robin";
    }
    return "unknown";
}

/// Boundary operator B applied to v on S, with N the unit normal pointing out of D:
///   dirichlet  B v = v
///   neumann    B v = dv/dN
///   robin      B v = dv/dN - sigma v,  sigma >= 0
/// The minus sign keeps the exterior Robin problem uniquely solvable for every
/// sigma >= 0 (with a plus sign, 1/r is a null solution on the unit sphere at sigma = 1).
struct BoundaryCondition {
    ConditionKind kind = ConditionKind::dirichlet;
    double robin_sigma = 0.0;

    static BoundaryCondition dirichlet() { return {ConditionKind::dirichlet, 0.0}; }
    static BoundaryCondition neumann() { return {ConditionKind::neumann, 0.0}; }
    static BoundaryCondition robin(double sigma)
    {
        if (!(sigma >= 0.0) || !std::isfinite(sigma))
            throw ConfigError("robin coefficient must be finite and >= 0");
        return {ConditionKind::robin, sigma};
    }

    bool needs_gradients() const { return kind != ConditionKind::dirichlet; }

    double apply(double value, double normal_derivative) const
    {
        switch (kind) {
        case ConditionKind::dirichlet: return value;
        case ConditionKind::neumann: return normal_derivative;
        case ConditionKind::robin:
            return robin_sigma == 0.0 ? normal_derivative : normal_derivative - robin_sigma * value;
        }
        return value;
    }
};

/// One tabulated boundary sample at angular position (theta, phi).
struct TabulatedSample {
    double theta = 0.0;
    double phi = 0.0;
    double value = 0.0;
};

/// The right-hand side f of B v = f on S: either a closed-form trace that can
/// be sampled on any rule, or samples tabulated at a fixed rule's nodes.
class BoundaryData {
public:
    using Trace = std::function<double(const SurfaceNode&)>;

    static BoundaryData from_trace(Trace trace, BoundaryCondition bc)
    {
        BoundaryData d;
        d.source_ = std::move(trace);
        d.condition_ = bc;
        return d;
    }

    static BoundaryData from_table(std::vector<TabulatedSample> table, BoundaryCondition bc)
    {
        BoundaryData d;
        d.source_ = std::move(table);
        d.condition_ = bc;
        return d;
    }

    const BoundaryCondition& condition() const { return condition_; }
    bool is_tabulated() const { return std::holds_alternative<std::vector<TabulatedSample>>(source_); }

    /// f at every node of the rule, in node order. Tabulated samples must
    /// coincide with the nodes to 1e-12 in both angles; nothing is interpolated.
    std::vector<double> sample(const QuadratureRule& rule) const
    {
        std::vector<double> out(rule.size());
        if (const auto* trace = std::get_if<Trace>(&source_)) {
            for (std::size_t i = 0; i < rule.size(); ++i)
                out[i] = (*trace)(rule.nodes[i]);
            return out;
        }

        const auto& table = std::get<std::vector<TabulatedSample>>(source_);
        if (table.size() != rule.size())
            throw ConfigError("tabulated boundary data has " + std::to_string(table.size()) +
                              " samples but the quadrature rule has " +
                              std::to_string(rule.size()) + " nodes");
        constexpr double tol = 1e-12;
        auto matches = [&](const TabulatedSample& s, const SurfaceNode& n) {
            return std::abs(s.theta - n.theta) <= tol && std::abs(s.phi - n.phi) <= tol;
        };
        for (std::size_t i = 0; i < rule.size(); ++i) {
            const SurfaceNode& node = rule.nodes[i];
            if (matches(table[i], node)) {
                out[i] = table[i].value;
                continue;
            }
            bool found = false;
            for (const auto& s : table) {
                if (matches(s, node)) {
                    out[i] = s.value;
                    found = true;
                    break;
                }
            }
            if (!found)
                throw ConfigError("no tabulated sample within 1e-12 of quadrature node theta=" +
                                  std::to_string(node.theta) + ", phi=" + std::to_string(node.phi));
        }
        return out;
    }

private:
    std::variant<Trace, std::vector<TabulatedSample>> source_ = Trace{};
    BoundaryCondition condition_;
};

} // namespace mrc
