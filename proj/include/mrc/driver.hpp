#pragma once

// Adaptive degree selection: fit degrees 0..L for L = L_start, L_start + step, ...
// and stop at the first L whose boundary residual is at most epsilon.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mrc/boundary.hpp"
#include "mrc/error.hpp"
#include "mrc/field.hpp"
#include "mrc/geometry.hpp"
#include "mrc/harmonics.hpp"
#include "mrc/lsq.hpp"

namespace mrc {

struct MrcConfig {
    double epsilon = 1e-6;
    int L_start = 2;
    int L_step = 1;
    int L_max = 40;
    double svd_rtol = default_svd_rtol;
    double stagnation_factor = 0.999;
    /// Consecutive non-improving steps that count as stagnation; 0 disables the check.
    int stagnation_patience = 3;

    void validate() const
    {
        if (!(epsilon > 0.0) || !std::isfinite(epsilon))
            throw ConfigError("epsilon must be a positive finite number");
        if (L_start < 0 || L_start > L_max || L_max > max_degree)
            throw ConfigError("degrees must satisfy 0 <= L_start <= L_max <= " +
                              std::to_string(max_degree));
        if (L_step < 1)
            throw ConfigError("L_step must be >= 1");
        if (!(svd_rtol >= 0.0 && svd_rtol < 1.0))
            throw ConfigError("svd_rtol must lie in [0, 1)");
        if (!(stagnation_factor > 0.0 && stagnation_factor < 1.0))
            throw ConfigError("stagnation_factor must lie in (0, 1)");
        if (stagnation_patience < 0)
            throw ConfigError("stagnation_patience must be >= 0");
    }
};

enum class Termination { converged, L_max_reached, stagnated };

inline std::string to_string(Termination t)
{
    switch (t) {
    case Termination::converged: return "converged";
    case Termination::L_max_reached: return "L_max_reached";
    case Termination::stagnated: return "stagnated";
    }
    return "unknown";
}

struct DegreeStep {
    int L = 0;
    double residual_l2 = 0.0;
    double residual_rel = 0.0;
    double sup_residual = 0.0;
    int rank = 0;
    double condition_estimate = 0.0;
};

struct SolveReport {
    std::vector<DegreeStep> history;
    int chosen_L = -1;  // -1 when no degree could be solved
    std::vector<double> coefficients;
    Termination termination = Termination::L_max_reached;
    std::string solver_error;  // set when the engine reported a degenerate system

    double epsilon = 0.0;
    double svd_rtol = 0.0;
    BoundaryCondition condition;
    double data_norm = 0.0;  // discrete ||f||_{L2(S)}
    double final_residual = 0.0;
    double final_sup_residual = 0.0;
    int n_theta = 0;
    int n_phi = 0;
    bool quadrature_refined = false;
    bool analytic_derivatives = true;
    int monotonicity_violations = 0;

    bool converged() const { return termination == Termination::converged; }
};

/// Smallest rule that integrates degree-L products exactly on the sphere.
inline bool rule_resolves(const QuadratureRule& rule, int L)
{
    return rule.n_theta >= L + 1 && rule.n_phi >= 2 * L + 1;
}

inline SolveReport run_mrc(const SurfaceSpec& spec, const QuadratureRule& input_rule,
                           const BoundaryData& data, const MrcConfig& cfg)
{
    cfg.validate();

    SolveReport report;
    report.epsilon = cfg.epsilon;
    report.svd_rtol = cfg.svd_rtol;
    report.condition = data.condition();
    report.analytic_derivatives = spec.analytic_derivatives();

    QuadratureRule refined;
    const QuadratureRule* rule = &input_rule;
    if (!rule_resolves(input_rule, cfg.L_max)) {
        if (data.is_tabulated())
            throw ConfigError("quadrature does not resolve L_max and tabulated data cannot be "
                              "resampled on a refined rule");
        refined = build_quadrature(spec, std::max(input_rule.n_theta, cfg.L_max + 2),
                                   std::max(input_rule.n_phi, 2 * cfg.L_max + 2));
        rule = &refined;
        report.quadrature_refined = true;
    }
    report.n_theta = rule->n_theta;
    report.n_phi = rule->n_phi;

    const std::vector<double> samples = data.sample(*rule);
    LsqProblem problem;
    {
        const BasisEvaluation basis =
            evaluate_basis(*rule, cfg.L_max, data.condition().needs_gradients());
        problem = assemble(*rule, basis, samples, data.condition());
    }
    report.data_norm = problem.rhs.norm();

    const NestedLsq nested(problem);
    std::optional<LsqSolution> last;
    int non_improving = 0;
    report.termination = Termination::L_max_reached;
    for (int L = cfg.L_start; L <= cfg.L_max; L += cfg.L_step) {
        LsqSolution sol;
        try {
            sol = nested.solve(L, cfg.svd_rtol);
        } catch (const DegenerateSystemError& e) {
            report.solver_error = e.what();
            report.termination = Termination::stagnated;
            break;
        }

        DegreeStep step;
        step.L = L;
        step.residual_l2 = sol.residual_l2;
        step.residual_rel = report.data_norm > 0.0 ? sol.residual_l2 / report.data_norm : 0.0;
        step.sup_residual = sol.sup_residual;
        step.rank = sol.rank;
        step.condition_estimate = sol.condition_estimate;

        if (!report.history.empty()) {
            const double prev = report.history.back().residual_l2;
            if (step.residual_l2 > prev)
                ++report.monotonicity_violations;
            non_improving = step.residual_l2 > cfg.stagnation_factor * prev ? non_improving + 1 : 0;
        }
        report.history.push_back(step);
        report.chosen_L = L;
        last = std::move(sol);

        if (step.residual_l2 <= cfg.epsilon) {
            report.termination = Termination::converged;
            break;
        }
        if (cfg.stagnation_patience > 0 && non_improving >= cfg.stagnation_patience) {
            report.termination = Termination::stagnated;
            break;
        }
    }

    if (last) {
        report.coefficients.assign(last->coefficients.data(),
                                   last->coefficients.data() + last->coefficients.size());
        report.final_residual = last->residual_l2;
        report.final_sup_residual = last->sup_residual;
    }
    return report;
}

/// The fitted field v_eps of a report.
inline ExteriorField make_field(const SurfaceSpec& spec, const SolveReport& report)
{
    if (report.coefficients.empty())
        throw DegenerateSystemError("report carries no coefficients");
    return ExteriorField(spec, report.coefficients);
}

} // namespace mrc
