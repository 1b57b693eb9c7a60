#pragma once

// Machine-readable output: the JSON report and the CSV tables. Every float is
// printed with 17 significant digits so that a report can be diffed byte for byte.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mrc/driver.hpp"

namespace mrc {

using json = nlohmann::ordered_json;

inline std::string format_double(double x)
{
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    return fmt::format("{:.17g}", x);
}

namespace detail {

inline void write_json(const json& j, std::string& out, int indent)
{
    const std::string pad(2 * (indent + 1), ' ');
    const std::string close(2 * indent, ' ');
    switch (j.type()) {
    case json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += "{\n";
        bool first = true;
        for (const auto& [key, value] : j.items()) {
            if (!first)
                out += ",\n";
            first = false;
            out += pad + json(key).dump() + ": ";
            write_json(value, out, indent + 1);
        }
        out += "\n" + close + "}";
        return;
    }
    case json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        // flat numeric arrays stay on one line
        const bool flat = std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_primitive(); });
        out += flat ? "[" : "[\n";
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i > 0)
                out += flat ? ", " : ",\n";
            if (!flat)
                out += pad;
            write_json(j[i], out, indent + 1);
        }
        out += flat ? "]" : "\n" + close + "]";
        return;
    }
    case json::value_t::number_float: {
        const double x = j.get<double>();
        if (!std::isfinite(x)) {
            out += "null";
            return;
        }
        // keep integral values typed as floats for JSON readers
        std::string text = format_double(x);
        if (text.find_first_of(".e") == std::string::npos)
            text += ".0";
        out += text;
        return;
    }
    default:
        out += j.dump();
    }
}

} // namespace detail

/// Pretty JSON with 17-digit floats; non-finite floats become null.
inline std::string dump_json(const json& j)
{
    std::string out;
    detail::write_json(j, out, 0);
    out += "\n";
    return out;
}

inline json history_json(const SolveReport& r)
{
    json rows = json::array();
    for (const auto& s : r.history)
        rows.push_back({{"L", s.L},
                        {"residual_l2", s.residual_l2},
                        {"residual_rel", s.residual_rel},
                        {"sup_residual", s.sup_residual},
                        {"rank", s.rank},
                        {"cond_estimate", s.condition_estimate}});
    return rows;
}

inline json to_json(const SolveReport& r)
{
    const double cond = r.history.empty() ? 0.0 : r.history.back().condition_estimate;
    return {
        {"termination", to_string(r.termination)},
        {"converged", r.converged()},
        {"chosen_L", r.chosen_L},
        {"epsilon", r.epsilon},
        {"final_residual", r.final_residual},
        {"final_residual_rel", r.data_norm > 0.0 ? r.final_residual / r.data_norm : 0.0},
        {"final_sup_residual", r.final_sup_residual},
        {"data_norm", r.data_norm},
        {"cond_estimate", cond},
        {"svd_rtol", r.svd_rtol},
        {"boundary_condition", {{"kind", to_string(r.condition.kind)}, {"robin_sigma", r.condition.robin_sigma}}},
        {"quadrature", {{"n_theta", r.n_theta}, {"n_phi", r.n_phi}, {"refined", r.quadrature_refined}}},
        {"analytic_derivatives", r.analytic_derivatives},
        {"monotonicity_violations", r.monotonicity_violations},
        {"solver_error", r.solver_error},
        {"history", history_json(r)},
        {"coefficient_order", "k = l*l + l + m"},
        {"coefficients", r.coefficients},
    };
}

inline std::string history_csv(const SolveReport& r)
{
    std::string out = "L,residual_l2,residual_rel,sup_residual,rank,cond_estimate\n";
    for (const auto& s : r.history)
        out += fmt::format("{},{},{},{},{},{}\n", s.L, format_double(s.residual_l2),
                           format_double(s.residual_rel), format_double(s.sup_residual), s.rank,
                           format_double(s.condition_estimate));
    return out;
}

struct FieldErrorRow {
    double R = 0.0;
    double l2_error = 0.0;
    double sup_error = 0.0;
};

inline std::string field_error_csv(const std::vector<FieldErrorRow>& rows)
{
    std::string out = "R,l2_error,sup_error\n";
    for (const auto& row : rows)
        out += fmt::format("{},{},{}\n", format_double(row.R), format_double(row.l2_error),
                           format_double(row.sup_error));
    return out;
}

} // namespace mrc
