#pragma once

// Batch front end: JSON run configs, single solves and parameter sweeps.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mrc/driver.hpp"
#include "mrc/report.hpp"

namespace mrc::app {

namespace fs = std::filesystem;

enum ExitCode : int {
    exit_ok = 0,
    exit_config = 2,
    exit_geometry = 3,
    exit_solver = 4,
    exit_nonconvergence = 5,
};

struct SurfaceConfig {
    std::string preset = "sphere";
    Vec3 center = Vec3::Zero();
    double a = 1.0;
    double e = 0.0;
    double delta = 0.0;
    int k = 1;
    int p = 1;

    SurfaceSpec build() const
    {
        if (preset == "sphere")
            return SurfaceSpec::sphere(a, center);
        if (preset == "spheroid")
            return SurfaceSpec::spheroid(a, e, center);
        if (preset == "cosine_bump")
            return SurfaceSpec::cosine_bump(a, delta, k, p, center);
        throw ConfigError("unknown surface preset '" + preset + "'");
    }
};

struct BandCoefficient {
    int l = 0;
    int m = 0;
    double value = 0.0;
};

struct DataConfig {
    std::string type = "point_source";  // point_source | band_limited | tabulated
    Vec3 z = Vec3::Zero();
    double q = 1.0;
    std::vector<BandCoefficient> coefficients;
    std::string file;
};

struct QuadratureConfig {
    bool automatic = true;
    int n_theta = 0;
    int n_phi = 0;
};

struct OutputConfig {
    std::string report = "report.json";
    std::string history_csv = "history.csv";
    std::string field_error_csv = "field_error.csv";
    std::string sweep_csv = "sweep.csv";
    std::vector<double> radii;  // empty: 2 * enclosing radius
    std::vector<Vec3> points;
    int error_n_theta = 64;
    int error_n_phi = 128;
};

struct RunConfig {
    SurfaceConfig surface;
    BoundaryCondition condition;
    DataConfig data;
    MrcConfig mrc;
    QuadratureConfig quadrature;
    OutputConfig outputs;
    fs::path base_dir = ".";  // tabulated files are resolved against this
};

namespace detail {

inline void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed)
{
    if (!j.is_object())
        throw ConfigError("'" + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ConfigError("unknown key '" + key + "' in '" + section + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& out)
{
    if (j.contains(key))
        out = j.at(key).get<T>();
}

inline Vec3 read_vec3(const json& j, const std::string& what)
{
    if (!j.is_array() || j.size() != 3)
        throw ConfigError("'" + what + "' must be an array of three numbers");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline ConditionKind parse_condition_kind(const std::string& s)
{
    if (s == "dirichlet")
        return ConditionKind::dirichlet;
    if (s == "neumann")
        return ConditionKind::neumann;
    if (s == "robin")
        return ConditionKind::robin;
    throw ConfigError("unknown boundary condition '" + s + "'");
}

} // namespace detail

inline RunConfig parse_run_config(const json& j, const fs::path& base_dir = ".")
{
    using namespace detail;
    RunConfig cfg;
    cfg.base_dir = base_dir;
    try {
        check_keys(j, "config", {"surface", "boundary_condition", "data", "mrc", "quadrature", "outputs", "grid"});
        for (const char* required : {"surface", "data"})
            if (!j.contains(required))
                throw ConfigError(std::string("missing section '") + required + "'");

        const json& s = j.at("surface");
        check_keys(s, "surface", {"preset", "center", "a", "e", "delta", "k", "p"});
        read(s, "preset", cfg.surface.preset);
        if (s.contains("center"))
            cfg.surface.center = read_vec3(s.at("center"), "surface.center");
        read(s, "a", cfg.surface.a);
        read(s, "e", cfg.surface.e);
        read(s, "delta", cfg.surface.delta);
        read(s, "k", cfg.surface.k);
        read(s, "p", cfg.surface.p);

        if (j.contains("boundary_condition")) {
            const json& b = j.at("boundary_condition");
            check_keys(b, "boundary_condition", {"kind", "robin_sigma"});
            const ConditionKind kind = parse_condition_kind(b.value("kind", std::string("dirichlet")));
            const double sigma = b.value("robin_sigma", 0.0);
            if (kind == ConditionKind::robin)
                cfg.condition = BoundaryCondition::robin(sigma);
            else if (b.contains("robin_sigma"))
                throw ConfigError("robin_sigma is only meaningful for a robin condition");
            else
                cfg.condition = kind == ConditionKind::neumann ? BoundaryCondition::neumann()
                                                               : BoundaryCondition::dirichlet();
        }

        const json& d = j.at("data");
        check_keys(d, "data", {"type", "z", "q", "coefficients", "file"});
        read(d, "type", cfg.data.type);
        if (cfg.data.type == "point_source") {
            if (!d.contains("z"))
                throw ConfigError("point_source data needs 'z'");
            cfg.data.z = read_vec3(d.at("z"), "data.z");
            read(d, "q", cfg.data.q);
        } else if (cfg.data.type == "band_limited") {
            if (!d.contains("coefficients") || !d.at("coefficients").is_array())
                throw ConfigError("band_limited data needs a 'coefficients' array");
            for (const auto& c : d.at("coefficients")) {
                check_keys(c, "data.coefficients[]", {"l", "m", "value"});
                BandCoefficient bc{c.at("l").get<int>(), c.at("m").get<int>(), c.at("value").get<double>()};
                if (bc.l < 0 || bc.l > max_degree || std::abs(bc.m) > bc.l)
                    throw ConfigError(fmt::format("invalid harmonic index (l={}, m={})", bc.l, bc.m));
                cfg.data.coefficients.push_back(bc);
            }
        } else if (cfg.data.type == "tabulated") {
            if (!d.contains("file"))
                throw ConfigError("tabulated data needs 'file'");
            read(d, "file", cfg.data.file);
        } else {
            throw ConfigError("unknown data type '" + cfg.data.type + "'");
        }

        if (j.contains("mrc")) {
            const json& m = j.at("mrc");
            check_keys(m, "mrc", {"epsilon", "L_start", "L_step", "L_max", "svd_rtol", "stagnation_factor",
                                  "stagnation_patience"});
            read(m, "epsilon", cfg.mrc.epsilon);
            read(m, "L_start", cfg.mrc.L_start);
            read(m, "L_step", cfg.mrc.L_step);
            read(m, "L_max", cfg.mrc.L_max);
            read(m, "svd_rtol", cfg.mrc.svd_rtol);
            read(m, "stagnation_factor", cfg.mrc.stagnation_factor);
            read(m, "stagnation_patience", cfg.mrc.stagnation_patience);
        }
        cfg.mrc.validate();

        if (j.contains("quadrature")) {
            const json& q = j.at("quadrature");
            if (q.is_string()) {
                if (q.get<std::string>() != "auto")
                    throw ConfigError("quadrature must be \"auto\" or {n_theta, n_phi}");
            } else {
                check_keys(q, "quadrature", {"n_theta", "n_phi"});
                cfg.quadrature.automatic = false;
                cfg.quadrature.n_theta = q.at("n_theta").get<int>();
                cfg.quadrature.n_phi = q.at("n_phi").get<int>();
                if (cfg.quadrature.n_theta < 2 || cfg.quadrature.n_phi < 4)
                    throw ConfigError("quadrature needs n_theta >= 2 and n_phi >= 4");
            }
        }
        if (cfg.quadrature.automatic) {
            cfg.quadrature.n_theta = cfg.mrc.L_max + 2;
            cfg.quadrature.n_phi = 2 * cfg.mrc.L_max + 2;
        }

        if (j.contains("outputs")) {
            const json& o = j.at("outputs");
            check_keys(o, "outputs", {"report", "history_csv", "field_error_csv", "sweep_csv", "radii", "points",
                                      "error_n_theta", "error_n_phi"});
            read(o, "report", cfg.outputs.report);
            read(o, "history_csv", cfg.outputs.history_csv);
            read(o, "field_error_csv", cfg.outputs.field_error_csv);
            read(o, "sweep_csv", cfg.outputs.sweep_csv);
            read(o, "radii", cfg.outputs.radii);
            if (o.contains("points"))
                for (const auto& p : o.at("points"))
                    cfg.outputs.points.push_back(read_vec3(p, "outputs.points[]"));
            read(o, "error_n_theta", cfg.outputs.error_n_theta);
            read(o, "error_n_phi", cfg.outputs.error_n_phi);
            if (cfg.outputs.error_n_theta < 2 || cfg.outputs.error_n_phi < 4)
                throw ConfigError("error rule needs error_n_theta >= 2 and error_n_phi >= 4");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return cfg;
}

/// Fully resolved config; parsing it back gives the same run.
inline json to_json(const RunConfig& cfg)
{
    using detail::vec3_json;
    json surface = {{"preset", cfg.surface.preset}, {"center", vec3_json(cfg.surface.center)}, {"a", cfg.surface.a}};
    if (cfg.surface.preset == "spheroid")
        surface["e"] = cfg.surface.e;
    if (cfg.surface.preset == "cosine_bump") {
        surface["delta"] = cfg.surface.delta;
        surface["k"] = cfg.surface.k;
        surface["p"] = cfg.surface.p;
    }

    json bc = {{"kind", to_string(cfg.condition.kind)}};
    if (cfg.condition.kind == ConditionKind::robin)
        bc["robin_sigma"] = cfg.condition.robin_sigma;

    json data = {{"type", cfg.data.type}};
    if (cfg.data.type == "point_source") {
        data["z"] = vec3_json(cfg.data.z);
        data["q"] = cfg.data.q;
    } else if (cfg.data.type == "band_limited") {
        data["coefficients"] = json::array();
        for (const auto& c : cfg.data.coefficients)
            data["coefficients"].push_back({{"l", c.l}, {"m", c.m}, {"value", c.value}});
    } else {
        data["file"] = cfg.data.file;
    }

    json points = json::array();
    for (const auto& p : cfg.outputs.points)
        points.push_back(vec3_json(p));

    return {
        {"surface", surface},
        {"boundary_condition", bc},
        {"data", data},
        {"mrc",
         {{"epsilon", cfg.mrc.epsilon},
          {"L_start", cfg.mrc.L_start},
          {"L_step", cfg.mrc.L_step},
          {"L_max", cfg.mrc.L_max},
          {"svd_rtol", cfg.mrc.svd_rtol},
          {"stagnation_factor", cfg.mrc.stagnation_factor},
          {"stagnation_patience", cfg.mrc.stagnation_patience}}},
        {"quadrature", cfg.quadrature.automatic
                           ? json("auto")
                           : json{{"n_theta", cfg.quadrature.n_theta}, {"n_phi", cfg.quadrature.n_phi}}},
        {"outputs",
         {{"report", cfg.outputs.report},
          {"history_csv", cfg.outputs.history_csv},
          {"field_error_csv", cfg.outputs.field_error_csv},
          {"sweep_csv", cfg.outputs.sweep_csv},
          {"radii", cfg.outputs.radii},
          {"points", points},
          {"error_n_theta", cfg.outputs.error_n_theta},
          {"error_n_phi", cfg.outputs.error_n_phi}}},
    };
}

inline json load_json_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse '" + path.string() + "': " + e.what());
    }
}

/// CSV with a header naming theta, phi and f (any column order).
inline std::vector<TabulatedSample> read_tabulated_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open tabulated data file '" + path.string() + "'");

    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        for (auto& c : cells) {
            c.erase(0, c.find_first_not_of(" \t\r"));
            c.erase(c.find_last_not_of(" \t\r") + 1);
        }
        return cells;
    };

    std::string line;
    if (!std::getline(in, line))
        throw ConfigError("tabulated data file '" + path.string() + "' is empty");
    const auto header = split(line);
    auto column = [&](const char* name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw ConfigError(std::string("tabulated data file lacks a '") + name + "' column");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t it = column("theta"), ip = column("phi"), iv = column("f");

    std::vector<TabulatedSample> out;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const auto cells = split(line);
        auto number = [&](std::size_t i) {
            double x = 0.0;
            if (i >= cells.size())
                throw ConfigError(fmt::format("tabulated data row {} has too few columns", row));
            const auto& c = cells[i];
            const auto [end, ec] = std::from_chars(c.data(), c.data() + c.size(), x);
            if (ec != std::errc() || end != c.data() + c.size())
                throw ConfigError(fmt::format("tabulated data row {}: '{}' is not a number", row, c));
            return x;
        };
        out.push_back({number(it), number(ip), number(iv)});
    }
    return out;
}

struct PointEvaluation {
    Vec3 x;
    double value = 0.0;
    std::optional<double> exact;
};

struct RunResult {
    SolveReport report;
    std::string surface_name;
    double enclosing = 0.0;
    double inscribed = 0.0;
    bool has_oracle = false;
    std::vector<FieldErrorRow> field_errors;
    std::vector<PointEvaluation> evaluations;
};

inline std::optional<OracleSolution> oracle_of(const RunConfig& cfg)
{
    if (cfg.data.type == "point_source")
        return OracleSolution(PointSource{cfg.data.z, cfg.data.q});
    if (cfg.data.type == "band_limited") {
        int L = 0;
        for (const auto& c : cfg.data.coefficients)
            L = std::max(L, c.l);
        BandLimited b{cfg.surface.center, std::vector<double>(basis_size(L), 0.0)};
        for (const auto& c : cfg.data.coefficients)
            b.coefficients[flatten(c.l, c.m)] += c.value;
        return OracleSolution(std::move(b));
    }
    return std::nullopt;
}

/// Runs one config. Everything that can be rejected up front is checked
/// before the solve so that a failing run never produces output.
inline RunResult execute(const RunConfig& cfg, std::ostream* log = nullptr)
{
    cfg.mrc.validate();
    const SurfaceSpec spec = cfg.surface.build();

    RunResult result;
    result.surface_name = spec.preset_name();
    result.enclosing = enclosing_radius(spec);
    result.inscribed = inscribed_radius(spec);

    const auto oracle = oracle_of(cfg);
    result.has_oracle = oracle.has_value();
    if (cfg.data.type == "point_source" && !((cfg.data.z - spec.center()).norm() < result.inscribed))
        throw DomainError("point source must lie strictly inside the inscribed ball of the surface");

    std::vector<double> radii = cfg.outputs.radii;
    if (radii.empty() && oracle)
        radii.push_back(2.0 * result.enclosing);
    for (double R : radii)
        if (!(R >= result.enclosing))
            throw DomainError(fmt::format("error radius {} is below the enclosing radius {}", R,
                                          result.enclosing));
    for (const auto& x : cfg.outputs.points)
        if ((x - spec.center()).norm() < result.inscribed)
            throw DomainError("evaluation point lies inside the inscribed ball of the surface");

    const BoundaryData data = cfg.data.type == "tabulated"
        ? BoundaryData::from_table(read_tabulated_csv(cfg.base_dir / cfg.data.file), cfg.condition)
        : boundary_data_from_oracle(*oracle, cfg.condition);

    const QuadratureRule rule = build_quadrature(spec, cfg.quadrature.n_theta, cfg.quadrature.n_phi);
    result.report = run_mrc(spec, rule, data, cfg.mrc);

    if (log) {
        for (const auto& s : result.report.history)
            *log << fmt::format("L={:3d}  residual={:.6e}  rel={:.3e}  sup={:.3e}  rank={}  cond={:.3e}\n", s.L,
                                s.residual_l2, s.residual_rel, s.sup_residual, s.rank, s.condition_estimate);
        *log << "termination: " << to_string(result.report.termination) << ", chosen_L=" << result.report.chosen_L
             << "\n";
    }

    if (result.report.coefficients.empty())
        return result;
    const ExteriorField field = make_field(spec, result.report);
    if (oracle)
        for (double R : radii) {
            const FieldError err = error_on_enclosing_sphere(field, *oracle, R, cfg.outputs.error_n_theta,
                                                             cfg.outputs.error_n_phi);
            result.field_errors.push_back({R, err.l2, err.sup});
        }
    for (const auto& x : cfg.outputs.points) {
        PointEvaluation ev{x, field.value(x), std::nullopt};
        if (oracle)
            ev.exact = oracle->value(x);
        result.evaluations.push_back(ev);
    }
    return result;
}

inline int exit_code_of(const SolveReport& r)
{
    if (!r.solver_error.empty())
        return exit_solver;
    return r.converged() ? exit_ok : exit_nonconvergence;
}

/// Exit status for an exception escaping a run. Invalid sources, radii and
/// points are config problems even though they surface as domain errors.
inline int exit_code_of(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e))
        return exit_config;
    if (dynamic_cast<const GeometryError*>(&e))
        return exit_geometry;
    return exit_solver;
}

inline json report_json(const RunConfig& cfg, const RunResult& result)
{
    json j = {{"surface",
               {{"preset", result.surface_name},
                {"enclosing_radius", result.enclosing},
                {"inscribed_radius", result.inscribed}}},
              {"data_type", cfg.data.type}};
    j.update(to_json(result.report));

    json errors = json::array();
    for (const auto& e : result.field_errors)
        errors.push_back({{"R", e.R}, {"l2_error", e.l2_error}, {"sup_error", e.sup_error}});
    j["field_errors"] = errors;

    json evals = json::array();
    for (const auto& ev : result.evaluations) {
        json row = {{"x", detail::vec3_json(ev.x)}, {"value", ev.value}};
        if (ev.exact) {
            row["exact"] = *ev.exact;
            row["error"] = ev.value - *ev.exact;
        }
        evals.push_back(row);
    }
    j["evaluations"] = evals;
    j["config"] = to_json(cfg);
    return j;
}

inline void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError("cannot write '" + path.string() + "'");
    out << text;
}

inline void write_outputs(const RunConfig& cfg, const RunResult& result, const fs::path& out_dir)
{
    write_text(out_dir / cfg.outputs.report, dump_json(report_json(cfg, result)));
    write_text(out_dir / cfg.outputs.history_csv, history_csv(result.report));
    if (result.has_oracle)
        write_text(out_dir / cfg.outputs.field_error_csv, field_error_csv(result.field_errors));
}

/// `mrc solve`: returns the process exit status.
inline int solve_command(const fs::path& config_path, const fs::path& out_dir, bool verbose, std::ostream& err)
{
    RunConfig cfg;
    RunResult result;
    try {
        const json j = load_json_file(config_path);
        if (j.contains("grid"))
            throw ConfigError("config has a grid block; run it with 'mrc sweep'");
        cfg = parse_run_config(j, config_path.parent_path());
        result = execute(cfg, verbose ? &err : nullptr);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_of(e);
    }
    try {
        write_outputs(cfg, result, out_dir);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_config;
    }
    const int code = exit_code_of(result.report);
    if (code == exit_solver)
        err << "solver error: " << result.report.solver_error << "\n";
    else if (code == exit_nonconvergence)
        err << "not converged: " << to_string(result.report.termination) << "\n";
    return code;
}

// Sweeps

struct GridAxis {
    std::string key;  // dotted path into the config, e.g. "mrc.epsilon"
    std::vector<json> values;
};

constexpr std::size_t max_sweep_cells = 10000;

inline std::vector<GridAxis> parse_grid(const json& grid)
{
    if (!grid.is_object())
        throw ConfigError("'grid' must be an object mapping dotted keys to value lists");
    std::vector<GridAxis> axes;
    for (const auto& [key, values] : grid.items()) {
        if (!values.is_array())
            throw ConfigError("grid entry '" + key + "' must be an array");
        axes.push_back({key, std::vector<json>(values.begin(), values.end())});
    }
    std::sort(axes.begin(), axes.end(), [](const GridAxis& a, const GridAxis& b) { return a.key < b.key; });
    std::size_t cells = axes.empty() ? 0 : 1;
    for (const auto& a : axes) {
        cells *= a.values.size();
        if (cells > max_sweep_cells)
            throw ConfigError(fmt::format("grid has more than {} cells", max_sweep_cells));
    }
    return axes;
}

inline std::size_t cell_count(const std::vector<GridAxis>& axes)
{
    if (axes.empty())
        return 0;
    std::size_t n = 1;
    for (const auto& a : axes)
        n *= a.values.size();
    return n;
}

/// Grid indices of a cell; the last key varies fastest.
inline std::vector<std::size_t> cell_indices(const std::vector<GridAxis>& axes, std::size_t cell)
{
    std::vector<std::size_t> idx(axes.size());
    for (std::size_t i = axes.size(); i-- > 0;) {
        idx[i] = cell % axes[i].values.size();
        cell /= axes[i].values.size();
    }
    return idx;
}

inline void set_dotted(json& j, const std::string& dotted, const json& value)
{
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty())
            throw ConfigError("malformed grid key '" + dotted + "'");
        if (!node->is_object())
            throw ConfigError("grid key '" + dotted + "' does not address an object field");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null())
            *node = json::object();
        start = dot + 1;
    }
}

struct SweepRow {
    std::vector<json> values;
    std::string termination;
    int chosen_L = -1;
    double final_residual = std::nan("");
    double final_residual_rel = std::nan("");
    double sr_radius = std::nan("");
    double sr_l2_error = std::nan("");
    int exit_code = exit_ok;
    std::string error;
};

inline std::string csv_cell(const json& v)
{
    if (v.is_number_float())
        return format_double(v.get<double>());
    if (v.is_string())
        return v.get<std::string>();
    return v.dump();
}

inline std::string csv_quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

inline std::string sweep_csv(const std::vector<GridAxis>& axes, const std::vector<SweepRow>& rows)
{
    std::string out;
    for (const auto& a : axes)
        out += csv_quote(a.key) + ",";
    out += "termination,chosen_L,final_residual,final_residual_rel,sr_radius,sr_l2_error,exit_code,error\n";
    auto num = [](double x) { return std::isnan(x) ? std::string() : format_double(x); };
    for (const auto& r : rows) {
        for (const auto& v : r.values)
            out += csv_quote(csv_cell(v)) + ",";
        out += fmt::format("{},{},{},{},{},{},{},{}\n", r.termination, r.chosen_L, num(r.final_residual),
                           num(r.final_residual_rel), num(r.sr_radius), num(r.sr_l2_error), r.exit_code,
                           csv_quote(r.error));
    }
    return out;
}

inline SweepRow run_cell(const json& base, const std::vector<GridAxis>& axes, std::size_t cell,
                         const fs::path& base_dir)
{
    SweepRow row;
    const auto idx = cell_indices(axes, cell);
    json cfg_json = base;
    cfg_json.erase("grid");
    for (std::size_t i = 0; i < axes.size(); ++i)
        row.values.push_back(axes[i].values[idx[i]]);
    try {
        for (std::size_t i = 0; i < axes.size(); ++i)
            set_dotted(cfg_json, axes[i].key, row.values[i]);
        const RunConfig cfg = parse_run_config(cfg_json, base_dir);
        const RunResult result = execute(cfg);
        const SolveReport& r = result.report;
        row.termination = to_string(r.termination);
        row.chosen_L = r.chosen_L;
        row.final_residual = r.final_residual;
        row.final_residual_rel = r.data_norm > 0.0 ? r.final_residual / r.data_norm : 0.0;
        if (!result.field_errors.empty()) {
            row.sr_radius = result.field_errors.front().R;
            row.sr_l2_error = result.field_errors.front().l2_error;
        }
        row.exit_code = exit_code_of(r);
        row.error = r.solver_error;
    } catch (const std::exception& e) {
        row.termination = "error";
        row.exit_code = exit_code_of(e);
        row.error = e.what();
    }
    return row;
}

/// Runs every grid cell, at most `jobs` at a time; rows come back in grid order.
inline std::vector<SweepRow> run_sweep(const json& base, const std::vector<GridAxis>& axes, int jobs,
                                       const fs::path& base_dir)
{
    const std::size_t n = cell_count(axes);
    std::vector<SweepRow> rows(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++)
            rows[i] = run_cell(base, axes, i, base_dir);
    };
    const int workers = static_cast<int>(std::min<std::size_t>(std::max(jobs, 1), std::max<std::size_t>(n, 1)));
    std::vector<std::jthread> pool;
    for (int t = 1; t < workers; ++t)
        pool.emplace_back(worker);
    worker();
    return rows;
}

/// `mrc sweep`: per-cell failures are recorded in their rows and do not
/// change the exit status.
inline int sweep_command(const fs::path& config_path, const fs::path& out_dir, int jobs, std::ostream& err)
{
    try {
        if (jobs < 1)
            throw ConfigError("--jobs must be >= 1");
        const json j = load_json_file(config_path);
        if (!j.contains("grid"))
            throw ConfigError("sweep config needs a 'grid' block");
        const auto axes = parse_grid(j.at("grid"));
        std::string sweep_name = "sweep.csv";
        if (j.contains("outputs") && j.at("outputs").contains("sweep_csv"))
            sweep_name = j.at("outputs").at("sweep_csv").get<std::string>();
        const auto rows = run_sweep(j, axes, jobs, config_path.parent_path());
        write_text(out_dir / sweep_name, sweep_csv(axes, rows));
    } catch (const json::exception& e) {
        err << "error: malformed config: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_of(e);
    }
    return exit_ok;
}

} // namespace mrc::app
