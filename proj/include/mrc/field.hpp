#pragma once

// The fitted exterior field v = sum_k c_k h_k, exact-solution oracles, and the
// error measures on S and on an enclosing sphere S_R.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <variant>
#include <vector>

#include "mrc/boundary.hpp"
#include "mrc/error.hpp"
#include "mrc/geometry.hpp"
#include "mrc/harmonics.hpp"

namespace mrc {

class ExteriorField {
public:
    ExteriorField() = default;

    /// Radii are the inscribed and enclosing radii of the boundary the field was fitted on.
    ExteriorField(const Vec3& center, std::vector<double> coefficients, double inscribed_radius,
                  double enclosing_radius)
        : center_(center), coefficients_(std::move(coefficients)),
          inscribed_(inscribed_radius), enclosing_(enclosing_radius)
    {
        const auto K = static_cast<int>(coefficients_.size());
        degree_ = 0;
        while (basis_size(degree_) < K)
            ++degree_;
        if (basis_size(degree_) != K)
            throw ConfigError("coefficient count must be (L+1)^2");
        if (degree_ > max_degree)
            throw ConfigError("field degree exceeds the supported maximum");
    }

    ExteriorField(const SurfaceSpec& spec, std::vector<double> coefficients)
        : ExteriorField(spec.center(), std::move(coefficients), inscribed_radius(spec),
                        enclosing_radius(spec))
    {
    }

    const Vec3& center() const { return center_; }
    const std::vector<double>& coefficients() const { return coefficients_; }
    int degree() const { return degree_; }
    double inscribed() const { return inscribed_; }
    double enclosing() const { return enclosing_; }

    double value(const Vec3& x) const
    {
        check_exterior(x);
        const std::vector<double> h = eval_h(degree_, x, center_);
        double sum = 0.0;
        for (std::size_t k = 0; k < h.size(); ++k)
            sum += coefficients_[k] * h[k];
        return sum;
    }

    Vec3 gradient(const Vec3& x) const
    {
        check_exterior(x);
        const std::vector<Vec3> g = eval_grad_h(degree_, x, center_);
        Vec3 sum = Vec3::Zero();
        for (std::size_t k = 0; k < g.size(); ++k)
            sum += coefficients_[k] * g[k];
        return sum;
    }

private:
    void check_exterior(const Vec3& x) const
    {
        if ((x - center_).norm() < inscribed_)
            throw DomainError("field evaluation inside the inscribed ball is refused");
    }

    Vec3 center_ = Vec3::Zero();
    std::vector<double> coefficients_{0.0};
    int degree_ = 0;
    double inscribed_ = 0.0;
    double enclosing_ = 0.0;
};

inline double eval_field(const ExteriorField& field, const Vec3& x) { return field.value(x); }

/// q / |x - z|, no 4 pi factor.
struct PointSource {
    Vec3 z = Vec3::Zero();
    double q = 1.0;

    double value(const Vec3& x) const { return q / (x - z).norm(); }
    Vec3 gradient(const Vec3& x) const
    {
        const Vec3 d = x - z;
        const double r = d.norm();
        return -q * d / (r * r * r);
    }
};

/// A finite exterior expansion about center, used as its own exact solution.
struct BandLimited {
    Vec3 center = Vec3::Zero();
    std::vector<double> coefficients;

    int degree() const
    {
        int L = 0;
        while (basis_size(L) < static_cast<int>(coefficients.size()))
            ++L;
        return L;
    }
    double value(const Vec3& x) const
    {
        const std::vector<double> h = eval_h(degree(), x, center);
        double sum = 0.0;
        for (std::size_t k = 0; k < coefficients.size(); ++k)
            sum += coefficients[k] * h[k];
        return sum;
    }
    Vec3 gradient(const Vec3& x) const
    {
        const std::vector<Vec3> g = eval_grad_h(degree(), x, center);
        Vec3 sum = Vec3::Zero();
        for (std::size_t k = 0; k < coefficients.size(); ++k)
            sum += coefficients[k] * g[k];
        return sum;
    }
};

class OracleSolution {
public:
    OracleSolution(PointSource s) : kind_(s) {}
    OracleSolution(BandLimited s) : kind_(std::move(s)) {}

    double value(const Vec3& x) const
    {
        return std::visit([&](const auto& k) { return k.value(x); }, kind_);
    }
    Vec3 gradient(const Vec3& x) const
    {
        return std::visit([&](const auto& k) { return k.gradient(x); }, kind_);
    }
    const std::variant<PointSource, BandLimited>& kind() const { return kind_; }

private:
    std::variant<PointSource, BandLimited> kind_;
};

/// Exterior expansion of q/|x - z| about center:
/// c_lm = q 4pi/(2l+1) |z - c|^l Y_lm(dir(z - c)).
inline std::vector<double> multipole_coefficients(const Vec3& center, const Vec3& z, double q,
                                                  int L)
{
    detail::check_degree(L);
    std::vector<double> c(basis_size(L), 0.0);
    const Vec3 d = z - center;
    const double rz = d.norm();
    if (rz == 0.0) {
        c[0] = q * 2.0 * std::sqrt(std::numbers::pi);
        return c;
    }
    const std::vector<double> y = eval_Y(L, d / rz);
    double rl = 1.0;
    for (int l = 0; l <= L; ++l, rl *= rz) {
        const double f = q * 4.0 * std::numbers::pi / (2.0 * l + 1.0) * rl;
        for (int m = -l; m <= l; ++m)
            c[flatten(l, m)] = f * y[flatten(l, m)];
    }
    return c;
}

/// As above, refusing sources outside the inscribed ball of the surface.
inline std::vector<double> multipole_coefficients(const SurfaceSpec& spec, const Vec3& z,
                                                  double q, int L)
{
    if ((z - spec.center()).norm() >= inscribed_radius(spec))
        throw DomainError("point source must lie inside the inscribed ball of the surface");
    return multipole_coefficients(spec.center(), z, q, L);
}

/// f = B u on S for an exact solution u.
inline BoundaryData boundary_data_from_oracle(const OracleSolution& oracle, BoundaryCondition bc)
{
    return BoundaryData::from_trace(
        [oracle, bc](const SurfaceNode& node) {
            const double v = oracle.value(node.position);
            const double dn = bc.needs_gradients() ? node.normal.dot(oracle.gradient(node.position))
                                                   : 0.0;
            return bc.apply(v, dn);
        },
        bc);
}

/// Neumann data of 1/|x - z|: f(x_i) = -n_i . (x_i - z) / |x_i - z|^3.
inline BoundaryData neumann_data_from_potential(const SurfaceSpec& spec,
                                                const QuadratureRule& rule, const Vec3& z)
{
    if ((z - spec.center()).norm() >= inscribed_radius(spec))
        throw DomainError("point source must lie inside the inscribed ball of the surface");
    if ((rule.center - spec.center()).norm() != 0.0)
        throw ConfigError("quadrature rule was built for a different surface center");
    return BoundaryData::from_trace(
        [z](const SurfaceNode& node) {
            const Vec3 d = node.position - z;
            const double r = d.norm();
            return -node.normal.dot(d) / (r * r * r);
        },
        BoundaryCondition::neumann());
}

struct FieldError {
    double l2 = 0.0;
    double sup = 0.0;
};

/// sqrt(int_{S_R} |v - u|^2 dS) and the node maximum on a sphere of radius R
/// about the field center. R must not be smaller than the enclosing radius.
inline FieldError error_on_enclosing_sphere(const ExteriorField& field,
                                            const OracleSolution& oracle, double R, int n_theta,
                                            int n_phi)
{
    if (!(R >= field.enclosing()))
        throw DomainError("S_R must enclose the boundary: R is below the enclosing radius");
    const QuadratureRule sr = build_quadrature(SurfaceSpec::sphere(R, field.center()), n_theta, n_phi);
    FieldError err;
    double sum = 0.0;
    for (const auto& node : sr.nodes) {
        const double d = field.value(node.position) - oracle.value(node.position);
        sum += node.weight * d * d;
        err.sup = std::max(err.sup, std::abs(d));
    }
    err.l2 = std::sqrt(sum);
    return err;
}

/// Node maximum of |B v - f|, the discrete stand-in for the C(S) norm.
inline double sup_residual(const QuadratureRule& rule, const ExteriorField& field,
                           const BoundaryData& data)
{
    const std::vector<double> f = data.sample(rule);
    const BoundaryCondition& bc = data.condition();
    double sup = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const SurfaceNode& node = rule.nodes[i];
        const double v = field.value(node.position);
        const double dn = bc.needs_gradients() ? node.normal.dot(field.gradient(node.position)) : 0.0;
        sup = std::max(sup, std::abs(bc.apply(v, dn) - f[i]));
    }
    return sup;
}

} // namespace mrc
