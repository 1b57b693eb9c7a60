#pragma once

// Star-shaped boundaries r = rho(theta, phi) about a center, and the tensor
// Gauss-Legendre x trapezoid surface quadrature used to discretize L2(S).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "mrc/error.hpp"
#include "mrc/gauss_legendre.hpp"

namespace mrc {

using Vec3 = Eigen::Vector3d;

/// rho and its angular partial derivatives at one direction.
struct RadialSample {
    double rho = 0.0;
    double d_theta = 0.0;
    double d_phi = 0.0;
};

struct Sphere {
    double a = 1.0;

    RadialSample operator()(double, double) const { return {a, 0.0, 0.0}; }
};

/// rho = a (1 + e cos^2 theta)
struct Spheroid {
    double a = 1.0;
    double e = 0.0;

    RadialSample operator()(double theta, double) const
    {
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        return {a * (1.0 + e * c * c), -2.0 * a * e * c * s, 0.0};
    }
};

/// rho = a (1 + delta sin^k theta cos(p phi))
struct CosineBump {
    double a = 1.0;
    double delta = 0.0;
    int k = 2;
    int p = 3;

    RadialSample operator()(double theta, double phi) const
    {
        const double s = std::sin(theta);
        const double c = std::cos(theta);
        const double sk = std::pow(s, k);
        const double skm1 = k > 0 ? std::pow(s, k - 1) : 0.0;
        const double cp = std::cos(p * phi);
        const double sp = std::sin(p * phi);
        return {a * (1.0 + delta * sk * cp),
                a * delta * k * skm1 * c * cp,
                -a * delta * p * sk * sp};
    }
};

/// User-supplied radial function; derivatives by central differences.
struct UserRadial {
    std::function<double(double, double)> rho;
    static constexpr double fd_step = 1e-6;

    RadialSample operator()(double theta, double phi) const
    {
        const double h = fd_step;
        return {rho(theta, phi),
                (rho(theta + h, phi) - rho(theta - h, phi)) / (2.0 * h),
                (rho(theta, phi + h) - rho(theta, phi - h)) / (2.0 * h)};
    }
};

using RadialShape = std::variant<Sphere, Spheroid, CosineBump, UserRadial>;

class SurfaceSpec {
public:
    SurfaceSpec() = default;
    SurfaceSpec(const Vec3& center, RadialShape shape)
        : center_(center), shape_(std::move(shape))
    {
        validate();
    }

    static SurfaceSpec sphere(double a, const Vec3& center = Vec3::Zero())
    {
        return {center, Sphere{a}};
    }
    static SurfaceSpec spheroid(double a, double e, const Vec3& center = Vec3::Zero())
    {
        return {center, Spheroid{a, e}};
    }
    static SurfaceSpec cosine_bump(double a, double delta, int k, int p,
                                   const Vec3& center = Vec3::Zero())
    {
        return {center, CosineBump{a, delta, k, p}};
    }

    const Vec3& center() const { return center_; }
    const RadialShape& shape() const { return shape_; }

    RadialSample radial(double theta, double phi) const
    {
        return std::visit([&](const auto& s) { return s(theta, phi); }, shape_);
    }

    /// False for user-supplied shapes whose derivatives are finite-differenced.
    bool analytic_derivatives() const
    {
        return !std::holds_alternative<UserRadial>(shape_);
    }

    std::string preset_name() const
    {
        struct Namer {
            std::string operator()(const Sphere&) const { return "sphere"; }
            std::string operator()(const Spheroid&) const { return "spheroid"; }
            std::string operator()(const CosineBump&) const { return "cosine_bump"; }
            std::string operator()(const UserRadial&) const { return "user"; }
        };
        return std::visit(Namer{}, shape_);
    }

private:
    void validate() const
    {
        if (!center_.allFinite())
            throw GeometryError("surface center must be finite");
        struct Check {
            void operator()(const Sphere& s) const
            {
                if (!(s.a > 0.0) || !std::isfinite(s.a))
                    throw GeometryError("sphere: radius a must be positive");
            }
            void operator()(const Spheroid& s) const
            {
                if (!(s.a > 0.0) || !std::isfinite(s.a))
                    throw GeometryError("spheroid: a must be positive");
                if (!(s.e > -1.0) || !std::isfinite(s.e))
                    throw GeometryError("spheroid: e must exceed -1 so that rho > 0");
            }
            void operator()(const CosineBump& s) const
            {
                if (!(s.a > 0.0) || !std::isfinite(s.a))
                    throw GeometryError("cosine_bump: a must be positive");
                if (!(std::abs(s.delta) < 1.0))
                    throw GeometryError("cosine_bump: |delta| must be < 1 so that rho > 0");
                if (s.k < 0 || s.p < 0)
                    throw GeometryError("cosine_bump: k and p must be non-negative");
                if (s.k == 0 && s.p != 0 && s.delta != 0.0)
                    throw GeometryError("cosine_bump: k = 0 with p != 0 is not pole-consistent");
            }
            void operator()(const UserRadial& s) const
            {
                if (!s.rho)
                    throw GeometryError("user surface: radial function is empty");
            }
        };
        std::visit(Check{}, shape_);
    }

    Vec3 center_ = Vec3::Zero();
    RadialShape shape_ = Sphere{1.0};
};

inline Vec3 unit_direction(double theta, double phi)
{
    const double s = std::sin(theta);
    return {s * std::cos(phi), s * std::sin(phi), std::cos(theta)};
}

namespace detail {

// Extremum of rho over the sphere of directions: coarse grid, then
// repeated zoom around the best cell. sign = +1 for max, -1 for min.
inline double radial_extremum(const SurfaceSpec& spec, double sign)
{
    constexpr double pi = std::numbers::pi;
    constexpr int nt = 180;
    constexpr int np = 360;

    double best = -std::numeric_limits<double>::infinity();
    double best_t = 0.0;
    double best_p = 0.0;
    auto consider = [&](double t, double p) {
        const double r = spec.radial(t, p).rho;
        if (!(r > 0.0) || !std::isfinite(r))
            throw GeometryError("surface radius is non-positive at theta=" + std::to_string(t) +
                                ", phi=" + std::to_string(p));
        if (sign * r > best) {
            best = sign * r;
            best_t = t;
            best_p = p;
        }
    };

    for (int i = 0; i <= nt; ++i)
        for (int j = 0; j < np; ++j)
            consider(pi * i / nt, 2.0 * pi * j / np);

    double dt = pi / nt;
    double dp = 2.0 * pi / np;
    for (int level = 0; level < 4; ++level) {
        const double t0 = best_t;
        const double p0 = best_p;
        for (int i = -10; i <= 10; ++i) {
            const double t = std::clamp(t0 + dt * i / 10.0, 0.0, pi);
            for (int j = -10; j <= 10; ++j)
                consider(t, p0 + dp * j / 10.0);
        }
        dt /= 5.0;
        dp /= 5.0;
    }
    return sign * best;
}

} // namespace detail

/// Radius R of a ball about the center containing S: max rho, inflated by 1 + 1e-9.
inline double enclosing_radius(const SurfaceSpec& spec)
{
    return detail::radial_extremum(spec, 1.0) * (1.0 + 1e-9);
}

/// Radius of the largest ball about the center inside D: min rho, deflated by 1 - 1e-9.
inline double inscribed_radius(const SurfaceSpec& spec)
{
    return detail::radial_extremum(spec, -1.0) * (1.0 - 1e-9);
}

struct SurfaceNode {
    double theta = 0.0;
    double phi = 0.0;
    Vec3 position = Vec3::Zero();
    Vec3 normal = Vec3::Zero();  // unit, pointing out of D
    double weight = 0.0;
};

/// Discrete surface measure. Immutable once built.
struct QuadratureRule {
    std::vector<SurfaceNode> nodes;
    int n_theta = 0;
    int n_phi = 0;
    Vec3 center = Vec3::Zero();
    bool analytic_derivatives = true;

    std::size_t size() const { return nodes.size(); }

    double total_weight() const
    {
        double sum = 0.0;
        for (const auto& n : nodes)
            sum += n.weight;
        return sum;
    }
};

/// Gauss-Legendre in cos(theta) (theta ascending) tensored with the uniform
/// trapezoid rule in phi. Node order is theta-major.
inline QuadratureRule build_quadrature(const SurfaceSpec& spec, int n_theta, int n_phi)
{
    if (n_theta < 2)
        throw ConfigError("build_quadrature: n_theta must be >= 2");
    if (n_phi < 4)
        throw ConfigError("build_quadrature: n_phi must be >= 4");

    const GaussLegendreRule gl = gauss_legendre(n_theta);
    const double dphi = 2.0 * std::numbers::pi / n_phi;

    QuadratureRule rule;
    rule.n_theta = n_theta;
    rule.n_phi = n_phi;
    rule.center = spec.center();
    rule.analytic_derivatives = spec.analytic_derivatives();
    rule.nodes.reserve(static_cast<std::size_t>(n_theta) * n_phi);

    for (int i = 0; i < n_theta; ++i) {
        const double ct = gl.nodes[i];
        const double theta = std::acos(ct);
        const double st = std::sqrt((1.0 - ct) * (1.0 + ct));
        for (int j = 0; j < n_phi; ++j) {
            const double phi = dphi * j;
            const RadialSample r = spec.radial(theta, phi);
            if (!(r.rho > 0.0) || !std::isfinite(r.rho))
                throw GeometryError("surface radius is non-positive at a quadrature node");

            const double cp = std::cos(phi);
            const double sp = std::sin(phi);
            const Vec3 r_hat(st * cp, st * sp, ct);
            const Vec3 theta_hat(ct * cp, ct * sp, -st);
            const Vec3 phi_hat(-sp, cp, 0.0);

            // gradient of |x - c| - rho(theta, phi) evaluated on S
            const Vec3 grad = r_hat - (r.d_theta / r.rho) * theta_hat -
                              (r.d_phi / (r.rho * st)) * phi_hat;
            const double rphi = r.d_phi / st;
            const double jac = r.rho * std::sqrt(r.rho * r.rho + r.d_theta * r.d_theta + rphi * rphi);

            SurfaceNode node;
            node.theta = theta;
            node.phi = phi;
            node.position = spec.center() + r.rho * r_hat;
            node.normal = grad.normalized();
            node.weight = gl.weights[i] * dphi * jac;
            rule.nodes.push_back(node);
        }
    }
    return rule;
}

} // namespace mrc
