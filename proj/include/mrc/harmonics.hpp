#pragma once

// Real orthonormal spherical harmonics Y_lm and the exterior harmonics
// h_lm(x) = Y_lm(x_hat) / |x|^(l+1), with Cartesian gradients.
//
// Convention, fixed for reproducible coefficient signs:
//   m > 0:  Y_lm = sqrt(2) Pbar_lm(cos t) cos(m phi)
//   m = 0:  Y_l0 = Pbar_l0(cos t)
//   m < 0:  Y_lm = sqrt(2) Pbar_l|m|(cos t) sin(|m| phi)
// where Pbar are fully normalized associated Legendre functions without the
// Condon-Shortley phase, so Y_11 = sqrt(3/4pi) x.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mrc/error.hpp"
#include "mrc/geometry.hpp"

namespace mrc {

inline constexpr int max_degree = 64;

struct HarmonicIndex {
    int ell = 0;
    int m = 0;

    friend bool operator==(const HarmonicIndex&, const HarmonicIndex&) = default;
};

/// k = l^2 + (m + l); degrees 0..L fill indices 0..(L+1)^2 - 1.
constexpr int flatten(int ell, int m) { return ell * ell + m + ell; }
constexpr int flatten(HarmonicIndex idx) { return flatten(idx.ell, idx.m); }

inline HarmonicIndex unflatten(int k)
{
    int ell = static_cast<int>(std::sqrt(static_cast<double>(k)));
    while (ell * ell > k)
        --ell;
    while ((ell + 1) * (ell + 1) <= k)
        ++ell;
    return {ell, k - ell * ell - ell};
}

constexpr int basis_size(int ell_max) { return (ell_max + 1) * (ell_max + 1); }

namespace detail {

inline void check_degree(int ell_max)
{
    if (ell_max < 0 || ell_max > max_degree)
        throw DomainError("harmonic degree must lie in [0, " + std::to_string(max_degree) + "]");
}

constexpr int tri(int ell, int m) { return ell * (ell + 1) / 2 + m; }

// Fully normalized Pbar_lm(cos t) for 0 <= m <= l <= L, triangular storage.
inline void normalized_legendre(int L, double ct, double st, std::vector<double>& p)
{
    p.assign(static_cast<std::size_t>(tri(L, L) + 1), 0.0);
    p[0] = 0.5 / std::sqrt(std::numbers::pi);
    for (int m = 1; m <= L; ++m)
        p[tri(m, m)] = std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * st * p[tri(m - 1, m - 1)];
    for (int m = 0; m < L; ++m)
        p[tri(m + 1, m)] = std::sqrt(2.0 * m + 3.0) * ct * p[tri(m, m)];
    for (int m = 0; m <= L; ++m) {
        for (int l = m + 2; l <= L; ++l) {
            const double l2 = double(l) * l;
            const double m2 = double(m) * m;
            const double a = std::sqrt((4.0 * l2 - 1.0) / (l2 - m2));
            const double lm1 = l - 1.0;
            const double b = std::sqrt((lm1 * lm1 - m2) / (4.0 * lm1 * lm1 - 1.0));
            p[tri(l, m)] = a * (ct * p[tri(l - 1, m)] - b * p[tri(l - 2, m)]);
        }
    }
}

// d Pbar_lm / d theta, from neighbouring orders of the same degree.
inline double legendre_dtheta(const std::vector<double>& p, int l, int m)
{
    if (l == 0)
        return 0.0;
    if (m == 0)
        return -std::sqrt(double(l) * (l + 1)) * p[tri(l, 1)];
    const double lo = std::sqrt(double(l + m) * (l - m + 1)) * p[tri(l, m - 1)];
    const double hi = m < l ? std::sqrt(double(l - m) * (l + m + 1)) * p[tri(l, m + 1)] : 0.0;
    return 0.5 * (lo - hi);
}

struct Angles {
    double ct;
    double st;
    double phi;
};

inline Angles angles_of(const Vec3& u)
{
    const double rho_xy = std::hypot(u.x(), u.y());
    const double r = std::hypot(rho_xy, u.z());
    return {u.z() / r, rho_xy / r, std::atan2(u.y(), u.x())};
}

// Y_lm in flat order for a direction given by its angles.
inline void real_harmonics(int L, const Angles& a, std::span<double> out,
                           std::vector<double>& p)
{
    normalized_legendre(L, a.ct, a.st, p);
    constexpr double sqrt2 = std::numbers::sqrt2;
    for (int l = 0; l <= L; ++l) {
        out[flatten(l, 0)] = p[tri(l, 0)];
        for (int m = 1; m <= l; ++m) {
            const double v = sqrt2 * p[tri(l, m)];
            out[flatten(l, m)] = v * std::cos(m * a.phi);
            out[flatten(l, -m)] = v * std::sin(m * a.phi);
        }
    }
}

// h_lm and (optionally) grad h_lm at offset d = x - center.
inline void exterior_harmonics(int L, const Vec3& d, std::span<double> values,
                               std::span<Vec3> gradients, std::vector<double>& p)
{
    const double r = d.norm();
    if (!(r > 0.0))
        throw DomainError("exterior harmonics are singular at the expansion center");
    const Angles a = angles_of(d);
    const bool want_grad = !gradients.empty();
    if (want_grad && a.st == 0.0 && L >= 1)
        throw PoleEvaluationError("gradient of h_lm with m != 0 requested on the polar axis");

    normalized_legendre(L, a.ct, a.st, p);

    const double cp = std::cos(a.phi);
    const double sp = std::sin(a.phi);
    const Vec3 r_hat(a.st * cp, a.st * sp, a.ct);
    const Vec3 t_hat(a.ct * cp, a.ct * sp, -a.st);
    const Vec3 p_hat(-sp, cp, 0.0);

    constexpr double sqrt2 = std::numbers::sqrt2;
    const double inv_r = 1.0 / r;
    double scale = inv_r;  // r^-(l+1)
    for (int l = 0; l <= L; ++l, scale *= inv_r) {
        const double gscale = scale * inv_r;  // r^-(l+2)
        for (int m = 0; m <= l; ++m) {
            const double pl = p[tri(l, m)];
            if (m == 0) {
                const int k = flatten(l, 0);
                values[k] = pl * scale;
                if (want_grad) {
                    const double dt = legendre_dtheta(p, l, 0);
                    gradients[k] = gscale * (-(l + 1.0) * pl * r_hat + dt * t_hat);
                }
                continue;
            }
            const double c = std::cos(m * a.phi);
            const double s = std::sin(m * a.phi);
            const int kc = flatten(l, m);
            const int ks = flatten(l, -m);
            values[kc] = sqrt2 * pl * c * scale;
            values[ks] = sqrt2 * pl * s * scale;
            if (want_grad) {
                const double dt = sqrt2 * legendre_dtheta(p, l, m);
                const double dp = sqrt2 * m * pl / a.st;  // (dY/dphi) / sin t, up to trig factor
                gradients[kc] = gscale * (-(l + 1.0) * sqrt2 * pl * c * r_hat + dt * c * t_hat -
                                          dp * s * p_hat);
                gradients[ks] = gscale * (-(l + 1.0) * sqrt2 * pl * s * r_hat + dt * s * t_hat +
                                          dp * c * p_hat);
            }
        }
    }
}

} // namespace detail

/// Y_lm(alpha) for l <= ell_max in flat order. alpha must be a unit vector.
inline std::vector<double> eval_Y(int ell_max, const Vec3& alpha)
{
    detail::check_degree(ell_max);
    if (!alpha.allFinite() || std::abs(alpha.norm() - 1.0) > 1e-12)
        throw DomainError("eval_Y: direction must be a unit vector");
    std::vector<double> out(basis_size(ell_max));
    std::vector<double> p;
    detail::real_harmonics(ell_max, detail::angles_of(alpha), out, p);
    return out;
}

/// h_lm(x) = Y_lm((x - c)/r) / r^(l+1), r = |x - c|.
inline std::vector<double> eval_h(int ell_max, const Vec3& x, const Vec3& center = Vec3::Zero())
{
    detail::check_degree(ell_max);
    std::vector<double> out(basis_size(ell_max));
    std::vector<double> p;
    detail::exterior_harmonics(ell_max, x - center, out, {}, p);
    return out;
}

/// Cartesian gradients of h_lm at x. Throws PoleEvaluationError on the polar
/// axis through the center when ell_max >= 1.
inline std::vector<Vec3> eval_grad_h(int ell_max, const Vec3& x, const Vec3& center = Vec3::Zero())
{
    detail::check_degree(ell_max);
    std::vector<double> values(basis_size(ell_max));
    std::vector<Vec3> grads(basis_size(ell_max), Vec3::Zero());
    std::vector<double> p;
    detail::exterior_harmonics(ell_max, x - center, values, grads, p);
    return grads;
}

/// h_lm (and optionally its gradient components) at every node of a rule.
/// Rows are nodes, columns flat harmonic indices.
struct BasisEvaluation {
    int degree = 0;
    Eigen::MatrixXd values;
    std::optional<std::array<Eigen::MatrixXd, 3>> gradients;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

inline BasisEvaluation evaluate_basis(const QuadratureRule& rule, int ell_max, bool with_gradients)
{
    detail::check_degree(ell_max);
    const auto n = static_cast<Eigen::Index>(rule.size());
    const int K = basis_size(ell_max);

    BasisEvaluation basis;
    basis.degree = ell_max;
    basis.values.resize(n, K);
    if (with_gradients)
        basis.gradients.emplace(std::array<Eigen::MatrixXd, 3>{
            Eigen::MatrixXd(n, K), Eigen::MatrixXd(n, K), Eigen::MatrixXd(n, K)});

    std::vector<double> vals(K);
    std::vector<Vec3> grads(with_gradients ? K : 0, Vec3::Zero());
    std::vector<double> p;
    for (Eigen::Index i = 0; i < n; ++i) {
        detail::exterior_harmonics(ell_max, rule.nodes[i].position - rule.center, vals, grads, p);
        for (int k = 0; k < K; ++k)
            basis.values(i, k) = vals[k];
        if (with_gradients) {
            auto& g = *basis.gradients;
            for (int k = 0; k < K; ++k) {
                g[0](i, k) = grads[k].x();
                g[1](i, k) = grads[k].y();
                g[2](i, k) = grads[k].z();
            }
        }
    }
    return basis;
}

} // namespace mrc
