#pragma once

// Weighted least squares  min_c || sum_k c_k B b_k - f ||_{L2(S)}  discretized
// by the surface rule: row i of the system is scaled by sqrt(w_i), so the
// Euclidean residual of the scaled system is the discrete L2(S) misfit.
//
// Solved as A = Q R followed by a full SVD of the square factor R; singular
// values below rtol * sigma_1 are dropped and the minimum-norm coefficient
// vector on the retained subspace is returned.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mrc/boundary.hpp"
#include "mrc/error.hpp"
#include "mrc/geometry.hpp"
#include "mrc/harmonics.hpp"

namespace mrc {

inline constexpr double default_svd_rtol = 1e-12;

struct LsqProblem {
    Eigen::MatrixXd design;        // sqrt(w_i) * (B h_k)(x_i)
    Eigen::VectorXd rhs;           // sqrt(w_i) * f(x_i)
    Eigen::VectorXd sqrt_weights;
    std::vector<HarmonicIndex> columns;
    int degree = 0;
};

struct LsqSolution {
    Eigen::VectorXd coefficients;
    double residual_l2 = 0.0;          // min ||A c - b|| as given by the factorization
    double recomputed_residual = 0.0;  // ||A c - b|| evaluated from the coefficients
    double sup_residual = 0.0;     // max_i |(B v)(x_i) - f(x_i)|
    Eigen::VectorXd singular_values;
    int rank = 0;
    double condition_estimate = 0.0;  // sigma_1 / sigma_rank
    bool underdetermined = false;     // fewer rows than columns
};

inline LsqProblem assemble(const QuadratureRule& rule, const BasisEvaluation& basis,
                           std::span<const double> samples, const BoundaryCondition& bc)
{
    const auto n = static_cast<Eigen::Index>(rule.size());
    if (basis.rows() != n)
        throw AssemblyError("basis evaluated at " + std::to_string(basis.rows()) +
                            " points but the rule has " + std::to_string(n) + " nodes");
    if (static_cast<Eigen::Index>(samples.size()) != n)
        throw AssemblyError("boundary data has " + std::to_string(samples.size()) +
                            " samples but the rule has " + std::to_string(n) + " nodes");
    if (bc.needs_gradients() && !basis.gradients)
        throw AssemblyError(to_string(bc.kind) + " assembly needs basis gradients");

    LsqProblem prob;
    prob.degree = basis.degree;
    const Eigen::Index K = basis.cols();
    prob.columns.reserve(K);
    for (Eigen::Index k = 0; k < K; ++k)
        prob.columns.push_back(unflatten(static_cast<int>(k)));

    prob.sqrt_weights.resize(n);
    prob.rhs.resize(n);
    prob.design.resize(n, K);
    for (Eigen::Index i = 0; i < n; ++i) {
        const SurfaceNode& node = rule.nodes[i];
        const double sw = std::sqrt(node.weight);
        prob.sqrt_weights(i) = sw;
        prob.rhs(i) = sw * samples[i];
        for (Eigen::Index k = 0; k < K; ++k) {
            double dn = 0.0;
            if (bc.needs_gradients()) {
                const auto& g = *basis.gradients;
                dn = node.normal.x() * g[0](i, k) + node.normal.y() * g[1](i, k) +
                     node.normal.z() * g[2](i, k);
            }
            prob.design(i, k) = sw * bc.apply(basis.values(i, k), dn);
        }
    }
    return prob;
}

inline LsqProblem assemble(const QuadratureRule& rule, const BasisEvaluation& basis,
                           const BoundaryData& data)
{
    const std::vector<double> samples = data.sample(rule);
    return assemble(rule, basis, samples, data.condition());
}

namespace detail {

struct SvdFactors {
    Eigen::MatrixXd U;
    Eigen::VectorXd s;  // descending
    Eigen::MatrixXd V;
};

extern "C" void dgesvd_(const char* jobu, const char* jobvt, const int* m, const int* n, double* a,
                        const int* lda, double* s, double* u, const int* ldu, double* vt, const int* ldvt,
                        double* work, const int* lwork, int* info);

/// SVD by LAPACK's QR iteration (dgesvd). Eigen 3.4's divide-and-conquer SVD
/// can lose about half the digits on small well-conditioned triangular factors.
inline SvdFactors svd(Eigen::MatrixXd M, bool thin)
{
    const int m = static_cast<int>(M.rows());
    const int n = static_cast<int>(M.cols());
    const int k = std::min(m, n);
    SvdFactors f;
    f.s.resize(k);
    f.U.resize(m, thin ? k : m);
    Eigen::MatrixXd Vt(thin ? k : n, n);
    const int ldvt = std::max(1, static_cast<int>(Vt.rows()));
    const int lda = std::max(1, m);
    const char job = thin ? 'S' : 'A';
    int info = 0;
    int lwork = -1;
    double query = 0.0;
    dgesvd_(&job, &job, &m, &n, M.data(), &lda, f.s.data(), f.U.data(), &lda, Vt.data(), &ldvt, &query,
            &lwork, &info);
    if (info == 0) {
        lwork = static_cast<int>(query);
        std::vector<double> work(static_cast<std::size_t>(std::max(lwork, 1)));
        dgesvd_(&job, &job, &m, &n, M.data(), &lda, f.s.data(), f.U.data(), &lda, Vt.data(), &ldvt,
                work.data(), &lwork, &info);
    }
    if (info != 0)
        throw DegenerateSystemError("SVD failed (dgesvd info " + std::to_string(info) + ")");
    f.V = Vt.transpose();
    return f;
}

inline void fill_misfit(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::VectorXd& b,
                        const Eigen::VectorXd& sqrt_weights, LsqSolution& sol)
{
    const Eigen::VectorXd r = A * sol.coefficients - b;
    sol.recomputed_residual = r.norm();
    double sup = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i)
        if (sqrt_weights(i) > 0.0)
            sup = std::max(sup, std::abs(r(i)) / sqrt_weights(i));
    sol.sup_residual = sup;
}

inline int retained_rank(const Eigen::VectorXd& s, double rtol)
{
    const double smax = s.size() > 0 ? s(0) : 0.0;
    int rank = 0;
    while (rank < s.size() && s(rank) > 0.0 && s(rank) >= rtol * smax)
        ++rank;
    if (!(smax > 0.0) || rank == 0)
        throw DegenerateSystemError("all singular values are below the truncation threshold");
    return rank;
}

inline LsqSolution solve_dense(const Eigen::Ref<const Eigen::MatrixXd>& A,
                               const Eigen::VectorXd& b,
                               const Eigen::VectorXd& sqrt_weights, double rtol)
{
    if (A.rows() == 0 || A.cols() == 0)
        throw AssemblyError("least-squares problem is empty");
    if (!(rtol >= 0.0 && rtol < 1.0))
        throw ConfigError("svd_rtol must lie in [0, 1)");

    const Eigen::Index m = A.rows();
    const Eigen::Index n = A.cols();

    LsqSolution sol;
    sol.underdetermined = m < n;

    Eigen::MatrixXd U;
    Eigen::MatrixXd V;
    Eigen::VectorXd utb;     // U^T (projected rhs)
    double outside = 0.0;    // part of b orthogonal to range(U)

    if (m >= n) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
        const Eigen::VectorXd qtb = qr.householderQ().adjoint() * b;
        auto f = svd(qr.matrixQR().topRows(n).triangularView<Eigen::Upper>(), false);
        sol.singular_values = std::move(f.s);
        U = std::move(f.U);
        V = std::move(f.V);
        utb = U.transpose() * qtb.head(n);
        outside = qtb.tail(m - n).squaredNorm();
    } else {
        auto f = svd(A, true);
        sol.singular_values = std::move(f.s);
        U = std::move(f.U);
        V = std::move(f.V);
        utb = U.transpose() * b;
        outside = std::max(0.0, b.squaredNorm() - utb.squaredNorm());
    }

    const Eigen::VectorXd& s = sol.singular_values;
    const int rank = retained_rank(s, rtol);
    sol.rank = rank;
    sol.condition_estimate = s(0) / s(rank - 1);

    Eigen::VectorXd scaled = utb.head(rank).cwiseQuotient(s.head(rank));
    sol.coefficients = V.leftCols(rank) * scaled;

    const double dropped = utb.size() > rank ? utb.tail(utb.size() - rank).squaredNorm() : 0.0;
    sol.residual_l2 = std::sqrt(outside + dropped);
    fill_misfit(A, b, sqrt_weights, sol);
    return sol;
}

} // namespace detail

/// Solve using the columns of degrees 0..degree (all columns when degree < 0).
inline LsqSolution solve(const LsqProblem& problem, double svd_rtol = default_svd_rtol,
                         int degree = -1)
{
    if (degree > problem.degree)
        throw AssemblyError("requested degree exceeds the assembled degree");
    const Eigen::Index cols = degree < 0 ? problem.design.cols() : basis_size(degree);
    return detail::solve_dense(problem.design.leftCols(cols), problem.rhs, problem.sqrt_weights,
                               svd_rtol);
}

/// Every leading-degree subproblem of one assembled problem, from a single QR
/// of the full design. Householder QR is column sequential, so the factor of
/// the first n columns is the leading block of the full factor and the misfit
/// of the subproblem is the part of Q^T b below row n. Those tails are summed
/// from the bottom up, which keeps the residual history non-increasing in
/// floating point too. Problems with fewer rows than columns fall back to
/// independent solves.
class NestedLsq {
public:
    explicit NestedLsq(const LsqProblem& problem) : problem_(&problem)
    {
        const Eigen::Index m = problem.design.rows();
        const Eigen::Index n = problem.design.cols();
        if (m == 0 || n == 0)
            throw AssemblyError("least-squares problem is empty");
        if (m < n)
            return;
        qr_.compute(problem.design);
        qtb_ = qr_.householderQ().adjoint() * problem.rhs;
        tail_sq_.assign(static_cast<std::size_t>(m) + 1, 0.0);
        for (Eigen::Index i = m; i-- > 0;)
            tail_sq_[i] = tail_sq_[i + 1] + qtb_(i) * qtb_(i);
        factored_ = true;
    }

    LsqSolution solve(int degree, double rtol = default_svd_rtol) const
    {
        if (degree < 0 || degree > problem_->degree)
            throw AssemblyError("requested degree is outside the assembled range");
        if (!factored_)
            return mrc::solve(*problem_, rtol, degree);
        if (!(rtol >= 0.0 && rtol < 1.0))
            throw ConfigError("svd_rtol must lie in [0, 1)");

        const Eigen::Index n = basis_size(degree);
        const auto f = detail::svd(qr_.matrixQR().topLeftCorner(n, n).triangularView<Eigen::Upper>(), false);

        LsqSolution sol;
        sol.singular_values = f.s;
        const int rank = detail::retained_rank(sol.singular_values, rtol);
        sol.rank = rank;
        sol.condition_estimate = sol.singular_values(0) / sol.singular_values(rank - 1);

        const Eigen::VectorXd utb = f.U.transpose() * qtb_.head(n);
        sol.coefficients = f.V.leftCols(rank) * utb.head(rank).cwiseQuotient(sol.singular_values.head(rank));
        const double dropped = n > rank ? utb.tail(n - rank).squaredNorm() : 0.0;
        sol.residual_l2 = std::sqrt(tail_sq_[n] + dropped);
        detail::fill_misfit(problem_->design.leftCols(n), problem_->rhs, problem_->sqrt_weights, sol);
        return sol;
    }

private:
    const LsqProblem* problem_;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
    Eigen::VectorXd qtb_;
    std::vector<double> tail_sq_;  // tail_sq_[n] = sum_{i >= n} (Q^T b)_i^2
    bool factored_ = false;
};

} // namespace mrc
