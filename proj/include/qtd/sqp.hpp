#pragma once
// Equality-constrained sequential quadratic programming.
//
// Each iteration solves the QP
//     min_d  g^T d + 1/2 d^T B d   s.t.  J d = -c
// where B is a damped-BFGS approximation of the Lagrangian Hessian, then
// takes a step accepted by an L1 exact-penalty merit line search with a
// second-order correction. Gradients that throw DegenerateSpectrum are
// replaced by central differences for that iterate.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace qtd {

template <class P>
concept ConstrainedProblem = requires(const P& p, const Eigen::VectorXd& x) {
    { p.value(x) } -> std::convertible_to<double>;
    { p.gradient(x) } -> std::convertible_to<Eigen::VectorXd>;
    { p.constraints(x) } -> std::convertible_to<Eigen::VectorXd>;
    { p.jacobian(x) } -> std::convertible_to<Eigen::MatrixXd>;
};

struct QpStep {
    Eigen::VectorXd step;
    Eigen::VectorXd multipliers; ///< mu with g + H d = J^T mu
};

inline constexpr double qp_rank_tol = 1e-10;

/// Solves [[H, J^T], [J, 0]] [d; -mu] = [-g; -c]. Throws RankDeficient when
/// J loses row rank.
inline QpStep solve_equality_qp(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& grad, const Eigen::MatrixXd& jac,
                                const Eigen::VectorXd& cviol)
{
    const Eigen::Index n = hessian.rows();
    const Eigen::Index m = jac.rows();
    if (hessian.cols() != n || grad.size() != n || jac.cols() != n || cviol.size() != m)
        throw InvalidArgument("solve_equality_qp: inconsistent dimensions");
    if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, hessian.cwiseAbs().maxCoeff()))
        throw InvalidArgument("solve_equality_qp: hessian is not symmetric");
    if (m > 0) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
        const Eigen::VectorXd& sv = svd.singularValues();
        if (sv.size() < m || sv(m - 1) <= qp_rank_tol * std::max(1.0, sv(0)))
            throw RankDeficient("solve_equality_qp: constraint Jacobian is rank deficient");
    }
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m, n + m);
    kkt.topLeftCorner(n, n) = hessian;
    kkt.topRightCorner(n, m) = jac.transpose();
    kkt.bottomLeftCorner(m, n) = jac;
    Eigen::VectorXd rhs(n + m);
    rhs << -grad, -cviol;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible())
        throw NumericalError("solve_equality_qp: singular KKT matrix");
    const Eigen::VectorXd sol = lu.solve(rhs);
    return {sol.head(n), -sol.tail(m)};
}

struct SqpOptions {
    int max_iterations = 500;
    double kkt_tol = 1e-8;
    double step_tol = 1e-10;
    double feasibility_tol = 1e-10;
    double armijo = 1e-4;
    double penalty_margin = 1e-3;
    double fd_step = 1e-6;
};

struct MeritStep {
    double before;
    double after;
};

struct SqpResult {
    Eigen::VectorXd x;
    Eigen::VectorXd multipliers;
    double objective = 0.0;
    int iterations = 0;
    double kkt_residual = 0.0;
    double constraint_violation = 0.0;
    bool converged = false;
    std::string status;
    int fd_gradients = 0;        ///< iterates whose gradient came from finite differences
    int reduced_qp_steps = 0;    ///< QPs solved on a reduced constraint set
    std::vector<MeritStep> merit; ///< L1 merit before/after each accepted step (same penalty)
};

namespace detail {

template <class P>
Eigen::VectorXd central_difference(const P& p, const Eigen::VectorXd& x, double h)
{
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp(i) = x(i) + h;
        const double fp = p.value(xp);
        xp(i) = x(i) - h;
        const double fm = p.value(xp);
        xp(i) = x(i);
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

template <ConstrainedProblem P>
Eigen::VectorXd safe_gradient(const P& p, const Eigen::VectorXd& x, double h, int& fd_count)
{
    try {
        return p.gradient(x);
    } catch (const DegenerateSpectrum&) {
        ++fd_count;
        return central_difference(p, x, h);
    }
}

/// Least-squares multipliers argmin |g - J^T mu|.
inline Eigen::VectorXd ls_multipliers(const Eigen::VectorXd& g, const Eigen::MatrixXd& jac)
{
    if (jac.rows() == 0)
        return {};
    return jac.transpose().completeOrthogonalDecomposition().solve(g);
}

inline double kkt_residual(const Eigen::VectorXd& g, const Eigen::MatrixXd& jac, const Eigen::VectorXd& c)
{
    const Eigen::VectorXd mu = ls_multipliers(g, jac);
    const double stat = jac.rows() ? (g - jac.transpose() * mu).cwiseAbs().maxCoeff() : g.cwiseAbs().maxCoeff();
    return std::max(stat, c.size() ? c.cwiseAbs().maxCoeff() : 0.0);
}

/// QP step on the numerically independent combinations of the constraint
/// rows. Used when the full Jacobian is rank deficient.
inline QpStep reduced_qp(const Eigen::MatrixXd& b, const Eigen::VectorXd& g, const Eigen::MatrixXd& jac,
                         const Eigen::VectorXd& c)
{
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeFullU);
    const Eigen::VectorXd& sv = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > 1e-8 * std::max(1.0, sv(0)))
        ++rank;
    const Eigen::MatrixXd basis = svd.matrixU().leftCols(rank);
    QpStep st = solve_equality_qp(b, g, basis.transpose() * jac, basis.transpose() * c);
    st.multipliers = basis * st.multipliers;
    return st;
}

/// Minimum-norm correction -J^+ c.
inline Eigen::VectorXd feasibility_correction(const Eigen::MatrixXd& jac, const Eigen::VectorXd& c)
{
    return -jac.completeOrthogonalDecomposition().solve(c);
}

} // namespace detail

/// Minimizes p.value subject to p.constraints(x) = 0 starting from x0.
template <ConstrainedProblem P>
SqpResult sqp_minimize(const P& p, Eigen::VectorXd x0, const SqpOptions& opts = {})
{
    const Eigen::Index n = x0.size();
    SqpResult res;
    Eigen::VectorXd x = std::move(x0);
    double f = p.value(x);
    Eigen::VectorXd g = detail::safe_gradient(p, x, opts.fd_step, res.fd_gradients);
    Eigen::VectorXd c = p.constraints(x);
    Eigen::MatrixXd jac = p.jacobian(x);
    Eigen::MatrixXd b = Eigen::MatrixXd::Identity(n, n);
    double sigma = 0.0;

    const auto merit = [&](double fv, const Eigen::VectorXd& cv) { return fv + sigma * cv.lpNorm<1>(); };

    res.status = "iteration limit";
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        res.kkt_residual = detail::kkt_residual(g, jac, c);
        if (res.kkt_residual < opts.kkt_tol) {
            res.converged = true;
            res.status = "kkt";
            break;
        }

        QpStep qp;
        try {
            qp = solve_equality_qp(b, g, jac, c);
        } catch (const RankDeficient&) {
            ++res.reduced_qp_steps;
            qp = detail::reduced_qp(b, g, jac, c);
        }
        const Eigen::VectorXd& d = qp.step;
        if (d.lpNorm<Eigen::Infinity>() < opts.step_tol) {
            res.converged = c.lpNorm<Eigen::Infinity>() <= opts.feasibility_tol;
            res.status = res.converged ? "step" : "stalled infeasible";
            break;
        }

        sigma = std::max(sigma, qp.multipliers.lpNorm<Eigen::Infinity>() + opts.penalty_margin);
        const double phi0 = merit(f, c);
        const double slope = g.dot(d) - sigma * c.lpNorm<1>();

        // Full step, then second-order correction, then backtracking.
        Eigen::VectorXd x_new;
        double f_new = 0.0, phi_new = 0.0;
        Eigen::VectorXd c_new;
        bool accepted = false;
        const auto trial = [&](const Eigen::VectorXd& xt, double alpha) {
            const double ft = p.value(xt);
            const Eigen::VectorXd ct = p.constraints(xt);
            const double pt = merit(ft, ct);
            if (pt <= phi0 + opts.armijo * alpha * slope) {
                x_new = xt;
                f_new = ft;
                c_new = ct;
                phi_new = pt;
                return true;
            }
            return false;
        };
        accepted = trial(x + d, 1.0);
        if (!accepted) {
            const Eigen::VectorXd xt = x + d;
            const Eigen::VectorXd soc = detail::feasibility_correction(jac, p.constraints(xt));
            accepted = trial(xt + soc, 1.0);
        }
        for (double alpha = 0.5; !accepted && alpha > 1e-12; alpha *= 0.5)
            accepted = trial(x + alpha * d, alpha);
        if (!accepted) {
            res.status = "line search failed";
            break;
        }
        res.merit.push_back({phi0, phi_new});

        const Eigen::VectorXd g_new = detail::safe_gradient(p, x_new, opts.fd_step, res.fd_gradients);
        const Eigen::MatrixXd jac_new = p.jacobian(x_new);

        // Damped BFGS on the Lagrangian gradient g - J^T mu.
        const Eigen::VectorXd s = x_new - x;
        Eigen::VectorXd y = (g_new - jac_new.transpose() * qp.multipliers) - (g - jac.transpose() * qp.multipliers);
        const Eigen::VectorXd bs = b * s;
        const double sbs = s.dot(bs);
        if (sbs > 1e-300) {
            const double sy = s.dot(y);
            if (sy < 0.2 * sbs) {
                const double theta = 0.8 * sbs / (sbs - sy);
                y = theta * y + (1.0 - theta) * bs;
            }
            const double sy_damped = s.dot(y);
            if (sy_damped > 1e-300) {
                b += y * y.transpose() / sy_damped - bs * bs.transpose() / sbs;
                b = 0.5 * (b + b.transpose()).eval();
            }
        }

        x = x_new;
        f = f_new;
        c = c_new;
        g = g_new;
        jac = jac_new;
    }
    res.iterations = it;
    res.x = x;
    res.objective = f;
    res.multipliers = detail::ls_multipliers(g, jac);
    res.kkt_residual = detail::kkt_residual(g, jac, c);
    res.constraint_violation = c.size() ? c.lpNorm<Eigen::Infinity>() : 0.0;
    if (res.converged && res.constraint_violation > std::max(opts.kkt_tol, opts.feasibility_tol))
        res.converged = false;
    return res;
}

} // namespace qtd
