#pragma once
// Phase distribution P(phi) = (1/2pi) sum_{n,m} rho_{n,m} e^{i(m-n)phi} on a
// uniform periodic grid, plus overlap and width measures on it.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "fock.hpp"

namespace qtd {

inline constexpr int default_phase_grid = 4096;
inline constexpr int min_phase_grid = 64;

struct PhaseDistribution {
    Eigen::VectorXd phi;  ///< uniform grid on [-pi, pi)
    Eigen::VectorXd prob; ///< density per radian

    int size() const { return static_cast<int>(phi.size()); }
    double step() const { return 2.0 * std::numbers::pi / static_cast<double>(phi.size()); }
};

inline Eigen::VectorXd phase_grid(int grid_size)
{
    detail::require(grid_size >= 1, "phase_grid: grid_size must be >= 1");
    Eigen::VectorXd phi(grid_size);
    for (int k = 0; k < grid_size; ++k)
        phi(k) = -std::numbers::pi + 2.0 * std::numbers::pi * k / grid_size;
    return phi;
}

/// Periodic trapezoid rule over [-pi, pi).
inline double phase_integral(const PhaseDistribution& p) { return p.prob.sum() * p.step(); }

inline PhaseDistribution uniform_phase_distribution(int grid_size = default_phase_grid)
{
    detail::require(grid_size >= min_phase_grid, "uniform_phase_distribution: grid_size must be >= 64");
    return {phase_grid(grid_size), Eigen::VectorXd::Constant(grid_size, 0.5 / std::numbers::pi)};
}

namespace detail {

/// Unnormalized P(phi_k) for a Hermitian matrix, real part only. Uses
/// a_k = sum_n rho_{n,n+k}: P = (1/2pi)[a_0 + 2 sum_{k>=1} Re(a_k e^{ik phi})].
inline Eigen::VectorXd phase_density_hermitian(const Eigen::MatrixXcd& rho, const Eigen::VectorXd& phi)
{
    const Eigen::Index d = rho.rows();
    Eigen::VectorXcd a = Eigen::VectorXcd::Zero(d);
    for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index n = 0; n + k < d; ++n)
            a(k) += rho(n, n + k);
    Eigen::VectorXd out(phi.size());
    for (Eigen::Index g = 0; g < phi.size(); ++g) {
        const cplx step = std::polar(1.0, phi(g));
        cplx e = step;
        double s = a(0).real();
        for (Eigen::Index k = 1; k < d; ++k) {
            s += 2.0 * (a(k) * e).real();
            e *= step;
        }
        out(g) = s * 0.5 / std::numbers::pi;
    }
    return out;
}

/// Largest |Im P(phi_k)| of the full double sum, without assuming Hermiticity.
inline double phase_imag_residue(const Eigen::MatrixXcd& rho, const Eigen::VectorXd& phi)
{
    const Eigen::Index d = rho.rows();
    Eigen::VectorXcd upper = Eigen::VectorXcd::Zero(d), lower = Eigen::VectorXcd::Zero(d);
    for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index n = 0; n + k < d; ++n) {
            upper(k) += rho(n, n + k);
            lower(k) += rho(n + k, n);
        }
    double worst = 0.0;
    for (Eigen::Index g = 0; g < phi.size(); ++g) {
        cplx s = upper(0);
        for (Eigen::Index k = 1; k < d; ++k)
            s += upper(k) * std::polar(1.0, k * phi(g)) + lower(k) * std::polar(1.0, -k * phi(g));
        worst = std::max(worst, std::abs(s.imag()) * 0.5 / std::numbers::pi);
    }
    return worst;
}

} // namespace detail

/// Phase distribution of an arbitrary square matrix; rejects inputs whose
/// distribution has an imaginary part above 1e-8 (non-Hermitian).
inline PhaseDistribution phase_distribution(const Eigen::MatrixXcd& rho, int grid_size = default_phase_grid)
{
    detail::require(rho.rows() >= 1 && rho.rows() == rho.cols(), "phase_distribution: need a square matrix");
    detail::require(grid_size >= min_phase_grid, "phase_distribution: grid_size must be >= 64");
    PhaseDistribution out{phase_grid(grid_size), {}};
    const double residue = detail::phase_imag_residue(rho, out.phi);
    if (residue > 1e-8)
        throw NumericalError("phase_distribution: imaginary residue " + detail::str(residue) + " (non-Hermitian input)");
    if (residue > 1e-10)
        warn("phase_distribution: discarding imaginary residue " + detail::str(residue));
    out.prob = detail::phase_density_hermitian(0.5 * (rho + rho.adjoint()), out.phi);
    const double total = phase_integral(out);
    if (!(total > 0.0))
        throw NumericalError("phase_distribution: zero-trace input");
    out.prob /= total;
    return out;
}

inline PhaseDistribution phase_distribution(const DensityMatrix& rho, int grid_size = default_phase_grid)
{
    return phase_distribution(rho.matrix(), grid_size);
}

/// Bhattacharyya overlap: trapezoid rule for the integral of sqrt(P_a P_b).
inline double phase_overlap(const PhaseDistribution& a, const PhaseDistribution& b)
{
    detail::require(a.size() == b.size() && a.size() > 0, "phase_overlap: mismatched phase grids");
    detail::require((a.phi - b.phi).cwiseAbs().maxCoeff() <= 1e-12, "phase_overlap: mismatched phase grids");
    const double s = a.prob.cwiseMax(0.0).cwiseSqrt().dot(b.prob.cwiseMax(0.0).cwiseSqrt()) * a.step();
    return std::clamp(s, 0.0, 1.0);
}

/// Full width at half maximum around the global maximum, walking the
/// periodic grid in both directions and interpolating linearly at the
/// crossings. Flat distributions (no sample below half maximum) give 2pi.
inline double phase_fwhm(const PhaseDistribution& p)
{
    const int g = p.size();
    if (g == 0)
        return 2.0 * std::numbers::pi;
    Eigen::Index imax = 0;
    const double peak = p.prob.maxCoeff(&imax);
    const double half = 0.5 * peak;
    if (p.prob.minCoeff() >= half)
        return 2.0 * std::numbers::pi;

    const auto at = [&](long k) { return p.prob(((k % g) + g) % g); };
    const auto walk = [&](int dir) {
        for (int s = 1; s < g; ++s) {
            const double cur = at(imax + dir * s);
            if (cur < half) {
                const double prev = at(imax + dir * (s - 1));
                return (s - 1 + (prev - half) / (prev - cur)) * p.step();
            }
        }
        return std::numbers::pi;
    };
    return std::min(walk(+1) + walk(-1), 2.0 * std::numbers::pi);
}

} // namespace qtd
