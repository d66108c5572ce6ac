#pragma once
// Minimum-error discrimination of the two detection hypotheses and the
// derivative of that error with respect to the probe amplitudes.

#include <Eigen/Dense>

#include <cmath>
#include <limits>

#include "channel.hpp"
#include "fock.hpp"

namespace qtd {

inline constexpr double default_prior = 0.5;
/// Eigenvalues closer than this to zero (but not numerically zero) make the
/// trace-norm derivative unreliable.
inline constexpr double degeneracy_gap = 1e-9;

struct HypothesisPair {
    DensityMatrix rho0;
    DensityMatrix rho1;
    double p0 = default_prior;

    double p1() const { return 1.0 - p0; }
};

namespace detail {

inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> hermitian_eigen(const Eigen::MatrixXcd& m,
                                                                       int options = Eigen::ComputeEigenvectors)
{
    detail::require(m.rows() == m.cols(), "trace_norm: need a square matrix");
    const double herm = (m - m.adjoint()).cwiseAbs().maxCoeff();
    detail::require(herm <= hermitian_tol, "trace_norm: matrix not Hermitian (residual " + str(herm) + ")");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (m + m.adjoint()), options);
    if (es.info() != Eigen::Success)
        throw NumericalError("trace_norm: Hermitian eigensolver did not converge");
    return es;
}

inline void check_prior(double p0)
{
    detail::require(std::isfinite(p0) && p0 >= 0.0 && p0 <= 1.0, "prior p0 must lie in [0, 1]");
}

} // namespace detail

/// Sum of |eigenvalues| of a Hermitian matrix.
inline double trace_norm(const Eigen::MatrixXcd& m)
{
    return detail::hermitian_eigen(m, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().sum();
}

/// Trace norm together with its first-order sensitivity
/// d||M||_1 = Tr(S dM), S = sum_i sign(lambda_i) v_i v_i^dag.
struct TraceNormSensitivity {
    double norm = 0.0;
    Eigen::MatrixXcd sign;
    bool degenerate = false; ///< an eigenvalue sits inside the unreliable band near zero
};

inline TraceNormSensitivity trace_norm_sensitivity(const Eigen::MatrixXcd& m)
{
    const auto es = detail::hermitian_eigen(m);
    const Eigen::VectorXd& w = es.eigenvalues();
    const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
    const double zero_tol = 1e-12 * scale;
    Eigen::VectorXd s(w.size());
    bool degenerate = false;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double a = std::abs(w(i));
        s(i) = a <= zero_tol ? 0.0 : (w(i) > 0.0 ? 1.0 : -1.0);
        degenerate = degenerate || (a > zero_tol && a < degeneracy_gap);
    }
    return {w.cwiseAbs().sum(), es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint(), degenerate};
}

inline double helstrom_error(const Eigen::MatrixXcd& rho0, const Eigen::MatrixXcd& rho1, double p0)
{
    detail::check_prior(p0);
    detail::require(rho0.rows() == rho1.rows(), "helstrom_error: hypothesis dimensions differ");
    return 0.5 * (1.0 - trace_norm(p0 * rho0 - (1.0 - p0) * rho1));
}

/// Minimum error probability (1 - ||p0 rho0 - p1 rho1||_1) / 2.
inline double helstrom_error(const HypothesisPair& h) { return helstrom_error(h.rho0.matrix(), h.rho1.matrix(), h.p0); }

struct QuantumAdvantage {
    double db = 0.0;
    bool infinite = false; ///< optimal error is exactly zero
};

/// 10 log10(p_coh / p_opt)
inline QuantumAdvantage quantum_advantage(double p_coh, double p_opt)
{
    detail::require(std::isfinite(p_coh) && p_coh > 0.0 && p_coh <= 0.5 + 1e-12,
                    "quantum_advantage: p_coh must lie in (0, 1/2]");
    detail::require(std::isfinite(p_opt) && p_opt >= 0.0 && p_opt <= 0.5 + 1e-12,
                    "quantum_advantage: p_opt must lie in [0, 1/2]");
    if (p_opt == 0.0)
        return {std::numeric_limits<double>::infinity(), true};
    return {10.0 * std::log10(p_coh / p_opt), false};
}

namespace detail {

/// d f / d(Re c, Im c) for f = F(Phi(psi psi^dag)) given G = dF/drho on the
/// received mode: d f/d Re c_j = 2 Re[(Phi^dag(G) psi)_j], d f/d Im c_j = 2 Im[...].
inline Eigen::VectorXcd probe_sensitivity(const BeamSplitterChannel& ch, const Eigen::MatrixXcd& g,
                                          const Eigen::VectorXcd& psi)
{
    return 2.0 * ch.adjoint_apply(g, psi);
}

/// Gradient of x -> f(x / |x|) from the gradient of f at the unit vector u.
inline Eigen::VectorXd scale_invariant(const Eigen::VectorXd& grad_at_unit, const Eigen::VectorXd& u, double norm)
{
    return (grad_at_unit - u * u.dot(grad_at_unit)) / norm;
}

} // namespace detail

/// Gradient of c -> helstrom_error(hypothesis_states(c / |c|)) for real
/// amplitudes, by first-order eigenvalue perturbation of the trace norm.
/// Throws DegenerateSpectrum near an eigenvalue sign crossing; callers fall
/// back to finite differences there.
inline Eigen::VectorXd error_gradient(const BeamSplitterChannel& ch, const Eigen::VectorXd& coeffs, double p0)
{
    detail::check_prior(p0);
    const double norm = coeffs.norm();
    detail::require(norm > 0.0, "error_gradient: zero coefficient vector");
    const Eigen::VectorXd u = coeffs / norm;
    const Eigen::VectorXcd psi = u.cast<cplx>();
    const Eigen::MatrixXcd m = p0 * ch.null_state() - (1.0 - p0) * ch.received(psi);
    const auto sens = trace_norm_sensitivity(m);
    if (sens.degenerate)
        throw DegenerateSpectrum("error_gradient: eigenvalue within 1e-9 of a sign change");
    // f = (1 - ||M||)/2, dM = -p1 d rho1  =>  G = (p1 / 2) S
    const Eigen::MatrixXcd g = 0.5 * (1.0 - p0) * sens.sign;
    const Eigen::VectorXd grad = detail::probe_sensitivity(ch, g, psi).real();
    return detail::scale_invariant(grad, u, norm);
}

inline Eigen::VectorXd error_gradient(const Eigen::VectorXd& coeffs, const ChannelConfig& config, double p0 = default_prior)
{
    return error_gradient(BeamSplitterChannel(config), coeffs, p0);
}

} // namespace qtd
