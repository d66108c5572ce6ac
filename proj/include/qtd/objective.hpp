#pragma once
// Objectives over probe amplitudes: full-density-matrix Helstrom error,
// vacuum probability after loss (photon statistics only), and the phase
// overlap between the received state and the flat environment phase.
// Every objective is evaluated on the normalized probe x / |x|.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "channel.hpp"
#include "discrimination.hpp"
#include "phase.hpp"

namespace qtd {

enum class Objective {
    helstrom_dm,   ///< Helstrom error of the full received density matrix
    vacuum_p0,     ///< vacuum probability after binomial loss
    phase_overlap, ///< Bhattacharyya overlap of received phase with uniform
};

enum class Parameterization {
    real,    ///< x = (c_0 .. c_{d-1})
    complex, ///< x = (Re c_0 .. Re c_{d-1}, Im c_0 .. Im c_{d-1})
};

inline std::string to_string(Objective o)
{
    switch (o) {
    case Objective::helstrom_dm: return "dm";
    case Objective::vacuum_p0: return "ps";
    case Objective::phase_overlap: return "po";
    }
    return "?";
}

inline Objective parse_objective(std::string_view s)
{
    if (s == "dm" || s == "helstrom" || s == "HELSTROM_DM")
        return Objective::helstrom_dm;
    if (s == "ps" || s == "vacuum" || s == "VACUUM_P0")
        return Objective::vacuum_p0;
    if (s == "po" || s == "phase" || s == "PHASE_OVERLAP")
        return Objective::phase_overlap;
    throw InvalidArgument("unknown objective '" + std::string(s) + "' (expected dm, ps or po)");
}

class ProbeObjective {
public:
    ProbeObjective(Objective kind, const ChannelConfig& config, double p0 = default_prior,
                   Parameterization param = Parameterization::real, int phase_grid_size = default_phase_grid)
        : kind_(kind), param_(param), p0_(p0), channel_(config), rho0_(channel_.null_state()),
          phi_(phase_grid(std::max(phase_grid_size, min_phase_grid)))
    {
        detail::check_prior(p0);
        const int d = config.dim_probe;
        loss_weights_.resize(d);
        for (int n = 0; n < d; ++n)
            loss_weights_(n) = std::pow(1.0 - config.r, n);
    }

    Objective kind() const { return kind_; }
    Parameterization parameterization() const { return param_; }
    const BeamSplitterChannel& channel() const { return channel_; }
    double prior() const { return p0_; }
    int dim() const { return channel_.probe_dim(); }
    int num_params() const { return param_ == Parameterization::real ? dim() : 2 * dim(); }

    Eigen::VectorXcd amplitudes(const Eigen::VectorXd& x) const
    {
        detail::require(x.size() == num_params(), "ProbeObjective: parameter vector has wrong size");
        if (param_ == Parameterization::real)
            return x.cast<cplx>();
        Eigen::VectorXcd c(dim());
        for (int n = 0; n < dim(); ++n)
            c(n) = cplx(x(n), x(n + dim()));
        return c;
    }

    Eigen::VectorXd parameters(const FockVector& psi) const
    {
        detail::require(psi.dim() == dim(), "ProbeObjective: state has wrong dimension");
        if (param_ == Parameterization::real)
            return psi.real_coeffs();
        Eigen::VectorXd x(2 * dim());
        x << psi.coeffs().real(), psi.coeffs().imag();
        return x;
    }

    double value(const Eigen::VectorXd& x) const
    {
        const double norm = x.norm();
        detail::require(norm > 0.0, "ProbeObjective: zero parameter vector");
        const Eigen::VectorXcd psi = amplitudes(x) / norm;
        switch (kind_) {
        case Objective::helstrom_dm:
            return helstrom_error(rho0_, channel_.received(psi), p0_);
        case Objective::vacuum_p0:
            return loss_weights_.dot(psi.cwiseAbs2());
        case Objective::phase_overlap:
            return phase_overlap_value(channel_.received(psi));
        }
        return 0.0;
    }

    /// Analytic gradient; throws DegenerateSpectrum where the Helstrom
    /// objective is not reliably differentiable.
    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const
    {
        const double norm = x.norm();
        detail::require(norm > 0.0, "ProbeObjective: zero parameter vector");
        const Eigen::VectorXd u = x / norm;
        const Eigen::VectorXcd psi = amplitudes(u);
        Eigen::VectorXcd dc; // (d f/d Re c) + i (d f/d Im c) at the unit vector
        switch (kind_) {
        case Objective::helstrom_dm: {
            const auto sens = trace_norm_sensitivity(p0_ * rho0_ - (1.0 - p0_) * channel_.received(psi));
            if (sens.degenerate)
                throw DegenerateSpectrum("Helstrom gradient: eigenvalue within 1e-9 of a sign change");
            dc = detail::probe_sensitivity(channel_, 0.5 * (1.0 - p0_) * sens.sign, psi);
            break;
        }
        case Objective::vacuum_p0:
            dc = 2.0 * loss_weights_.cast<cplx>().cwiseProduct(psi);
            break;
        case Objective::phase_overlap:
            dc = detail::probe_sensitivity(channel_, phase_overlap_sensitivity(channel_.received(psi)), psi);
            break;
        }
        return detail::scale_invariant(split(dc), u, norm);
    }

private:
    Eigen::VectorXd split(const Eigen::VectorXcd& dc) const
    {
        if (param_ == Parameterization::real)
            return dc.real();
        Eigen::VectorXd g(2 * dim());
        g << dc.real(), dc.imag();
        return g;
    }

    double step() const { return 2.0 * std::numbers::pi / static_cast<double>(phi_.size()); }

    // f = T^{-1/2} sum_k sqrt(P_k / 2pi) dphi, with P the unnormalized phase
    // density and T = Tr rho its integral.
    double phase_overlap_value(const Eigen::MatrixXcd& rho) const
    {
        const Eigen::VectorXd p = detail::phase_density_hermitian(rho, phi_);
        const double total = rho.diagonal().real().sum();
        return p.cwiseMax(0.0).cwiseSqrt().sum() * step() / std::sqrt(2.0 * std::numbers::pi * total);
    }

    // dF/drho: T^{-1/2} sum_k w_k (1/2pi) v_k v_k^dag - (1/2) T^{-3/2} S I,
    // with v_k(m) = e^{i m phi_k} and w_k = dphi / (2 sqrt(2pi P_k)).
    Eigen::MatrixXcd phase_overlap_sensitivity(const Eigen::MatrixXcd& rho) const
    {
        const Eigen::Index D = rho.rows();
        const Eigen::VectorXd p = detail::phase_density_hermitian(rho, phi_);
        const double total = rho.diagonal().real().sum();
        const double two_pi = 2.0 * std::numbers::pi;
        double s = 0.0;
        // fourier(j) = sum_k w_k e^{i j phi_k} / 2pi, j = 0..D-1
        Eigen::VectorXcd fourier = Eigen::VectorXcd::Zero(D);
        for (Eigen::Index k = 0; k < phi_.size(); ++k) {
            if (!(p(k) > 1e-300))
                continue;
            const double sq = std::sqrt(p(k));
            s += sq;
            const double w = step() / (2.0 * std::sqrt(two_pi) * sq) / two_pi;
            const cplx base = std::polar(1.0, phi_(k));
            cplx e = 1.0;
            for (Eigen::Index j = 0; j < D; ++j) {
                fourier(j) += w * e;
                e *= base;
            }
        }
        s *= step() / std::sqrt(two_pi);
        Eigen::MatrixXcd g(D, D);
        for (Eigen::Index n = 0; n < D; ++n)
            for (Eigen::Index m = 0; m < D; ++m)
                g(n, m) = n >= m ? fourier(n - m) : std::conj(fourier(m - n));
        g /= std::sqrt(total);
        g.diagonal().array() -= 0.5 * s / std::sqrt(total) / total;
        return g;
    }

    Objective kind_;
    Parameterization param_;
    double p0_;
    BeamSplitterChannel channel_;
    Eigen::MatrixXcd rho0_;
    Eigen::VectorXd phi_;
    Eigen::VectorXd loss_weights_;
};

} // namespace qtd
