#pragma once
// Beam-splitter loss/noise channel. The probe enters one port and a thermal
// environment the other; the receiver keeps the reflected output mode.
//
// Amplitude convention (intensity reflectivity r, t = sqrt(1 - r)):
//   probe^dag -> sqrt(r) recv^dag + t lost^dag
//   env^dag   -> t recv^dag - sqrt(r) lost^dag
// Total photon number is conserved, so the unitary is block diagonal over
// sectors N = n_probe + n_env and every sector is treated exactly.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "fock.hpp"

namespace qtd {

struct ChannelConfig {
    double r = 0.0;       ///< intensity reflectivity of the target, [0, 1]
    double n_env = 0.0;   ///< thermal environment mean photon number
    int dim_probe = default_dim;
    int dim_env = 0;      ///< 0 selects dim_probe
    int max_total = -1;   ///< joint photon cutoff; -1 keeps every sector
    bool renormalize_env = false;

    int env_dim() const { return dim_env > 0 ? dim_env : dim_probe; }
    int full_cutoff() const { return dim_probe + env_dim() - 2; }
    int cutoff() const { return max_total < 0 ? full_cutoff() : std::min(max_total, full_cutoff()); }
    /// Dimension of the received (and lost) output mode.
    int recv_dim() const { return cutoff() + 1; }

    void validate() const
    {
        detail::require(std::isfinite(r) && r >= 0.0 && r <= 1.0, "ChannelConfig: r must lie in [0, 1], got " + detail::str(r));
        detail::require(std::isfinite(n_env) && n_env >= 0.0, "ChannelConfig: n_env must be >= 0");
        detail::require(dim_probe >= 1 && dim_env >= 0, "ChannelConfig: dimensions must be >= 1");
        detail::require(max_total == -1 || max_total >= 0, "ChannelConfig: max_total must be >= 0 or -1");
    }
};

/// Sector unitary on total photon number n_total:
///   U(a, n) = <recv = a, lost = N - a | U | probe = n, env = N - n>.
/// Built by expanding the transformed creation operators as polynomials in
/// (recv^dag, lost^dag).
inline Eigen::MatrixXd bs_block_unitary(int n_total, double r)
{
    detail::require(n_total >= 0, "bs_block_unitary: n_total must be >= 0");
    detail::require(r >= 0.0 && r <= 1.0, "bs_block_unitary: r must lie in [0, 1]");
    const int N = n_total;
    const double s = std::sqrt(r);
    const double t = std::sqrt(1.0 - r);
    // pow() with 0^0 = 1 is what the expansion needs at r in {0, 1}.
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(N + 1, N + 1);
    for (int n = 0; n <= N; ++n) {
        const int e = N - n;
        // coefficient of recv^a lost^(N-a) in (s R + t L)^n (t R - s L)^e
        Eigen::VectorXd poly = Eigen::VectorXd::Zero(N + 1);
        for (int p = 0; p <= n; ++p) {
            const double left = binomial(n, p) * std::pow(s, p) * std::pow(t, n - p);
            if (left == 0.0)
                continue;
            for (int q = 0; q <= e; ++q) {
                const double sign = ((e - q) % 2 == 0) ? 1.0 : -1.0;
                poly(p + q) += left * binomial(e, q) * std::pow(t, q) * std::pow(s, e - q) * sign;
            }
        }
        for (int a = 0; a <= N; ++a) {
            const double norm = std::exp(0.5 * (detail::log_factorial(a) + detail::log_factorial(N - a) -
                                                 detail::log_factorial(n) - detail::log_factorial(e)));
            u(a, n) = poly(a) * norm;
        }
    }
    return u;
}

/// Process-tensor element in the two-mode Fock basis, written as a double
/// sum over the ket and bra expansions. Input mode 1 is the probe, mode 2 the
/// environment; output mode 1 is the lost (transmitted) mode and output
/// mode 2 the received one. The transmission amplitude is sqrt(1 - r); this
/// is what makes the tensor trace preserving.
inline cplx process_tensor_element(int j1, int k1, int j2, int k2, int m1, int n1, int m2, int n2, double r)
{
    detail::require(j1 >= 0 && k1 >= 0 && j2 >= 0 && k2 >= 0 && m1 >= 0 && n1 >= 0 && m2 >= 0 && n2 >= 0,
                    "process_tensor_element: indices must be nonnegative");
    if (m1 + m2 != j1 + j2 || n1 + n2 != k1 + k2)
        return 0.0;
    const double s = std::sqrt(r);
    const double t = std::sqrt(1.0 - r);
    const double pref = std::exp(0.5 * (detail::log_factorial(m1) + detail::log_factorial(m2) + detail::log_factorial(n1) +
                                        detail::log_factorial(n2) - detail::log_factorial(j1) - detail::log_factorial(j2) -
                                        detail::log_factorial(k1) - detail::log_factorial(k2)));
    double sum = 0.0;
    for (int p = 0; p <= j1; ++p) {
        const double bp = binomial(j1, p) * binomial(j2, m1 - p);
        if (bp == 0.0)
            continue;
        for (int q = 0; q <= k1; ++q) {
            const double bq = binomial(k1, q) * binomial(k2, n1 - q);
            if (bq == 0.0)
                continue;
            const int t_exp = 2 * p + 2 * q + j2 + k2 - m1 - n1;
            const int s_exp = j1 + k1 + m1 + n1 - 2 * p - 2 * q;
            const double sign = ((j1 + k1 - p - q) % 2 == 0) ? 1.0 : -1.0;
            sum += bp * bq * std::pow(t, t_exp) * sign * std::pow(s, s_exp);
        }
    }
    return pref * sum;
}

/// Density operator on two truncated modes; element (j1, k1, j2, k2) is
/// <j1 j2| rho |k1 k2>.
class TwoModeDensity {
public:
    TwoModeDensity(int dim1, int dim2)
        : d1_(dim1), d2_(dim2), m_(Eigen::MatrixXcd::Zero(Eigen::Index(dim1) * dim2, Eigen::Index(dim1) * dim2))
    {
        detail::require(dim1 >= 1 && dim2 >= 1, "TwoModeDensity: dimensions must be >= 1");
    }

    static TwoModeDensity product(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b)
    {
        TwoModeDensity out(static_cast<int>(a.rows()), static_cast<int>(b.rows()));
        const Eigen::Index d2 = b.rows();
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j)
                out.m_.block(i * d2, j * d2, d2, d2) = a(i, j) * b;
        return out;
    }

    int dim1() const { return d1_; }
    int dim2() const { return d2_; }
    const Eigen::MatrixXcd& matrix() const { return m_; }

    cplx& operator()(int j1, int k1, int j2, int k2) { return m_(j1 * d2_ + j2, k1 * d2_ + k2); }
    cplx operator()(int j1, int k1, int j2, int k2) const { return m_(j1 * d2_ + j2, k1 * d2_ + k2); }

    double trace() const { return m_.diagonal().real().sum(); }

    /// Reduced state of mode 2.
    Eigen::MatrixXcd trace_out_first() const
    {
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d2_, d2_);
        for (int j1 = 0; j1 < d1_; ++j1)
            out += m_.block(Eigen::Index(j1) * d2_, Eigen::Index(j1) * d2_, d2_, d2_);
        return out;
    }

    /// Reduced state of mode 1.
    Eigen::MatrixXcd trace_out_second() const
    {
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d1_, d1_);
        for (int j1 = 0; j1 < d1_; ++j1)
            for (int k1 = 0; k1 < d1_; ++k1)
                out(j1, k1) = m_.block(Eigen::Index(j1) * d2_, Eigen::Index(k1) * d2_, d2_, d2_).trace();
        return out;
    }

private:
    int d1_, d2_;
    Eigen::MatrixXcd m_;
};

namespace detail {
inline int two_mode_out_dim(const TwoModeDensity& in) { return in.dim1() + in.dim2() - 1; }
} // namespace detail

/// Full two-mode output by sector-wise conjugation with bs_block_unitary.
/// Input modes (probe, env); output modes (lost, recv).
inline TwoModeDensity apply_bs_two_mode(const TwoModeDensity& in, double r)
{
    detail::require(r >= 0.0 && r <= 1.0, "apply_bs_two_mode: r must lie in [0, 1]");
    const int dout = detail::two_mode_out_dim(in);
    std::vector<Eigen::MatrixXd> u(dout);
    for (int n = 0; n < dout; ++n)
        u[n] = bs_block_unitary(n, r);
    TwoModeDensity out(dout, dout);
    for (int m1 = 0; m1 < in.dim1(); ++m1)
        for (int m2 = 0; m2 < in.dim2(); ++m2)
            for (int n1 = 0; n1 < in.dim1(); ++n1)
                for (int n2 = 0; n2 < in.dim2(); ++n2) {
                    const cplx v = in(m1, n1, m2, n2);
                    if (v == 0.0)
                        continue;
                    const int N = m1 + m2, M = n1 + n2;
                    for (int a = 0; a <= N; ++a)
                        for (int b = 0; b <= M; ++b)
                            out(N - a, M - b, a, b) += u[N](a, m1) * v * u[M](b, n1);
                }
    return out;
}

/// Same map as apply_bs_two_mode, contracted element by element with
/// process_tensor_element. Independent cross-check of the sector route.
inline TwoModeDensity apply_bs_tensor(const TwoModeDensity& in, double r)
{
    detail::require(r >= 0.0 && r <= 1.0, "apply_bs_tensor: r must lie in [0, 1]");
    const int dout = detail::two_mode_out_dim(in);
    TwoModeDensity out(dout, dout);
    for (int m1 = 0; m1 < in.dim1(); ++m1)
        for (int m2 = 0; m2 < in.dim2(); ++m2)
            for (int n1 = 0; n1 < in.dim1(); ++n1)
                for (int n2 = 0; n2 < in.dim2(); ++n2) {
                    const cplx v = in(m1, n1, m2, n2);
                    if (v == 0.0)
                        continue;
                    const int N = m1 + m2, M = n1 + n2;
                    for (int j1 = 0; j1 <= N; ++j1)
                        for (int k1 = 0; k1 <= M; ++k1)
                            out(j1, k1, N - j1, M - k1) +=
                                process_tensor_element(j1, k1, N - j1, M - k1, m1, n1, m2, n2, r) * v;
                }
    return out;
}

/// Channel probe -> received mode in operator-sum form. Kraus operators
/// K_{k,b}(a, n) = sqrt(p_k) U_{n+k}(a, n) with lost-photon count b = n+k-a,
/// one family per environment Fock level k. The sector unitaries are built
/// once per instance; the object is immutable afterwards.
class BeamSplitterChannel {
public:
    explicit BeamSplitterChannel(const ChannelConfig& cfg) : cfg_(cfg)
    {
        cfg_.validate();
        const int dp = cfg_.dim_probe;
        const int de = cfg_.env_dim();
        const int D = cfg_.recv_dim();
        env_p_ = thermal_populations(cfg_.n_env, de);
        const double mass = env_p_.sum();
        if (1.0 - mass > tail_warn_mass)
            warn("thermal environment n_env=" + detail::str(cfg_.n_env) + " retains mass " + detail::str(mass) +
                 " at dim " + detail::str(de));
        if (cfg_.renormalize_env)
            env_p_ /= mass;

        std::vector<Eigen::MatrixXd> sector(D);
        for (int n = 0; n < D; ++n)
            sector[n] = bs_block_unitary(n, cfg_.r);

        std::vector<Eigen::MatrixXd> recv_ops, lost_ops;
        for (int k = 0; k < de; ++k) {
            if (env_p_(k) == 0.0)
                continue;
            const double w = std::sqrt(env_p_(k));
            for (int b = 0; b < D; ++b) {
                Eigen::MatrixXd kr = Eigen::MatrixXd::Zero(D, dp);
                Eigen::MatrixXd kl = Eigen::MatrixXd::Zero(D, dp);
                for (int n = 0; n < dp; ++n) {
                    const int N = n + k;
                    if (N > cfg_.cutoff())
                        continue;
                    // received: b photons lost, a = N - b received
                    if (N - b >= 0)
                        kr(N - b, n) = w * sector[N](N - b, n);
                    // lost: b photons received, N - b lost
                    if (N - b >= 0)
                        kl(N - b, n) = w * sector[N](b, n);
                }
                if (kr.cwiseAbs().maxCoeff() > 0.0)
                    recv_ops.push_back(std::move(kr));
                if (kl.cwiseAbs().maxCoeff() > 0.0)
                    lost_ops.push_back(std::move(kl));
            }
        }
        recv_stack_ = stack(recv_ops, D, dp);
        lost_stack_ = stack(lost_ops, D, dp);
        n_recv_ = static_cast<int>(recv_ops.size());
        n_lost_ = static_cast<int>(lost_ops.size());
    }

    const ChannelConfig& config() const { return cfg_; }
    int probe_dim() const { return cfg_.dim_probe; }
    int recv_dim() const { return cfg_.recv_dim(); }
    const Eigen::VectorXd& environment_populations() const { return env_p_; }

    /// Target-absent hypothesis: the environment state on the received mode.
    Eigen::MatrixXcd null_state() const
    {
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(recv_dim(), recv_dim());
        const int k = std::min<int>(recv_dim(), static_cast<int>(env_p_.size()));
        out.diagonal().head(k) = env_p_.head(k).cast<cplx>();
        return out;
    }

    /// Received state for a pure probe.
    Eigen::MatrixXcd received(const Eigen::VectorXcd& psi) const
    {
        check_probe(psi.size());
        const Eigen::VectorXcd v = recv_stack_ * psi;
        const Eigen::Map<const Eigen::MatrixXcd> w(v.data(), recv_dim(), n_recv_);
        return w * w.adjoint();
    }

    /// Received state for a general probe operator (linear in rho).
    Eigen::MatrixXcd received(const Eigen::MatrixXcd& rho) const { return apply(recv_stack_, n_recv_, rho); }

    /// State of the transmitted (undetected) mode.
    Eigen::MatrixXcd lost(const Eigen::MatrixXcd& rho) const { return apply(lost_stack_, n_lost_, rho); }

    /// Phi^dag(G) psi, where Phi^dag is the Hilbert-Schmidt adjoint of the
    /// probe -> received map. G lives on the received mode.
    Eigen::VectorXcd adjoint_apply(const Eigen::MatrixXcd& g, const Eigen::VectorXcd& psi) const
    {
        check_probe(psi.size());
        const Eigen::VectorXcd v = recv_stack_ * psi;
        const Eigen::Map<const Eigen::MatrixXcd> w(v.data(), recv_dim(), n_recv_);
        const Eigen::MatrixXcd gw = g * w;
        const Eigen::Map<const Eigen::VectorXcd> flat(gw.data(), gw.size());
        return recv_stack_.adjoint() * flat;
    }

    /// Probe-and-environment mass in sectors above the joint cutoff.
    double dropped_mass(const Eigen::VectorXd& probe_populations) const
    {
        double dropped = 0.0;
        for (Eigen::Index n = 0; n < probe_populations.size(); ++n)
            for (Eigen::Index k = 0; k < env_p_.size(); ++k)
                if (n + k > cfg_.cutoff())
                    dropped += probe_populations(n) * env_p_(k);
        return dropped;
    }

    double environment_mass() const { return env_p_.sum(); }

private:
    void check_probe(Eigen::Index n) const
    {
        detail::require(n == cfg_.dim_probe, "BeamSplitterChannel: probe dim " + detail::str(n) + " != configured " +
                                                 detail::str(cfg_.dim_probe));
    }

    static Eigen::MatrixXcd stack(const std::vector<Eigen::MatrixXd>& ops, int D, int dp)
    {
        Eigen::MatrixXcd s(Eigen::Index(ops.size()) * D, dp);
        for (std::size_t j = 0; j < ops.size(); ++j)
            s.middleRows(Eigen::Index(j) * D, D) = ops[j].cast<cplx>();
        return s;
    }

    Eigen::MatrixXcd apply(const Eigen::MatrixXcd& st, int count, const Eigen::MatrixXcd& rho) const
    {
        detail::require(rho.rows() == cfg_.dim_probe && rho.cols() == cfg_.dim_probe,
                        "BeamSplitterChannel: probe operator has wrong dimension");
        const int D = recv_dim();
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(D, D);
        for (int j = 0; j < count; ++j) {
            const auto k = st.middleRows(Eigen::Index(j) * D, D);
            out.noalias() += k * rho * k.adjoint();
        }
        return out;
    }

    ChannelConfig cfg_;
    Eigen::VectorXd env_p_;
    Eigen::MatrixXcd recv_stack_;
    Eigen::MatrixXcd lost_stack_;
    int n_recv_ = 0;
    int n_lost_ = 0;
};

struct ChannelOutput {
    DensityMatrix received;
    DensityMatrix lost;
    double retained_mass; ///< trace of the input kept inside the cutoff
    double dropped_mass;  ///< input mass in sectors above the cutoff
};

inline constexpr double max_dropped_mass = 1e-6;

/// Mixes the probe with the thermal environment and traces out either
/// output port. Signals TruncationError when more than 1e-6 of the input
/// lies in sectors above the joint cutoff.
inline ChannelOutput apply_bs_channel(const DensityMatrix& rho_probe, const ChannelConfig& config)
{
    const BeamSplitterChannel ch(config);
    detail::require(rho_probe.dim() == config.dim_probe, "apply_bs_channel: probe dim does not match config");
    const double dropped = ch.dropped_mass(rho_probe.populations());
    if (dropped > max_dropped_mass)
        throw TruncationError("apply_bs_channel: " + detail::str(dropped) + " of the input lies above the joint cutoff " +
                              detail::str(config.cutoff()));
    const double retained = rho_probe.trace() * ch.environment_mass() - dropped;
    return {DensityMatrix(ch.received(rho_probe.matrix()), Check::hermitian),
            DensityMatrix(ch.lost(rho_probe.matrix()), Check::hermitian), retained, dropped};
}

struct Hypotheses {
    DensityMatrix rho0; ///< target absent: environment only
    DensityMatrix rho1; ///< target present: received probe plus noise
};

inline Hypotheses hypothesis_states(const BeamSplitterChannel& ch, const FockVector& probe)
{
    return {DensityMatrix(ch.null_state(), Check::hermitian),
            DensityMatrix(ch.received(probe.coeffs()), Check::hermitian)};
}

/// Both hypotheses live on the received-mode dimension config.recv_dim().
inline Hypotheses hypothesis_states(const FockVector& probe, const ChannelConfig& config)
{
    const BeamSplitterChannel ch(config);
    const double dropped = ch.dropped_mass(probe.populations());
    if (dropped > max_dropped_mass)
        throw TruncationError("hypothesis_states: " + detail::str(dropped) + " of the input lies above the joint cutoff");
    return hypothesis_states(ch, probe);
}

} // namespace qtd
