#pragma once
// Truncated single-mode Fock space: pure and mixed states, standard state
// families, and photon-number / coherence measures.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>

#include "errors.hpp"

namespace qtd {

using cplx = std::complex<double>;

inline constexpr int default_dim = 8;
inline constexpr double tail_warn_mass = 1e-6;
inline constexpr double tail_reject_mass = 1e-3;
// Looser limit for coherent reference probes inside the optimizer: n_mean = 2
// at dim 8 loses ~1.1e-3, and that configuration must stay usable.
inline constexpr double reference_tail_mass = 1e-2;
inline constexpr double hermitian_tol = 1e-10;
inline constexpr double psd_tol = 1e-10;

namespace detail {

inline void require(bool cond, const std::string& msg)
{
    if (!cond)
        throw InvalidArgument(msg);
}

inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

template <class T>
std::string str(const T& v)
{
    std::ostringstream os;
    os << v;
    return os.str();
}

} // namespace detail

/// Binomial coefficient C(n, k). Exact integer arithmetic up to n = 20,
/// log-gamma above that.
inline double binomial(int n, int k)
{
    if (n < 0 || k < 0 || k > n)
        return 0.0;
    if (n <= 20) {
        std::uint64_t c = 1;
        for (int i = 0; i < std::min(k, n - k); ++i)
            c = c * static_cast<std::uint64_t>(n - i) / static_cast<std::uint64_t>(i + 1);
        return static_cast<double>(c);
    }
    return std::exp(detail::log_factorial(n) - detail::log_factorial(k) - detail::log_factorial(n - k));
}

/// Pure state sum_n c_n |n>, n < dim, always unit norm.
class FockVector {
public:
    /// Normalizes the given amplitudes; rejects empty, zero or non-finite input.
    explicit FockVector(Eigen::VectorXcd coeffs) : c_(std::move(coeffs))
    {
        detail::require(c_.size() >= 1, "FockVector: dim must be >= 1");
        detail::require(c_.allFinite(), "FockVector: non-finite amplitude");
        const double norm = c_.norm();
        detail::require(norm > 0.0, "FockVector: zero vector");
        c_ /= norm;
    }

    explicit FockVector(const Eigen::VectorXd& real_coeffs) : FockVector(Eigen::VectorXcd(real_coeffs.cast<cplx>())) {}

    static FockVector number_state(int n, int dim)
    {
        detail::require(dim >= 1 && n >= 0 && n < dim, "number_state: need 0 <= n < dim");
        Eigen::VectorXcd c = Eigen::VectorXcd::Zero(dim);
        c(n) = 1.0;
        return FockVector(std::move(c));
    }

    int dim() const noexcept { return static_cast<int>(c_.size()); }
    const Eigen::VectorXcd& coeffs() const noexcept { return c_; }
    cplx operator[](int n) const { return c_(n); }

    Eigen::VectorXd populations() const { return c_.cwiseAbs2(); }

    bool is_real(double tol = 0.0) const { return c_.imag().cwiseAbs().maxCoeff() <= tol; }

    Eigen::VectorXd real_coeffs() const
    {
        detail::require(is_real(1e-12), "FockVector: amplitudes are not real");
        return c_.real();
    }

private:
    Eigen::VectorXcd c_;
};

enum class Check {
    full,     ///< Hermitian, trace in (0, 1], PSD.
    hermitian ///< Hermitian only; for matrices produced by trusted maps.
};

/// Hermitian, positive semidefinite, trace <= 1 operator on a truncated mode.
/// Trace may fall short of 1 when the state is a truncation of an
/// infinite-support state (thermal noise, channel outputs).
class DensityMatrix {
public:
    explicit DensityMatrix(Eigen::MatrixXcd m, Check check = Check::full) : m_(std::move(m))
    {
        detail::require(m_.rows() >= 1 && m_.rows() == m_.cols(), "DensityMatrix: need a non-empty square matrix");
        detail::require(m_.allFinite(), "DensityMatrix: non-finite entry");
        const double herm = (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
        detail::require(herm <= hermitian_tol, "DensityMatrix: not Hermitian (residual " + detail::str(herm) + ")");
        // Exact Hermiticity from here on.
        m_ = 0.5 * (m_ + m_.adjoint()).eval();
        for (Eigen::Index i = 0; i < m_.rows(); ++i)
            m_(i, i) = m_(i, i).real();
        if (check == Check::full) {
            const double tr = trace();
            detail::require(tr > 0.0 && tr <= 1.0 + 1e-10, "DensityMatrix: trace " + detail::str(tr) + " outside (0, 1]");
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m_, Eigen::EigenvaluesOnly);
            if (es.info() != Eigen::Success)
                throw NumericalError("DensityMatrix: eigensolver failed");
            detail::require(es.eigenvalues().minCoeff() >= -psd_tol,
                            "DensityMatrix: not PSD (min eigenvalue " + detail::str(es.eigenvalues().minCoeff()) + ")");
        }
    }

    /// |psi><psi|
    explicit DensityMatrix(const FockVector& psi)
        : DensityMatrix(Eigen::MatrixXcd(psi.coeffs() * psi.coeffs().adjoint()), Check::hermitian)
    {
    }

    static DensityMatrix diagonal(const Eigen::VectorXd& p)
    {
        detail::require(p.size() >= 1 && p.minCoeff() >= 0.0, "DensityMatrix::diagonal: need nonnegative populations");
        return DensityMatrix(Eigen::MatrixXcd(p.cast<cplx>().asDiagonal()));
    }

    int dim() const noexcept { return static_cast<int>(m_.rows()); }
    const Eigen::MatrixXcd& matrix() const noexcept { return m_; }
    cplx operator()(int n, int m) const { return m_(n, m); }
    double trace() const { return m_.diagonal().real().sum(); }
    Eigen::VectorXd populations() const { return m_.diagonal().real(); }

    /// Zero-pads (or truncates) to a new dimension.
    DensityMatrix resized(int dim) const
    {
        detail::require(dim >= 1, "DensityMatrix::resized: dim must be >= 1");
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(dim, dim);
        const int k = std::min(dim, this->dim());
        out.topLeftCorner(k, k) = m_.topLeftCorner(k, k);
        return DensityMatrix(std::move(out), Check::hermitian);
    }

    bool is_diagonal(double tol = 1e-12) const
    {
        Eigen::MatrixXcd off = m_;
        off.diagonal().setZero();
        return off.cwiseAbs().maxCoeff() <= tol;
    }

private:
    Eigen::MatrixXcd m_;
};

// ---------------------------------------------------------------------------
// State families

/// Probability mass of a Poisson(n_mean) distribution at n >= dim.
inline double poisson_tail(double n_mean, int dim)
{
    if (n_mean == 0.0)
        return 0.0;
    double tail = 0.0;
    const double log_mean = std::log(n_mean);
    for (int n = dim; n < dim + 400; ++n) {
        const double term = std::exp(-n_mean + n * log_mean - detail::log_factorial(n));
        tail += term;
        if (n > n_mean && term < 1e-18 * std::max(tail, 1e-300))
            break;
    }
    return tail;
}

/// Coherent state of mean photon number n_mean, truncated to dim levels and
/// renormalized. Real, nonnegative amplitudes. Throws when more than
/// max_tail of the Poisson mass falls outside the truncation.
inline FockVector coherent_coefficients(double n_mean, int dim = default_dim, double max_tail = tail_reject_mass)
{
    detail::require(std::isfinite(n_mean) && n_mean >= 0.0, "coherent_coefficients: n_mean must be >= 0");
    detail::require(dim >= 1, "coherent_coefficients: dim must be >= 1");
    const double tail = poisson_tail(n_mean, dim);
    if (tail > max_tail)
        throw InvalidArgument("coherent_coefficients: truncated tail mass " + detail::str(tail) + " for n_mean " +
                              detail::str(n_mean) + " exceeds " + detail::str(max_tail) + " at dim " + detail::str(dim));
    if (tail > tail_warn_mass)
        warn("coherent state n_mean=" + detail::str(n_mean) + " loses mass " + detail::str(tail) + " at dim " +
             detail::str(dim));
    Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
    if (n_mean == 0.0) {
        c(0) = 1.0;
    } else {
        const double log_mean = std::log(n_mean);
        for (int n = 0; n < dim; ++n)
            c(n) = std::exp(-0.5 * n_mean + 0.5 * n * log_mean - 0.5 * detail::log_factorial(n));
    }
    return FockVector(c);
}

/// Populations n^k / (n+1)^(k+1) of a thermal state, k < dim.
inline Eigen::VectorXd thermal_populations(double n_env, int dim)
{
    detail::require(std::isfinite(n_env) && n_env >= 0.0, "thermal_density: n_env must be >= 0");
    detail::require(dim >= 1, "thermal_density: dim must be >= 1");
    Eigen::VectorXd p(dim);
    const double q = n_env / (n_env + 1.0);
    double pk = 1.0 / (n_env + 1.0);
    for (int k = 0; k < dim; ++k) {
        p(k) = pk;
        pk *= q;
    }
    return p;
}

struct ThermalOptions {
    bool renormalize = false;
};

/// Diagonal thermal state. Not renormalized unless asked; warns when the
/// retained mass drops below 1 - 1e-6.
inline DensityMatrix thermal_density(double n_env, int dim = default_dim, ThermalOptions opts = {})
{
    Eigen::VectorXd p = thermal_populations(n_env, dim);
    const double mass = p.sum();
    if (1.0 - mass > tail_warn_mass)
        warn("thermal state n_env=" + detail::str(n_env) + " retains mass " + detail::str(mass) + " at dim " +
             detail::str(dim));
    if (opts.renormalize)
        p /= mass;
    return DensityMatrix::diagonal(p);
}

/// Two-level number-squeezed state sqrt(p)|ceil(n)> + sqrt(1-p)|floor(n)>,
/// p = n - floor(n).
inline FockVector pnss(double n_mean, int dim = default_dim)
{
    detail::require(std::isfinite(n_mean) && n_mean >= 0.0, "pnss: n_mean must be >= 0");
    const double hi = std::ceil(n_mean);
    const double lo = std::floor(n_mean);
    if (hi >= dim)
        throw InvalidArgument("pnss: ceil(n_mean) = " + detail::str(hi) + " exceeds truncation dim " + detail::str(dim));
    const double p = n_mean - hi + 1.0;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
    if (hi == lo) {
        c(static_cast<int>(hi)) = 1.0;
    } else {
        c(static_cast<int>(hi)) = std::sqrt(p);
        c(static_cast<int>(lo)) = std::sqrt(1.0 - p);
    }
    return FockVector(c);
}

// ---------------------------------------------------------------------------
// Photon statistics

inline double mean_photon(const Eigen::VectorXd& populations)
{
    return populations.dot(Eigen::VectorXd::LinSpaced(populations.size(), 0.0, double(populations.size() - 1)));
}

inline double mean_photon(const FockVector& psi) { return mean_photon(psi.populations()); }
inline double mean_photon(const DensityMatrix& rho) { return mean_photon(rho.populations()); }

/// Var(n) = <n^2> - <n>^2 of a (possibly subnormalized) population vector,
/// moments taken with respect to the given weights as-is.
inline double photon_variance(const Eigen::VectorXd& populations)
{
    const Eigen::VectorXd n = Eigen::VectorXd::LinSpaced(populations.size(), 0.0, double(populations.size() - 1));
    const double m1 = populations.dot(n);
    const double m2 = populations.dot(n.cwiseProduct(n));
    return std::max(0.0, m2 - m1 * m1);
}

inline double photon_variance(const FockVector& psi) { return photon_variance(psi.populations()); }
inline double photon_variance(const DensityMatrix& rho) { return photon_variance(rho.populations()); }

/// Photon counting with detection efficiency r (binomial thinning):
/// P_m = sum_{n>=m} C(n,m) r^m (1-r)^(n-m) rho_nn.
inline Eigen::VectorXd counting_statistics(const Eigen::VectorXd& diag, double r)
{
    detail::require(r >= 0.0 && r <= 1.0, "counting_statistics: r must lie in [0, 1]");
    detail::require(diag.size() >= 1, "counting_statistics: empty distribution");
    detail::require(diag.minCoeff() >= 0.0 && diag.sum() <= 1.0 + 1e-10,
                    "counting_statistics: need nonnegative entries summing to <= 1");
    const int d = static_cast<int>(diag.size());
    Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
    for (int m = 0; m < d; ++m)
        for (int n = m; n < d; ++n)
            out(m) += binomial(n, m) * std::pow(r, m) * std::pow(1.0 - r, n - m) * diag(n);
    return out;
}

/// Probability of finding no photons after thinning with efficiency r.
inline double vacuum_probability(const Eigen::VectorXd& diag, double r)
{
    detail::require(r >= 0.0 && r <= 1.0, "vacuum_probability: r must lie in [0, 1]");
    detail::require(diag.size() >= 1 && diag.minCoeff() >= 0.0 && diag.sum() <= 1.0 + 1e-10,
                    "vacuum_probability: need nonnegative entries summing to <= 1");
    double p0 = 0.0;
    for (Eigen::Index n = 0; n < diag.size(); ++n)
        p0 += std::pow(1.0 - r, static_cast<double>(n)) * diag(n);
    return p0;
}

/// Sum of moduli of the off-diagonal entries.
inline double coherence(const DensityMatrix& rho)
{
    double c = 0.0;
    for (int j = 0; j < rho.dim(); ++j)
        for (int i = 0; i < rho.dim(); ++i)
            if (i != j)
                c += std::abs(rho(i, j));
    return c;
}

// ---------------------------------------------------------------------------
// Fidelity

/// Uhlmann fidelity ||sqrt(a) sqrt(b)||_1^2, clamped to [0, 1]. Eigenvalues
/// at rounding level are zeroed before the square roots so that
/// rank-deficient inputs do not pick up sqrt(eps) noise.
inline double fidelity(const DensityMatrix& a, const DensityMatrix& b)
{
    detail::require(a.dim() == b.dim(), "fidelity: dimension mismatch");
    const auto root = [](const Eigen::MatrixXcd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
        if (es.info() != Eigen::Success)
            throw NumericalError("fidelity: eigensolver did not converge");
        const Eigen::VectorXd& w = es.eigenvalues();
        if (w.minCoeff() < -psd_tol)
            throw NumericalError("fidelity: non-PSD input (eigenvalue " + detail::str(w.minCoeff()) + ")");
        const double floor = 64 * std::numeric_limits<double>::epsilon() * std::max(w.cwiseAbs().maxCoeff(), 1e-300);
        const Eigen::VectorXd s = w.unaryExpr([floor](double x) { return x > floor ? std::sqrt(x) : 0.0; });
        return Eigen::MatrixXcd(es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint());
    };
    const Eigen::MatrixXcd prod = root(a.matrix()) * root(b.matrix());
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(prod);
    const double f = svd.singularValues().sum();
    return std::clamp(f * f, 0.0, 1.0);
}

/// |<a|b>|^2
inline double fidelity(const FockVector& a, const FockVector& b)
{
    detail::require(a.dim() == b.dim(), "fidelity: dimension mismatch");
    return std::min(1.0, std::norm(a.coeffs().dot(b.coeffs())));
}

/// Classical fidelity (sum_n sqrt(p_n q_n))^2 of two population vectors.
inline double distribution_fidelity(const Eigen::VectorXd& p, const Eigen::VectorXd& q)
{
    detail::require(p.size() == q.size(), "distribution_fidelity: size mismatch");
    const double b = p.cwiseMax(0.0).cwiseSqrt().dot(q.cwiseMax(0.0).cwiseSqrt());
    return b * b;
}

// ---------------------------------------------------------------------------
// Phase-space gauge

/// c_n -> e^{i n theta} c_n
inline FockVector phase_rotated(const FockVector& psi, double theta)
{
    Eigen::VectorXcd c = psi.coeffs();
    for (int n = 0; n < psi.dim(); ++n)
        c(n) *= std::polar(1.0, n * theta);
    return FockVector(std::move(c));
}

/// <a> = sum_n sqrt(n+1) conj(c_n) c_{n+1}
inline cplx annihilation_mean(const FockVector& psi)
{
    cplx a = 0.0;
    for (int n = 0; n + 1 < psi.dim(); ++n)
        a += std::sqrt(n + 1.0) * std::conj(psi[n]) * psi[n + 1];
    return a;
}

/// Representative of the orbit {e^{i phi} e^{i n theta} c_n} with <a> real
/// and nonnegative and the largest-magnitude amplitude real and positive.
/// Real inputs stay real (theta in {0, pi}, phi in {0, pi}).
inline FockVector canonical_gauge(const FockVector& psi)
{
    Eigen::VectorXcd c = psi.coeffs();
    const cplx a = annihilation_mean(psi);
    if (std::abs(a) > 1e-14) {
        const double theta = -std::arg(a);
        for (int n = 0; n < psi.dim(); ++n)
            c(n) *= std::polar(1.0, n * theta);
    }
    Eigen::Index imax = 0;
    c.cwiseAbs().maxCoeff(&imax);
    c *= std::polar(1.0, -std::arg(c(imax)));
    // Remove rounding residue so real states stay exactly real.
    if (psi.is_real())
        c = c.real().cast<cplx>();
    return FockVector(std::move(c));
}

} // namespace qtd
