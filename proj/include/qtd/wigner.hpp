#pragma once
// Wigner function on a quadrature grid via displaced parity,
// W(x, p) = (1/pi) Tr[rho D(2 alpha) Pi], alpha = (x + i p)/sqrt(2).
// Quadratures x = (a + a^dag)/sqrt2 and p = (a - a^dag)/(i sqrt2), so the
// vacuum is exp(-x^2 - p^2)/pi and a coherent state |alpha> sits at
// (sqrt2 Re alpha, sqrt2 Im alpha).

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "fock.hpp"

namespace qtd {

inline constexpr const char* wigner_convention =
    "x=(a+a^dag)/sqrt(2), p=(a-a^dag)/(i sqrt(2)), vacuum W=exp(-x^2-p^2)/pi";

struct WignerGrid {
    Eigen::VectorXd x_axis;
    Eigen::VectorXd p_axis;
    Eigen::MatrixXd values; ///< values(i, j) = W(x_i, p_j)

    /// 2D trapezoid rule over the grid.
    double integral() const
    {
        const auto weights = [](const Eigen::VectorXd& ax) {
            Eigen::VectorXd w = Eigen::VectorXd::Zero(ax.size());
            for (Eigen::Index i = 0; i + 1 < ax.size(); ++i) {
                const double h = 0.5 * (ax(i + 1) - ax(i));
                w(i) += h;
                w(i + 1) += h;
            }
            return w;
        };
        return weights(x_axis).dot(values * weights(p_axis));
    }
};

inline Eigen::VectorXd linspace(double lo, double hi, int n)
{
    detail::require(n >= 2 && hi > lo, "linspace: need n >= 2 and hi > lo");
    return Eigen::VectorXd::LinSpaced(n, lo, hi);
}

namespace detail {

/// Generalized Laguerre polynomials L_k^{(alpha)}(x) for k = 0..kmax.
inline Eigen::VectorXd laguerre_table(int kmax, int alpha, double x)
{
    Eigen::VectorXd l(kmax + 1);
    l(0) = 1.0;
    if (kmax >= 1)
        l(1) = 1.0 + alpha - x;
    for (int k = 1; k < kmax; ++k)
        l(k + 1) = ((2.0 * k + 1.0 + alpha - x) * l(k) - (k + alpha) * l(k - 1)) / (k + 1.0);
    return l;
}

} // namespace detail

inline WignerGrid wigner(const Eigen::MatrixXcd& rho, const Eigen::VectorXd& x_axis, const Eigen::VectorXd& p_axis)
{
    detail::require(rho.rows() >= 1 && rho.rows() == rho.cols(), "wigner: need a square matrix");
    detail::require(x_axis.size() >= 1 && p_axis.size() >= 1, "wigner: empty axis");
    const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (herm > 1e-9)
        throw NumericalError("wigner: non-Hermitian input (residual " + detail::str(herm) + ")");

    const int d = static_cast<int>(rho.rows());
    // sqrt(n!/m!) for n <= m
    Eigen::MatrixXd fact_ratio = Eigen::MatrixXd::Zero(d, d);
    for (int n = 0; n < d; ++n)
        for (int m = n; m < d; ++m)
            fact_ratio(n, m) = std::exp(0.5 * (detail::log_factorial(n) - detail::log_factorial(m)));

    WignerGrid out{x_axis, p_axis, Eigen::MatrixXd(x_axis.size(), p_axis.size())};
    std::vector<Eigen::VectorXd> lag(d);
    for (Eigen::Index i = 0; i < x_axis.size(); ++i) {
        for (Eigen::Index j = 0; j < p_axis.size(); ++j) {
            const cplx beta = std::sqrt(2.0) * cplx(x_axis(i), p_axis(j));
            const double b2 = std::norm(beta);
            const double gauss = std::exp(-0.5 * b2);
            for (int k = 0; k < d; ++k)
                lag[k] = detail::laguerre_table(d - 1 - k, k, b2);
            double w = 0.0;
            for (int n = 0; n < d; ++n) {
                const double parity = (n % 2 == 0) ? 1.0 : -1.0;
                w += parity * rho(n, n).real() * lag[0](n);
                cplx bk = 1.0;
                for (int m = n + 1; m < d; ++m) {
                    bk *= beta;
                    const int k = m - n;
                    w += parity * 2.0 * fact_ratio(n, m) * lag[k](n) * (rho(n, m) * bk).real();
                }
            }
            out.values(i, j) = w * gauss / std::numbers::pi;
        }
    }
    return out;
}

inline WignerGrid wigner(const DensityMatrix& rho, const Eigen::VectorXd& x_axis, const Eigen::VectorXd& p_axis)
{
    return wigner(rho.matrix(), x_axis, p_axis);
}

} // namespace qtd
