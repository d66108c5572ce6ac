#pragma once
// Optimal probe search: SQP over probe amplitudes under the normalization
// and mean-photon constraints, reflectivity sweeps, and the transition
// reflectivity where the optimal probe reverts to a coherent state.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "channel.hpp"
#include "discrimination.hpp"
#include "fock.hpp"
#include "objective.hpp"
#include "phase.hpp"
#include "sqp.hpp"

namespace qtd {

struct OptimizationProblem {
    Objective objective = Objective::helstrom_dm;
    ChannelConfig config;
    double n_target = 1.0;
    double p0 = default_prior;
    Parameterization param = Parameterization::real;
    int phase_grid = default_phase_grid;

    int dim() const { return config.dim_probe; }

    void validate() const
    {
        config.validate();
        detail::check_prior(p0);
        detail::require(std::isfinite(n_target) && n_target >= 0.0, "OptimizationProblem: n_target must be >= 0");
        detail::require(n_target <= dim() - 1, "OptimizationProblem: n_target " + detail::str(n_target) +
                                                   " is infeasible at dim " + detail::str(dim()));
        detail::require(phase_grid >= min_phase_grid, "OptimizationProblem: phase grid must have >= 64 points");
    }
};

struct OptimizerOptions {
    SqpOptions sqp;
    int restarts = 8;
    std::uint64_t seed = 0;
    bool pnss_start = true; ///< also start from the two-level number-squeezed state
    std::vector<Eigen::VectorXd> extra_starts; ///< e.g. warm starts from neighbouring sweep points
};

struct OptimizationResult {
    FockVector state;          ///< optimal probe, canonical gauge
    double objective_value = 0.0;
    double p_err = 0.0;        ///< Helstrom error of the returned probe
    int iterations = 0;        ///< SQP iterations of the winning start
    double kkt_residual = 0.0;
    bool converged = false;
    int restarts_used = 0;     ///< number of starts run
    int starts_converged = 0;
    std::string status;

    Eigen::VectorXcd coeffs() const { return state.coeffs(); }
};

namespace detail {

/// Objective plus the two equality constraints |c|^2 = 1 and
/// sum n |c_n|^2 = n_target, in the SQP problem interface.
class ProbeProblem {
public:
    explicit ProbeProblem(const OptimizationProblem& p)
        : obj_(p.objective, p.config, p.p0, p.param, p.phase_grid), n_target_(p.n_target)
    {
        const int d = p.dim();
        const int k = obj_.num_params();
        weights_.resize(k);
        for (int i = 0; i < k; ++i)
            weights_(i) = static_cast<double>(i % d);
    }

    const ProbeObjective& objective() const { return obj_; }
    double value(const Eigen::VectorXd& x) const { return obj_.value(x); }
    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return obj_.gradient(x); }

    Eigen::VectorXd constraints(const Eigen::VectorXd& x) const
    {
        Eigen::VectorXd c(2);
        c << x.squaredNorm() - 1.0, weights_.dot(x.cwiseAbs2()) - n_target_;
        return c;
    }

    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const
    {
        Eigen::MatrixXd j(2, x.size());
        j.row(0) = 2.0 * x.transpose();
        j.row(1) = 2.0 * weights_.cwiseProduct(x).transpose();
        return j;
    }

    const Eigen::VectorXd& level_weights() const { return weights_; }
    double n_target() const { return n_target_; }

private:
    ProbeObjective obj_;
    double n_target_;
    Eigen::VectorXd weights_;
};

static_assert(ConstrainedProblem<ProbeProblem>);

/// Newton projection onto the constraint manifold with minimum-norm steps.
inline Eigen::VectorXd project_feasible(const ProbeProblem& pp, Eigen::VectorXd x, int max_iter = 50)
{
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd c = pp.constraints(x);
        if (c.cwiseAbs().maxCoeff() < 1e-15)
            break;
        const Eigen::VectorXd dx = feasibility_correction(pp.jacobian(x), c);
        if (!dx.allFinite())
            break;
        x += dx;
        if (dx.lpNorm<Eigen::Infinity>() < 1e-16)
            break;
    }
    return x;
}

/// Rescales |x_n|^2 by exp(-beta n) so that the result is a unit vector with
/// mean level n_target. Needs weight on levels both below and above n_target.
inline std::optional<Eigen::VectorXd> tilt_to_mean(const Eigen::VectorXd& x, const Eigen::VectorXd& level,
                                                   double n_target)
{
    const Eigen::VectorXd u = x.cwiseAbs2();
    const auto mean_at = [&](double beta) {
        double z = 0.0, m = 0.0;
        const double shift = beta > 0 ? 0.0 : -beta * level.maxCoeff();
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            const double w = u(i) * std::exp(-beta * level(i) - shift);
            z += w;
            m += w * level(i);
        }
        return m / z;
    };
    double lo = -1.0, hi = 1.0;
    while (mean_at(lo) < n_target && lo > -1e3)
        lo *= 2.0;
    while (mean_at(hi) > n_target && hi < 1e3)
        hi *= 2.0;
    if (mean_at(lo) < n_target || mean_at(hi) > n_target)
        return std::nullopt;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_at(mid) > n_target ? lo : hi) = mid;
    }
    const double beta = 0.5 * (lo + hi);
    Eigen::VectorXd y = x;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        y(i) *= std::exp(-0.5 * beta * level(i));
    return Eigen::VectorXd(y / y.norm());
}

inline std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

/// Uniform direction on the sphere, tilted and projected onto the feasible set.
inline Eigen::VectorXd random_feasible(const ProbeProblem& pp, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal;
    const Eigen::Index k = pp.level_weights().size();
    for (int attempt = 0; attempt < 64; ++attempt) {
        Eigen::VectorXd z(k);
        for (Eigen::Index i = 0; i < k; ++i)
            z(i) = normal(rng);
        if (z.norm() == 0.0)
            continue;
        z /= z.norm();
        if (auto t = tilt_to_mean(z, pp.level_weights(), pp.n_target())) {
            Eigen::VectorXd x = project_feasible(pp, *t);
            if (pp.constraints(x).cwiseAbs().maxCoeff() < 1e-12)
                return x;
        }
    }
    throw NumericalError("random_feasible: could not draw a feasible start");
}

inline bool feasible(const ProbeProblem& pp, const Eigen::VectorXd& x)
{
    const Eigen::VectorXd c = pp.constraints(x);
    return std::abs(c(0)) <= 1e-10 && std::abs(c(1)) <= 1e-8;
}

inline FockVector state_from_params(const ProbeObjective& obj, const Eigen::VectorXd& x)
{
    return FockVector(Eigen::VectorXcd(obj.amplitudes(x)));
}

} // namespace detail

/// Best converged SQP result over the coherent start, the number-squeezed
/// start, any extra starts, and opts.restarts random feasible starts.
/// n_target = 0 and n_target = dim - 1 admit a single feasible state and
/// return it directly. Throws InvalidArgument for infeasible problems; when
/// no start converges the best feasible iterate is returned with
/// converged = false.
inline OptimizationResult optimize_probe(const OptimizationProblem& problem, const OptimizerOptions& opts = {})
{
    problem.validate();
    detail::require(opts.restarts >= 0, "optimize_probe: restarts must be >= 0");
    const detail::ProbeProblem pp(problem);
    const ProbeObjective& obj = pp.objective();
    const int d = problem.dim();

    const auto helstrom_of = [&](const FockVector& s) {
        const BeamSplitterChannel& ch = obj.channel();
        return helstrom_error(ch.null_state(), ch.received(s.coeffs()), problem.p0);
    };

    const double nt = problem.n_target;
    if (nt == 0.0 || nt == d - 1.0) {
        const FockVector s = FockVector::number_state(static_cast<int>(nt), d);
        return {s, obj.value(obj.parameters(s)), helstrom_of(s), 0, 0.0, true, 0, 0, "unique feasible state"};
    }

    std::vector<Eigen::VectorXd> starts;
    starts.push_back(detail::project_feasible(pp, obj.parameters(coherent_coefficients(nt, d, reference_tail_mass))));
    if (opts.pnss_start && std::ceil(nt) < d)
        starts.push_back(obj.parameters(pnss(nt, d)));
    for (const auto& s : opts.extra_starts) {
        detail::require(s.size() == obj.num_params(), "optimize_probe: extra start has wrong size");
        starts.push_back(detail::project_feasible(pp, s));
    }
    auto rng = detail::seeded_engine(opts.seed, 0);
    for (int i = 0; i < opts.restarts; ++i)
        starts.push_back(detail::random_feasible(pp, rng));

    std::optional<SqpResult> best;
    bool best_converged = false;
    int n_converged = 0;
    for (const auto& x0 : starts) {
        SqpResult r;
        try {
            r = sqp_minimize(pp, x0, opts.sqp);
        } catch (const NumericalError&) {
            continue;
        }
        if (!r.x.allFinite())
            continue;
        const bool ok = r.converged && detail::feasible(pp, r.x);
        n_converged += ok ? 1 : 0;
        const bool better = !best || (ok && !best_converged) ||
                            (ok == best_converged && r.objective < best->objective);
        if (better) {
            best = std::move(r);
            best_converged = ok;
        }
    }
    if (!best)
        throw NumericalError("optimize_probe: every start failed numerically");

    const Eigen::VectorXd x = detail::project_feasible(pp, best->x);
    const FockVector state = canonical_gauge(detail::state_from_params(obj, x));
    OptimizationResult out{state,
                           obj.value(obj.parameters(state)),
                           helstrom_of(state),
                           best->iterations,
                           best->kkt_residual,
                           best_converged,
                           static_cast<int>(starts.size()),
                           n_converged,
                           best_converged ? best->status : "no start converged (best: " + best->status + ")"};
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRecord {
    double r = 0.0;
    double n_env = 0.0;
    double n_bar = 0.0;
    double p_err_coh = 0.0;
    double p_err_opt = 0.0;
    double qa_db = 0.0;
    double fidelity_to_coherent = 0.0;
    double photon_variance = 0.0;
    double phase_fwhm = 0.0;
    double coherence_value = 0.0;
    double sd_ratio_n = 0.0;   ///< photon-number SD of the optimum over that of the coherent probe
    double sd_ratio_phi = 0.0; ///< phase FWHM of the optimum over that of the coherent probe
    double coherence_ratio = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline const std::vector<std::string>& sweep_columns()
{
    static const std::vector<std::string> cols{
        "r",           "n_env",           "n_bar",      "p_err_coh",    "p_err_opt",  "qa_db",
        "fidelity_to_coherent", "photon_variance", "phase_fwhm", "coherence_value", "sd_ratio_n", "sd_ratio_phi",
        "coherence_ratio", "iterations",  "converged"};
    return cols;
}

struct SweepPoint {
    SweepRecord record;
    std::optional<FockVector> state; ///< empty when the point failed outright
    std::string status;
};

/// Photon-number, phase and coherence figures of a probe next to those of
/// the coherent probe with the same mean photon number. Ratios are NaN
/// when the coherent value is zero (vacuum). The reference mean defaults to
/// the probe's own mean.
struct CoherentComparison {
    double mean = 0.0;
    double fidelity_to_coherent = 0.0;
    double photon_variance = 0.0, phase_fwhm = 0.0, coherence_value = 0.0;
    double coherent_variance = 0.0, coherent_fwhm = 0.0, coherent_coherence = 0.0;
    double sd_ratio_n = 0.0, sd_ratio_phi = 0.0, coherence_ratio = 0.0;
};

inline CoherentComparison compare_to_coherent(const FockVector& state, int phase_grid = default_phase_grid,
                                              std::optional<double> reference_mean = std::nullopt)
{
    CoherentComparison c;
    c.mean = reference_mean.value_or(mean_photon(state));
    const FockVector coh = coherent_coefficients(c.mean, state.dim(), reference_tail_mass);
    const DensityMatrix rho(state), rho_coh(coh);
    c.fidelity_to_coherent = fidelity(state, coh);
    c.photon_variance = photon_variance(state);
    c.phase_fwhm = phase_fwhm(phase_distribution(rho, phase_grid));
    c.coherence_value = coherence(rho);
    c.coherent_variance = photon_variance(coh);
    c.coherent_fwhm = phase_fwhm(phase_distribution(rho_coh, phase_grid));
    c.coherent_coherence = coherence(rho_coh);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    c.sd_ratio_n = c.coherent_variance > 0.0 ? std::sqrt(c.photon_variance / c.coherent_variance) : nan;
    c.sd_ratio_phi = c.coherent_fwhm > 0.0 ? c.phase_fwhm / c.coherent_fwhm : nan;
    c.coherence_ratio = c.coherent_coherence > 0.0 ? c.coherence_value / c.coherent_coherence : nan;
    return c;
}

/// Probe figures of merit compared against the coherent probe of the same
/// mean photon number.
inline SweepRecord make_record(const OptimizationProblem& problem, const OptimizationResult& res)
{
    const int d = problem.dim();
    const FockVector coh = coherent_coefficients(problem.n_target, d, reference_tail_mass);
    const BeamSplitterChannel ch(problem.config);

    SweepRecord rec;
    rec.r = problem.config.r;
    rec.n_env = problem.config.n_env;
    rec.n_bar = problem.n_target;
    rec.p_err_coh = helstrom_error(ch.null_state(), ch.received(coh.coeffs()), problem.p0);
    rec.p_err_opt = res.p_err;
    rec.qa_db = quantum_advantage(std::max(rec.p_err_coh, std::numeric_limits<double>::min()), rec.p_err_opt).db;

    const CoherentComparison c = compare_to_coherent(res.state, problem.phase_grid, problem.n_target);
    rec.fidelity_to_coherent = c.fidelity_to_coherent;
    rec.photon_variance = c.photon_variance;
    rec.phase_fwhm = c.phase_fwhm;
    rec.coherence_value = c.coherence_value;
    rec.sd_ratio_n = c.sd_ratio_n;
    rec.sd_ratio_phi = c.sd_ratio_phi;
    rec.coherence_ratio = c.coherence_ratio;
    rec.iterations = res.iterations;
    rec.converged = res.converged;
    return rec;
}

struct SweepOptions {
    OptimizerOptions optimizer;
    bool warm_start = true;
    int workers = 0; ///< 0 selects the number of hardware threads
};

namespace detail {

inline int worker_count(int requested, std::size_t jobs)
{
    int w = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    w = std::max(1, w);
    return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(w), std::max<std::size_t>(jobs, 1)));
}

/// Runs job(i) for i in [0, n) on a pool of workers. Results must be written
/// to per-index slots, so the outcome does not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, int workers, F&& job)
{
    const int w = worker_count(workers, n);
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(w));
    for (int t = 0; t < w; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++)
                job(i);
        });
    for (auto& th : pool)
        th.join();
}

inline SweepPoint failed_point(const OptimizationProblem& problem, const std::string& why)
{
    const double nan = std::numeric_limits<double>::quiet_NaN();
    SweepRecord rec{problem.config.r, problem.config.n_env, problem.n_target, nan, nan, nan, nan, nan,
                    nan, nan, nan, nan, nan, 0, false};
    return {rec, std::nullopt, why};
}

} // namespace detail

/// 25 log-spaced points on [1e-3, 0.1) followed by 30 linear points on
/// [0.1, 0.99]: dense where the low-r curve bends, uniform elsewhere.
inline std::vector<double> default_reflectivity_grid()
{
    std::vector<double> g;
    for (int i = 0; i < 25; ++i)
        g.push_back(std::pow(10.0, -3.0 + 2.0 * i / 25));
    for (int i = 0; i < 29; ++i)
        g.push_back(0.1 + 0.89 * i / 29);
    g.push_back(0.99); // exact endpoint, not 0.1 + 0.89 rounded
    return g;
}

/// One record per grid value, in grid order. Pass one optimizes every point
/// independently; with warm starts, pass two re-optimizes each point from
/// the pass-one optima of its neighbours and keeps whichever is better, so
/// warm starts never make a point worse and results do not depend on how
/// points are spread over workers.
inline std::vector<SweepPoint> sweep(const std::vector<double>& r_grid, const OptimizationProblem& tmpl,
                                     const SweepOptions& opts = {})
{
    detail::require(!r_grid.empty(), "sweep: empty reflectivity grid");
    for (std::size_t i = 0; i < r_grid.size(); ++i) {
        detail::require(std::isfinite(r_grid[i]) && r_grid[i] >= 0.0 && r_grid[i] <= 1.0,
                        "sweep: r values must lie in [0, 1]");
        detail::require(i == 0 || r_grid[i] >= r_grid[i - 1], "sweep: r grid must be sorted");
    }
    tmpl.validate();

    const std::size_t n = r_grid.size();
    const auto problem_at = [&](std::size_t i) {
        OptimizationProblem p = tmpl;
        p.config.r = r_grid[i];
        return p;
    };
    const auto options_at = [&](std::size_t i) {
        OptimizerOptions o = opts.optimizer;
        o.seed = opts.optimizer.seed + 0x9e3779b97f4a7c15ULL * (i + 1);
        return o;
    };

    std::vector<std::optional<OptimizationResult>> first(n);
    std::vector<std::string> errors(n);
    detail::parallel_for(n, opts.workers, [&](std::size_t i) {
        try {
            first[i] = optimize_probe(problem_at(i), options_at(i));
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    std::vector<std::optional<OptimizationResult>> final_res = first;
    if (opts.warm_start && n > 1) {
        detail::parallel_for(n, opts.workers, [&](std::size_t i) {
            OptimizerOptions o = options_at(i);
            o.restarts = 0;
            o.pnss_start = false;
            o.extra_starts.clear();
            const OptimizationProblem p = problem_at(i);
            const ProbeObjective probe_obj(p.objective, p.config, p.p0, p.param, min_phase_grid);
            for (std::size_t j : {i - 1, i + 1})
                if (j < n && first[j])
                    o.extra_starts.push_back(probe_obj.parameters(first[j]->state));
            if (o.extra_starts.empty())
                return;
            try {
                OptimizationResult warm = optimize_probe(p, o);
                auto& cur = final_res[i];
                const bool better = !cur || (warm.converged && !cur->converged) ||
                                    (warm.converged == cur->converged && warm.objective_value < cur->objective_value);
                if (better) {
                    warm.restarts_used += cur ? cur->restarts_used : 0;
                    cur = std::move(warm);
                }
            } catch (const std::exception&) {
                // keep the pass-one result
            }
        });
    }

    std::vector<SweepPoint> out(n);
    detail::parallel_for(n, opts.workers, [&](std::size_t i) {
        const OptimizationProblem p = problem_at(i);
        if (!final_res[i]) {
            out[i] = detail::failed_point(p, errors[i]);
            return;
        }
        try {
            out[i] = {make_record(p, *final_res[i]), final_res[i]->state, final_res[i]->status};
        } catch (const std::exception& e) {
            out[i] = detail::failed_point(p, e.what());
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Transition reflectivity

struct TransitionOptions {
    double r_lo = 0.05;
    double r_hi = 0.95;
    double tol = 1e-3;
    OptimizerOptions optimizer;
};

struct TransitionResult {
    double r_t = 0.0;
    SweepRecord record; ///< figures of merit at r_t
    FockVector state;
    int evaluations = 0;
};

/// Bisection on the sign of sd_ratio_phi - 1: the optimum is phase squeezed
/// (ratio below one) beneath the transition and number squeezed above it.
/// Throws BracketError when the bracket ends do not straddle a sign change.
inline TransitionResult find_transition_reflectivity(const OptimizationProblem& tmpl, const TransitionOptions& opts = {})
{
    tmpl.validate();
    detail::require(opts.r_lo > 0.0 && opts.r_hi < 1.0 && opts.r_lo < opts.r_hi,
                    "find_transition_reflectivity: bracket must satisfy 0 < r_lo < r_hi < 1");
    detail::require(opts.tol > 0.0, "find_transition_reflectivity: tolerance must be > 0");

    int evals = 0;
    const auto eval = [&](double r) {
        OptimizationProblem p = tmpl;
        p.config.r = r;
        OptimizerOptions o = opts.optimizer;
        o.seed = opts.optimizer.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(++evals);
        const OptimizationResult res = optimize_probe(p, o);
        return std::make_pair(make_record(p, res), res.state);
    };
    const auto side = [](const SweepRecord& rec) { return rec.sd_ratio_phi - 1.0; };

    double lo = opts.r_lo, hi = opts.r_hi;
    const double f_lo = side(eval(lo).first);
    const double f_hi = side(eval(hi).first);
    if (!(f_lo < 0.0 && f_hi > 0.0))
        throw BracketError("find_transition_reflectivity: sd_ratio_phi - 1 does not change sign from below to above on [" +
                           detail::str(lo) + ", " + detail::str(hi) + "] (ends " + detail::str(f_lo) + ", " +
                           detail::str(f_hi) + ")");
    while (hi - lo > opts.tol) {
        const double mid = 0.5 * (lo + hi);
        (side(eval(mid).first) < 0.0 ? lo : hi) = mid;
    }
    const double r_t = 0.5 * (lo + hi);
    auto [rec, state] = eval(r_t);
    return {r_t, rec, state, evals};
}

} // namespace qtd
