// Optimal probes for a lossless environment at n_bar = 1: the probe moves
// from the coherent state at weak reflection to the single-photon state at
// strong reflection.
#include <qtd/qtd.hpp>

#include <cstdio>

int main()
{
    using namespace qtd;
    ScopedWarningHandler quiet([](const std::string&) {});

    OptimizationProblem p;
    p.n_target = 1.0;
    std::printf("%6s %10s %10s %8s %8s  populations\n", "r", "p_err", "p_err_coh", "qa_dB", "F_coh");
    for (double r : {0.001, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
        p.config.r = r;
        const OptimizationResult res = optimize_probe(p);
        const SweepRecord rec = make_record(p, res);
        std::printf("%6.3f %10.3e %10.3e %8.4f %8.5f ", r, rec.p_err_opt, rec.p_err_coh, rec.qa_db,
                    rec.fidelity_to_coherent);
        const Eigen::VectorXd pop = res.state.populations();
        for (Eigen::Index n = 0; n < 4; ++n)
            std::printf(" %.4f", pop(n));
        std::printf("%s\n", res.converged ? "" : "  (not converged)");
    }
}
