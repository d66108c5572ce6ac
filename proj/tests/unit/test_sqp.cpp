#include "test_util.hpp"

#include <cmath>

using namespace qtd;
using namespace qtd_test;

TEST(EqualityQp, TrivialStep)
{
    const QpStep s = solve_equality_qp(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3),
                                       Eigen::MatrixXd::Zero(0, 3), Eigen::VectorXd::Zero(0));
    EXPECT_EQ(s.step.norm(), 0.0);
    Eigen::MatrixXd j(1, 3);
    j << 1, 1, 0;
    EXPECT_EQ(solve_equality_qp(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), j, Eigen::VectorXd::Zero(1))
                  .step.norm(),
              0.0);
}

TEST(EqualityQp, HandSolvedSingleConstraint)
{
    Eigen::MatrixXd j(1, 2);
    j << 1, 0;
    Eigen::VectorXd c(1);
    c << 0.1;
    const QpStep s = solve_equality_qp(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), j, c);
    EXPECT_NEAR(s.step(0), -0.1, 1e-15);
    EXPECT_NEAR(s.step(1), 0.0, 1e-15);
    // stationarity H d + g = J^T mu
    EXPECT_NEAR(s.multipliers(0), -0.1, 1e-15);
}

TEST(EqualityQp, MatchesDenseSolveOracle)
{
    for (int t = 0; t < 30; ++t) {
        const int n = 6, m = 2;
        const Eigen::MatrixXd a = Eigen::MatrixXd::Random(n, n);
        const Eigen::MatrixXd h = a * a.transpose() + Eigen::MatrixXd::Identity(n, n);
        const Eigen::VectorXd g = Eigen::VectorXd::Random(n);
        const Eigen::MatrixXd j = Eigen::MatrixXd::Random(m, n);
        const Eigen::VectorXd c = Eigen::VectorXd::Random(m);
        const QpStep s = solve_equality_qp(h, g, j, c);
        // null-space oracle: d = -J^+ c + Z z with (Z^T H Z) z = -Z^T (g + H d_p)
        const Eigen::VectorXd dp = -j.transpose() * (j * j.transpose()).ldlt().solve(c);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(j);
        const Eigen::MatrixXd z = lu.kernel();
        const Eigen::VectorXd zz = (z.transpose() * h * z).ldlt().solve(-z.transpose() * (g + h * dp));
        const Eigen::VectorXd d = dp + z * zz;
        EXPECT_LT((s.step - d).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((j * s.step + c).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((h * s.step + g - j.transpose() * s.multipliers).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(EqualityQp, RankDeficiencySignalled)
{
    Eigen::MatrixXd j(2, 3);
    j << 1, 0, 0, 2, 0, 0;
    EXPECT_THROW(solve_equality_qp(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), j, Eigen::VectorXd::Zero(2)),
                 RankDeficient);
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(3, 3);
    h(0, 1) = 1.0;
    EXPECT_THROW(solve_equality_qp(h, Eigen::VectorXd::Zero(3), j.topRows(1), Eigen::VectorXd::Zero(1)), InvalidArgument);
}

namespace {

// min |x|^2 s.t. x0 + x1 + x2 = 1, x0 - x2 = 0.5 ; optimum by hand:
// x = (1/3 + 1/4, 1/3, 1/3 - 1/4)
struct Quadratic {
    double value(const Eigen::VectorXd& x) const { return x.squaredNorm(); }
    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return 2 * x; }
    Eigen::VectorXd constraints(const Eigen::VectorXd& x) const
    {
        Eigen::VectorXd c(2);
        c << x.sum() - 1, x(0) - x(2) - 0.5;
        return c;
    }
    Eigen::MatrixXd jacobian(const Eigen::VectorXd&) const
    {
        Eigen::MatrixXd j(2, 3);
        j << 1, 1, 1, 1, 0, -1;
        return j;
    }
};

// Rosenbrock-like objective on the unit circle: nonconvex, curved constraint.
struct CircleRosenbrock {
    double value(const Eigen::VectorXd& x) const
    {
        return std::pow(1 - x(0), 2) + 10 * std::pow(x(1) - x(0) * x(0), 2);
    }
    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const
    {
        Eigen::VectorXd g(2);
        g << -2 * (1 - x(0)) - 40 * x(0) * (x(1) - x(0) * x(0)), 20 * (x(1) - x(0) * x(0));
        return g;
    }
    Eigen::VectorXd constraints(const Eigen::VectorXd& x) const { return Eigen::VectorXd::Constant(1, x.squaredNorm() - 1); }
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const { return 2 * x.transpose(); }
};

// Gradient always "degenerate": the solver must fall back to differences.
struct AlwaysDegenerate : Quadratic {
    Eigen::VectorXd gradient(const Eigen::VectorXd&) const { throw DegenerateSpectrum("test"); }
};

} // namespace

TEST(Sqp, SyntheticQuadraticOptimum)
{
    const SqpResult r = sqp_minimize(Quadratic{}, Eigen::VectorXd::Constant(3, 2.0));
    ASSERT_TRUE(r.converged) << r.status;
    EXPECT_NEAR(r.x(0), 1.0 / 3 + 0.25, 1e-8);
    EXPECT_NEAR(r.x(1), 1.0 / 3, 1e-8);
    EXPECT_NEAR(r.x(2), 1.0 / 3 - 0.25, 1e-8);
    EXPECT_LT(r.kkt_residual, 1e-8);
}

TEST(Sqp, CurvedConstraintAndMeritDescent)
{
    Eigen::VectorXd x0(2);
    x0 << -0.8, 0.9;
    const SqpResult r = sqp_minimize(CircleRosenbrock{}, x0);
    ASSERT_TRUE(r.converged) << r.status;
    EXPECT_NEAR(r.x.norm(), 1.0, 1e-10);
    EXPECT_LT(r.kkt_residual, 1e-8);
    ASSERT_FALSE(r.merit.empty());
    for (const MeritStep& m : r.merit)
        EXPECT_LE(m.after, m.before + 1e-14);
}

TEST(Sqp, FiniteDifferenceFallback)
{
    const SqpResult r = sqp_minimize(AlwaysDegenerate{}, Eigen::VectorXd::Constant(3, 2.0));
    EXPECT_TRUE(r.converged) << r.status;
    EXPECT_GT(r.fd_gradients, 0);
    EXPECT_NEAR(r.x(1), 1.0 / 3, 1e-6);
}

TEST(Sqp, IterationCapReportsNonConvergence)
{
    SqpOptions o;
    o.max_iterations = 1;
    Eigen::VectorXd x0(2);
    x0 << -0.8, 0.9;
    const SqpResult r = sqp_minimize(CircleRosenbrock{}, x0, o);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.status, "iteration limit");
}
