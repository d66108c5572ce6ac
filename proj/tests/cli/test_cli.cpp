// End-to-end checks of the qtd binary: exit codes, artifacts and their
// contents. QTD_BINARY and QTD_SCRATCH are injected by the build.
#include <gtest/gtest.h>
#include <qtd/qtd.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path scratch = QTD_SCRATCH;

fs::path fresh_dir(const std::string& name)
{
    const fs::path d = scratch / name;
    fs::remove_all(d);
    fs::create_directories(d.parent_path());
    return d;
}

// Runs qtd with the given arguments, logging output next to the case dir.
int run_qtd(const std::string& args, const std::string& log_name = "last")
{
    fs::create_directories(scratch);
    const std::string cmd =
        std::string(QTD_BINARY) + " " + args + " > " + (scratch / (log_name + ".log")).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

} // namespace

TEST(Cli, OptimizeHighReflectivityGivesSinglePhoton)
{
    const fs::path out = fresh_dir("optimize_fock");
    ASSERT_EQ(run_qtd("optimize --r 0.99 --n-env 0 --n-bar 1 --out " + out.string()), 0);
    const qtd::FockVector psi = qtd::state_from_json(qtd::read_json_file(out / "state.json"));
    EXPECT_GE(std::norm(psi[1]), 0.99);
    EXPECT_NEAR(psi.coeffs().squaredNorm(), 1.0, 1e-10);
    EXPECT_NEAR(qtd::mean_photon(psi), 1.0, 1e-8);
    const json s = load(out / "summary.json");
    EXPECT_TRUE(s["converged"].get<bool>());
    EXPECT_GT(s["qa_db"].get<double>(), 0.0);
}

TEST(Cli, ZeroReflectivitySummary)
{
    const fs::path out = fresh_dir("optimize_flat");
    ASSERT_EQ(run_qtd("optimize --r 0 --n-bar 1 --hypotheses true --out " + out.string()), 0);
    const json s = load(out / "summary.json");
    EXPECT_EQ(s["p_err"].get<double>(), 0.5);
    EXPECT_EQ(s["qa_db"].get<double>(), 0.0);
    const qtd::DensityMatrix rho0 = qtd::density_from_json(qtd::read_json_file(out / "rho0.json"));
    const qtd::DensityMatrix rho1 = qtd::density_from_json(qtd::read_json_file(out / "rho1.json"));
    EXPECT_LT((rho0.matrix() - rho1.matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Cli, SameSeedGivesByteIdenticalArtifacts)
{
    const std::string args = "sweep --r-grid 0.2,0.5,0.8 --n-env 0.1 --n-bar 0.04 --seed 7 ";
    const fs::path a = fresh_dir("determinism/a"), b = fresh_dir("determinism/b"), c = fresh_dir("determinism/c");
    ASSERT_EQ(run_qtd(args + "--workers 1 --out " + a.string()), 0);
    ASSERT_EQ(run_qtd(args + "--workers 1 --out " + b.string()), 0);
    ASSERT_EQ(run_qtd(args + "--workers 3 --out " + c.string()), 0);
    for (const char* f : {"sweep.csv", "sweep_states.json"}) {
        const std::string ref = slurp(a / f);
        EXPECT_FALSE(ref.empty());
        EXPECT_EQ(slurp(b / f), ref) << f;
        EXPECT_EQ(slurp(c / f), ref) << f;
    }
    const fs::path o1 = fresh_dir("determinism/o1"), o2 = fresh_dir("determinism/o2");
    ASSERT_EQ(run_qtd("optimize --r 0.4 --n-env 0.2 --n-bar 0.04 --seed 11 --out " + o1.string()), 0);
    ASSERT_EQ(run_qtd("optimize --r 0.4 --n-env 0.2 --n-bar 0.04 --seed 11 --out " + o2.string()), 0);
    EXPECT_EQ(slurp(o1 / "state.json"), slurp(o2 / "state.json"));
    EXPECT_EQ(slurp(o1 / "summary.json"), slurp(o2 / "summary.json"));
}

TEST(Cli, SweepTablesFollowTheRecordSchema)
{
    const fs::path out = fresh_dir("sweep_schema");
    ASSERT_EQ(run_qtd("sweep --r-grid lin:0.3:0.7:3 --n-env 0.04,0.2 --n-bar 0.04 --out " + out.string()), 0);
    std::string header;
    for (const char* f : {"sweep_nenv0.04.csv", "sweep_nenv0.2.csv"}) {
        std::istringstream in(slurp(out / f));
        std::getline(in, header);
        std::string expected;
        for (const std::string& col : qtd::sweep_columns())
            expected += (expected.empty() ? "" : ",") + col;
        EXPECT_EQ(header, expected);
        int rows = 0;
        for (std::string line; std::getline(in, line);)
            ++rows;
        EXPECT_EQ(rows, 3);
    }
    EXPECT_EQ(load(out / "sweep_states_nenv0.2.json")["points"].size(), 3u);
}

TEST(Cli, EmptyGridIsAConfigErrorAndWritesNothing)
{
    const fs::path out = fresh_dir("sweep_empty");
    EXPECT_EQ(run_qtd("sweep --r-grid list: --out " + out.string()), 2);
    EXPECT_EQ(run_qtd("sweep --r-grid lin:0.1:0.5:0 --out " + out.string()), 2);
    EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, AnalyzeReportsPhotonAndPhaseFigures)
{
    const fs::path out = fresh_dir("analyze_pnss");
    ASSERT_EQ(run_qtd("analyze pnss:1.25 --out " + out.string()), 0);
    EXPECT_NEAR(load(out / "analysis.json")["photon_variance"].get<double>(), 0.1875, 1e-12);
    ASSERT_EQ(run_qtd("analyze fock:1 --out " + out.string()), 0);
    const json a = load(out / "analysis.json");
    EXPECT_EQ(a["coherence"].get<double>(), 0.0);
    EXPECT_NEAR(a["phase_fwhm"].get<double>(), 2 * M_PI, 1e-12);
    EXPECT_TRUE(fs::exists(out / "phase.csv"));
    EXPECT_TRUE(fs::exists(out / "phase_coherent.csv"));
}

TEST(Cli, AnalyzeNoisyOptimumIsMoreCoherent)
{
    const fs::path opt = fresh_dir("analyze_noisy/opt"), an = fresh_dir("analyze_noisy/an");
    ASSERT_EQ(run_qtd("optimize --r 0.2 --n-env 0.2 --n-bar 0.04 --out " + opt.string()), 0);
    ASSERT_EQ(run_qtd("analyze " + (opt / "state.json").string() + " --out " + an.string()), 0);
    EXPECT_GT(load(an / "analysis.json")["coherence_ratio"].get<double>(), 1.0);
}

TEST(Cli, WignerTables)
{
    const auto read = [](const fs::path& p) {
        std::istringstream in(slurp(p));
        std::string line;
        double w00 = NAN, wmax = -1, sum = 0;
        while (std::getline(in, line) && line != "x,p,w") {
        }
        while (std::getline(in, line)) {
            double x, pp, w;
            char c1, c2;
            std::istringstream row(line);
            row >> x >> c1 >> pp >> c2 >> w;
            if (x == 0.0 && pp == 0.0)
                w00 = w;
            wmax = std::max(wmax, w);
            sum += w;
        }
        return std::tuple{w00, wmax, sum * 0.05 * 0.05};
    };
    const fs::path out = fresh_dir("wigner_fock");
    ASSERT_EQ(run_qtd("wigner vacuum --out " + out.string()), 0);
    const auto [v00, vmax, vint] = read(out / "wigner.csv");
    EXPECT_NEAR(vmax, 1 / M_PI, 1e-12);
    EXPECT_NEAR(v00, 1 / M_PI, 1e-12);
    EXPECT_NEAR(vint, 1.0, 1e-2);
    ASSERT_EQ(run_qtd("wigner fock:1 --out " + out.string()), 0);
    const auto [f00, fmax, fint] = read(out / "wigner.csv");
    EXPECT_NEAR(f00, -1 / M_PI, 1e-12);
    EXPECT_NEAR(fint, 1.0, 1e-2);
}

TEST(Cli, ValidatePassesAndRejectsBadReflectivity)
{
    const fs::path out = fresh_dir("validate");
    ASSERT_EQ(run_qtd("validate --out " + out.string()), 0);
    const json rep = load(out / "validation.json");
    for (const json& s : rep["suites"])
        EXPECT_TRUE(s["passed"].get<bool>()) << s["suite"];
    EXPECT_LE(rep["suites"][0]["max_deviation"].get<double>(), 1e-10);
    EXPECT_EQ(run_qtd("validate --r 1.5 --out " + out.string()), 2);
}

TEST(Cli, BadInputsMapToExitCodes)
{
    const fs::path dir = fresh_dir("bad_config");
    fs::create_directories(dir);
    {
        std::ofstream(dir / "typo.cfg") << "[channel]\nrr = 0.5\n";
        std::ofstream(dir / "wrong_section.cfg") << "[probe]\nr = 0.5\n";
        std::ofstream(dir / "bad.json") << R"({"dim": 2, "coeffs": [[1, 0], [0]]})";
    }
    EXPECT_EQ(run_qtd("sweep --config " + (dir / "typo.cfg").string(), "typo"), 2);
    EXPECT_EQ(run_qtd("sweep --config " + (dir / "wrong_section.cfg").string(), "section"), 2);
    EXPECT_EQ(run_qtd("sweep --config " + (dir / "missing.cfg").string()), 2);
    EXPECT_EQ(run_qtd("optimize --n-bar 1 --out " + dir.string()), 2);       // no r
    EXPECT_EQ(run_qtd("optimize --r 0.5 --n-bar 9 --out " + dir.string()), 2); // above dim - 1
    EXPECT_EQ(run_qtd("optimize --r 0.5 --objective xx --out " + dir.string()), 2);
    EXPECT_EQ(run_qtd("analyze " + (dir / "bad.json").string() + " --out " + dir.string(), "bad_json"), 4);
    EXPECT_NE(slurp(scratch / "bad_json.log").find("coeffs[1]"), std::string::npos);
    EXPECT_EQ(run_qtd("analyze " + (dir / "none.json").string() + " --out " + dir.string()), 4);
    EXPECT_EQ(run_qtd("frobnicate"), 2);
}

TEST(Cli, FlagsOverrideConfigAndEnvironmentSetsOutput)
{
    const fs::path dir = fresh_dir("override");
    fs::create_directories(dir);
    std::ofstream(dir / "run.cfg") << "[channel]\nr = 0.5\n[probe]\nn_bar = 0.5\n[output]\ndir = " << (dir / "cfg").string()
                                   << "\n";
    ASSERT_EQ(run_qtd("optimize --config " + (dir / "run.cfg").string() + " --n-bar 1"), 0);
    EXPECT_EQ(load(dir / "cfg" / "summary.json")["n_bar"].get<double>(), 1.0);
    EXPECT_EQ(load(dir / "cfg" / "summary.json")["r"].get<double>(), 0.5);

    ::setenv("QTD_OUTPUT_DIR", (dir / "env").string().c_str(), 1);
    const int code = run_qtd("optimize --r 0.3 --n-bar 0.5");
    ::unsetenv("QTD_OUTPUT_DIR");
    ASSERT_EQ(code, 0);
    EXPECT_TRUE(fs::exists(dir / "env" / "state.json"));
}
