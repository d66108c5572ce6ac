#include "test_util.hpp"

#include <filesystem>
#include <sstream>

using namespace qtd;
using namespace qtd_test;

TEST(Io, NumberFormatting)
{
    EXPECT_EQ(format_number(0.1), "0.10000000000000001");
    EXPECT_EQ(format_number(1.0), "1");
    EXPECT_EQ(format_number(std::nan("")), "nan");
    EXPECT_EQ(format_number(-INFINITY), "-inf");
    EXPECT_EQ(std::stod(format_number(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Io, StateRoundTrip)
{
    const FockVector psi(random_complex(8));
    const json doc = state_to_json(psi);
    EXPECT_EQ(doc["dim"], 8);
    const FockVector back = state_from_json(json::parse(doc.dump()));
    EXPECT_EQ(back.coeffs(), psi.coeffs());
    EXPECT_NEAR(back.coeffs().norm(), 1.0, 1e-12);
}

TEST(Io, DensityRoundTripRowMajor)
{
    const DensityMatrix rho(random_density(4));
    const json doc = density_to_json(rho);
    EXPECT_EQ(doc["entries"].size(), 16u);
    EXPECT_EQ(doc["entries"][1][0].get<double>(), rho(0, 1).real());
    const DensityMatrix back = density_from_json(doc);
    EXPECT_EQ(back.matrix(), rho.matrix());
}

TEST(Io, MalformedDocumentsNameTheLocation)
{
    const auto msg = [](const json& doc) {
        try {
            state_from_json(doc);
        } catch (const IoError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(msg(json::parse(R"({"dim": 2, "coeffs": [[1, 0], [0]]})")).find("coeffs[1]"), std::string::npos);
    EXPECT_NE(msg(json::parse(R"({"dim": 3, "coeffs": [[1, 0]]})")).find("dim is 3"), std::string::npos);
    EXPECT_NE(msg(json::parse(R"({"coeffs": []})")).find("dim"), std::string::npos);
    EXPECT_NE(msg(json::parse(R"({"dim": 1, "coeffs": [[0, 0]]})")).find("zero"), std::string::npos);
    EXPECT_THROW(density_from_json(json::parse(R"({"dim": 2, "entries": [1, 0, 0]})")), IoError);
}

TEST(Io, SweepCsvHeaderMatchesRecordFields)
{
    SweepRecord r;
    r.r = 0.5;
    r.converged = true;
    r.iterations = 7;
    const std::string csv = sweep_csv({r});
    std::istringstream in(csv);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(header, "r,n_env,n_bar,p_err_coh,p_err_opt,qa_db,fidelity_to_coherent,photon_variance,phase_fwhm,"
                      "coherence_value,sd_ratio_n,sd_ratio_phi,coherence_ratio,iterations,converged");
    EXPECT_EQ(row.substr(0, 4), "0.5,");
    EXPECT_EQ(row.substr(row.size() - 7), ",7,true");
    EXPECT_EQ(csv.find('\r'), std::string::npos);
}

TEST(Io, TablesCarryMetadata)
{
    const std::string w = wigner_table(wigner(DensityMatrix(FockVector::number_state(0, 3)), linspace(-1, 1, 3), linspace(-1, 1, 2)));
    EXPECT_EQ(w.rfind("# convention: ", 0), 0u);
    EXPECT_NE(w.find("x,p,w\n"), std::string::npos);
    const std::string p = phase_table(uniform_phase_distribution(64), {{"state", "uniform"}});
    EXPECT_EQ(p.rfind("# state: uniform\nphi,prob\n", 0), 0u);
}

TEST(Io, FilesRoundTrip)
{
    const auto dir = std::filesystem::temp_directory_path() / "qtd_io_test";
    std::filesystem::remove_all(dir);
    const FockVector psi(random_real(5));
    write_json_file(dir / "nested" / "state.json", state_to_json(psi));
    EXPECT_EQ(state_from_json(read_json_file(dir / "nested" / "state.json")).coeffs(), psi.coeffs());
    EXPECT_THROW(read_json_file(dir / "missing.json"), IoError);
    write_text_file(dir / "bad.json", "{not json");
    EXPECT_THROW(read_json_file(dir / "bad.json"), IoError);
    std::filesystem::remove_all(dir);
}
