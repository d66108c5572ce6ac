#pragma once
// Artifact formats.
//   state:   {"dim": d, "coeffs": [[re, im], ...]}
//   density: {"dim": d, "entries": [[re, im], ...]}  (row major)
//   tables:  CSV, 17 significant digits, '\n' line endings; optional
//            leading "# key: value" metadata lines.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "fock.hpp"
#include "optimize.hpp"
#include "phase.hpp"
#include "wigner.hpp"

namespace qtd {

using json = nlohmann::json;

/// "%.17g"; non-finite values print as nan, inf, -inf.
inline std::string format_number(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// JSON documents

namespace detail {

inline json complex_list(const cplx* data, Eigen::Index n)
{
    json arr = json::array();
    for (Eigen::Index i = 0; i < n; ++i)
        arr.push_back({data[i].real(), data[i].imag()});
    return arr;
}

inline cplx parse_complex(const json& v, const std::string& where)
{
    if (v.is_number())
        return v.get<double>();
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw IoError(where + ": expected [re, im]");
    return {v[0].get<double>(), v[1].get<double>()};
}

inline int parse_dim(const json& doc, const std::string& what)
{
    if (!doc.is_object())
        throw IoError(what + ": document is not an object");
    if (!doc.contains("dim") || !doc["dim"].is_number_integer() || doc["dim"].get<long long>() < 1)
        throw IoError(what + ": 'dim' must be a positive integer");
    return doc["dim"].get<int>();
}

} // namespace detail

inline json state_to_json(const FockVector& psi)
{
    return {{"dim", psi.dim()}, {"coeffs", detail::complex_list(psi.coeffs().data(), psi.dim())}};
}

/// Rejects malformed documents with the offending location in the message.
inline FockVector state_from_json(const json& doc)
{
    const int d = detail::parse_dim(doc, "state");
    if (!doc.contains("coeffs") || !doc["coeffs"].is_array())
        throw IoError("state: missing 'coeffs' array");
    const json& arr = doc["coeffs"];
    if (static_cast<int>(arr.size()) != d)
        throw IoError("state: 'coeffs' has " + std::to_string(arr.size()) + " entries, dim is " + std::to_string(d));
    Eigen::VectorXcd c(d);
    for (int n = 0; n < d; ++n)
        c(n) = detail::parse_complex(arr[n], "state: coeffs[" + std::to_string(n) + "]");
    const double norm = c.norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
        throw IoError("state: coefficients are zero or not finite");
    if (std::abs(norm - 1.0) > 1e-6)
        warn("state document not normalized (norm " + detail::str(norm) + "); renormalizing");
    return FockVector(std::move(c));
}

inline json density_to_json(const Eigen::MatrixXcd& rho)
{
    const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = rho;
    return {{"dim", rho.rows()}, {"entries", detail::complex_list(rm.data(), rm.size())}};
}

inline json density_to_json(const DensityMatrix& rho) { return density_to_json(rho.matrix()); }

inline DensityMatrix density_from_json(const json& doc)
{
    const int d = detail::parse_dim(doc, "density");
    if (!doc.contains("entries") || !doc["entries"].is_array())
        throw IoError("density: missing 'entries' array");
    const json& arr = doc["entries"];
    if (arr.size() != static_cast<std::size_t>(d) * d)
        throw IoError("density: 'entries' needs dim*dim = " + std::to_string(d * d) + " values");
    Eigen::MatrixXcd m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            m(i, j) = detail::parse_complex(arr[i * d + j], "density: entries[" + std::to_string(i * d + j) + "]");
    try {
        return DensityMatrix(m);
    } catch (const InvalidArgument& e) {
        throw IoError(std::string("density: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Tables

using Metadata = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline void write_metadata(std::ostringstream& os, const Metadata& meta)
{
    for (const auto& [k, v] : meta)
        os << "# " << k << ": " << v << '\n';
}

} // namespace detail

inline std::string sweep_csv(const std::vector<SweepRecord>& rows)
{
    std::ostringstream os;
    const auto& cols = sweep_columns();
    for (std::size_t i = 0; i < cols.size(); ++i)
        os << (i ? "," : "") << cols[i];
    os << '\n';
    for (const auto& r : rows) {
        const double vals[] = {r.r,          r.n_env,        r.n_bar,           r.p_err_coh,  r.p_err_opt,
                               r.qa_db,      r.fidelity_to_coherent, r.photon_variance, r.phase_fwhm, r.coherence_value,
                               r.sd_ratio_n, r.sd_ratio_phi, r.coherence_ratio};
        for (double v : vals)
            os << format_number(v) << ',';
        os << r.iterations << ',' << (r.converged ? "true" : "false") << '\n';
    }
    return os.str();
}

inline std::string phase_table(const PhaseDistribution& p, const Metadata& meta = {})
{
    std::ostringstream os;
    detail::write_metadata(os, meta);
    os << "phi,prob\n";
    for (int k = 0; k < p.size(); ++k)
        os << format_number(p.phi(k)) << ',' << format_number(p.prob(k)) << '\n';
    return os.str();
}

/// Long format, one row per grid point, x varying slowest.
inline std::string wigner_table(const WignerGrid& w, Metadata meta = {})
{
    meta.insert(meta.begin(), {"convention", wigner_convention});
    meta.emplace_back("x_points", std::to_string(w.x_axis.size()));
    meta.emplace_back("p_points", std::to_string(w.p_axis.size()));
    std::ostringstream os;
    detail::write_metadata(os, meta);
    os << "x,p,w\n";
    for (Eigen::Index i = 0; i < w.x_axis.size(); ++i)
        for (Eigen::Index j = 0; j < w.p_axis.size(); ++j)
            os << format_number(w.x_axis(i)) << ',' << format_number(w.p_axis(j)) << ','
               << format_number(w.values(i, j)) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Files

inline void write_text_file(const std::filesystem::path& path, const std::string& content)
{
    std::error_code ec;
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    out << content;
    out.flush();
    if (!out)
        throw IoError("write to '" + path.string() + "' failed");
}

inline void write_json_file(const std::filesystem::path& path, const json& doc)
{
    write_text_file(path, doc.dump(2) + '\n');
}

inline json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

} // namespace qtd
