// qtd: command-line front end for probe optimization experiments.
//
//   qtd optimize --r 0.99 --n-bar 1
//   qtd sweep --config presets/fig2.cfg --workers 4
//   qtd analyze pnss:1.25 --r 0.5 --n-env 0.1
//   qtd wigner out/state.json
//   qtd validate
//
// Settings come from an INI file (--config) and are overridden by flags.
// Exit status: 0 ok, 1 internal error, 2 configuration error, 3 an
// optimization did not converge, 4 I/O error, 5 validation failure.

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <qtd/qtd.hpp>

#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qtd;

namespace {

enum Exit { ok = 0, internal = 1, config_error = 2, not_converged = 3, io_error = 4, validation_failed = 5 };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Settings

struct RunConfig {
    std::optional<double> r;
    std::optional<std::vector<double>> r_grid;
    std::vector<double> n_env{0.0};
    std::vector<double> n_bar{1.0};
    std::vector<Objective> objectives{Objective::helstrom_dm};
    int dim = default_dim;
    double prior = 0.5;
    Parameterization param = Parameterization::real;
    int phase_grid = default_phase_grid;
    int restarts = 8;
    std::uint64_t seed = 0;
    int workers = 0;
    bool warm_start = true;
    int max_iterations = 500;
    std::string out;
    bool hypotheses = false;
    std::string wigner_x = "-5:5:201";
    std::string wigner_p = "-5:5:201";
    std::string state;
};

std::string trim(std::string s)
{
    const auto ws = " \t\r\n";
    s.erase(0, s.find_first_not_of(ws));
    s.erase(s.find_last_not_of(ws) + 1);
    return s;
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
        parts.push_back(trim(cur));
    if (!s.empty() && s.back() == sep)
        parts.emplace_back();
    return parts;
}

double parse_double(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || end != t.data() + t.size() || !std::isfinite(v))
        throw ConfigError(key + ": expected a number, got '" + text + "'");
    return v;
}

long long parse_int(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    long long v = 0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || end != t.data() + t.size())
        throw ConfigError(key + ": expected an integer, got '" + text + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on")
        return true;
    if (t == "false" || t == "0" || t == "no" || t == "off")
        return false;
    throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& text)
{
    std::vector<double> v;
    if (trim(text).empty())
        return v;
    for (const std::string& item : split(text, ','))
        v.push_back(parse_double(key, item));
    return v;
}

/// "default", "lin:lo:hi:n", "log:lo:hi:n", "list:a,b,c" or plain "a,b,c".
std::vector<double> parse_grid(const std::string& key, const std::string& spec)
{
    const std::string s = trim(spec);
    if (s == "default")
        return default_reflectivity_grid();
    const auto colon = s.find(':');
    const std::string kind = colon == std::string::npos ? "list" : s.substr(0, colon);
    const std::string rest = colon == std::string::npos ? s : s.substr(colon + 1);
    if (kind == "list")
        return parse_list(key, rest);
    if (kind != "lin" && kind != "log")
        throw ConfigError(key + ": unknown grid kind '" + kind + "' (use lin, log, list or default)");
    const std::vector<std::string> f = split(rest, ':');
    if (f.size() != 3)
        throw ConfigError(key + ": expected " + kind + ":lo:hi:n");
    const double lo = parse_double(key, f[0]), hi = parse_double(key, f[1]);
    const long long n = parse_int(key, f[2]);
    if (n < 0)
        throw ConfigError(key + ": point count must be >= 0");
    if (kind == "log" && !(lo > 0.0 && hi > 0.0))
        throw ConfigError(key + ": log grid bounds must be positive");
    std::vector<double> g;
    for (long long i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.0 : double(i) / double(n - 1);
        g.push_back(kind == "lin" ? lo + (hi - lo) * t : std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * t));
    }
    if (n >= 2)
        g.back() = hi; // exact endpoint
    return g;
}

Objective parse_objective_key(const std::string& key, const std::string& text)
{
    try {
        return parse_objective(trim(text));
    } catch (const InvalidArgument&) {
        throw ConfigError(key + ": objective must be dm, ps or po, got '" + text + "'");
    }
}

// Each setting lives in one INI section; flags use the same names with
// dashes.
const std::map<std::string, std::string> setting_sections{
    {"r", "channel"},         {"r_grid", "channel"},   {"n_env", "channel"},   {"dim", "channel"},
    {"n_bar", "probe"},       {"objective", "probe"},  {"prior", "probe"},     {"param", "probe"},
    {"phase_grid", "probe"},  {"restarts", "solver"},  {"seed", "solver"},     {"workers", "solver"},
    {"warm_start", "solver"}, {"max_iterations", "solver"}, {"dir", "output"}, {"hypotheses", "output"},
    {"x", "wigner"},          {"p", "wigner"},         {"state", "input"},
};

void apply_setting(RunConfig& c, const std::string& key, const std::string& value)
{
    if (key == "r")
        c.r = parse_double(key, value);
    else if (key == "r_grid")
        c.r_grid = parse_grid(key, value);
    else if (key == "n_env")
        c.n_env = parse_list(key, value);
    else if (key == "n_bar")
        c.n_bar = parse_list(key, value);
    else if (key == "objective") {
        c.objectives.clear();
        for (const std::string& o : split(value, ','))
            c.objectives.push_back(parse_objective_key(key, o));
    } else if (key == "dim")
        c.dim = static_cast<int>(parse_int(key, value));
    else if (key == "prior")
        c.prior = parse_double(key, value);
    else if (key == "param") {
        const std::string v = trim(value);
        if (v != "real" && v != "complex")
            throw ConfigError("param: expected real or complex, got '" + value + "'");
        c.param = v == "real" ? Parameterization::real : Parameterization::complex;
    } else if (key == "phase_grid")
        c.phase_grid = static_cast<int>(parse_int(key, value));
    else if (key == "restarts")
        c.restarts = static_cast<int>(parse_int(key, value));
    else if (key == "seed") {
        const std::string t = trim(value);
        std::uint64_t v = 0;
        const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (t.empty() || ec != std::errc() || end != t.data() + t.size())
            throw ConfigError("seed: expected an unsigned 64-bit integer, got '" + value + "'");
        c.seed = v;
    } else if (key == "workers")
        c.workers = static_cast<int>(parse_int(key, value));
    else if (key == "warm_start")
        c.warm_start = parse_bool(key, value);
    else if (key == "max_iterations")
        c.max_iterations = static_cast<int>(parse_int(key, value));
    else if (key == "dir")
        c.out = trim(value);
    else if (key == "hypotheses")
        c.hypotheses = parse_bool(key, value);
    else if (key == "x")
        c.wigner_x = value;
    else if (key == "p")
        c.wigner_p = value;
    else if (key == "state")
        c.state = trim(value);
    else
        throw ConfigError("unknown setting '" + key + "'");
}

void load_ini(RunConfig& c, const std::string& path)
{
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty())
            throw ConfigError("config " + path + ": key '" + section + "' outside a section");
        for (const auto& [key, node] : body) {
            const auto it = setting_sections.find(key);
            if (it == setting_sections.end() || it->second != section)
                throw ConfigError("config " + path + ": unknown setting [" + section + "] " + key);
            apply_setting(c, key, node.get_value<std::string>());
        }
    }
}

void validate(const RunConfig& c)
{
    const auto need = [](bool ok, const std::string& msg) {
        if (!ok)
            throw ConfigError(msg);
    };
    need(c.dim >= 2 && c.dim <= 64, "dim must lie in [2, 64]");
    if (c.r)
        need(*c.r >= 0.0 && *c.r <= 1.0, "r must lie in [0, 1], got " + format_number(*c.r));
    if (c.r_grid) {
        need(!c.r_grid->empty(), "r_grid is empty");
        for (std::size_t i = 0; i < c.r_grid->size(); ++i) {
            const double r = (*c.r_grid)[i];
            need(r >= 0.0 && r <= 1.0, "r_grid: value " + format_number(r) + " outside [0, 1]");
            need(i == 0 || r >= (*c.r_grid)[i - 1], "r_grid must be nondecreasing");
        }
    }
    need(!c.n_env.empty(), "n_env is empty");
    for (double v : c.n_env)
        need(v >= 0.0, "n_env must be >= 0, got " + format_number(v));
    need(!c.n_bar.empty(), "n_bar is empty");
    for (double v : c.n_bar)
        need(v >= 0.0 && v <= c.dim - 1.0, "n_bar must lie in [0, dim - 1], got " + format_number(v));
    need(!c.objectives.empty(), "objective is empty");
    need(c.prior >= 0.0 && c.prior <= 1.0, "prior must lie in [0, 1]");
    need(c.phase_grid >= min_phase_grid, "phase_grid must be >= 64");
    need(c.restarts >= 0, "restarts must be >= 0");
    need(c.workers >= 0, "workers must be >= 0");
    need(c.max_iterations >= 1, "max_iterations must be >= 1");
}

fs::path output_dir(const RunConfig& c)
{
    if (!c.out.empty())
        return c.out;
    if (const char* env = std::getenv("QTD_OUTPUT_DIR"); env && *env)
        return env;
    return "qtd_out";
}

// ---------------------------------------------------------------------------
// Warnings: the first of each kind is printed (kinds differ in wording, not
// in the numbers they quote); the rest are only counted.

class WarningLog {
public:
    void operator()(const std::string& msg)
    {
        std::lock_guard lock(m_);
        if (kinds_.insert(kind(msg)).second)
            std::cerr << "qtd: warning: " << msg << '\n';
        else
            ++repeats_;
    }
    ~WarningLog()
    {
        if (repeats_)
            std::cerr << "qtd: " << repeats_ << " similar warning(s) suppressed\n";
    }

private:
    static std::string kind(const std::string& msg)
    {
        std::string k;
        for (char ch : msg) {
            const bool numeric = std::isdigit(static_cast<unsigned char>(ch)) || ch == '.' || ch == 'e' || ch == '-' || ch == '+';
            if (!numeric)
                k += ch;
            else if (k.empty() || k.back() != '#')
                k += '#';
        }
        return k;
    }

    std::mutex m_;
    std::set<std::string> kinds_;
    long repeats_ = 0;
};

// ---------------------------------------------------------------------------
// Shared helpers

std::string tag_number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

struct Case {
    Objective objective;
    double n_bar, n_env;
    std::string suffix; ///< "" for a single case, else "_dm_nbar1.25" etc.
};

std::vector<Case> expand_cases(const RunConfig& c)
{
    std::vector<Case> out;
    for (Objective o : c.objectives)
        for (double nb : c.n_bar)
            for (double ne : c.n_env) {
                std::string s;
                if (c.objectives.size() > 1)
                    s += "_" + to_string(o);
                if (c.n_bar.size() > 1)
                    s += "_nbar" + tag_number(nb);
                if (c.n_env.size() > 1)
                    s += "_nenv" + tag_number(ne);
                out.push_back({o, nb, ne, s});
            }
    return out;
}

OptimizationProblem make_problem(const RunConfig& c, const Case& k, double r)
{
    OptimizationProblem p;
    p.objective = k.objective;
    p.config.r = r;
    p.config.n_env = k.n_env;
    p.config.dim_probe = c.dim;
    p.n_target = k.n_bar;
    p.p0 = c.prior;
    p.param = c.param;
    p.phase_grid = c.phase_grid;
    return p;
}

OptimizerOptions make_optimizer(const RunConfig& c)
{
    OptimizerOptions o;
    o.restarts = c.restarts;
    o.seed = c.seed;
    o.sqp.max_iterations = c.max_iterations;
    return o;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json record_json(const SweepRecord& r)
{
    return {{"r", number(r.r)},
            {"n_env", number(r.n_env)},
            {"n_bar", number(r.n_bar)},
            {"p_err_coh", number(r.p_err_coh)},
            {"p_err_opt", number(r.p_err_opt)},
            {"qa_db", r.qa_db == INFINITY ? json("inf") : number(r.qa_db)},
            {"fidelity_to_coherent", number(r.fidelity_to_coherent)},
            {"photon_variance", number(r.photon_variance)},
            {"phase_fwhm", number(r.phase_fwhm)},
            {"coherence_value", number(r.coherence_value)},
            {"sd_ratio_n", number(r.sd_ratio_n)},
            {"sd_ratio_phi", number(r.sd_ratio_phi)},
            {"coherence_ratio", number(r.coherence_ratio)},
            {"iterations", r.iterations},
            {"converged", r.converged}};
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// A state file path, or pnss:N, coherent:N, fock:K, vacuum.
std::pair<FockVector, std::string> load_state(const RunConfig& c)
{
    if (c.state.empty())
        throw ConfigError("a state is required (file path, pnss:N, coherent:N, fock:K or vacuum)");
    const std::string& s = c.state;
    const auto colon = s.find(':');
    const std::string kind = s.substr(0, colon);
    if (s == "vacuum")
        return {FockVector::number_state(0, c.dim), s};
    if (colon != std::string::npos && (kind == "pnss" || kind == "coherent" || kind == "fock")) {
        const std::string arg = s.substr(colon + 1);
        if (kind == "fock") {
            const long long n = parse_int("state", arg);
            if (n < 0 || n >= c.dim)
                throw ConfigError("state: fock level must lie in [0, dim - 1]");
            return {FockVector::number_state(static_cast<int>(n), c.dim), s};
        }
        const double n = parse_double("state", arg);
        try {
            return {kind == "pnss" ? pnss(n, c.dim) : coherent_coefficients(n, c.dim), s};
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string("state: ") + e.what());
        }
    }
    return {state_from_json(read_json_file(s)), fs::path(s).filename().string()};
}

Eigen::VectorXd parse_axis(const std::string& key, const std::string& spec)
{
    const std::vector<std::string> f = split(spec, ':');
    if (f.size() != 3)
        throw ConfigError(key + ": expected lo:hi:n, got '" + spec + "'");
    const double lo = parse_double(key, f[0]), hi = parse_double(key, f[1]);
    const long long n = parse_int(key, f[2]);
    if (n < 1 || n > 100000 || !(hi >= lo))
        throw ConfigError(key + ": need 1 <= n <= 100000 and hi >= lo");
    return linspace(lo, hi, static_cast<int>(n));
}

// ---------------------------------------------------------------------------
// Commands

int cmd_optimize(const RunConfig& c)
{
    if (!c.r)
        throw ConfigError("optimize: r is required (--r or [channel] r)");
    const fs::path dir = output_dir(c);
    bool all_converged = true;
    for (const Case& k : expand_cases(c)) {
        const auto t0 = std::chrono::steady_clock::now();
        const OptimizationProblem p = make_problem(c, k, *c.r);
        p.validate();
        const OptimizationResult res = optimize_probe(p, make_optimizer(c));
        const SweepRecord rec = make_record(p, res);

        json summary = {{"objective", to_string(k.objective)},
                        {"prior", c.prior},
                        {"dim", c.dim},
                        {"parameterization", c.param == Parameterization::real ? "real" : "complex"},
                        {"seed", c.seed},
                        {"restarts", c.restarts},
                        {"objective_value", number(res.objective_value)},
                        {"p_err", number(res.p_err)},
                        {"kkt_residual", number(res.kkt_residual)},
                        {"starts_run", res.restarts_used},
                        {"starts_converged", res.starts_converged},
                        {"status", res.status}};
        summary.update(record_json(rec));
        write_json_file(dir / ("state" + k.suffix + ".json"), state_to_json(res.state));
        write_json_file(dir / ("summary" + k.suffix + ".json"), summary);
        if (c.hypotheses) {
            const Hypotheses h = hypothesis_states(res.state, p.config);
            write_json_file(dir / ("rho0" + k.suffix + ".json"), density_to_json(h.rho0));
            write_json_file(dir / ("rho1" + k.suffix + ".json"), density_to_json(h.rho1));
        }
        std::printf("optimize %s n_bar=%g n_env=%g r=%g: p_err %.6g (coherent %.6g), qa %.4g dB, %s [%.2f s]\n",
                    to_string(k.objective).c_str(), k.n_bar, k.n_env, *c.r, res.p_err, rec.p_err_coh, rec.qa_db,
                    res.converged ? "converged" : ("NOT converged: " + res.status).c_str(), seconds_since(t0));
        all_converged = all_converged && res.converged;
    }
    std::printf("wrote %s\n", dir.string().c_str());
    return all_converged ? ok : not_converged;
}

int cmd_sweep(const RunConfig& c)
{
    const std::vector<double> grid = c.r_grid ? *c.r_grid : default_reflectivity_grid();
    if (grid.empty())
        throw ConfigError("sweep: empty reflectivity grid");
    const fs::path dir = output_dir(c);
    SweepOptions so;
    so.optimizer = make_optimizer(c);
    so.warm_start = c.warm_start;
    so.workers = c.workers;

    bool all_converged = true;
    for (const Case& k : expand_cases(c)) {
        const auto t0 = std::chrono::steady_clock::now();
        const OptimizationProblem tmpl = make_problem(c, k, 0.0);
        const std::vector<SweepPoint> pts = sweep(grid, tmpl, so);

        std::vector<SweepRecord> rows;
        json points = json::array();
        int converged = 0;
        for (const SweepPoint& pt : pts) {
            rows.push_back(pt.record);
            points.push_back({{"r", pt.record.r},
                              {"converged", pt.record.converged},
                              {"status", pt.status},
                              {"state", pt.state ? state_to_json(*pt.state) : json(nullptr)}});
            converged += pt.record.converged;
        }
        const json sidecar = {{"objective", to_string(k.objective)},
                              {"n_bar", k.n_bar},
                              {"n_env", k.n_env},
                              {"dim", c.dim},
                              {"prior", c.prior},
                              {"seed", c.seed},
                              {"points", points}};
        write_text_file(dir / ("sweep" + k.suffix + ".csv"), sweep_csv(rows));
        write_json_file(dir / ("sweep_states" + k.suffix + ".json"), sidecar);
        std::printf("sweep %s n_bar=%g n_env=%g: %zu points, %d converged [%.1f s]\n", to_string(k.objective).c_str(),
                    k.n_bar, k.n_env, pts.size(), converged, seconds_since(t0));
        all_converged = all_converged && converged == static_cast<int>(pts.size());
    }
    std::printf("wrote %s\n", dir.string().c_str());
    return all_converged ? ok : not_converged;
}

int cmd_analyze(const RunConfig& c)
{
    const auto [psi, label] = load_state(c);
    const fs::path dir = output_dir(c);
    const CoherentComparison cmp = compare_to_coherent(psi, c.phase_grid);
    const Eigen::VectorXd pop = psi.populations();

    json doc = {{"state", label},
                {"dim", psi.dim()},
                {"populations", std::vector<double>(pop.data(), pop.data() + pop.size())},
                {"mean_photon", cmp.mean},
                {"photon_variance", cmp.photon_variance},
                {"phase_fwhm", cmp.phase_fwhm},
                {"coherence", cmp.coherence_value},
                {"coherent_reference",
                 {{"photon_variance", cmp.coherent_variance},
                  {"phase_fwhm", cmp.coherent_fwhm},
                  {"coherence", cmp.coherent_coherence}}},
                {"fidelity_to_coherent", cmp.fidelity_to_coherent},
                {"sd_ratio_n", number(cmp.sd_ratio_n)},
                {"sd_ratio_phi", number(cmp.sd_ratio_phi)},
                {"coherence_ratio", number(cmp.coherence_ratio)}};

    if (c.r) {
        const double ne = c.n_env.front();
        const ChannelConfig cfg{.r = *c.r, .n_env = ne, .dim_probe = psi.dim()};
        const BeamSplitterChannel ch(cfg);
        const FockVector coh = coherent_coefficients(cmp.mean, psi.dim(), reference_tail_mass);
        const double pe = helstrom_error(ch.null_state(), ch.received(psi.coeffs()), c.prior);
        const double pe_coh = helstrom_error(ch.null_state(), ch.received(coh.coeffs()), c.prior);
        const Eigen::VectorXd counts = counting_statistics(pop, *c.r);
        json chan = {{"r", *c.r},
                     {"n_env", ne},
                     {"prior", c.prior},
                     {"counting_statistics", std::vector<double>(counts.data(), counts.data() + counts.size())},
                     {"vacuum_probability", vacuum_probability(pop, *c.r)},
                     {"p_err", pe},
                     {"p_err_coh", pe_coh}};
        if (pe_coh > 0.0) {
            const QuantumAdvantage qa = quantum_advantage(pe_coh, pe);
            chan["qa_db"] = qa.infinite ? json("inf") : json(qa.db);
        }
        doc["channel"] = chan;
    }

    write_json_file(dir / "analysis.json", doc);
    write_text_file(dir / "phase.csv",
                    phase_table(phase_distribution(DensityMatrix(psi), c.phase_grid), {{"state", label}}));
    const FockVector coh = coherent_coefficients(cmp.mean, psi.dim(), reference_tail_mass);
    write_text_file(dir / "phase_coherent.csv",
                    phase_table(phase_distribution(DensityMatrix(coh), c.phase_grid),
                                {{"state", "coherent:" + format_number(cmp.mean)}}));
    std::printf("analyze %s: mean %.6g, variance %.6g, phase fwhm %.6g, coherence %.6g\n", label.c_str(), cmp.mean,
                cmp.photon_variance, cmp.phase_fwhm, cmp.coherence_value);
    std::printf("wrote %s\n", dir.string().c_str());
    return ok;
}

int cmd_wigner(const RunConfig& c)
{
    const auto [psi, label] = load_state(c);
    const Eigen::VectorXd x = parse_axis("wigner x", c.wigner_x), p = parse_axis("wigner p", c.wigner_p);
    const WignerGrid w = wigner(DensityMatrix(psi), x, p);
    const fs::path dir = output_dir(c);
    write_text_file(dir / "wigner.csv", wigner_table(w, {{"state", label}}));
    std::printf("wigner %s: %td x %td grid, min %.6g, max %.6g, integral %.6g\n", label.c_str(), x.size(), p.size(),
                w.values.minCoeff(), w.values.maxCoeff(), w.integral());
    std::printf("wrote %s\n", (dir / "wigner.csv").string().c_str());
    return ok;
}

// Oracle suites; each reports its largest deviation against a tolerance.
struct Suite {
    std::string name;
    int cases = 0;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    bool passed() const { return cases > 0 && max_deviation <= tolerance; }
};

int cmd_validate(const RunConfig& c)
{
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> gauss;
    const auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    const auto reflectivity = [&] { return c.r ? *c.r : uniform(0.0, 1.0); };
    const auto random_vec = [&](int d) {
        Eigen::VectorXcd v(d);
        for (int i = 0; i < d; ++i)
            v(i) = cplx(gauss(rng), gauss(rng));
        return Eigen::VectorXcd(v / v.norm());
    };
    const auto random_density = [&](int d, int rank) {
        Eigen::MatrixXcd g(d, rank);
        for (int k = 0; k < rank; ++k)
            g.col(k) = random_vec(d);
        Eigen::MatrixXcd rho = g * g.adjoint();
        return Eigen::MatrixXcd(rho / rho.trace().real());
    };
    const int dmax = std::max(4, std::min(c.dim, 8));

    std::vector<Suite> suites;

    Suite channel{"channel: process tensor vs sector unitaries", 0, 0.0, 1e-10};
    for (int t = 0; t < 100; ++t, ++channel.cases) {
        const int dp = 4 + t % (dmax - 3);
        const TwoModeDensity in =
            TwoModeDensity::product(random_density(dp, 1 + t % 3), thermal_density(uniform(0, 0.5), dp).matrix());
        const double r = reflectivity();
        const Eigen::MatrixXcd diff = apply_bs_two_mode(in, r).matrix() - apply_bs_tensor(in, r).matrix();
        channel.max_deviation = std::max(channel.max_deviation, diff.cwiseAbs().maxCoeff());
    }
    suites.push_back(channel);

    Suite conserve{"channel: trace and photon-number conservation", 0, 0.0, 1e-10};
    for (int t = 0; t < 50; ++t, ++conserve.cases) {
        const Eigen::VectorXd env = thermal_populations(uniform(0, 0.5), 6);
        const TwoModeDensity in = TwoModeDensity::product(random_density(6, 2), env.cast<cplx>().asDiagonal().toDenseMatrix());
        const TwoModeDensity out = apply_bs_two_mode(in, reflectivity());
        const auto photons = [](const Eigen::MatrixXcd& m) { return mean_photon(DensityMatrix(m, Check::hermitian)); };
        const double dn = photons(out.trace_out_first()) + photons(out.trace_out_second()) -
                          photons(in.trace_out_first()) - photons(in.trace_out_second());
        conserve.max_deviation = std::max({conserve.max_deviation, std::abs(out.trace() - in.trace()), std::abs(dn)});
    }
    suites.push_back(conserve);

    Suite closed{"helstrom: pure-state closed form", 0, 0.0, 1e-10};
    for (int t = 0; t < 200; ++t, ++closed.cases) {
        const FockVector a(random_vec(c.dim)), b(random_vec(c.dim));
        const double p0 = uniform(0, 1), s = std::norm(a.coeffs().dot(b.coeffs()));
        const double want = (1 - std::sqrt(1 - 4 * p0 * (1 - p0) * s)) / 2;
        closed.max_deviation =
            std::max(closed.max_deviation, std::abs(helstrom_error({DensityMatrix(a), DensityMatrix(b), p0}) - want));
    }
    suites.push_back(closed);

    Suite grad{"gradient: analytic vs central differences (relative)", 0, 0.0, 1e-5};
    for (int attempts = 0; grad.cases < 50 && attempts < 1000; ++attempts) {
        const BeamSplitterChannel ch({.r = c.r ? *c.r : uniform(0.05, 0.95), .n_env = uniform(0.0, 0.3), .dim_probe = c.dim});
        Eigen::VectorXd x(c.dim);
        for (int i = 0; i < c.dim; ++i)
            x(i) = gauss(rng);
        x /= x.norm();
        Eigen::VectorXd g;
        try {
            g = error_gradient(ch, x, c.prior);
        } catch (const DegenerateSpectrum&) {
            continue;
        }
        const auto err = [&](Eigen::VectorXd y) {
            y /= y.norm();
            return helstrom_error(ch.null_state(), ch.received(Eigen::VectorXcd(y.cast<cplx>())), c.prior);
        };
        Eigen::VectorXd fd(c.dim);
        const double h = 1e-5;
        for (int i = 0; i < c.dim; ++i) {
            Eigen::VectorXd a = x, b = x;
            a(i) += h;
            b(i) -= h;
            fd(i) = (err(a) - err(b)) / (2 * h);
        }
        grad.max_deviation = std::max(grad.max_deviation, (g - fd).norm() / std::max(fd.norm(), 1e-12));
        ++grad.cases;
    }
    suites.push_back(grad);

    Suite thin{"counting statistics: thinning composes", 0, 0.0, 1e-12};
    for (int t = 0; t < 100; ++t, ++thin.cases) {
        const Eigen::VectorXd p = random_vec(c.dim).cwiseAbs2();
        const double r1 = uniform(0, 1), r2 = uniform(0, 1);
        const Eigen::VectorXd once = counting_statistics(p, r1 * r2);
        const Eigen::VectorXd twice = counting_statistics(counting_statistics(p, r1), r2);
        thin.max_deviation = std::max({thin.max_deviation, (once - twice).cwiseAbs().maxCoeff(), std::abs(once.sum() - 1.0)});
    }
    suites.push_back(thin);

    json report = json::array();
    bool all = true;
    for (const Suite& s : suites) {
        std::printf("%s  %-52s cases %3d  max deviation %.3e  (tolerance %.0e)\n", s.passed() ? "PASS" : "FAIL",
                    s.name.c_str(), s.cases, s.max_deviation, s.tolerance);
        report.push_back({{"suite", s.name},
                          {"cases", s.cases},
                          {"max_deviation", s.max_deviation},
                          {"tolerance", s.tolerance},
                          {"passed", s.passed()}});
        all = all && s.passed();
    }
    const fs::path dir = output_dir(c);
    write_json_file(dir / "validation.json", {{"seed", c.seed}, {"dim", c.dim}, {"suites", report}});
    std::printf("wrote %s\n", (dir / "validation.json").string().c_str());
    return all ? ok : validation_failed;
}

// ---------------------------------------------------------------------------

struct Flag {
    std::string key;
    std::string name;
    std::string help;
    std::string value{};
    CLI::Option* option = nullptr;
};

std::vector<Flag> make_flags()
{
    return {{"r", "--r", "reflectivity in [0, 1]"},
            {"r_grid", "--r-grid", "sweep grid: default | lin:lo:hi:n | log:lo:hi:n | a,b,c"},
            {"n_env", "--n-env", "environment mean photon number (comma list allowed)"},
            {"n_bar", "--n-bar", "probe mean photon number (comma list allowed)"},
            {"dim", "--dim", "Fock truncation (default 8)"},
            {"objective", "--objective", "dm | ps | po (comma list allowed)"},
            {"prior", "--prior", "prior probability of target absence (default 0.5)"},
            {"param", "--param", "real | complex coefficients"},
            {"phase_grid", "--phase-grid", "phase grid size (default 4096)"},
            {"restarts", "--restarts", "random restarts (default 8)"},
            {"seed", "--seed", "64-bit seed (default 0)"},
            {"workers", "--workers", "sweep threads, 0 = all processors"},
            {"warm_start", "--warm-start", "reuse neighbouring optima in sweeps (true|false)"},
            {"max_iterations", "--max-iterations", "SQP iteration cap (default 500)"},
            {"dir", "--out", "output directory (default $QTD_OUTPUT_DIR or ./qtd_out)"},
            {"hypotheses", "--hypotheses", "optimize: also write rho0/rho1 (true|false)"},
            {"x", "--x-grid", "wigner x axis lo:hi:n (default -5:5:201)"},
            {"p", "--p-grid", "wigner p axis lo:hi:n (default -5:5:201)"}};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Optimal probe states for quantum target detection"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "help for every subcommand");

    struct Command {
        CLI::App* app;
        int (*run)(const RunConfig&);
        std::string config;
        std::string state;
        std::vector<Flag> flags;
    };
    std::vector<Command> commands;
    const std::vector<std::tuple<std::string, std::string, int (*)(const RunConfig&)>> table{
        {"optimize", "optimize one probe per objective / n_bar / n_env combination", cmd_optimize},
        {"sweep", "optimize over a reflectivity grid and write the sweep table", cmd_sweep},
        {"analyze", "photon, phase and coherence figures of a state", cmd_analyze},
        {"wigner", "Wigner function of a state on a grid", cmd_wigner},
        {"validate", "run the numerical oracle suites", cmd_validate},
    };
    commands.reserve(table.size());
    for (const auto& [name, help, run] : table) {
        Command& cmd = commands.emplace_back(Command{app.add_subcommand(name, help), run, {}, {}, make_flags()});
        cmd.app->add_option("--config", cmd.config, "INI settings file; flags override it");
        if (name == "analyze" || name == "wigner")
            cmd.app->add_option("state", cmd.state, "state file, pnss:N, coherent:N, fock:K or vacuum");
        for (Flag& f : cmd.flags)
            f.option = cmd.app->add_option(f.name, f.value, f.help);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    WarningLog log;
    ScopedWarningHandler handler(std::ref(log));
    for (Command& cmd : commands) {
        if (!cmd.app->parsed())
            continue;
        try {
            RunConfig cfg;
            if (!cmd.config.empty())
                load_ini(cfg, cmd.config);
            for (const Flag& f : cmd.flags)
                if (f.option->count())
                    apply_setting(cfg, f.key, f.value);
            if (!cmd.state.empty())
                cfg.state = cmd.state;
            validate(cfg);
            return cmd.run(cfg);
        } catch (const ConfigError& e) {
            std::cerr << "qtd: config error: " << e.what() << '\n';
            return config_error;
        } catch (const InvalidArgument& e) {
            std::cerr << "qtd: invalid input: " << e.what() << '\n';
            return config_error;
        } catch (const IoError& e) {
            std::cerr << "qtd: I/O error: " << e.what() << '\n';
            return io_error;
        } catch (const fs::filesystem_error& e) {
            std::cerr << "qtd: I/O error: " << e.what() << '\n';
            return io_error;
        } catch (const std::exception& e) {
            std::cerr << "qtd: error: " << e.what() << '\n';
            return internal;
        }
    }
    return internal;
}
