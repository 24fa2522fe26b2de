#ifndef ZORO_CONFIG_HPP
#define ZORO_CONFIG_HPP

#include "zoro/io.hpp"
#include "zoro/scenarios.hpp"
#include "zoro/simulator.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace zoro {

enum class Experiment { Solve, ClosedLoop, Scaling };

inline std::string to_string(Experiment e)
{
    switch (e) {
    case Experiment::Solve: return "solve";
    case Experiment::ClosedLoop: return "closed_loop";
    case Experiment::Scaling: return "scaling";
    }
    return "unknown";
}

/// Linear test model x' = A x + B u with quadratic cost.
struct LtiScenario {
    Matrix A, B, Q, R, Q_N;
    int N = 10;
    double T = 1.0;
    Vector x0;
    IntegratorConfig integrator{IntegratorScheme::IRK_GL4, 0.1, 1, false, 1};
};

struct ScalingSettings {
    std::vector<int> n_mass{3, 4, 5, 6};
    double velocity_noise = 1e-4;
};

/// One experiment as described by a JSON config document.
struct RunConfig {
    std::string source = "<config>";
    std::optional<Experiment> experiment;
    std::string model = "diff_drive";
    std::string controller; ///< empty: experiment default

    DiffDriveScenario diff_drive;
    ChainScenario chain;
    LtiScenario lti;

    ZoroConfig zoro;
    NoiseConfig noise;
    ClosedLoopSettings closed_loop;
    ScalingSettings scaling;
    SqpSettings sqp;
    std::string out = "out";
    int repeats = 1;

    int nx() const
    {
        if (model == "diff_drive") return 5;
        if (model == "hanging_chain") return HangingChainModel(chain.n_mass, chain.params).nx();
        return static_cast<int>(lti.A.rows());
    }
    int nu() const
    {
        if (model == "diff_drive") return 2;
        if (model == "hanging_chain") return 3;
        return static_cast<int>(lti.B.cols());
    }

    OcpPtr ocp() const
    {
        if (model == "diff_drive") return std::make_shared<const OcpSpec>(build_diff_drive_ocp(diff_drive));
        if (model == "hanging_chain") return std::make_shared<const OcpSpec>(build_chain_ocp(chain));
        return std::make_shared<const OcpSpec>(
            build_lq_ocp(lti.A, lti.B, lti.Q, lti.R, lti.Q_N, lti.N, lti.T, lti.integrator));
    }

    Vector x0() const
    {
        if (model == "diff_drive") return diff_drive.x0;
        if (model == "hanging_chain") return chain_initial_state(chain);
        return lti.x0;
    }

    ClosedLoopProblem problem() const
    {
        if (model != "diff_drive") throw ConfigError("closed loop: only the diff_drive model is supported");
        ClosedLoopProblem p = diff_drive_problem(diff_drive);
        p.zoro = zoro;
        return p;
    }
};

namespace detail {

using nlohmann::json;

/// Reads a config document and reports every error as "source:line: key.path: message".
/// Lines are found by locating the key names of the path in the raw text.
class ConfigReader {
public:
    ConfigReader(std::string text, std::string source) : text_(std::move(text)), source_(std::move(source)) {}

    using Path = std::vector<std::string>;

    [[noreturn]] void fail(const Path& path, const std::string& msg) const
    {
        std::string dotted;
        for (const auto& p : path) dotted += (dotted.empty() || p.front() == '[' ? "" : ".") + p;
        const std::string where = source_ + ":" + std::to_string(line_of(path));
        throw ConfigError(where + ": " + (dotted.empty() ? "" : dotted + ": ") + msg);
    }

    int line_of(const Path& path) const
    {
        std::size_t pos = 0;
        for (const auto& key : path) {
            if (!key.empty() && key.front() == '[') continue;
            const std::size_t p = text_.find("\"" + key + "\"", pos);
            if (p == std::string::npos) break;
            pos = p;
        }
        return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<long>(pos), '\n'));
    }

    static Path sub(Path p, const std::string& key)
    {
        p.push_back(key);
        return p;
    }

    void allow_keys(const json& obj, const Path& path, std::initializer_list<const char*> keys) const
    {
        if (!obj.is_object()) fail(path, "must be an object");
        for (const auto& [k, v] : obj.items()) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
                fail(sub(path, k), "unknown key");
            }
        }
    }

    double number(const json& v, const Path& path) const
    {
        if (!v.is_number()) fail(path, "must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(path, "must be finite");
        return d;
    }

    int integer(const json& v, const Path& path) const
    {
        if (!v.is_number_integer()) fail(path, "must be an integer");
        return v.get<int>();
    }

    void get(const json& obj, const Path& path, const char* key, double& out) const
    {
        if (obj.contains(key)) out = number(obj[key], sub(path, key));
    }
    void get(const json& obj, const Path& path, const char* key, int& out) const
    {
        if (obj.contains(key)) out = integer(obj[key], sub(path, key));
    }
    void get(const json& obj, const Path& path, const char* key, bool& out) const
    {
        if (!obj.contains(key)) return;
        if (!obj[key].is_boolean()) fail(sub(path, key), "must be true or false");
        out = obj[key].get<bool>();
    }
    void get(const json& obj, const Path& path, const char* key, std::string& out) const
    {
        if (!obj.contains(key)) return;
        if (!obj[key].is_string()) fail(sub(path, key), "must be a string");
        out = obj[key].get<std::string>();
    }

    Vector vector(const json& v, const Path& path, Index n = -1) const
    {
        if (!v.is_array()) fail(path, "must be an array of numbers");
        if (n >= 0 && static_cast<Index>(v.size()) != n) {
            fail(path, "must have " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
        }
        Vector out(static_cast<Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) out[Index(i)] = number(v[i], path);
        return out;
    }

    std::vector<int> indices(const json& v, const Path& path) const
    {
        if (!v.is_array()) fail(path, "must be an array of integers");
        std::vector<int> out;
        for (const auto& e : v) out.push_back(integer(e, path));
        return out;
    }

    /// Row-major nested arrays; the shape is checked before any entry is converted.
    Matrix matrix(const json& v, const Path& path, Index rows, Index cols) const
    {
        const std::string want = std::to_string(rows) + "x" + std::to_string(cols);
        if (!v.is_array()) fail(path, "must be a " + want + " matrix (array of rows)");
        if (static_cast<Index>(v.size()) != rows) {
            fail(path, "must be " + want + ", got " + std::to_string(v.size()) + " rows");
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_array() || static_cast<Index>(v[i].size()) != cols) {
                fail(path, "must be " + want + ", row " + std::to_string(i) + " has "
                               + (v[i].is_array() ? std::to_string(v[i].size()) : std::string("no")) + " entries");
            }
        }
        Matrix out(rows, cols);
        for (Index i = 0; i < rows; ++i) {
            for (Index j = 0; j < cols; ++j) out(i, j) = number(v[std::size_t(i)][std::size_t(j)], path);
        }
        return out;
    }

    /// Matrix whose shape is taken from the document (square if `square`).
    Matrix free_matrix(const json& v, const Path& path, bool square) const
    {
        if (!v.is_array() || v.empty() || !v[0].is_array()) fail(path, "must be a non-empty matrix (array of rows)");
        const Index rows = static_cast<Index>(v.size());
        const Index cols = static_cast<Index>(v[0].size());
        if (square && rows != cols) fail(path, "must be square");
        return matrix(v, path, rows, cols);
    }

private:
    std::string text_;
    std::string source_;
};

inline void read_integrator(const ConfigReader& r, const json& j, IntegratorConfig& ic)
{
    const ConfigReader::Path p{"integrator"};
    r.allow_keys(j, p, {"scheme", "newton_iters", "jacobian_reuse", "num_steps"});
    if (j.contains("scheme")) {
        std::string s;
        r.get(j, p, "scheme", s);
        if (s == "ERK4") {
            ic.scheme = IntegratorScheme::ERK4;
        } else if (s == "IRK_GL4") {
            ic.scheme = IntegratorScheme::IRK_GL4;
        } else {
            r.fail({"integrator", "scheme"}, "unknown scheme '" + s + "' (expected ERK4 or IRK_GL4)");
        }
    }
    r.get(j, p, "newton_iters", ic.newton_iters);
    r.get(j, p, "jacobian_reuse", ic.jacobian_reuse);
    r.get(j, p, "num_steps", ic.num_steps);
    if (ic.newton_iters < 1) r.fail({"integrator", "newton_iters"}, "must be >= 1");
    if (ic.num_steps < 1) r.fail({"integrator", "num_steps"}, "must be >= 1");
}

inline void read_diff_drive(const ConfigReader& r, const json& j, DiffDriveScenario& sc)
{
    const ConfigReader::Path p{"ocp"};
    r.allow_keys(j, p,
                 {"N", "T", "robot_radius", "obstacles", "v_min", "v_max", "omega_max", "a_max", "alpha_max",
                  "terminal_velocity_bound", "x0", "waypoints", "v_ref", "stage_weights", "terminal_weights"});
    r.get(j, p, "N", sc.N);
    r.get(j, p, "T", sc.T);
    r.get(j, p, "robot_radius", sc.robot_radius);
    r.get(j, p, "v_min", sc.v_min);
    r.get(j, p, "v_max", sc.v_max);
    r.get(j, p, "omega_max", sc.omega_max);
    r.get(j, p, "a_max", sc.a_max);
    r.get(j, p, "alpha_max", sc.alpha_max);
    r.get(j, p, "terminal_velocity_bound", sc.terminal_velocity_bound);
    r.get(j, p, "v_ref", sc.v_ref);
    if (j.contains("x0")) sc.x0 = r.vector(j["x0"], {"ocp", "x0"}, 5);
    if (j.contains("stage_weights")) sc.stage_weights = r.vector(j["stage_weights"], {"ocp", "stage_weights"}, 6);
    if (j.contains("terminal_weights")) {
        sc.terminal_weights = r.vector(j["terminal_weights"], {"ocp", "terminal_weights"}, 2);
    }
    if (j.contains("obstacles")) {
        const ConfigReader::Path op{"ocp", "obstacles"};
        if (!j["obstacles"].is_array()) r.fail(op, "must be an array of {q_x, q_y, r_obs}");
        sc.obstacles.clear();
        for (const auto& o : j["obstacles"]) {
            r.allow_keys(o, op, {"q_x", "q_y", "r_obs"});
            for (const char* k : {"q_x", "q_y", "r_obs"}) {
                if (!o.contains(k)) r.fail(op, std::string("obstacle misses '") + k + "'");
            }
            Obstacle ob;
            r.get(o, op, "q_x", ob.qx);
            r.get(o, op, "q_y", ob.qy);
            r.get(o, op, "r_obs", ob.r);
            if (ob.r < 0.0) r.fail(ConfigReader::sub(op, "r_obs"), "must be >= 0");
            sc.obstacles.push_back(ob);
        }
    }
    if (j.contains("waypoints")) {
        const ConfigReader::Path wp{"ocp", "waypoints"};
        if (!j["waypoints"].is_array() || j["waypoints"].empty()) r.fail(wp, "must be a non-empty array of [x, y]");
        sc.waypoints.clear();
        for (const auto& w : j["waypoints"]) {
            const Vector v = r.vector(w, wp, 2);
            sc.waypoints.emplace_back(v[0], v[1]);
        }
    }
    if (sc.N < 1) r.fail({"ocp", "N"}, "must be >= 1");
    if (!(sc.T > 0.0)) r.fail({"ocp", "T"}, "must be > 0");
    if (sc.robot_radius < 0.0) r.fail({"ocp", "robot_radius"}, "must be >= 0");
    if (!(sc.v_min < sc.v_max)) r.fail({"ocp", "v_max"}, "must exceed v_min");
    for (const char* k : {"omega_max", "a_max", "alpha_max", "terminal_velocity_bound"}) {
        if (j.contains(k) && !(j[k].get<double>() > 0.0)) r.fail({"ocp", k}, "must be > 0");
    }
    if (sc.stage_weights.minCoeff() < 0.0) r.fail({"ocp", "stage_weights"}, "must be >= 0");
    if (sc.terminal_weights.minCoeff() < 0.0) r.fail({"ocp", "terminal_weights"}, "must be >= 0");
}

inline void read_chain(const ConfigReader& r, const json& j, ChainScenario& sc)
{
    const ConfigReader::Path p{"ocp"};
    r.allow_keys(j, p,
                 {"n_mass", "N", "T", "end_reference", "end_initial", "wall_y", "u_max", "mass", "spring_constant",
                  "rest_length"});
    r.get(j, p, "n_mass", sc.n_mass);
    r.get(j, p, "N", sc.N);
    r.get(j, p, "T", sc.T);
    r.get(j, p, "wall_y", sc.wall_y);
    r.get(j, p, "u_max", sc.u_max);
    r.get(j, p, "mass", sc.params.mass);
    r.get(j, p, "spring_constant", sc.params.spring_constant);
    r.get(j, p, "rest_length", sc.params.rest_length);
    if (j.contains("end_reference")) sc.end_reference = r.vector(j["end_reference"], {"ocp", "end_reference"}, 3);
    if (j.contains("end_initial")) sc.end_initial = r.vector(j["end_initial"], {"ocp", "end_initial"}, 3);
    if (sc.n_mass < 2) r.fail({"ocp", "n_mass"}, "must be >= 2");
    if (sc.N < 1) r.fail({"ocp", "N"}, "must be >= 1");
    if (!(sc.T > 0.0)) r.fail({"ocp", "T"}, "must be > 0");
    if (!(sc.u_max > 0.0)) r.fail({"ocp", "u_max"}, "must be > 0");
    if (!(sc.params.mass > 0.0)) r.fail({"ocp", "mass"}, "must be > 0");
}

inline void read_lti(const ConfigReader& r, const json& j, LtiScenario& sc)
{
    const ConfigReader::Path p{"ocp"};
    r.allow_keys(j, p, {"A", "B", "Q", "R", "Q_N", "N", "T", "x0"});
    for (const char* k : {"A", "B"}) {
        if (!j.contains(k)) r.fail(p, std::string("lti model needs '") + k + "'");
    }
    sc.A = r.free_matrix(j["A"], {"ocp", "A"}, true);
    const Index nx = sc.A.rows();
    if (!j["B"].is_array() || j["B"].empty() || !j["B"][0].is_array()) {
        r.fail({"ocp", "B"}, "must be a non-empty matrix (array of rows)");
    }
    sc.B = r.matrix(j["B"], {"ocp", "B"}, nx, static_cast<Index>(j["B"][0].size()));
    const Index nu = sc.B.cols();
    sc.Q = j.contains("Q") ? r.matrix(j["Q"], {"ocp", "Q"}, nx, nx) : Matrix(Matrix::Identity(nx, nx));
    sc.R = j.contains("R") ? r.matrix(j["R"], {"ocp", "R"}, nu, nu) : Matrix(Matrix::Identity(nu, nu));
    sc.Q_N = j.contains("Q_N") ? r.matrix(j["Q_N"], {"ocp", "Q_N"}, nx, nx) : sc.Q;
    sc.x0 = j.contains("x0") ? r.vector(j["x0"], {"ocp", "x0"}, nx) : Vector(Vector::Zero(nx));
    r.get(j, p, "N", sc.N);
    r.get(j, p, "T", sc.T);
    if (sc.N < 1) r.fail({"ocp", "N"}, "must be >= 1");
    if (!(sc.T > 0.0)) r.fail({"ocp", "T"}, "must be > 0");
}

inline void read_zoro(const ConfigReader& r, const json& j, int nx, int nu, ZoroConfig& z, bool fixed_size)
{
    const ConfigReader::Path p{"zoro"};
    r.allow_keys(j, p, {"P0_bar", "K", "W", "G", "gamma", "tighten"});
    if (!fixed_size) {
        for (const char* k : {"P0_bar", "K", "W", "G"}) {
            if (j.contains(k)) {
                r.fail({"zoro", k}, "matrices depend on n_mass in the scaling experiment; use scaling.velocity_noise");
            }
        }
    }
    // W and G first: G's column count follows W
    if (j.contains("W")) z.W = r.free_matrix(j["W"], {"zoro", "W"}, true);
    const Index nw = z.W.rows();
    if (j.contains("G")) {
        z.G = r.matrix(j["G"], {"zoro", "G"}, nx, nw);
    } else if (z.G.rows() != nx || z.G.cols() != nw) {
        if (nw != nx) r.fail({"zoro", "G"}, "required when W is not " + std::to_string(nx) + "x" + std::to_string(nx));
        z.G = Matrix::Identity(nx, nx);
    }
    if (j.contains("P0_bar")) z.P0_bar = r.matrix(j["P0_bar"], {"zoro", "P0_bar"}, nx, nx);
    if (j.contains("K")) z.K = r.matrix(j["K"], {"zoro", "K"}, nu, nx);
    r.get(j, p, "gamma", z.gamma);
    if (z.gamma < 0.0) r.fail({"zoro", "gamma"}, "must be >= 0");
    if (j.contains("tighten")) {
        const ConfigReader::Path tp{"zoro", "tighten"};
        const json& t = j["tighten"];
        r.allow_keys(t, tp, {"initial", "mid", "terminal"});
        if (t.contains("initial")) z.tighten_idx_0 = r.indices(t["initial"], ConfigReader::sub(tp, "initial"));
        if (t.contains("mid")) z.tighten_idx_mid = r.indices(t["mid"], ConfigReader::sub(tp, "mid"));
        if (t.contains("terminal")) z.tighten_idx_N = r.indices(t["terminal"], ConfigReader::sub(tp, "terminal"));
    }
}

inline void read_sqp(const ConfigReader& r, const json& j, SqpSettings& s)
{
    const ConfigReader::Path p{"sqp"};
    r.allow_keys(j, p,
                 {"max_iter", "tol_stationarity", "tol_equality", "tol_inequality", "tol_complementarity",
                  "levenberg", "qp_max_iter", "qp_tol"});
    r.get(j, p, "max_iter", s.max_iter);
    r.get(j, p, "tol_stationarity", s.tol_stationarity);
    r.get(j, p, "tol_equality", s.tol_equality);
    r.get(j, p, "tol_inequality", s.tol_inequality);
    r.get(j, p, "tol_complementarity", s.tol_complementarity);
    r.get(j, p, "levenberg", s.levenberg);
    r.get(j, p, "qp_max_iter", s.qp.max_iter);
    r.get(j, p, "qp_tol", s.qp.tol);
    try {
        s.validate();
    } catch (const ConfigError& e) {
        r.fail(p, e.what());
    }
    if (s.qp.max_iter < 1) r.fail({"sqp", "qp_max_iter"}, "must be >= 1");
    if (!(s.qp.tol > 0.0)) r.fail({"sqp", "qp_tol"}, "must be > 0");
}

} // namespace detail

/// Parses and validates a config document. Every check, including matrix shapes and the
/// construction of the OCP, runs here before any experiment starts.
/// `expected` (the CLI subcommand) must agree with the document's experiment when both are set.
inline RunConfig parse_config(const std::string& text, const std::string& source = "<config>",
                              std::optional<Experiment> expected = std::nullopt)
{
    using detail::ConfigReader;
    using nlohmann::json;
    const ConfigReader r(text, source);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        // byte offset -> line
        const std::size_t at = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(at), '\n'));
        std::string msg = e.what();
        const auto colon = msg.find("]");
        if (colon != std::string::npos) msg = msg.substr(colon + 2);
        throw ConfigError(source + ":" + std::to_string(line) + ": invalid JSON: " + msg);
    }
    r.allow_keys(doc, {},
                 {"experiment", "model", "controller", "ocp", "integrator", "zoro", "noise", "closed_loop", "scaling",
                  "sqp", "out", "repeats"});

    RunConfig c;
    c.source = source;
    if (doc.contains("experiment")) {
        std::string e;
        r.get(doc, {}, "experiment", e);
        if (e == "solve") {
            c.experiment = Experiment::Solve;
        } else if (e == "closed_loop") {
            c.experiment = Experiment::ClosedLoop;
        } else if (e == "scaling") {
            c.experiment = Experiment::Scaling;
        } else {
            r.fail({"experiment"}, "unknown experiment '" + e + "' (expected solve, closed_loop or scaling)");
        }
    }
    if (expected) {
        if (c.experiment && *c.experiment != *expected) {
            r.fail({"experiment"}, "config is for '" + to_string(*c.experiment) + "' but '" + to_string(*expected)
                                       + "' was requested");
        }
        c.experiment = expected;
    }
    if (c.experiment == Experiment::Scaling) c.model = "hanging_chain";
    r.get(doc, {}, "model", c.model);
    if (c.model != "diff_drive" && c.model != "hanging_chain" && c.model != "lti") {
        r.fail({"model"}, "unknown model '" + c.model + "' (expected diff_drive, hanging_chain or lti)");
    }
    if (c.model == "lti" && !doc.contains("ocp")) r.fail({"model"}, "lti model needs an ocp block with A and B");

    IntegratorConfig* integ = c.model == "diff_drive" ? &c.diff_drive.integrator
                              : c.model == "hanging_chain" ? &c.chain.integrator
                                                           : &c.lti.integrator;
    if (doc.contains("ocp")) {
        if (c.model == "diff_drive") {
            detail::read_diff_drive(r, doc["ocp"], c.diff_drive);
        } else if (c.model == "hanging_chain") {
            detail::read_chain(r, doc["ocp"], c.chain);
        } else {
            detail::read_lti(r, doc["ocp"], c.lti);
        }
    }
    if (doc.contains("integrator")) detail::read_integrator(r, doc["integrator"], *integ);

    const bool scaling = c.experiment == Experiment::Scaling;
    if (c.model == "diff_drive") {
        c.zoro = diff_drive_zoro_config(c.diff_drive);
    } else if (c.model == "hanging_chain") {
        c.zoro = chain_zoro_config(c.chain, c.scaling.velocity_noise);
    } else {
        c.zoro = ZoroConfig::zero(c.nx(), c.nu());
    }
    if (doc.contains("scaling")) {
        const json& s = doc["scaling"];
        const ConfigReader::Path sp{"scaling"};
        r.allow_keys(s, sp, {"n_mass", "velocity_noise"});
        if (s.contains("n_mass")) {
            c.scaling.n_mass = r.indices(s["n_mass"], {"scaling", "n_mass"});
            if (c.scaling.n_mass.empty()) r.fail({"scaling", "n_mass"}, "must not be empty");
            for (int n : c.scaling.n_mass) {
                if (n < 2) r.fail({"scaling", "n_mass"}, "entries must be >= 2");
            }
        }
        r.get(s, sp, "velocity_noise", c.scaling.velocity_noise);
        if (c.scaling.velocity_noise < 0.0) r.fail({"scaling", "velocity_noise"}, "must be >= 0");
        if (c.model == "hanging_chain") c.zoro = chain_zoro_config(c.chain, c.scaling.velocity_noise);
    }
    if (doc.contains("zoro")) detail::read_zoro(r, doc["zoro"], c.nx(), c.nu(), c.zoro, !scaling);

    c.noise.covariance = c.zoro.G * c.zoro.W * c.zoro.G.transpose();
    if (doc.contains("noise")) {
        const json& n = doc["noise"];
        const ConfigReader::Path np{"noise"};
        r.allow_keys(n, np, {"covariance", "seed"});
        if (n.contains("covariance")) c.noise.covariance = r.matrix(n["covariance"], {"noise", "covariance"}, c.nx(), c.nx());
        if (n.contains("seed")) {
            if (!n["seed"].is_number_unsigned()) r.fail({"noise", "seed"}, "must be a non-negative integer");
            c.noise.seed = n["seed"].get<std::uint64_t>();
        }
    }

    if (doc.contains("closed_loop")) {
        const json& l = doc["closed_loop"];
        const ConfigReader::Path lp{"closed_loop"};
        r.allow_keys(l, lp, {"n_steps", "timing_repeats", "propagation_phase", "plant_substeps"});
        r.get(l, lp, "n_steps", c.closed_loop.n_steps);
        r.get(l, lp, "timing_repeats", c.closed_loop.timing_repeats);
        r.get(l, lp, "plant_substeps", c.closed_loop.plant_substeps);
        std::string phase = "preparation";
        r.get(l, lp, "propagation_phase", phase);
        if (phase == "preparation") {
            c.closed_loop.phase = PropagationPhase::Preparation;
        } else if (phase == "feedback") {
            c.closed_loop.phase = PropagationPhase::Feedback;
        } else {
            r.fail({"closed_loop", "propagation_phase"}, "must be 'preparation' or 'feedback'");
        }
        if (c.closed_loop.n_steps < 1) r.fail({"closed_loop", "n_steps"}, "must be >= 1");
        if (c.closed_loop.timing_repeats < 1) r.fail({"closed_loop", "timing_repeats"}, "must be >= 1");
        if (c.closed_loop.plant_substeps < 1) r.fail({"closed_loop", "plant_substeps"}, "must be >= 1");
    }
    if (doc.contains("sqp")) detail::read_sqp(r, doc["sqp"], c.sqp);
    c.closed_loop.sqp = c.sqp;
    r.get(doc, {}, "out", c.out);
    r.get(doc, {}, "repeats", c.repeats);
    if (c.repeats < 1) r.fail({"repeats"}, "must be >= 1");

    r.get(doc, {}, "controller", c.controller);
    if (!c.controller.empty()) {
        static const std::set<std::string> known{"sqp", "zoro_sqp", "nominal_rti", "zoro_rti"};
        if (!known.count(c.controller)) {
            r.fail({"controller"}, "unknown controller '" + c.controller
                                       + "' (expected sqp, zoro_sqp, nominal_rti or zoro_rti)");
        }
    }

    // assemble and cross-check the numeric objects
    if (!scaling) {
        OcpPtr spec;
        try {
            spec = c.ocp();
        } catch (const ConfigError& e) {
            r.fail({"ocp"}, e.what());
        }
        try {
            c.zoro.validate(*spec);
        } catch (const ConfigError& e) {
            r.fail({"zoro"}, e.what());
        }
        try {
            c.noise.validate(c.nx());
        } catch (const ConfigError& e) {
            r.fail({"noise"}, e.what());
        }
    } else if (c.model != "hanging_chain") {
        r.fail({"model"}, "the scaling experiment needs the hanging_chain model");
    }
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path, std::optional<Experiment> expected = std::nullopt)
{
    std::string text;
    try {
        text = read_text(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    return parse_config(text, path.string(), expected);
}

} // namespace zoro

#endif // ZORO_CONFIG_HPP
