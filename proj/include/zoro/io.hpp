#ifndef ZORO_IO_HPP
#define ZORO_IO_HPP

#include "zoro/simulator.hpp"
#include "zoro/zoro.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace zoro {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Numeric CSV tables. Every cell is a double or blank; numbers are written with
// 17 significant digits so reading and writing again reproduces the file.
// ---------------------------------------------------------------------------

using Cell = std::optional<double>;

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<Cell>> rows;

    int column(const std::string& name) const
    {
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (header[j] == name) return static_cast<int>(j);
        }
        throw IoError("csv: no column '" + name + "'");
    }
};

inline std::string format_number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_number(const std::string& s, const std::string& where)
{
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw IoError(where + ": not a number: '" + s + "'");
    return v;
}

inline std::string to_csv(const CsvTable& t)
{
    std::string out;
    for (std::size_t j = 0; j < t.header.size(); ++j) {
        if (j) out += ',';
        out += t.header[j];
    }
    out += '\n';
    for (const auto& row : t.rows) {
        if (row.size() != t.header.size()) throw IoError("csv: row width does not match the header");
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out += ',';
            if (row[j]) out += format_number(*row[j]);
        }
        out += '\n';
    }
    return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline CsvTable parse_csv(const std::string& text, const std::string& source = "<csv>")
{
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1) {
            t.header = split_csv_line(line);
            continue;
        }
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        const std::string where = source + ":" + std::to_string(lineno);
        if (cells.size() != t.header.size()) {
            throw IoError(where + ": expected " + std::to_string(t.header.size()) + " fields, got "
                          + std::to_string(cells.size()));
        }
        std::vector<Cell> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            if (c.empty()) {
                row.emplace_back();
            } else {
                row.emplace_back(parse_number(c, where));
            }
        }
        t.rows.push_back(std::move(row));
    }
    if (lineno == 0) throw IoError(source + ": empty file");
    return t;
}

inline std::string read_text(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s)
{
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << s;
    if (!out) throw IoError("write failed: " + p.string());
}

inline CsvTable read_csv(const std::filesystem::path& p) { return parse_csv(read_text(p), p.string()); }
inline void write_csv(const std::filesystem::path& p, const CsvTable& t) { write_text(p, to_csv(t)); }

inline std::string to_json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline nlohmann::json read_json(const std::filesystem::path& p)
{
    try {
        return nlohmann::json::parse(read_text(p));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(p.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) { write_text(p, to_json_text(j)); }

// ---------------------------------------------------------------------------
// Open-loop trajectory: k, t, x0.., u0..; the terminal row has blank controls.
// ---------------------------------------------------------------------------

inline CsvTable trajectory_table(const OcpSpec& spec, const std::vector<Vector>& x, const std::vector<Vector>& u)
{
    const int nx = spec.nx(), nu = spec.nu();
    if (static_cast<int>(x.size()) != spec.N + 1 || static_cast<int>(u.size()) != spec.N) {
        throw IoError("trajectory: horizon does not match the OCP");
    }
    CsvTable t;
    t.header = {"k", "t"};
    for (int i = 0; i < nx; ++i) t.header.push_back("x" + std::to_string(i));
    for (int i = 0; i < nu; ++i) t.header.push_back("u" + std::to_string(i));
    for (int k = 0; k <= spec.N; ++k) {
        std::vector<Cell> row{double(k), k * spec.dt()};
        for (int i = 0; i < nx; ++i) row.emplace_back(x[k][i]);
        for (int i = 0; i < nu; ++i) {
            if (k < spec.N) {
                row.emplace_back(u[k][i]);
            } else {
                row.emplace_back();
            }
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

struct Trajectory {
    std::vector<Vector> x, u;
};

inline Trajectory trajectory_from_table(const CsvTable& t, const OcpSpec& spec)
{
    const int nx = spec.nx(), nu = spec.nu();
    if (static_cast<int>(t.rows.size()) != spec.N + 1) {
        throw IoError("trajectory: expected " + std::to_string(spec.N + 1) + " rows, got "
                      + std::to_string(t.rows.size()));
    }
    Trajectory tr;
    for (int k = 0; k <= spec.N; ++k) {
        const auto& row = t.rows[k];
        auto get = [&](const std::string& name) {
            const Cell& c = row[t.column(name)];
            if (!c) throw IoError("trajectory: blank " + name + " at row " + std::to_string(k));
            return *c;
        };
        Vector x(nx);
        for (int i = 0; i < nx; ++i) x[i] = get("x" + std::to_string(i));
        tr.x.push_back(x);
        if (k < spec.N) {
            Vector u(nu);
            for (int i = 0; i < nu; ++i) u[i] = get("u" + std::to_string(i));
            tr.u.push_back(u);
        }
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Tube: node, P_i_j (row-major), beta_i. Rows missing at a node are blank.
// ---------------------------------------------------------------------------

inline CsvTable tube_table(const OcpSpec& spec, const TubeState& tube)
{
    const int nx = spec.nx();
    int m = 0;
    for (int k = 0; k <= spec.N; ++k) m = std::max(m, spec.num_rows(k));
    if (static_cast<int>(tube.P.size()) != spec.N + 1 || static_cast<int>(tube.beta.size()) != spec.N + 1) {
        throw IoError("tube: horizon does not match the OCP");
    }
    CsvTable t;
    t.header = {"node"};
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < nx; ++j) t.header.push_back("P_" + std::to_string(i) + "_" + std::to_string(j));
    }
    for (int i = 0; i < m; ++i) t.header.push_back("beta_" + std::to_string(i));
    for (int k = 0; k <= spec.N; ++k) {
        std::vector<Cell> row{double(k)};
        for (int i = 0; i < nx; ++i) {
            for (int j = 0; j < nx; ++j) row.emplace_back(tube.P[k](i, j));
        }
        for (int i = 0; i < m; ++i) {
            if (i < tube.beta[k].size()) {
                row.emplace_back(tube.beta[k][i]);
            } else {
                row.emplace_back();
            }
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline TubeState tube_from_table(const CsvTable& t, const OcpSpec& spec)
{
    const int nx = spec.nx();
    if (static_cast<int>(t.rows.size()) != spec.N + 1) throw IoError("tube: wrong number of rows");
    TubeState tube;
    for (int k = 0; k <= spec.N; ++k) {
        const auto& row = t.rows[k];
        Matrix P(nx, nx);
        for (int i = 0; i < nx; ++i) {
            for (int j = 0; j < nx; ++j) {
                const Cell& c = row[t.column("P_" + std::to_string(i) + "_" + std::to_string(j))];
                if (!c) throw IoError("tube: blank P entry at node " + std::to_string(k));
                P(i, j) = *c;
            }
        }
        Vector b(spec.num_rows(k));
        for (int i = 0; i < b.size(); ++i) {
            const Cell& c = row[t.column("beta_" + std::to_string(i))];
            if (!c) throw IoError("tube: blank beta entry at node " + std::to_string(k));
            b[i] = *c;
        }
        tube.P.push_back(P);
        tube.beta.push_back(b);
    }
    return tube;
}

// ---------------------------------------------------------------------------
// Closed-loop trace: step, t, x.., u.., clearance.., t_prepare_ns, t_propagation_ns,
// t_feedback_ns, t_qp_ns. One extra row holds the final state with blank u and timings.
// ---------------------------------------------------------------------------

inline CsvTable trace_table(const ClosedLoopTrace& tr)
{
    const Index n_obs = tr.final_clearance.size();
    CsvTable t;
    t.header = {"step", "t"};
    for (int i = 0; i < tr.nx; ++i) t.header.push_back("x" + std::to_string(i));
    for (int i = 0; i < tr.nu; ++i) t.header.push_back("u" + std::to_string(i));
    for (Index i = 0; i < n_obs; ++i) t.header.push_back("clearance" + std::to_string(i));
    for (const char* c : {"t_prepare_ns", "t_propagation_ns", "t_feedback_ns", "t_qp_ns"}) t.header.push_back(c);

    auto add = [&](int step, double time, const Vector& x, const Vector* u, const Vector& clr,
                   const StepTimings* tm) {
        require_dim(x.size(), tr.nx, "trace: state");
        require_dim(clr.size(), n_obs, "trace: clearance");
        std::vector<Cell> row{double(step), time};
        for (Index i = 0; i < x.size(); ++i) row.emplace_back(x[i]);
        for (int i = 0; i < tr.nu; ++i) {
            if (u) {
                row.emplace_back((*u)[i]);
            } else {
                row.emplace_back();
            }
        }
        for (Index i = 0; i < clr.size(); ++i) row.emplace_back(clr[i]);
        if (tm) {
            for (std::int64_t v : {tm->prepare_ns, tm->propagation_ns, tm->feedback_ns, tm->qp_ns}) {
                row.emplace_back(double(v));
            }
        } else {
            row.insert(row.end(), 4, Cell{});
        }
        t.rows.push_back(std::move(row));
    };
    for (const StepRecord& s : tr.steps) add(s.step, s.t, s.x, &s.u, s.clearance, &s.timings);
    const int last = static_cast<int>(tr.steps.size());
    add(last, last * tr.sample_time, tr.final_state, nullptr, tr.final_clearance, nullptr);
    return t;
}

inline nlohmann::json quantiles_json(const Quantiles& q)
{
    return {{"min", q.min}, {"median", q.median}, {"max", q.max}};
}

inline nlohmann::json metrics_json(const MetricsReport& m)
{
    nlohmann::json j;
    j["steps"] = m.steps;
    j["failed"] = m.failed;
    j["min_clearance"] = m.min_clearance;
    j["collisions"] = m.collisions;
    j["constraint_violations"] = m.constraint_violations;
    j["prepare_ns"] = quantiles_json(m.prepare_ns);
    j["propagation_ns"] = quantiles_json(m.propagation_ns);
    j["feedback_ns"] = quantiles_json(m.feedback_ns);
    j["qp_ns"] = quantiles_json(m.qp_ns);
    j["total_ns"] = quantiles_json(m.total_ns);
    j["propagation_share"] = quantiles_json(m.propagation_share);
    return j;
}

/// Sibling metadata of a trace CSV.
inline nlohmann::json trace_meta_json(const ClosedLoopTrace& tr, const ClosedLoopProblem& p,
                                      const MetricsReport& m)
{
    nlohmann::json j;
    j["problem"] = tr.problem;
    j["controller"] = to_string(tr.controller);
    j["propagation_phase"] = to_string(tr.phase);
    j["seed"] = tr.seed;
    j["sample_time"] = tr.sample_time;
    j["nx"] = tr.nx;
    j["nu"] = tr.nu;
    j["timing_repeats"] = tr.timing_repeats;
    j["failed"] = tr.failed;
    j["failure_step"] = tr.failure_step;
    j["failure"] = tr.failure;
    j["robot_radius"] = p.robot_radius;
    nlohmann::json obs = nlohmann::json::array();
    for (const Obstacle& o : p.obstacles) obs.push_back({{"q_x", o.qx}, {"q_y", o.qy}, {"r_obs", o.r}});
    j["obstacles"] = obs;
    j["position_index"] = {p.ix, p.iy};
    j["metrics"] = metrics_json(m);
    return j;
}

inline nlohmann::json timings_json(const PhaseTimings& t)
{
    return {{"prepare_ns", t.prepare_ns},
            {"condense_ns", t.condense_ns},
            {"propagation_ns", t.propagation_ns},
            {"feedback_ns", t.feedback_ns},
            {"qp_ns", t.qp_ns}};
}

/// Iterations, KKT residuals and phase timings of one SQP run.
inline nlohmann::json solver_log_json(const SqpResult& r, const std::string& controller)
{
    nlohmann::json j;
    j["controller"] = controller;
    j["status"] = to_string(r.status);
    j["iterations"] = r.iterations;
    j["last_qp_status"] = to_string(r.last_qp_status);
    nlohmann::json log = nlohmann::json::array();
    PhaseTimings total;
    for (std::size_t i = 0; i < r.log.size(); ++i) {
        IterationLog l = r.log[i];
        // the final entry of a converged or capped run stops before its feedback phase
        const bool last = i + 1 == r.log.size();
        if (last && (r.status == SqpStatus::Converged || r.status == SqpStatus::MaxIter)) {
            l.timings.feedback_ns = 0;
            l.timings.qp_ns = 0;
        }
        nlohmann::json e;
        e["iteration"] = i;
        e["kkt"] = {{"stationarity", l.kkt.stationarity},
                    {"equality", l.kkt.equality},
                    {"inequality", l.kkt.inequality},
                    {"complementarity", l.kkt.complementarity}};
        e["step_norm"] = l.step_norm;
        e["qp_status"] = to_string(l.qp_status);
        e["qp_iterations"] = l.qp_iterations;
        e["qp_kkt"] = l.qp_kkt;
        e["timings"] = timings_json(l.timings);
        log.push_back(e);
        total.prepare_ns += l.timings.prepare_ns;
        total.condense_ns += l.timings.condense_ns;
        total.propagation_ns += l.timings.propagation_ns;
        total.feedback_ns += l.timings.feedback_ns;
        total.qp_ns += l.timings.qp_ns;
    }
    j["log"] = log;
    j["total_timings"] = timings_json(total);
    return j;
}

} // namespace zoro

#endif // ZORO_IO_HPP
