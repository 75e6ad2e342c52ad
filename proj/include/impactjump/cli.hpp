#pragma once

// Command-line front end. `run_cli` is a library function so that tests can run
// commands in-process; tools/impactjump.cpp is a thin main around it.
//
// Exit codes: 0 success, 1 I/O, parse or model error, 2 mathematical precondition.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "impactjump/dynamics.hpp"
#include "impactjump/errors.hpp"
#include "impactjump/eval.hpp"
#include "impactjump/impact.hpp"
#include "impactjump/model.hpp"
#include "impactjump/sim.hpp"
#include "json.hpp"

#ifndef IMPACTJUMP_VERSION
#define IMPACTJUMP_VERSION "0.1.0"
#endif

namespace impactjump::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

/// Bad command-line value (exit code 1).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Inline "a,b,c" or "@path"; the file may separate numbers by commas or whitespace.
inline std::string resolve_text(const std::string& arg) {
    if (!arg.empty() && arg.front() == '@') return read_text_file(arg.substr(1));
    return arg;
}

inline std::vector<double> parse_numbers(std::string_view text, const std::string& what) {
    std::vector<double> out;
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        const auto v = detail::parse_double(token);
        if (!v || !std::isfinite(*v)) throw UsageError(what + ": cannot parse '" + token + "' as a number");
        out.push_back(*v);
        token.clear();
    };
    for (char c : text) {
        if (c == ',' || c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            flush();
        } else {
            token += c;
        }
    }
    flush();
    return out;
}

inline VecX parse_vector(const std::string& arg, Eigen::Index n, const std::string& what) {
    const auto v = parse_numbers(resolve_text(arg), what);
    if (static_cast<Eigen::Index>(v.size()) != n) {
        throw DimensionError(what + " needs " + std::to_string(n) + " values, got " + std::to_string(v.size()));
    }
    return Eigen::Map<const VecX>(v.data(), n);
}

/// Rows separated by ';' or newlines.
inline std::vector<VecX> parse_rows(const std::string& arg, Eigen::Index n, const std::string& what) {
    const std::string text = resolve_text(arg);
    std::vector<VecX> out;
    std::string row;
    auto flush = [&] {
        const auto v = parse_numbers(row, what);
        row.clear();
        if (v.empty()) return;
        if (static_cast<Eigen::Index>(v.size()) != n) {
            throw DimensionError(what + " row " + std::to_string(out.size() + 1) + " needs " + std::to_string(n) +
                                 " values, got " + std::to_string(v.size()));
        }
        out.push_back(Eigen::Map<const VecX>(v.data(), n));
    };
    for (char c : text) {
        if (c == ';' || c == '\n') {
            flush();
        } else {
            row += c;
        }
    }
    flush();
    return out;
}

inline Vec3 parse_direction(const std::string& arg, const std::string& what) {
    const Vec3 v = parse_vector(arg, 3, what);
    if (!(v.norm() > 0.0)) throw UsageError(what + " must be non-zero");
    return v.normalized();
}

inline std::vector<Method> parse_methods(const std::string& arg) {
    std::vector<Method> out;
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto m = parse_method(std::string(detail::trim(item)));
        if (!m) throw UsageError("unknown method '" + item + "' (expected crb, gm or classical)");
        out.push_back(*m);
    }
    return out;
}

inline ordered_json json_vec(const VecX& v) { return detail::vec_json(v); }

inline ordered_json json_number(double v) { return detail::number_json(v); }

/// Output directory plus the digests for the run manifest.
class OutputSet {
public:
    explicit OutputSet(std::string dir) : dir_(std::move(dir)) {}

    bool enabled() const { return !dir_.empty(); }
    const std::string& dir() const { return dir_; }

    void write(const std::string& name, const std::string& content) {
        if (!enabled()) return;
        fs::create_directories(dir_);
        const fs::path path = fs::path(dir_) / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
        f << content;
        if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
        files_.emplace_back(name, hex64(fnv1a64(content)));
    }

    const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

private:
    std::string dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

struct Common {
    std::string model;
    std::string out;
    bool json = false;
    std::optional<std::uint64_t> seed;
};

struct RunInfo {
    std::string command;
    std::vector<std::string> args;
    std::vector<std::string> inputs;
    ordered_json overrides = ordered_json::object();
};

inline void write_manifest(OutputSet& outputs, const RunInfo& run, const Common& common) {
    if (!outputs.enabled()) return;
    ordered_json j;
    j["tool"] = "impactjump";
    j["version"] = IMPACTJUMP_VERSION;
    j["command"] = run.command;
    j["args"] = run.args;
    j["model"] = common.model.empty() ? ordered_json(nullptr) : ordered_json(common.model);
    ordered_json inputs = ordered_json::array();
    for (const auto& p : run.inputs) inputs.push_back({{"path", p}, {"fnv1a64", hex64(fnv1a64(read_text_file(p)))}});
    j["inputs"] = inputs;
    j["overrides"] = run.overrides;
    j["seed"] = common.seed ? ordered_json(*common.seed) : ordered_json(nullptr);
    ordered_json outs = ordered_json::array();
    for (const auto& [name, digest] : outputs.files()) outs.push_back({{"file", name}, {"fnv1a64", digest}});
    j["outputs"] = outs;
    const std::string text = j.dump(2) + "\n";
    const fs::path path = fs::path(outputs.dir()) / "manifest.json";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    f << text;
}

inline ChainModel require_model(const Common& c) {
    if (c.model.empty()) throw UsageError("--model is required");
    return load_model_file(c.model);
}

// predict

struct PredictOptions {
    std::string q, qd, v_pre, normal = "0,0,1", hint, methods = "crb,gm,classical", classical_mode = "normal_only";
    double c_r = 0.0;
    double mu = 0.0;
};

inline int cmd_predict(const Common& c, const PredictOptions& o, RunInfo& run, std::ostream& out) {
    const ChainModel m = require_model(c);
    run.inputs.push_back(c.model);
    const VecX q = parse_vector(o.q, m.dof(), "--q");
    if (o.qd.empty() == o.v_pre.empty()) throw UsageError("give exactly one of --qd and --v-pre");
    if (o.c_r < 0.0 || o.c_r > 1.0) throw UsageError("--cr must lie in [0, 1]");
    if (o.mu < 0.0) throw UsageError("--mu must be non-negative");
    if (o.classical_mode != "normal_only" && o.classical_mode != "full") {
        throw UsageError("--classical-mode must be normal_only or full");
    }
    const TangentialMode mode = o.classical_mode == "full" ? TangentialMode::full : TangentialMode::normal_only;
    const std::vector<Method> methods = parse_methods(o.methods);
    const Vec3 normal = parse_direction(o.normal, "--normal");
    std::optional<Vec3> hint;
    if (!o.hint.empty()) hint = parse_vector(o.hint, 3, "--tangent-hint");

    VecX qd = o.qd.empty() ? VecX::Zero(m.dof()) : parse_vector(o.qd, m.dof(), "--qd");
    ImpactContext ctx = make_impact_context(m, q, qd, normal, hint);
    if (!o.v_pre.empty()) {
        const Vec3 v = parse_vector(o.v_pre, 3, "--v-pre");
        qd = ctx.jacobian.transpose() * (ctx.jacobian * ctx.jacobian.transpose()).ldlt().solve(v);
        ctx = make_impact_context(m, q, qd, normal, hint);
    }
    if (!(ctx.v_pre.z() < 0.0)) {
        throw AssumptionError("contact point is not approaching the surface: v_n = " + detail::format6(ctx.v_pre.z()) +
                              " (needs < 0)");
    }

    auto stick = [](const Iim& w) {
        try {
            return stick_coefficient(w);
        } catch (const InvalidIimError&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
    struct Row {
        Prediction p;
        double residual;
        ConeCheck cone;
        Vec3 v_post;
        double stick;
    };
    std::vector<Row> rows;
    for (Method method : methods) {
        Row r;
        r.p = predict(method, ctx, o.c_r, mode);
        if (method == Method::classical) {
            r.residual = (ctx.jsim.matrix() * r.p.delta_qd - ctx.jacobian.transpose() * r.p.impulse.vector).norm();
            r.stick = stick(ctx.w_gm);
        } else {
            const Iim& w = method == Method::crb ? ctx.w_crb : ctx.w_gm;
            r.residual = (ctx.jacobian * r.p.delta_qd - w.matrix * r.p.impulse.vector).norm();
            r.stick = stick(w);
        }
        r.cone = friction_cone_check(r.p.impulse.vector, o.mu);
        r.v_post = post_impact_contact_velocity(ctx.jacobian, ctx.v_pre, r.p.delta_qd);
        rows.push_back(r);
    }
    const double kappa = ctx.jsim.condition_number();

    std::ostringstream csv;
    csv << "method";
    for (int i = 1; i <= m.dof(); ++i) csv << ",dq" << i;
    csv << ",imp_x,imp_y,imp_z,residual,cone_margin,cone_satisfied,v_n_post,stick_coefficient,kappa_m\n";
    for (const auto& r : rows) {
        csv << to_string(r.p.method);
        for (int i = 0; i < m.dof(); ++i) csv << "," << detail::format6(r.p.delta_qd(i));
        for (int i = 0; i < 3; ++i) csv << "," << detail::format6(r.p.impulse.vector(i));
        csv << "," << detail::format6(r.residual) << "," << detail::format6(r.cone.margin) << ","
            << (r.cone.satisfied ? "yes" : "no") << "," << detail::format6(r.v_post.z()) << "," << detail::format6(r.stick)
            << "," << detail::format6(kappa) << "\n";
    }

    ordered_json j;
    j["model"] = m.name;
    j["q"] = json_vec(q);
    j["qd_pre"] = json_vec(qd);
    j["v_pre"] = json_vec(ctx.v_pre);
    j["c_r"] = o.c_r;
    j["mu"] = o.mu;
    j["kappa_m"] = kappa;
    j["classical_tangential_mode"] = o.classical_mode;
    ordered_json rot = ordered_json::array();
    for (int i = 0; i < 3; ++i) rot.push_back(json_vec(ctx.frame.rotation.row(i).transpose()));
    j["contact_frame"] = {{"origin", json_vec(ctx.frame.origin)}, {"rotation", rot}};
    j["warning"] = ctx.frame.warning ? ordered_json(*ctx.frame.warning) : ordered_json(nullptr);
    ordered_json res = ordered_json::array();
    for (const auto& r : rows) {
        res.push_back({{"method", to_string(r.p.method)},
                       {"delta_qd", json_vec(r.p.delta_qd)},
                       {"impulse", json_vec(r.p.impulse.vector)},
                       {"residual", r.residual},
                       {"cone_margin", r.cone.margin},
                       {"cone_satisfied", r.cone.satisfied},
                       {"v_post", json_vec(r.v_post)},
                       {"stick_coefficient", json_number(r.stick)}});
    }
    j["predictions"] = res;
    const std::string json_text = j.dump(2) + "\n";

    out << (c.json ? json_text : csv.str());
    OutputSet outputs(c.out);
    outputs.write("prediction.csv", csv.str());
    outputs.write("prediction.json", json_text);
    write_manifest(outputs, run, c);
    return 0;
}

// eval

struct EvalCliOptions {
    std::string dataset, methods = "crb,classical,gm", normal = "0,0,1", hint;
    bool measured_impulse = false;
    bool per_rep = false;
};

inline int cmd_eval(const Common& c, const EvalCliOptions& o, RunInfo& run, std::ostream& out) {
    const ChainModel m = require_model(c);
    if (o.dataset.empty()) throw UsageError("--dataset is required");
    run.inputs = {c.model, o.dataset};
    const auto records = load_dataset_file(o.dataset, m.dof());
    EvalOptions opt;
    opt.methods = o.methods.empty() ? std::vector<Method>{} : parse_methods(o.methods);
    opt.measured_impulse = o.measured_impulse;
    opt.per_rep = o.per_rep;
    opt.normal = parse_direction(o.normal, "--normal");
    if (!o.hint.empty()) opt.hint_tangent = parse_vector(o.hint, 3, "--tangent-hint");
    if (o.measured_impulse) {
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (!records[i].impulse_measured) {
                throw UsageError("--measured-impulse: dataset has no impulse values (first missing at data row " +
                                 std::to_string(i + 1) + ")");
            }
        }
    }
    const ErrorReport report = evaluate_dataset(m, records, opt);
    const std::string csv = report_csv(report), json = report_json(report), summary = report_summary(report);
    OutputSet outputs(c.out);
    if (outputs.enabled()) {
        outputs.write("report.csv", csv);
        outputs.write("report.json", json);
        write_manifest(outputs, run, c);
        out << summary << "\n";
    } else {
        out << (c.json ? json : csv) << "# " << summary << "\n";
    }
    return 0;
}

// simulate

struct SimulateOptions {
    std::string scenario, regime;
    bool zero_noise = false;
};

inline int cmd_simulate(const Common& c, const SimulateOptions& o, RunInfo& run, std::ostream& out) {
    const ChainModel m = require_model(c);
    if (o.scenario.empty()) throw UsageError("--scenario is required");
    run.inputs = {c.model, o.scenario};
    Scenario s;
    s = load_scenario(read_text_file(o.scenario), m.dof());
    if (c.seed) s.seed = *c.seed;
    if (!o.regime.empty()) {
        const auto r = parse_regime(o.regime);
        if (!r) throw UsageError("--regime must be locked, free or pd");
        s.regime = *r;
    }
    if (o.zero_noise) s.sigma_q = s.sigma_qd = 0.0;
    const auto records = generate_dataset(m, s);
    const std::string csv = write_dataset(records, m.dof());
    OutputSet outputs(c.out);
    if (outputs.enabled()) {
        outputs.write("dataset.csv", csv);
        write_manifest(outputs, run, c);
        out << "wrote " << records.size() << " rows in " << group_by_config(records).size() << " groups to "
            << (fs::path(c.out) / "dataset.csv").string() << "\n";
    } else {
        out << csv;
    }
    return 0;
}

// phase

struct PhaseOptions {
    std::string q, normal = "0,0,1", hint, iim = "crb", x_range = "-1,1", y_range = "-1,1";
    double mu = 0.0;
    int nx = 21;
    int ny = 21;
};

inline std::string phase_field_csv(const PhaseField& f) {
    std::string s = "x,y,dx,dy\n";
    for (const auto& p : f.samples) {
        s += detail::format_exact(p.v.x()) + "," + detail::format_exact(p.v.y()) + "," + detail::format_exact(p.d.x()) +
             "," + detail::format_exact(p.d.y()) + "\n";
    }
    return s;
}

inline std::string phase_directions_csv(const PhaseField& f) {
    std::string s = "angle,dx,dy,radial_rate,tag\n";
    for (const auto& d : f.invariant_directions) {
        s += detail::format_exact(d.angle) + "," + detail::format_exact(d.direction.x()) + "," +
             detail::format_exact(d.direction.y()) + "," + detail::format_exact(d.radial_rate) + "," +
             (d.converging ? "converging" : "diverging") + "\n";
    }
    return s;
}

inline int cmd_phase(const Common& c, const PhaseOptions& o, RunInfo& run, std::ostream& out) {
    const ChainModel m = require_model(c);
    run.inputs.push_back(c.model);
    const VecX q = parse_vector(o.q, m.dof(), "--q");
    if (o.mu < 0.0) throw UsageError("--mu must be non-negative");
    if (o.iim != "crb" && o.iim != "gm") throw UsageError("--iim must be crb or gm");
    const VecX xr = parse_vector(o.x_range, 2, "--x-range"), yr = parse_vector(o.y_range, 2, "--y-range");
    PhaseGrid grid{xr(0), xr(1), yr(0), yr(1), o.nx, o.ny};
    std::optional<Vec3> hint;
    if (!o.hint.empty()) hint = parse_vector(o.hint, 3, "--tangent-hint");
    const ImpactContext ctx = make_impact_context(m, q, VecX::Zero(m.dof()), parse_direction(o.normal, "--normal"), hint);
    const Iim& w = o.iim == "crb" ? ctx.w_crb : ctx.w_gm;
    const PhaseField f = tangential_phase_field(w, o.mu, grid);
    const std::string field = phase_field_csv(f), dirs = phase_directions_csv(f);
    char buf[160];
    std::snprintf(buf, sizeof buf, "iim=%s mu=%s stick_coefficient=%s origin=%s", o.iim.c_str(), detail::format6(o.mu).c_str(),
                  detail::format6(f.stick_coefficient).c_str(), f.origin_stable ? "stable" : "sliding");
    const std::string summary = buf;

    ordered_json j;
    j["iim"] = o.iim;
    j["mu"] = o.mu;
    j["stick_coefficient"] = f.stick_coefficient;
    j["origin_stable"] = f.origin_stable;
    j["all_directions_invariant"] = f.all_directions_invariant;
    ordered_json samples = ordered_json::array();
    for (const auto& p : f.samples) samples.push_back({p.v.x(), p.v.y(), p.d.x(), p.d.y()});
    j["field"] = samples;
    ordered_json dj = ordered_json::array();
    for (const auto& d : f.invariant_directions) {
        dj.push_back({{"angle", d.angle},
                      {"direction", json_vec(d.direction)},
                      {"radial_rate", d.radial_rate},
                      {"tag", d.converging ? "converging" : "diverging"}});
    }
    j["invariant_directions"] = dj;
    const std::string json = j.dump(2) + "\n";

    OutputSet outputs(c.out);
    if (outputs.enabled()) {
        outputs.write("field.csv", field);
        outputs.write("directions.csv", dirs);
        outputs.write("phase.json", json);
        write_manifest(outputs, run, c);
        out << summary << "\n";
    } else if (c.json) {
        out << json;
    } else {
        out << field << "\n" << dirs << "# " << summary << "\n";
    }
    return 0;
}

// condnum

struct CondnumOptions {
    std::string q, diag;
    int random = 0;
    double warn = 1e3;
};

inline int cmd_condnum(const Common& c, const CondnumOptions& o, RunInfo& run, std::ostream& out) {
    std::vector<std::pair<std::string, double>> rows;
    if (!o.diag.empty()) {
        // Test hook: condition number of a diagonal matrix, no model involved.
        const auto d = parse_numbers(resolve_text(o.diag), "--diag");
        if (d.empty()) throw UsageError("--diag needs at least one value");
        for (double v : d) {
            if (!(v > 0.0)) throw UsageError("--diag entries must be positive");
        }
        const VecX v = Eigen::Map<const VecX>(d.data(), static_cast<Eigen::Index>(d.size()));
        rows.emplace_back("diag", condition_number(MatX(v.asDiagonal())));
    } else {
        const ChainModel m = require_model(c);
        run.inputs.push_back(c.model);
        std::vector<VecX> configs;
        if (!o.q.empty()) configs = parse_rows(o.q, m.dof(), "--q");
        if (o.random < 0) throw UsageError("--random must be non-negative");
        std::mt19937_64 rng(c.seed.value_or(0));
        std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
        for (int i = 0; i < o.random; ++i) {
            VecX q(m.dof());
            for (int k = 0; k < m.dof(); ++k) q(k) = u(rng);
            configs.push_back(q);
        }
        if (configs.empty()) throw UsageError("give --q, --random or --diag");
        for (std::size_t i = 0; i < configs.size(); ++i) {
            rows.emplace_back(std::to_string(i + 1), jsim(m, configs[i]).condition_number());
        }
    }
    std::ostringstream csv;
    csv << "config,kappa,flag\n";
    std::size_t flagged = 0;
    for (const auto& [name, kappa] : rows) {
        const bool warn = kappa > o.warn;
        flagged += warn ? 1 : 0;
        csv << name << "," << detail::format6(kappa) << "," << (warn ? "warn" : "") << "\n";
    }
    ordered_json j;
    j["warn_threshold"] = o.warn;
    ordered_json arr = ordered_json::array();
    for (const auto& [name, kappa] : rows) arr.push_back({{"config", name}, {"kappa", kappa}, {"warn", kappa > o.warn}});
    j["configs"] = arr;
    j["flagged"] = flagged;
    const std::string json = j.dump(2) + "\n";
    out << (c.json ? json : csv.str());
    OutputSet outputs(c.out);
    outputs.write("condnum.csv", csv.str());
    outputs.write("condnum.json", json);
    write_manifest(outputs, run, c);
    return 0;
}

// model-check

inline int cmd_model_check(const Common& c, bool canonical, RunInfo& run, std::ostream& out, std::ostream& err) {
    if (c.model.empty()) throw UsageError("--model is required");
    run.inputs.push_back(c.model);
    ChainModel m;
    try {
        m = load_model_file(c.model);
    } catch (const ModelError& e) {
        if (c.json) {
            ordered_json j;
            j["valid"] = false;
            ordered_json d = ordered_json::array();
            for (const auto& x : e.diagnostics()) d.push_back({{"code", x.code}, {"path", x.path}, {"message", x.message}});
            j["diagnostics"] = d;
            out << j.dump(2) << "\n";
        }
        for (const auto& x : e.diagnostics()) err << "error " << x.code << " at " << x.path << ": " << x.message << "\n";
        return 1;
    }
    const std::string text = canonical ? serialize_model(m) : "";
    ordered_json j;
    j["valid"] = true;
    j["name"] = m.name;
    j["dof"] = m.dof();
    j["total_mass"] = m.total_mass();
    j["contact_link"] = m.contact.link;
    const std::string json = j.dump(2) + "\n";
    std::string summary = "ok " + m.name + ": " + std::to_string(m.dof()) + " joints, total mass " +
                          detail::format6(m.total_mass()) + " kg\n";
    out << (canonical ? text : c.json ? json : summary);
    OutputSet outputs(c.out);
    outputs.write("model-check.json", json);
    if (canonical) outputs.write("model.canonical", text);
    write_manifest(outputs, run, c);
    return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// replay

inline int cmd_replay(const std::string& manifest_path, const std::string& out_dir, std::ostream& out, std::ostream& err) {
    const auto j = nlohmann::json::parse(read_text_file(manifest_path));
    if (!j.contains("args") || !j["args"].is_array() || !j.contains("outputs")) {
        throw UsageError("'" + manifest_path + "' is not a run manifest");
    }
    std::vector<std::string> args = j["args"].get<std::vector<std::string>>();
    const std::string dir = out_dir.empty() ? (fs::path(manifest_path).parent_path() / "replay").string() : out_dir;
    bool replaced = false;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--out" && i + 1 < args.size()) {
            args[i + 1] = dir;
            replaced = true;
        } else if (args[i].rfind("--out=", 0) == 0) {
            args[i] = "--out=" + dir;
            replaced = true;
        }
    }
    if (!replaced) throw UsageError("manifest has no --out argument");
    std::ostringstream sink_out, sink_err;
    const int code = run_cli(args, sink_out, sink_err);
    if (code != 0) {
        err << sink_err.str();
        return code;
    }
    bool all = true;
    for (const auto& o : j["outputs"]) {
        const std::string name = o["file"].get<std::string>();
        const std::string expected = o["fnv1a64"].get<std::string>();
        std::string actual = "missing";
        try {
            actual = hex64(fnv1a64(read_text_file((fs::path(dir) / name).string())));
        } catch (const std::runtime_error&) {
        }
        const bool same = actual == expected;
        all = all && same;
        out << (same ? "identical " : "MISMATCH ") << name << " " << actual << "\n";
    }
    out << (all ? "replay reproduced all outputs\n" : "replay differs\n");
    return all ? 0 : 1;
}

namespace detail_cli {

inline void add_common(CLI::App* sub, Common& c, bool model = true) {
    if (model) sub->add_option("--model", c.model, "Chain model file (JSON)");
    sub->add_option("--out", c.out, "Output directory; files plus manifest.json are written there");
    sub->add_flag("--json", c.json, "Print JSON instead of CSV");
    sub->add_option("--seed", c.seed, "Random seed (simulate: overrides the scenario seed; condnum: --random configs)");
}

inline ordered_json overrides_of(const CLI::App* sub) {
    ordered_json o = ordered_json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt->count() == 0 || opt->get_name() == "--help") continue;
        const auto& res = opt->results();
        std::string joined;
        for (const auto& r : res) joined += (joined.empty() ? "" : " ") + r;
        o[opt->get_name()] = joined;
    }
    return o;
}

}  // namespace detail_cli

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"impactjump: impact-induced joint velocity jump prediction for serial manipulators", "impactjump"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(IMPACTJUMP_VERSION));

    Common common;
    PredictOptions po;
    EvalCliOptions eo;
    SimulateOptions so;
    PhaseOptions pho;
    CondnumOptions co;
    bool canonical = false;
    std::string manifest, replay_out;

    auto* predict = app.add_subcommand("predict", "Predict joint velocity jumps with the classical, crb and gm methods");
    detail_cli::add_common(predict, common);
    predict->add_option("--q", po.q, "Joint positions (inline a,b,c or @file)")->required();
    predict->add_option("--qd", po.qd, "Pre-impact joint velocities (inline or @file)");
    predict->add_option("--v-pre", po.v_pre, "Pre-impact contact velocity in contact coordinates; q̇ = J⁺v");
    predict->add_option("--cr", po.c_r, "Coefficient of restitution in [0, 1]")->capture_default_str();
    predict->add_option("--mu", po.mu, "Friction coefficient for the cone check")->capture_default_str();
    predict->add_option("--methods", po.methods, "Comma-separated methods: crb, gm, classical")->capture_default_str();
    predict->add_option("--classical-mode", po.classical_mode, "Classical impulse: normal_only or full")->capture_default_str();
    predict->add_option("--normal", po.normal, "Surface normal, inertial coordinates")->capture_default_str();
    predict->add_option("--tangent-hint", po.hint, "Contact-frame x-axis hint, inertial coordinates");

    auto* eval = app.add_subcommand("eval", "Evaluate predictors on an experiment dataset");
    detail_cli::add_common(eval, common);
    eval->add_option("--dataset", eo.dataset, "Dataset CSV")->required();
    eval->add_option("--methods", eo.methods, "Comma-separated methods: crb, gm, classical")->capture_default_str();
    eval->add_flag("--measured-impulse", eo.measured_impulse, "Add variants driven by the measured impulse");
    eval->add_flag("--per-rep", eo.per_rep, "Predict per repetition and average, instead of on the mean record");
    eval->add_option("--normal", eo.normal, "Surface normal, inertial coordinates")->capture_default_str();
    eval->add_option("--tangent-hint", eo.hint, "Contact-frame x-axis hint, inertial coordinates");

    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset from a scenario grid");
    detail_cli::add_common(simulate, common);
    simulate->add_option("--scenario", so.scenario, "Scenario JSON")->required();
    simulate->add_option("--regime", so.regime, "Override the joint regime: locked, free or pd");
    simulate->add_flag("--zero-noise", so.zero_noise, "Ignore the scenario noise levels");

    auto* phase = app.add_subcommand("phase", "Tangential velocity phase field and invariant directions");
    detail_cli::add_common(phase, common);
    phase->add_option("--q", pho.q, "Joint positions (inline or @file)")->required();
    phase->add_option("--mu", pho.mu, "Friction coefficient")->capture_default_str();
    phase->add_option("--iim", pho.iim, "Inverse inertia matrix: crb or gm")->capture_default_str();
    phase->add_option("--x-range", pho.x_range, "Tangential x range min,max")->capture_default_str();
    phase->add_option("--y-range", pho.y_range, "Tangential y range min,max")->capture_default_str();
    phase->add_option("--nx", pho.nx, "Samples along x")->capture_default_str();
    phase->add_option("--ny", pho.ny, "Samples along y")->capture_default_str();
    phase->add_option("--normal", pho.normal, "Surface normal, inertial coordinates")->capture_default_str();
    phase->add_option("--tangent-hint", pho.hint, "Contact-frame x-axis hint, inertial coordinates");

    auto* condnum = app.add_subcommand("condnum", "Condition number of the joint-space inertia matrix");
    detail_cli::add_common(condnum, common);
    condnum->add_option("--q", co.q, "Configurations: rows separated by ';' or newlines (inline or @file)");
    condnum->add_option("--random", co.random, "Number of uniformly random configurations in [-pi, pi]");
    condnum->add_option("--warn", co.warn, "Flag rows with kappa above this value")->capture_default_str();
    condnum->add_option("--diag", co.diag, "Test hook: condition number of diag(values), no model needed");

    auto* check = app.add_subcommand("model-check", "Validate a model file");
    detail_cli::add_common(check, common);
    check->add_flag("--canonical", canonical, "Print the canonical serialization");

    auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare output digests");
    replay->add_option("--manifest", manifest, "manifest.json written by an earlier run")->required();
    replay->add_option("--out", replay_out, "Directory for the replayed outputs (default: <manifest dir>/replay)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }

    RunInfo run;
    run.args = args;
    try {
        if (*predict) {
            run.command = "predict";
            run.overrides = detail_cli::overrides_of(predict);
            return cmd_predict(common, po, run, out);
        }
        if (*eval) {
            run.command = "eval";
            run.overrides = detail_cli::overrides_of(eval);
            return cmd_eval(common, eo, run, out);
        }
        if (*simulate) {
            run.command = "simulate";
            run.overrides = detail_cli::overrides_of(simulate);
            return cmd_simulate(common, so, run, out);
        }
        if (*phase) {
            run.command = "phase";
            run.overrides = detail_cli::overrides_of(phase);
            return cmd_phase(common, pho, run, out);
        }
        if (*condnum) {
            run.command = "condnum";
            run.overrides = detail_cli::overrides_of(condnum);
            return cmd_condnum(common, co, run, out);
        }
        if (*check) {
            run.command = "model-check";
            run.overrides = detail_cli::overrides_of(check);
            return cmd_model_check(common, canonical, run, out, err);
        }
        if (*replay) return cmd_replay(manifest, replay_out, out, err);
    } catch (const PreconditionError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ModelError& e) {
        err << "error: invalid model\n";
        for (const auto& d : e.diagnostics()) err << "  " << d.code << " at " << d.path << ": " << d.message << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace impactjump::cli
