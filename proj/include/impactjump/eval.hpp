#pragma once

// Experiment records, repetition aggregation, prediction error metrics, and
// comparison reports (one row per configuration, one column per method).

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "impactjump/dynamics.hpp"
#include "impactjump/errors.hpp"
#include "impactjump/impact.hpp"
#include "impactjump/model.hpp"
#include "json.hpp"

namespace impactjump {

struct ExperimentRecord {
    std::string config_id;
    int repetition = 0;
    VecX q;
    VecX qd_pre;
    VecX delta_qd_measured;
    std::optional<Vec3> impulse_measured;  ///< contact coordinates
    double v_ref_normal = 0.0;
    Vec2 v_ref_tangential = Vec2::Zero();
    double c_r = 0.0;
    double mu = 0.0;
};

/// Malformed dataset; `row` is the 1-based line number (header = 1), 0 if not row-specific.
class DatasetError : public std::runtime_error {
public:
    DatasetError(std::size_t row, const std::string& what)
        : std::runtime_error(row ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

inline std::vector<std::string> dataset_columns(int dof) {
    std::vector<std::string> cols{"config_id", "rep"};
    for (const char* prefix : {"q", "qd", "djd"}) {
        for (int i = 1; i <= dof; ++i) cols.push_back(prefix + std::to_string(i));
    }
    for (const char* c : {"imp_x", "imp_y", "imp_z", "v_ref_n", "v_ref_t1", "v_ref_t2", "cr", "mu"}) cols.emplace_back(c);
    return cols;
}

inline std::string dataset_header(int dof) {
    std::string out;
    for (const auto& c : dataset_columns(dof)) out += (out.empty() ? "" : ",") + c;
    return out;
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

/// Shortest text that parses back to the same double.
inline std::string format_exact(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string format6(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace detail

inline std::vector<ExperimentRecord> load_dataset(std::string_view text, int dof) {
    if (dof < 1) throw DimensionError("dataset needs a model with at least one joint");
    std::vector<ExperimentRecord> out;
    const std::vector<std::string> cols = dataset_columns(dof);
    std::size_t line_no = 0;
    bool header_seen = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (line_no == 1 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv(line);
        if (!header_seen) {
            header_seen = true;
            bool ok = fields.size() == cols.size();
            for (std::size_t i = 0; ok && i < cols.size(); ++i) ok = detail::trim(fields[i]) == cols[i];
            if (!ok) throw DatasetError(line_no, "header does not match the " + std::to_string(dof) + "-joint schema '" + dataset_header(dof) + "'");
            continue;
        }
        if (fields.size() != cols.size()) {
            throw DatasetError(line_no, "expected " + std::to_string(cols.size()) + " fields for a " + std::to_string(dof) +
                                            "-joint model, got " + std::to_string(fields.size()));
        }
        auto number = [&](std::size_t i) {
            const auto v = detail::parse_double(fields[i]);
            if (!v || !std::isfinite(*v)) {
                throw DatasetError(line_no, "column '" + cols[i] + "': cannot parse '" + std::string(fields[i]) + "'");
            }
            return *v;
        };
        auto vec = [&](std::size_t first) {
            VecX v(dof);
            for (int i = 0; i < dof; ++i) v(i) = number(first + static_cast<std::size_t>(i));
            return v;
        };
        ExperimentRecord r;
        r.config_id = std::string(detail::trim(fields[0]));
        if (r.config_id.empty()) throw DatasetError(line_no, "empty config_id");
        const double rep = number(1);
        if (rep != std::floor(rep) || std::abs(rep) > 1e9) throw DatasetError(line_no, "column 'rep' must be an integer");
        r.repetition = static_cast<int>(rep);
        const std::size_t d = static_cast<std::size_t>(dof);
        r.q = vec(2);
        r.qd_pre = vec(2 + d);
        r.delta_qd_measured = vec(2 + 2 * d);
        const std::size_t imp = 2 + 3 * d;
        int empty = 0;
        for (std::size_t i = 0; i < 3; ++i) empty += detail::trim(fields[imp + i]).empty() ? 1 : 0;
        if (empty == 0) {
            r.impulse_measured = Vec3(number(imp), number(imp + 1), number(imp + 2));
        } else if (empty != 3) {
            throw DatasetError(line_no, "impulse columns must be all present or all empty");
        }
        r.v_ref_normal = number(imp + 3);
        r.v_ref_tangential = Vec2(number(imp + 4), number(imp + 5));
        r.c_r = number(imp + 6);
        r.mu = number(imp + 7);
        if (r.c_r < 0.0 || r.c_r > 1.0) throw DatasetError(line_no, "cr must lie in [0, 1]");
        if (r.mu < 0.0) throw DatasetError(line_no, "mu must be non-negative");
        out.push_back(std::move(r));
    }
    if (!header_seen) throw DatasetError(0, "dataset is empty (no header)");
    return out;
}

inline std::vector<ExperimentRecord> load_dataset_file(const std::string& path, int dof) {
    return load_dataset(read_text_file(path), dof);
}

/// Dataset CSV with round-trip number formatting.
inline std::string write_dataset(const std::vector<ExperimentRecord>& records, int dof) {
    std::string out = dataset_header(dof) + "\n";
    for (const auto& r : records) {
        if (r.q.size() != dof || r.qd_pre.size() != dof || r.delta_qd_measured.size() != dof) {
            throw DimensionError("record '" + r.config_id + "' does not match the model dimension");
        }
        out += r.config_id + "," + std::to_string(r.repetition);
        for (const VecX* v : {&r.q, &r.qd_pre, &r.delta_qd_measured}) {
            for (int i = 0; i < dof; ++i) out += "," + detail::format_exact((*v)(i));
        }
        for (int i = 0; i < 3; ++i) out += "," + (r.impulse_measured ? detail::format_exact((*r.impulse_measured)(i)) : "");
        for (double v : {r.v_ref_normal, r.v_ref_tangential.x(), r.v_ref_tangential.y(), r.c_r, r.mu}) {
            out += "," + detail::format_exact(v);
        }
        out += "\n";
    }
    return out;
}

/// Groups by config_id in order of first appearance.
inline std::vector<std::vector<ExperimentRecord>> group_by_config(const std::vector<ExperimentRecord>& records) {
    std::vector<std::vector<ExperimentRecord>> groups;
    std::map<std::string, std::size_t> index;
    for (const auto& r : records) {
        const auto [it, inserted] = index.try_emplace(r.config_id, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(r);
    }
    return groups;
}

struct AggregatedRecord {
    ExperimentRecord mean;
    std::size_t count = 0;
    VecX q_std;
    VecX qd_pre_std;
    VecX delta_qd_std;
    std::optional<Vec3> impulse_std;
};

/// Componentwise mean and sample standard deviation (n − 1; zero for one record).
inline AggregatedRecord aggregate_repetitions(const std::vector<ExperimentRecord>& group) {
    if (group.empty()) throw std::invalid_argument("cannot aggregate an empty group");
    const std::size_t n = group.size();
    const Eigen::Index d = group.front().q.size();
    bool all_impulse = true;
    for (const auto& r : group) {
        if (r.config_id != group.front().config_id) throw std::invalid_argument("group mixes config ids");
        if (r.q.size() != d || r.qd_pre.size() != d || r.delta_qd_measured.size() != d) {
            throw DimensionError("records in group '" + r.config_id + "' disagree in dimension");
        }
        all_impulse = all_impulse && r.impulse_measured.has_value();
    }
    auto stats = [&](auto get, auto& mean, auto& stdev) {
        mean = get(group.front());
        mean.setZero();
        for (const auto& r : group) mean += get(r);
        mean /= static_cast<double>(n);
        stdev = mean;
        stdev.setZero();
        if (n > 1) {
            for (const auto& r : group) stdev += (get(r) - mean).cwiseAbs2();
            stdev = (stdev / static_cast<double>(n - 1)).cwiseSqrt();
        }
    };
    AggregatedRecord a;
    a.count = n;
    a.mean.config_id = group.front().config_id;
    a.mean.repetition = 0;
    stats([](const ExperimentRecord& r) -> VecX { return r.q; }, a.mean.q, a.q_std);
    stats([](const ExperimentRecord& r) -> VecX { return r.qd_pre; }, a.mean.qd_pre, a.qd_pre_std);
    stats([](const ExperimentRecord& r) -> VecX { return r.delta_qd_measured; }, a.mean.delta_qd_measured, a.delta_qd_std);
    if (all_impulse) {
        Vec3 m, s;
        stats([](const ExperimentRecord& r) -> Vec3 { return *r.impulse_measured; }, m, s);
        a.mean.impulse_measured = m;
        a.impulse_std = s;
    }
    double vn = 0.0, cr = 0.0, mu = 0.0;
    Vec2 vt = Vec2::Zero();
    for (const auto& r : group) {
        vn += r.v_ref_normal;
        vt += r.v_ref_tangential;
        cr += r.c_r;
        mu += r.mu;
    }
    a.mean.v_ref_normal = vn / n;
    a.mean.v_ref_tangential = vt / n;
    a.mean.c_r = cr / n;
    a.mean.mu = mu / n;
    return a;
}

/// e = Δq̇* − Δq̇°
inline VecX absolute_error(const VecX& pred, const VecX& meas) {
    if (pred.size() != meas.size()) throw DimensionError("prediction and measurement lengths differ");
    return pred - meas;
}

/// ā = (1/D)·Σ|eᵢ|
inline double average_error(const VecX& pred, const VecX& meas) {
    const VecX e = absolute_error(pred, meas);
    if (e.size() == 0) throw DimensionError("average error of an empty vector");
    // Sequential sum so that the value is re-derivable from the stored vector.
    double sum = 0.0;
    for (Eigen::Index i = 0; i < e.size(); ++i) sum += std::abs(e(i));
    return sum / static_cast<double>(e.size());
}

/// Method column: a predictor, optionally driven by the measured impulse.
struct MethodVariant {
    Method method = Method::crb;
    bool measured_impulse = false;

    std::string label() const { return std::string(to_string(method)) + (measured_impulse ? "@measured" : ""); }
};

struct EvalOptions {
    std::vector<Method> methods{Method::crb, Method::classical, Method::gm};
    bool measured_impulse = false;  ///< add the measured-impulse variant of every method
    bool per_rep = false;           ///< predict per repetition and average, instead of on the mean record
    Vec3 normal = Vec3::UnitZ();
    std::optional<Vec3> hint_tangent;
};

struct MethodResult {
    MethodVariant variant;
    VecX prediction;
    VecX error;  ///< signed, per joint
    double average = 0.0;
    Vec3 impulse = Vec3::Zero();
    ConeCheck cone;
};

struct GroupReport {
    std::string config_id;
    AggregatedRecord aggregate;
    std::vector<MethodResult> results;  ///< same order as ErrorReport::methods; empty when skipped
    std::optional<std::string> diagnostic;

    const MethodResult* find(const std::string& label) const {
        for (const auto& r : results) {
            if (r.variant.label() == label) return &r;
        }
        return nullptr;
    }
};

struct Reduction {
    std::string method;
    std::string baseline;
    double pooled = std::numeric_limits<double>::quiet_NaN();      ///< 100·(1 − mean ā_method / mean ā_baseline)
    double per_config_mean = std::numeric_limits<double>::quiet_NaN();  ///< mean over groups of 100·(1 − ā_method / ā_baseline)
};

struct ErrorReport {
    std::vector<MethodVariant> methods;
    std::vector<GroupReport> groups;
    std::vector<double> pooled_average;  ///< per method, unweighted mean over evaluated groups
    std::vector<Reduction> reductions;
    bool classical_normal_only = true;

    std::optional<std::size_t> method_index(const std::string& label) const {
        for (std::size_t i = 0; i < methods.size(); ++i) {
            if (methods[i].label() == label) return i;
        }
        return std::nullopt;
    }
};

namespace detail {

inline MethodResult run_method(const MethodVariant& variant, const ImpactContext& ctx, const ExperimentRecord& rec) {
    MethodResult r;
    r.variant = variant;
    Prediction p;
    if (variant.measured_impulse) {
        if (!rec.impulse_measured) throw std::invalid_argument("record has no measured impulse");
        p = predict_with_impulse(variant.method, ctx, *rec.impulse_measured);
    } else {
        p = predict(variant.method, ctx, rec.c_r, TangentialMode::normal_only);
    }
    r.prediction = p.delta_qd;
    r.impulse = p.impulse.vector;
    r.cone = friction_cone_check(r.impulse, rec.mu);
    return r;
}

inline double reduction(double value, double baseline) {
    if (!(baseline > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return 100.0 * (1.0 - value / baseline);
}

}  // namespace detail

inline ErrorReport evaluate_dataset(const ChainModel& model, const std::vector<ExperimentRecord>& records,
                                    const EvalOptions& opt) {
    ErrorReport report;
    for (Method m : opt.methods) {
        if (m == Method::measured) throw std::invalid_argument("'measured' is not a predictor");
        report.methods.push_back({m, false});
    }
    if (opt.measured_impulse) {
        for (Method m : opt.methods) report.methods.push_back({m, true});
        for (const auto& r : records) {
            if (!r.impulse_measured) {
                throw std::invalid_argument("--measured-impulse needs impulse columns, missing for config '" + r.config_id +
                                            "' rep " + std::to_string(r.repetition));
            }
        }
    }
    for (const auto& r : records) check_dimension(model, r.q, "q");

    for (const auto& group : group_by_config(records)) {
        GroupReport g;
        g.config_id = group.front().config_id;
        g.aggregate = aggregate_repetitions(group);
        const ExperimentRecord& mean = g.aggregate.mean;
        try {
            if (!opt.per_rep) {
                const ImpactContext ctx = make_impact_context(model, mean.q, mean.qd_pre, opt.normal, opt.hint_tangent);
                for (const auto& variant : report.methods) g.results.push_back(detail::run_method(variant, ctx, mean));
            } else {
                std::vector<ImpactContext> contexts;
                for (const auto& r : group) {
                    contexts.push_back(make_impact_context(model, r.q, r.qd_pre, opt.normal, opt.hint_tangent));
                }
                for (const auto& variant : report.methods) {
                    MethodResult acc;
                    for (std::size_t i = 0; i < group.size(); ++i) {
                        const MethodResult one = detail::run_method(variant, contexts[i], group[i]);
                        if (i == 0) {
                            acc = one;
                        } else {
                            acc.prediction += one.prediction;
                            acc.impulse += one.impulse;
                        }
                    }
                    acc.prediction /= static_cast<double>(group.size());
                    acc.impulse /= static_cast<double>(group.size());
                    acc.cone = friction_cone_check(acc.impulse, mean.mu);
                    g.results.push_back(acc);
                }
            }
            for (auto& r : g.results) {
                r.error = absolute_error(r.prediction, mean.delta_qd_measured);
                r.average = average_error(r.prediction, mean.delta_qd_measured);
            }
        } catch (const PreconditionError& e) {
            g.results.clear();
            g.diagnostic = e.what();
        }
        report.groups.push_back(std::move(g));
    }

    report.pooled_average.assign(report.methods.size(), std::numeric_limits<double>::quiet_NaN());
    std::size_t evaluated = 0;
    std::vector<double> sums(report.methods.size(), 0.0);
    for (const auto& g : report.groups) {
        if (g.diagnostic) continue;
        ++evaluated;
        for (std::size_t i = 0; i < report.methods.size(); ++i) sums[i] += g.results[i].average;
    }
    if (evaluated > 0) {
        for (std::size_t i = 0; i < sums.size(); ++i) report.pooled_average[i] = sums[i] / static_cast<double>(evaluated);
    }

    auto add_reduction = [&](const std::string& method, const std::string& baseline) {
        const auto mi = report.method_index(method), bi = report.method_index(baseline);
        if (!mi || !bi) return;
        Reduction red{method, baseline};
        red.pooled = detail::reduction(report.pooled_average[*mi], report.pooled_average[*bi]);
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& g : report.groups) {
            if (g.diagnostic) continue;
            const double v = detail::reduction(g.results[*mi].average, g.results[*bi].average);
            if (std::isnan(v)) continue;
            sum += v;
            ++count;
        }
        if (count > 0) red.per_config_mean = sum / static_cast<double>(count);
        report.reductions.push_back(red);
    };
    add_reduction("crb", "classical");
    add_reduction("crb@measured", "classical@measured");
    return report;
}

/// One row per configuration, one ā column per method, then the per-config crb-vs-classical
/// reduction; the final `pooled` row holds the pooled means and reduction.
inline std::string report_csv(const ErrorReport& report) {
    std::ostringstream out;
    const auto red_m = report.method_index("crb"), red_b = report.method_index("classical");
    const bool with_red = red_m && red_b;
    out << "config_id,n";
    for (const auto& m : report.methods) out << "," << m.label();
    if (with_red) out << ",reduction_crb_vs_classical_pct";
    out << ",status\n";
    for (const auto& g : report.groups) {
        out << g.config_id << "," << g.aggregate.count;
        for (std::size_t i = 0; i < report.methods.size(); ++i) {
            out << "," << (g.diagnostic ? "" : detail::format6(g.results[i].average));
        }
        if (with_red) {
            out << "," << (g.diagnostic ? "" : detail::format6(detail::reduction(g.results[*red_m].average, g.results[*red_b].average)));
        }
        out << "," << (g.diagnostic ? "skipped" : "ok") << "\n";
    }
    std::size_t total = 0;
    for (const auto& g : report.groups) total += g.aggregate.count;
    out << "pooled," << total;
    for (double v : report.pooled_average) out << "," << detail::format6(v);
    if (with_red) out << "," << detail::format6(report.reductions.front().pooled);
    out << ",summary\n";
    return out.str();
}

namespace detail {

inline nlohmann::ordered_json vec_json(const VecX& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline nlohmann::ordered_json number_json(double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace detail

inline std::string report_json(const ErrorReport& report) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["classical_tangential_mode"] = report.classical_normal_only ? "normal_only" : "full";
    ordered_json methods = ordered_json::array();
    for (const auto& m : report.methods) methods.push_back(m.label());
    j["methods"] = methods;
    ordered_json groups = ordered_json::array();
    for (const auto& g : report.groups) {
        ordered_json gj;
        gj["config_id"] = g.config_id;
        gj["repetitions"] = g.aggregate.count;
        gj["mean"] = {{"q", detail::vec_json(g.aggregate.mean.q)},
                      {"qd_pre", detail::vec_json(g.aggregate.mean.qd_pre)},
                      {"delta_qd_measured", detail::vec_json(g.aggregate.mean.delta_qd_measured)},
                      {"impulse_measured", g.aggregate.mean.impulse_measured ? detail::vec_json(*g.aggregate.mean.impulse_measured)
                                                                             : ordered_json(nullptr)},
                      {"c_r", g.aggregate.mean.c_r},
                      {"mu", g.aggregate.mean.mu}};
        gj["std"] = {{"q", detail::vec_json(g.aggregate.q_std)},
                     {"qd_pre", detail::vec_json(g.aggregate.qd_pre_std)},
                     {"delta_qd_measured", detail::vec_json(g.aggregate.delta_qd_std)}};
        if (g.diagnostic) {
            gj["status"] = "skipped";
            gj["diagnostic"] = *g.diagnostic;
        } else {
            gj["status"] = "ok";
            ordered_json res = ordered_json::object();
            for (const auto& r : g.results) {
                res[r.variant.label()] = {{"prediction", detail::vec_json(r.prediction)},
                                       {"error", detail::vec_json(r.error)},
                                       {"average_error", r.average},
                                       {"impulse", detail::vec_json(r.impulse)},
                                       {"cone_satisfied", r.cone.satisfied},
                                       {"cone_margin", r.cone.margin}};
            }
            gj["results"] = res;
        }
        groups.push_back(gj);
    }
    j["groups"] = groups;
    ordered_json pooled = ordered_json::object();
    for (std::size_t i = 0; i < report.methods.size(); ++i) {
        pooled[report.methods[i].label()] = detail::number_json(report.pooled_average[i]);
    }
    j["pooled_average_error"] = pooled;
    ordered_json reds = ordered_json::array();
    for (const auto& r : report.reductions) {
        reds.push_back({{"method", r.method},
                        {"baseline", r.baseline},
                        {"pooled_pct", detail::number_json(r.pooled)},
                        {"per_config_mean_pct", detail::number_json(r.per_config_mean)}});
    }
    j["reductions"] = reds;
    return j.dump(2) + "\n";
}

/// Single-line summary: pooled ā per method and the crb-vs-classical reductions.
inline std::string report_summary(const ErrorReport& report) {
    std::string s = "pooled average error (rad/s):";
    for (std::size_t i = 0; i < report.methods.size(); ++i) {
        s += " " + report.methods[i].label() + "=" + detail::format6(report.pooled_average[i]);
    }
    for (const auto& r : report.reductions) {
        s += "; reduction " + r.method + " vs " + r.baseline + ": pooled " + detail::format6(r.pooled) + "%, per-config mean " +
             detail::format6(r.per_config_mean) + "%";
    }
    std::size_t skipped = 0;
    for (const auto& g : report.groups) skipped += g.diagnostic ? 1 : 0;
    if (skipped) s += "; skipped groups: " + std::to_string(skipped);
    return s;
}

}  // namespace impactjump
