#pragma once

// Fixed-base serial chain description, JSON loading/serialization and validation.

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "impactjump/spatial.hpp"

namespace impactjump {

struct LinkInertia {
    std::string name;
    double mass = 1.0;
    Vec3 com = Vec3::Zero();            ///< link frame, m
    Mat3 rot_inertia = Mat3::Identity();  ///< about the COM, link frame, kg·m²
};

enum class JointKind { revolute, prismatic };

inline const char* to_string(JointKind k) { return k == JointKind::revolute ? "revolute" : "prismatic"; }

struct JointSpec {
    std::string name;
    JointKind kind = JointKind::revolute;
    int parent = -1;  ///< index of the parent link, −1 for the fixed base
    Vec3 origin_xyz = Vec3::Zero();
    Vec3 origin_rpy = Vec3::Zero();
    Vec3 axis = Vec3::UnitZ();
    std::optional<double> velocity_limit;

    /// Parent-link → joint-frame transform at q = 0.
    Transform origin() const { return Transform::from_xyz_rpy(origin_xyz, origin_rpy); }
};

struct ContactPoint {
    int link = 0;
    Vec3 offset = Vec3::Zero();  ///< in the contact link frame
};

/// Joint PD gains, consumed only by the simulator's `pd` regime.
struct PdGains {
    VecX kp;
    VecX kd;
};

struct ChainModel {
    std::string name;
    Vec3 gravity{0.0, 0.0, -9.81};
    std::vector<LinkInertia> links;
    std::vector<JointSpec> joints;
    ContactPoint contact;
    std::optional<PdGains> pd;

    int dof() const { return static_cast<int>(joints.size()); }

    double total_mass() const {
        double m = 0.0;
        for (const auto& l : links) m += l.mass;
        return m;
    }
};

struct Diagnostic {
    std::string code;  ///< machine-readable, e.g. "mass-non-positive"
    std::string path;  ///< JSON-pointer into the model document
    std::string message;
};

class ModelError : public std::runtime_error {
public:
    explicit ModelError(std::vector<Diagnostic> diagnostics)
        : std::runtime_error(summarize(diagnostics)), diagnostics_(std::move(diagnostics)) {}

    const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

private:
    static std::string summarize(const std::vector<Diagnostic>& d) {
        std::string out = "invalid model";
        for (const auto& x : d) out += "\n  " + x.path + ": [" + x.code + "] " + x.message;
        return out;
    }
    std::vector<Diagnostic> diagnostics_;
};

namespace model_tolerance {
constexpr double symmetry = 1e-12;
constexpr double triangle = 1e-9;
constexpr double axis_renormalize = 1e-6;
}  // namespace model_tolerance

/// Every invariant violation of `m`, empty when the model is usable.
/// Axes off unit length by at most 1e-6 are accepted (load_model re-normalizes them).
inline std::vector<Diagnostic> validate_model(const ChainModel& m) {
    std::vector<Diagnostic> out;
    auto add = [&](std::string code, std::string path, std::string msg) {
        out.push_back({std::move(code), std::move(path), std::move(msg)});
    };

    if (m.links.size() != m.joints.size()) {
        add("topology-count", "/links",
            "expected one link per joint (" + std::to_string(m.joints.size()) + "), found " +
                std::to_string(m.links.size()));
    }
    if (!m.gravity.allFinite()) add("non-finite", "/gravity", "gravity has non-finite entries");

    for (std::size_t i = 0; i < m.links.size(); ++i) {
        const auto& l = m.links[i];
        const std::string path = "/links/" + std::to_string(i);
        const std::string who = l.name.empty() ? ("link " + std::to_string(i)) : ("link '" + l.name + "'");
        if (!std::isfinite(l.mass) || !l.com.allFinite() || !l.rot_inertia.allFinite()) {
            add("non-finite", path, who + " has non-finite inertial parameters");
            continue;
        }
        if (l.mass <= 0.0) add("mass-non-positive", path + "/mass", who + " has mass " + std::to_string(l.mass));
        const double asym = (l.rot_inertia - l.rot_inertia.transpose()).cwiseAbs().maxCoeff();
        if (asym > model_tolerance::symmetry * std::max(1.0, l.rot_inertia.cwiseAbs().maxCoeff())) {
            add("inertia-asymmetric", path + "/inertia", who + " rotational inertia is not symmetric");
            continue;
        }
        const Mat3 sym = 0.5 * (l.rot_inertia + l.rot_inertia.transpose());
        const Vec3 ev = Eigen::SelfAdjointEigenSolver<Mat3>(sym, Eigen::EigenvaluesOnly).eigenvalues();
        if (ev.minCoeff() <= 0.0) {
            add("inertia-not-positive-definite", path + "/inertia",
                who + " rotational inertia has non-positive eigenvalue " + std::to_string(ev.minCoeff()));
            continue;
        }
        // ev sorted ascending: the two smaller moments must bound the largest.
        if (ev(0) + ev(1) < ev(2) - model_tolerance::triangle * std::max(1.0, ev(2))) {
            add("inertia-triangle", path + "/inertia", who + " principal moments violate the triangle inequality");
        }
    }

    for (std::size_t i = 0; i < m.joints.size(); ++i) {
        const auto& j = m.joints[i];
        const std::string path = "/joints/" + std::to_string(i);
        if (j.parent != static_cast<int>(i) - 1) {
            add("topology-parent", path + "/parent",
                "serial chain requires parent " + std::to_string(static_cast<int>(i) - 1) + ", found " +
                    std::to_string(j.parent));
        }
        if (!j.axis.allFinite() || std::abs(j.axis.norm() - 1.0) > model_tolerance::axis_renormalize) {
            add("axis-not-unit", path + "/axis", "joint axis must have unit length");
        }
        if (!j.origin_xyz.allFinite() || !j.origin_rpy.allFinite()) {
            add("non-finite", path + "/origin", "joint origin has non-finite entries");
        }
        if (j.velocity_limit && !(*j.velocity_limit >= 0.0)) {
            add("velocity-limit-negative", path + "/velocity_limit", "velocity limit must be non-negative");
        }
    }

    if (m.contact.link < 0 || m.contact.link >= static_cast<int>(m.links.size())) {
        add("topology-contact-link", "/contact/link",
            "contact link index " + std::to_string(m.contact.link) + " out of range");
    }
    if (!m.contact.offset.allFinite()) add("non-finite", "/contact/offset", "contact offset has non-finite entries");

    if (m.pd) {
        if (m.pd->kp.size() != m.dof() || m.pd->kd.size() != m.dof()) {
            add("pd-dimension", "/pd", "PD gain vectors must have one entry per joint");
        } else if ((m.pd->kp.array() < 0.0).any() || (m.pd->kd.array() < 0.0).any()) {
            add("pd-negative", "/pd", "PD gains must be non-negative");
        }
    }
    return out;
}

/// Re-normalizes near-unit joint axes in place. Axes already unit to within a few
/// ulps are left untouched so that canonicalization is idempotent.
inline void canonicalize(ChainModel& m) {
    for (auto& j : m.joints) {
        const double n = j.axis.norm();
        const double off = std::abs(n - 1.0);
        if (off > 1e-15 && off <= model_tolerance::axis_renormalize) j.axis /= n;
    }
}

namespace detail {

using nlohmann::json;

struct SchemaReader {
    std::vector<Diagnostic>& diags;

    const json* field(const json& obj, const std::string& path, const char* key, bool required = true) {
        if (!obj.is_object()) {
            diags.push_back({"schema", path, "expected an object"});
            return nullptr;
        }
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) diags.push_back({"schema", path + "/" + key, std::string("missing field '") + key + "'"});
            return nullptr;
        }
        return &*it;
    }

    std::optional<double> number(const json* v, const std::string& path) {
        if (!v) return std::nullopt;
        if (!v->is_number()) {
            diags.push_back({"schema", path, "expected a number"});
            return std::nullopt;
        }
        return v->get<double>();
    }

    std::optional<std::string> string(const json* v, const std::string& path) {
        if (!v) return std::nullopt;
        if (!v->is_string()) {
            diags.push_back({"schema", path, "expected a string"});
            return std::nullopt;
        }
        return v->get<std::string>();
    }

    std::optional<VecX> numbers(const json* v, const std::string& path, std::optional<int> size) {
        if (!v) return std::nullopt;
        if (!v->is_array() || (size && static_cast<int>(v->size()) != *size)) {
            diags.push_back({"schema", path,
                             size ? "expected an array of " + std::to_string(*size) + " numbers"
                                  : std::string("expected an array of numbers")});
            return std::nullopt;
        }
        VecX out(static_cast<Eigen::Index>(v->size()));
        for (std::size_t i = 0; i < v->size(); ++i) {
            if (!(*v)[i].is_number()) {
                diags.push_back({"schema", path + "/" + std::to_string(i), "expected a number"});
                return std::nullopt;
            }
            out(static_cast<Eigen::Index>(i)) = (*v)[i].get<double>();
        }
        return out;
    }

    std::optional<Vec3> vec3(const json* v, const std::string& path) {
        auto x = numbers(v, path, 3);
        if (!x) return std::nullopt;
        return Vec3(*x);
    }

    std::optional<Mat3> mat3(const json* v, const std::string& path) {
        if (!v) return std::nullopt;
        if (!v->is_array() || v->size() != 3) {
            diags.push_back({"schema", path, "expected a 3×3 array"});
            return std::nullopt;
        }
        Mat3 out;
        for (int r = 0; r < 3; ++r) {
            auto row = vec3(&(*v)[r], path + "/" + std::to_string(r));
            if (!row) return std::nullopt;
            out.row(r) = row->transpose();
        }
        return out;
    }
};

inline nlohmann::ordered_json to_json_array(const VecX& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

}  // namespace detail

/// Parses and validates a model document; throws ModelError listing every problem.
inline ChainModel load_model(std::string_view document) {
    using detail::json;
    std::vector<Diagnostic> diags;
    json doc;
    try {
        doc = json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        throw ModelError({{"syntax", "", e.what()}});
    }
    detail::SchemaReader rd{diags};
    ChainModel m;
    if (!doc.is_object()) throw ModelError({{"schema", "", "model document must be a JSON object"}});

    if (auto n = rd.string(rd.field(doc, "", "name"), "/name")) m.name = *n;
    if (auto g = rd.vec3(rd.field(doc, "", "gravity", false), "/gravity")) m.gravity = *g;

    if (const json* links = rd.field(doc, "", "links")) {
        if (!links->is_array()) {
            diags.push_back({"schema", "/links", "expected an array"});
        } else {
            for (std::size_t i = 0; i < links->size(); ++i) {
                const json& l = (*links)[i];
                const std::string p = "/links/" + std::to_string(i);
                LinkInertia li;
                if (auto n = rd.string(rd.field(l, p, "name"), p + "/name")) li.name = *n;
                if (auto x = rd.number(rd.field(l, p, "mass"), p + "/mass")) li.mass = *x;
                if (auto x = rd.vec3(rd.field(l, p, "com"), p + "/com")) li.com = *x;
                if (auto x = rd.mat3(rd.field(l, p, "inertia"), p + "/inertia")) li.rot_inertia = *x;
                m.links.push_back(li);
            }
        }
    }

    if (const json* joints = rd.field(doc, "", "joints")) {
        if (!joints->is_array()) {
            diags.push_back({"schema", "/joints", "expected an array"});
        } else {
            for (std::size_t i = 0; i < joints->size(); ++i) {
                const json& j = (*joints)[i];
                const std::string p = "/joints/" + std::to_string(i);
                JointSpec js;
                if (auto n = rd.string(rd.field(j, p, "name"), p + "/name")) js.name = *n;
                if (auto k = rd.string(rd.field(j, p, "kind"), p + "/kind")) {
                    if (*k == "revolute") {
                        js.kind = JointKind::revolute;
                    } else if (*k == "prismatic") {
                        js.kind = JointKind::prismatic;
                    } else {
                        diags.push_back({"schema", p + "/kind", "kind must be 'revolute' or 'prismatic'"});
                    }
                }
                if (const json* par = rd.field(j, p, "parent")) {
                    if (!par->is_number_integer()) {
                        diags.push_back({"schema", p + "/parent", "expected an integer"});
                    } else {
                        js.parent = par->get<int>();
                    }
                }
                if (const json* o = rd.field(j, p, "origin")) {
                    if (auto x = rd.vec3(rd.field(*o, p + "/origin", "xyz"), p + "/origin/xyz")) js.origin_xyz = *x;
                    if (auto x = rd.vec3(rd.field(*o, p + "/origin", "rpy"), p + "/origin/rpy")) js.origin_rpy = *x;
                }
                if (auto x = rd.vec3(rd.field(j, p, "axis"), p + "/axis")) js.axis = *x;
                if (const json* vl = rd.field(j, p, "velocity_limit", false)) {
                    if (auto x = rd.number(vl, p + "/velocity_limit")) js.velocity_limit = *x;
                }
                m.joints.push_back(js);
            }
        }
    }

    if (const json* c = rd.field(doc, "", "contact")) {
        if (const json* l = rd.field(*c, "/contact", "link")) {
            if (!l->is_number_integer()) {
                diags.push_back({"schema", "/contact/link", "expected an integer"});
            } else {
                m.contact.link = l->get<int>();
            }
        }
        if (auto x = rd.vec3(rd.field(*c, "/contact", "offset"), "/contact/offset")) m.contact.offset = *x;
    }

    if (const json* pd = rd.field(doc, "", "pd", false)) {
        auto kp = rd.numbers(rd.field(*pd, "/pd", "kp"), "/pd/kp", std::nullopt);
        auto kd = rd.numbers(rd.field(*pd, "/pd", "kd"), "/pd/kd", std::nullopt);
        if (kp && kd) m.pd = PdGains{*kp, *kd};
    }

    if (!diags.empty()) throw ModelError(std::move(diags));
    canonicalize(m);
    auto physical = validate_model(m);
    if (!physical.empty()) throw ModelError(std::move(physical));
    return m;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline ChainModel load_model_file(const std::string& path) { return load_model(read_text_file(path)); }

/// Canonical JSON text of a model; load_model(serialize_model(m)) reproduces m.
inline std::string serialize_model(const ChainModel& m) {
    using detail::to_json_array;
    nlohmann::ordered_json doc;
    doc["name"] = m.name;
    doc["gravity"] = to_json_array(m.gravity);
    doc["links"] = nlohmann::ordered_json::array();
    for (const auto& l : m.links) {
        nlohmann::ordered_json jl;
        jl["name"] = l.name;
        jl["mass"] = l.mass;
        jl["com"] = to_json_array(l.com);
        jl["inertia"] = nlohmann::ordered_json::array();
        for (int r = 0; r < 3; ++r) jl["inertia"].push_back(to_json_array(l.rot_inertia.row(r).transpose()));
        doc["links"].push_back(jl);
    }
    doc["joints"] = nlohmann::ordered_json::array();
    for (const auto& j : m.joints) {
        nlohmann::ordered_json jj;
        jj["name"] = j.name;
        jj["kind"] = to_string(j.kind);
        jj["parent"] = j.parent;
        jj["origin"]["xyz"] = to_json_array(j.origin_xyz);
        jj["origin"]["rpy"] = to_json_array(j.origin_rpy);
        jj["axis"] = to_json_array(j.axis);
        if (j.velocity_limit) jj["velocity_limit"] = *j.velocity_limit;
        doc["joints"].push_back(jj);
    }
    doc["contact"]["link"] = m.contact.link;
    doc["contact"]["offset"] = to_json_array(m.contact.offset);
    if (m.pd) {
        doc["pd"]["kp"] = to_json_array(m.pd->kp);
        doc["pd"]["kd"] = to_json_array(m.pd->kd);
    }
    return doc.dump(2) + "\n";
}

/// Copy of `m` with every mass and rotational inertia multiplied by s.
inline ChainModel scale_inertia(ChainModel m, double s) {
    for (auto& l : m.links) {
        l.mass *= s;
        l.rot_inertia *= s;
    }
    return m;
}

}  // namespace impactjump
